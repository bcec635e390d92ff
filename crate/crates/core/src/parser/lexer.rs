use std::collections::HashMap;

use crate::diag::Diagnostic;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Dot,
    Colon,
    Semi,
    Arrow,
    Eq,
    Newline,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

pub struct Lexed {
    pub tokens: Vec<Token>,
    /// `@tag` annotations found in comments, by line.
    pub tags: HashMap<u32, String>,
    pub diags: Vec<Diagnostic>,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

pub fn lex(text: &str) -> Lexed {
    let mut tokens = Vec::new();
    let mut tags = HashMap::new();
    let mut diags = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        let (tl, tc) = (line, col);
        let push = |tokens: &mut Vec<Token>, tok| tokens.push(Token { tok, line: tl, col: tc });
        match c {
            '\n' => {
                bump!();
                push(&mut tokens, Tok::Newline);
            }
            c if c.is_whitespace() => {
                bump!();
            }
            '#' => {
                let mut comment = String::new();
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    comment.push(c);
                    bump!();
                }
                if let Some(at) = comment.find('@') {
                    let tag: String = comment[at + 1..].chars().take_while(|c| is_ident_char(*c)).collect();
                    if !tag.is_empty() {
                        tags.insert(tl, tag);
                    }
                }
            }
            '"' => {
                bump!();
                let mut s = String::new();
                let mut closed = false;
                while let Some(&c) = chars.peek() {
                    match c {
                        '"' => {
                            bump!();
                            closed = true;
                            break;
                        }
                        '\\' => {
                            bump!();
                            match bump!() {
                                Some('"') => s.push('"'),
                                Some('\\') => s.push('\\'),
                                Some('n') => s.push('\n'),
                                Some(other) => {
                                    s.push('\\');
                                    s.push(other);
                                }
                                None => break,
                            }
                        }
                        '\n' => break,
                        _ => {
                            s.push(c);
                            bump!();
                        }
                    }
                }
                if !closed {
                    diags.push(Diagnostic::error("unterminated string literal", tl, tc));
                }
                push(&mut tokens, Tok::Str(s));
            }
            '-' => {
                bump!();
                if chars.peek() == Some(&'>') {
                    bump!();
                    push(&mut tokens, Tok::Arrow);
                } else {
                    diags.push(Diagnostic::error("unexpected character `-`", tl, tc));
                }
            }
            c if is_ident_start(c) => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if !is_ident_char(c) {
                        break;
                    }
                    s.push(c);
                    bump!();
                }
                push(&mut tokens, Tok::Ident(s));
            }
            _ => {
                bump!();
                let tok = match c {
                    '{' => Some(Tok::LBrace),
                    '}' => Some(Tok::RBrace),
                    '(' => Some(Tok::LParen),
                    ')' => Some(Tok::RParen),
                    ',' => Some(Tok::Comma),
                    '.' => Some(Tok::Dot),
                    ':' => Some(Tok::Colon),
                    ';' => Some(Tok::Semi),
                    '=' => Some(Tok::Eq),
                    _ => None,
                };
                match tok {
                    Some(t) => push(&mut tokens, t),
                    None => diags.push(Diagnostic::error(
                        format!("unexpected character `{}`", c.escape_debug()),
                        tl,
                        tc,
                    )),
                }
            }
        }
    }
    tokens.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Lexed {
        tokens,
        tags,
        diags,
    }
}
