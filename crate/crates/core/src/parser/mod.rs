//! Reader and writer for the textual component IR (`.cir`).
//!
//! ```text
//! app "App1" {
//!   component activity Main {
//!     filter { action "android.intent.action.MAIN" }
//!     method onCreate() {
//!       id = source getDeviceId      # @src
//!       i = new_intent
//!       set_target i "App1/Second"
//!       put_extra i "imei" id
//!       icc start_activity i
//!     }
//!   }
//! }
//! ```
//!
//! One statement per line (`;` also separates), `#` starts a comment and an
//! `@name` inside a comment tags the statement on that line.

mod lexer;
mod serialize;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use lexer::{lex, Tok, Token};
pub use serialize::serialize_app;

use crate::diag::{has_errors, Diagnostic};
use crate::ir::{
    assign_positional_ids, validate, AppModel, Block, Call, ComponentKind, IccKind, IntentFilter,
    Method, MethodRole, Operand, Pos, QualName, Stmt, StmtId, StmtKind, Terminator, Unit,
    UnitKind,
};

/// Words that start a statement and therefore cannot name a variable.
pub const RESERVED: &[&str] = &[
    "goto",
    "branch",
    "return",
    "sink",
    "source",
    "set_target",
    "set_action",
    "set_category",
    "set_data_type",
    "put_extra",
    "get_extra",
    "get_intent",
    "set_result",
    "finish",
    "icc",
    "call",
    "new",
    "new_intent",
    "from",
];

pub fn parse_app(text: &str) -> Result<AppModel, Vec<Diagnostic>> {
    parse_app_named(text, None)
}

/// Parses one app; `file` is attached to diagnostics and recorded in the model.
pub fn parse_app_named(text: &str, file: Option<&str>) -> Result<AppModel, Vec<Diagnostic>> {
    let lexed = lex(text);
    let mut p = Parser {
        toks: lexed.tokens,
        at: 0,
        tags: lexed.tags,
        diags: lexed.diags,
    };
    let model = p.file();
    let mut diags = p.diags;
    if let Some(mut model) = model {
        model.source_name = file.map(str::to_owned);
        assign_positional_ids(&mut model);
        diags.extend(validate(&model));
        for d in &mut diags {
            *d = d.clone().with_file(file);
        }
        diags.sort_by_key(|d| (d.line, d.column));
        diags.dedup();
        if has_errors(&diags) {
            Err(diags)
        } else {
            Ok(model)
        }
    } else {
        if !has_errors(&diags) {
            diags.push(Diagnostic::error("no app definition found", 1, 1));
        }
        for d in &mut diags {
            *d = d.clone().with_file(file);
        }
        diags.sort_by_key(|d| (d.line, d.column));
        Err(diags)
    }
}

/// Byte-level entry point: non-UTF-8 input is reported, never panics.
pub fn parse_app_bytes(bytes: &[u8], file: Option<&str>) -> Result<AppModel, Vec<Diagnostic>> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_app_named(text, file),
        Err(e) => {
            let prefix = &bytes[..e.valid_up_to()];
            let line = 1 + prefix.iter().filter(|b| **b == b'\n').count() as u32;
            Err(vec![Diagnostic::error("input is not valid UTF-8", line, 1).with_file(file)])
        }
    }
}

pub fn parse_file(path: &Path) -> Result<AppModel, Vec<Diagnostic>> {
    let name = path.display().to_string();
    match std::fs::read(path) {
        Ok(bytes) => parse_app_bytes(&bytes, Some(&name)),
        Err(e) => Err(vec![Diagnostic::error(format!("cannot read file: {e}"), 0, 0)
            .with_file(Some(&name))]),
    }
}

/// Reads every `.cir` file below `dir` (sorted by path). Returns the models
/// that parsed and the diagnostics of those that did not.
pub fn parse_corpus(dir: &Path) -> (Vec<AppModel>, Vec<Diagnostic>) {
    let mut files = Vec::new();
    collect_cir(dir, &mut files);
    files.sort();
    let mut apps = Vec::new();
    let mut diags = Vec::new();
    for f in files {
        match parse_file(&f) {
            Ok(m) => apps.push(m),
            Err(d) => diags.extend(d),
        }
    }
    (apps, diags)
}

pub fn collect_cir(path: &Path, out: &mut Vec<std::path::PathBuf>) {
    if path.is_file() {
        if path.extension().is_some_and(|e| e == "cir") {
            out.push(path.to_path_buf());
        }
        return;
    }
    if let Ok(rd) = std::fs::read_dir(path) {
        for entry in rd.flatten() {
            collect_cir(&entry.path(), out);
        }
    }
}

struct Parser {
    toks: Vec<Token>,
    at: usize,
    tags: HashMap<u32, String>,
    diags: Vec<Diagnostic>,
}

/// Raised to unwind out of a construct after a syntax error was recorded.
struct Bail;

type PResult<T> = Result<T, Bail>;

struct PendingBlock {
    label: String,
    stmts: Vec<Stmt>,
    term: Option<(Terminator, Vec<(String, Pos)>)>,
    pos: Pos,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at.min(self.toks.len() - 1)].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.at + n).min(self.toks.len() - 1)].tok
    }

    fn pos(&self) -> Pos {
        let t = &self.toks[self.at.min(self.toks.len() - 1)];
        Pos::new(t.line, t.col)
    }

    fn bump(&mut self) -> Tok {
        let t = self.peek().clone();
        if self.at < self.toks.len() - 1 {
            self.at += 1;
        }
        t
    }

    fn error_here(&mut self, msg: impl Into<String>) -> Bail {
        let p = self.pos();
        self.diags.push(Diagnostic::error(msg, p.line, p.col));
        Bail
    }

    fn unexpected(&mut self, expected: &str) -> Bail {
        let found = self.peek().describe();
        self.error_here(format!("expected {expected}, found {found}"))
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn var(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if RESERVED.contains(&s.as_str()) => {
                Err(self.error_here(format!("`{s}` is a keyword, not a variable")))
            }
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected("variable")),
        }
    }

    fn string(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn operand(&mut self) -> PResult<Operand> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(Operand::Lit(s))
            }
            Tok::Ident(_) => Ok(Operand::Var(self.var()?)),
            _ => Err(self.unexpected("literal or variable")),
        }
    }

    fn skip_seps(&mut self) {
        while matches!(self.peek(), Tok::Newline | Tok::Semi) {
            self.bump();
        }
    }

    /// Skips to the end of the current line (or a closing brace).
    fn recover_line(&mut self) {
        loop {
            match self.peek() {
                Tok::Newline | Tok::Semi => {
                    self.bump();
                    return;
                }
                Tok::RBrace | Tok::Eof => return,
                _ => {
                    self.bump();
                }
            }
        }
    }

    /// Skips a balanced `{ ... }` region whose opening brace was consumed.
    fn skip_braced(&mut self) {
        let mut depth = 1usize;
        loop {
            match self.bump() {
                Tok::LBrace => depth += 1,
                Tok::RBrace => {
                    depth -= 1;
                    if depth == 0 {
                        return;
                    }
                }
                Tok::Eof => return,
                _ => {}
            }
        }
    }

    fn end_of_stmt(&mut self) -> PResult<()> {
        match self.peek() {
            Tok::Newline | Tok::Semi => {
                self.bump();
                Ok(())
            }
            Tok::RBrace | Tok::Eof => Ok(()),
            _ => Err(self.unexpected("end of statement")),
        }
    }

    fn file(&mut self) -> Option<AppModel> {
        self.skip_seps();
        if !self.eat_kw("app") {
            self.unexpected("`app`");
            return None;
        }
        let app_id = match self.string("app name string") {
            Ok(s) => s,
            Err(_) => return None,
        };
        if self.expect(Tok::LBrace, "`{`").is_err() {
            return None;
        }
        let mut model = AppModel::new(app_id);
        loop {
            self.skip_seps();
            match self.peek() {
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                Tok::Eof => {
                    self.error_here("unexpected end of input: missing `}` closing the app");
                    break;
                }
                _ => {}
            }
            let before = self.at;
            match self.unit(&model.app_id) {
                Ok(u) => model.units.push(u),
                Err(Bail) => {
                    if self.at == before {
                        self.bump();
                    }
                    self.recover_unit();
                }
            }
        }
        self.skip_seps();
        if *self.peek() != Tok::Eof {
            self.unexpected("end of input");
        }
        Some(model)
    }

    /// After a failed unit header, skip to the next `component`/`class` token
    /// at line start or to the closing brace of the app.
    fn recover_unit(&mut self) {
        let mut depth = 0usize;
        loop {
            match self.peek() {
                Tok::Eof => return,
                Tok::LBrace => depth += 1,
                Tok::RBrace => {
                    if depth == 0 {
                        return;
                    }
                    depth -= 1;
                    if depth == 0 {
                        self.bump();
                        return;
                    }
                }
                _ => {}
            }
            self.bump();
        }
    }

    fn unit_name(&mut self, app: &str) -> PResult<QualName> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(QualName::new(app, s))
            }
            Tok::Str(s) => {
                if s.split_once('/').is_some_and(|(a, l)| !a.is_empty() && !l.is_empty()) {
                    self.bump();
                    Ok(QualName::qualify(&s, app))
                } else {
                    Err(self.error_here(format!("qualified name \"{s}\" must look like \"app/name\"")))
                }
            }
            _ => Err(self.unexpected("name")),
        }
    }

    fn unit(&mut self, app: &str) -> PResult<Unit> {
        let pos = self.pos();
        let synthetic = self.eat_kw("synthetic");
        let kind = if self.eat_kw("component") {
            let kw = self.ident("component kind")?;
            match ComponentKind::from_keyword(&kw) {
                Some(k) => UnitKind::Component(k),
                None => {
                    return Err(self.error_here(format!(
                        "unknown component kind `{kw}` (expected activity, service, receiver or provider)"
                    )))
                }
            }
        } else if self.eat_kw("class") {
            UnitKind::Class
        } else {
            return Err(self.unexpected("`component` or `class`"));
        };
        let name = self.unit_name(app)?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut unit = Unit {
            name,
            kind,
            filters: Vec::new(),
            methods: Vec::new(),
            synthetic,
            pos,
        };
        loop {
            self.skip_seps();
            match self.peek() {
                Tok::RBrace => {
                    self.bump();
                    return Ok(unit);
                }
                Tok::Eof => return Err(self.error_here("unexpected end of input inside unit")),
                _ => {}
            }
            if self.is_kw("filter") {
                match self.filter() {
                    Ok(f) => unit.filters.push(f),
                    Err(Bail) => self.recover_line(),
                }
                continue;
            }
            match self.method(kind) {
                Ok(m) => unit.methods.push(m),
                Err(Bail) => {
                    // Skip the rest of the member; a method body is brace-balanced.
                    loop {
                        match self.peek() {
                            Tok::LBrace => {
                                self.bump();
                                self.skip_braced();
                                break;
                            }
                            Tok::Newline | Tok::Semi => {
                                self.bump();
                                break;
                            }
                            Tok::RBrace | Tok::Eof => break,
                            _ => {
                                self.bump();
                            }
                        }
                    }
                }
            }
        }
    }

    fn filter(&mut self) -> PResult<IntentFilter> {
        let pos = self.pos();
        self.bump();
        self.expect(Tok::LBrace, "`{`")?;
        let mut f = IntentFilter {
            pos,
            ..IntentFilter::default()
        };
        loop {
            self.skip_seps();
            match self.peek().clone() {
                Tok::RBrace => {
                    self.bump();
                    return Ok(f);
                }
                Tok::Ident(kw) if kw == "action" || kw == "category" || kw == "data_type" => {
                    self.bump();
                    let s = self.string("string literal")?;
                    match kw.as_str() {
                        "action" => f.actions.insert(s),
                        "category" => f.categories.insert(s),
                        _ => f.data_types.insert(s),
                    };
                }
                _ => return Err(self.unexpected("`action`, `category`, `data_type` or `}`")),
            }
        }
    }

    fn method(&mut self, kind: UnitKind) -> PResult<Method> {
        let pos = self.pos();
        let synthetic = self.eat_kw("synthetic");
        let is_callback = if self.eat_kw("callback") {
            true
        } else if self.eat_kw("method") {
            false
        } else {
            return Err(self.unexpected("`method`, `callback` or `filter`"));
        };
        let name = self.ident("method name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                params.push(self.var()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        self.expect(Tok::LBrace, "`{`")?;
        let blocks = self.body()?;
        let role = if is_callback {
            MethodRole::Callback
        } else {
            match kind {
                UnitKind::Component(k) if k.is_lifecycle_slot(&name) => MethodRole::Lifecycle,
                _ => MethodRole::Helper,
            }
        };
        Ok(Method {
            name,
            role,
            params,
            blocks,
            entry: 0,
            synthetic,
            pos,
        })
    }

    /// Parses statements up to and including the closing brace of a method.
    fn body(&mut self) -> PResult<Vec<Block>> {
        let mut blocks: Vec<PendingBlock> = Vec::new();
        let mut cur = PendingBlock {
            label: "entry".into(),
            stmts: Vec::new(),
            term: None,
            pos: self.pos(),
        };
        let mut open = true;
        let mut auto = 0usize;
        loop {
            self.skip_seps();
            match self.peek().clone() {
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                Tok::Eof => return Err(self.error_here("unexpected end of input inside method")),
                Tok::Ident(label) if *self.peek_at(1) == Tok::Colon => {
                    let pos = self.pos();
                    self.bump();
                    self.bump();
                    if blocks.is_empty() && cur.stmts.is_empty() && cur.term.is_none() {
                        // A label before the first statement names the entry block.
                        cur.label = label;
                        cur.pos = pos;
                    } else {
                        let prev = std::mem::replace(
                            &mut cur,
                            PendingBlock {
                                label,
                                stmts: Vec::new(),
                                term: None,
                                pos,
                            },
                        );
                        blocks.push(prev);
                    }
                    open = true;
                    continue;
                }
                _ => {}
            }
            if !open {
                auto += 1;
                let prev = std::mem::replace(
                    &mut cur,
                    PendingBlock {
                        label: format!("_b{}", blocks.len() + auto),
                        stmts: Vec::new(),
                        term: None,
                        pos: self.pos(),
                    },
                );
                blocks.push(prev);
                open = true;
            }
            let pos = self.pos();
            if self.is_kw("goto") || self.is_kw("branch") || self.is_kw("return") {
                match self.terminator() {
                    Ok(t) => {
                        cur.term = Some(t);
                        open = false;
                    }
                    Err(Bail) => self.recover_line(),
                }
                continue;
            }
            match self.stmt() {
                Ok(kind) => {
                    let tag = self.tags.get(&pos.line).cloned();
                    cur.stmts.push(Stmt {
                        id: placeholder_id(),
                        kind,
                        tag,
                        pos,
                    });
                    if self.end_of_stmt().is_err() {
                        self.recover_line();
                    }
                }
                Err(Bail) => self.recover_line(),
            }
        }
        blocks.push(cur);

        // Resolve labels.
        let index: HashMap<String, usize> = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (b.label.clone(), i))
            .collect();
        let n = blocks.len();
        let mut out = Vec::with_capacity(n);
        for (i, b) in blocks.into_iter().enumerate() {
            let term = match b.term {
                None if i + 1 < n => Terminator::Fallthrough,
                None => Terminator::Return(None),
                Some((t, targets)) => {
                    let mut resolved = Vec::new();
                    for (label, pos) in &targets {
                        match index.get(label) {
                            Some(&t) => resolved.push(t),
                            None => {
                                self.diags.push(Diagnostic::error(
                                    format!("unknown label `{label}`"),
                                    pos.line,
                                    pos.col,
                                ));
                                resolved.push(usize::MAX);
                            }
                        }
                    }
                    match t {
                        Terminator::Goto(_) => Terminator::Goto(resolved[0]),
                        Terminator::Branch(_) => Terminator::Branch(resolved),
                        other => other,
                    }
                }
            };
            out.push(Block {
                label: b.label,
                stmts: b.stmts,
                term,
                pos: b.pos,
            });
        }
        Ok(out)
    }

    fn terminator(&mut self) -> PResult<(Terminator, Vec<(String, Pos)>)> {
        let kw = self.ident("terminator")?;
        let r = match kw.as_str() {
            "goto" => {
                let pos = self.pos();
                let l = self.ident("label")?;
                (Terminator::Goto(0), vec![(l, pos)])
            }
            "branch" => {
                let mut labels = Vec::new();
                while let Tok::Ident(_) = self.peek() {
                    let pos = self.pos();
                    labels.push((self.ident("label")?, pos));
                }
                if labels.len() < 2 {
                    return Err(self.error_here("`branch` needs at least two labels"));
                }
                (Terminator::Branch(vec![]), labels)
            }
            _ => {
                let v = match self.peek() {
                    Tok::Ident(_) => Some(self.var()?),
                    _ => None,
                };
                (Terminator::Return(v), vec![])
            }
        };
        self.end_of_stmt()?;
        Ok(r)
    }

    fn call_tail(&mut self, dst: Option<String>) -> PResult<StmtKind> {
        let receiver = if matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Arrow {
            let r = self.var()?;
            self.bump();
            Some(r)
        } else {
            None
        };
        let owner = match (self.peek().clone(), self.peek_at(1).clone()) {
            (Tok::Ident(o), Tok::Dot) => {
                self.bump();
                self.bump();
                Some(o)
            }
            (Tok::Str(o), Tok::Dot) => {
                self.bump();
                self.bump();
                Some(o)
            }
            _ => None,
        };
        let method = self.ident("method name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                args.push(self.var()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        Ok(StmtKind::Call(Call {
            dst,
            receiver,
            owner,
            method,
            args,
        }))
    }

    fn stmt(&mut self) -> PResult<StmtKind> {
        let head = match self.peek().clone() {
            Tok::Ident(s) => s,
            _ => return Err(self.unexpected("statement")),
        };
        match head.as_str() {
            "sink" => {
                self.bump();
                let name = self.ident("sink name")?;
                let var = self.var()?;
                Ok(StmtKind::Sink { name, var })
            }
            "set_target" | "set_action" | "set_category" | "set_data_type" => {
                self.bump();
                let intent = self.var()?;
                let value = self.operand()?;
                Ok(match head.as_str() {
                    "set_target" => StmtKind::SetTarget { intent, value },
                    "set_action" => StmtKind::SetAction { intent, value },
                    "set_category" => StmtKind::SetCategory { intent, value },
                    _ => StmtKind::SetDataType { intent, value },
                })
            }
            "put_extra" => {
                self.bump();
                let intent = self.var()?;
                let key = self.operand()?;
                let value = self.var()?;
                Ok(StmtKind::PutExtra { intent, key, value })
            }
            "set_result" => {
                self.bump();
                Ok(StmtKind::SetResult {
                    intent: self.var()?,
                })
            }
            "finish" => {
                self.bump();
                Ok(StmtKind::Finish)
            }
            "icc" => {
                self.bump();
                let kw = self.ident("ICC method")?;
                let kind = IccKind::from_keyword(&kw)
                    .ok_or_else(|| self.error_here(format!("unknown ICC method `{kw}`")))?;
                let intent = self.var()?;
                let caller = if self.eat_kw("from") {
                    Some(self.var()?)
                } else {
                    None
                };
                Ok(StmtKind::Icc {
                    kind,
                    intent,
                    caller,
                })
            }
            "call" => {
                self.bump();
                self.call_tail(None)
            }
            _ if RESERVED.contains(&head.as_str()) => {
                Err(self.error_here(format!("`{head}` cannot start a statement here")))
            }
            _ => {
                // `x = ...` or `o.f = v`
                let first = self.var()?;
                if *self.peek() == Tok::Dot {
                    self.bump();
                    let field = self.ident("field name")?;
                    self.expect(Tok::Eq, "`=`")?;
                    let value = self.var()?;
                    return Ok(StmtKind::FieldStore {
                        obj: first,
                        field,
                        value,
                    });
                }
                if *self.peek() != Tok::Eq {
                    return Err(self.error_here(format!("unknown statement `{first}`")));
                }
                self.bump();
                self.rhs(first)
            }
        }
    }

    fn rhs(&mut self, dst: String) -> PResult<StmtKind> {
        match self.peek().clone() {
            Tok::Str(value) => {
                self.bump();
                Ok(StmtKind::Const { dst, value })
            }
            Tok::Ident(kw) => match kw.as_str() {
                "source" => {
                    self.bump();
                    let name = self.ident("source name")?;
                    Ok(StmtKind::Source { dst, name })
                }
                "new_intent" => {
                    self.bump();
                    Ok(StmtKind::NewIntent { dst })
                }
                "get_intent" => {
                    self.bump();
                    Ok(StmtKind::GetIntent { dst })
                }
                "get_extra" => {
                    self.bump();
                    let intent = self.var()?;
                    let key = self.operand()?;
                    Ok(StmtKind::GetExtra { dst, intent, key })
                }
                "call" => {
                    self.bump();
                    self.call_tail(Some(dst))
                }
                "new" => {
                    self.bump();
                    let class = match self.peek().clone() {
                        Tok::Ident(s) | Tok::Str(s) => {
                            self.bump();
                            s
                        }
                        _ => return Err(self.unexpected("class name")),
                    };
                    Ok(StmtKind::NewObj { dst, class })
                }
                _ if RESERVED.contains(&kw.as_str()) => {
                    Err(self.error_here(format!("`{kw}` cannot appear on the right of `=`")))
                }
                _ => {
                    let src = self.var()?;
                    if *self.peek() == Tok::Dot {
                        self.bump();
                        let field = self.ident("field name")?;
                        Ok(StmtKind::FieldLoad {
                            dst,
                            obj: src,
                            field,
                        })
                    } else {
                        Ok(StmtKind::Assign { dst, src })
                    }
                }
            },
            _ => Err(self.unexpected("expression")),
        }
    }
}

fn placeholder_id() -> StmtId {
    StmtId {
        unit: QualName::new("", ""),
        method: String::new(),
        synthetic: false,
        block: 0,
        index: 0,
    }
}

/// Sorted set of tags used in a model.
pub fn tags(model: &AppModel) -> BTreeSet<String> {
    model.all_stmts().filter_map(|s| s.tag.clone()).collect()
}
