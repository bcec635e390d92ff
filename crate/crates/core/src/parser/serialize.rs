use std::fmt::Write;

use crate::ir::{AppModel, Block, Method, MethodRole, Operand, QualName, StmtKind, Terminator, Unit, UnitKind};

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// A unit reference: bare identifier when it resolves in `app`, quoted otherwise.
fn name_ref(s: &str) -> String {
    if is_ident(s) {
        s.to_owned()
    } else {
        quote(s)
    }
}

fn unit_name(name: &QualName, app: &str) -> String {
    if name.app == app && is_ident(&name.local) {
        name.local.clone()
    } else {
        quote(&name.to_string())
    }
}

fn operand(o: &Operand) -> String {
    match o {
        Operand::Lit(s) => quote(s),
        Operand::Var(v) => v.clone(),
    }
}

/// Canonical text for a model. The output parses back to an equal model
/// (statement ids are positional, so ids of instrumented models are
/// re-derived on reparse).
pub fn serialize_app(app: &AppModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "app {} {{", quote(&app.app_id));
    for (i, u) in app.units.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        write_unit(&mut out, u, &app.app_id);
    }
    out.push_str("}\n");
    out
}

fn write_unit(out: &mut String, u: &Unit, app: &str) {
    let syn = if u.synthetic { "synthetic " } else { "" };
    let head = match u.kind {
        UnitKind::Component(k) => format!("component {}", k.keyword()),
        UnitKind::Class => "class".to_owned(),
    };
    let _ = writeln!(out, "  {syn}{head} {} {{", unit_name(&u.name, app));
    for f in &u.filters {
        let mut parts = Vec::new();
        parts.extend(f.actions.iter().map(|a| format!("action {}", quote(a))));
        parts.extend(f.categories.iter().map(|a| format!("category {}", quote(a))));
        parts.extend(f.data_types.iter().map(|a| format!("data_type {}", quote(a))));
        let _ = writeln!(out, "    filter {{ {} }}", parts.join("; "));
    }
    for m in &u.methods {
        write_method(out, m);
    }
    out.push_str("  }\n");
}

fn write_method(out: &mut String, m: &Method) {
    let syn = if m.synthetic { "synthetic " } else { "" };
    let kw = match m.role {
        MethodRole::Callback => "callback",
        MethodRole::Lifecycle | MethodRole::Helper => "method",
    };
    let _ = writeln!(out, "    {syn}{kw} {}({}) {{", m.name, m.params.join(", "));
    for (bi, b) in m.blocks.iter().enumerate() {
        write_block(out, m, bi, b);
    }
    out.push_str("    }\n");
}

fn write_block(out: &mut String, m: &Method, bi: usize, b: &Block) {
    let _ = writeln!(out, "    {}:", b.label);
    for s in &b.stmts {
        let text = stmt_text(&s.kind);
        match &s.tag {
            Some(t) => {
                let _ = writeln!(out, "      {text}  # @{t}");
            }
            None => {
                let _ = writeln!(out, "      {text}");
            }
        }
    }
    let label = |i: usize| m.blocks.get(i).map_or("?", |b| b.label.as_str()).to_owned();
    match &b.term {
        Terminator::Fallthrough if bi + 1 < m.blocks.len() => {}
        Terminator::Fallthrough => out.push_str("      return\n"),
        Terminator::Goto(t) => {
            let _ = writeln!(out, "      goto {}", label(*t));
        }
        Terminator::Branch(ts) => {
            let ls: Vec<String> = ts.iter().map(|t| label(*t)).collect();
            let _ = writeln!(out, "      branch {}", ls.join(" "));
        }
        Terminator::Return(None) => out.push_str("      return\n"),
        Terminator::Return(Some(v)) => {
            let _ = writeln!(out, "      return {v}");
        }
    }
}

fn stmt_text(k: &StmtKind) -> String {
    match k {
        StmtKind::Assign { dst, src } => format!("{dst} = {src}"),
        StmtKind::Const { dst, value } => format!("{dst} = {}", quote(value)),
        StmtKind::Source { dst, name } => format!("{dst} = source {name}"),
        StmtKind::Sink { name, var } => format!("sink {name} {var}"),
        StmtKind::NewIntent { dst } => format!("{dst} = new_intent"),
        StmtKind::SetTarget { intent, value } => format!("set_target {intent} {}", operand(value)),
        StmtKind::SetAction { intent, value } => format!("set_action {intent} {}", operand(value)),
        StmtKind::SetCategory { intent, value } => {
            format!("set_category {intent} {}", operand(value))
        }
        StmtKind::SetDataType { intent, value } => {
            format!("set_data_type {intent} {}", operand(value))
        }
        StmtKind::PutExtra { intent, key, value } => {
            format!("put_extra {intent} {} {value}", operand(key))
        }
        StmtKind::GetExtra { dst, intent, key } => {
            format!("{dst} = get_extra {intent} {}", operand(key))
        }
        StmtKind::GetIntent { dst } => format!("{dst} = get_intent"),
        StmtKind::SetResult { intent } => format!("set_result {intent}"),
        StmtKind::Finish => "finish".to_owned(),
        StmtKind::Icc {
            kind,
            intent,
            caller,
        } => match caller {
            Some(c) => format!("icc {} {intent} from {c}", kind.keyword()),
            None => format!("icc {} {intent}", kind.keyword()),
        },
        StmtKind::Call(c) => {
            let mut s = String::new();
            if let Some(d) = &c.dst {
                let _ = write!(s, "{d} = ");
            }
            s.push_str("call ");
            if let Some(r) = &c.receiver {
                let _ = write!(s, "{r}->");
            }
            if let Some(o) = &c.owner {
                let _ = write!(s, "{}.", name_ref(o));
            }
            let _ = write!(s, "{}({})", c.method, c.args.join(", "));
            s
        }
        StmtKind::FieldStore { obj, field, value } => format!("{obj}.{field} = {value}"),
        StmtKind::FieldLoad { dst, obj, field } => format!("{dst} = {obj}.{field}"),
        StmtKind::NewObj { dst, class } => format!("{dst} = new {}", name_ref(class)),
    }
}
