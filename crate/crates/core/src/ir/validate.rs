use std::collections::{BTreeSet, HashMap, HashSet};

use super::{AppModel, CallResolution, Method, MethodRole, Pos, StmtKind, Terminator, Unit, UnitKind};
use crate::diag::Diagnostic;

fn err(msg: String, pos: Pos) -> Diagnostic {
    Diagnostic::error(msg, pos.line, pos.col)
}

fn warn(msg: String, pos: Pos) -> Diagnostic {
    Diagnostic::warning(msg, pos.line, pos.col)
}

pub fn valid_app_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| !c.is_whitespace() && !matches!(c, '/' | ':' | '#' | '~' | '"' | '\\'))
}

/// Checks every structural invariant of the IR. Returns all violations; an
/// empty list means the model is analyzable.
pub fn validate(app: &AppModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if !valid_app_id(&app.app_id) {
        out.push(Diagnostic::error(
            format!("invalid app id `{}`", app.app_id),
            0,
            0,
        ));
    }

    let mut seen_units: HashMap<String, Pos> = HashMap::new();
    for unit in &app.units {
        let name = unit.name.to_string();
        if let Some(first) = seen_units.get(&name) {
            out.push(err(
                format!(
                    "duplicate component `{}`: defined at line {} and line {}",
                    name, first.line, unit.pos.line
                ),
                unit.pos,
            ));
        } else {
            seen_units.insert(name, unit.pos);
        }
        validate_unit(app, unit, &mut out);
    }

    let mut ids = HashSet::new();
    let mut tags: HashMap<&str, Pos> = HashMap::new();
    for s in app.all_stmts() {
        if !ids.insert(&s.id) {
            out.push(err(format!("duplicate statement id {}", s.id), s.pos));
        }
        if let Some(tag) = &s.tag {
            if let Some(first) = tags.get(tag.as_str()) {
                out.push(warn(
                    format!("tag @{} used twice (line {} and line {})", tag, first.line, s.pos.line),
                    s.pos,
                ));
            } else {
                tags.insert(tag, s.pos);
            }
        }
    }

    for d in &mut out {
        if d.file.is_none() {
            d.file = app.source_name.clone();
        }
    }
    out
}

fn validate_unit(app: &AppModel, unit: &Unit, out: &mut Vec<Diagnostic>) {
    for f in &unit.filters {
        if f.actions.is_empty() {
            out.push(err(
                format!("filter in `{}` declares no action", unit.name),
                f.pos,
            ));
        }
    }
    if unit.kind == UnitKind::Class && !unit.filters.is_empty() {
        out.push(err(format!("class `{}` cannot declare filters", unit.name), unit.pos));
    }
    let mut names = HashSet::new();
    for m in &unit.methods {
        if !names.insert(m.name.as_str()) {
            out.push(err(
                format!("duplicate method `{}` in `{}`", m.name, unit.name),
                m.pos,
            ));
        }
        if m.role == MethodRole::Lifecycle {
            match unit.component_kind() {
                Some(k) if k.is_lifecycle_slot(&m.name) => {}
                Some(k) => out.push(err(
                    format!("`{}` is not a lifecycle slot of a {} component", m.name, k),
                    m.pos,
                )),
                None => out.push(err(
                    format!("class `{}` cannot have lifecycle method `{}`", unit.name, m.name),
                    m.pos,
                )),
            }
        }
        if m.role == MethodRole::Callback && !unit.is_component() {
            out.push(err(
                format!("class `{}` cannot register callback `{}`", unit.name, m.name),
                m.pos,
            ));
        }
        if unit.component_kind() == Some(super::ComponentKind::Provider) && m.name == "dummyMain" {
            out.push(err(
                format!("provider `{}` cannot have an entry driver", unit.name),
                m.pos,
            ));
        }
        validate_method(app, unit, m, out);
    }
}

fn validate_method(app: &AppModel, unit: &Unit, m: &Method, out: &mut Vec<Diagnostic>) {
    if m.blocks.is_empty() {
        out.push(err(format!("method `{}` has no blocks", m.name), m.pos));
        return;
    }
    if m.entry >= m.blocks.len() {
        out.push(err(format!("method `{}` has no valid entry block", m.name), m.pos));
    }
    let n = m.blocks.len();
    let mut labels = HashSet::new();
    for (bi, b) in m.blocks.iter().enumerate() {
        if !labels.insert(b.label.as_str()) {
            out.push(err(format!("duplicate label `{}`", b.label), b.pos));
        }
        match &b.term {
            Terminator::Fallthrough if bi + 1 >= n => out.push(err(
                format!("block `{}` falls through past the end of `{}`", b.label, m.name),
                b.pos,
            )),
            Terminator::Goto(t) if *t >= n => {
                out.push(err(format!("branch target {} does not exist", t), b.pos))
            }
            Terminator::Branch(ts) => {
                if ts.len() < 2 {
                    out.push(err("branch needs at least two targets".to_owned(), b.pos));
                }
                for t in ts {
                    if *t >= n {
                        out.push(err(format!("branch target {} does not exist", t), b.pos));
                    }
                }
            }
            _ => {}
        }
    }

    let mut params = BTreeSet::new();
    for p in &m.params {
        if p == "this" || !params.insert(p.as_str()) {
            out.push(err(format!("invalid or duplicate parameter `{}`", p), m.pos));
        }
    }

    let mut declared: HashSet<&str> = params.iter().copied().collect();
    declared.insert("this");
    for s in m.stmts() {
        if let Some(d) = s.kind.def() {
            declared.insert(d);
        }
    }

    let unit_index = app.units.iter().position(|u| std::ptr::eq(u, unit));
    for b in &m.blocks {
        if let Terminator::Return(Some(v)) = &b.term {
            if !declared.contains(v.as_str()) {
                out.push(err(format!("use of undeclared variable `{}`", v), b.pos));
            }
        }
        for s in &b.stmts {
            for u in s.kind.uses() {
                if !declared.contains(u) {
                    out.push(err(format!("use of undeclared variable `{}`", u), s.pos));
                }
            }
            if let Some(d) = s.kind.def() {
                if d == "this" || params.contains(d) {
                    out.push(err(format!("parameter `{}` is reassigned", d), s.pos));
                }
            }
            match &s.kind {
                StmtKind::GetIntent { .. } | StmtKind::SetResult { .. } | StmtKind::Finish
                    if !unit.is_component() =>
                {
                    out.push(err(
                        format!(
                            "`{}` is only legal inside component methods",
                            stmt_keyword(&s.kind)
                        ),
                        s.pos,
                    ))
                }
                StmtKind::Call(c) => {
                    if let Some(ui) = unit_index {
                        match app.resolve_call(ui, c) {
                            CallResolution::Static(r) => {
                                let callee = app.method(r);
                                if callee.params.len() != c.args.len() {
                                    out.push(err(
                                        format!(
                                            "call to `{}` passes {} argument(s), expected {}",
                                            c.method,
                                            c.args.len(),
                                            callee.params.len()
                                        ),
                                        s.pos,
                                    ));
                                }
                            }
                            CallResolution::Bound { .. } => {}
                            CallResolution::Unknown => out.push(warn(
                                format!("call to unknown method `{}`", call_display(c)),
                                s.pos,
                            )),
                        }
                    }
                }
                _ => {}
            }
        }
    }
}

fn call_display(c: &super::Call) -> String {
    match &c.owner {
        Some(o) => format!("{}.{}", o, c.method),
        None => c.method.clone(),
    }
}

fn stmt_keyword(k: &StmtKind) -> &'static str {
    match k {
        StmtKind::GetIntent { .. } => "get_intent",
        StmtKind::SetResult { .. } => "set_result",
        StmtKind::Finish => "finish",
        _ => "statement",
    }
}
