use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::values::{Attr, DataType, IntentValue, Target};
use crate::diag::Diagnostic;
use crate::ir::{AppModel, IccKind, IntentFilter, QualName, StmtId, StmtKind, Unit};

/// A resolved edge from an ICC call statement to a component that may
/// receive its intent.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IccLink {
    pub from: StmtId,
    pub kind: IccKind,
    pub to: QualName,
    /// False when any attribute used to match was unknown.
    pub exact: bool,
    pub cross_app: bool,
}

impl fmt::Display for IccLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}",
            self.from, self.kind, self.to, self.exact, self.cross_app
        )
    }
}

/// Outcome of matching one implicit intent against one filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterMatch {
    No,
    /// Matched using only constant attributes.
    Exact,
    /// Matched because some attribute was unknown.
    Approx,
}

pub fn match_filter(iv: &IntentValue, f: &IntentFilter) -> FilterMatch {
    let mut approx = false;
    match &iv.actions {
        Attr::Top => approx = true,
        Attr::Consts(a) => {
            if !a.iter().any(|x| f.actions.contains(x)) {
                return FilterMatch::No;
            }
        }
    }
    match &iv.categories {
        Attr::Top => approx = true,
        Attr::Consts(c) => {
            if !c.is_subset(&f.categories) {
                return FilterMatch::No;
            }
        }
    }
    match &iv.data_type {
        DataType::Top => approx = true,
        DataType::Absent => {
            if !f.data_types.is_empty() {
                return FilterMatch::No;
            }
        }
        DataType::Consts(d) => {
            if !d.iter().any(|x| f.data_types.contains(x)) {
                return FilterMatch::No;
            }
        }
    }
    if approx {
        FilterMatch::Approx
    } else {
        FilterMatch::Exact
    }
}

fn kind_ok(kind: IccKind, u: &Unit) -> bool {
    kind.target_kind().is_some() && u.component_kind() == kind.target_kind()
}

/// Matches the intent value of every ICC call in `corpus` against the
/// corpus' components. Returns links sorted by (from, to) and diagnostics
/// for explicit targets that do not resolve.
pub fn match_links(
    values: &BTreeMap<StmtId, IntentValue>,
    corpus: &[&AppModel],
) -> (Vec<IccLink>, Vec<Diagnostic>) {
    let mut components: BTreeMap<&QualName, &Unit> = BTreeMap::new();
    for app in corpus {
        for u in app.components() {
            components.insert(&u.name, u);
        }
    }
    let mut links = BTreeSet::new();
    let mut diags = Vec::new();
    for app in corpus {
        for s in app.all_stmts() {
            let StmtKind::Icc { kind, .. } = &s.kind else { continue };
            let kind = *kind;
            if kind.target_kind().is_none() {
                continue;
            }
            let iv = values.get(&s.id).cloned().unwrap_or_else(IntentValue::top);
            let mut push = |to: &QualName, exact: bool| {
                links.insert(IccLink {
                    from: s.id.clone(),
                    kind,
                    to: to.clone(),
                    exact,
                    cross_app: to.app != s.id.unit.app,
                });
            };
            match &iv.target {
                Target::Explicit(targets) => {
                    let exact = targets.len() == 1;
                    for t in targets {
                        match components.get(t) {
                            Some(u) if kind_ok(kind, u) => push(t, exact),
                            Some(u) => diags.push(
                                Diagnostic::warning(
                                    format!(
                                        "{}: explicit target `{}` is a {}, not a valid target of {}",
                                        s.id,
                                        t,
                                        u.component_kind().map_or("class", |k| k.keyword()),
                                        kind
                                    ),
                                    s.pos.line,
                                    s.pos.col,
                                )
                                .with_file(app.source_name.as_deref()),
                            ),
                            None => diags.push(
                                Diagnostic::warning(
                                    format!("{}: unresolved explicit target `{}`", s.id, t),
                                    s.pos.line,
                                    s.pos.col,
                                )
                                .with_file(app.source_name.as_deref()),
                            ),
                        }
                    }
                }
                Target::Top => {
                    for (name, u) in &components {
                        if kind_ok(kind, u) {
                            push(name, false);
                        }
                    }
                }
                Target::Implicit => {
                    for (name, u) in &components {
                        if !kind_ok(kind, u) {
                            continue;
                        }
                        let best = u
                            .filters
                            .iter()
                            .map(|f| match_filter(&iv, f))
                            .fold(FilterMatch::No, |acc, m| match (acc, m) {
                                (FilterMatch::Exact, _) | (_, FilterMatch::Exact) => FilterMatch::Exact,
                                (FilterMatch::Approx, _) | (_, FilterMatch::Approx) => FilterMatch::Approx,
                                _ => FilterMatch::No,
                            });
                        match best {
                            FilterMatch::No => {}
                            FilterMatch::Exact => push(name, true),
                            FilterMatch::Approx => push(name, false),
                        }
                    }
                }
            }
        }
    }
    let mut links: Vec<IccLink> = links.into_iter().collect();
    links.sort_by(|a, b| (&a.from, &a.to).cmp(&(&b.from, &b.to)));
    (links, diags)
}

/// Full resolution for a corpus: intent values for every app, then matching.
pub fn resolve_links(corpus: &[&AppModel]) -> (Vec<IccLink>, Vec<Diagnostic>) {
    let mut values = BTreeMap::new();
    for app in corpus {
        values.extend(super::resolve_intent_values(app));
    }
    match_links(&values, corpus)
}
