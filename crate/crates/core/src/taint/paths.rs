use std::collections::BTreeSet;
use std::fmt;

use super::cfg::NodeKind;
use super::solver::{EdgeKey, Fact, Pred, Propagation};
use crate::instrument::HELPER_CLASS;
use crate::ir::{AppModel, StmtId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PathClass {
    /// Source and sink in one component, no ICC hop.
    Intra,
    /// Crosses components of one app.
    Icc,
    /// Crosses apps.
    Iac,
}

impl PathClass {
    pub fn keyword(self) -> &'static str {
        match self {
            PathClass::Intra => "intra",
            PathClass::Icc => "icc",
            PathClass::Iac => "iac",
        }
    }
}

impl fmt::Display for PathClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Witness of a leak: the statements from source to sink, synthetic glue
/// included.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct TaintedPath {
    pub source: StmtId,
    pub sink: StmtId,
    pub stmts: Vec<StmtId>,
    pub class: PathClass,
}

impl TaintedPath {
    /// Origin apps of the non-synthetic statements, sorted.
    pub fn apps(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .stmts
            .iter()
            .filter(|s| !s.synthetic)
            .map(|s| s.unit.app.as_str())
            .collect();
        set.into_iter().map(str::to_owned).collect()
    }
}

pub fn classify_path(model: &AppModel, stmts: &[StmtId]) -> PathClass {
    let real: Vec<&StmtId> = stmts.iter().filter(|s| !s.synthetic).collect();
    let apps: BTreeSet<&str> = real.iter().map(|s| s.unit.app.as_str()).collect();
    if apps.len() >= 2 {
        return PathClass::Iac;
    }
    let through_helper = stmts.iter().any(|s| s.synthetic && s.unit.local == HELPER_CLASS);
    let components: BTreeSet<_> = real
        .iter()
        .filter(|s| model.unit(&s.unit).is_some_and(|u| u.is_component()))
        .map(|s| &s.unit)
        .collect();
    if through_helper || components.len() >= 2 {
        PathClass::Icc
    } else {
        PathClass::Intra
    }
}

/// Rebuilds the first-found witness of every (source, sink) pair.
pub fn extract_paths(p: &Propagation<'_, '_>) -> Vec<TaintedPath> {
    let mut out: Vec<TaintedPath> = p
        .first_hit
        .iter()
        .map(|((source, sink), &e)| {
            let stmts = walk_back(p, e);
            assert_eq!(
                stmts.first(),
                Some(source),
                "witness for {source} -> {sink} does not start at its source"
            );
            TaintedPath {
                source: source.clone(),
                sink: sink.clone(),
                class: classify_path(p.cfg.model, &stmts),
                stmts,
            }
        })
        .collect();
    out.sort();
    out
}

fn walk_back(p: &Propagation<'_, '_>, hit: EdgeKey) -> Vec<StmtId> {
    let cfg = p.cfg;
    let mut rev: Vec<StmtId> = Vec::new();
    let push = |n: usize, rev: &mut Vec<StmtId>| {
        if let NodeKind::Stmt { .. } = cfg.nodes[n].kind {
            let id = cfg.stmt_id(n).expect("statement node").clone();
            if rev.last() != Some(&id) {
                rev.push(id);
            }
        }
    };
    push(hit.1, &mut rev);
    let mut stack: Vec<EdgeKey> = Vec::new();
    let mut cur = hit;
    let limit = 4 * p.path_edge_count() + 16;
    let mut steps = 0;
    loop {
        steps += 1;
        assert!(steps <= limit, "predecessor chain does not terminate");
        let pred = *p.preds.get(&cur).expect("every path edge has a predecessor");
        match pred {
            Pred::Seed => break,
            Pred::Step(prev) => {
                push(prev.1, &mut rev);
                if matches!(p.fact(prev.2), Fact::Zero) && !matches!(p.fact(cur.2), Fact::Zero) {
                    // `prev` generated the fact: it is the source.
                    break;
                }
                cur = prev;
            }
            Pred::Return { exit, call } => {
                stack.push(call);
                cur = exit;
            }
            Pred::CallStart(call) => {
                let ce = stack.pop().unwrap_or(call);
                push(ce.1, &mut rev);
                if matches!(p.fact(ce.2), Fact::Zero) {
                    break;
                }
                cur = ce;
            }
        }
    }
    rev.reverse();
    rev
}
