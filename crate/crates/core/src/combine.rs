//! Merging apps into one model, and choosing which apps to merge.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::icc::IccLink;
use crate::ir::AppModel;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CombineError {
    #[error("nothing to combine")]
    Empty,
    #[error("app `{0}` appears more than once")]
    DuplicateApp(String),
    #[error("max length must be at least 1 (got {0})")]
    BadMaxLen(usize),
}

/// Merges apps into one model. Units keep their qualified names, so each
/// component's origin app stays recoverable. A single app comes back as is.
pub fn combine(apps: &[AppModel]) -> Result<AppModel, CombineError> {
    let mut seen = BTreeSet::new();
    for a in apps {
        if !seen.insert(a.app_id.as_str()) {
            return Err(CombineError::DuplicateApp(a.app_id.clone()));
        }
    }
    match apps {
        [] => Err(CombineError::Empty),
        [one] => Ok(one.clone()),
        _ => {
            let mut sorted: Vec<&AppModel> = apps.iter().collect();
            sorted.sort_by(|a, b| a.app_id.cmp(&b.app_id));
            let id = sorted.iter().map(|a| a.app_id.as_str()).collect::<Vec<_>>().join("+");
            let mut out = AppModel::new(id);
            for a in sorted {
                out.units.extend(a.units.iter().cloned());
            }
            Ok(out)
        }
    }
}

/// Apps as nodes; an edge wherever at least one cross-app link exists.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IacGraph {
    pub nodes: Vec<String>,
    /// Keyed by the sorted app pair.
    pub edges: BTreeMap<(String, String), Vec<IccLink>>,
}

impl IacGraph {
    pub fn from_edges<S: AsRef<str>>(nodes: &[S], edges: &[(S, S)]) -> IacGraph {
        let mut g = IacGraph {
            nodes: nodes.iter().map(|s| s.as_ref().to_owned()).collect(),
            edges: BTreeMap::new(),
        };
        for (a, b) in edges {
            g.add_edge(a.as_ref(), b.as_ref(), None);
        }
        g.nodes.sort();
        g.nodes.dedup();
        g
    }

    fn add_edge(&mut self, a: &str, b: &str, link: Option<IccLink>) {
        if a == b {
            return;
        }
        let key = if a < b { (a.to_owned(), b.to_owned()) } else { (b.to_owned(), a.to_owned()) };
        for n in [a, b] {
            if !self.nodes.iter().any(|x| x == n) {
                self.nodes.push(n.to_owned());
            }
        }
        let v = self.edges.entry(key).or_default();
        v.extend(link);
    }

    pub fn neighbours(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut adj: BTreeMap<&str, BTreeSet<&str>> = self.nodes.iter().map(|n| (n.as_str(), BTreeSet::new())).collect();
        for (a, b) in self.edges.keys() {
            adj.entry(a).or_default().insert(b);
            adj.entry(b).or_default().insert(a);
        }
        adj
    }
}

pub fn build_iac_graph(apps: &[&AppModel], links: &[IccLink]) -> IacGraph {
    let mut g = IacGraph {
        nodes: apps.iter().map(|a| a.app_id.clone()).collect(),
        edges: BTreeMap::new(),
    };
    // A model may already hold several apps; edges join models.
    let owner: BTreeMap<&str, &str> = apps
        .iter()
        .flat_map(|a| a.units.iter().map(move |u| (u.name.app.as_str(), a.app_id.as_str())))
        .collect();
    for l in links.iter().filter(|l| l.cross_app) {
        if let (Some(a), Some(b)) = (owner.get(l.from.unit.app.as_str()), owner.get(l.to.app.as_str())) {
            g.add_edge(a, b, Some(l.clone()));
        }
    }
    g.nodes.sort();
    g.nodes.dedup();
    for v in g.edges.values_mut() {
        v.sort_by(|a, b| (&a.from, &a.to).cmp(&(&b.from, &b.to)));
    }
    g
}

/// App sets to analyze together. Connected components no bigger than
/// `max_len` are kept whole; larger ones are covered by the maximal node
/// sets of their simple paths of at most `max_len` apps, so every such
/// path lies inside some emitted set.
pub fn split_graph(g: &IacGraph, max_len: usize) -> Result<Vec<BTreeSet<String>>, CombineError> {
    if max_len < 1 {
        return Err(CombineError::BadMaxLen(max_len));
    }
    let adj = g.neighbours();
    let mut done: BTreeSet<&str> = BTreeSet::new();
    let mut out: BTreeSet<BTreeSet<String>> = BTreeSet::new();
    for start in adj.keys() {
        if done.contains(start) {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut q = VecDeque::from([*start]);
        comp.insert(*start);
        while let Some(n) = q.pop_front() {
            for m in &adj[n] {
                if comp.insert(*m) {
                    q.push_back(m);
                }
            }
        }
        done.extend(comp.iter().copied());
        if comp.len() <= max_len {
            out.insert(comp.iter().map(|s| s.to_string()).collect());
            continue;
        }
        let mut sets: BTreeSet<BTreeSet<&str>> = BTreeSet::new();
        for n in &comp {
            let mut path = vec![*n];
            paths_from(&adj, &mut path, max_len, &mut sets);
        }
        let all: Vec<&BTreeSet<&str>> = sets.iter().collect();
        for s in &all {
            let dominated = all.iter().any(|t| t.len() > s.len() && s.is_subset(t));
            if !dominated {
                out.insert(s.iter().map(|x| x.to_string()).collect());
            }
        }
    }
    Ok(out.into_iter().collect())
}

fn paths_from<'a>(
    adj: &BTreeMap<&'a str, BTreeSet<&'a str>>,
    path: &mut Vec<&'a str>,
    max_len: usize,
    sets: &mut BTreeSet<BTreeSet<&'a str>>,
) {
    sets.insert(path.iter().copied().collect());
    if path.len() == max_len {
        return;
    }
    let last = *path.last().expect("non-empty path");
    for &m in &adj[last] {
        if !path.contains(&m) {
            path.push(m);
            paths_from(adj, path, max_len, sets);
            path.pop();
        }
    }
}
