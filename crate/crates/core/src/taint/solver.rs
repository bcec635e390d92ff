//! IFDS tabulation over the instance CFG.
//!
//! Path edges `(d1, n, d2)` say: fact `d2` holds at node `n` when its
//! method instance was entered with fact `d1`. Callees are summarized per
//! entry fact, so every summary is reused at each matching call site and
//! facts from different calling contexts never merge.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use super::access_path::{AccessPath, Selector};
use super::cfg::{CallSite, Cfg, InstId, NodeId, NodeKind, RET};
use super::config::SourceSinkConfig;
use crate::ir::{Call, Method, Operand, Stmt, StmtId, StmtKind, Terminator};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Fact {
    Zero,
    Taint { ap: AccessPath, origin: StmtId },
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fact::Zero => f.write_str("0"),
            Fact::Taint { ap, origin } => write!(f, "{ap} <- {origin}"),
        }
    }
}

pub type FactId = u32;
pub(crate) type EdgeKey = (FactId, NodeId, FactId);

/// How a path edge was first derived; used to rebuild witnesses.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Pred {
    Seed,
    /// Flow through the statement at the previous edge's node.
    Step(EdgeKey),
    /// Entry of a callee, reached from this call edge.
    CallStart(EdgeKey),
    /// Return site reached through a callee summary.
    Return { exit: EdgeKey, call: EdgeKey },
}

/// A tainted value reaching a sink.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SinkHit {
    pub origin: StmtId,
    pub sink: StmtId,
    pub path: AccessPath,
}

pub struct Propagation<'c, 'm> {
    pub cfg: &'c Cfg<'m>,
    facts: Vec<Fact>,
    fact_ids: HashMap<Fact, FactId>,
    pub(crate) preds: HashMap<EdgeKey, Pred>,
    /// First edge found per (origin, sink), in discovery order.
    pub(crate) first_hit: BTreeMap<(StmtId, StmtId), EdgeKey>,
    hits: Vec<SinkHit>,
}

impl<'c, 'm> Propagation<'c, 'm> {
    pub fn fact(&self, id: FactId) -> &Fact {
        &self.facts[id as usize]
    }

    /// Every (fact, sink) observation, sorted.
    pub fn hits(&self) -> &[SinkHit] {
        &self.hits
    }

    /// Distinct (origin, sink) pairs, sorted.
    pub fn pairs(&self) -> Vec<(StmtId, StmtId)> {
        self.first_hit.keys().cloned().collect()
    }

    pub fn path_edge_count(&self) -> usize {
        self.preds.len()
    }
}

const ZERO: FactId = 0;

struct Solver<'c, 'm, 'f> {
    cfg: &'c Cfg<'m>,
    config: &'f SourceSinkConfig,
    facts: Vec<Fact>,
    fact_ids: HashMap<Fact, FactId>,
    preds: HashMap<EdgeKey, Pred>,
    work: VecDeque<EdgeKey>,
    incoming: HashMap<(InstId, FactId), Vec<EdgeKey>>,
    incoming_seen: HashSet<(InstId, FactId, EdgeKey)>,
    endsum: HashMap<(InstId, FactId), Vec<FactId>>,
    first_hit: BTreeMap<(StmtId, StmtId), EdgeKey>,
    hits: std::collections::BTreeSet<SinkHit>,
}

impl<'c, 'm, 'f> Solver<'c, 'm, 'f> {
    fn intern(&mut self, f: Fact) -> FactId {
        if let Some(&id) = self.fact_ids.get(&f) {
            return id;
        }
        let id = self.facts.len() as FactId;
        self.facts.push(f.clone());
        self.fact_ids.insert(f, id);
        id
    }

    fn propagate(&mut self, e: EdgeKey, pred: Pred) {
        if let std::collections::hash_map::Entry::Vacant(v) = self.preds.entry(e) {
            v.insert(pred);
            self.work.push_back(e);
        }
    }

    fn run(&mut self) {
        for &r in &self.cfg.roots {
            let entry = self.cfg.entry_of(r);
            self.propagate((ZERO, entry, ZERO), Pred::Seed);
        }
        while let Some(e) = self.work.pop_front() {
            self.process(e);
        }
    }

    fn process(&mut self, e: EdgeKey) {
        let (d1, n, d2) = e;
        let node = self.cfg.nodes[n];
        if node.kind == NodeKind::Exit {
            let key = (node.inst, d1);
            let sums = self.endsum.entry(key).or_default();
            if sums.contains(&d2) {
                return;
            }
            sums.push(d2);
            let callers = self.incoming.get(&key).cloned().unwrap_or_default();
            for ce in callers {
                self.apply_return(ce, (d1, n, d2));
            }
            return;
        }
        if let Some(cs) = self.cfg.calls.get(&n) {
            let Some(Stmt {
                kind: StmtKind::Call(c),
                ..
            }) = self.cfg.stmt(n)
            else {
                unreachable!("call site without call statement")
            };
            let fact = self.facts[d2 as usize].clone();
            for &callee in &cs.callees {
                let cm = self.cfg.method(callee);
                let entry = self.cfg.entry_of(callee);
                for f in call_to_start(c, cs, cm, &fact) {
                    let d3 = self.intern(f);
                    self.propagate((d3, entry, d3), Pred::CallStart(e));
                    if self.incoming_seen.insert((callee, d3, e)) {
                        self.incoming.entry((callee, d3)).or_default().push(e);
                    }
                    let exit = self.cfg.instances[callee].exit;
                    for d4 in self.endsum.get(&(callee, d3)).cloned().unwrap_or_default() {
                        self.apply_return(e, (d3, exit, d4));
                    }
                }
            }
            for f in call_to_return(c, cs, &fact) {
                let d3 = self.intern(f);
                self.propagate((d1, cs.ret_site, d3), Pred::Step(e));
            }
            return;
        }
        let fact = self.facts[d2 as usize].clone();
        let out: Vec<Fact> = match node.kind {
            NodeKind::Stmt { .. } => {
                let s = self.cfg.stmt(n).expect("statement node");
                self.check_sink(s, &fact, e);
                normal_flow(s, &fact, self.config)
            }
            NodeKind::ReturnVal { block } => {
                let m = self.cfg.method(node.inst);
                let Terminator::Return(Some(v)) = &m.blocks[block].term else {
                    unreachable!("return-value node without return value")
                };
                let mut out = vec![fact.clone()];
                if let Fact::Taint { ap, origin } = &fact {
                    if &ap.base == v {
                        out.push(Fact::Taint {
                            ap: ap.rebase(RET),
                            origin: origin.clone(),
                        });
                    }
                }
                out
            }
            _ => vec![fact],
        };
        let succs = self.cfg.succs[n].clone();
        for f in out {
            let d3 = self.intern(f);
            for &m in &succs {
                self.propagate((d1, m, d3), Pred::Step(e));
            }
        }
    }

    fn apply_return(&mut self, call_edge: EdgeKey, exit_edge: EdgeKey) {
        let (d1, n, _) = call_edge;
        let cs = &self.cfg.calls[&n];
        let Some(Stmt {
            kind: StmtKind::Call(c),
            ..
        }) = self.cfg.stmt(n)
        else {
            unreachable!("call site without call statement")
        };
        let callee = self.cfg.nodes[exit_edge.1].inst;
        let cm = self.cfg.method(callee);
        let fact = self.facts[exit_edge.2 as usize].clone();
        let rs = cs.ret_site;
        for f in exit_to_return(c, cs, cm, &fact) {
            let d5 = self.intern(f);
            self.propagate(
                (d1, rs, d5),
                Pred::Return {
                    exit: exit_edge,
                    call: call_edge,
                },
            );
        }
    }

    fn check_sink(&mut self, s: &Stmt, fact: &Fact, e: EdgeKey) {
        let StmtKind::Sink { name, var } = &s.kind else { return };
        if !self.config.is_sink(name) {
            return;
        }
        if let Fact::Taint { ap, origin } = fact {
            if &ap.base == var {
                self.hits.insert(SinkHit {
                    origin: origin.clone(),
                    sink: s.id.clone(),
                    path: ap.clone(),
                });
                self.first_hit.entry((origin.clone(), s.id.clone())).or_insert(e);
            }
        }
    }
}

fn selector(key: &Operand) -> (Selector, bool) {
    match key {
        Operand::Lit(k) => (Selector::Extra(k.clone()), true),
        Operand::Var(_) => (Selector::AnyExtra, false),
    }
}

/// Facts after statement `s` given `fact` before it.
pub fn normal_flow(s: &Stmt, fact: &Fact, config: &SourceSinkConfig) -> Vec<Fact> {
    let (ap, origin) = match fact {
        Fact::Zero => {
            let mut out = vec![Fact::Zero];
            if let StmtKind::Source { dst, name } = &s.kind {
                if config.is_source(name) {
                    out.push(Fact::Taint {
                        ap: AccessPath::var(dst.as_str()),
                        origin: s.id.clone(),
                    });
                }
            }
            return out;
        }
        Fact::Taint { ap, origin } => (ap, origin),
    };
    let mk = |ap: AccessPath| Fact::Taint {
        ap,
        origin: origin.clone(),
    };
    let keep = || fact.clone();
    match &s.kind {
        StmtKind::Assign { dst, src } => {
            let mut out = Vec::new();
            if &ap.base != dst || src == dst {
                out.push(keep());
            }
            if &ap.base == src && src != dst {
                out.push(mk(ap.rebase(dst)));
            }
            out
        }
        StmtKind::Const { dst, .. }
        | StmtKind::Source { dst, .. }
        | StmtKind::NewIntent { dst }
        | StmtKind::NewObj { dst, .. }
        | StmtKind::GetIntent { dst } => {
            if &ap.base == dst {
                vec![]
            } else {
                vec![keep()]
            }
        }
        StmtKind::PutExtra { intent, key, value } => {
            let (sel, literal) = selector(key);
            store(ap, intent, sel, literal, value, fact, &mk)
        }
        StmtKind::FieldStore { obj, field, value } => {
            store(ap, obj, Selector::Field(field.clone()), true, value, fact, &mk)
        }
        StmtKind::GetExtra { dst, intent, key } => {
            let (sel, _) = selector(key);
            load(ap, dst, intent, &sel, fact, &mk)
        }
        StmtKind::FieldLoad { dst, obj, field } => {
            load(ap, dst, obj, &Selector::Field(field.clone()), fact, &mk)
        }
        StmtKind::Call(c) => match &c.dst {
            // Only reached for calls the CFG did not model as call sites.
            Some(d) if &ap.base == d => vec![],
            _ => vec![keep()],
        },
        StmtKind::Sink { .. }
        | StmtKind::SetTarget { .. }
        | StmtKind::SetAction { .. }
        | StmtKind::SetCategory { .. }
        | StmtKind::SetDataType { .. }
        | StmtKind::SetResult { .. }
        | StmtKind::Finish
        | StmtKind::Icc { .. } => vec![keep()],
    }
}

fn store(
    ap: &AccessPath,
    obj: &str,
    sel: Selector,
    strong: bool,
    value: &str,
    fact: &Fact,
    mk: &dyn Fn(AccessPath) -> Fact,
) -> Vec<Fact> {
    let mut out = Vec::new();
    if !(strong && ap.killed_by_write(obj, &sel)) {
        out.push(fact.clone());
    }
    if ap.base == value {
        out.push(mk(ap.prepend(obj, sel)));
    }
    out
}

fn load(ap: &AccessPath, dst: &str, obj: &str, sel: &Selector, fact: &Fact, mk: &dyn Fn(AccessPath) -> Fact) -> Vec<Fact> {
    let mut out = Vec::new();
    if ap.base == obj {
        if let Some(p) = ap.project(sel, dst) {
            out.push(mk(p));
        }
    }
    if ap.base != dst {
        out.push(fact.clone());
    }
    out
}

fn call_to_start(c: &Call, cs: &CallSite, callee: &Method, fact: &Fact) -> Vec<Fact> {
    let Fact::Taint { ap, origin } = fact else {
        return vec![Fact::Zero];
    };
    let mut out = Vec::new();
    for (a, p) in c.args.iter().zip(&callee.params) {
        if &ap.base == a {
            out.push(Fact::Taint {
                ap: ap.rebase(p),
                origin: origin.clone(),
            });
        }
    }
    if cs.this_arg.as_deref() == Some(ap.base.as_str()) {
        out.push(Fact::Taint {
            ap: ap.rebase("this"),
            origin: origin.clone(),
        });
    }
    out
}

fn call_to_return(c: &Call, cs: &CallSite, fact: &Fact) -> Vec<Fact> {
    let Fact::Taint { ap, .. } = fact else {
        return vec![Fact::Zero];
    };
    if c.dst.as_deref() == Some(ap.base.as_str()) {
        return vec![];
    }
    let passed = c.args.iter().any(|a| a == &ap.base) || cs.this_arg.as_deref() == Some(ap.base.as_str());
    if !cs.callees.is_empty() && passed && ap.has_selectors() {
        // Flows through the callee and comes back via its exit.
        return vec![];
    }
    vec![fact.clone()]
}

fn exit_to_return(c: &Call, cs: &CallSite, callee: &Method, fact: &Fact) -> Vec<Fact> {
    let Fact::Taint { ap, origin } = fact else {
        return vec![Fact::Zero];
    };
    let mk = |base: &str| Fact::Taint {
        ap: ap.rebase(base),
        origin: origin.clone(),
    };
    let dst = c.dst.as_deref();
    let mut out = Vec::new();
    if ap.base == RET {
        if let Some(d) = dst {
            out.push(mk(d));
        }
        return out;
    }
    if !ap.has_selectors() {
        return out;
    }
    for (a, p) in c.args.iter().zip(&callee.params) {
        if &ap.base == p && Some(a.as_str()) != dst {
            out.push(mk(a));
        }
    }
    if ap.base == "this" {
        if let Some(t) = cs.this_arg.as_deref() {
            if Some(t) != dst {
                out.push(mk(t));
            }
        }
    }
    out
}

/// Runs the taint analysis from every root of `cfg`.
pub fn propagate<'c, 'm>(cfg: &'c Cfg<'m>, config: &SourceSinkConfig) -> Propagation<'c, 'm> {
    let mut s = Solver {
        cfg,
        config,
        facts: vec![Fact::Zero],
        fact_ids: HashMap::from([(Fact::Zero, ZERO)]),
        preds: HashMap::new(),
        work: VecDeque::new(),
        incoming: HashMap::new(),
        incoming_seen: HashSet::new(),
        endsum: HashMap::new(),
        first_hit: BTreeMap::new(),
        hits: Default::default(),
    };
    s.run();
    Propagation {
        cfg,
        facts: s.facts,
        fact_ids: s.fact_ids,
        preds: s.preds,
        first_hit: s.first_hit,
        hits: s.hits.into_iter().collect(),
    }
}

impl Propagation<'_, '_> {
    pub fn fact_id(&self, f: &Fact) -> Option<FactId> {
        self.fact_ids.get(f).copied()
    }
}
