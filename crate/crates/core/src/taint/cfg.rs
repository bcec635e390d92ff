//! Interprocedural CFG over an instrumented model.
//!
//! Methods are instantiated per binding: which component (if any) `this`
//! and each object parameter refer to. Receiver-bound calls
//! (`recv->m(..)` without an owner) resolve against that binding, so a
//! shared helper called on behalf of different components gets one
//! instance per component.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::diag::Diagnostic;
use crate::instrument::DUMMY_MAIN;
use crate::ir::{AppModel, CallResolution, Method, MethodRef, QualName, Stmt, StmtId, StmtKind, Terminator};

pub type NodeId = usize;
pub type InstId = usize;

/// Component bound to `this` and to each parameter (by unit index).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Binding {
    pub this: Option<usize>,
    pub params: Vec<Option<usize>>,
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub method: MethodRef,
    pub binding: Binding,
    pub entry: NodeId,
    pub exit: NodeId,
    pub rooted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Stmt { block: usize, index: usize },
    /// Control returns here after the call at the same position.
    RetSite { block: usize, index: usize },
    /// `return v` of a block: moves `v` into the return slot.
    ReturnVal { block: usize },
    /// Empty block with a non-return terminator.
    Nop { block: usize },
    Exit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Node {
    pub inst: InstId,
    pub kind: NodeKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Normal,
    CallToStart,
    CallToReturn,
    ExitToReturn,
}

/// Resolution of one call node.
#[derive(Clone, Debug)]
pub struct CallSite {
    pub callees: Vec<InstId>,
    /// Callee could not be resolved; the call is an identity transfer.
    pub opaque: bool,
    /// Caller variable that becomes the callee's `this`.
    pub this_arg: Option<String>,
    pub ret_site: NodeId,
}

pub struct Cfg<'m> {
    pub model: &'m AppModel,
    pub nodes: Vec<Node>,
    pub instances: Vec<Instance>,
    pub edges: Vec<(NodeId, NodeId, EdgeKind)>,
    /// Normal successors (including call → return-site for display only is
    /// excluded; see `calls`).
    pub succs: Vec<Vec<NodeId>>,
    pub calls: HashMap<NodeId, CallSite>,
    pub roots: Vec<InstId>,
    pub diags: Vec<Diagnostic>,
}

pub const RET: &str = "$ret";

impl<'m> Cfg<'m> {
    pub fn method(&self, inst: InstId) -> &'m Method {
        self.model.method(self.instances[inst].method)
    }

    pub fn stmt(&self, n: NodeId) -> Option<&'m Stmt> {
        let node = self.nodes[n];
        match node.kind {
            NodeKind::Stmt { block, index } | NodeKind::RetSite { block, index } => {
                Some(&self.method(node.inst).blocks[block].stmts[index])
            }
            _ => None,
        }
    }

    /// Statement id of a statement node (not of return sites).
    pub fn stmt_id(&self, n: NodeId) -> Option<&'m StmtId> {
        match self.nodes[n].kind {
            NodeKind::Stmt { .. } => self.stmt(n).map(|s| &s.id),
            _ => None,
        }
    }

    pub fn entry_of(&self, inst: InstId) -> NodeId {
        self.instances[inst].entry
    }

    pub fn edges_of_kind(&self, kind: EdgeKind) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.iter().filter(move |e| e.2 == kind).map(|e| (e.0, e.1))
    }

    /// Human-readable node label, for diagnostics and tests.
    pub fn describe(&self, n: NodeId) -> String {
        let node = self.nodes[n];
        let inst = &self.instances[node.inst];
        let u = &self.model.units[inst.method.unit];
        let m = self.method(node.inst);
        match node.kind {
            NodeKind::Stmt { .. } => self.stmt(n).map(|s| s.id.to_string()).unwrap_or_default(),
            NodeKind::RetSite { .. } => format!("ret({})", self.stmt(n).map(|s| s.id.to_string()).unwrap_or_default()),
            NodeKind::ReturnVal { block } => format!("{}::{}@{}:return", u.name, m.name, block),
            NodeKind::Nop { block } => format!("{}::{}@{}:nop", u.name, m.name, block),
            NodeKind::Exit => format!("{}::{}:exit", u.name, m.name),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Bind {
    Unset,
    One(usize),
    Conflict,
}

impl Bind {
    fn get(self) -> Option<usize> {
        match self {
            Bind::One(u) => Some(u),
            _ => None,
        }
    }

    fn join(self, o: Bind) -> Bind {
        match (self, o) {
            (Bind::Unset, x) | (x, Bind::Unset) => x,
            (Bind::One(a), Bind::One(b)) if a == b => Bind::One(a),
            _ => Bind::Conflict,
        }
    }
}

/// Which component each local variable may hold in one instance.
fn local_bindings(model: &AppModel, mref: MethodRef, b: &Binding) -> HashMap<String, Bind> {
    let m = model.method(mref);
    let app = &model.units[mref.unit].name.app;
    let mut env: HashMap<String, Bind> = HashMap::new();
    env.insert("this".into(), b.this.map_or(Bind::Conflict, Bind::One));
    for (k, p) in m.params.iter().enumerate() {
        env.insert(p.clone(), b.params.get(k).copied().flatten().map_or(Bind::Conflict, Bind::One));
    }
    loop {
        let mut changed = false;
        for s in m.stmts() {
            let Some(d) = s.kind.def() else { continue };
            let v = match &s.kind {
                StmtKind::Assign { src, .. } => env.get(src).copied().unwrap_or(Bind::Unset),
                StmtKind::NewObj { class, .. } => model
                    .unit_index(&QualName::qualify(class, app))
                    .map_or(Bind::Conflict, Bind::One),
                _ => Bind::Conflict,
            };
            let old = env.get(d).copied().unwrap_or(Bind::Unset);
            let new = old.join(v);
            if new != old {
                env.insert(d.to_owned(), new);
                changed = true;
            }
        }
        if !changed {
            return env;
        }
    }
}

struct Resolved {
    callees: Vec<(MethodRef, Binding)>,
    opaque: bool,
    this_arg: Option<String>,
}

fn resolve(model: &AppModel, mref: MethodRef, env: &HashMap<String, Bind>, c: &crate::ir::Call) -> Resolved {
    let bind = |v: &str| env.get(v).copied().and_then(Bind::get);
    let params: Vec<Option<usize>> = c.args.iter().map(|a| bind(a)).collect();
    match model.resolve_call(mref.unit, c) {
        CallResolution::Static(r) => {
            let (this, this_arg) = match &c.receiver {
                Some(recv) => (bind(recv), Some(recv.clone())),
                None if r.unit == mref.unit => (bind("this"), Some("this".to_owned())),
                None => (None, None),
            };
            Resolved {
                callees: vec![(r, Binding { this, params })],
                opaque: false,
                this_arg,
            }
        }
        CallResolution::Bound { method } => {
            let recv = c.receiver.as_deref().expect("bound calls have a receiver");
            match bind(recv) {
                Some(u) => {
                    let callees = model.units[u]
                        .method_index(&method)
                        .map(|mi| {
                            (
                                MethodRef { unit: u, method: mi },
                                Binding {
                                    this: Some(u),
                                    params,
                                },
                            )
                        })
                        .into_iter()
                        .collect();
                    // A bound receiver without such a method: no-op call.
                    Resolved {
                        callees,
                        opaque: false,
                        this_arg: Some(recv.to_owned()),
                    }
                }
                None => Resolved {
                    callees: vec![],
                    opaque: true,
                    this_arg: None,
                },
            }
        }
        CallResolution::Unknown => Resolved {
            callees: vec![],
            opaque: true,
            this_arg: None,
        },
    }
}

fn default_binding(model: &AppModel, r: MethodRef) -> Binding {
    let u = &model.units[r.unit];
    Binding {
        this: u.is_component().then_some(r.unit),
        params: vec![None; model.method(r).params.len()],
    }
}

/// Builds the CFG. Roots are the drivers of launcher components.
pub fn build_cfg(model: &AppModel) -> Cfg<'_> {
    let mut index: BTreeMap<(MethodRef, Binding), InstId> = BTreeMap::new();
    let mut insts: Vec<(MethodRef, Binding, bool)> = Vec::new();
    let mut queue: VecDeque<InstId> = VecDeque::new();
    // (instance, block, stmt) -> (callees, receiver-bound, unresolved name)
    type Resolved = (Vec<InstId>, bool, Option<String>);
    let mut resolved: HashMap<(InstId, usize, usize), Resolved> = HashMap::new();
    let mut diags = Vec::new();

    let mut roots = Vec::new();
    for (ui, u) in model.units.iter().enumerate() {
        if !u.is_entry_point() {
            continue;
        }
        if let Some(mi) = u.method_index(DUMMY_MAIN) {
            let r = MethodRef { unit: ui, method: mi };
            let b = default_binding(model, r);
            let id = insts.len();
            index.insert((r, b.clone()), id);
            insts.push((r, b, true));
            queue.push_back(id);
            roots.push(id);
        }
    }

    let all_methods: Vec<MethodRef> = model
        .units
        .iter()
        .enumerate()
        .flat_map(|(ui, u)| (0..u.methods.len()).map(move |mi| MethodRef { unit: ui, method: mi }))
        .collect();
    let mut pending_defaults = all_methods.clone().into_iter();

    loop {
        while let Some(id) = queue.pop_front() {
            let (r, b, rooted) = insts[id].clone();
            let env = local_bindings(model, r, &b);
            let m = model.method(r);
            for (bi, blk) in m.blocks.iter().enumerate() {
                for (si, s) in blk.stmts.iter().enumerate() {
                    let StmtKind::Call(c) = &s.kind else { continue };
                    let res = resolve(model, r, &env, c);
                    if res.opaque && rooted {
                        diags.push(
                            Diagnostic::warning(
                                format!("{}: call to `{}` cannot be resolved; treated as opaque", s.id, c.method),
                                s.pos.line,
                                s.pos.col,
                            )
                            .with_file(model.source_name.as_deref()),
                        );
                    }
                    let mut ids = Vec::new();
                    for (cr, cb) in res.callees {
                        let key = (cr, cb.clone());
                        let cid = match index.get(&key) {
                            Some(&x) => {
                                if rooted && !insts[x].2 {
                                    insts[x].2 = true;
                                    queue.push_back(x);
                                }
                                x
                            }
                            None => {
                                let x = insts.len();
                                index.insert(key, x);
                                insts.push((cr, cb, rooted));
                                queue.push_back(x);
                                x
                            }
                        };
                        ids.push(cid);
                    }
                    resolved.insert((id, bi, si), (ids, res.opaque, res.this_arg));
                }
            }
        }
        // Methods never reached get one unrooted default instance.
        let next = pending_defaults.by_ref().find(|r| !index.keys().any(|(m, _)| m == r));
        match next {
            Some(r) => {
                let b = default_binding(model, r);
                let id = insts.len();
                index.insert((r, b.clone()), id);
                insts.push((r, b, false));
                queue.push_back(id);
            }
            None => break,
        }
    }

    // Nodes.
    let mut nodes: Vec<Node> = Vec::new();
    let mut instances: Vec<Instance> = Vec::with_capacity(insts.len());
    // Per instance: node of each (block, index), ret sites, return-value nodes, nops.
    let mut stmt_node: HashMap<(InstId, usize, usize), NodeId> = HashMap::new();
    let mut ret_node: HashMap<(InstId, usize, usize), NodeId> = HashMap::new();
    let mut retval_node: HashMap<(InstId, usize), NodeId> = HashMap::new();
    let mut nop_node: HashMap<(InstId, usize), NodeId> = HashMap::new();
    for (id, (r, b, rooted)) in insts.iter().enumerate() {
        let m = model.method(*r);
        for (bi, blk) in m.blocks.iter().enumerate() {
            if blk.stmts.is_empty() && !matches!(blk.term, Terminator::Return(_)) {
                nop_node.insert((id, bi), nodes.len());
                nodes.push(Node {
                    inst: id,
                    kind: NodeKind::Nop { block: bi },
                });
            }
            for (si, s) in blk.stmts.iter().enumerate() {
                stmt_node.insert((id, bi, si), nodes.len());
                nodes.push(Node {
                    inst: id,
                    kind: NodeKind::Stmt { block: bi, index: si },
                });
                if matches!(s.kind, StmtKind::Call(_)) {
                    ret_node.insert((id, bi, si), nodes.len());
                    nodes.push(Node {
                        inst: id,
                        kind: NodeKind::RetSite { block: bi, index: si },
                    });
                }
            }
            if let Terminator::Return(Some(_)) = blk.term {
                retval_node.insert((id, bi), nodes.len());
                nodes.push(Node {
                    inst: id,
                    kind: NodeKind::ReturnVal { block: bi },
                });
            }
        }
        let exit = nodes.len();
        nodes.push(Node {
            inst: id,
            kind: NodeKind::Exit,
        });
        instances.push(Instance {
            method: *r,
            binding: b.clone(),
            entry: exit,
            exit,
            rooted: *rooted,
        });
    }

    let block_start = |id: InstId, m: &Method, bi: usize, exit: NodeId| -> NodeId {
        let blk = &m.blocks[bi];
        if !blk.stmts.is_empty() {
            stmt_node[&(id, bi, 0)]
        } else {
            match blk.term {
                Terminator::Return(None) => exit,
                Terminator::Return(Some(_)) => retval_node[&(id, bi)],
                _ => nop_node[&(id, bi)],
            }
        }
    };

    let mut succs: Vec<Vec<NodeId>> = vec![Vec::new(); nodes.len()];
    let mut edges = Vec::new();
    let mut calls = HashMap::new();
    for id in 0..instances.len() {
        let r = instances[id].method;
        let m = model.method(r);
        let exit = instances[id].exit;
        if !m.blocks.is_empty() {
            instances[id].entry = block_start(id, m, m.entry, exit);
        }
        for (bi, blk) in m.blocks.iter().enumerate() {
            // Node sequence of this block; `last` is where the terminator leaves.
            let mut last: Option<NodeId> = nop_node.get(&(id, bi)).copied();
            for (si, _) in blk.stmts.iter().enumerate() {
                let n = stmt_node[&(id, bi, si)];
                if let Some(p) = last {
                    succs[p].push(n);
                    edges.push((p, n, EdgeKind::Normal));
                }
                if let Some(&rs) = ret_node.get(&(id, bi, si)) {
                    let (callees, opaque, this_arg) = resolved[&(id, bi, si)].clone();
                    for &c in &callees {
                        edges.push((n, instances[c].entry, EdgeKind::CallToStart));
                        edges.push((instances[c].exit, rs, EdgeKind::ExitToReturn));
                    }
                    edges.push((n, rs, EdgeKind::CallToReturn));
                    calls.insert(
                        n,
                        CallSite {
                            callees,
                            opaque,
                            this_arg,
                            ret_site: rs,
                        },
                    );
                    last = Some(rs);
                } else {
                    last = Some(n);
                }
            }
            let targets: Vec<NodeId> = match &blk.term {
                Terminator::Fallthrough => {
                    if bi + 1 < m.blocks.len() {
                        vec![block_start(id, m, bi + 1, exit)]
                    } else {
                        vec![exit]
                    }
                }
                Terminator::Goto(t) => vec![block_start(id, m, *t, exit)],
                Terminator::Branch(ts) => ts.iter().map(|t| block_start(id, m, *t, exit)).collect(),
                Terminator::Return(None) => vec![exit],
                Terminator::Return(Some(_)) => {
                    let rv = retval_node[&(id, bi)];
                    succs[rv].push(exit);
                    edges.push((rv, exit, EdgeKind::Normal));
                    vec![rv]
                }
            };
            if let Some(p) = last {
                // For an empty Return block `last` is None: the block start is
                // the exit or return node itself.
                for t in targets {
                    if !succs[p].contains(&t) {
                        succs[p].push(t);
                        edges.push((p, t, EdgeKind::Normal));
                    }
                }
            }
        }
    }

    Cfg {
        model,
        nodes,
        instances,
        edges,
        succs,
        calls,
        roots,
        diags,
    }
}
