//! Brute-force reference semantics for taint flows.
//!
//! Runs uninstrumented models concretely, exploring every branch choice,
//! every ICC target and every callback sequence. Taint is exact: each data
//! value carries the set of source statements it came from.
//!
//! The runtime model follows the lifecycle driver used by the analysis:
//! launcher components start with no intent; an ICC call runs each
//! matching target to completion right at the call, then (for result
//! calls) delivers the target's result to the caller's `onActivityResult`.
//! Callback loops run until no new state appears.
//!
//! Intents and plain objects are values; only component instances are
//! shared. Calls copy arguments in and copy parameters and the receiver
//! back out, which is the aliasing model the analysis assumes.

use std::collections::{BTreeMap, BTreeSet};

use iccflow_core::ir::{
    AppModel, Call, CallResolution, ComponentKind, IccKind, IntentFilter, MethodRef, Operand, QualName, StmtId,
    StmtKind, Terminator, Unit,
};
use iccflow_core::taint::SourceSinkConfig;

/// Rounds of the callback loop before giving up on a fixpoint.
pub const LOOP_CAP: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Val {
    Undef,
    Data(BTreeSet<StmtId>),
    Intent(Box<IntentV>),
    Obj(usize, BTreeMap<String, Val>),
    Comp(usize),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct IntentV {
    pub target: Option<QualName>,
    pub action: Option<String>,
    pub categories: BTreeSet<String>,
    pub data_type: Option<String>,
    pub extras: BTreeMap<String, Val>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Inst {
    unit: usize,
    fields: BTreeMap<String, Val>,
    intent: Val,
    result: Val,
}

type Heap = Vec<Inst>;
type Env = BTreeMap<String, Val>;

fn clean() -> Val {
    Val::Data(BTreeSet::new())
}

fn deep_taint(v: &Val, out: &mut BTreeSet<StmtId>) {
    match v {
        Val::Data(s) => out.extend(s.iter().cloned()),
        Val::Intent(i) => i.extras.values().for_each(|x| deep_taint(x, out)),
        Val::Obj(_, f) => f.values().for_each(|x| deep_taint(x, out)),
        Val::Undef | Val::Comp(_) => {}
    }
}

struct Outcome {
    heap: Heap,
    ret: Val,
    this: Val,
    params: Vec<Val>,
}

pub struct Oracle<'a> {
    model: &'a AppModel,
    config: &'a SourceSinkConfig,
    leaks: BTreeSet<(StmtId, StmtId)>,
    steps: usize,
}

const STEP_LIMIT: usize = 5_000_000;

impl<'a> Oracle<'a> {
    fn tick(&mut self) {
        self.steps += 1;
        assert!(self.steps < STEP_LIMIT, "oracle exceeded its step budget");
    }

    fn filter_matches(iv: &IntentV, f: &IntentFilter) -> bool {
        let action = iv.action.as_ref().is_some_and(|a| f.actions.contains(a));
        let cats = iv.categories.iter().all(|c| f.categories.contains(c));
        let ty = match &iv.data_type {
            None => f.data_types.is_empty(),
            Some(t) => f.data_types.contains(t),
        };
        action && cats && ty
    }

    fn targets(&self, kind: IccKind, iv: &IntentV) -> Vec<usize> {
        let Some(want) = kind.target_kind() else { return vec![] };
        let ok = |u: &Unit| u.component_kind() == Some(want);
        match &iv.target {
            Some(t) => self
                .model
                .unit_index(t)
                .filter(|&u| ok(&self.model.units[u]))
                .into_iter()
                .collect(),
            None => (0..self.model.units.len())
                .filter(|&u| {
                    let unit = &self.model.units[u];
                    ok(unit) && unit.filters.iter().any(|f| Self::filter_matches(iv, f))
                })
                .collect(),
        }
    }

    /// Runs a component from creation to its last lifecycle step. The new
    /// instance is left on top of each returned heap.
    fn launch(&mut self, heap: Heap, unit: usize, intent: Val) -> BTreeSet<Heap> {
        let mut heap = heap;
        heap.push(Inst {
            unit,
            fields: BTreeMap::new(),
            intent,
            result: Val::Undef,
        });
        let id = heap.len() - 1;
        let u = &self.model.units[unit];
        let kind = u.component_kind().expect("launching a component");
        let lc = |n: &str| u.lifecycle(n).map(|m| u.methods.iter().position(|x| std::ptr::eq(x, m)).unwrap());
        let seq = |names: &[&str]| -> Vec<usize> { names.iter().filter_map(|n| lc(n)).collect() };
        let mut states: BTreeSet<Heap> = BTreeSet::from([heap]);
        let callbacks: Vec<usize> = u
            .methods
            .iter()
            .enumerate()
            .filter(|(_, m)| m.role == iccflow_core::ir::MethodRole::Callback)
            .map(|(i, _)| i)
            .collect();
        let (pre, choice, mut looped, post) = match kind {
            ComponentKind::Activity => (
                seq(&["onCreate", "onStart", "onResume"]),
                vec![],
                callbacks,
                seq(&["onPause", "onStop", "onDestroy"]),
            ),
            ComponentKind::Service => (seq(&["onCreate"]), seq(&["onStartCommand", "onBind"]), callbacks, seq(&["onDestroy"])),
            ComponentKind::Receiver => (seq(&["onReceive"]), vec![], callbacks, vec![]),
            ComponentKind::Provider => panic!("providers are never launched"),
        };
        if kind == ComponentKind::Activity {
            looped.extend(lc("onActivityResult"));
        }
        for m in pre {
            states = self.invoke_all(states, unit, m, id);
        }
        if !choice.is_empty() {
            let mut next = BTreeSet::new();
            for m in choice {
                next.extend(self.invoke_all(states.clone(), unit, m, id));
            }
            states = next;
        }
        if !looped.is_empty() {
            let mut seen = states.clone();
            let mut frontier = states;
            let mut rounds = 0;
            while !frontier.is_empty() {
                rounds += 1;
                assert!(rounds <= LOOP_CAP, "callback loop did not reach a fixpoint");
                let mut next = BTreeSet::new();
                for &m in &looped {
                    for h in self.invoke_all(frontier.clone(), unit, m, id) {
                        if !seen.contains(&h) {
                            next.insert(h);
                        }
                    }
                }
                seen.extend(next.iter().cloned());
                frontier = next;
            }
            states = seen;
        }
        for m in post {
            states = self.invoke_all(states, unit, m, id);
        }
        states
    }

    /// Invokes a lifecycle method or callback on instance `id`.
    fn invoke_all(&mut self, states: BTreeSet<Heap>, unit: usize, method: usize, id: usize) -> BTreeSet<Heap> {
        let m = &self.model.units[unit].methods[method];
        let mut out = BTreeSet::new();
        for h in states {
            let args: Vec<Val> = (0..m.params.len())
                .map(|k| {
                    if k == 0 && ["onStartCommand", "onBind", "onReceive"].contains(&m.name.as_str()) {
                        h[id].intent.clone()
                    } else {
                        clean()
                    }
                })
                .collect();
            for o in self.exec(h, MethodRef { unit, method }, Val::Comp(id), args) {
                out.insert(o.heap);
            }
        }
        out
    }

    fn exec(&mut self, heap: Heap, r: MethodRef, this: Val, args: Vec<Val>) -> Vec<Outcome> {
        let m = self.model.method(r);
        let mut env: Env = BTreeMap::new();
        env.insert("this".into(), this);
        for (p, a) in m.params.iter().zip(args) {
            env.insert(p.clone(), a);
        }
        let mut done: BTreeSet<(Heap, Val, Val, Vec<Val>)> = BTreeSet::new();
        self.run_block(r, m.entry, env, heap, &mut done, 0);
        done.into_iter()
            .map(|(heap, ret, this, params)| Outcome { heap, ret, this, params })
            .collect()
    }

    fn run_block(
        &mut self,
        r: MethodRef,
        bi: usize,
        env: Env,
        heap: Heap,
        done: &mut BTreeSet<(Heap, Val, Val, Vec<Val>)>,
        depth: usize,
    ) {
        assert!(depth < 10_000, "oracle expects loop-free methods");
        let m = self.model.method(r);
        let blk = &m.blocks[bi];
        let mut states: BTreeSet<(Env, Heap)> = BTreeSet::from([(env, heap)]);
        for s in &blk.stmts {
            let mut next = BTreeSet::new();
            for (e, h) in states {
                self.tick();
                for st in self.step(r, &s.id, &s.kind, e, h) {
                    next.insert(st);
                }
            }
            states = next;
        }
        for (e, h) in states {
            match &blk.term {
                Terminator::Fallthrough => self.run_block(r, bi + 1, e, h, done, depth + 1),
                Terminator::Goto(t) => self.run_block(r, *t, e, h, done, depth + 1),
                Terminator::Branch(ts) => {
                    for t in ts {
                        self.run_block(r, *t, e.clone(), h.clone(), done, depth + 1);
                    }
                }
                Terminator::Return(v) => {
                    let ret = v.as_ref().and_then(|v| e.get(v).cloned()).unwrap_or(Val::Undef);
                    let this = e.get("this").cloned().unwrap_or(Val::Undef);
                    let params = m.params.iter().map(|p| e.get(p).cloned().unwrap_or(Val::Undef)).collect();
                    done.insert((h, ret, this, params));
                }
            }
        }
    }

    fn this_inst(env: &Env) -> Option<usize> {
        match env.get("this") {
            Some(Val::Comp(id)) => Some(*id),
            _ => None,
        }
    }

    fn lit(op: &Operand) -> &str {
        match op {
            Operand::Lit(s) => s,
            Operand::Var(v) => panic!("oracle only supports literal intent attributes (got `{v}`)"),
        }
    }

    fn step(&mut self, r: MethodRef, id: &StmtId, kind: &StmtKind, mut e: Env, mut h: Heap) -> Vec<(Env, Heap)> {
        let get = |e: &Env, v: &str| e.get(v).cloned().unwrap_or(Val::Undef);
        let app = self.model.units[r.unit].name.app.clone();
        match kind {
            StmtKind::Assign { dst, src } => {
                let v = get(&e, src);
                e.insert(dst.clone(), v);
            }
            StmtKind::Const { dst, .. } => {
                e.insert(dst.clone(), clean());
            }
            StmtKind::Source { dst, name } => {
                let v = if self.config.is_source(name) {
                    Val::Data(BTreeSet::from([id.clone()]))
                } else {
                    clean()
                };
                e.insert(dst.clone(), v);
            }
            StmtKind::Sink { name, var } => {
                if self.config.is_sink(name) {
                    let mut t = BTreeSet::new();
                    deep_taint(&get(&e, var), &mut t);
                    for o in t {
                        self.leaks.insert((o, id.clone()));
                    }
                }
            }
            StmtKind::NewIntent { dst } => {
                e.insert(dst.clone(), Val::Intent(Box::default()));
            }
            StmtKind::SetTarget { intent, value }
            | StmtKind::SetAction { intent, value }
            | StmtKind::SetCategory { intent, value }
            | StmtKind::SetDataType { intent, value } => {
                if let Some(Val::Intent(iv)) = e.get_mut(intent) {
                    let s = Self::lit(value).to_owned();
                    match kind {
                        StmtKind::SetTarget { .. } => iv.target = Some(QualName::qualify(&s, &app)),
                        StmtKind::SetAction { .. } => iv.action = Some(s),
                        StmtKind::SetCategory { .. } => {
                            iv.categories.insert(s);
                        }
                        _ => iv.data_type = Some(s),
                    }
                }
            }
            StmtKind::PutExtra { intent, key, value } => {
                let v = get(&e, value);
                match e.get_mut(intent) {
                    Some(Val::Intent(iv)) => {
                        iv.extras.insert(Self::lit(key).to_owned(), v);
                    }
                    _ => panic!("{id}: put_extra on a non-intent"),
                }
            }
            StmtKind::GetExtra { dst, intent, key } => {
                let v = match e.get(intent) {
                    Some(Val::Intent(iv)) => iv.extras.get(Self::lit(key)).cloned().unwrap_or_else(clean),
                    _ => clean(),
                };
                e.insert(dst.clone(), v);
            }
            StmtKind::GetIntent { dst } => {
                let v = Self::this_inst(&e).map(|i| h[i].intent.clone()).unwrap_or(Val::Undef);
                e.insert(dst.clone(), v);
            }
            StmtKind::SetResult { intent } => {
                let v = get(&e, intent);
                if let Some(i) = Self::this_inst(&e) {
                    h[i].result = v;
                }
            }
            StmtKind::Finish => {}
            StmtKind::FieldStore { obj, field, value } => {
                let v = get(&e, value);
                match e.get_mut(obj) {
                    Some(Val::Comp(i)) => {
                        h[*i].fields.insert(field.clone(), v);
                    }
                    Some(Val::Obj(_, f)) => {
                        f.insert(field.clone(), v);
                    }
                    _ => panic!("{id}: field store on a non-object"),
                }
            }
            StmtKind::FieldLoad { dst, obj, field } => {
                let v = match e.get(obj) {
                    Some(Val::Comp(i)) => h[*i].fields.get(field).cloned(),
                    Some(Val::Obj(_, f)) => f.get(field).cloned(),
                    _ => None,
                }
                .unwrap_or(Val::Undef);
                e.insert(dst.clone(), v);
            }
            StmtKind::NewObj { dst, class } => {
                let v = match self.model.unit_index(&QualName::qualify(class, &app)) {
                    Some(u) => Val::Obj(u, BTreeMap::new()),
                    None => Val::Undef,
                };
                e.insert(dst.clone(), v);
            }
            StmtKind::Call(c) => return self.call(r, c, e, h),
            StmtKind::Icc { kind, intent, caller } => {
                let Some(Val::Intent(iv)) = e.get(intent).cloned() else {
                    return vec![(e, h)];
                };
                let caller_val = get(&e, caller.as_deref().unwrap_or("this"));
                let targets = self.targets(*kind, &iv);
                if targets.is_empty() {
                    return vec![(e, h)];
                }
                let mut out = Vec::new();
                let base = h.len();
                for t in targets {
                    for hh in self.launch(h.clone(), t, Val::Intent(iv.clone())) {
                        let mut finals = vec![hh.clone()];
                        if kind.is_for_result() {
                            let result = hh[base].result.clone();
                            finals = self
                                .bound_call(hh, &caller_val, "onActivityResult", vec![result])
                                .into_iter()
                                .map(|o| o.heap)
                                .collect();
                        }
                        for mut f in finals {
                            f.truncate(base);
                            out.push((e.clone(), f));
                        }
                    }
                }
                return out;
            }
        }
        vec![(e, h)]
    }

    /// Calls `method` on whatever `recv` holds; a missing method is a no-op.
    fn bound_call(&mut self, heap: Heap, recv: &Val, method: &str, args: Vec<Val>) -> Vec<Outcome> {
        let unit = match recv {
            Val::Comp(i) => Some(heap[*i].unit),
            Val::Obj(u, _) => Some(*u),
            _ => None,
        };
        let target = unit.and_then(|u| self.model.units[u].method_index(method).map(|m| MethodRef { unit: u, method: m }));
        match target {
            Some(r) => self.exec(heap, r, recv.clone(), args),
            None => vec![Outcome {
                heap,
                ret: Val::Undef,
                this: recv.clone(),
                params: args,
            }],
        }
    }

    fn call(&mut self, r: MethodRef, c: &Call, e: Env, h: Heap) -> Vec<(Env, Heap)> {
        let get = |v: &str| e.get(v).cloned().unwrap_or(Val::Undef);
        let args: Vec<Val> = c.args.iter().map(|a| get(a)).collect();
        // Variable that receives the callee's final `this`.
        let (outcomes, this_var): (Vec<Outcome>, Option<String>) = match self.model.resolve_call(r.unit, c) {
            CallResolution::Static(t) => {
                let (this, var) = match &c.receiver {
                    Some(recv) => (get(recv), Some(recv.clone())),
                    None if t.unit == r.unit => (get("this"), Some("this".to_owned())),
                    None => (Val::Undef, None),
                };
                (self.exec(h, t, this, args), var)
            }
            CallResolution::Bound { method } => {
                let recv = c.receiver.clone().expect("bound call has a receiver");
                let rv = get(&recv);
                (self.bound_call(h, &rv, &method, args), Some(recv))
            }
            CallResolution::Unknown => (
                vec![Outcome {
                    heap: h,
                    ret: Val::Undef,
                    this: Val::Undef,
                    params: args,
                }],
                None,
            ),
        };
        outcomes
            .into_iter()
            .map(|o| {
                let mut e2 = e.clone();
                if let Some(v) = &this_var {
                    if v != "this" || matches!(o.this, Val::Obj(..) | Val::Comp(_)) {
                        e2.insert(v.clone(), o.this);
                    }
                }
                for (a, p) in c.args.iter().zip(o.params) {
                    e2.insert(a.clone(), p);
                }
                if let Some(d) = &c.dst {
                    e2.insert(d.clone(), o.ret);
                }
                (e2, o.heap)
            })
            .collect()
    }
}

/// Every (source, sink) pair some execution of the launcher components
/// realizes. Models must be uninstrumented; several apps are run as one
/// device.
pub fn oracle_pairs(apps: &[AppModel], config: &SourceSinkConfig) -> BTreeSet<(StmtId, StmtId)> {
    let mut all = AppModel::new("device");
    for a in apps {
        all.units.extend(a.units.iter().cloned());
    }
    let mut o = Oracle {
        model: &all,
        config,
        leaks: BTreeSet::new(),
        steps: 0,
    };
    for (ui, u) in all.units.iter().enumerate() {
        if u.is_entry_point() {
            o.launch(Vec::new(), ui, Val::Undef);
        }
    }
    o.leaks
}
