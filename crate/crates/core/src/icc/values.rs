//! Intent value analysis: a flow-sensitive constant propagation of string
//! values and intent attributes, joined over all paths reaching each ICC
//! call. Intents passed as call arguments carry the caller's value one call
//! level deep.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::ir::{AppModel, CallResolution, Method, MethodRef, Operand, QualName, StmtId, StmtKind};

/// A set of string constants, or unknown.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Attr {
    Consts(BTreeSet<String>),
    Top,
}

impl Attr {
    pub fn empty() -> Self {
        Attr::Consts(BTreeSet::new())
    }

    pub fn join(&self, other: &Attr) -> Attr {
        match (self, other) {
            (Attr::Consts(a), Attr::Consts(b)) => Attr::Consts(a.union(b).cloned().collect()),
            _ => Attr::Top,
        }
    }

    pub fn leq(&self, other: &Attr) -> bool {
        match (self, other) {
            (_, Attr::Top) => true,
            (Attr::Top, _) => false,
            (Attr::Consts(a), Attr::Consts(b)) => a.is_subset(b),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    /// No explicit target was set on any path.
    Implicit,
    Explicit(BTreeSet<QualName>),
    Top,
}

impl Target {
    pub fn join(&self, other: &Target) -> Target {
        match (self, other) {
            (Target::Implicit, Target::Implicit) => Target::Implicit,
            (Target::Explicit(a), Target::Explicit(b)) => {
                Target::Explicit(a.union(b).cloned().collect())
            }
            _ => Target::Top,
        }
    }

    pub fn leq(&self, other: &Target) -> bool {
        match (self, other) {
            (_, Target::Top) => true,
            (Target::Implicit, Target::Implicit) => true,
            (Target::Explicit(a), Target::Explicit(b)) => a.is_subset(b),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DataType {
    Absent,
    Consts(BTreeSet<String>),
    Top,
}

impl DataType {
    /// Absent joined with a constant is Top: the match rules for the two
    /// differ, so no constant set can represent "maybe absent".
    pub fn join(&self, other: &DataType) -> DataType {
        match (self, other) {
            (DataType::Absent, DataType::Absent) => DataType::Absent,
            (DataType::Consts(a), DataType::Consts(b)) => {
                DataType::Consts(a.union(b).cloned().collect())
            }
            _ => DataType::Top,
        }
    }

    pub fn leq(&self, other: &DataType) -> bool {
        match (self, other) {
            (_, DataType::Top) => true,
            (DataType::Absent, DataType::Absent) => true,
            (DataType::Consts(a), DataType::Consts(b)) => a.is_subset(b),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntentValue {
    pub target: Target,
    pub actions: Attr,
    pub categories: Attr,
    pub data_type: DataType,
    /// Literal extras keys put on some path; informational only.
    pub extras_keys: BTreeSet<String>,
}

impl IntentValue {
    /// A freshly allocated intent.
    pub fn fresh() -> Self {
        IntentValue {
            target: Target::Implicit,
            actions: Attr::empty(),
            categories: Attr::empty(),
            data_type: DataType::Absent,
            extras_keys: BTreeSet::new(),
        }
    }

    pub fn top() -> Self {
        IntentValue {
            target: Target::Top,
            actions: Attr::Top,
            categories: Attr::Top,
            data_type: DataType::Top,
            extras_keys: BTreeSet::new(),
        }
    }

    pub fn join(&self, o: &IntentValue) -> IntentValue {
        IntentValue {
            target: self.target.join(&o.target),
            actions: self.actions.join(&o.actions),
            categories: self.categories.join(&o.categories),
            data_type: self.data_type.join(&o.data_type),
            extras_keys: self.extras_keys.union(&o.extras_keys).cloned().collect(),
        }
    }

    /// Lattice order on the matching-relevant attributes.
    pub fn leq(&self, o: &IntentValue) -> bool {
        self.target.leq(&o.target)
            && self.actions.leq(&o.actions)
            && self.categories.leq(&o.categories)
            && self.data_type.leq(&o.data_type)
    }
}

/// Abstract string: bottom (undefined), a constant set, or unknown.
#[derive(Clone, Debug, PartialEq, Eq)]
enum Str {
    Bot,
    Consts(BTreeSet<String>),
    Top,
}

impl Str {
    fn join(&self, o: &Str) -> Str {
        match (self, o) {
            (Str::Bot, x) | (x, Str::Bot) => x.clone(),
            (Str::Consts(a), Str::Consts(b)) => Str::Consts(a.union(b).cloned().collect()),
            _ => Str::Top,
        }
    }
}

/// Where an intent object may have been allocated.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Site {
    New(StmtId),
    Param(usize),
    /// Anything the analysis cannot see into: received intents, call
    /// results, field loads.
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Val {
    s: Str,
    sites: BTreeSet<Site>,
}

impl Val {
    fn bot() -> Self {
        Val {
            s: Str::Bot,
            sites: BTreeSet::new(),
        }
    }

    fn opaque() -> Self {
        Val {
            s: Str::Top,
            sites: [Site::Unknown].into(),
        }
    }

    fn join(&self, o: &Val) -> Val {
        Val {
            s: self.s.join(&o.s),
            sites: self.sites.union(&o.sites).cloned().collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct State {
    vars: BTreeMap<String, Val>,
    heap: BTreeMap<Site, IntentValue>,
}

impl State {
    fn join(&self, o: &State) -> State {
        let mut out = self.clone();
        for (k, v) in &o.vars {
            let e = out.vars.entry(k.clone()).or_insert_with(Val::bot);
            *e = e.join(v);
        }
        for (k, v) in &o.heap {
            match out.heap.get_mut(k) {
                Some(e) => *e = e.join(v),
                None => {
                    out.heap.insert(k.clone(), v.clone());
                }
            }
        }
        out
    }

    fn get(&self, v: &str) -> Val {
        self.vars.get(v).cloned().unwrap_or_else(Val::bot)
    }

    fn intent(&self, v: &str) -> IntentValue {
        let val = self.get(v);
        let mut acc: Option<IntentValue> = None;
        for s in &val.sites {
            let iv = self.heap.get(s).cloned().unwrap_or_else(IntentValue::top);
            acc = Some(match acc {
                None => iv,
                Some(a) => a.join(&iv),
            });
        }
        acc.unwrap_or_else(IntentValue::top)
    }

    /// Applies `f` to every intent `v` may point to; weak update when there
    /// is more than one candidate.
    fn update(&mut self, v: &str, f: impl Fn(&IntentValue) -> IntentValue) {
        let sites = self.get(v).sites;
        let strong = sites.len() == 1;
        for s in sites {
            if s == Site::Unknown {
                continue;
            }
            let old = self.heap.get(&s).cloned().unwrap_or_else(IntentValue::top);
            let new = f(&old);
            let upd = if strong { new } else { old.join(&new) };
            self.heap.insert(s, upd);
        }
    }

    fn operand(&self, o: &Operand) -> Attr {
        match o {
            Operand::Lit(s) => Attr::Consts([s.clone()].into()),
            Operand::Var(v) => match self.get(v).s {
                Str::Consts(c) => Attr::Consts(c),
                Str::Bot | Str::Top => Attr::Top,
            },
        }
    }
}

/// Per-method facts needed from the rest of the app.
struct Env<'a> {
    app: &'a AppModel,
    /// For each method, which parameter positions may have intent attributes
    /// set by the callee (directly or transitively).
    mutates: BTreeMap<MethodRef, BTreeSet<usize>>,
}

impl Env<'_> {
    fn callees(&self, unit: usize, c: &crate::ir::Call) -> Vec<MethodRef> {
        match self.app.resolve_call(unit, c) {
            CallResolution::Static(r) => vec![r],
            CallResolution::Bound { method } => self
                .app
                .units
                .iter()
                .enumerate()
                .filter_map(|(ui, u)| {
                    u.method_index(&method).map(|mi| MethodRef { unit: ui, method: mi })
                })
                .collect(),
            CallResolution::Unknown => vec![],
        }
    }
}

/// Observations collected while analyzing one method.
#[derive(Default)]
struct Obs {
    icc: BTreeMap<StmtId, IntentValue>,
    /// Abstract values of call arguments per callee and position.
    args: Vec<(MethodRef, usize, Str, Option<IntentValue>)>,
}

fn analyze_method(env: &Env, mref: MethodRef, params: &[(Str, Option<IntentValue>)]) -> Obs {
    let app = env.app;
    let unit = &app.units[mref.unit];
    let m: &Method = app.method(mref);
    let mut init = State::default();
    for (k, p) in m.params.iter().enumerate() {
        let (s, iv) = params.get(k).cloned().unwrap_or((Str::Top, None));
        init.vars.insert(
            p.clone(),
            Val {
                s,
                sites: [Site::Param(k)].into(),
            },
        );
        init.heap.insert(Site::Param(k), iv.unwrap_or_else(IntentValue::top));
    }
    init.vars.insert("this".into(), Val::opaque());

    let n = m.blocks.len();
    let mut inputs: Vec<Option<State>> = vec![None; n];
    if n == 0 {
        return Obs::default();
    }
    inputs[m.entry] = Some(init);
    let mut work: VecDeque<usize> = VecDeque::from([m.entry]);
    let mut queued = vec![false; n];
    queued[m.entry] = true;
    let mut obs = Obs::default();

    while let Some(b) = work.pop_front() {
        queued[b] = false;
        let Some(mut st) = inputs[b].clone() else { continue };
        let block = &m.blocks[b];
        for s in &block.stmts {
            transfer(env, mref.unit, &unit.name.app, s, &mut st, &mut obs);
        }
        for succ in block.successors(b) {
            if succ >= n {
                continue;
            }
            let merged = match &inputs[succ] {
                None => st.clone(),
                Some(old) => old.join(&st),
            };
            if inputs[succ].as_ref() != Some(&merged) {
                inputs[succ] = Some(merged);
                if !queued[succ] {
                    queued[succ] = true;
                    work.push_back(succ);
                }
            }
        }
    }
    obs
}

fn transfer(env: &Env, unit: usize, app: &str, s: &crate::ir::Stmt, st: &mut State, obs: &mut Obs) {
    match &s.kind {
        StmtKind::Assign { dst, src } => {
            let v = st.get(src);
            st.vars.insert(dst.clone(), v);
        }
        StmtKind::Const { dst, value } => {
            st.vars.insert(
                dst.clone(),
                Val {
                    s: Str::Consts([value.clone()].into()),
                    sites: BTreeSet::new(),
                },
            );
        }
        StmtKind::NewIntent { dst } => {
            let site = Site::New(s.id.clone());
            st.heap.insert(site.clone(), IntentValue::fresh());
            st.vars.insert(
                dst.clone(),
                Val {
                    s: Str::Top,
                    sites: [site].into(),
                },
            );
        }
        StmtKind::SetTarget { intent, value } => {
            let t = match st.operand(value) {
                Attr::Consts(c) => {
                    Target::Explicit(c.iter().map(|n| QualName::qualify(n, app)).collect())
                }
                Attr::Top => Target::Top,
            };
            st.update(intent, |iv| IntentValue {
                target: t.clone(),
                ..iv.clone()
            });
        }
        StmtKind::SetAction { intent, value } => {
            let a = st.operand(value);
            st.update(intent, |iv| IntentValue {
                actions: a.clone(),
                ..iv.clone()
            });
        }
        StmtKind::SetCategory { intent, value } => {
            let a = st.operand(value);
            st.update(intent, |iv| IntentValue {
                categories: iv.categories.join(&a),
                ..iv.clone()
            });
        }
        StmtKind::SetDataType { intent, value } => {
            let d = match st.operand(value) {
                Attr::Consts(c) => DataType::Consts(c),
                Attr::Top => DataType::Top,
            };
            st.update(intent, |iv| IntentValue {
                data_type: d.clone(),
                ..iv.clone()
            });
        }
        StmtKind::PutExtra { intent, key, .. } => {
            if let Attr::Consts(keys) = st.operand(key) {
                st.update(intent, |iv| {
                    let mut iv = iv.clone();
                    iv.extras_keys.extend(keys.iter().cloned());
                    iv
                });
            }
        }
        StmtKind::Icc { intent, .. } => {
            let iv = st.intent(intent);
            obs.icc
                .entry(s.id.clone())
                .and_modify(|e| *e = e.join(&iv))
                .or_insert(iv);
        }
        StmtKind::Call(c) => {
            let callees = env.callees(unit, c);
            for (k, a) in c.args.iter().enumerate() {
                let v = st.get(a);
                let iv = if v.sites.is_empty() { None } else { Some(st.intent(a)) };
                for callee in &callees {
                    obs.args.push((*callee, k, v.s.clone(), iv.clone()));
                }
            }
            for callee in &callees {
                if let Some(ps) = env.mutates.get(callee) {
                    for &k in ps {
                        if let Some(a) = c.args.get(k) {
                            st.update(a, |_| IntentValue::top());
                        }
                    }
                }
            }
            if let Some(d) = &c.dst {
                st.vars.insert(d.clone(), Val::opaque());
            }
        }
        StmtKind::Source { dst, .. }
        | StmtKind::GetExtra { dst, .. }
        | StmtKind::GetIntent { dst }
        | StmtKind::FieldLoad { dst, .. } => {
            st.vars.insert(dst.clone(), Val::opaque());
        }
        StmtKind::NewObj { dst, .. } => {
            st.vars.insert(
                dst.clone(),
                Val {
                    s: Str::Top,
                    sites: BTreeSet::new(),
                },
            );
        }
        StmtKind::Sink { .. }
        | StmtKind::SetResult { .. }
        | StmtKind::Finish
        | StmtKind::FieldStore { .. } => {}
    }
}

/// Which parameters of each method may have intent attributes overwritten,
/// propagated through calls to a fixpoint.
fn mutation_summaries(app: &AppModel) -> BTreeMap<MethodRef, BTreeSet<usize>> {
    let mut out: BTreeMap<MethodRef, BTreeSet<usize>> = BTreeMap::new();
    let refs: Vec<MethodRef> = app
        .units
        .iter()
        .enumerate()
        .flat_map(|(ui, u)| (0..u.methods.len()).map(move |mi| MethodRef { unit: ui, method: mi }))
        .collect();
    loop {
        let env = Env {
            app,
            mutates: out.clone(),
        };
        let mut changed = false;
        for &r in &refs {
            let m = app.method(r);
            // Parameters cannot be reassigned, so aliases of a parameter are
            // the variables assigned from it (transitively).
            let mut alias: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
            for (k, p) in m.params.iter().enumerate() {
                alias.entry(p.as_str()).or_default().insert(k);
            }
            loop {
                let mut grew = false;
                for s in m.stmts() {
                    if let StmtKind::Assign { dst, src } = &s.kind {
                        if let Some(ks) = alias.get(src.as_str()).cloned() {
                            let e = alias.entry(dst.as_str()).or_default();
                            let before = e.len();
                            e.extend(ks);
                            grew |= e.len() != before;
                        }
                    }
                }
                if !grew {
                    break;
                }
            }
            let mut mine: BTreeSet<usize> = BTreeSet::new();
            for s in m.stmts() {
                match &s.kind {
                    StmtKind::SetTarget { intent, .. }
                    | StmtKind::SetAction { intent, .. }
                    | StmtKind::SetCategory { intent, .. }
                    | StmtKind::SetDataType { intent, .. } => {
                        if let Some(ks) = alias.get(intent.as_str()) {
                            mine.extend(ks);
                        }
                    }
                    StmtKind::Call(c) => {
                        for callee in env.callees(r.unit, c) {
                            if let Some(ps) = env.mutates.get(&callee) {
                                for &k in ps {
                                    if let Some(ks) = c.args.get(k).and_then(|a| alias.get(a.as_str())) {
                                        mine.extend(ks);
                                    }
                                }
                            }
                        }
                    }
                    _ => {}
                }
            }
            if !mine.is_empty() {
                let e = out.entry(r).or_default();
                let before = e.len();
                e.extend(mine);
                changed |= e.len() != before;
            }
        }
        if !changed {
            return out;
        }
    }
}

/// Abstract intent value at every ICC call statement of `app`.
pub fn resolve_intent_values(app: &AppModel) -> BTreeMap<StmtId, IntentValue> {
    let env = Env {
        app,
        mutates: mutation_summaries(app),
    };
    let refs: Vec<MethodRef> = app
        .units
        .iter()
        .enumerate()
        .flat_map(|(ui, u)| (0..u.methods.len()).map(move |mi| MethodRef { unit: ui, method: mi }))
        .collect();

    // Level 0: every method with unknown parameters. Collects argument
    // values at call sites.
    let mut called: BTreeMap<MethodRef, Vec<(Str, Option<IntentValue>)>> = BTreeMap::new();
    let mut has_caller: BTreeSet<MethodRef> = BTreeSet::new();
    let mut level0 = BTreeMap::new();
    for &r in &refs {
        let obs = analyze_method(&env, r, &[]);
        for (callee, k, s, iv) in obs.args {
            has_caller.insert(callee);
            let slot = called.entry(callee).or_insert_with(|| {
                vec![(Str::Bot, None); app.method(callee).params.len()]
            });
            if let Some(e) = slot.get_mut(k) {
                e.0 = e.0.join(&s);
                e.1 = match (&e.1, iv) {
                    (None, x) => x,
                    (Some(a), Some(b)) => Some(a.join(&b)),
                    (Some(_), None) => Some(IntentValue::top()),
                };
            }
        }
        level0.insert(r, obs.icc);
    }

    // Level 1: methods reached only through calls see their callers' values.
    // Runtime-invoked methods keep unknown parameters.
    let mut out: BTreeMap<StmtId, IntentValue> = BTreeMap::new();
    for &r in &refs {
        let m = app.method(r);
        let runtime_invoked = m.role != crate::ir::MethodRole::Helper || !has_caller.contains(&r);
        let icc = if runtime_invoked || m.params.is_empty() {
            level0.remove(&r).unwrap_or_default()
        } else {
            let params: Vec<(Str, Option<IntentValue>)> = called
                .get(&r)
                .cloned()
                .unwrap_or_default()
                .into_iter()
                .map(|(s, iv)| (if s == Str::Bot { Str::Top } else { s }, iv))
                .collect();
            analyze_method(&env, r, &params).icc
        };
        for (id, iv) in icc {
            out.entry(id).and_modify(|e| *e = e.join(&iv)).or_insert(iv);
        }
    }
    out
}
