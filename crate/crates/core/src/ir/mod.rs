//! The component IR: apps made of components (and plain helper classes),
//! methods made of labeled blocks, and a small statement language covering
//! intents, ICC calls, sources, sinks, calls and object fields.
//!
//! Equality on IR values ignores source positions, so a model that went
//! through serialize/parse compares equal to the original.

mod stmt_id;
mod validate;

use std::fmt;

pub use stmt_id::{ParseStmtIdError, StmtId};
pub use validate::validate;

/// Source position. Always compares equal so that structural comparisons
/// are position-insensitive.
#[derive(Clone, Copy, Debug, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl Pos {
    pub fn new(line: u32, col: u32) -> Self {
        Pos { line, col }
    }
}

impl PartialEq for Pos {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Pos {}

impl std::hash::Hash for Pos {
    fn hash<H: std::hash::Hasher>(&self, _: &mut H) {}
}

/// `app_id/local_name`: the name of a component or class, unique across a
/// corpus because app ids are.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QualName {
    pub app: String,
    pub local: String,
}

impl QualName {
    pub fn new(app: impl Into<String>, local: impl Into<String>) -> Self {
        QualName {
            app: app.into(),
            local: local.into(),
        }
    }

    /// Parses `app/local`; a name without a slash is qualified by `default_app`.
    pub fn qualify(name: &str, default_app: &str) -> Self {
        match name.split_once('/') {
            Some((app, local)) => QualName::new(app, local),
            None => QualName::new(default_app, name),
        }
    }
}

impl fmt::Display for QualName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.app, self.local)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ComponentKind {
    Activity,
    Service,
    Receiver,
    Provider,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 4] = [
        ComponentKind::Activity,
        ComponentKind::Service,
        ComponentKind::Receiver,
        ComponentKind::Provider,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            ComponentKind::Activity => "activity",
            ComponentKind::Service => "service",
            ComponentKind::Receiver => "receiver",
            ComponentKind::Provider => "provider",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        ComponentKind::ALL.into_iter().find(|k| k.keyword() == s)
    }

    /// Lifecycle slots the runtime may invoke on a component of this kind.
    pub fn lifecycle_slots(self) -> &'static [&'static str] {
        match self {
            ComponentKind::Activity => &[
                "onCreate",
                "onStart",
                "onResume",
                "onPause",
                "onStop",
                "onDestroy",
                "onActivityResult",
            ],
            ComponentKind::Service => &["onCreate", "onStartCommand", "onBind", "onDestroy"],
            ComponentKind::Receiver => &["onReceive"],
            ComponentKind::Provider => &["onQuery", "onInsert", "onDelete", "onUpdate"],
        }
    }

    pub fn is_lifecycle_slot(self, name: &str) -> bool {
        self.lifecycle_slots().contains(&name)
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UnitKind {
    Component(ComponentKind),
    /// A plain class with no lifecycle: listeners, utilities, `IpcSC`.
    Class,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IccKind {
    StartActivity,
    StartActivityForResult,
    StartService,
    BindService,
    SendBroadcast,
    ProviderQuery,
    ProviderInsert,
    ProviderDelete,
    ProviderUpdate,
}

impl IccKind {
    pub const ALL: [IccKind; 9] = [
        IccKind::StartActivity,
        IccKind::StartActivityForResult,
        IccKind::StartService,
        IccKind::BindService,
        IccKind::SendBroadcast,
        IccKind::ProviderQuery,
        IccKind::ProviderInsert,
        IccKind::ProviderDelete,
        IccKind::ProviderUpdate,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            IccKind::StartActivity => "start_activity",
            IccKind::StartActivityForResult => "start_activity_for_result",
            IccKind::StartService => "start_service",
            IccKind::BindService => "bind_service",
            IccKind::SendBroadcast => "send_broadcast",
            IccKind::ProviderQuery => "provider_query",
            IccKind::ProviderInsert => "provider_insert",
            IccKind::ProviderDelete => "provider_delete",
            IccKind::ProviderUpdate => "provider_update",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        IccKind::ALL.into_iter().find(|k| k.keyword() == s)
    }

    /// The component kind this ICC method can start. Provider-style calls
    /// return `None`: they are never resolved to links.
    pub fn target_kind(self) -> Option<ComponentKind> {
        match self {
            IccKind::StartActivity | IccKind::StartActivityForResult => {
                Some(ComponentKind::Activity)
            }
            IccKind::StartService | IccKind::BindService => Some(ComponentKind::Service),
            IccKind::SendBroadcast => Some(ComponentKind::Receiver),
            IccKind::ProviderQuery
            | IccKind::ProviderInsert
            | IccKind::ProviderDelete
            | IccKind::ProviderUpdate => None,
        }
    }

    pub fn is_for_result(self) -> bool {
        self == IccKind::StartActivityForResult
    }
}

impl fmt::Display for IccKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct IntentFilter {
    pub actions: std::collections::BTreeSet<String>,
    pub categories: std::collections::BTreeSet<String>,
    pub data_types: std::collections::BTreeSet<String>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    Lit(String),
    Var(String),
}

impl Operand {
    pub fn var(&self) -> Option<&str> {
        match self {
            Operand::Var(v) => Some(v),
            Operand::Lit(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Call {
    pub dst: Option<String>,
    /// Explicit receiver (`recv->...`). Without an owner the call is bound to
    /// whatever component the receiver holds in the calling context.
    pub receiver: Option<String>,
    /// Owning unit, unqualified (same app as the caller) or `app/local`.
    pub owner: Option<String>,
    pub method: String,
    pub args: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum StmtKind {
    Assign { dst: String, src: String },
    Const { dst: String, value: String },
    Source { dst: String, name: String },
    Sink { name: String, var: String },
    NewIntent { dst: String },
    SetTarget { intent: String, value: Operand },
    SetAction { intent: String, value: Operand },
    SetCategory { intent: String, value: Operand },
    SetDataType { intent: String, value: Operand },
    PutExtra { intent: String, key: Operand, value: String },
    GetExtra { dst: String, intent: String, key: Operand },
    GetIntent { dst: String },
    SetResult { intent: String },
    Finish,
    /// `caller` names the component instance on whose behalf the call is made
    /// (defaults to `this`); it receives `onActivityResult` for result calls.
    Icc { kind: IccKind, intent: String, caller: Option<String> },
    Call(Call),
    FieldStore { obj: String, field: String, value: String },
    FieldLoad { dst: String, obj: String, field: String },
    NewObj { dst: String, class: String },
}

impl StmtKind {
    /// The variable this statement (re)defines, if any.
    pub fn def(&self) -> Option<&str> {
        match self {
            StmtKind::Assign { dst, .. }
            | StmtKind::Const { dst, .. }
            | StmtKind::Source { dst, .. }
            | StmtKind::NewIntent { dst }
            | StmtKind::GetExtra { dst, .. }
            | StmtKind::GetIntent { dst }
            | StmtKind::FieldLoad { dst, .. }
            | StmtKind::NewObj { dst, .. } => Some(dst),
            StmtKind::Call(c) => c.dst.as_deref(),
            _ => None,
        }
    }

    /// Variables read by this statement.
    pub fn uses(&self) -> Vec<&str> {
        match self {
            StmtKind::Assign { src, .. } => vec![src],
            StmtKind::Const { .. }
            | StmtKind::Source { .. }
            | StmtKind::NewIntent { .. }
            | StmtKind::GetIntent { .. }
            | StmtKind::Finish
            | StmtKind::NewObj { .. } => vec![],
            StmtKind::Sink { var, .. } => vec![var],
            StmtKind::SetTarget { intent, value }
            | StmtKind::SetAction { intent, value }
            | StmtKind::SetCategory { intent, value }
            | StmtKind::SetDataType { intent, value } => {
                let mut v = vec![intent.as_str()];
                v.extend(value.var());
                v
            }
            StmtKind::PutExtra { intent, key, value } => {
                let mut v = vec![intent.as_str(), value.as_str()];
                v.extend(key.var());
                v
            }
            StmtKind::GetExtra { intent, key, .. } => {
                let mut v = vec![intent.as_str()];
                v.extend(key.var());
                v
            }
            StmtKind::SetResult { intent } => vec![intent],
            StmtKind::Icc { intent, caller, .. } => {
                let mut v = vec![intent.as_str()];
                v.extend(caller.as_deref());
                v
            }
            StmtKind::Call(c) => {
                let mut v: Vec<&str> = c.receiver.iter().map(String::as_str).collect();
                v.extend(c.args.iter().map(String::as_str));
                v
            }
            StmtKind::FieldStore { obj, value, .. } => vec![obj, value],
            StmtKind::FieldLoad { obj, .. } => vec![obj],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Stmt {
    pub id: StmtId,
    pub kind: StmtKind,
    /// `@tag` annotation from a trailing comment; used by ground-truth files.
    pub tag: Option<String>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Terminator {
    /// Continue with the next block in order.
    Fallthrough,
    Goto(usize),
    /// Nondeterministic choice among two or more successors.
    Branch(Vec<usize>),
    Return(Option<String>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Block {
    pub label: String,
    pub stmts: Vec<Stmt>,
    pub term: Terminator,
    pub pos: Pos,
}

impl Block {
    pub fn successors(&self, self_index: usize) -> Vec<usize> {
        match &self.term {
            Terminator::Fallthrough => vec![self_index + 1],
            Terminator::Goto(b) => vec![*b],
            Terminator::Branch(bs) => bs.clone(),
            Terminator::Return(_) => vec![],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MethodRole {
    Lifecycle,
    Callback,
    Helper,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Method {
    pub name: String,
    pub role: MethodRole,
    pub params: Vec<String>,
    pub blocks: Vec<Block>,
    pub entry: usize,
    pub synthetic: bool,
    pub pos: Pos,
}

impl Method {
    pub fn stmts(&self) -> impl Iterator<Item = &Stmt> {
        self.blocks.iter().flat_map(|b| b.stmts.iter())
    }

    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Unit {
    pub name: QualName,
    pub kind: UnitKind,
    pub filters: Vec<IntentFilter>,
    pub methods: Vec<Method>,
    pub synthetic: bool,
    pub pos: Pos,
}

pub const LAUNCHER_ACTION: &str = "android.intent.action.MAIN";

impl Unit {
    pub fn component_kind(&self) -> Option<ComponentKind> {
        match self.kind {
            UnitKind::Component(k) => Some(k),
            UnitKind::Class => None,
        }
    }

    pub fn is_component(&self) -> bool {
        matches!(self.kind, UnitKind::Component(_))
    }

    pub fn method(&self, name: &str) -> Option<&Method> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn method_index(&self, name: &str) -> Option<usize> {
        self.methods.iter().position(|m| m.name == name)
    }

    pub fn lifecycle(&self, slot: &str) -> Option<&Method> {
        self.methods
            .iter()
            .find(|m| m.role == MethodRole::Lifecycle && m.name == slot)
    }

    pub fn callbacks(&self) -> impl Iterator<Item = &Method> {
        self.methods.iter().filter(|m| m.role == MethodRole::Callback)
    }

    pub fn helpers(&self) -> impl Iterator<Item = &Method> {
        self.methods.iter().filter(|m| m.role == MethodRole::Helper)
    }

    /// A component the runtime launches on its own (launcher filter).
    pub fn is_entry_point(&self) -> bool {
        self.is_component()
            && self
                .filters
                .iter()
                .any(|f| f.actions.contains(LAUNCHER_ACTION))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodRef {
    pub unit: usize,
    pub method: usize,
}

/// How a call statement finds its callee.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CallResolution {
    Static(MethodRef),
    /// Receiver-bound: the callee is `method` on whatever component the
    /// receiver holds at run time.
    Bound { method: String },
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AppModel {
    pub app_id: String,
    pub units: Vec<Unit>,
    pub source_name: Option<String>,
}

impl AppModel {
    pub fn new(app_id: impl Into<String>) -> Self {
        AppModel {
            app_id: app_id.into(),
            units: Vec::new(),
            source_name: None,
        }
    }

    pub fn components(&self) -> impl Iterator<Item = &Unit> {
        self.units.iter().filter(|u| u.is_component())
    }

    pub fn unit(&self, name: &QualName) -> Option<&Unit> {
        self.units.iter().find(|u| &u.name == name)
    }

    pub fn unit_index(&self, name: &QualName) -> Option<usize> {
        self.units.iter().position(|u| &u.name == name)
    }

    pub fn method(&self, r: MethodRef) -> &Method {
        &self.units[r.unit].methods[r.method]
    }

    /// Origin apps of the units in this model, sorted.
    pub fn origin_apps(&self) -> Vec<String> {
        let set: std::collections::BTreeSet<&str> =
            self.units.iter().map(|u| u.name.app.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    pub fn resolve_call(&self, caller_unit: usize, call: &Call) -> CallResolution {
        match (&call.owner, &call.receiver) {
            (Some(owner), _) => {
                let caller_app = &self.units[caller_unit].name.app;
                let qn = QualName::qualify(owner, caller_app);
                match self.unit_index(&qn) {
                    Some(u) => match self.units[u].method_index(&call.method) {
                        Some(m) => CallResolution::Static(MethodRef { unit: u, method: m }),
                        None => CallResolution::Unknown,
                    },
                    None => CallResolution::Unknown,
                }
            }
            (None, Some(_)) => CallResolution::Bound {
                method: call.method.clone(),
            },
            (None, None) => match self.units[caller_unit].method_index(&call.method) {
                Some(m) => CallResolution::Static(MethodRef {
                    unit: caller_unit,
                    method: m,
                }),
                None => CallResolution::Unknown,
            },
        }
    }

    /// Linear lookup; use [`StmtIndex`] for bulk queries.
    pub fn stmt(&self, id: &StmtId) -> Option<&Stmt> {
        let unit = self.unit(&id.unit)?;
        let method = unit.method(&id.method)?;
        method.stmts().find(|s| &s.id == id)
    }

    pub fn all_stmts(&self) -> impl Iterator<Item = &Stmt> {
        self.units
            .iter()
            .flat_map(|u| u.methods.iter())
            .flat_map(|m| m.stmts())
    }

    pub fn is_instrumented(&self) -> bool {
        self.units
            .iter()
            .any(|u| u.synthetic || u.methods.iter().any(|m| m.synthetic))
    }
}

/// Location of a statement inside a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StmtLoc {
    pub method: MethodRef,
    pub block: usize,
    pub index: usize,
}

/// Map from statement ids to their locations.
#[derive(Clone, Debug, Default)]
pub struct StmtIndex {
    map: std::collections::HashMap<StmtId, StmtLoc>,
}

impl StmtIndex {
    pub fn build(model: &AppModel) -> Self {
        let mut map = std::collections::HashMap::new();
        for (ui, u) in model.units.iter().enumerate() {
            for (mi, m) in u.methods.iter().enumerate() {
                for (bi, b) in m.blocks.iter().enumerate() {
                    for (si, s) in b.stmts.iter().enumerate() {
                        map.insert(
                            s.id.clone(),
                            StmtLoc {
                                method: MethodRef { unit: ui, method: mi },
                                block: bi,
                                index: si,
                            },
                        );
                    }
                }
            }
        }
        StmtIndex { map }
    }

    pub fn get(&self, id: &StmtId) -> Option<StmtLoc> {
        self.map.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl StmtLoc {
    pub fn stmt<'m>(&self, model: &'m AppModel) -> &'m Stmt {
        &model.method(self.method).blocks[self.block].stmts[self.index]
    }
}

/// Re-derives every statement id from its position. Used by the parser and by
/// tests that build models by hand.
pub fn assign_positional_ids(model: &mut AppModel) {
    for u in &mut model.units {
        for m in &mut u.methods {
            let synthetic = m.synthetic;
            for (bi, b) in m.blocks.iter_mut().enumerate() {
                for (si, s) in b.stmts.iter_mut().enumerate() {
                    s.id = StmtId {
                        unit: u.name.clone(),
                        method: m.name.clone(),
                        synthetic,
                        block: bi as u32,
                        index: si as u32,
                    };
                }
            }
        }
    }
}
