//! Rewrites ICC calls into ordinary calls so that the taint analysis sees
//! one connected program.
//!
//! For every link a redirect method on the synthetic `IpcSC` class of the
//! caller's app constructs the target component, hands it the intent and
//! runs its lifecycle driver. Targets get `init`/`getIntent` (and for result
//! calls `setResult`/`getIntentFAR`) backed by component fields.

mod dummy_main;

use std::collections::{BTreeMap, BTreeSet};

pub use dummy_main::{synthesize_dummy_main, DUMMY_MAIN, INTENT_FIELD};
use dummy_main::{block, syn_stmt};

use crate::icc::IccLink;
use crate::ir::{
    AppModel, Block, Call, ComponentKind, Method, MethodRole, Pos, QualName, StmtId, StmtKind, Terminator, Unit,
    UnitKind,
};

pub const HELPER_CLASS: &str = "IpcSC";
pub const RESULT_FIELD: &str = "intent_for_ar";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InstrumentError {
    #[error("app `{0}` is already instrumented")]
    AlreadyInstrumented(String),
    #[error("link source {0} does not exist in the corpus")]
    MissingStmt(String),
    #[error("link source {0} is not an ICC call")]
    NotIcc(String),
    #[error("link from {from} targets `{to}`, which is not in the same model (combine the apps first)")]
    TargetNotInModel { from: String, to: String },
    #[error("link from {from} targets `{to}`, which is not an analyzable component")]
    BadTarget { from: String, to: String },
    #[error("`{0}` is a provider; providers get no driver")]
    ProviderDriver(String),
    #[error("`{0}` is not a component")]
    NotAComponent(String),
    #[error("`{unit}` already defines `{method}`, which instrumentation needs to synthesize")]
    NameClash { unit: String, method: String },
}

/// Renumbers the statements of a synthetic method by position.
fn assign_synthetic_ids(unit: &QualName, m: &mut Method) {
    for (bi, b) in m.blocks.iter_mut().enumerate() {
        for (si, s) in b.stmts.iter_mut().enumerate() {
            s.id = StmtId {
                unit: unit.clone(),
                method: m.name.clone(),
                synthetic: true,
                block: bi as u32,
                index: si as u32,
            };
        }
    }
}

fn syn_method(unit: &QualName, name: &str, params: &[&str], blocks: Vec<Block>) -> Method {
    let mut m = Method {
        name: name.to_owned(),
        role: MethodRole::Helper,
        params: params.iter().map(|p| p.to_string()).collect(),
        blocks,
        entry: 0,
        synthetic: true,
        pos: Pos::default(),
    };
    assign_synthetic_ids(unit, &mut m);
    m
}

fn store_method(unit: &QualName, name: &str, field: &str) -> Method {
    syn_method(
        unit,
        name,
        &["i"],
        vec![block(
            "entry",
            vec![syn_stmt(StmtKind::FieldStore {
                obj: "this".into(),
                field: field.into(),
                value: "i".into(),
            })],
            Terminator::Return(None),
        )],
    )
}

fn load_method(unit: &QualName, name: &str, field: &str) -> Method {
    syn_method(
        unit,
        name,
        &[],
        vec![block(
            "entry",
            vec![syn_stmt(StmtKind::FieldLoad {
                dst: "r".into(),
                obj: "this".into(),
                field: field.into(),
            })],
            Terminator::Return(Some("r".into())),
        )],
    )
}

fn call(dst: Option<&str>, receiver: Option<&str>, owner: Option<String>, method: &str, args: &[&str]) -> StmtKind {
    StmtKind::Call(Call {
        dst: dst.map(str::to_owned),
        receiver: receiver.map(str::to_owned),
        owner,
        method: method.to_owned(),
        args: args.iter().map(|a| a.to_string()).collect(),
    })
}

/// How a unit in app `from_app` refers to `name`.
fn unit_ref(name: &QualName, from_app: &str) -> String {
    if name.app == from_app {
        name.local.clone()
    } else {
        name.to_string()
    }
}

fn redirect_method(helper: &QualName, n: usize, link: &IccLink) -> Method {
    let t = unit_ref(&link.to, &helper.app);
    let mut stmts = vec![
        syn_stmt(StmtKind::NewObj {
            dst: "t".into(),
            class: t.clone(),
        }),
        syn_stmt(call(None, Some("t"), Some(t.clone()), "init", &["i"])),
        syn_stmt(call(None, Some("t"), Some(t.clone()), DUMMY_MAIN, &[])),
    ];
    let params: &[&str] = if link.kind.is_for_result() {
        stmts.push(syn_stmt(call(Some("r"), Some("t"), Some(t), "getIntentFAR", &[])));
        stmts.push(syn_stmt(call(None, Some("caller"), None, "onActivityResult", &["r"])));
        &["caller", "i"]
    } else {
        &["i"]
    };
    syn_method(
        helper,
        &format!("redirect{n}"),
        params,
        vec![block("entry", stmts, Terminator::Return(None))],
    )
}

fn add_method(unit: &mut Unit, m: Method) -> Result<(), InstrumentError> {
    if unit.method(&m.name).is_some() {
        return Err(InstrumentError::NameClash {
            unit: unit.name.to_string(),
            method: m.name,
        });
    }
    unit.methods.push(m);
    Ok(())
}

/// One planned rewrite of an ICC statement.
struct Site {
    /// (redirect number, link) for every link from this statement.
    redirects: Vec<(usize, IccLink)>,
}

/// Instruments every model of the corpus against `links`. Input models are
/// not modified.
pub fn instrument(corpus: &[AppModel], links: &[IccLink]) -> Result<Vec<AppModel>, InstrumentError> {
    corpus.iter().map(|m| instrument_app(m, links)).collect()
}

/// Instruments one model with the links whose source lies inside it.
pub fn instrument_app(model: &AppModel, links: &[IccLink]) -> Result<AppModel, InstrumentError> {
    if model.is_instrumented() {
        return Err(InstrumentError::AlreadyInstrumented(model.app_id.clone()));
    }
    let origin: BTreeSet<&str> = model.units.iter().map(|u| u.name.app.as_str()).collect();
    let index = crate::ir::StmtIndex::build(model);

    let mut mine: Vec<&IccLink> = links.iter().filter(|l| origin.contains(l.from.unit.app.as_str())).collect();
    mine.sort_by(|a, b| (&a.from, &a.to).cmp(&(&b.from, &b.to)));
    mine.dedup();

    // Validate links and number the redirects per origin app.
    let mut per_app: BTreeMap<String, Vec<(usize, IccLink)>> = BTreeMap::new();
    let mut sites: BTreeMap<StmtId, Site> = BTreeMap::new();
    let mut targets: BTreeMap<QualName, bool> = BTreeMap::new();
    for l in mine {
        let Some(loc) = index.get(&l.from) else {
            return Err(InstrumentError::MissingStmt(l.from.to_string()));
        };
        if !matches!(loc.stmt(model).kind, StmtKind::Icc { .. }) {
            return Err(InstrumentError::NotIcc(l.from.to_string()));
        }
        let Some(target) = model.unit(&l.to) else {
            return Err(InstrumentError::TargetNotInModel {
                from: l.from.to_string(),
                to: l.to.to_string(),
            });
        };
        match target.component_kind() {
            None | Some(ComponentKind::Provider) => {
                return Err(InstrumentError::BadTarget {
                    from: l.from.to_string(),
                    to: l.to.to_string(),
                })
            }
            Some(_) => {}
        }
        let list = per_app.entry(l.from.unit.app.clone()).or_default();
        let n = list.len();
        list.push((n, l.clone()));
        sites
            .entry(l.from.clone())
            .or_insert(Site { redirects: vec![] })
            .redirects
            .push((n, l.clone()));
        *targets.entry(l.to.clone()).or_insert(false) |= l.kind.is_for_result();
    }

    let mut out = model.clone();

    // Rewrite call sites.
    for unit in &mut out.units {
        let helper_owner = HELPER_CLASS.to_owned();
        for m in &mut unit.methods {
            if m.stmts().any(|s| sites.contains_key(&s.id)) {
                rewrite_method(m, &sites, &helper_owner, &unit.name);
            }
        }
    }

    // Target-side accessors and statement rewrites.
    for (name, for_result) in &targets {
        let unit = out
            .units
            .iter_mut()
            .find(|u| &u.name == name)
            .expect("target checked above");
        for m in &mut unit.methods {
            for b in &mut m.blocks {
                for s in &mut b.stmts {
                    match &s.kind {
                        StmtKind::GetIntent { dst } => {
                            s.kind = call(Some(dst), None, None, "getIntent", &[]);
                        }
                        StmtKind::SetResult { intent } if *for_result => {
                            s.kind = call(None, None, None, "setResult", &[intent]);
                        }
                        _ => {}
                    }
                }
            }
        }
        add_method(unit, store_method(name, "init", INTENT_FIELD))?;
        add_method(unit, load_method(name, "getIntent", INTENT_FIELD))?;
        if *for_result {
            add_method(unit, store_method(name, "setResult", RESULT_FIELD))?;
            add_method(unit, load_method(name, "getIntentFAR", RESULT_FIELD))?;
        }
    }

    // Lifecycle drivers.
    for unit in &mut out.units {
        match unit.component_kind() {
            None | Some(ComponentKind::Provider) => {}
            Some(_) => {
                let d = synthesize_dummy_main(unit)?;
                add_method(unit, d)?;
            }
        }
    }

    // Helper classes, one per origin app with links.
    for (app, redirects) in per_app {
        let name = QualName::new(app, HELPER_CLASS);
        if out.unit(&name).is_some() {
            return Err(InstrumentError::NameClash {
                unit: name.to_string(),
                method: String::new(),
            });
        }
        let methods = redirects.iter().map(|(n, l)| redirect_method(&name, *n, l)).collect();
        out.units.push(Unit {
            name,
            kind: UnitKind::Class,
            filters: vec![],
            methods,
            synthetic: true,
            pos: Pos::default(),
        });
    }
    Ok(out)
}

/// Replaces linked ICC statements of `m` by redirect calls; a statement
/// with several links becomes a nondeterministic branch over the calls.
fn rewrite_method(m: &mut Method, sites: &BTreeMap<StmtId, Site>, helper: &str, unit: &QualName) {
    let old = std::mem::take(&mut m.blocks);
    let mut new_blocks: Vec<Block> = Vec::new();
    // head[i] = index of the first new block of old block i.
    let mut head = Vec::with_capacity(old.len());
    // (new block, old terminator) pairs to remap afterwards.
    let mut pending_terms: Vec<usize> = Vec::new();

    for b in old {
        head.push(new_blocks.len());
        let mut cur = Block {
            label: b.label.clone(),
            stmts: vec![],
            term: Terminator::Fallthrough,
            pos: b.pos,
        };
        for s in b.stmts {
            let Some(site) = sites.get(&s.id) else {
                cur.stmts.push(s);
                continue;
            };
            let StmtKind::Icc { kind, intent, caller } = &s.kind else {
                cur.stmts.push(s);
                continue;
            };
            let args: Vec<String> = if kind.is_for_result() {
                vec![caller.clone().unwrap_or_else(|| "this".into()), intent.clone()]
            } else {
                vec![intent.clone()]
            };
            let mk = |n: usize| {
                let mut st = syn_stmt(StmtKind::Call(Call {
                    dst: None,
                    receiver: None,
                    owner: Some(helper.to_owned()),
                    method: format!("redirect{n}"),
                    args: args.clone(),
                }));
                st.pos = s.pos;
                st
            };
            if site.redirects.len() == 1 {
                cur.stmts.push(mk(site.redirects[0].0));
                continue;
            }
            // Fan out: cur ends in a branch, one block per redirect, then a
            // continuation block holding the rest.
            let first = new_blocks.len() + 1;
            let k = site.redirects.len();
            let cont = first + k;
            cur.term = Terminator::Branch((first..cont).collect());
            let cont_label = format!("{}_after{}", b.label, site.redirects[0].0);
            new_blocks.push(cur);
            for (n, _) in &site.redirects {
                new_blocks.push(Block {
                    label: format!("{}_redirect{}", b.label, n),
                    stmts: vec![mk(*n)],
                    term: Terminator::Goto(cont),
                    pos: s.pos,
                });
            }
            cur = Block {
                label: cont_label,
                stmts: vec![],
                term: Terminator::Fallthrough,
                pos: s.pos,
            };
        }
        cur.term = b.term;
        pending_terms.push(new_blocks.len());
        new_blocks.push(cur);
    }
    let remap = |t: usize| head.get(t).copied().unwrap_or(t);
    for i in pending_terms {
        let t = &mut new_blocks[i].term;
        *t = match std::mem::replace(t, Terminator::Fallthrough) {
            Terminator::Goto(x) => Terminator::Goto(remap(x)),
            Terminator::Branch(xs) => Terminator::Branch(xs.into_iter().map(remap).collect()),
            other => other,
        };
    }
    // Positions of the new synthetic statements.
    for (bi, b) in new_blocks.iter_mut().enumerate() {
        for (si, s) in b.stmts.iter_mut().enumerate() {
            if s.id.synthetic && s.id.method.is_empty() {
                s.id = StmtId {
                    unit: unit.clone(),
                    method: m.name.clone(),
                    synthetic: true,
                    block: bi as u32,
                    index: si as u32,
                };
            }
        }
    }
    m.entry = remap(m.entry);
    m.blocks = new_blocks;
}
