use crate::ir::{Block, Call, ComponentKind, Method, MethodRole, Pos, Stmt, StmtId, StmtKind, Terminator, Unit};

use super::InstrumentError;

pub const DUMMY_MAIN: &str = "dummyMain";
pub const INTENT_FIELD: &str = "intent_for_ipc";

/// Slots whose first parameter receives the intent that started the component.
const INTENT_SLOTS: &[&str] = &["onStartCommand", "onBind", "onReceive"];

pub(crate) fn syn_stmt(kind: StmtKind) -> Stmt {
    Stmt {
        id: StmtId {
            unit: crate::ir::QualName::new("", ""),
            method: String::new(),
            synthetic: true,
            block: 0,
            index: 0,
        },
        kind,
        tag: None,
        pos: Pos::default(),
    }
}

pub(crate) fn block(label: &str, stmts: Vec<Stmt>, term: Terminator) -> Block {
    Block {
        label: label.to_owned(),
        stmts,
        term,
        pos: Pos::default(),
    }
}

struct Builder {
    needs_none: bool,
}

impl Builder {
    /// Statements invoking `m` on the component itself.
    fn invoke(&mut self, m: &Method) -> Vec<Stmt> {
        let mut out = Vec::new();
        let mut args = Vec::new();
        for (k, _) in m.params.iter().enumerate() {
            if k == 0 && INTENT_SLOTS.contains(&m.name.as_str()) {
                out.push(syn_stmt(StmtKind::FieldLoad {
                    dst: "in".into(),
                    obj: "this".into(),
                    field: INTENT_FIELD.into(),
                }));
                args.push("in".to_owned());
            } else {
                self.needs_none = true;
                args.push("none".to_owned());
            }
        }
        out.push(syn_stmt(StmtKind::Call(Call {
            dst: None,
            receiver: None,
            owner: None,
            method: m.name.clone(),
            args,
        })));
        out
    }
}

/// Builds the lifecycle driver of a component: a nondeterministic state
/// machine over its lifecycle slots and callbacks. Missing slots are skipped.
pub fn synthesize_dummy_main(unit: &Unit) -> Result<Method, InstrumentError> {
    let kind = match unit.component_kind() {
        None => return Err(InstrumentError::NotAComponent(unit.name.to_string())),
        Some(ComponentKind::Provider) => {
            return Err(InstrumentError::ProviderDriver(unit.name.to_string()))
        }
        Some(k) => k,
    };
    let mut b = Builder { needs_none: false };
    let seq = |names: &[&str], b: &mut Builder| -> Vec<Stmt> {
        names
            .iter()
            .filter_map(|n| unit.lifecycle(n))
            .flat_map(|m| b.invoke(m))
            .collect()
    };

    // Prefix, optional two-way start choice (services), the callback loop,
    // and the suffix.
    type Shape<'m> = (Vec<Stmt>, Vec<Vec<Stmt>>, Vec<&'m Method>, Vec<Stmt>);
    let (pre, choice, loop_methods, post): Shape = match kind {
        ComponentKind::Activity => {
            let pre = seq(&["onCreate", "onStart", "onResume"], &mut b);
            let post = seq(&["onPause", "onStop", "onDestroy"], &mut b);
            let mut lm: Vec<&Method> = unit.callbacks().collect();
            lm.extend(unit.lifecycle("onActivityResult"));
            (pre, vec![], lm, post)
        }
        ComponentKind::Service => {
            let pre = seq(&["onCreate"], &mut b);
            let choice: Vec<Vec<Stmt>> = ["onStartCommand", "onBind"]
                .iter()
                .filter_map(|n| unit.lifecycle(n))
                .map(|m| b.invoke(m))
                .collect();
            let post = seq(&["onDestroy"], &mut b);
            (pre, choice, unit.callbacks().collect(), post)
        }
        ComponentKind::Receiver => {
            let pre = seq(&["onReceive"], &mut b);
            (pre, vec![], unit.callbacks().collect(), vec![])
        }
        ComponentKind::Provider => unreachable!(),
    };
    let cb_bodies: Vec<Vec<Stmt>> = loop_methods.iter().map(|m| b.invoke(m)).collect();

    let mut blocks: Vec<Block> = Vec::new();
    let mut entry = pre;
    if b.needs_none {
        entry.insert(
            0,
            syn_stmt(StmtKind::Const {
                dst: "none".into(),
                value: String::new(),
            }),
        );
    }
    match choice.len() {
        0 | 1 => {
            for c in choice {
                entry.extend(c);
            }
            blocks.push(block("entry", entry, Terminator::Fallthrough));
        }
        _ => {
            let n = choice.len();
            let targets: Vec<usize> = (1..=n).collect();
            blocks.push(block("entry", entry, Terminator::Branch(targets)));
            for (k, c) in choice.into_iter().enumerate() {
                blocks.push(block(&format!("start{k}"), c, Terminator::Goto(n + 1)));
            }
        }
    }
    if !cb_bodies.is_empty() {
        let head = blocks.len();
        let exit = head + 1 + cb_bodies.len();
        let mut targets: Vec<usize> = (head + 1..exit).collect();
        targets.push(exit);
        blocks.push(block("loop", vec![], Terminator::Branch(targets)));
        for (k, body) in cb_bodies.into_iter().enumerate() {
            blocks.push(block(&format!("cb{k}"), body, Terminator::Goto(head)));
        }
    }
    blocks.push(block("exit", post, Terminator::Return(None)));

    // Collapse the trivial entry/exit pair into one block.
    if blocks.len() == 2 && blocks[0].term == Terminator::Fallthrough {
        let exit = blocks.pop().expect("two blocks");
        blocks[0].stmts.extend(exit.stmts);
        blocks[0].term = Terminator::Return(None);
    }

    let mut m = Method {
        name: DUMMY_MAIN.into(),
        role: MethodRole::Helper,
        params: vec![],
        blocks,
        entry: 0,
        synthetic: true,
        pos: Pos::default(),
    };
    super::assign_synthetic_ids(&unit.name, &mut m);
    Ok(m)
}
