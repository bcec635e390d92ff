//! Random well-formed programs for differential testing.
//!
//! Shape constraints keep the reference interpreter finite and the
//! programs inside the fragment the analysis models exactly:
//! components form a DAG (ICC only targets later components), methods are
//! loop-free, intents are built in straight-line groups from literals,
//! `onActivityResult` never sends intents and helpers are leaves.

use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Clone, Copy, Debug)]
pub struct GenConfig {
    pub max_stmts: usize,
    pub max_components: usize,
    pub max_apps: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_stmts: 60,
            max_components: 4,
            max_apps: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Activity,
    Service,
    Receiver,
    Provider,
}

#[derive(Clone, Debug)]
struct Comp {
    app: usize,
    name: String,
    kind: Kind,
    main: bool,
    action: Option<String>,
    category: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Program {
    /// (app id, source text)
    pub apps: Vec<(String, String)>,
    pub stmts: usize,
    pub components: usize,
}

pub const APP_IDS: [&str; 2] = ["GA", "GB"];
const DATA: [&str; 4] = ["d0", "d1", "d2", "d3"];
const FIELDS: [&str; 2] = ["f0", "f1"];
const KEYS: [&str; 3] = ["k0", "k1", "k2"];

#[derive(Clone, Copy, PartialEq, Eq)]
enum Ctx {
    Lifecycle,
    Callback,
    OnResult,
    Helper,
    Listener,
}

#[derive(Default)]
struct Body {
    lines: Vec<String>,
    defined: Vec<String>,
    intents: usize,
    labels: usize,
    got_intent: bool,
}

struct Gen<R: Rng> {
    rng: R,
    budget: usize,
    used: usize,
    comps: Vec<Comp>,
    helper: Vec<bool>,
    lib: Vec<bool>,
    listener: bool,
}

impl<R: Rng> Gen<R> {
    fn emit(&mut self, b: &mut Body, s: String) {
        self.budget -= 1;
        self.used += 1;
        b.lines.push(format!("      {s}"));
    }

    fn pick<'x, T>(&mut self, xs: &'x [T]) -> &'x T {
        xs.choose(&mut self.rng).expect("non-empty choice")
    }

    fn fresh(&mut self, b: &mut Body) -> String {
        let v = self.pick(&DATA).to_string();
        if !b.defined.contains(&v) {
            b.defined.push(v.clone());
        }
        v
    }

    fn source(&mut self, b: &mut Body) -> Option<String> {
        if self.budget == 0 {
            return None;
        }
        let name = *self.pick(&["getDeviceId", "getSimSerialNumber", "getDeviceId", "getTime"]);
        let v = self.fresh(b);
        self.emit(b, format!("{v} = source {name}"));
        Some(v)
    }

    /// A readable data variable, generating a source if none exists yet.
    fn data(&mut self, b: &mut Body) -> Option<String> {
        if b.defined.is_empty() {
            return self.source(b);
        }
        Some(self.pick(&b.defined.clone()).clone())
    }

    /// A straight-line intent group ending in an ICC call from component
    /// `from`.
    fn intent_group(&mut self, b: &mut Body, from: usize, caller: Option<&str>) {
        let targets: Vec<usize> = (from + 1..self.comps.len()).collect();
        if targets.is_empty() || self.budget < 6 {
            return;
        }
        let t = *self.pick(&targets);
        let c = self.comps[t].clone();
        let iv = format!("i{}", b.intents);
        b.intents += 1;
        self.emit(b, format!("{iv} = new_intent"));
        let implicit = c.action.is_some() && self.rng.gen_bool(0.6);
        if implicit {
            let act = if self.rng.gen_bool(0.1) { "act.none".to_owned() } else { c.action.clone().unwrap() };
            self.emit(b, format!("set_action {iv} \"{act}\""));
            if self.rng.gen_bool(0.3) {
                let cat = match (&c.category, self.rng.gen_bool(0.7)) {
                    (Some(cat), true) => cat.clone(),
                    _ => "cat.zz".to_owned(),
                };
                self.emit(b, format!("set_category {iv} \"{cat}\""));
            }
        } else if self.rng.gen_bool(0.05) {
            self.emit(b, format!("set_action {iv} \"act.none\""));
        } else {
            self.emit(b, format!("set_target {iv} \"{}/{}\"", APP_IDS[c.app], c.name));
        }
        for _ in 0..self.rng.gen_range(1..=2) {
            if self.budget < 3 {
                break;
            }
            let Some(d) = self.data(b) else { break };
            let k = *self.pick(&KEYS[..2]);
            self.emit(b, format!("put_extra {iv} \"{k}\" {d}"));
        }
        let kind = match c.kind {
            Kind::Activity => *self.pick(&["start_activity", "start_activity_for_result"]),
            Kind::Service => *self.pick(&["start_service", "bind_service"]),
            Kind::Receiver => "send_broadcast",
            Kind::Provider => *self.pick(&["provider_query", "provider_insert"]),
        };
        match caller {
            Some(c) => self.emit(b, format!("icc {kind} {iv} from {c}")),
            None => self.emit(b, format!("icc {kind} {iv}")),
        }
    }

    fn stmt(&mut self, b: &mut Body, comp: usize, ctx: Ctx, intent_param: Option<&str>) {
        let in_comp = !matches!(ctx, Ctx::Listener);
        let roll = self.rng.gen_range(0..100);
        match roll {
            0..=9 => {
                self.source(b);
            }
            10..=15 => {
                let v = self.fresh(b);
                self.emit(b, format!("{v} = \"c\""));
            }
            16..=24 => {
                if let Some(s) = self.data(b) {
                    if self.budget > 0 {
                        let v = self.fresh(b);
                        self.emit(b, format!("{v} = {s}"));
                    }
                }
            }
            25..=36 => {
                if let Some(s) = self.data(b) {
                    if self.budget > 0 {
                        let name = *self.pick(&["log", "sendTextMessage", "toast"]);
                        self.emit(b, format!("sink {name} {s}"));
                    }
                }
            }
            37..=44 => {
                let f = *self.pick(&FIELDS);
                if let Some(s) = self.data(b) {
                    if self.budget > 0 {
                        self.emit(b, format!("this.{f} = {s}"));
                    }
                }
            }
            45..=51 => {
                let f = *self.pick(&FIELDS);
                let v = self.fresh(b);
                self.emit(b, format!("{v} = this.{f}"));
            }
            52..=56 if in_comp && ctx != Ctx::Helper && self.helper[comp] => {
                if let Some(s) = self.data(b) {
                    if self.budget > 0 {
                        let v = self.fresh(b);
                        self.emit(b, format!("{v} = call h0({s})"));
                    }
                }
            }
            57..=60 if self.lib[self.comps[comp].app] => {
                if let Some(s) = self.data(b) {
                    if self.budget > 0 {
                        let m = *self.pick(&["pass", "wipe"]);
                        let v = self.fresh(b);
                        self.emit(b, format!("{v} = call Lib.{m}({s})"));
                    }
                }
            }
            61..=72 if in_comp && ctx != Ctx::Helper => {
                let src = match intent_param {
                    Some(p) => p.to_owned(),
                    None => {
                        if !b.got_intent {
                            self.emit(b, "g = get_intent".to_owned());
                            b.got_intent = true;
                        }
                        "g".to_owned()
                    }
                };
                if self.budget > 0 {
                    let k = if self.rng.gen_bool(0.9) { *self.pick(&KEYS[..2]) } else { KEYS[2] };
                    let v = self.fresh(b);
                    self.emit(b, format!("{v} = get_extra {src} \"{k}\""));
                    if self.budget > 0 && self.rng.gen_bool(0.5) {
                        self.emit(b, format!("sink log {v}"));
                    }
                }
            }
            73..=87 if matches!(ctx, Ctx::Lifecycle | Ctx::Callback) => self.intent_group(b, comp, None),
            73..=87 if ctx == Ctx::Listener => self.intent_group(b, 0, Some("act")),
            88..=96
                if matches!(ctx, Ctx::Lifecycle | Ctx::Callback | Ctx::OnResult)
                    && self.comps[comp].kind == Kind::Activity
                    && self.budget >= 4 =>
            {
                let d = if self.rng.gen_bool(0.5) { self.source(b) } else { self.data(b) };
                let Some(d) = d else { return };
                let r = format!("r{}", b.intents);
                b.intents += 1;
                let k = *self.pick(&KEYS[..2]);
                self.emit(b, format!("{r} = new_intent"));
                self.emit(b, format!("put_extra {r} \"{k}\" {d}"));
                self.emit(b, format!("set_result {r}"));
            }
            97..=99 if comp == 0 && self.listener && matches!(ctx, Ctx::Lifecycle | Ctx::Callback) && self.budget >= 2 => {
                self.emit(b, "l = new L".to_owned());
                self.emit(b, "call l->L.go(this)".to_owned());
            }
            _ => {}
        }
    }

    fn stmts(&mut self, b: &mut Body, n: usize, comp: usize, ctx: Ctx, ip: Option<&str>) {
        for _ in 0..n {
            if self.budget > 0 {
                self.stmt(b, comp, ctx, ip);
            }
        }
    }

    fn segment(&mut self, b: &mut Body, comp: usize, ctx: Ctx, ip: Option<&str>) {
        if self.rng.gen_bool(0.3) {
            let n = b.labels;
            b.labels += 1;
            b.lines.push(format!("      branch L{n}a L{n}b"));
            b.lines.push(format!("    L{n}a:"));
            let k = self.rng.gen_range(0..=2);
            self.stmts(b, k, comp, ctx, ip);
            b.lines.push(format!("      goto L{n}j"));
            b.lines.push(format!("    L{n}b:"));
            let k = self.rng.gen_range(0..=2);
            self.stmts(b, k, comp, ctx, ip);
            b.lines.push(format!("    L{n}j:"));
        } else {
            let k = self.rng.gen_range(1..=3);
            self.stmts(b, k, comp, ctx, ip);
        }
    }

    fn method(&mut self, out: &mut Vec<String>, head: &str, params: &[&str], comp: usize, ctx: Ctx, intent_param: Option<&str>) {
        let mut b = Body {
            defined: params
                .iter()
                .filter(|p| Some(**p) != intent_param && **p != "act")
                .map(|p| p.to_string())
                .collect(),
            ..Body::default()
        };
        let segs = self.rng.gen_range(1..=3);
        for _ in 0..segs {
            self.segment(&mut b, comp, ctx, intent_param);
        }
        out.push(format!("    {head}({}) {{", params.join(", ")));
        out.append(&mut b.lines);
        if ctx == Ctx::Helper {
            let r = b.defined.first().cloned().unwrap_or_else(|| "x".to_owned());
            out.push(format!("      return {r}"));
        }
        out.push("    }".to_owned());
    }

    fn component(&mut self, out: &mut Vec<String>, k: usize) {
        let c = self.comps[k].clone();
        let kw = match c.kind {
            Kind::Activity => "activity",
            Kind::Service => "service",
            Kind::Receiver => "receiver",
            Kind::Provider => "provider",
        };
        out.push(format!("  component {kw} {} {{", c.name));
        if c.main {
            out.push("    filter { action \"android.intent.action.MAIN\" }".to_owned());
        } else if let Some(a) = &c.action {
            match &c.category {
                Some(cat) => out.push(format!("    filter {{ action \"{a}\"; category \"{cat}\" }}")),
                None => out.push(format!("    filter {{ action \"{a}\" }}")),
            }
        }
        let slots: &[(&str, &[&str], f64)] = match c.kind {
            Kind::Activity => &[
                ("onCreate", &[], 0.9),
                ("onStart", &[], 0.15),
                ("onResume", &[], 0.2),
                ("onPause", &[], 0.15),
                ("onStop", &[], 0.1),
                ("onDestroy", &[], 0.25),
                ("onActivityResult", &["data"], 0.6),
            ],
            Kind::Service => &[
                ("onCreate", &[], 0.3),
                ("onStartCommand", &["intent"], 0.7),
                ("onBind", &["intent"], 0.4),
                ("onDestroy", &[], 0.3),
            ],
            Kind::Receiver => &[("onReceive", &["intent"], 0.95)],
            Kind::Provider => &[("onQuery", &["values"], 0.9)],
        };
        for (name, params, p) in slots {
            if self.budget == 0 || !self.rng.gen_bool(*p) {
                continue;
            }
            let (ctx, ip) = match *name {
                "onActivityResult" => (Ctx::OnResult, Some("data")),
                "onStartCommand" | "onBind" | "onReceive" => (Ctx::Lifecycle, Some("intent")),
                "onQuery" => (Ctx::OnResult, None),
                _ => (Ctx::Lifecycle, None),
            };
            self.method(out, &format!("method {name}"), params, k, ctx, ip);
        }
        if c.kind != Kind::Provider {
            for n in 0..self.rng.gen_range(0..=2) {
                if self.budget > 0 {
                    self.method(out, &format!("callback cb{n}"), &["v"], k, Ctx::Callback, None);
                }
            }
        }
        if self.helper[k] {
            self.method(out, "method h0", &["x"], k, Ctx::Helper, None);
        }
        out.push("  }".to_owned());
    }
}

/// Generates one random program; the same rng state gives the same text.
pub fn gen_program<R: Rng>(rng: R, cfg: GenConfig) -> Program {
    let mut g = Gen {
        rng,
        budget: cfg.max_stmts,
        used: 0,
        comps: Vec::new(),
        helper: Vec::new(),
        lib: Vec::new(),
        listener: false,
    };
    let n_apps = g.rng.gen_range(1..=cfg.max_apps.min(APP_IDS.len()));
    let n_comps = g.rng.gen_range(n_apps.max(1)..=cfg.max_components.max(n_apps));
    for k in 0..n_comps {
        let app = if n_apps == 1 || k == 0 {
            0
        } else if k == n_comps - 1 && !g.comps.iter().any(|c| c.app == 1) {
            1
        } else {
            g.rng.gen_range(0..n_apps)
        };
        let first_of_app = !g.comps.iter().any(|c| c.app == app);
        let kind = if k == 0 {
            Kind::Activity
        } else {
            match g.rng.gen_range(0..100) {
                0..=49 => Kind::Activity,
                50..=74 => Kind::Service,
                75..=94 => Kind::Receiver,
                _ => Kind::Provider,
            }
        };
        let main = kind == Kind::Activity && (k == 0 || (first_of_app && g.rng.gen_bool(0.5)));
        let action = (!main && kind != Kind::Provider && g.rng.gen_bool(0.8)).then(|| format!("act.{k}"));
        let category = (action.is_some() && g.rng.gen_bool(0.3)).then(|| format!("cat.{k}"));
        g.comps.push(Comp {
            app,
            name: format!("C{k}"),
            kind,
            main,
            action,
            category,
        });
        let h = kind != Kind::Provider && g.rng.gen_bool(0.3);
        g.helper.push(h);
    }
    g.lib = (0..n_apps).map(|_| g.rng.gen_bool(0.3)).collect();
    g.listener = n_comps > 1 && g.rng.gen_bool(0.25);

    let mut texts: Vec<Vec<String>> = (0..n_apps).map(|a| vec![format!("app \"{}\" {{", APP_IDS[a])]).collect();
    if g.listener {
        let mut out = vec!["  class L {".to_owned()];
        g.method(&mut out, "method go", &["act"], 0, Ctx::Listener, None);
        out.push("  }".to_owned());
        texts[0].extend(out);
    }
    for (a, text) in texts.iter_mut().enumerate() {
        if g.lib[a] {
            g.used += 2;
            text.extend(
                [
                    "  class Lib {",
                    "    method pass(x) {",
                    "      y = x",
                    "      return y",
                    "    }",
                    "    method wipe(x) {",
                    "      y = \"\"",
                    "      return y",
                    "    }",
                    "  }",
                ]
                .map(str::to_owned),
            );
            g.budget = g.budget.saturating_sub(2);
        }
    }
    for k in 0..n_comps {
        // Later components get their share of the budget too.
        let total = g.budget;
        let share = total / (n_comps - k);
        g.budget = share;
        let mut out = Vec::new();
        g.component(&mut out, k);
        g.budget += total - share;
        texts[g.comps[k].app].extend(out);
    }
    let apps = texts
        .into_iter()
        .enumerate()
        .map(|(a, mut lines)| {
            lines.push("}".to_owned());
            (APP_IDS[a].to_owned(), lines.join("\n") + "\n")
        })
        .collect();
    Program {
        apps,
        stmts: g.used,
        components: n_comps,
    }
}
