//! The end-to-end pipeline: links, plan, and per-set taint analysis.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::combine::{build_iac_graph, combine, split_graph};
use crate::diag::Diagnostic;
use crate::icc::{content_hash, match_links, resolve_intent_values, IccLink, LinkDb, StoreOutcome};
use crate::instrument::instrument_app;
use crate::ir::{AppModel, StmtId, StmtIndex, StmtKind};
use crate::parser::{collect_cir, parse_app_named};
use crate::taint::{build_cfg, extract_paths, propagate, SourceSinkConfig, TaintedPath};

/// A parsed app together with the text it came from.
#[derive(Clone, Debug)]
pub struct CorpusApp {
    pub model: AppModel,
    pub text: String,
}

/// Parses every `.cir` file below `dir`, sorted by path. Files that fail to
/// parse, or repeat an earlier app id, are reported and skipped.
pub fn load_corpus(dir: &Path) -> (Vec<CorpusApp>, Vec<Diagnostic>) {
    let mut files = Vec::new();
    collect_cir(dir, &mut files);
    files.sort();
    let mut apps: Vec<CorpusApp> = Vec::new();
    let mut diags = Vec::new();
    if files.is_empty() && !dir.exists() {
        diags.push(Diagnostic::error("no such file or directory", 0, 0).with_file(Some(&dir.display().to_string())));
    }
    for f in files {
        let name = f.display().to_string();
        let text = match std::fs::read(&f) {
            Ok(b) => match String::from_utf8(b) {
                Ok(t) => t,
                Err(e) => {
                    let line = 1 + e.as_bytes()[..e.utf8_error().valid_up_to()].iter().filter(|b| **b == b'\n').count();
                    diags.push(Diagnostic::error("input is not valid UTF-8", line as u32, 1).with_file(Some(&name)));
                    continue;
                }
            },
            Err(e) => {
                diags.push(Diagnostic::error(format!("cannot read file: {e}"), 0, 0).with_file(Some(&name)));
                continue;
            }
        };
        match parse_app_named(&text, Some(&name)) {
            Ok(model) => {
                if apps.iter().any(|a| a.model.app_id == model.app_id) {
                    diags.push(
                        Diagnostic::error(format!("app `{}` is defined more than once", model.app_id), 1, 1)
                            .with_file(Some(&name)),
                    );
                } else {
                    apps.push(CorpusApp { model, text });
                }
            }
            Err(d) => diags.extend(d),
        }
    }
    (apps, diags)
}

/// Brings the link database up to date with `apps`: only apps whose text
/// changed since the last run are re-resolved (against the whole corpus).
pub fn refresh_links(db: &mut LinkDb, apps: &[CorpusApp]) -> (Vec<(String, StoreOutcome)>, Vec<Diagnostic>) {
    let models: Vec<&AppModel> = apps.iter().map(|a| &a.model).collect();
    let stale: Vec<(&CorpusApp, String)> = apps
        .iter()
        .map(|a| (a, content_hash(&a.text)))
        .filter(|(a, h)| !db.is_fresh(&a.model.app_id, h))
        .collect();
    let mut values = BTreeMap::new();
    for (a, _) in &stale {
        values.extend(resolve_intent_values(&a.model));
    }
    let (links, diags) = if stale.is_empty() {
        (vec![], vec![])
    } else {
        match_links(&values, &models)
    };
    let mut outcomes = Vec::new();
    for a in apps {
        let id = &a.model.app_id;
        let outcome = match stale.iter().find(|(s, _)| &s.model.app_id == id) {
            Some((_, h)) => db.store_app(id, h, &links),
            None => StoreOutcome::Unchanged,
        };
        outcomes.push((id.clone(), outcome));
    }
    (outcomes, diags)
}

/// Stored links whose both ends belong to `apps`.
pub fn corpus_links(db: &LinkDb, apps: &[&AppModel]) -> Vec<IccLink> {
    let ids: BTreeSet<&str> = apps.iter().map(|a| a.app_id.as_str()).collect();
    db.links()
        .into_iter()
        .filter(|l| ids.contains(l.from.unit.app.as_str()) && ids.contains(l.to.app.as_str()))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnalysisOptions {
    /// Longest app chain analyzed together.
    pub max_len: usize,
    /// Worker threads; 0 picks the number of CPUs.
    pub jobs: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions { max_len: 2, jobs: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ReportedPath {
    pub path: TaintedPath,
    pub source_name: String,
    pub sink_name: String,
    pub source_tag: Option<String>,
    pub sink_tag: Option<String>,
}

impl ReportedPath {
    pub fn key(&self) -> (&StmtId, &StmtId) {
        (&self.path.source, &self.path.sink)
    }
}

#[derive(Clone, Debug)]
pub struct SetTiming {
    pub apps: Vec<String>,
    pub elapsed: Duration,
}

#[derive(Clone, Debug, Default)]
pub struct AnalysisReport {
    pub paths: Vec<ReportedPath>,
    pub plan: Vec<Vec<String>>,
    /// Wall time per analyzed set; kept out of the printed report so
    /// that it stays reproducible.
    pub timings: Vec<SetTiming>,
    pub diags: Vec<Diagnostic>,
}

impl AnalysisReport {
    pub fn pairs(&self) -> BTreeSet<(StmtId, StmtId)> {
        self.paths.iter().map(|p| (p.path.source.clone(), p.path.sink.clone())).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} tainted path(s)", self.paths.len());
        for p in &self.paths {
            let tag = |t: &Option<String>| t.as_ref().map(|t| format!(" @{t}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "[{}] {}({}){} -> {}({}){}  apps {}",
                p.path.class,
                p.source_name,
                p.path.source,
                tag(&p.source_tag),
                p.sink_name,
                p.path.sink,
                tag(&p.sink_tag),
                p.path.apps().join(",")
            );
            for s in &p.path.stmts {
                let _ = writeln!(out, "    {s}");
            }
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for p in &self.paths {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                p.path.class,
                p.path.source,
                p.path.sink,
                p.path.stmts.len(),
                p.path.apps().join(",")
            );
        }
        out
    }
}

/// Analyzes one set of apps merged into a single model.
pub fn analyze_set(
    apps: &[&AppModel],
    links: &[IccLink],
    config: &SourceSinkConfig,
) -> (Vec<ReportedPath>, Vec<Diagnostic>) {
    let owned: Vec<AppModel> = apps.iter().map(|a| (*a).clone()).collect();
    let merged = match combine(&owned) {
        Ok(m) => m,
        Err(e) => return (vec![], vec![Diagnostic::error(e.to_string(), 0, 0)]),
    };
    let ids: BTreeSet<&str> = apps.iter().flat_map(|a| a.units.iter().map(|u| u.name.app.as_str())).collect();
    let local: Vec<IccLink> = links
        .iter()
        .filter(|l| ids.contains(l.from.unit.app.as_str()) && ids.contains(l.to.app.as_str()))
        .cloned()
        .collect();
    let inst = match instrument_app(&merged, &local) {
        Ok(m) => m,
        Err(e) => {
            return (
                vec![],
                vec![Diagnostic::error(format!("{}: {e}", merged.app_id), 0, 0).with_file(merged.source_name.as_deref())],
            )
        }
    };
    let cfg = build_cfg(&inst);
    let prop = propagate(&cfg, config);
    let index = StmtIndex::build(&inst);
    let describe = |id: &StmtId| {
        let s = index.get(id).map(|l| l.stmt(&inst));
        let name = match s.map(|s| &s.kind) {
            Some(StmtKind::Source { name, .. }) | Some(StmtKind::Sink { name, .. }) => name.clone(),
            _ => String::new(),
        };
        (name, s.and_then(|s| s.tag.clone()))
    };
    let paths = extract_paths(&prop)
        .into_iter()
        .map(|path| {
            let (source_name, source_tag) = describe(&path.source);
            let (sink_name, sink_tag) = describe(&path.sink);
            ReportedPath {
                path,
                source_name,
                sink_name,
                source_tag,
                sink_tag,
            }
        })
        .collect();
    (paths, cfg.diags.clone())
}

/// Plans the app sets, analyzes them concurrently and merges the results.
/// A pair found in several sets is reported once, with the witness from
/// the smallest set.
pub fn analyze_models(
    apps: &[AppModel],
    links: &[IccLink],
    config: &SourceSinkConfig,
    opts: AnalysisOptions,
) -> AnalysisReport {
    let mut report = AnalysisReport::default();
    if apps.is_empty() {
        return report;
    }
    let refs: Vec<&AppModel> = apps.iter().collect();
    let graph = build_iac_graph(&refs, links);
    let plan = match split_graph(&graph, opts.max_len) {
        Ok(p) => p,
        Err(e) => {
            report.diags.push(Diagnostic::error(e.to_string(), 0, 0));
            return report;
        }
    };
    let mut plan: Vec<Vec<String>> = plan.into_iter().map(|s| s.into_iter().collect()).collect();
    plan.sort_by(|a, b| (a.len(), a).cmp(&(b.len(), b)));
    let by_id: BTreeMap<&str, &AppModel> = apps.iter().map(|a| (a.app_id.as_str(), a)).collect();

    let run = |set: &Vec<String>| {
        let members: Vec<&AppModel> = set.iter().map(|id| by_id[id.as_str()]).collect();
        let t = Instant::now();
        let (paths, diags) = analyze_set(&members, links, config);
        (paths, diags, t.elapsed())
    };
    let results: Vec<(Vec<ReportedPath>, Vec<Diagnostic>, Duration)> = match rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
    {
        Ok(pool) => pool.install(|| plan.par_iter().map(run).collect()),
        Err(_) => plan.iter().map(run).collect(),
    };

    let mut seen = BTreeSet::new();
    let mut diags = BTreeSet::new();
    for (set, (paths, d, elapsed)) in plan.iter().zip(results) {
        for p in paths {
            if seen.insert((p.path.source.clone(), p.path.sink.clone())) {
                report.paths.push(p);
            }
        }
        diags.extend(d);
        report.timings.push(SetTiming {
            apps: set.clone(),
            elapsed,
        });
    }
    report.paths.sort_by(|a, b| a.key().cmp(&b.key()));
    report.diags = diags.into_iter().collect();
    report.plan = plan;
    report
}

/// Loads a corpus directory, refreshes (or builds in memory) its links and
/// analyzes it. With `db`, the link database is updated on disk.
pub fn analyze_corpus(
    dir: &Path,
    db: Option<&Path>,
    config: &SourceSinkConfig,
    opts: AnalysisOptions,
) -> AnalysisReport {
    let (apps, mut diags) = load_corpus(dir);
    let mut store = match db {
        Some(p) => match LinkDb::load(p) {
            Ok(d) => d,
            Err(e) => {
                diags.push(Diagnostic::error(e.to_string(), 0, 0).with_file(Some(&p.display().to_string())));
                LinkDb::new()
            }
        },
        None => LinkDb::new(),
    };
    let (_, link_diags) = refresh_links(&mut store, &apps);
    diags.extend(link_diags);
    if let Some(p) = db {
        if let Err(e) = store.save(p) {
            diags.push(Diagnostic::error(e.to_string(), 0, 0).with_file(Some(&p.display().to_string())));
        }
    }
    let models: Vec<AppModel> = apps.into_iter().map(|a| a.model).collect();
    let refs: Vec<&AppModel> = models.iter().collect();
    let links = corpus_links(&store, &refs);
    let mut report = analyze_models(&models, &links, config, opts);
    diags.extend(report.diags);
    diags.sort();
    diags.dedup();
    report.diags = diags;
    report
}
