//! Benchmark harness: runs tagged test cases and scores them against
//! their ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_rational::Ratio;
use rayon::prelude::*;

use crate::analysis::{analyze_models, corpus_links, load_corpus, refresh_links, AnalysisOptions};
use crate::diag::Diagnostic;
use crate::icc::LinkDb;
use crate::ir::AppModel;
use crate::taint::SourceSinkConfig;

pub const TRUTH_FILE: &str = "truth";

/// Expected leaks of one case, as (source tag, sink tag) pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub leaks: BTreeSet<(String, String)>,
    pub no_leak_expected: bool,
}

impl GroundTruth {
    /// Lines are `leak <source-tag> <sink-tag>` or `no_leak`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<GroundTruth, String> {
        let mut gt = GroundTruth::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let w: Vec<&str> = line.split_whitespace().collect();
            match w.as_slice() {
                ["leak", src, sink] => {
                    if !gt.leaks.insert((src.to_string(), sink.to_string())) {
                        return Err(format!("line {}: duplicate leak {src} {sink}", n + 1));
                    }
                }
                ["no_leak"] => gt.no_leak_expected = true,
                _ => return Err(format!("line {}: expected `leak <source> <sink>` or `no_leak`", n + 1)),
            }
        }
        match (gt.no_leak_expected, gt.leaks.is_empty()) {
            (true, false) => Err("`no_leak` together with leak lines".into()),
            (false, true) => Err("no expectations (use `no_leak` for a leak-free case)".into()),
            _ => Ok(gt),
        }
    }
}

/// A leak as reported by the analysis, named by tags where available.
pub type TagPair = (String, String);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaseResult {
    /// Directory name, e.g. `01-icc-startActivity1`.
    pub dir: String,
    pub name: String,
    pub inter_app: bool,
    pub components: usize,
    pub apps: usize,
    pub hits: Vec<TagPair>,
    pub false_warnings: Vec<TagPair>,
    pub missed: Vec<TagPair>,
    /// Invalid cases are excluded from scoring.
    pub valid: bool,
    pub diags: Vec<Diagnostic>,
}

impl CaseResult {
    fn invalid(dir: String, name: String, inter_app: bool, diags: Vec<Diagnostic>) -> Self {
        CaseResult {
            dir,
            name,
            inter_app,
            components: 0,
            apps: 0,
            hits: vec![],
            false_warnings: vec![],
            missed: vec![],
            valid: false,
            diags,
        }
    }

    /// Table cell: one symbol per hit, false warning and missed leak.
    pub fn symbols(&self) -> String {
        let mut v = Vec::new();
        v.extend(std::iter::repeat_n("◦", self.hits.len()));
        v.extend(std::iter::repeat_n("⊛", self.false_warnings.len()));
        v.extend(std::iter::repeat_n("∗", self.missed.len()));
        v.join(" ")
    }
}

/// Splits `NN-group-name` into (inter_app, name).
fn case_name(dir: &str) -> (bool, String) {
    let mut parts = dir.splitn(3, '-');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(_), Some(group), Some(name)) => (group == "iac", name.to_owned()),
        _ => (false, dir.to_owned()),
    }
}

fn tag_counts(models: &[AppModel]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for s in models.iter().flat_map(|a| a.all_stmts()) {
        if let Some(t) = &s.tag {
            *m.entry(t.clone()).or_insert(0) += 1;
        }
    }
    m
}

pub fn run_case(case_dir: &Path, config: &SourceSinkConfig, opts: AnalysisOptions) -> CaseResult {
    let dir = case_dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let (inter_app, name) = case_name(&dir);
    let truth_path = case_dir.join(TRUTH_FILE);
    let truth_file = truth_path.display().to_string();
    let truth = match std::fs::read_to_string(&truth_path) {
        Ok(t) => GroundTruth::parse(&t),
        Err(e) => Err(format!("cannot read truth file: {e}")),
    };
    let truth = match truth {
        Ok(t) => t,
        Err(msg) => {
            let d = Diagnostic::error(msg, 0, 0).with_file(Some(&truth_file));
            return CaseResult::invalid(dir, name, inter_app, vec![d]);
        }
    };
    let (apps, mut diags) = load_corpus(case_dir);
    if apps.is_empty() {
        diags.push(Diagnostic::error("case has no app", 0, 0).with_file(Some(&case_dir.display().to_string())));
    }
    if diags.iter().any(Diagnostic::is_error) {
        return CaseResult::invalid(dir, name, inter_app, diags);
    }
    let models: Vec<AppModel> = apps.iter().map(|a| a.model.clone()).collect();
    let counts = tag_counts(&models);
    for (s, k) in &truth.leaks {
        for t in [s, k] {
            match counts.get(t) {
                Some(1) => {}
                Some(_) => diags.push(Diagnostic::error(format!("tag `{t}` is not unique"), 0, 0).with_file(Some(&truth_file))),
                None => diags.push(Diagnostic::error(format!("tag `{t}` not found"), 0, 0).with_file(Some(&truth_file))),
            }
        }
    }
    if diags.iter().any(Diagnostic::is_error) {
        return CaseResult::invalid(dir, name, inter_app, diags);
    }

    let mut db = LinkDb::new();
    let (_, link_diags) = refresh_links(&mut db, &apps);
    diags.extend(link_diags);
    let refs: Vec<&AppModel> = models.iter().collect();
    let links = corpus_links(&db, &refs);
    let report = analyze_models(&models, &links, config, opts);
    diags.extend(report.diags.iter().cloned());

    let reported: BTreeSet<TagPair> = report
        .paths
        .iter()
        .map(|p| {
            (
                p.source_tag.clone().unwrap_or_else(|| p.path.source.to_string()),
                p.sink_tag.clone().unwrap_or_else(|| p.path.sink.to_string()),
            )
        })
        .collect();
    let hits = reported.intersection(&truth.leaks).cloned().collect();
    let false_warnings = reported.difference(&truth.leaks).cloned().collect();
    let missed = truth.leaks.difference(&reported).cloned().collect();
    CaseResult {
        dir,
        name,
        inter_app,
        components: models.iter().map(|m| m.components().count()).sum(),
        apps: models.len(),
        hits,
        false_warnings,
        missed,
        valid: true,
        diags,
    }
}

/// A metric that may be undefined (zero denominator).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Metric(pub Option<Ratio<u64>>);

impl Metric {
    fn of(num: u64, den: u64) -> Metric {
        Metric((den != 0).then(|| Ratio::new(num, den)))
    }

    /// Rounds half up to `digits` decimals of `value * scale`.
    fn fixed(&self, scale: u64, digits: u32) -> Option<String> {
        let r = self.0?;
        let p = 10u64.pow(digits);
        let scaled = r * Ratio::from_integer(scale * p);
        let n = (scaled + Ratio::new(1, 2)).floor().to_integer();
        Some(format!("{}.{:0width$}", n / p, n % p, width = digits as usize))
    }

    pub fn percent(&self) -> String {
        self.fixed(100, 1).map_or("undefined".into(), |s| format!("{s}%"))
    }

    pub fn two_decimals(&self) -> String {
        self.fixed(1, 2).unwrap_or_else(|| "undefined".into())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchReport {
    pub cases: Vec<CaseResult>,
    pub hits: u64,
    pub false_warnings: u64,
    pub missed: u64,
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
}

/// Totals and metrics over the valid cases, folded in case order.
pub fn score(results: &[CaseResult]) -> BenchReport {
    let mut cases = results.to_vec();
    cases.sort_by(|a, b| a.dir.cmp(&b.dir));
    let valid = cases.iter().filter(|c| c.valid);
    let (mut h, mut f, mut m) = (0u64, 0u64, 0u64);
    for c in valid {
        h += c.hits.len() as u64;
        f += c.false_warnings.len() as u64;
        m += c.missed.len() as u64;
    }
    BenchReport {
        cases,
        hits: h,
        false_warnings: f,
        missed: m,
        precision: Metric::of(h, h + f),
        recall: Metric::of(h, h + m),
        f1: Metric::of(2 * h, 2 * h + f + m),
    }
}

/// Scores bare totals; handy for checking the formulas.
pub fn score_counts(hits: u64, false_warnings: u64, missed: u64) -> (Metric, Metric, Metric) {
    (
        Metric::of(hits, hits + false_warnings),
        Metric::of(hits, hits + missed),
        Metric::of(2 * hits, 2 * hits + false_warnings + missed),
    )
}

/// Case directories below `root` (those holding a truth file), sorted.
pub fn case_dirs(root: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(root)
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.join(TRUTH_FILE).exists())
        .collect();
    v.sort();
    v
}

/// Runs every case below `root` with up to `jobs` cases at a time.
pub fn run_bench(root: &Path, config: &SourceSinkConfig, jobs: usize) -> BenchReport {
    let dirs = case_dirs(root);
    let opts = AnalysisOptions { max_len: 2, jobs: 1 };
    let run = |d: &PathBuf| run_case(d, config, opts);
    let results: Vec<CaseResult> = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| dirs.par_iter().map(run).collect()),
        Err(_) => dirs.iter().map(run).collect(),
    };
    score(&results)
}

impl BenchReport {
    pub fn diags(&self) -> Vec<Diagnostic> {
        self.cases.iter().flat_map(|c| c.diags.iter().cloned()).collect()
    }

    pub fn to_text(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![("Test Case (C/A)".into(), "Result".into())];
        let push_group = |rows: &mut Vec<(String, String)>, title: &str, iac: bool| {
            let cases: Vec<&CaseResult> = self.cases.iter().filter(|c| c.inter_app == iac).collect();
            if cases.is_empty() {
                return;
            }
            rows.push((format!("-- {title} --"), String::new()));
            for c in cases {
                let cell = if c.valid { c.symbols() } else { "invalid".into() };
                rows.push((format!("{} ({}/{})", c.name, c.components, c.apps), cell));
            }
        };
        push_group(&mut rows, "Inter-Component Communication", false);
        push_group(&mut rows, "Inter-App Communication", true);
        rows.push(("-- Sum, Precision, Recall and F1 --".into(), String::new()));
        rows.push(("◦, higher is better".into(), self.hits.to_string()));
        rows.push(("⊛, lower is better".into(), self.false_warnings.to_string()));
        rows.push(("∗, lower is better".into(), self.missed.to_string()));
        rows.push(("Precision ◦/(◦+⊛)".into(), self.precision.percent()));
        rows.push(("Recall ◦/(◦+∗)".into(), self.recall.percent()));
        rows.push(("F1 2◦/(2◦+⊛+∗)".into(), self.f1.two_decimals()));
        let width = rows.iter().map(|r| r.0.chars().count()).max().unwrap_or(0) + 2;
        let mut out = String::new();
        for (l, r) in rows {
            let pad = width - l.chars().count();
            let line = format!("{l}{}{r}", " ".repeat(pad));
            let _ = writeln!(out, "{}", line.trim_end());
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("case\tcomponents\tapps\thits\tfalse_warnings\tmissed\n");
        for c in &self.cases {
            if c.valid {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    c.dir,
                    c.components,
                    c.apps,
                    c.hits.len(),
                    c.false_warnings.len(),
                    c.missed.len()
                );
            } else {
                let _ = writeln!(out, "{}\tinvalid", c.dir);
            }
        }
        let _ = writeln!(out, "sum\t\t\t{}\t{}\t{}", self.hits, self.false_warnings, self.missed);
        let _ = writeln!(out, "precision\t{}", self.precision.percent());
        let _ = writeln!(out, "recall\t{}", self.recall.percent());
        let _ = writeln!(out, "f1\t{}", self.f1.two_decimals());
        out
    }
}
