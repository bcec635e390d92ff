//! Shared fixtures for the integration tests.
#![allow(dead_code)]

pub mod fixtures;
pub mod gen;
pub mod oracle;

use std::collections::BTreeSet;
use std::path::PathBuf;

use iccflow_core::analysis::{analyze_models, AnalysisOptions, AnalysisReport};
use iccflow_core::icc::resolve_links;
use iccflow_core::ir::{AppModel, StmtId};
use iccflow_core::parser::parse_app_named;
use iccflow_core::taint::SourceSinkConfig;

pub fn corpus_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn config() -> SourceSinkConfig {
    SourceSinkConfig::load(&corpus_root().join("sources_sinks.conf")).expect("corpus config")
}

pub fn parse(text: &str) -> AppModel {
    match parse_app_named(text, None) {
        Ok(m) => m,
        Err(d) => panic!("generated program does not parse: {d:?}\n{text}"),
    }
}

pub fn analyze(apps: &[AppModel], config: &SourceSinkConfig, max_len: usize) -> AnalysisReport {
    let refs: Vec<&AppModel> = apps.iter().collect();
    let (links, _) = resolve_links(&refs);
    analyze_models(apps, &links, config, AnalysisOptions { max_len, jobs: 1 })
}

pub fn pairs(apps: &[AppModel], config: &SourceSinkConfig) -> BTreeSet<(StmtId, StmtId)> {
    analyze(apps, config, 2).pairs()
}

/// Every program text of a generated case, for failure messages.
pub fn dump(p: &gen::Program) -> String {
    p.apps.iter().map(|(_, t)| t.as_str()).collect::<Vec<_>>().join("\n")
}
