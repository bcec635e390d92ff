use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use iccflow_core::analysis::{analyze_corpus, corpus_links, load_corpus, refresh_links, AnalysisOptions, CorpusApp};
use iccflow_core::bench::run_bench;
use iccflow_core::combine::{build_iac_graph, combine, split_graph};
use iccflow_core::diag::Diagnostic;
use iccflow_core::icc::{IccLink, LinkDb, StoreOutcome};
use iccflow_core::instrument::instrument_app;
use iccflow_core::ir::AppModel;
use iccflow_core::parser::serialize_app;
use iccflow_core::taint::SourceSinkConfig;

#[derive(Parser)]
#[command(name = "iccflow", version, about = "Inter-component and inter-app taint analysis")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Tsv,
}

#[derive(clap::Args)]
struct Common {
    /// Link database (created or updated in place).
    #[arg(long)]
    db: Option<PathBuf>,
    /// Longest chain of apps analyzed together.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    max_len: u64,
    /// Worker threads (0 = one per CPU).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and validate `.cir` files.
    Check { paths: Vec<PathBuf> },
    /// Resolve ICC links of a corpus and print them.
    Links {
        corpus: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write the instrumented model of every analysis set.
    Instrument {
        corpus: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Output directory; stdout when absent.
        #[arg(short = 'o')]
        out: Option<PathBuf>,
    },
    /// Print the analysis plan: one set of apps per line.
    Combine {
        corpus: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Report tainted paths.
    Analyze {
        corpus: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Source/sink definitions.
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a benchmark corpus against its ground truth.
    Bench {
        root: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

fn report(diags: &[Diagnostic]) -> bool {
    let mut err = std::io::stderr().lock();
    for d in diags {
        let _ = writeln!(err, "{d}");
    }
    !diags.is_empty()
}

fn load_config(path: &Path) -> Result<SourceSinkConfig> {
    SourceSinkConfig::load(path).with_context(|| format!("{}", path.display()))
}

type Loaded = (Vec<CorpusApp>, Vec<IccLink>, Vec<Diagnostic>, Vec<(String, StoreOutcome)>);

/// Corpus plus its links, from (and into) the database when one is given.
fn corpus_and_links(corpus: &Path, db: Option<&Path>) -> Result<Loaded> {
    let (apps, mut diags) = load_corpus(corpus);
    let mut store = match db {
        Some(p) => LinkDb::load(p)?,
        None => LinkDb::new(),
    };
    let (outcomes, d) = refresh_links(&mut store, &apps);
    diags.extend(d);
    if let Some(p) = db {
        store.save(p)?;
    }
    let refs: Vec<&AppModel> = apps.iter().map(|a| &a.model).collect();
    let links = corpus_links(&store, &refs);
    Ok((apps, links, diags, outcomes))
}

fn plan(apps: &[CorpusApp], links: &[IccLink], max_len: usize) -> Result<Vec<Vec<String>>> {
    let refs: Vec<&AppModel> = apps.iter().map(|a| &a.model).collect();
    let g = build_iac_graph(&refs, links);
    Ok(split_graph(&g, max_len)?
        .into_iter()
        .map(|s| s.into_iter().collect())
        .collect())
}

fn run(cli: Cli) -> Result<bool> {
    let mut out = String::new();
    let failed = match cli.cmd {
        Cmd::Check { paths } => {
            let mut diags = Vec::new();
            let mut n = 0;
            for p in &paths {
                let (apps, d) = load_corpus(p);
                n += apps.len();
                diags.extend(d);
            }
            out.push_str(&format!("{n} app(s) checked\n"));
            report(&diags)
        }
        Cmd::Links { corpus, common } => {
            let (_, links, diags, outcomes) = corpus_and_links(&corpus, common.db.as_deref())?;
            if common.db.is_some() && common.format == Format::Text {
                for (app, o) in &outcomes {
                    out.push_str(&format!("# {app}: {o:?}\n"));
                }
            }
            for l in &links {
                out.push_str(&format!("{l}\n"));
            }
            report(&diags)
        }
        Cmd::Instrument { corpus, common, out: dir } => {
            let (apps, links, mut diags, _) = corpus_and_links(&corpus, common.db.as_deref())?;
            for set in plan(&apps, &links, common.max_len as usize)? {
                let members: Vec<AppModel> = apps
                    .iter()
                    .filter(|a| set.contains(&a.model.app_id))
                    .map(|a| a.model.clone())
                    .collect();
                let merged = combine(&members)?;
                let local: Vec<IccLink> = links
                    .iter()
                    .filter(|l| set.contains(&l.from.unit.app) && set.contains(&l.to.app))
                    .cloned()
                    .collect();
                match instrument_app(&merged, &local) {
                    Ok(m) => {
                        let text = serialize_app(&m);
                        match &dir {
                            Some(d) => {
                                std::fs::create_dir_all(d)?;
                                let f = d.join(format!("{}.cir", m.app_id));
                                std::fs::write(&f, text).with_context(|| f.display().to_string())?;
                                out.push_str(&format!("{}\n", f.display()));
                            }
                            None => out.push_str(&text),
                        }
                    }
                    Err(e) => diags.push(Diagnostic::error(format!("{}: {e}", merged.app_id), 0, 0)),
                }
            }
            report(&diags)
        }
        Cmd::Combine { corpus, common } => {
            let (apps, links, diags, _) = corpus_and_links(&corpus, common.db.as_deref())?;
            for set in plan(&apps, &links, common.max_len as usize)? {
                out.push_str(&set.join(if common.format == Format::Tsv { "\t" } else { " " }));
                out.push('\n');
            }
            report(&diags)
        }
        Cmd::Analyze { corpus, common, config } => {
            let config = load_config(&config)?;
            let opts = AnalysisOptions {
                max_len: common.max_len as usize,
                jobs: common.jobs,
            };
            let r = analyze_corpus(&corpus, common.db.as_deref(), &config, opts);
            out.push_str(&match common.format {
                Format::Text => r.to_text(),
                Format::Tsv => r.to_tsv(),
            });
            report(&r.diags)
        }
        Cmd::Bench { root, config, jobs, format } => {
            let config = load_config(&config)?;
            let r = run_bench(&root, &config, jobs);
            if r.cases.is_empty() {
                anyhow::bail!("{}: no test cases found", root.display());
            }
            out.push_str(&match format {
                Format::Text => r.to_text(),
                Format::Tsv => r.to_tsv(),
            });
            report(&r.diags()) || r.cases.iter().any(|c| !c.valid)
        }
    };
    std::io::stdout().lock().write_all(out.as_bytes())?;
    Ok(failed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
