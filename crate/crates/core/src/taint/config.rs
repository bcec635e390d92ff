use std::collections::BTreeSet;
use std::path::Path;

/// Names of source and sink calls, read from `source <name>` / `sink <name>` lines.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SourceSinkConfig {
    pub sources: BTreeSet<String>,
    pub sinks: BTreeSet<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl SourceSinkConfig {
    pub fn new<S: Into<String>>(sources: impl IntoIterator<Item = S>, sinks: impl IntoIterator<Item = S>) -> Self {
        SourceSinkConfig {
            sources: sources.into_iter().map(Into::into).collect(),
            sinks: sinks.into_iter().map(Into::into).collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = SourceSinkConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            let (kind, name, rest) = (words.next(), words.next(), words.next());
            let err = |msg: String| ConfigError::Syntax { line: n + 1, msg };
            match (kind, name, rest) {
                (Some("source"), Some(name), None) => {
                    cfg.sources.insert(name.to_owned());
                }
                (Some("sink"), Some(name), None) => {
                    cfg.sinks.insert(name.to_owned());
                }
                (Some(k @ ("source" | "sink")), _, _) => {
                    return Err(err(format!("`{k}` takes exactly one name")))
                }
                (Some(other), _, _) => return Err(err(format!("unknown entry kind `{other}`"))),
                (None, _, _) => {}
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        SourceSinkConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn is_source(&self, name: &str) -> bool {
        self.sources.contains(name)
    }

    pub fn is_sink(&self, name: &str) -> bool {
        self.sinks.contains(name)
    }
}
