use std::fmt;
use std::str::FromStr;

use super::QualName;

/// Globally unique statement identity: `app/unit::method#block.index`.
///
/// Ids of parsed statements are positional and are carried along unchanged
/// by instrumentation; statements the instrumenter creates are flagged
/// `synthetic` (rendered `#~block.index`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StmtId {
    pub unit: QualName,
    pub method: String,
    pub synthetic: bool,
    pub block: u32,
    pub index: u32,
}

impl StmtId {
    pub fn app(&self) -> &str {
        &self.unit.app
    }
}

impl fmt::Display for StmtId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}::{}#{}{}.{}",
            self.unit,
            self.method,
            if self.synthetic { "~" } else { "" },
            self.block,
            self.index
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed statement id `{0}`")]
pub struct ParseStmtIdError(pub String);

impl FromStr for StmtId {
    type Err = ParseStmtIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseStmtIdError(s.to_owned());
        let (unit, rest) = s.split_once("::").ok_or_else(err)?;
        let (method, pos) = rest.rsplit_once('#').ok_or_else(err)?;
        let (app, local) = unit.split_once('/').ok_or_else(err)?;
        let (synthetic, pos) = match pos.strip_prefix('~') {
            Some(p) => (true, p),
            None => (false, pos),
        };
        let (block, index) = pos.split_once('.').ok_or_else(err)?;
        if app.is_empty() || local.is_empty() || method.is_empty() {
            return Err(err());
        }
        Ok(StmtId {
            unit: QualName::new(app, local),
            method: method.to_owned(),
            synthetic,
            block: block.parse().map_err(|_| err())?,
            index: index.parse().map_err(|_| err())?,
        })
    }
}
