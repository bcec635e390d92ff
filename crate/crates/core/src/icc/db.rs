//! Persistent ICC link store.
//!
//! A text file of tab-separated rows
//! `app_hash  from_stmt  kind  to  exact  cross_app`, grouped per origin app
//! under a `# app <app_id> <hash>` header. The hash is the SHA-256 of the
//! app's `.cir` text; storing an app whose hash is unchanged is a no-op,
//! a changed hash replaces that app's rows only.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::IccLink;
use crate::ir::{IccKind, QualName, StmtId};

#[derive(Debug, thiserror::Error)]
pub enum DbError {
    #[error("{path}: line {line}: {msg}")]
    Corrupt { path: String, line: usize, msg: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Entry {
    hash: String,
    links: Vec<IccLink>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinkDb {
    apps: BTreeMap<String, Entry>,
}

/// What [`LinkDb::store_app`] did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StoreOutcome {
    Added,
    Unchanged,
    Replaced,
}

impl LinkDb {
    pub fn new() -> Self {
        LinkDb::default()
    }

    /// Loads `path`; a missing file is an empty database.
    pub fn load(path: &Path) -> Result<LinkDb, DbError> {
        match std::fs::read_to_string(path) {
            Ok(text) => LinkDb::parse(&text, &path.display().to_string()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(LinkDb::new()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn parse(text: &str, path: &str) -> Result<LinkDb, DbError> {
        let corrupt = |line: usize, msg: String| DbError::Corrupt {
            path: path.to_owned(),
            line,
            msg,
        };
        let mut db = LinkDb::new();
        let mut current: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            if raw.trim().is_empty() {
                continue;
            }
            if let Some(rest) = raw.strip_prefix("# app ") {
                let mut parts = rest.split(' ');
                let (Some(app), Some(hash), None) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(corrupt(line, "malformed app header".into()));
                };
                if db.apps.contains_key(app) {
                    return Err(corrupt(line, format!("app `{app}` listed twice")));
                }
                db.apps.insert(
                    app.to_owned(),
                    Entry {
                        hash: hash.to_owned(),
                        links: Vec::new(),
                    },
                );
                current = Some(app.to_owned());
                continue;
            }
            if raw.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = raw.split('\t').collect();
            if cols.len() != 6 {
                return Err(corrupt(line, format!("expected 6 tab-separated fields, found {}", cols.len())));
            }
            let Some(app) = current.as_ref() else {
                return Err(corrupt(line, "link row before any app header".into()));
            };
            let entry = db.apps.get_mut(app).expect("header inserted");
            if cols[0] != entry.hash {
                return Err(corrupt(line, format!("hash does not match header of app `{app}`")));
            }
            let from: StmtId = cols[1].parse().map_err(|e| corrupt(line, format!("{e}")))?;
            if from.unit.app != *app {
                return Err(corrupt(line, format!("link from `{}` filed under app `{app}`", from.unit.app)));
            }
            let kind = IccKind::from_keyword(cols[2])
                .ok_or_else(|| corrupt(line, format!("unknown ICC kind `{}`", cols[2])))?;
            let to = match cols[3].split_once('/') {
                Some((a, l)) if !a.is_empty() && !l.is_empty() => QualName::new(a, l),
                _ => return Err(corrupt(line, format!("malformed target `{}`", cols[3]))),
            };
            let flag = |s: &str| match s {
                "true" => Ok(true),
                "false" => Ok(false),
                other => Err(corrupt(line, format!("expected true/false, found `{other}`"))),
            };
            let exact = flag(cols[4])?;
            let cross_app = flag(cols[5])?;
            entry.links.push(IccLink {
                from,
                kind,
                to,
                exact,
                cross_app,
            });
        }
        for e in db.apps.values_mut() {
            e.links.sort();
            e.links.dedup();
        }
        Ok(db)
    }

    pub fn hash_of(&self, app_id: &str) -> Option<&str> {
        self.apps.get(app_id).map(|e| e.hash.as_str())
    }

    pub fn is_fresh(&self, app_id: &str, hash: &str) -> bool {
        self.hash_of(app_id) == Some(hash)
    }

    pub fn app_links(&self, app_id: &str) -> Option<&[IccLink]> {
        self.apps.get(app_id).map(|e| e.links.as_slice())
    }

    /// Records the links originating in `app_id`.
    pub fn store_app(&mut self, app_id: &str, hash: &str, links: &[IccLink]) -> StoreOutcome {
        let mut links: Vec<IccLink> = links
            .iter()
            .filter(|l| l.from.unit.app == app_id)
            .cloned()
            .collect();
        links.sort();
        links.dedup();
        let entry = Entry {
            hash: hash.to_owned(),
            links,
        };
        match self.apps.get(app_id) {
            Some(e) if e.hash == hash => StoreOutcome::Unchanged,
            Some(_) => {
                self.apps.insert(app_id.to_owned(), entry);
                StoreOutcome::Replaced
            }
            None => {
                self.apps.insert(app_id.to_owned(), entry);
                StoreOutcome::Added
            }
        }
    }

    /// Union of all stored links, sorted by (from, to).
    pub fn links(&self) -> Vec<IccLink> {
        let mut all: Vec<IccLink> = self.apps.values().flat_map(|e| e.links.iter().cloned()).collect();
        all.sort_by(|a, b| (&a.from, &a.to, a.kind).cmp(&(&b.from, &b.to, b.kind)));
        all
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (app, e) in &self.apps {
            out.push_str(&format!("# app {} {}\n", app, e.hash));
            let mut links = e.links.clone();
            links.sort_by(|a, b| (&a.from, &a.to).cmp(&(&b.from, &b.to)));
            for l in links {
                out.push_str(&format!("{}\t{}\n", e.hash, l));
            }
        }
        out
    }

    /// Writes the canonical text form, replacing `path` atomically.
    pub fn save(&self, path: &Path) -> Result<(), DbError> {
        let text = self.to_text();
        if let Ok(old) = std::fs::read_to_string(path) {
            if old == text {
                return Ok(());
            }
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}

/// Stores the links of every `(app_id, text)` pair into the database at
/// `path`, creating it if needed.
pub fn store_links(links: &[IccLink], apps: &[(&str, &str)], path: &Path) -> Result<Vec<StoreOutcome>, DbError> {
    let mut db = LinkDb::load(path)?;
    let outcomes = apps
        .iter()
        .map(|(id, text)| db.store_app(id, &content_hash(text), links))
        .collect();
    db.save(path)?;
    Ok(outcomes)
}

pub fn load_links(path: &Path) -> Result<Vec<IccLink>, DbError> {
    Ok(LinkDb::load(path)?.links())
}
