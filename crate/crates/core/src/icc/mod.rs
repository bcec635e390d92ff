//! ICC resolution: intent values at call sites, filter matching, and the
//! persistent link database.

pub mod db;
mod matching;
mod values;

pub use db::{content_hash, load_links, store_links, DbError, LinkDb, StoreOutcome};
pub use matching::{match_filter, match_links, resolve_links, FilterMatch, IccLink};
pub use values::{resolve_intent_values, Attr, DataType, IntentValue, Target};
