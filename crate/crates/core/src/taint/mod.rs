//! Context- and flow-sensitive taint analysis with access paths.

mod access_path;
mod cfg;
mod config;
mod paths;
mod solver;

pub use access_path::{AccessPath, Selector, K};
pub use cfg::{build_cfg, Binding, CallSite, Cfg, EdgeKind, InstId, Instance, Node, NodeId, NodeKind, RET};
pub use config::{ConfigError, SourceSinkConfig};
pub use paths::{classify_path, extract_paths, PathClass, TaintedPath};
pub use solver::{normal_flow, propagate, Fact, FactId, Propagation, SinkHit};
