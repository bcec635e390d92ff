//! Inter-component and inter-app taint analysis over a compact component IR.

pub mod diag;
pub mod ir;
pub mod parser;
pub mod icc;
pub mod instrument;
pub mod taint;
pub mod combine;
pub mod analysis;
pub mod bench;
