//! Structural operational semantics workbench: binding signatures,
//! clause-defined operations, labelled transition rules, rule-format
//! checking, bounded bisimilarity and Howe closure.

pub mod engine;
pub mod bisim;
pub mod enumerate;
pub mod format;
pub mod howe;
pub mod instances;
pub mod kernel;
pub mod ops;
pub mod relation;
pub mod run;
pub mod sig;
pub mod syntax;
pub mod term;

#[cfg(test)]
mod testutil;
