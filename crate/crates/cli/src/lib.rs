//! Command-line front end: configuration loading, environment selection,
//! output files and the multi-seed comparison of search variants.

pub mod cli;
pub mod compare;
pub mod config;
pub mod envsource;
pub mod output;

pub use cli::{execute, Cli, Command, SpecKind};
pub use compare::{compare, Comparison, Variant, VariantSummary};
pub use config::load_config;
pub use envsource::EnvSource;
