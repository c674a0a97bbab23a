pub mod ckks;
pub mod engine;
pub mod error;
pub mod graph;
pub mod he;
pub mod importance;
pub mod plain;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
