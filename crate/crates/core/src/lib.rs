//! Looped transformers that execute hypergraph algorithms.

pub mod builder;
pub mod compiler;
pub mod error;
pub mod hypergraph;
pub mod interp;
pub mod kernel;
pub mod layout;
pub mod matrix;
pub mod oracle;
pub mod positional;
pub mod primitives;
pub mod trace;
pub mod verify;

pub use compiler::{compile, CompiledProgram, Options, Output, Params};
pub use error::{Error, Result};
pub use hypergraph::Hypergraph;
pub use layout::AlgorithmKind;
