//! Compiles PQ programs into plans that index columns directly.
//!
//! Every object-level construct is rewritten into integer arithmetic on
//! column positions: `event.muons` becomes the same event index under a
//! longer column prefix, `muons[i]` becomes `Lo[k] + i`, a `for` over a list
//! becomes a loop between two offsets, and a union becomes a switch on its
//! tag column. Functions are compiled once per argument signature.

mod compiler;
mod explain;
mod optimize;
mod plan;
mod symbols;

pub use compiler::MAX_BRANCHES;
pub use explain::explain;
pub use optimize::{eliminate_zero_lookups, flatten_loops};
pub use plan::*;

pub(crate) use compiler::{kind_matches, scalar_mask};

use thiserror::Error;

use crate::query::{parse, Pos, Program};
use crate::schema::Schema;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("compile error at {pos}: {message}")]
pub struct CompileError {
    pub pos: Pos,
    pub message: String,
}

impl CompileError {
    pub fn new(pos: Pos, message: impl Into<String>) -> CompileError {
        CompileError { pos, message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompileOptions {
    /// Subscripts and loop bounds are checked against the stored extents.
    pub range_checks: bool,
    /// Negative subscripts count from the end; `None` follows `range_checks`.
    pub negative_indices: Option<bool>,
    pub eliminate_zero_lookups: bool,
    pub flatten_loops: bool,
}

impl Default for CompileOptions {
    fn default() -> CompileOptions {
        CompileOptions { range_checks: true, negative_indices: None, eliminate_zero_lookups: true, flatten_loops: true }
    }
}

impl CompileOptions {
    pub fn unchecked() -> CompileOptions {
        CompileOptions { range_checks: false, ..CompileOptions::default() }
    }

    pub fn without_optimizations(self) -> CompileOptions {
        CompileOptions { eliminate_zero_lookups: false, flatten_loops: false, ..self }
    }
}

/// Compiles `program` for a store holding a list of `event_schema` values
/// under `prefix`.
pub fn compile(
    program: &Program,
    event_schema: &Schema,
    prefix: &str,
    options: CompileOptions,
) -> Result<Plan, CompileError> {
    let mut plan = compiler::compile(program, event_schema, prefix, &options)?;
    if options.eliminate_zero_lookups {
        eliminate_zero_lookups(&mut plan);
    }
    if options.flatten_loops {
        flatten_loops(&mut plan);
    }
    Ok(plan)
}

/// Parses and compiles; syntax errors are reported as compile errors.
pub fn compile_source(
    source: &str,
    event_schema: &Schema,
    prefix: &str,
    options: CompileOptions,
) -> Result<Plan, CompileError> {
    let program = parse(source).map_err(|e| CompileError::new(e.pos, format!("syntax error: {}", e.message)))?;
    compile(&program, event_schema, prefix, options)
}

#[cfg(test)]
mod tests;
