//! The PQ query language: a small brace-delimited procedural language.
//!
//! ```text
//! def max_pt(event) {
//!     maximum = 0.0
//!     for muon in event.muons {
//!         if muon.pt > maximum { maximum = muon.pt }
//!     }
//!     emit(maximum)
//! }
//! ```
//!
//! Statements end at a newline or `;`. Newlines inside `(...)` and `[...]`
//! are ignored. The first `def` is the entry point and receives one event.

mod ast;
mod lexer;
mod parser;
mod render;

pub use ast::*;
pub use parser::parse;
pub use render::{render, render_expr};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at {pos}: {message}")]
pub struct SyntaxError {
    pub pos: Pos,
    pub message: String,
}

impl SyntaxError {
    pub fn new(pos: Pos, message: impl Into<String>) -> SyntaxError {
        SyntaxError { pos, message: message.into() }
    }
}
