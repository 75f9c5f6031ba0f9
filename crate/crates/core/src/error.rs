//! Crate-wide error type.
//!
//! Three broad classes matter to callers: domain violations (bad graphs, bad
//! configs, bad arguments), I/O and file-format failures, and numerical
//! divergence during training. The CLI maps these to distinct exit codes.

use crate::toolgraph::Violation;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    /// Binary-format violation at a byte offset. The message names the file
    /// when the caller knows it.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// Graph failed validation. Carries the full violation list so callers
    /// can report every problem, not just the first.
    #[error("graph '{name}' failed validation: {}", summarize(violations))]
    InvalidGraph {
        name: String,
        violations: Vec<Violation>,
    },

    /// Any other contract violation, tagged with a stable uppercase code.
    #[error("{code}: {message}")]
    Domain { code: String, message: String },

    #[error("DIVERGED: non-finite mean loss {loss} at epoch {epoch}")]
    Diverged { epoch: usize, loss: f64 },
}

impl Error {
    pub fn domain(code: &str, message: impl Into<String>) -> Self {
        Error::Domain {
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}

fn summarize(violations: &[Violation]) -> String {
    match violations.first() {
        None => "no violations".to_string(),
        Some(v) => format!(
            "{} violation(s), first {}:{}: {}",
            violations.len(),
            v.code,
            v.subject_id,
            v.message
        ),
    }
}
