//! Error and dataset-violation types shared across the crate.

use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// A single dataset invariant violation, produced by `data::validate`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Short name of the violated invariant.
    pub invariant: String,
    /// Offending subject indices (0-based, in dataset row order).
    pub rows: Vec<usize>,
    /// Human-readable detail.
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.invariant, self.detail)?;
        if !self.rows.is_empty() {
            let shown: Vec<String> = self.rows.iter().take(10).map(|r| r.to_string()).collect();
            let ellipsis = if self.rows.len() > 10 { ", ..." } else { "" };
            write!(f, " (subjects {}{})", shown.join(", "), ellipsis)?;
        }
        Ok(())
    }
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at data row {row}, column '{column}': {message}")]
    Parse {
        /// 1-based data row (header excluded).
        row: usize,
        column: String,
        message: String,
    },

    #[error("dataset validation failed:\n{}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("singular design: dependent column(s) {}", .columns.join(", "))]
    SingularDesign { columns: Vec<String> },

    #[error("no events with status '{label}'")]
    ZeroEvents { label: String },

    #[error(
        "log-link fit did not converge after {iterations} iterations \
         (score norm {score_norm:e})"
    )]
    NonConvergence { iterations: usize, score_norm: f64 },

    #[error("identification failure: {message}")]
    Identification { message: String },

    #[error("first-stage fit for NCO '{nco}' failed: {source}")]
    FirstStage {
        nco: String,
        #[source]
        source: Box<Error>,
    },

    #[error("unstable resampling: {failed} of {total} bootstrap replicates failed")]
    UnstableResampling { failed: usize, total: usize },

    #[error("nonpositive hazard rate {rate} for subject {row}")]
    NonPositiveHazard { row: usize, rate: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Wrap an error with the name of the NCO whose first stage produced it.
    pub fn in_first_stage(self, nco: &str) -> Self {
        Error::FirstStage {
            nco: nco.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
