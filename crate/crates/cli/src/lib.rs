//! Batch driver for the kamreduce engine: configuration, command
//! orchestration and reproducible CSV/JSON outputs.

// Negated float comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod suite;

use std::fmt;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    /// A checked property or tolerance failed.
    Property(String),
    /// A small divisor fell below its threshold.
    Resonance(String),
    Config(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Property(_) => 1,
            CliError::Resonance(_) => 2,
            CliError::Config(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Property(m) => write!(f, "property failure: {m}"),
            CliError::Resonance(m) => write!(f, "resonance exclusion: {m}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<kamreduce_core::Error> for CliError {
    fn from(e: kamreduce_core::Error) -> Self {
        use kamreduce_core::Error as E;
        let msg = e.to_string();
        match e {
            E::DivisorViolation { .. } => CliError::Resonance(msg),
            E::Domain(_) | E::DimensionMismatch(_) | E::InfeasibleSchedule { .. } | E::Parse(_) => CliError::Config(msg),
            E::Io(_) => CliError::Io(msg),
            E::Overflow(_) | E::FlowDomain { .. } | E::LieDivergence { .. } | E::GridMismatch(_) => CliError::Property(msg),
        }
    }
}
