//! Error type shared by every module.

use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Constraints of the per-round selection and allocation problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constraint {
    /// Selection variables take values in {0, 1}.
    Integrality,
    /// Unselected clients hold no bandwidth and no frequency.
    Inactive,
    /// Bandwidth fractions sum to at most one.
    Bandwidth,
    /// CPU frequency lies in [0, f_max].
    Frequency,
    /// Selected clients stay below the KL threshold.
    Heterogeneity,
    /// Selected clients hold at least the data budget.
    DataBudget,
    /// Weighted latency of every selected client stays below the epigraph value.
    Epigraph,
}

impl Constraint {
    pub const ALL: [Constraint; 7] = [
        Constraint::Integrality,
        Constraint::Inactive,
        Constraint::Bandwidth,
        Constraint::Frequency,
        Constraint::Heterogeneity,
        Constraint::DataBudget,
        Constraint::Epigraph,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Constraint::Integrality => "integrality",
            Constraint::Inactive => "inactive",
            Constraint::Bandwidth => "bandwidth",
            Constraint::Frequency => "frequency",
            Constraint::Heterogeneity => "heterogeneity",
            Constraint::DataBudget => "data_budget",
            Constraint::Epigraph => "epigraph",
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("KL divergence undefined: reference has no mass at category {category} where p = {mass}")]
    DivergenceUndefined { category: usize, mass: f64 },

    #[error("no client satisfies the KL threshold {threshold}")]
    NoEligibleClients { threshold: f64 },

    #[error("infeasible ({constraint}): {detail}")]
    Infeasible {
        constraint: Constraint,
        detail: String,
    },

    #[error("infeasible decision for client {client}: {reason}")]
    InfeasibleDecision { client: usize, reason: &'static str },

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("solver failed: {reason} (iterate: {dump})")]
    Solver { reason: &'static str, dump: String },

    #[error("brute force over {eligible} clients exceeds the limit of {limit}")]
    TooLarge { eligible: usize, limit: usize },

    #[error("round {round}: {source}")]
    Round { round: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn infeasible(constraint: Constraint, detail: impl Into<String>) -> Self {
        Error::Infeasible {
            constraint,
            detail: detail.into(),
        }
    }

    /// Wraps the error with the round it happened in.
    pub fn at_round(self, round: usize) -> Self {
        match self {
            e @ Error::Round { .. } => e,
            e => Error::Round {
                round,
                source: Box::new(e),
            },
        }
    }
}
