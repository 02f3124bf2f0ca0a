//! Crate-wide error type.
//!
//! Bound evaluation refuses to produce a number when its admissibility
//! gates fail; every refusal names the violated inequality so a scan log
//! can be audited without re-deriving anything.

use std::fmt;

/// Errors raised across source modeling, bound evaluation, and the CLI.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// A scalar parameter is outside its admissible range.
    InvalidParameter {
        /// Parameter name as written in the config grammar.
        name: &'static str,
        /// Offending value.
        value: f64,
        /// Human-readable requirement, e.g. "must lie in [0,1)".
        requirement: &'static str,
    },
    /// Source selection probabilities do not sum to one.
    ProbabilitySum { party: &'static str, sum: f64 },
    /// Intensity ladder ordering violated (needs mu_w < mu_y < mu_z and mu_v < mu_x).
    IntensityOrdering {
        party: &'static str,
        detail: String,
    },
    /// A decoy ratio condition failed; `detail` names the first violated link.
    ConditionViolated { which: &'static str, detail: String },
    /// A zero-photon coefficient bound that appears in a denominator is zero.
    ZeroVacuumCoefficient { source: char, side: &'static str },
    /// sigma_A + sigma_B >= 1: vacuum reference too bright or fluctuation
    /// too large for the affected bound.
    SigmaGate {
        which: &'static str,
        sigma_a: f64,
        sigma_b: f64,
    },
    /// Decoy/signal intensities too close or fluctuation too large:
    /// the single-photon extraction denominator is not positive.
    DenominatorNotPositive { which: &'static str, value: f64 },
    /// Signal gain vanished, so the QBER is undefined.
    QberUndefined,
    /// The certified single-photon yield bound vanished; no key can be claimed.
    YieldBoundVanished,
    /// A scenario with zero pulse slots cannot produce observables.
    EmptyScenario,
    /// Two algebraically equivalent evaluation routes disagreed
    /// (implementation bug, never a data problem).
    ConsistencyCheck {
        what: &'static str,
        lhs: f64,
        rhs: f64,
    },
    /// No grid point satisfied the admissibility gates.
    NoAdmissibleSignal,
    /// Config file could not be parsed or validated.
    Config { detail: String },
    /// Scenario text could not be parsed; `line` is 1-based.
    ScenarioParse { line: usize, detail: String },
    /// Underlying I/O failure.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidParameter {
                name,
                value,
                requirement,
            } => write!(f, "parameter {name} = {value} invalid: {requirement}"),
            Self::ProbabilitySum { party, sum } => {
                write!(f, "{party} source probabilities sum to {sum}, expected 1")
            }
            Self::IntensityOrdering { party, detail } => {
                write!(f, "{party} intensity ladder violated: {detail}")
            }
            Self::ConditionViolated { which, detail } => {
                write!(f, "decoy condition {which} violated: {detail}")
            }
            Self::ZeroVacuumCoefficient { source, side } => write!(
                f,
                "zero-photon coefficient bound of source {source} ({side}) is zero; \
                 vacuum-reference estimate undefined"
            ),
            Self::SigmaGate {
                which,
                sigma_a,
                sigma_b,
            } => write!(
                f,
                "fluctuation too large for {which}: sigma_A = {sigma_a}, sigma_B = {sigma_b}, \
                 need sigma_A + sigma_B < 1 (vacuum reference too bright or intervals too wide)"
            ),
            Self::DenominatorNotPositive { which, value } => write!(
                f,
                "{which} denominator = {value} not positive: decoy/signal intensities too close \
                 or fluctuation too large"
            ),
            Self::QberUndefined => write!(f, "signal gain S_zz = 0, QBER undefined"),
            Self::YieldBoundVanished => {
                write!(f, "single-photon yield bound vanished; no key")
            }
            Self::EmptyScenario => write!(f, "scenario has zero pulse slots"),
            Self::ConsistencyCheck { what, lhs, rhs } => write!(
                f,
                "internal consistency check `{what}` failed: {lhs} vs {rhs} (implementation bug)"
            ),
            Self::NoAdmissibleSignal => write!(f, "no admissible signal intensity in scan range"),
            Self::Config { detail } => write!(f, "config error: {detail}"),
            Self::ScenarioParse { line, detail } => {
                write!(f, "scenario parse error at line {line}: {detail}")
            }
            Self::Io(detail) => write!(f, "i/o error: {detail}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
