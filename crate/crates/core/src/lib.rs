//! Worst-case decoy-state security bounds for measurement-device-independent
//! QKD with photon-number-space source errors.
//!
//! Real sources drift: the photon-number coefficients of each emitted pulse
//! are only known to lie inside intervals. This crate certifies the secure
//! key rate of the five-source MDI-QKD protocol from those intervals and
//! the observed per-source yields alone, and ships an exact expectation
//! oracle that re-derives every inequality used along the way so the
//! certification can be stress-tested against adversarial per-pulse
//! behaviour.
//!
//! Module map:
//!
//! * [`fock`] — interval-valued photon-number source models and the ratio
//!   conditions gating the bounds.
//! * [`channel`] — the analytic relay model producing "normally observed"
//!   yields and error yields.
//! * [`bounds`] — the certified lower/upper bounds and the key rate.
//! * [`oracle`] — exact per-pulse ground truth for soundness verification.
//! * [`optimizer`] — signal-intensity optimization and the infinite-decoy
//!   reference curve.
//! * [`config`] / [`cli`] — TOML run configuration and the `scan`,
//!   `verify`, `optimize` subcommands.

#![forbid(unsafe_code)]
// `!(x > 0.0)` forms are deliberate: they reject NaN where `x <= 0.0`
// would accept it.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Frozen test constants keep the full digits of their high-precision
// evaluation.
#![allow(clippy::excessive_precision)]

pub mod bounds;
pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod fock;
pub mod optimizer;
pub mod oracle;

pub use error::{Error, Result};
