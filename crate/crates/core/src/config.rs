//! Run configuration: a sectioned, human-editable TOML file.
//!
//! The full grammar is documented in the repository README; the built-in
//! defaults reproduce the experimental parameter set used by the shipped
//! profiles (`e0 = 0.5`, `e_d = 1.5%`, `p_d = 6.02e-6`, `eta_d = 14.5%`,
//! `f = 1.16`, `alpha_f = 0.2 dB/km`, decoy intensities 0.03). Parsing is
//! strict: unknown keys are rejected, and validation mirrors every module
//! invariant so a bad config fails at load time with a field diagnostic,
//! not somewhere inside a scan.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::optimizer::{PartySpec, ScanSpec};

/// Channel section; field names match [`ChannelParams`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub alpha_db_per_km: f64,
    pub det_efficiency: f64,
    pub dark_rate: f64,
    pub misalignment: f64,
    pub vacuum_error: f64,
    pub error_corr_ineff: f64,
    pub alice_split: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let p = ChannelParams::default();
        Self {
            alpha_db_per_km: p.alpha_db_per_km,
            det_efficiency: p.det_efficiency,
            dark_rate: p.dark_rate,
            misalignment: p.misalignment,
            vacuum_error: p.vacuum_error,
            error_corr_ineff: p.error_corr_ineff,
            alice_split: p.alice_split,
        }
    }
}

impl ChannelConfig {
    pub fn params(&self, distance_km: f64) -> ChannelParams {
        ChannelParams {
            distance_km,
            alpha_db_per_km: self.alpha_db_per_km,
            det_efficiency: self.det_efficiency,
            dark_rate: self.dark_rate,
            misalignment: self.misalignment,
            vacuum_error: self.vacuum_error,
            error_corr_ineff: self.error_corr_ineff,
            alice_split: self.alice_split,
        }
    }
}

/// One party's sources. Intensities are nominal mean photon numbers;
/// probabilities must sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartyConfig {
    pub mu_v: f64,
    pub mu_w: f64,
    pub mu_x: f64,
    pub mu_y: f64,
    pub mu_z: f64,
    pub delta_vac: f64,
    pub delta_sig: f64,
    pub p_v: f64,
    pub p_w: f64,
    pub p_x: f64,
    pub p_y: f64,
    pub p_z: f64,
}

impl Default for PartyConfig {
    fn default() -> Self {
        Self {
            mu_v: 1e-4,
            mu_w: 1e-4,
            mu_x: 0.03,
            mu_y: 0.03,
            mu_z: 0.5,
            delta_vac: 0.0,
            delta_sig: 0.0,
            p_v: 0.1,
            p_w: 0.1,
            p_x: 0.2,
            p_y: 0.25,
            p_z: 0.35,
        }
    }
}

impl PartyConfig {
    pub fn spec(&self, name: &'static str) -> PartySpec {
        PartySpec {
            name,
            intensities: [self.mu_v, self.mu_w, self.mu_x, self.mu_y, self.mu_z],
            deltas: (self.delta_vac, self.delta_sig),
            probs: [self.p_v, self.p_w, self.p_x, self.p_y, self.p_z],
        }
    }
}

/// Scan section; drives `scan` and `optimize`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub distances_km: Vec<f64>,
    /// `(delta_vac, delta_sig)` pairs, one curve each.
    pub delta_pairs: Vec<(f64, f64)>,
    pub mu_z_min: f64,
    pub mu_z_max: f64,
    pub mu_z_step: f64,
    /// Optional probability candidates in `v, w, x, y, z` order, applied
    /// to both parties; empty keeps the configured probabilities.
    pub prob_candidates: Vec<[f64; 5]>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            distances_km: (0..=20).map(|i| 10.0 * i as f64).collect(),
            delta_pairs: vec![(0.0, 0.0), (0.01, 0.01), (0.02, 0.02)],
            mu_z_min: 0.1,
            mu_z_max: 0.7,
            mu_z_step: 0.01,
            prob_candidates: vec![],
        }
    }
}

impl ScanConfig {
    pub fn spec(&self) -> ScanSpec {
        ScanSpec {
            mu_z_min: self.mu_z_min,
            mu_z_max: self.mu_z_max,
            mu_z_step: self.mu_z_step,
            prob_candidates: self.prob_candidates.clone(),
            distances_km: self.distances_km.clone(),
            delta_pairs: self.delta_pairs.clone(),
        }
    }
}

/// Verification section; drives `verify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Scenarios per (mode, distance) cell.
    pub scenarios_per_mode: usize,
    /// Slots per scenario.
    pub n_pulses: usize,
    /// Truncation order for the oracle (desk scale).
    pub kmax: usize,
    pub distances_km: Vec<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            scenarios_per_mode: 100,
            n_pulses: 10_000,
            kmax: 6,
            distances_km: vec![25.0, 50.0],
        }
    }
}

/// Top-level run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// RNG seed for scenario generation.
    pub seed: u64,
    /// Truncation order for scans.
    pub kmax: usize,
    /// Session length (pulse pairs) for scans.
    pub n_total: f64,
    pub channel: ChannelConfig,
    pub alice: PartyConfig,
    /// Omitted section defaults to Alice's values.
    pub bob: Option<PartyConfig>,
    pub scan: ScanConfig,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::table1_profile()
    }
}

impl RunConfig {
    /// Built-in profile: the default experimental parameters with the scan
    /// and verification layouts used by the acceptance checks.
    pub fn table1_profile() -> Self {
        Self {
            seed: 1,
            kmax: 12,
            n_total: 1e10,
            channel: ChannelConfig::default(),
            alice: PartyConfig::default(),
            bob: None,
            scan: ScanConfig::default(),
            verify: VerifyConfig::default(),
        }
    }

    pub fn bob_config(&self) -> &PartyConfig {
        self.bob.as_ref().unwrap_or(&self.alice)
    }

    /// Parses and validates a TOML document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config {
            detail: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serializes back to TOML; `from_toml(to_toml())` reproduces `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Mirrors every module invariant at parse time.
    pub fn validate(&self) -> Result<()> {
        if self.kmax < 2 || self.kmax > 64 {
            return Err(Error::Config {
                detail: format!("kmax = {} must lie in 2..=64", self.kmax),
            });
        }
        if !(self.n_total > 0.0) {
            return Err(Error::Config {
                detail: format!("n_total = {} must be positive", self.n_total),
            });
        }
        self.channel.params(0.0).validate().map_err(config_err)?;
        // Party invariants, via a probe build at the configured signal
        // intensity and at every scanned fluctuation pair.
        for (name, party) in [("alice", &self.alice), ("bob", self.bob_config())] {
            let spec = party.spec(if name == "alice" { "alice" } else { "bob" });
            spec.build(self.kmax, None, None, None).map_err(config_err)?;
            for &(d1, d2) in &self.scan.delta_pairs {
                spec.build(self.kmax, None, Some((d1, d2)), None)
                    .map_err(config_err)?;
            }
        }
        self.scan.spec().validate().map_err(config_err)?;
        for probs in &self.scan.prob_candidates {
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Config {
                    detail: format!("prob_candidates entry sums to {sum}, expected 1"),
                });
            }
        }
        if self.verify.kmax < 2 || self.verify.kmax > 64 {
            return Err(Error::Config {
                detail: format!("verify.kmax = {} must lie in 2..=64", self.verify.kmax),
            });
        }
        if self.verify.n_pulses == 0 || self.verify.scenarios_per_mode == 0 {
            return Err(Error::Config {
                detail: "verify.n_pulses and verify.scenarios_per_mode must be positive".into(),
            });
        }
        Ok(())
    }
}

fn config_err(e: Error) -> Error {
    Error::Config {
        detail: e.to_string(),
    }
}
