//! Analytic detection model for the untrusted relay.
//!
//! The relay is modeled by a two-arm coincidence: each arm fires when at
//! least one of its photons survives or a dark count occurs, and an
//! announcement requires both arms. With per-arm transmittance `eta` and
//! dark-count probability `p_d`,
//!
//! ```text
//! F(n)    = 1 - (1 - p_d) (1 - eta)^n          arm firing probability
//! y(j, k) = F_A(j) * F_B(k)                    announcement probability
//! ```
//!
//! Error assignment is fixed as follows: a coincidence in which both arms
//! fired on real photons is misread with the misalignment probability
//! `e_d`; any announcement involving a dark count is random, error
//! probability `e_0`. Writing `P(n) = 1 - (1 - eta)^n` for the
//! photon-only firing probability,
//!
//! ```text
//! t(j, k) = e_d * P_A(j) P_B(k) + e_0 * (y(j, k) - P_A(j) P_B(k)),
//! ```
//!
//! which satisfies `0 <= t <= y` for any `e_0, e_d` in [0,1] and reduces
//! to `e_0 * y` whenever one side sent vacuum.
//!
//! The security bounds downstream hold for arbitrary per-pulse yields, so
//! nothing in this crate depends on this particular model being physical;
//! it only fixes what "normally observed" statistics look like, and the
//! verification oracle uses the same model for its ground truth.

use crate::error::{Error, Result};
use crate::fock::{fill_class_coeffs, PartyEnsemble, Source};

/// Detector, fiber, and error-correction parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelParams {
    /// Total Alice-to-Bob fiber length in km.
    pub distance_km: f64,
    /// Fiber loss coefficient in dB/km.
    pub alpha_db_per_km: f64,
    /// Relay detector efficiency.
    pub det_efficiency: f64,
    /// Dark count probability per detector per gate.
    pub dark_rate: f64,
    /// Misalignment error probability.
    pub misalignment: f64,
    /// Error probability of a vacuum (dark-driven) count.
    pub vacuum_error: f64,
    /// Error-correction inefficiency factor, >= 1.
    pub error_corr_ineff: f64,
    /// Fraction of the total distance on Alice's side; 0.5 puts the relay
    /// at the midpoint.
    pub alice_split: f64,
}

impl Default for ChannelParams {
    /// Experimental parameters used throughout the built-in profiles.
    fn default() -> Self {
        Self {
            distance_km: 0.0,
            alpha_db_per_km: 0.2,
            det_efficiency: 0.145,
            dark_rate: 6.02e-6,
            misalignment: 0.015,
            vacuum_error: 0.5,
            error_corr_ineff: 1.16,
            alice_split: 0.5,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("det_efficiency", self.det_efficiency),
            ("dark_rate", self.dark_rate),
            ("misalignment", self.misalignment),
            ("vacuum_error", self.vacuum_error),
            ("alice_split", self.alice_split),
        ];
        for (name, v) in probs {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    requirement: "must lie in [0,1]",
                });
            }
        }
        if self.distance_km < 0.0 {
            return Err(Error::InvalidParameter {
                name: "distance_km",
                value: self.distance_km,
                requirement: "must be non-negative",
            });
        }
        if self.alpha_db_per_km < 0.0 {
            return Err(Error::InvalidParameter {
                name: "alpha_db_per_km",
                value: self.alpha_db_per_km,
                requirement: "must be non-negative",
            });
        }
        if self.error_corr_ineff < 1.0 {
            return Err(Error::InvalidParameter {
                name: "error_corr_ineff",
                value: self.error_corr_ineff,
                requirement: "must be at least 1",
            });
        }
        Ok(())
    }

    /// Per-arm transmittances (Alice side, Bob side), including detector
    /// efficiency.
    pub fn arm_transmittances(&self) -> (f64, f64) {
        let eta = |d: f64| self.det_efficiency * 10f64.powf(-self.alpha_db_per_km * d / 10.0);
        (
            eta(self.alice_split * self.distance_km),
            eta((1.0 - self.alice_split) * self.distance_km),
        )
    }
}

fn arm_fire(pd: f64, eta: f64, n: usize) -> f64 {
    1.0 - (1.0 - pd) * (1.0 - eta).powi(n as i32)
}

fn arm_photon_fire(eta: f64, n: usize) -> f64 {
    1.0 - (1.0 - eta).powi(n as i32)
}

/// Probability that a `|jk>` pulse pair causes an announced success.
pub fn pair_yield(params: &ChannelParams, j: usize, k: usize) -> f64 {
    let (eta_a, eta_b) = params.arm_transmittances();
    arm_fire(params.dark_rate, eta_a, j) * arm_fire(params.dark_rate, eta_b, k)
}

/// Probability that a `|jk>` pulse pair causes an announced success that is
/// recorded as an error. Always in `[0, pair_yield]`.
pub fn pair_error_yield(params: &ChannelParams, j: usize, k: usize) -> f64 {
    let (eta_a, eta_b) = params.arm_transmittances();
    let y = arm_fire(params.dark_rate, eta_a, j) * arm_fire(params.dark_rate, eta_b, k);
    let photonic = arm_photon_fire(eta_a, j) * arm_photon_fire(eta_b, k);
    params.misalignment * photonic + params.vacuum_error * (y - photonic)
}

/// Per-class yield and error-yield matrices.
///
/// Class indices `0..=kmax` are photon numbers; index `kmax + 1` is the
/// tail class (more than `kmax` photons), which is assigned the yield of
/// `kmax` photons so that tail mass is weighted rather than dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct YieldMatrix {
    classes: usize,
    y: Vec<f64>,
    t: Vec<f64>,
}

impl YieldMatrix {
    /// Evaluates the linear detection model on the class grid.
    pub fn linear_model(params: &ChannelParams, kmax: usize) -> YieldMatrix {
        let classes = kmax + 2;
        let photons = |class: usize| class.min(kmax);
        let mut y = vec![0.0; classes * classes];
        let mut t = vec![0.0; classes * classes];
        for j in 0..classes {
            for k in 0..classes {
                y[j * classes + k] = pair_yield(params, photons(j), photons(k));
                t[j * classes + k] = pair_error_yield(params, photons(j), photons(k));
            }
        }
        YieldMatrix { classes, y, t }
    }

    /// Number of classes per side (`kmax + 2`).
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn y(&self, j: usize, k: usize) -> f64 {
        self.y[j * self.classes + k]
    }

    pub fn t(&self, j: usize, k: usize) -> f64 {
        self.t[j * self.classes + k]
    }

    /// Flat row-major yield entries.
    pub fn y_flat(&self) -> &[f64] {
        &self.y
    }

    /// Flat row-major error-yield entries.
    pub fn t_flat(&self) -> &[f64] {
        &self.t
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..self.y.len() {
            if !(0.0 <= self.t[i] && self.t[i] <= self.y[i] && self.y[i] <= 1.0) {
                return Err(Error::InvalidParameter {
                    name: "yield matrix",
                    value: self.y[i],
                    requirement: "need 0 <= t[j][k] <= y[j][k] <= 1",
                });
            }
        }
        Ok(())
    }
}

/// Index of a Z-ladder source in the 3x3 yield grid.
pub fn z_index(s: Source) -> usize {
    match s {
        Source::W => 0,
        Source::Y => 1,
        Source::Z => 2,
        _ => panic!("{:?} is not a Z-ladder source", s),
    }
}

/// Index of an X-ladder source in the 2x2 grids.
pub fn x_index(s: Source) -> usize {
    match s {
        Source::V => 0,
        Source::X => 1,
        _ => panic!("{:?} is not an X-ladder source", s),
    }
}

/// Z-ladder sources in grid order.
pub const Z_SOURCES: [Source; 3] = [Source::W, Source::Y, Source::Z];
/// X-ladder sources in grid order.
pub const X_SOURCES: [Source; 2] = [Source::V, Source::X];

/// Observed per-source statistics an experiment reports: yields on the
/// Z-source grid, yields and error yields on the X-source grid, the signal
/// QBER, and the session length.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedStats {
    n_total: f64,
    s_z: [[f64; 3]; 3],
    s_x: [[f64; 2]; 2],
    t_x: [[f64; 2]; 2],
    e_zz: f64,
}

impl ObservedStats {
    pub fn new(
        n_total: f64,
        s_z: [[f64; 3]; 3],
        s_x: [[f64; 2]; 2],
        t_x: [[f64; 2]; 2],
        e_zz: f64,
    ) -> Result<Self> {
        if !(n_total > 0.0) {
            return Err(Error::InvalidParameter {
                name: "n_total",
                value: n_total,
                requirement: "must be positive",
            });
        }
        let all_z = s_z.iter().flatten();
        let all_x = s_x.iter().flatten();
        for &v in all_z.chain(all_x).chain(t_x.iter().flatten()) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter {
                    name: "yield",
                    value: v,
                    requirement: "every observed yield must lie in [0,1]",
                });
            }
        }
        for l in 0..2 {
            for r in 0..2 {
                if t_x[l][r] > s_x[l][r] {
                    return Err(Error::InvalidParameter {
                        name: "error yield",
                        value: t_x[l][r],
                        requirement: "T_lr cannot exceed the matching yield S_lr",
                    });
                }
            }
        }
        if !(0.0..=1.0).contains(&e_zz) {
            return Err(Error::InvalidParameter {
                name: "E_zz",
                value: e_zz,
                requirement: "QBER must lie in [0,1]",
            });
        }
        Ok(Self {
            n_total,
            s_z,
            s_x,
            t_x,
            e_zz,
        })
    }

    /// Session length (number of pulse-pair slots).
    pub fn n_total(&self) -> f64 {
        self.n_total
    }

    /// Yield of Z-grid two-pulse source `lr`.
    pub fn s(&self, l: Source, r: Source) -> f64 {
        self.s_z[z_index(l)][z_index(r)]
    }

    /// Yield of X-grid two-pulse source `lr`.
    pub fn s_x(&self, l: Source, r: Source) -> f64 {
        self.s_x[x_index(l)][x_index(r)]
    }

    /// Error yield of X-grid two-pulse source `lr`.
    pub fn t(&self, l: Source, r: Source) -> f64 {
        self.t_x[x_index(l)][x_index(r)]
    }

    /// Signal-source QBER.
    pub fn e_zz(&self) -> f64 {
        self.e_zz
    }

    /// Expected count caused by Z-grid source `lr`:
    /// `N_lr = S_lr p_l p_r N_total`.
    pub fn count_z(&self, l: Source, r: Source, alice: &PartyEnsemble, bob: &PartyEnsemble) -> f64 {
        self.s(l, r) * alice.source(l).select_prob() * bob.source(r).select_prob() * self.n_total
    }

    /// Expected error count caused by X-grid source `lr`:
    /// `M_lr = T_lr p_l p_r N_total`.
    pub fn error_count_x(
        &self,
        l: Source,
        r: Source,
        alice: &PartyEnsemble,
        bob: &PartyEnsemble,
    ) -> f64 {
        self.t(l, r) * alice.source(l).select_prob() * bob.source(r).select_prob() * self.n_total
    }
}

/// Expected observables for the no-fluctuation baseline: every pulse at
/// its nominal intensity, yields from the linear model.
///
/// Precondition (documented, enforced by the bounds pipeline): the decoy
/// ratio conditions hold for the ensembles. With fluctuation enabled the
/// caller should instead derive observables from a per-pulse scenario so
/// bounds and ground truth share one dataset.
pub fn simulate_observables(
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
    params: &ChannelParams,
    n_total: f64,
) -> Result<ObservedStats> {
    params.validate()?;
    if !(n_total > 0.0) {
        return Err(Error::InvalidParameter {
            name: "n_total",
            value: n_total,
            requirement: "must be positive",
        });
    }
    let kmax = alice.kmax();
    if bob.kmax() != kmax {
        return Err(Error::InvalidParameter {
            name: "kmax",
            value: bob.kmax() as f64,
            requirement: "alice and bob must share one truncation order",
        });
    }
    let classes = kmax + 2;
    let ym = YieldMatrix::linear_model(params, kmax);

    let coeffs = |ens: &PartyEnsemble, s: Source| {
        let mut v = vec![0.0; classes];
        fill_class_coeffs(ens.nominal_intensity(s), kmax, &mut v);
        v
    };

    let pair_sum = |a: &[f64], b: &[f64], m: &[f64]| -> f64 {
        let mut acc = 0.0;
        for j in 0..classes {
            for k in 0..classes {
                acc += a[j] * b[k] * m[j * classes + k];
            }
        }
        acc
    };

    let mut s_z = [[0.0; 3]; 3];
    for l in Z_SOURCES {
        let a = coeffs(alice, l);
        for r in Z_SOURCES {
            let b = coeffs(bob, r);
            s_z[z_index(l)][z_index(r)] = pair_sum(&a, &b, ym.y_flat());
        }
    }
    let mut s_x = [[0.0; 2]; 2];
    let mut t_x = [[0.0; 2]; 2];
    for l in X_SOURCES {
        let a = coeffs(alice, l);
        for r in X_SOURCES {
            let b = coeffs(bob, r);
            s_x[x_index(l)][x_index(r)] = pair_sum(&a, &b, ym.y_flat());
            t_x[x_index(l)][x_index(r)] = pair_sum(&a, &b, ym.t_flat());
        }
    }

    let az = coeffs(alice, Source::Z);
    let bz = coeffs(bob, Source::Z);
    let s_zz = s_z[2][2];
    if s_zz == 0.0 {
        return Err(Error::QberUndefined);
    }
    let e_zz = pair_sum(&az, &bz, ym.t_flat()) / s_zz;

    ObservedStats::new(n_total, s_z, s_x, t_x, e_zz)
}
