//! Signal-intensity optimization and the infinite-decoy reference curve.
//!
//! The certified key rate is cheap and piecewise-smooth with clamps, so a
//! deterministic exhaustive grid beats gradient schemes here: every grid
//! point either passes all admissibility gates and yields a rate, or is
//! skipped and counted. Results do not depend on evaluation order.

use crate::bounds::{binary_entropy, compute_bounds, BoundsReport};
use crate::channel::{simulate_observables, ChannelParams, YieldMatrix};
use crate::error::{Error, Result};
use crate::fock::{poisson_pmf, PartyEnsemble};

/// Per-party source description with an overridable signal intensity,
/// The optimizer rebuilds ensembles from this template at every grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct PartySpec {
    pub name: &'static str,
    /// Nominal intensities in `v, w, x, y, z` order.
    pub intensities: [f64; 5],
    /// `(delta_vac, delta_sig)` fluctuation bounds.
    pub deltas: (f64, f64),
    /// Selection probabilities in `v, w, x, y, z` order.
    pub probs: [f64; 5],
}

impl PartySpec {
    /// Builds the coherent ensemble, optionally overriding the signal
    /// intensity, fluctuation bounds, or selection probabilities.
    pub fn build(
        &self,
        kmax: usize,
        mu_z: Option<f64>,
        deltas: Option<(f64, f64)>,
        probs: Option<[f64; 5]>,
    ) -> Result<PartyEnsemble> {
        let mut mu = self.intensities;
        if let Some(z) = mu_z {
            mu[4] = z;
        }
        PartyEnsemble::coherent(
            self.name,
            mu,
            deltas.unwrap_or(self.deltas),
            probs.unwrap_or(self.probs),
            kmax,
        )
    }
}

/// Scan layout: signal-intensity grid, optional probability candidates,
/// and the (distance, fluctuation) product.
///
/// The signal grid should start above `mu_y (1 + delta_sig)` or the ratio
/// conditions reject the low end; rejected points are skipped and counted,
/// never fatal.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanSpec {
    pub mu_z_min: f64,
    pub mu_z_max: f64,
    pub mu_z_step: f64,
    /// Candidate selection-probability vectors (applied to both parties);
    /// empty means the configured probabilities are kept fixed.
    pub prob_candidates: Vec<[f64; 5]>,
    pub distances_km: Vec<f64>,
    /// `(delta_vac, delta_sig)` pairs, one curve each.
    pub delta_pairs: Vec<(f64, f64)>,
}

impl ScanSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_z_step > 0.0) {
            return Err(Error::InvalidParameter {
                name: "mu_z_step",
                value: self.mu_z_step,
                requirement: "grid step must be positive",
            });
        }
        if !(self.mu_z_min > 0.0 && self.mu_z_min <= self.mu_z_max) {
            return Err(Error::InvalidParameter {
                name: "mu_z_min",
                value: self.mu_z_min,
                requirement: "need 0 < mu_z_min <= mu_z_max",
            });
        }
        for d in &self.distances_km {
            if *d < 0.0 {
                return Err(Error::InvalidParameter {
                    name: "distances_km",
                    value: *d,
                    requirement: "distances must be non-negative",
                });
            }
        }
        Ok(())
    }

    /// Deterministic signal-intensity grid.
    pub fn mu_z_grid(&self) -> Vec<f64> {
        let mut grid = Vec::new();
        let mut i = 0usize;
        loop {
            let mu = self.mu_z_min + self.mu_z_step * i as f64;
            if mu > self.mu_z_max + 1e-12 {
                break;
            }
            grid.push(mu);
            i += 1;
        }
        grid
    }
}

/// Winning grid point for one (distance, delta) cell.
#[derive(Clone, Debug)]
pub struct GridBest {
    pub mu_z: f64,
    /// Probability vector used (the configured one unless candidates were
    /// scanned).
    pub probs: [f64; 5],
    pub report: BoundsReport,
}

/// Outcome of one (distance, delta) cell.
#[derive(Clone, Debug)]
pub struct GridOutcome {
    pub distance_km: f64,
    pub delta_vac: f64,
    pub delta_sig: f64,
    /// Best admissible grid point, or `None` when every point failed a gate.
    pub best: Option<GridBest>,
    /// Number of grid points rejected by admissibility gates.
    pub skipped: usize,
}

impl GridOutcome {
    /// Converts an empty cell into the optimizer's error.
    pub fn require(&self) -> Result<&GridBest> {
        self.best.as_ref().ok_or(Error::NoAdmissibleSignal)
    }
}

/// Exhaustive deterministic maximization of the certified key rate over
/// the signal-intensity grid (and probability candidates, when given) for
/// every (distance, delta) cell.
pub fn optimize_key_rate(
    spec: &ScanSpec,
    channel: &ChannelParams,
    alice: &PartySpec,
    bob: &PartySpec,
    kmax: usize,
    n_total: f64,
) -> Result<Vec<GridOutcome>> {
    spec.validate()?;
    channel.validate()?;
    let grid = spec.mu_z_grid();
    let prob_sets: Vec<Option<[f64; 5]>> = if spec.prob_candidates.is_empty() {
        vec![None]
    } else {
        spec.prob_candidates.iter().copied().map(Some).collect()
    };
    let mut out = Vec::with_capacity(spec.distances_km.len() * spec.delta_pairs.len());
    for &distance in &spec.distances_km {
        let params = ChannelParams {
            distance_km: distance,
            ..*channel
        };
        for &(d1, d2) in &spec.delta_pairs {
            let mut best: Option<GridBest> = None;
            let mut skipped = 0usize;
            for &mu_z in &grid {
                for probs in &prob_sets {
                    let cell = (|| -> Result<GridBest> {
                        let a = alice.build(kmax, Some(mu_z), Some((d1, d2)), *probs)?;
                        let b = bob.build(kmax, Some(mu_z), Some((d1, d2)), *probs)?;
                        let stats = simulate_observables(&a, &b, &params, n_total)?;
                        let report = compute_bounds(&stats, &a, &b, params.error_corr_ineff)?;
                        Ok(GridBest {
                            mu_z,
                            probs: probs.unwrap_or(alice.probs),
                            report,
                        })
                    })();
                    match cell {
                        Ok(candidate) => {
                            let better = match &best {
                                None => true,
                                Some(b) => candidate.report.key_rate > b.report.key_rate,
                            };
                            if better {
                                best = Some(candidate);
                            }
                        }
                        Err(_) => skipped += 1,
                    }
                }
            }
            out.push(GridOutcome {
                distance_km: distance,
                delta_vac: d1,
                delta_sig: d2,
                best,
                skipped,
            });
        }
    }
    Ok(out)
}

/// Key rate of the idealized protocol with an unlimited number of decoy
/// intensities and no source errors: the exact single-photon yield and
/// error rate of the channel replace the certified bounds.
pub fn infinite_decoy_reference(
    params: &ChannelParams,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
    n_total: f64,
) -> Result<f64> {
    let stats = simulate_observables(alice, bob, params, n_total)?;
    let kmax = alice.kmax();
    let ym = YieldMatrix::linear_model(params, kmax);
    let y11 = ym.y(1, 1);
    let t11 = ym.t(1, 1);
    let a1 = poisson_pmf(alice.nominal_intensity(crate::fock::Source::Z), 1);
    let b1 = poisson_pmf(bob.nominal_intensity(crate::fock::Source::Z), 1);
    let s_zz = stats.s(crate::fock::Source::Z, crate::fock::Source::Z);
    let delta11 = a1 * b1 * y11 / s_zz;
    let e11 = if y11 > 0.0 { t11 / y11 } else { 0.0 };
    let h11 = if e11 >= 0.5 {
        1.0
    } else {
        binary_entropy(e11)?
    };
    let r = s_zz
        * (delta11 * (1.0 - h11)
            - params.error_corr_ineff * binary_entropy(stats.e_zz())?);
    Ok(r.max(0.0))
}

/// Maximizes the infinite-decoy reference over the same signal grid.
/// Returns `None` when the reference is undefined at every point (no
/// signal gain at all).
pub fn optimize_infinite_decoy(
    spec: &ScanSpec,
    channel: &ChannelParams,
    alice: &PartySpec,
    bob: &PartySpec,
    kmax: usize,
    n_total: f64,
    distance_km: f64,
) -> Result<Option<(f64, f64)>> {
    spec.validate()?;
    let params = ChannelParams {
        distance_km,
        ..*channel
    };
    let mut best: Option<(f64, f64)> = None;
    for mu_z in spec.mu_z_grid() {
        let outcome = (|| -> Result<f64> {
            let a = alice.build(kmax, Some(mu_z), Some((0.0, 0.0)), None)?;
            let b = bob.build(kmax, Some(mu_z), Some((0.0, 0.0)), None)?;
            infinite_decoy_reference(&params, &a, &b, n_total)
        })();
        if let Ok(r) = outcome {
            let better = match best {
                None => true,
                Some((_, rb)) => r > rb,
            };
            if better {
                best = Some((mu_z, r));
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> ChannelParams {
        ChannelParams::default()
    }

    fn party() -> PartySpec {
        PartySpec {
            name: "party",
            intensities: [1e-4, 1e-4, 0.03, 0.03, 0.5],
            deltas: (0.0, 0.0),
            probs: [0.1, 0.1, 0.2, 0.25, 0.35],
        }
    }

    fn spec(distances: Vec<f64>, deltas: Vec<(f64, f64)>) -> ScanSpec {
        ScanSpec {
            mu_z_min: 0.1,
            mu_z_max: 0.7,
            mu_z_step: 0.01,
            prob_candidates: vec![],
            distances_km: distances,
            delta_pairs: deltas,
        }
    }

    #[test]
    fn single_point_grid_returns_that_point() {
        let mut s = spec(vec![25.0], vec![(0.0, 0.0)]);
        s.mu_z_min = 0.4;
        s.mu_z_max = 0.4;
        let out = optimize_key_rate(&s, &table1(), &party(), &party(), 10, 1e10).unwrap();
        assert_eq!(out.len(), 1);
        let best = out[0].require().unwrap();
        assert_eq!(best.mu_z, 0.4);
        assert!(best.report.key_rate > 0.0);
    }

    #[test]
    fn grid_argmax_close_to_refined_search() {
        let s = spec(vec![25.0], vec![(0.0, 0.005)]);
        let out = optimize_key_rate(&s, &table1(), &party(), &party(), 10, 1e10).unwrap();
        let best = out[0].require().unwrap();
        // Refine around the argmax with a ternary search on the same
        // objective; the grid answer must sit within one step.
        let eval = |mu: f64| -> f64 {
            let a = party().build(10, Some(mu), Some((0.0, 0.005)), None).unwrap();
            let params = ChannelParams {
                distance_km: 25.0,
                ..table1()
            };
            let stats = simulate_observables(&a, &a, &params, 1e10).unwrap();
            compute_bounds(&stats, &a, &a, params.error_corr_ineff)
                .map(|r| r.key_rate)
                .unwrap_or(0.0)
        };
        let (mut lo, mut hi) = (
            (best.mu_z - 0.05).max(s.mu_z_min),
            (best.mu_z + 0.05).min(s.mu_z_max),
        );
        for _ in 0..60 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if eval(m1) < eval(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        let refined = (lo + hi) / 2.0;
        assert!(
            (best.mu_z - refined).abs() <= s.mu_z_step + 1e-9,
            "grid {} vs refined {refined}",
            best.mu_z
        );
    }

    #[test]
    fn wider_fluctuation_never_helps() {
        let s = spec(vec![25.0, 50.0], vec![(0.0, 0.0), (0.0, 0.01), (0.0, 0.02)]);
        let out = optimize_key_rate(&s, &table1(), &party(), &party(), 10, 1e10).unwrap();
        for chunk in out.chunks(3) {
            let rates: Vec<f64> = chunk
                .iter()
                .map(|o| o.best.as_ref().map(|b| b.report.key_rate).unwrap_or(0.0))
                .collect();
            assert!(
                rates[0] >= rates[1] && rates[1] >= rates[2],
                "rates not monotone in delta: {rates:?}"
            );
        }
    }

    #[test]
    fn infinite_decoy_dominates_certified_rate() {
        for &(d1, d2) in &[(0.0, 0.0), (0.01, 0.01), (0.0, 0.02)] {
            let a = party().build(10, Some(0.5), Some((d1, d2)), None).unwrap();
            let params = ChannelParams {
                distance_km: 25.0,
                ..table1()
            };
            let stats = simulate_observables(&a, &a, &params, 1e10).unwrap();
            let rep = compute_bounds(&stats, &a, &a, params.error_corr_ineff).unwrap();
            let a0 = party().build(10, Some(0.5), Some((0.0, 0.0)), None).unwrap();
            let r_inf = infinite_decoy_reference(&params, &a0, &a0, 1e10).unwrap();
            assert!(
                r_inf >= rep.key_rate,
                "delta = ({d1}, {d2}): r_inf = {r_inf} < certified {}",
                rep.key_rate
            );
        }
    }

    #[test]
    fn infinite_decoy_error_free_without_darks_and_misalignment() {
        let params = ChannelParams {
            distance_km: 10.0,
            dark_rate: 0.0,
            misalignment: 0.0,
            ..table1()
        };
        let a = party().build(10, Some(0.4), Some((0.0, 0.0)), None).unwrap();
        let ym = YieldMatrix::linear_model(&params, 10);
        assert_eq!(ym.t(1, 1), 0.0);
        let r = infinite_decoy_reference(&params, &a, &a, 1e10).unwrap();
        assert!(r > 0.0);
    }

    #[test]
    fn infinite_decoy_vanishes_at_extreme_distance() {
        let params = ChannelParams {
            distance_km: 500.0,
            ..table1()
        };
        let a = party().build(10, Some(0.4), Some((0.0, 0.0)), None).unwrap();
        let r = infinite_decoy_reference(&params, &a, &a, 1e10).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn determinism_same_spec_same_result() {
        let s = spec(vec![30.0], vec![(0.005, 0.01)]);
        let o1 = optimize_key_rate(&s, &table1(), &party(), &party(), 8, 1e10).unwrap();
        let o2 = optimize_key_rate(&s, &table1(), &party(), &party(), 8, 1e10).unwrap();
        assert_eq!(o1.len(), o2.len());
        let b1 = o1[0].require().unwrap();
        let b2 = o2[0].require().unwrap();
        assert_eq!(b1.mu_z, b2.mu_z);
        assert_eq!(b1.report.key_rate, b2.report.key_rate);
    }

    #[test]
    fn infeasible_grid_reports_no_admissible_signal() {
        // Signal grid entirely below the decoy intensity.
        let mut s = spec(vec![25.0], vec![(0.0, 0.0)]);
        s.mu_z_min = 0.001;
        s.mu_z_max = 0.002;
        s.mu_z_step = 0.001;
        let out = optimize_key_rate(&s, &table1(), &party(), &party(), 8, 1e10).unwrap();
        assert!(out[0].best.is_none());
        assert!(out[0].skipped > 0);
        assert!(matches!(
            out[0].require(),
            Err(Error::NoAdmissibleSignal)
        ));
    }
}
