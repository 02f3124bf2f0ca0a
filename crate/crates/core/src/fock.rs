//! Photon-number-diagonal source modeling.
//!
//! Each party owns five sources: `v`, `w` (imperfect vacua for the X and Z
//! bases), `x`, `y` (decoys), and `z` (signal). A source is described not by
//! a single photon-number distribution but by per-coefficient intervals
//! `[lower_k, upper_k]` that contain every per-pulse coefficient the device
//! can emit. For lasers the intervals come from the intensity-fluctuation
//! model `mu_i = mu * (1 + d_i)` with `|d_i|` bounded; arbitrary diagonal
//! sources can supply intervals directly.
//!
//! Photon numbers above `kmax` are carried as an explicit tail class with
//! its own interval; nothing is silently dropped.
//!
//! All values are immutable after construction and every operation is a
//! pure function.

use crate::error::{Error, Result};

/// Source labels shared by both parties.
///
/// `V`/`W` are the unstable vacuum sources of the X and Z bases, `X`/`Y`
/// the decoys, `Z` the signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    V = 0,
    W = 1,
    X = 2,
    Y = 3,
    Z = 4,
}

impl Source {
    pub const ALL: [Source; 5] = [Source::V, Source::W, Source::X, Source::Y, Source::Z];

    /// Lower-case protocol label.
    pub fn label(self) -> char {
        match self {
            Source::V => 'v',
            Source::W => 'w',
            Source::X => 'x',
            Source::Y => 'y',
            Source::Z => 'z',
        }
    }

    /// True for the vacuum-class sources `v`, `w` (fluctuation bound `delta_vac`).
    pub fn is_vacuum_class(self) -> bool {
        matches!(self, Source::V | Source::W)
    }
}

/// A single concrete pulse's photon-number distribution, truncated at `kmax`
/// with the remaining probability carried in `tail_mass`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhotonDistribution {
    /// `coeffs[k]` is the probability of emitting exactly `k` photons, `k <= kmax`.
    pub coeffs: Vec<f64>,
    /// Probability of emitting more than `kmax` photons.
    pub tail_mass: f64,
}

impl PhotonDistribution {
    /// Truncation order.
    pub fn kmax(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Checks the normalization invariant: coefficients in [0,1],
    /// `sum + tail = 1` within `1e-12`.
    pub fn validate(&self) -> Result<()> {
        for &c in &self.coeffs {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidParameter {
                    name: "coeffs",
                    value: c,
                    requirement: "each photon-number coefficient must lie in [0,1]",
                });
            }
        }
        if self.tail_mass < 0.0 {
            return Err(Error::InvalidParameter {
                name: "tail_mass",
                value: self.tail_mass,
                requirement: "must be non-negative",
            });
        }
        let total: f64 = self.coeffs.iter().sum::<f64>() + self.tail_mass;
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter {
                name: "coeffs+tail_mass",
                value: total,
                requirement: "must sum to 1 within 1e-12",
            });
        }
        Ok(())
    }
}

/// Poisson probability `e^-mu mu^k / k!`, computed by stable recurrence.
pub fn poisson_pmf(mu: f64, k: usize) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let mut p = (-mu).exp();
    for i in 1..=k {
        p *= mu / i as f64;
    }
    p
}

/// Probability of more than `kmax` photons for a Poisson source, summed
/// forward term by term to avoid the cancellation in `1 - cdf`.
pub fn poisson_tail_mass(mu: f64, kmax: usize) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    poisson_tail_mass_from(poisson_pmf(mu, kmax), mu, kmax)
}

/// Writes the class-coefficient vector of a Poisson source into `out`:
/// entries `0..=kmax` are the photon-number probabilities and the final
/// entry is the tail-class mass. `out.len()` must be `kmax + 2`.
#[allow(clippy::needless_range_loop)]
pub fn fill_class_coeffs(mu: f64, kmax: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), kmax + 2);
    if mu == 0.0 {
        out.fill(0.0);
        out[0] = 1.0;
        return;
    }
    let mut p = (-mu).exp();
    out[0] = p;
    for k in 1..=kmax {
        p *= mu / k as f64;
        out[k] = p;
    }
    out[kmax + 1] = poisson_tail_mass_from(p, mu, kmax);
}

fn poisson_tail_mass_from(pmf_kmax: f64, mu: f64, kmax: usize) -> f64 {
    let mut term = pmf_kmax * mu / (kmax + 1) as f64;
    let mut sum = 0.0;
    let mut k = kmax + 1;
    while term > 0.0 && k < kmax + 400 {
        sum += term;
        k += 1;
        term *= mu / k as f64;
        if term < sum * 1e-18 {
            sum += term;
            break;
        }
    }
    sum
}

/// Truncated Poisson photon-number distribution for a phase-randomized
/// coherent pulse of intensity `mu`.
pub fn poisson_coeffs(mu: f64, kmax: usize) -> Result<PhotonDistribution> {
    if mu < 0.0 {
        return Err(Error::InvalidParameter {
            name: "mu",
            value: mu,
            requirement: "mean photon number must be non-negative",
        });
    }
    if kmax < 2 {
        return Err(Error::InvalidParameter {
            name: "kmax",
            value: kmax as f64,
            requirement: "truncation order must be at least 2",
        });
    }
    let coeffs: Vec<f64> = (0..=kmax).map(|k| poisson_pmf(mu, k)).collect();
    Ok(PhotonDistribution {
        coeffs,
        tail_mass: poisson_tail_mass(mu, kmax),
    })
}

/// Range of `e^-mu mu^k / k!` over `mu in [mu0(1-delta), mu0(1+delta)]`.
///
/// The extremum is at an endpoint except for the interior critical point
/// `mu = k`, which is a maximum when it falls inside the window.
pub fn coeff_interval(mu_nominal: f64, delta: f64, k: usize) -> Result<(f64, f64)> {
    check_fluctuation_inputs(mu_nominal, delta)?;
    let lo = mu_nominal * (1.0 - delta);
    let hi = mu_nominal * (1.0 + delta);
    let f_lo = poisson_pmf(lo, k);
    let f_hi = poisson_pmf(hi, k);
    if k == 0 {
        // e^-mu is decreasing.
        return Ok((f_hi, f_lo));
    }
    let kf = k as f64;
    let (lower, upper) = if hi <= kf {
        (f_lo, f_hi) // increasing branch
    } else if lo >= kf {
        (f_hi, f_lo) // decreasing branch
    } else {
        (f_lo.min(f_hi), poisson_pmf(kf, k))
    };
    Ok((lower, upper))
}

/// Range of the `> kmax` tail mass over the same intensity window.
/// The tail is increasing in `mu`.
pub fn tail_interval(mu_nominal: f64, delta: f64, kmax: usize) -> Result<(f64, f64)> {
    check_fluctuation_inputs(mu_nominal, delta)?;
    Ok((
        poisson_tail_mass(mu_nominal * (1.0 - delta), kmax),
        poisson_tail_mass(mu_nominal * (1.0 + delta), kmax),
    ))
}

fn check_fluctuation_inputs(mu_nominal: f64, delta: f64) -> Result<()> {
    if mu_nominal < 0.0 {
        return Err(Error::InvalidParameter {
            name: "mu",
            value: mu_nominal,
            requirement: "mean photon number must be non-negative",
        });
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidParameter {
            name: "delta",
            value: delta,
            requirement: "fluctuation bound must lie in [0,1)",
        });
    }
    Ok(())
}

/// Interval bounds on one source's photon-number coefficients, plus its
/// selection probability.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffIntervalSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
    tail_lower: f64,
    tail_upper: f64,
    select_prob: f64,
}

impl CoeffIntervalSet {
    /// Builds the interval set for a coherent source under the
    /// `mu_i = mu (1 + d_i)`, `|d_i| <= delta` fluctuation model.
    pub fn coherent(mu: f64, delta: f64, select_prob: f64, kmax: usize) -> Result<Self> {
        let mut lower = Vec::with_capacity(kmax + 1);
        let mut upper = Vec::with_capacity(kmax + 1);
        for k in 0..=kmax {
            let (l, u) = coeff_interval(mu, delta, k)?;
            lower.push(l);
            upper.push(u);
        }
        let (tail_lower, tail_upper) = tail_interval(mu, delta, kmax)?;
        Self::from_raw(lower, upper, tail_lower, tail_upper, select_prob)
    }

    /// Builds an interval set from explicit bounds (for non-coherent sources,
    /// e.g. heralded parametric down-conversion).
    pub fn from_raw(
        lower: Vec<f64>,
        upper: Vec<f64>,
        tail_lower: f64,
        tail_upper: f64,
        select_prob: f64,
    ) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() < 3 {
            return Err(Error::InvalidParameter {
                name: "kmax",
                value: lower.len() as f64,
                requirement: "interval vectors need equal length covering k = 0..=kmax, kmax >= 2",
            });
        }
        for k in 0..lower.len() {
            if !(0.0 <= lower[k] && lower[k] <= upper[k] && upper[k] <= 1.0) {
                return Err(Error::InvalidParameter {
                    name: "coefficient interval",
                    value: lower[k],
                    requirement: "need 0 <= lower[k] <= upper[k] <= 1",
                });
            }
        }
        if !(0.0 <= tail_lower && tail_lower <= tail_upper && tail_upper <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "tail interval",
                value: tail_lower,
                requirement: "need 0 <= tail_lower <= tail_upper <= 1",
            });
        }
        let sum_lower: f64 = lower.iter().sum::<f64>() + tail_lower;
        let sum_upper: f64 = upper.iter().sum::<f64>() + tail_upper;
        if sum_lower > 1.0 + 1e-9 || sum_upper < 1.0 - 1e-9 {
            return Err(Error::InvalidParameter {
                name: "coefficient intervals",
                value: sum_lower,
                requirement: "intervals must contain at least one normalized distribution",
            });
        }
        if !(select_prob > 0.0 && select_prob < 1.0) {
            return Err(Error::InvalidParameter {
                name: "select_prob",
                value: select_prob,
                requirement: "selection probability must lie in (0,1)",
            });
        }
        Ok(Self {
            lower,
            upper,
            tail_lower,
            tail_upper,
            select_prob,
        })
    }

    /// Truncation order.
    pub fn kmax(&self) -> usize {
        self.lower.len() - 1
    }

    /// Lower bound of the `k`-photon coefficient.
    pub fn lower(&self, k: usize) -> f64 {
        self.lower[k]
    }

    /// Upper bound of the `k`-photon coefficient.
    pub fn upper(&self, k: usize) -> f64 {
        self.upper[k]
    }

    /// Lower bound of the tail-class (`> kmax` photons) mass.
    pub fn tail_lower(&self) -> f64 {
        self.tail_lower
    }

    /// Upper bound of the tail-class mass.
    pub fn tail_upper(&self) -> f64 {
        self.tail_upper
    }

    /// Selection probability of this source.
    pub fn select_prob(&self) -> f64 {
        self.select_prob
    }

    /// True when every interval is a point (no fluctuation).
    pub fn is_degenerate(&self) -> bool {
        self.tail_lower == self.tail_upper
            && self.lower.iter().zip(&self.upper).all(|(l, u)| l == u)
    }

    /// True when `dist` lies inside every interval, within `rel_tol`
    /// relative slack per coefficient.
    pub fn contains(&self, dist: &PhotonDistribution, rel_tol: f64) -> bool {
        if dist.coeffs.len() != self.lower.len() {
            return false;
        }
        let inside = |v: f64, lo: f64, hi: f64| {
            let pad = rel_tol * v.abs().max(lo.abs()).max(hi.abs());
            v >= lo - pad && v <= hi + pad
        };
        dist.coeffs
            .iter()
            .enumerate()
            .all(|(k, &c)| inside(c, self.lower[k], self.upper[k]))
            && inside(dist.tail_mass, self.tail_lower, self.tail_upper)
    }
}

/// One party's five sources with their fluctuation model.
#[derive(Clone, Debug, PartialEq)]
pub struct PartyEnsemble {
    sources: [CoeffIntervalSet; 5],
    nominal_intensity: [f64; 5],
    delta_vac: f64,
    delta_sig: f64,
    /// Set by the coherent constructor; enables the closed-form per-pulse
    /// ratio certificate in the vacuum-reference condition check.
    coherent_model: bool,
}

impl PartyEnsemble {
    /// Assembles a coherent-source ensemble: every interval set is derived
    /// from `coeff_interval` with `delta_vac` for `v`,`w` and `delta_sig`
    /// for `x`,`y`,`z`.
    pub fn coherent(
        party: &'static str,
        nominal: [f64; 5],
        deltas: (f64, f64),
        probs: [f64; 5],
        kmax: usize,
    ) -> Result<Self> {
        let (delta_vac, delta_sig) = deltas;
        let mut sets = Vec::with_capacity(5);
        for s in Source::ALL {
            let idx = s as usize;
            let delta = if s.is_vacuum_class() {
                delta_vac
            } else {
                delta_sig
            };
            sets.push(CoeffIntervalSet::coherent(
                nominal[idx],
                delta,
                probs[idx],
                kmax,
            )?);
        }
        let sources: [CoeffIntervalSet; 5] = sets.try_into().expect("five sources");
        Self::from_parts(party, sources, nominal, delta_vac, delta_sig, true)
    }

    /// Assembles an ensemble from caller-supplied interval sets, bypassing
    /// the Poisson model. The nominal intensities are still required for
    /// the ladder-ordering invariant.
    pub fn from_interval_sets(
        party: &'static str,
        sources: [CoeffIntervalSet; 5],
        nominal_intensity: [f64; 5],
        deltas: (f64, f64),
    ) -> Result<Self> {
        Self::from_parts(
            party,
            sources,
            nominal_intensity,
            deltas.0,
            deltas.1,
            false,
        )
    }

    fn from_parts(
        party: &'static str,
        sources: [CoeffIntervalSet; 5],
        nominal_intensity: [f64; 5],
        delta_vac: f64,
        delta_sig: f64,
        coherent_model: bool,
    ) -> Result<Self> {
        for d in [delta_vac, delta_sig] {
            if !(0.0..1.0).contains(&d) {
                return Err(Error::InvalidParameter {
                    name: "delta",
                    value: d,
                    requirement: "fluctuation bound must lie in [0,1)",
                });
            }
        }
        let psum: f64 = sources.iter().map(|s| s.select_prob()).sum();
        if (psum - 1.0).abs() > 1e-12 {
            return Err(Error::ProbabilitySum { party, sum: psum });
        }
        let mu = |s: Source| nominal_intensity[s as usize];
        if !(mu(Source::W) < mu(Source::Y) && mu(Source::Y) < mu(Source::Z)) {
            return Err(Error::IntensityOrdering {
                party,
                detail: format!(
                    "need mu_w < mu_y < mu_z, got mu_w = {}, mu_y = {}, mu_z = {}",
                    mu(Source::W),
                    mu(Source::Y),
                    mu(Source::Z)
                ),
            });
        }
        if !(mu(Source::V) < mu(Source::X)) {
            return Err(Error::IntensityOrdering {
                party,
                detail: format!(
                    "need mu_v < mu_x, got mu_v = {}, mu_x = {}",
                    mu(Source::V),
                    mu(Source::X)
                ),
            });
        }
        let kmax = sources[0].kmax();
        if sources.iter().any(|s| s.kmax() != kmax) {
            return Err(Error::InvalidParameter {
                name: "kmax",
                value: kmax as f64,
                requirement: "all five sources must share one truncation order",
            });
        }
        Ok(Self {
            sources,
            nominal_intensity,
            delta_vac,
            delta_sig,
            coherent_model,
        })
    }

    /// Interval set of one source.
    pub fn source(&self, s: Source) -> &CoeffIntervalSet {
        &self.sources[s as usize]
    }

    /// Nominal mean photon number of one source.
    pub fn nominal_intensity(&self, s: Source) -> f64 {
        self.nominal_intensity[s as usize]
    }

    /// Fluctuation bound applying to one source.
    pub fn delta_for(&self, s: Source) -> f64 {
        if s.is_vacuum_class() {
            self.delta_vac
        } else {
            self.delta_sig
        }
    }

    pub fn delta_vac(&self) -> f64 {
        self.delta_vac
    }

    pub fn delta_sig(&self) -> f64 {
        self.delta_sig
    }

    /// Truncation order shared by all five sources.
    pub fn kmax(&self) -> usize {
        self.sources[0].kmax()
    }

    /// True when built by the coherent constructor.
    pub fn is_coherent_model(&self) -> bool {
        self.coherent_model
    }
}

/// Comparison slack for the ratio chains: pure float noise must not flip
/// a gate on exactly-degenerate configurations.
const RATIO_TOL: f64 = 1e-12;

fn ratio_ge(lhs: f64, rhs: f64) -> bool {
    lhs >= rhs - RATIO_TOL * rhs.abs()
}

/// Outcome of a decoy-condition admissibility check.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionCheck {
    pub ok: bool,
    /// First violated link when `ok` is false.
    pub violation: Option<String>,
    /// Which certificate succeeded, for the vacuum-reference condition.
    pub certificate: Option<Certificate>,
}

impl ConditionCheck {
    fn pass(certificate: Option<Certificate>) -> Self {
        Self {
            ok: true,
            violation: None,
            certificate,
        }
    }

    fn fail(violation: String) -> Self {
        Self {
            ok: false,
            violation: Some(violation),
            certificate: None,
        }
    }

    /// Converts a failed check into the hard-gate error the bounds module
    /// raises before computing anything.
    pub fn require(&self, which: &'static str) -> Result<()> {
        if self.ok {
            Ok(())
        } else {
            Err(Error::ConditionViolated {
                which,
                detail: self.violation.clone().unwrap_or_default(),
            })
        }
    }
}

/// Certificates by which the vacuum-reference ratio condition can be
/// established.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Certificate {
    /// Coherent model with separated intensity windows: the per-pulse
    /// Poisson ratio is non-decreasing in k for every admissible pulse.
    CoherentIntensityGap,
    /// Generic worst-case interval comparison.
    IntervalWorstCase,
}

/// Signal/decoy ratio-chain condition on the Z ladder:
/// `a_k(z,lower)/a_k(y,upper) >= a_2(z,lower)/a_2(y,upper) >=
/// a_1(z,lower)/a_1(y,upper)` for all k >= 2, on both parties.
///
/// Checked for k = 2..=kmax plus the tail class, with the additional
/// monotone-tail certificate that the ratio is non-decreasing at `kmax`.
pub fn check_condition_ratio_z(
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
    kmax: usize,
) -> ConditionCheck {
    for (party, ens) in [("alice", alice), ("bob", bob)] {
        let dec = ens.source(Source::Y);
        let sig = ens.source(Source::Z);
        for k in 1..=kmax {
            if dec.upper(k) == 0.0 {
                return ConditionCheck::fail(format!(
                    "{party}: decoy coefficient upper bound is zero at k = {k}; \
                     ratio a_k(z,L)/a_k(y,U) undefined"
                ));
            }
        }
        let ratio = |k: usize| sig.lower(k) / dec.upper(k);
        let r1 = ratio(1);
        let r2 = ratio(2);
        if !ratio_ge(r2, r1) {
            return ConditionCheck::fail(format!(
                "{party}: ratio chain broken at k = 2: a_2(z,L)/a_2(y,U) = {r2} < \
                 a_1(z,L)/a_1(y,U) = {r1}"
            ));
        }
        for k in 3..=kmax {
            let rk = ratio(k);
            if !ratio_ge(rk, r2) {
                return ConditionCheck::fail(format!(
                    "{party}: ratio chain broken at k = {k}: a_k(z,L)/a_k(y,U) = {rk} < \
                     a_2(z,L)/a_2(y,U) = {r2}"
                ));
            }
        }
        // Monotone-tail certificate for k > kmax.
        if kmax >= 3 && !ratio_ge(ratio(kmax), ratio(kmax - 1)) {
            return ConditionCheck::fail(format!(
                "{party}: ratio not non-decreasing at k = {kmax}; tail behaviour uncertified"
            ));
        }
        // Explicit tail-class link, since the tail carries real mass.
        if dec.tail_upper() > 0.0 {
            let rt = sig.tail_lower() / dec.tail_upper();
            if !ratio_ge(rt, r2) {
                return ConditionCheck::fail(format!(
                    "{party}: ratio chain broken at tail class: {rt} < {r2}"
                ));
            }
        }
    }
    ConditionCheck::pass(None)
}

/// Vacuum-reference ratio condition: for every pulse,
/// `a_k(l)/a_k(w) >= a_1(l)/a_1(w)` for the Z-ladder pairs (l = y, z against
/// w) and the X-ladder pair (x against v), for all k >= 2 and the tail class.
///
/// Two sufficient certificates are tried per pair: the coherent-model
/// intensity-gap argument (per-pulse Poisson ratio non-decreasing in k
/// whenever the reference window sits wholly below the target window), then
/// the generic worst-case interval comparison
/// `a_k(l,L) * a_1(w,L) >= a_1(l,U) * a_k(w,U)`.
pub fn check_condition_ratio_w(
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
    kmax: usize,
) -> ConditionCheck {
    let pairs: [(Source, Source); 3] = [
        (Source::W, Source::Y),
        (Source::W, Source::Z),
        (Source::V, Source::X),
    ];
    let mut cert = Certificate::CoherentIntensityGap;
    for (party, ens) in [("alice", alice), ("bob", bob)] {
        for (vac, target) in pairs {
            match check_vacuum_pair(ens, vac, target, kmax) {
                Ok(Certificate::CoherentIntensityGap) => {}
                Ok(Certificate::IntervalWorstCase) => cert = Certificate::IntervalWorstCase,
                Err(detail) => {
                    return ConditionCheck::fail(format!(
                        "{party}: pair ({}, {}): {detail}",
                        vac.label(),
                        target.label()
                    ))
                }
            }
        }
    }
    ConditionCheck::pass(Some(cert))
}

fn check_vacuum_pair(
    ens: &PartyEnsemble,
    vac: Source,
    target: Source,
    kmax: usize,
) -> std::result::Result<Certificate, String> {
    if ens.is_coherent_model() {
        let vac_hi = ens.nominal_intensity(vac) * (1.0 + ens.delta_for(vac));
        let tgt_lo = ens.nominal_intensity(target) * (1.0 - ens.delta_for(target));
        if vac_hi <= tgt_lo {
            return Ok(Certificate::CoherentIntensityGap);
        }
    }
    let v = ens.source(vac);
    let t = ens.source(target);
    let lhs_base = v.lower(1);
    let rhs_base = t.upper(1);
    for k in 2..=kmax {
        if !ratio_ge(t.lower(k) * lhs_base, rhs_base * v.upper(k)) {
            return Err(format!(
                "worst-case interval check failed at k = {k}: \
                 a_k(target,L)*a_1(vac,L) = {} < a_1(target,U)*a_k(vac,U) = {}{}",
                t.lower(k) * lhs_base,
                rhs_base * v.upper(k),
                if ens.is_coherent_model() {
                    "; intensity windows overlap, gap certificate unavailable"
                } else {
                    ""
                }
            ));
        }
    }
    if !ratio_ge(t.tail_lower() * lhs_base, rhs_base * v.tail_upper()) {
        return Err(format!(
            "worst-case interval check failed at tail class: {} < {}",
            t.tail_lower() * lhs_base,
            rhs_base * v.tail_upper()
        ));
    }
    Ok(Certificate::IntervalWorstCase)
}
