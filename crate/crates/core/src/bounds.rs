//! Certified security bounds from interval coefficients and observed
//! statistics.
//!
//! Given the per-source coefficient intervals of both parties and the
//! observed yields, this module computes
//!
//! * a lower bound on the source-independent single-photon pair tally
//!   (`single_photon_pairs_lower`),
//! * a lower bound on the fraction of signal-source counts caused by
//!   single-photon pairs (`single_photon_fraction_lower`),
//! * an upper bound on the matching error tally and on the single-photon
//!   phase-flip error rate (`error_tally_upper`, `phase_error_rate_upper`),
//! * and the final secure key rate (`key_rate`).
//!
//! Every bound is admissible only under the ratio conditions checked by
//! [`crate::fock::check_condition_ratio_z`] and
//! [`crate::fock::check_condition_ratio_w`] and under the sigma gates
//! below; [`compute_bounds`] enforces all of them and refuses to produce a
//! number otherwise. Raw (pre-clamp) values are retained in the report so
//! degenerate inputs stay auditable without crashing a scan.
//!
//! Counts are real-valued expectations throughout; no integer rounding.

use crate::channel::ObservedStats;
use crate::error::{Error, Result};
use crate::fock::{
    check_condition_ratio_w, check_condition_ratio_z, CoeffIntervalSet, PartyEnsemble, Source,
};

/// Binary Shannon entropy in bits, with the `0 log 0 = 0` convention.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidParameter {
            name: "x",
            value: x,
            requirement: "binary entropy argument must lie in [0,1]",
        });
    }
    let term = |p: f64| if p == 0.0 { 0.0 } else { -p * p.log2() };
    Ok(term(x) + term(1.0 - x))
}

/// Zero/one/two-photon interval bounds and selection probability of one
/// source, flattened for formula readability: `l0` is the lower bound of
/// the zero-photon coefficient, `u2` the upper bound of the two-photon
/// coefficient, and so on.
#[derive(Clone, Copy, Debug)]
struct Coef {
    p: f64,
    l0: f64,
    u0: f64,
    l1: f64,
    u1: f64,
    l2: f64,
    u2: f64,
}

fn coef(set: &CoeffIntervalSet) -> Coef {
    Coef {
        p: set.select_prob(),
        l0: set.lower(0),
        u0: set.upper(0),
        l1: set.lower(1),
        u1: set.upper(1),
        l2: set.lower(2),
        u2: set.upper(2),
    }
}

/// `num / den`, except that a zero numerator short-circuits to zero so a
/// perfect vacuum source (upper one-photon bound exactly 0) never trips a
/// spurious division gate.
fn safe_ratio(num: f64, den: f64, source: char, side: &'static str) -> Result<f64> {
    if num == 0.0 {
        return Ok(0.0);
    }
    if den <= 0.0 {
        return Err(Error::ZeroVacuumCoefficient { source, side });
    }
    Ok(num / den)
}

/// The vacuum-contamination correction factors entering the denominators
/// of the certified bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmaSet {
    /// Correction in the non-vacuum `yy` lower bound.
    pub sigma_c_y: f64,
    /// Alice/Bob corrections in the non-vacuum `zz` upper bound.
    pub sigma_a_z: f64,
    pub sigma_b_z: f64,
    /// Alice/Bob corrections on the error side (`xx` against `v`).
    pub sigma_a_x: f64,
    pub sigma_b_x: f64,
    /// Alice/Bob corrections in the non-vacuum `yy` upper bound.
    pub sigma_a_y: f64,
    pub sigma_b_y: f64,
}

/// Computes every sigma factor from the interval sets.
pub fn sigma_set(alice: &PartyEnsemble, bob: &PartyEnsemble) -> Result<SigmaSet> {
    let aw = coef(alice.source(Source::W));
    let bw = coef(bob.source(Source::W));
    let ay = coef(alice.source(Source::Y));
    let by = coef(bob.source(Source::Y));
    let az = coef(alice.source(Source::Z));
    let bz = coef(bob.source(Source::Z));
    let av = coef(alice.source(Source::V));
    let bv = coef(bob.source(Source::V));
    let ax = coef(alice.source(Source::X));
    let bx = coef(bob.source(Source::X));
    Ok(SigmaSet {
        sigma_c_y: safe_ratio(
            ay.u0 * by.u0 * aw.u1 * bw.u1,
            aw.l0 * bw.l0 * ay.l1 * by.l1,
            'w',
            "sigma_C_y denominator",
        )?,
        sigma_a_z: safe_ratio(az.u0 * aw.u1, aw.l0 * az.l1, 'w', "sigma_A_z denominator")?,
        sigma_b_z: safe_ratio(bz.u0 * bw.u1, bw.l0 * bz.l1, 'w', "sigma_B_z denominator")?,
        sigma_a_x: safe_ratio(ax.u0 * av.u1, av.l0 * ax.l1, 'v', "sigma_A_x denominator")?,
        sigma_b_x: safe_ratio(bx.u0 * bv.u1, bv.l0 * bx.l1, 'v', "sigma_B_x denominator")?,
        sigma_a_y: safe_ratio(ay.u0 * aw.u1, aw.l0 * ay.l1, 'w', "sigma_A_y denominator")?,
        sigma_b_y: safe_ratio(by.u0 * bw.u1, bw.l0 * by.l1, 'w', "sigma_B_y denominator")?,
    })
}

fn require_vacuum_coeffs(alice: &PartyEnsemble, bob: &PartyEnsemble, s: Source) -> Result<()> {
    let side: &'static str = match s {
        Source::W => "zero-photon bound of w",
        _ => "zero-photon bound of v",
    };
    for ens in [alice, bob] {
        let set = ens.source(s);
        if set.lower(0) <= 0.0 || set.upper(0) <= 0.0 {
            return Err(Error::ZeroVacuumCoefficient {
                source: s.label(),
                side,
            });
        }
    }
    Ok(())
}

/// Upper bound on the vacuum-involving part of the `yy` count, estimated
/// through the Z-basis vacuum reference `w`, with each party's own
/// selection probabilities:
/// `(p_y/p_w)(a0_y^U/a0_w^L) N_wy + (p_y/p_w)(b0_y^U/b0_w^L) N_yw
/// - (p_y^2/p_w^2)(a0_y^L b0_y^L / a0_w^U b0_w^U) N_ww`.
pub fn vacuum_part_yy_upper(
    stats: &ObservedStats,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
) -> Result<f64> {
    require_vacuum_coeffs(alice, bob, Source::W)?;
    let ay = coef(alice.source(Source::Y));
    let by = coef(bob.source(Source::Y));
    let aw = coef(alice.source(Source::W));
    let bw = coef(bob.source(Source::W));
    let n_wy = stats.count_z(Source::W, Source::Y, alice, bob);
    let n_yw = stats.count_z(Source::Y, Source::W, alice, bob);
    let n_ww = stats.count_z(Source::W, Source::W, alice, bob);
    Ok(
        (ay.p / aw.p) * (ay.u0 / aw.l0) * n_wy + (by.p / bw.p) * (by.u0 / bw.l0) * n_yw
            - (ay.p * by.p / (aw.p * bw.p)) * (ay.l0 * by.l0 / (aw.u0 * bw.u0)) * n_ww,
    )
}

/// Lower bound on the vacuum-involving part of the `yy` count (mirror
/// orientation of [`vacuum_part_yy_upper`]); feeds the `yy` upper bound.
pub fn vacuum_part_yy_lower(
    stats: &ObservedStats,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
) -> Result<f64> {
    require_vacuum_coeffs(alice, bob, Source::W)?;
    let ay = coef(alice.source(Source::Y));
    let by = coef(bob.source(Source::Y));
    let aw = coef(alice.source(Source::W));
    let bw = coef(bob.source(Source::W));
    let n_wy = stats.count_z(Source::W, Source::Y, alice, bob);
    let n_yw = stats.count_z(Source::Y, Source::W, alice, bob);
    let n_ww = stats.count_z(Source::W, Source::W, alice, bob);
    Ok(
        (ay.p / aw.p) * (ay.l0 / aw.u0) * n_wy + (by.p / bw.p) * (by.l0 / bw.u0) * n_yw
            - (ay.p * by.p / (aw.p * bw.p)) * (ay.u0 * by.u0 / (aw.l0 * bw.l0)) * n_ww,
    )
}

/// Lower bound on the vacuum-involving part of the `zz` count.
pub fn vacuum_part_zz_lower(
    stats: &ObservedStats,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
) -> Result<f64> {
    require_vacuum_coeffs(alice, bob, Source::W)?;
    let az = coef(alice.source(Source::Z));
    let bz = coef(bob.source(Source::Z));
    let aw = coef(alice.source(Source::W));
    let bw = coef(bob.source(Source::W));
    let n_wz = stats.count_z(Source::W, Source::Z, alice, bob);
    let n_zw = stats.count_z(Source::Z, Source::W, alice, bob);
    let n_ww = stats.count_z(Source::W, Source::W, alice, bob);
    Ok(
        (az.p / aw.p) * (az.l0 / aw.u0) * n_wz + (bz.p / bw.p) * (bz.l0 / bw.u0) * n_zw
            - (az.p * bz.p / (aw.p * bw.p)) * (az.u0 * bz.u0 / (aw.l0 * bw.l0)) * n_ww,
    )
}

/// Lower bound on the vacuum-involving part of the `xx` error count,
/// estimated through the X-basis vacuum reference `v`.
pub fn vacuum_part_err_xx_lower(
    stats: &ObservedStats,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
) -> Result<f64> {
    require_vacuum_coeffs(alice, bob, Source::V)?;
    let ax = coef(alice.source(Source::X));
    let bx = coef(bob.source(Source::X));
    let av = coef(alice.source(Source::V));
    let bv = coef(bob.source(Source::V));
    let m_vx = stats.error_count_x(Source::V, Source::X, alice, bob);
    let m_xv = stats.error_count_x(Source::X, Source::V, alice, bob);
    let m_vv = stats.error_count_x(Source::V, Source::V, alice, bob);
    Ok(
        (ax.p / av.p) * (ax.l0 / av.u0) * m_vx + (bx.p / bv.p) * (bx.l0 / bv.u0) * m_xv
            - (ax.p * bx.p / (av.p * bv.p)) * (ax.u0 * bx.u0 / (av.l0 * bv.l0)) * m_vv,
    )
}

/// Lower bound on the non-vacuum (`j,k >= 1`) part of the `yy` count:
/// `(N_yy - vacuum_part_yy_upper) / (1 + sigma_C_y)`, clamped at zero.
/// Returns `(value, clamped_flag)`.
pub fn nonvacuum_yy_lower(
    stats: &ObservedStats,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
) -> Result<(f64, bool)> {
    let sig = sigma_set(alice, bob)?;
    let n_yy = stats.count_z(Source::Y, Source::Y, alice, bob);
    let raw = (n_yy - vacuum_part_yy_upper(stats, alice, bob)?) / (1.0 + sig.sigma_c_y);
    if raw < 0.0 {
        Ok((0.0, true))
    } else {
        Ok((raw, false))
    }
}

/// Upper bound on the non-vacuum part of the `yy` count:
/// `(N_yy - vacuum_part_yy_lower) / (1 - sigma_A_y - sigma_B_y)`.
pub fn nonvacuum_yy_upper(
    stats: &ObservedStats,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
) -> Result<f64> {
    let sig = sigma_set(alice, bob)?;
    if sig.sigma_a_y + sig.sigma_b_y >= 1.0 {
        return Err(Error::SigmaGate {
            which: "non-vacuum yy upper bound",
            sigma_a: sig.sigma_a_y,
            sigma_b: sig.sigma_b_y,
        });
    }
    let n_yy = stats.count_z(Source::Y, Source::Y, alice, bob);
    Ok((n_yy - vacuum_part_yy_lower(stats, alice, bob)?)
        / (1.0 - sig.sigma_a_y - sig.sigma_b_y))
}

/// Upper bound on the non-vacuum part of the `zz` count:
/// `(N_zz - vacuum_part_zz_lower) / (1 - sigma_A_z - sigma_B_z)`.
pub fn nonvacuum_zz_upper(
    stats: &ObservedStats,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
) -> Result<f64> {
    let sig = sigma_set(alice, bob)?;
    if sig.sigma_a_z + sig.sigma_b_z >= 1.0 {
        return Err(Error::SigmaGate {
            which: "non-vacuum zz upper bound",
            sigma_a: sig.sigma_a_z,
            sigma_b: sig.sigma_b_z,
        });
    }
    let n_zz = stats.count_z(Source::Z, Source::Z, alice, bob);
    Ok((n_zz - vacuum_part_zz_lower(stats, alice, bob)?)
        / (1.0 - sig.sigma_a_z - sig.sigma_b_z))
}

/// Upper bound on the non-vacuum part of the `xx` error count:
/// `(M_xx - vacuum_part_err_xx_lower) / (1 - sigma_A_x - sigma_B_x)`.
pub fn nonvacuum_err_xx_upper(
    stats: &ObservedStats,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
) -> Result<f64> {
    let sig = sigma_set(alice, bob)?;
    if sig.sigma_a_x + sig.sigma_b_x >= 1.0 {
        return Err(Error::SigmaGate {
            which: "non-vacuum xx error upper bound",
            sigma_a: sig.sigma_a_x,
            sigma_b: sig.sigma_b_x,
        });
    }
    let m_xx = stats.error_count_x(Source::X, Source::X, alice, bob);
    Ok((m_xx - vacuum_part_err_xx_lower(stats, alice, bob)?)
        / (1.0 - sig.sigma_a_x - sig.sigma_b_x))
}

/// Which two-photon anchor the single-photon extraction uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// `K_a <= K_b`: anchored on Bob's two-photon coefficients.
    KaLeKb,
    /// `K_a > K_b`: the mirrored formula anchored on Alice's side.
    KaGtKb,
}

/// The two anchor ratios deciding the extraction branch:
/// `K_a = a1_z^L b2_z^L / (a1_y^U b2_y^U)`,
/// `K_b = a2_z^L b1_z^L / (a2_y^U b1_y^U)`.
pub fn anchor_ratios(alice: &PartyEnsemble, bob: &PartyEnsemble) -> (f64, f64) {
    let ay = coef(alice.source(Source::Y));
    let by = coef(bob.source(Source::Y));
    let az = coef(alice.source(Source::Z));
    let bz = coef(bob.source(Source::Z));
    let k_a = az.l1 * bz.l2 / (ay.u1 * by.u2);
    let k_b = az.l2 * bz.l1 / (ay.u2 * by.u1);
    (k_a, k_b)
}

fn d11_from_branch(
    branch: Branch,
    n_tilde_yy_lower: f64,
    n_tilde_zz_upper: f64,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
) -> Result<f64> {
    let ay = coef(alice.source(Source::Y));
    let by = coef(bob.source(Source::Y));
    let az = coef(alice.source(Source::Z));
    let bz = coef(bob.source(Source::Z));
    let (k_a, k_b) = anchor_ratios(alice, bob);
    let p_y2 = ay.p * by.p;
    let p_z2 = az.p * bz.p;
    match branch {
        Branch::KaLeKb => {
            let det = by.u1 * bz.l2 - by.u2 * bz.l1;
            if det <= 0.0 {
                return Err(Error::DenominatorNotPositive {
                    which: "single-photon extraction (Bob anchor)",
                    value: det,
                });
            }
            Ok(
                (bz.l2 / p_y2 * n_tilde_yy_lower - bz.l2 / (p_z2 * k_a) * n_tilde_zz_upper)
                    / (ay.u1 * det),
            )
        }
        Branch::KaGtKb => {
            let det = ay.u1 * az.l2 - ay.u2 * az.l1;
            if det <= 0.0 {
                return Err(Error::DenominatorNotPositive {
                    which: "single-photon extraction (Alice anchor)",
                    value: det,
                });
            }
            Ok(
                (az.l2 / p_y2 * n_tilde_yy_lower - az.l2 / (p_z2 * k_b) * n_tilde_zz_upper)
                    / (by.u1 * det),
            )
        }
    }
}

/// Lower bound on the source-independent single-photon pair tally, clamped
/// at zero. The caller must have verified the ratio conditions.
///
/// Returns `(clamped, raw, branch)`.
pub fn single_photon_pairs_lower(
    stats: &ObservedStats,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
) -> Result<(f64, f64, Branch)> {
    let (nyy_l, _) = nonvacuum_yy_lower(stats, alice, bob)?;
    let nzz_u = nonvacuum_zz_upper(stats, alice, bob)?;
    let (k_a, k_b) = anchor_ratios(alice, bob);
    let branch = if k_a <= k_b {
        Branch::KaLeKb
    } else {
        Branch::KaGtKb
    };
    let raw = d11_from_branch(branch, nyy_l, nzz_u, alice, bob)?;
    Ok((raw.max(0.0), raw, branch))
}

/// Relative agreement tolerance between the count-space and yield-space
/// evaluations of the single-photon fraction. They are algebraically
/// identical; disagreement flags a transcription bug.
const CONSISTENCY_REL_TOL: f64 = 1e-9;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// Lower bound on the fraction of signal-source counts caused by
/// single-photon pairs, clamped to `[0,1]`.
///
/// Evaluated in yield space; the count-space route through
/// [`single_photon_pairs_lower`] is recomputed and the two must agree to
/// within `1e-9` relative, otherwise an internal-consistency error is
/// raised. Returns `(clamped, raw)`.
pub fn single_photon_fraction_lower(
    stats: &ObservedStats,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
) -> Result<(f64, f64)> {
    let s_zz = stats.s(Source::Z, Source::Z);
    if s_zz <= 0.0 {
        return Err(Error::QberUndefined);
    }
    let sig = sigma_set(alice, bob)?;
    if sig.sigma_a_z + sig.sigma_b_z >= 1.0 {
        return Err(Error::SigmaGate {
            which: "single-photon fraction",
            sigma_a: sig.sigma_a_z,
            sigma_b: sig.sigma_b_z,
        });
    }
    let ay = coef(alice.source(Source::Y));
    let by = coef(bob.source(Source::Y));
    let az = coef(alice.source(Source::Z));
    let bz = coef(bob.source(Source::Z));
    let aw = coef(alice.source(Source::W));
    let bw = coef(bob.source(Source::W));

    let s_yy = stats.s(Source::Y, Source::Y);
    let s_wy = stats.s(Source::W, Source::Y);
    let s_yw = stats.s(Source::Y, Source::W);
    let s_ww = stats.s(Source::W, Source::W);
    let s_wz = stats.s(Source::W, Source::Z);
    let s_zw = stats.s(Source::Z, Source::W);

    let s_tilde_yy = s_yy - (ay.u0 / aw.l0) * s_wy - (by.u0 / bw.l0) * s_yw
        + (ay.l0 * by.l0 / (aw.u0 * bw.u0)) * s_ww;
    let s_tilde_zz = s_zz - (az.l0 / aw.u0) * s_wz - (bz.l0 / bw.u0) * s_zw
        + (az.u0 * bz.u0 / (aw.l0 * bw.l0)) * s_ww;

    // Clamping the non-vacuum yy estimate at zero in count space is the
    // same operation as clamping its yield-space counterpart here.
    let s_tilde_yy = s_tilde_yy.max(0.0);

    let (k_a, k_b) = anchor_ratios(alice, bob);
    let raw = if k_a <= k_b {
        let det = by.u1 * bz.l2 - by.u2 * bz.l1;
        if det <= 0.0 {
            return Err(Error::DenominatorNotPositive {
                which: "single-photon extraction (Bob anchor)",
                value: det,
            });
        }
        az.l1 * bz.l1
            * (az.l1 * bz.l2 * s_tilde_yy / (1.0 + sig.sigma_c_y)
                - ay.u1 * by.u2 * s_tilde_zz / (1.0 - sig.sigma_a_z - sig.sigma_b_z))
            / (ay.u1 * az.l1 * det * s_zz)
    } else {
        let det = ay.u1 * az.l2 - ay.u2 * az.l1;
        if det <= 0.0 {
            return Err(Error::DenominatorNotPositive {
                which: "single-photon extraction (Alice anchor)",
                value: det,
            });
        }
        az.l1 * bz.l1
            * (bz.l1 * az.l2 * s_tilde_yy / (1.0 + sig.sigma_c_y)
                - by.u1 * ay.u2 * s_tilde_zz / (1.0 - sig.sigma_a_z - sig.sigma_b_z))
            / (by.u1 * bz.l1 * det * s_zz)
    };

    // Count-space route for the algebraic self-check.
    let (_, d11_raw, _) = single_photon_pairs_lower(stats, alice, bob)?;
    let n_zz = stats.count_z(Source::Z, Source::Z, alice, bob);
    let via_counts = az.p * bz.p * az.l1 * bz.l1 * d11_raw / n_zz;
    if !rel_close(raw, via_counts, CONSISTENCY_REL_TOL) {
        return Err(Error::ConsistencyCheck {
            what: "single-photon fraction: yield-space vs count-space",
            lhs: raw,
            rhs: via_counts,
        });
    }
    Ok((raw.clamp(0.0, 1.0), raw))
}

/// Upper bound on the source-independent single-photon error tally,
/// clamped at zero. Returns `(clamped, raw)`.
pub fn error_tally_upper(
    stats: &ObservedStats,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
) -> Result<(f64, f64)> {
    let ax = coef(alice.source(Source::X));
    let bx = coef(bob.source(Source::X));
    if ax.l1 <= 0.0 || bx.l1 <= 0.0 {
        return Err(Error::ZeroVacuumCoefficient {
            source: 'x',
            side: "one-photon lower bound of x",
        });
    }
    let m_tilde_upper = nonvacuum_err_xx_upper(stats, alice, bob)?;
    let raw = m_tilde_upper / (ax.p * bx.p * ax.l1 * bx.l1);
    Ok((raw.max(0.0), raw))
}

/// Upper bound on the single-photon phase-flip error rate, in yield space,
/// capped into `[0,1]`. `s11_lower` is the certified single-photon yield
/// `single_photon_pairs_lower / n_total`. Returns `(capped, raw)`.
pub fn phase_error_rate_upper(
    stats: &ObservedStats,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
    s11_lower: f64,
) -> Result<(f64, f64)> {
    if s11_lower <= 0.0 {
        return Err(Error::YieldBoundVanished);
    }
    let sig = sigma_set(alice, bob)?;
    if sig.sigma_a_x + sig.sigma_b_x >= 1.0 {
        return Err(Error::SigmaGate {
            which: "phase-flip error rate",
            sigma_a: sig.sigma_a_x,
            sigma_b: sig.sigma_b_x,
        });
    }
    let ax = coef(alice.source(Source::X));
    let bx = coef(bob.source(Source::X));
    let av = coef(alice.source(Source::V));
    let bv = coef(bob.source(Source::V));
    if ax.l1 <= 0.0 || bx.l1 <= 0.0 {
        return Err(Error::ZeroVacuumCoefficient {
            source: 'x',
            side: "one-photon lower bound of x",
        });
    }
    let t_xx = stats.t(Source::X, Source::X);
    let t_vx = stats.t(Source::V, Source::X);
    let t_xv = stats.t(Source::X, Source::V);
    let t_vv = stats.t(Source::V, Source::V);
    let t_tilde = t_xx - (ax.l0 / av.u0) * t_vx - (bx.l0 / bv.u0) * t_xv
        + (ax.u0 * bx.u0 / (av.l0 * bv.l0)) * t_vv;
    let t_tilde = t_tilde.max(0.0);
    let raw = ax.u1 * bx.u1 * t_tilde
        / ((ax.l1 * bx.l1).powi(2) * (1.0 - sig.sigma_a_x - sig.sigma_b_x) * s11_lower);
    Ok((raw.clamp(0.0, 1.0), raw))
}

/// Final secure key rate per pulse pair, clamped at zero:
/// `R = S_zz ( delta11 [1 - H(e11)] - f H(E_zz) )`.
/// An error-rate bound at or above one half forfeits the whole
/// single-photon term (`H` capped at 1). Returns `(clamped, raw)`.
pub fn key_rate(
    s_zz: f64,
    e_zz: f64,
    delta11_lower: f64,
    e11_upper: Option<f64>,
    error_corr_ineff: f64,
) -> Result<(f64, f64)> {
    let h_e11 = match e11_upper {
        Some(e) if e < 0.5 => binary_entropy(e)?,
        // e >= 1/2 or no certified bound: the term is forfeited.
        _ => 1.0,
    };
    let raw = s_zz * (delta11_lower * (1.0 - h_e11) - error_corr_ineff * binary_entropy(e_zz)?);
    Ok((raw.max(0.0), raw))
}

/// Full certified-bound report for one configuration.
#[derive(Clone, Debug)]
pub struct BoundsReport {
    /// Certified lower bound on the single-photon pair tally (clamped at 0).
    pub single_photon_pairs_lower: f64,
    pub single_photon_pairs_lower_raw: f64,
    /// Certified lower bound on the single-photon fraction of signal counts.
    pub single_photon_fraction_lower: f64,
    pub single_photon_fraction_lower_raw: f64,
    /// Certified single-photon yield `single_photon_pairs_lower / n_total`.
    pub s11_lower: f64,
    /// Certified upper bound on the single-photon error tally (clamped at 0).
    pub error_tally_upper: f64,
    pub error_tally_upper_raw: f64,
    /// Certified phase-flip error-rate upper bound; `None` when the yield
    /// bound vanished (no key anyway).
    pub phase_error_rate_upper: Option<f64>,
    pub phase_error_rate_upper_raw: Option<f64>,
    /// Final key rate per pulse pair (clamped at 0) and its raw value.
    pub key_rate: f64,
    pub key_rate_raw: f64,
    pub sigmas: SigmaSet,
    /// Non-vacuum count bounds entering the extraction.
    pub nonvacuum_yy_lower: f64,
    pub nonvacuum_yy_lower_clamped: bool,
    /// Upper companion of the yy bound; `None` when its sigma gate fails
    /// (it is not needed for the key rate).
    pub nonvacuum_yy_upper: Option<f64>,
    pub nonvacuum_zz_upper: f64,
    pub nonvacuum_err_xx_upper: f64,
    pub anchor_k_a: f64,
    pub anchor_k_b: f64,
    pub branch: Branch,
    /// Observables echoed for the report.
    pub s_zz: f64,
    pub e_zz: f64,
}

/// Runs the full certified pipeline with all admissibility gates:
/// ratio conditions, vacuum-coefficient positivity, sigma gates, and
/// extraction-denominator positivity.
pub fn compute_bounds(
    stats: &ObservedStats,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
    error_corr_ineff: f64,
) -> Result<BoundsReport> {
    let kmax = alice.kmax();
    check_condition_ratio_z(alice, bob, kmax).require("signal/decoy ratio chain")?;
    check_condition_ratio_w(alice, bob, kmax).require("vacuum-reference ratio")?;

    let sigmas = sigma_set(alice, bob)?;
    let (nyy_l, nyy_clamped) = nonvacuum_yy_lower(stats, alice, bob)?;
    let nyy_u = nonvacuum_yy_upper(stats, alice, bob).ok();
    let nzz_u = nonvacuum_zz_upper(stats, alice, bob)?;
    let mxx_u = nonvacuum_err_xx_upper(stats, alice, bob)?;
    let (d11, d11_raw, branch) = single_photon_pairs_lower(stats, alice, bob)?;
    let (delta11, delta11_raw) = single_photon_fraction_lower(stats, alice, bob)?;
    let (g11, g11_raw) = error_tally_upper(stats, alice, bob)?;
    let s11 = d11 / stats.n_total();
    let (e11, e11_raw) = match phase_error_rate_upper(stats, alice, bob, s11) {
        Ok((c, r)) => (Some(c), Some(r)),
        Err(Error::YieldBoundVanished) => (None, None),
        Err(e) => return Err(e),
    };
    let (k_a, k_b) = anchor_ratios(alice, bob);
    let s_zz = stats.s(Source::Z, Source::Z);
    let e_zz = stats.e_zz();
    let (r, r_raw) = key_rate(s_zz, e_zz, delta11, e11, error_corr_ineff)?;

    Ok(BoundsReport {
        single_photon_pairs_lower: d11,
        single_photon_pairs_lower_raw: d11_raw,
        single_photon_fraction_lower: delta11,
        single_photon_fraction_lower_raw: delta11_raw,
        s11_lower: s11,
        error_tally_upper: g11,
        error_tally_upper_raw: g11_raw,
        phase_error_rate_upper: e11,
        phase_error_rate_upper_raw: e11_raw,
        key_rate: r,
        key_rate_raw: r_raw,
        sigmas,
        nonvacuum_yy_lower: nyy_l,
        nonvacuum_yy_lower_clamped: nyy_clamped,
        nonvacuum_yy_upper: nyy_u,
        nonvacuum_zz_upper: nzz_u,
        nonvacuum_err_xx_upper: mxx_u,
        anchor_k_a: k_a,
        anchor_k_b: k_b,
        branch,
        s_zz,
        e_zz,
    })
}

/// Evaluates both extraction branches regardless of the anchor ordering.
/// Used by the branch-consistency checks; both denominators must be
/// positive (symmetric configurations).
pub fn single_photon_pairs_lower_both_branches(
    stats: &ObservedStats,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
) -> Result<(f64, f64)> {
    let (nyy_l, _) = nonvacuum_yy_lower(stats, alice, bob)?;
    let nzz_u = nonvacuum_zz_upper(stats, alice, bob)?;
    let via_b = d11_from_branch(Branch::KaLeKb, nyy_l, nzz_u, alice, bob)?;
    let via_a = d11_from_branch(Branch::KaGtKb, nyy_l, nzz_u, alice, bob)?;
    Ok((via_b, via_a))
}
