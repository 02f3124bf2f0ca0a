//! Shared fixtures for the integration suites, including an independent
//! transcription of the fluctuation-free three-intensity decoy bounds used
//! as the degenerate-reduction reference.
//!
//! Everything here is written from scalar first principles on purpose:
//! its own Poisson coefficients, its own entropy, plain expressions. It
//! must not share evaluation paths with the library it checks.

#![allow(dead_code)]

use mdi_decoy::channel::ObservedStats;
use mdi_decoy::config::{RunConfig, VerifyConfig};
use mdi_decoy::fock::Source;

/// v, w, x, y, z.
pub const SRC: [Source; 5] = [Source::V, Source::W, Source::X, Source::Y, Source::Z];

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product::<f64>().max(1.0)
}

/// Direct-formula Poisson coefficient, deliberately not the library's
/// recurrence.
pub fn pmf(mu: f64, k: usize) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    mu.powi(k as i32) * (-mu).exp() / factorial(k)
}

fn entropy(x: f64) -> f64 {
    let t = |p: f64| {
        if p <= 0.0 {
            0.0
        } else {
            -p * p.ln() / std::f64::consts::LN_2
        }
    };
    t(x) + t(1.0 - x)
}

/// All bound values of the fluctuation-free protocol in one bundle.
#[derive(Clone, Copy, Debug)]
pub struct FlatBounds {
    pub n_tilde_yy_lower: f64,
    pub n_tilde_yy_upper: f64,
    pub n_tilde_zz_upper: f64,
    pub m_tilde_xx_upper: f64,
    pub d11_lower: f64,
    pub delta11_lower: f64,
    pub g11_upper: f64,
    pub e11_upper: f64,
    pub key_rate: f64,
}

/// Fluctuation-free three-intensity decoy bounds from exact per-source
/// photon-number coefficients (no intervals anywhere).
///
/// `mu_a`/`mu_b` and `p_a`/`p_b` are per-party intensities and selection
/// probabilities in `v, w, x, y, z` order.
pub fn flat_decoy_bounds(
    mu_a: [f64; 5],
    mu_b: [f64; 5],
    p_a: [f64; 5],
    p_b: [f64; 5],
    stats: &ObservedStats,
    error_corr_ineff: f64,
) -> FlatBounds {
    let n_t = stats.n_total();
    let a = |s: usize, k: usize| pmf(mu_a[s], k);
    let b = |s: usize, k: usize| pmf(mu_b[s], k);
    const V: usize = 0;
    const W: usize = 1;
    const X: usize = 2;
    const Y: usize = 3;
    const Z: usize = 4;

    let count = |l: Source, r: Source| -> f64 {
        stats.s(l, r) * p_a[l as usize] * p_b[r as usize] * n_t
    };
    let err_count = |l: Source, r: Source| -> f64 {
        stats.t(l, r) * p_a[l as usize] * p_b[r as usize] * n_t
    };

    let n_yy = count(Source::Y, Source::Y);
    let n_zz = count(Source::Z, Source::Z);
    let n_wy = count(Source::W, Source::Y);
    let n_yw = count(Source::Y, Source::W);
    let n_wz = count(Source::W, Source::Z);
    let n_zw = count(Source::Z, Source::W);
    let n_ww = count(Source::W, Source::W);
    let m_xx = err_count(Source::X, Source::X);
    let m_vx = err_count(Source::V, Source::X);
    let m_xv = err_count(Source::X, Source::V);
    let m_vv = err_count(Source::V, Source::V);

    let sigma_c = a(Y, 0) * b(Y, 0) * a(W, 1) * b(W, 1) / (a(W, 0) * b(W, 0) * a(Y, 1) * b(Y, 1));
    let sigma_ay = a(Y, 0) * a(W, 1) / (a(W, 0) * a(Y, 1));
    let sigma_by = b(Y, 0) * b(W, 1) / (b(W, 0) * b(Y, 1));
    let sigma_az = a(Z, 0) * a(W, 1) / (a(W, 0) * a(Z, 1));
    let sigma_bz = b(Z, 0) * b(W, 1) / (b(W, 0) * b(Z, 1));
    let sigma_ax = a(X, 0) * a(V, 1) / (a(V, 0) * a(X, 1));
    let sigma_bx = b(X, 0) * b(V, 1) / (b(V, 0) * b(X, 1));

    let vac_yy = (p_a[Y] / p_a[W]) * (a(Y, 0) / a(W, 0)) * n_wy
        + (p_b[Y] / p_b[W]) * (b(Y, 0) / b(W, 0)) * n_yw
        - (p_a[Y] * p_b[Y] / (p_a[W] * p_b[W])) * (a(Y, 0) * b(Y, 0) / (a(W, 0) * b(W, 0))) * n_ww;
    let vac_zz = (p_a[Z] / p_a[W]) * (a(Z, 0) / a(W, 0)) * n_wz
        + (p_b[Z] / p_b[W]) * (b(Z, 0) / b(W, 0)) * n_zw
        - (p_a[Z] * p_b[Z] / (p_a[W] * p_b[W])) * (a(Z, 0) * b(Z, 0) / (a(W, 0) * b(W, 0))) * n_ww;
    let vac_err_xx = (p_a[X] / p_a[V]) * (a(X, 0) / a(V, 0)) * m_vx
        + (p_b[X] / p_b[V]) * (b(X, 0) / b(V, 0)) * m_xv
        - (p_a[X] * p_b[X] / (p_a[V] * p_b[V])) * (a(X, 0) * b(X, 0) / (a(V, 0) * b(V, 0))) * m_vv;

    let n_tilde_yy_lower = ((n_yy - vac_yy) / (1.0 + sigma_c)).max(0.0);
    let n_tilde_yy_upper = (n_yy - vac_yy) / (1.0 - sigma_ay - sigma_by);
    let n_tilde_zz_upper = (n_zz - vac_zz) / (1.0 - sigma_az - sigma_bz);
    let m_tilde_xx_upper = (m_xx - vac_err_xx) / (1.0 - sigma_ax - sigma_bx);

    let p_y2 = p_a[Y] * p_b[Y];
    let p_z2 = p_a[Z] * p_b[Z];
    let k_anchor_a = a(Z, 1) * b(Z, 2) / (a(Y, 1) * b(Y, 2));
    let k_anchor_b = a(Z, 2) * b(Z, 1) / (a(Y, 2) * b(Y, 1));
    let d11_raw = if k_anchor_a <= k_anchor_b {
        (b(Z, 2) / p_y2 * n_tilde_yy_lower - b(Z, 2) / (p_z2 * k_anchor_a) * n_tilde_zz_upper)
            / (a(Y, 1) * (b(Y, 1) * b(Z, 2) - b(Y, 2) * b(Z, 1)))
    } else {
        (a(Z, 2) / p_y2 * n_tilde_yy_lower - a(Z, 2) / (p_z2 * k_anchor_b) * n_tilde_zz_upper)
            / (b(Y, 1) * (a(Y, 1) * a(Z, 2) - a(Y, 2) * a(Z, 1)))
    };
    let d11_lower = d11_raw.max(0.0);
    let delta11_lower = (p_z2 * a(Z, 1) * b(Z, 1) * d11_raw / n_zz).clamp(0.0, 1.0);
    let g11_upper = (m_tilde_xx_upper / (p_a[X] * p_b[X] * a(X, 1) * b(X, 1))).max(0.0);

    let t_tilde_xx = (stats.t(Source::X, Source::X)
        - (a(X, 0) / a(V, 0)) * stats.t(Source::V, Source::X)
        - (b(X, 0) / b(V, 0)) * stats.t(Source::X, Source::V)
        + (a(X, 0) * b(X, 0) / (a(V, 0) * b(V, 0))) * stats.t(Source::V, Source::V))
    .max(0.0);
    let s11 = d11_lower / n_t;
    let e11_upper = (a(X, 1) * b(X, 1) * t_tilde_xx
        / ((a(X, 1) * b(X, 1)).powi(2) * (1.0 - sigma_ax - sigma_bx) * s11))
        .clamp(0.0, 1.0);

    let s_zz = stats.s(Source::Z, Source::Z);
    let h11 = if e11_upper >= 0.5 {
        1.0
    } else {
        entropy(e11_upper)
    };
    let key_rate = (s_zz
        * (delta11_lower * (1.0 - h11) - error_corr_ineff * entropy(stats.e_zz())))
    .max(0.0);

    FlatBounds {
        n_tilde_yy_lower,
        n_tilde_yy_upper,
        n_tilde_zz_upper,
        m_tilde_xx_upper,
        d11_lower,
        delta11_lower,
        g11_upper,
        e11_upper,
        key_rate,
    }
}

/// Relative closeness helper.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// The acceptance battery configuration: reference channel parameters,
/// desk-scale oracle, both acceptance distances.
pub fn acceptance_config() -> RunConfig {
    let mut cfg = RunConfig::table1_profile();
    cfg.seed = 7;
    cfg.alice.delta_vac = 0.02;
    cfg.alice.delta_sig = 0.02;
    cfg.verify = VerifyConfig {
        scenarios_per_mode: 60,
        n_pulses: 10_000,
        kmax: 6,
        distances_km: vec![25.0, 50.0],
    };
    cfg
}
