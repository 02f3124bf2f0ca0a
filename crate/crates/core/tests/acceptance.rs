//! Acceptance suite: one test per exit criterion, each printing a
//! `[PASS] criterion N` line (visible with `--nocapture`).
//!
//! Run with `cargo test --test acceptance -- --nocapture`.

mod common;

use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::{acceptance_config, flat_decoy_bounds, rel_diff};
use mdi_decoy::bounds::{
    compute_bounds, single_photon_pairs_lower_both_branches, Branch,
};
use mdi_decoy::channel::simulate_observables;
use mdi_decoy::cli::{cmd_scan, cmd_verify, run_verification, VerificationReport, VerifyOptions};
use mdi_decoy::config::{RunConfig, VerifyConfig};
use mdi_decoy::error::Error;
use mdi_decoy::fock::Source;
use mdi_decoy::optimizer::{optimize_infinite_decoy, optimize_key_rate, PartySpec, ScanSpec};

/// Criteria 1 and 2 share one battery run (criterion 2 is evaluated on
/// every scenario of criterion 1).
fn battery() -> &'static (VerificationReport, Duration) {
    static BATTERY: OnceLock<(VerificationReport, Duration)> = OnceLock::new();
    BATTERY.get_or_init(|| {
        let cfg = acceptance_config();
        let start = Instant::now();
        let report = run_verification(&cfg, &VerifyOptions::default()).expect("battery runs");
        (report, start.elapsed())
    })
}

#[test]
fn criterion1_soundness_battery() {
    let (report, elapsed) = battery();
    // 60 scenarios per (mode, distance) x 2 distances = 120 per mode.
    assert_eq!(report.scenarios_run, 60 * 4 * 2);
    assert_eq!(report.gate_failures, 0, "{:?}", report.first_gate_error);
    assert_eq!(report.containment_failures, 0);
    for (name, checked, violations, worst) in &report.inequalities {
        assert!(
            *checked > 0 && *violations == 0,
            "{name}: {checked} checked, {violations} violations, worst slack {worst}"
        );
    }
    assert!(
        *elapsed < Duration::from_secs(120),
        "battery took {elapsed:?}, budget is 2 minutes"
    );
    println!(
        "[PASS] criterion 1: soundness battery, {} scenarios (120/mode at 25 km and 50 km), \
         every inequality held within 1e-9 relative slack, runtime {elapsed:?}"
    , report.scenarios_run);
}

#[test]
fn criterion2_derivation_slacks() {
    let (report, _) = battery();
    assert_eq!(report.slack_violations, 0);
    for (i, min) in report.slack_minima.iter().enumerate() {
        assert!(*min >= -1e-12, "slack term {i} dipped to {min}");
    }
    assert!(
        report.identity_max_residual < 1e-12,
        "identity residual {}",
        report.identity_max_residual
    );
    println!(
        "[PASS] criterion 2: all six slack terms >= -1e-12 and the count decomposition \
         identity held with max relative residual {:.3e}",
        report.identity_max_residual
    );
}

#[test]
fn criterion3_degenerate_reduction() {
    // Zero fluctuation, near-perfect vacuum sources.
    let spec = PartySpec {
        name: "party",
        intensities: [1e-6, 1e-6, 0.03, 0.03, 0.5],
        deltas: (0.0, 0.0),
        probs: [0.1, 0.1, 0.2, 0.25, 0.35],
    };
    let cfg = RunConfig::table1_profile();
    let mut worst: f64 = 0.0;
    for &distance in &[25.0, 50.0] {
        for &mu_z in &[0.4, 0.5] {
            let ens = spec.build(12, Some(mu_z), None, None).unwrap();
            let params = cfg.channel.params(distance);
            let stats = simulate_observables(&ens, &ens, &params, cfg.n_total).unwrap();
            let rep = compute_bounds(&stats, &ens, &ens, params.error_corr_ineff).unwrap();
            let mut mu = spec.intensities;
            mu[4] = mu_z;
            let flat = flat_decoy_bounds(mu, mu, spec.probs, spec.probs, &stats,
                params.error_corr_ineff);
            let pairs = [
                ("nonvacuum_yy_lower", rep.nonvacuum_yy_lower, flat.n_tilde_yy_lower),
                (
                    "nonvacuum_yy_upper",
                    rep.nonvacuum_yy_upper.unwrap(),
                    flat.n_tilde_yy_upper,
                ),
                ("nonvacuum_zz_upper", rep.nonvacuum_zz_upper, flat.n_tilde_zz_upper),
                (
                    "nonvacuum_err_xx_upper",
                    rep.nonvacuum_err_xx_upper,
                    flat.m_tilde_xx_upper,
                ),
                ("d11_lower", rep.single_photon_pairs_lower, flat.d11_lower),
                (
                    "delta11_lower",
                    rep.single_photon_fraction_lower,
                    flat.delta11_lower,
                ),
                ("g11_upper", rep.error_tally_upper, flat.g11_upper),
                (
                    "e11_upper",
                    rep.phase_error_rate_upper.unwrap(),
                    flat.e11_upper,
                ),
                ("key_rate", rep.key_rate, flat.key_rate),
            ];
            for (name, ours, reference) in pairs {
                let d = rel_diff(ours, reference);
                worst = worst.max(d);
                assert!(
                    d <= 1e-12,
                    "{name} at {distance} km, mu_z = {mu_z}: {ours} vs {reference} (rel {d:.3e})"
                );
            }
        }
    }
    println!(
        "[PASS] criterion 3: every bound matches the independently coded fluctuation-free \
         three-intensity formula, worst relative difference {worst:.3e} (<= 1e-12)"
    );
}

#[test]
fn criterion4_figure_shape() {
    let cfg = RunConfig::table1_profile();
    let party = cfg.alice.spec("party");
    let deltas = [0.0, 0.005, 0.01, 0.02, 0.05];
    // Out to 260 km: past every curve's positive-rate cutoff, so the
    // cutoff-ordering check is not vacuous.
    let distances: Vec<f64> = (0..=26).map(|i| 10.0 * i as f64).collect();
    let spec = ScanSpec {
        mu_z_min: 0.1,
        mu_z_max: 0.7,
        mu_z_step: 0.02,
        prob_candidates: vec![],
        distances_km: distances.clone(),
        delta_pairs: deltas.iter().map(|&d| (d, d)).collect(),
    };
    let outcomes =
        optimize_key_rate(&spec, &cfg.channel.params(0.0), &party, &party, cfg.kmax, cfg.n_total)
            .unwrap();
    // rates[di][ci]: distance-major, one column per delta curve.
    let n_curves = deltas.len();
    let rates: Vec<Vec<f64>> = outcomes
        .chunks(n_curves)
        .map(|chunk| {
            chunk
                .iter()
                .map(|o| o.best.as_ref().map(|b| b.report.key_rate).unwrap_or(0.0))
                .collect()
        })
        .collect();

    // (a) The infinite-decoy curve dominates every finite curve.
    for (di, &distance) in distances.iter().enumerate() {
        let r_inf = optimize_infinite_decoy(
            &spec,
            &cfg.channel.params(0.0),
            &party,
            &party,
            cfg.kmax,
            cfg.n_total,
            distance,
        )
        .unwrap()
        .map(|(_, r)| r)
        .unwrap_or(0.0);
        for (ci, &r) in rates[di].iter().enumerate() {
            assert!(
                r_inf >= r && (r == 0.0 || r_inf > r),
                "distance {distance}, curve {ci}: R_inf = {r_inf} does not dominate R = {r}"
            );
        }
    }

    // (b) R non-increasing in the fluctuation bound, pointwise.
    for (di, row) in rates.iter().enumerate() {
        for ci in 1..n_curves {
            assert!(
                row[ci - 1] >= row[ci] && (row[ci - 1] > row[ci] || row[ci] == 0.0),
                "distance index {di}: R not non-increasing across deltas: {row:?}"
            );
        }
    }

    // (c) Positive-rate cutoff distance non-increasing in the fluctuation.
    let cutoff = |ci: usize| -> i64 {
        (0..distances.len())
            .rev()
            .find(|&di| rates[di][ci] > 0.0)
            .map(|di| di as i64)
            .unwrap_or(-1)
    };
    let cutoffs: Vec<i64> = (0..n_curves).map(cutoff).collect();
    for ci in 1..n_curves {
        assert!(
            cutoffs[ci - 1] >= cutoffs[ci],
            "cutoff indices not monotone: {cutoffs:?}"
        );
    }
    assert!(cutoffs[0] >= 0, "zero-fluctuation curve never positive");
    assert!(
        cutoffs[0] < distances.len() as i64 - 1,
        "sweep did not reach the zero-fluctuation cutoff"
    );
    assert!(
        cutoffs[n_curves - 1] < cutoffs[0],
        "largest fluctuation should lose reach: {cutoffs:?}"
    );
    println!(
        "[PASS] criterion 4: infinite-decoy curve dominates, rates degrade pointwise with \
         fluctuation, cutoff distances {:?} (grid indices, step 10 km) are non-increasing",
        cutoffs
    );
}

#[test]
fn criterion5_branch_and_consistency() {
    let cfg = RunConfig::table1_profile();
    let party = cfg.alice.spec("party");
    // Symmetric configurations: both extraction branches must agree.
    let mut worst_branch: f64 = 0.0;
    for &distance in &[0.0, 25.0, 50.0, 100.0] {
        for &d in &[0.0, 0.01, 0.02] {
            let ens = party.build(12, Some(0.5), Some((d, d)), None).unwrap();
            let params = cfg.channel.params(distance);
            let stats = simulate_observables(&ens, &ens, &params, cfg.n_total).unwrap();
            let rep = compute_bounds(&stats, &ens, &ens, params.error_corr_ineff).unwrap();
            assert_eq!(rep.branch, Branch::KaLeKb);
            assert!(rel_diff(rep.anchor_k_a, rep.anchor_k_b) <= 1e-12);
            let (via_b, via_a) =
                single_photon_pairs_lower_both_branches(&stats, &ens, &ens).unwrap();
            let diff = rel_diff(via_b, via_a);
            worst_branch = worst_branch.max(diff);
            assert!(
                diff <= 1e-12,
                "branches disagree at {distance} km, delta {d}: {via_b} vs {via_a}"
            );

            // Count-space vs yield-space route agreement.
            let n_zz = stats.count_z(Source::Z, Source::Z, &ens, &ens);
            let p_z2 = ens.source(Source::Z).select_prob().powi(2);
            let a1 = ens.source(Source::Z).lower(1);
            let via_counts =
                p_z2 * a1 * a1 * rep.single_photon_pairs_lower_raw / n_zz;
            assert!(
                rel_diff(via_counts, rep.single_photon_fraction_lower_raw) <= 1e-9,
                "route disagreement at {distance} km, delta {d}"
            );
        }
    }
    println!(
        "[PASS] criterion 5: symmetric-configuration branches agree (worst relative \
         difference {worst_branch:.3e} <= 1e-12) and the count/yield routes agree <= 1e-9 \
         on all scan points"
    );
}

#[test]
fn criterion6_condition_gates() {
    let cfg = RunConfig::table1_profile();
    // (a) Decoy window touching the signal window.
    let party = PartySpec {
        name: "party",
        intensities: [1e-4, 1e-4, 0.03, 0.45, 0.5],
        deltas: (0.01, 0.10),
        probs: [0.1, 0.1, 0.2, 0.25, 0.35],
    };
    let ens = party.build(10, None, None, None).unwrap();
    let params = cfg.channel.params(25.0);
    let stats = simulate_observables(&ens, &ens, &params, cfg.n_total).unwrap();
    let err = compute_bounds(&stats, &ens, &ens, params.error_corr_ineff).unwrap_err();
    let named_chain = match &err {
        Error::ConditionViolated { which, detail } => {
            which.contains("ratio chain") && detail.contains("ratio chain broken")
        }
        _ => false,
    };
    assert!(named_chain, "expected named ratio-chain rejection, got {err}");

    // (b) Vacuum reference too bright: sigma_A + sigma_B >= 1 with the
    // ratio conditions themselves satisfied.
    let bright = PartySpec {
        name: "party",
        intensities: [1e-4, 0.02, 0.03, 0.025, 0.03],
        deltas: (0.0, 0.0),
        probs: [0.1, 0.1, 0.2, 0.25, 0.35],
    };
    let ens = bright.build(10, None, None, None).unwrap();
    let stats = simulate_observables(&ens, &ens, &params, cfg.n_total).unwrap();
    let err = compute_bounds(&stats, &ens, &ens, params.error_corr_ineff).unwrap_err();
    let named_sigma = match &err {
        Error::SigmaGate { sigma_a, sigma_b, .. } => sigma_a + sigma_b >= 1.0,
        _ => false,
    };
    assert!(named_sigma, "expected named sigma-gate rejection, got {err}");
    let text = err.to_string();
    assert!(text.contains("sigma_A"), "{text}");
    println!(
        "[PASS] criterion 6: inadmissible configs are rejected with the violated \
         inequality named (ratio chain, sigma gate), never a silent number"
    );
}

#[test]
fn criterion7_determinism() {
    // Library-level byte stability.
    let mut cfg = acceptance_config();
    cfg.scan.distances_km = vec![0.0, 25.0, 50.0];
    cfg.scan.delta_pairs = vec![(0.0, 0.0), (0.01, 0.01)];
    cfg.scan.mu_z_step = 0.05;
    cfg.verify = VerifyConfig {
        scenarios_per_mode: 5,
        n_pulses: 2000,
        kmax: 5,
        distances_km: vec![25.0],
    };
    let render = |f: &dyn Fn(&RunConfig, &mut dyn std::io::Write)| {
        let mut buf = Vec::new();
        f(&cfg, &mut buf);
        buf
    };
    let scan = |cfg: &RunConfig, out: &mut dyn std::io::Write| {
        cmd_scan(cfg, out).unwrap();
    };
    let verify = |cfg: &RunConfig, out: &mut dyn std::io::Write| {
        cmd_verify(cfg, out).unwrap();
    };
    assert_eq!(render(&scan), render(&scan));
    assert_eq!(render(&verify), render(&verify));

    // Binary-level byte stability through the real CLI.
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).unwrap();
    let bin = env!("CARGO_BIN_EXE_mdi-decoy");
    let mut outputs = Vec::new();
    for run in 0..2 {
        for sub in ["scan", "verify"] {
            let out_path = dir.path().join(format!("{sub}-{run}.out"));
            let status = Command::new(bin)
                .args([
                    sub,
                    "--config",
                    cfg_path.to_str().unwrap(),
                    "--out",
                    out_path.to_str().unwrap(),
                    "--seed",
                    "7",
                ])
                .status()
                .unwrap();
            assert!(status.success(), "{sub} run {run} failed");
            outputs.push(std::fs::read(&out_path).unwrap());
        }
    }
    assert_eq!(outputs[0], outputs[2], "scan outputs differ across runs");
    assert_eq!(outputs[1], outputs[3], "verify outputs differ across runs");
    println!(
        "[PASS] criterion 7: scan and verify outputs are byte-identical across runs, both \
         in-process and through the binary"
    );
}
