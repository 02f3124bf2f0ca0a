//! End-to-end pipeline checks: CSV layout of the full default scan, frozen
//! regression values, the checked-in scenario fixture, and the CLI's exit
//! codes.

mod common;

use std::process::Command;

use common::{flat_decoy_bounds, rel_diff};
use mdi_decoy::channel::simulate_observables;
use mdi_decoy::cli::cmd_scan;
use mdi_decoy::config::RunConfig;
use mdi_decoy::optimizer::{optimize_key_rate, ScanSpec};
use mdi_decoy::oracle::{exact_tallies, PerPulseScenario};

#[test]
fn default_scan_has_63_ordered_rows() {
    let cfg = RunConfig::table1_profile();
    let mut buf = Vec::new();
    cmd_scan(&cfg, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 63, "21 distances x 3 delta pairs");

    // Rows ascend in distance; R is non-increasing in the fluctuation
    // bound within each distance, and in distance within each curve.
    let mut prev_distance = f64::NEG_INFINITY;
    let mut prev_rates = [f64::INFINITY; 3];
    for chunk in rows.chunks(3) {
        let parse = |row: &str, col: usize| -> f64 {
            row.split(',').nth(col).unwrap().parse().unwrap()
        };
        let d = parse(chunk[0], 0);
        assert!(d >= prev_distance);
        prev_distance = d;
        let rates: Vec<f64> = chunk.iter().map(|r| parse(r, 4)).collect();
        assert!(
            rates[0] >= rates[1] && rates[1] >= rates[2],
            "distance {d}: rates {rates:?} not ordered in delta"
        );
        for (ci, &r) in rates.iter().enumerate() {
            assert!(r <= prev_rates[ci], "curve {ci} not monotone in distance");
            prev_rates[ci] = r;
        }
        for row in chunk {
            assert!(row.ends_with(",true"), "{row}");
        }
    }
}

#[test]
fn zero_delta_scan_row_matches_flat_reference() {
    let cfg = RunConfig::table1_profile();
    let party = cfg.alice.spec("party");
    let spec = ScanSpec {
        mu_z_min: 0.1,
        mu_z_max: 0.7,
        mu_z_step: 0.01,
        prob_candidates: vec![],
        distances_km: vec![50.0],
        delta_pairs: vec![(0.0, 0.0)],
    };
    let out =
        optimize_key_rate(&spec, &cfg.channel.params(0.0), &party, &party, cfg.kmax, cfg.n_total)
            .unwrap();
    let best = out[0].best.as_ref().unwrap();
    let ens = party.build(cfg.kmax, Some(best.mu_z), Some((0.0, 0.0)), None).unwrap();
    let params = cfg.channel.params(50.0);
    let stats = simulate_observables(&ens, &ens, &params, cfg.n_total).unwrap();
    let mut mu = party.intensities;
    mu[4] = best.mu_z;
    let flat = flat_decoy_bounds(mu, mu, party.probs, party.probs, &stats, params.error_corr_ineff);
    assert!(
        rel_diff(best.report.key_rate, flat.key_rate) <= 1e-12,
        "scan R {} vs flat reference {}",
        best.report.key_rate,
        flat.key_rate
    );
}

#[test]
fn regression_optimized_rate_at_25km() {
    // Frozen pipeline output: reference channel, 25 km, delta = 0.01.
    let cfg = RunConfig::table1_profile();
    let party = cfg.alice.spec("party");
    let spec = ScanSpec {
        mu_z_min: 0.1,
        mu_z_max: 0.7,
        mu_z_step: 0.01,
        prob_candidates: vec![],
        distances_km: vec![25.0],
        delta_pairs: vec![(0.01, 0.01)],
    };
    let out =
        optimize_key_rate(&spec, &cfg.channel.params(0.0), &party, &party, cfg.kmax, cfg.n_total)
            .unwrap();
    let best = out[0].best.as_ref().unwrap();
    assert!(best.report.key_rate > 0.0);
    assert_eq!(best.mu_z, 0.53);
    assert!(
        rel_diff(best.report.key_rate, 0.0002795892302491127) <= 1e-9,
        "R = {}",
        best.report.key_rate
    );
    assert!(
        rel_diff(
            best.report.single_photon_fraction_lower,
            0.3311634467240676
        ) <= 1e-9
    );
}

#[test]
fn scenario_fixture_reproduces_frozen_tallies() {
    let text = include_str!("fixtures/scenario_small.txt");
    let scn = PerPulseScenario::from_text(text).unwrap();
    assert_eq!(scn.n_pulses(), 40);
    assert_eq!(scn.kmax(), 4);
    // Round trip is byte-identical with the checked-in fixture.
    assert_eq!(scn.to_text(), text);

    let cfg = RunConfig::table1_profile();
    let party = cfg.alice.spec("party");
    let ens = party.build(4, None, Some((0.02, 0.01)), None).unwrap();
    let t = exact_tallies(&scn, &ens, &ens).unwrap();
    assert!(rel_diff(t.d11(), 0.09517489451673661) <= 1e-12);
    assert!(rel_diff(t.g11(), 0.04563076818401778) <= 1e-12);
    assert!(rel_diff(t.big_n_z[2][2], 0.00292628509328627) <= 1e-12);
    assert!(rel_diff(t.big_m_x[1][1], 1.6583925511516416e-6) <= 1e-12);
}

#[test]
fn cli_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_mdi-decoy");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.csv");

    // Config error: unknown key.
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "no_such_key = 1\n").unwrap();
    let status = Command::new(bin)
        .args(["scan", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    // Config error: invalid values.
    std::fs::write(&bad, "[alice]\np_v = 0.9\n").unwrap();
    let status = Command::new(bin)
        .args(["scan", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    // Infeasible bounds: signal grid below the decoy intensity.
    let mut cfg = RunConfig::table1_profile();
    cfg.scan.distances_km = vec![25.0];
    cfg.scan.delta_pairs = vec![(0.0, 0.05)];
    cfg.scan.mu_z_min = 0.032;
    cfg.scan.mu_z_max = 0.033;
    cfg.scan.mu_z_step = 0.001;
    let infeasible = dir.path().join("infeasible.toml");
    std::fs::write(&infeasible, cfg.to_toml()).unwrap();
    let status = Command::new(bin)
        .args([
            "optimize",
            "--config",
            infeasible.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
    // The error rows were still written before the exit.
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().skip(1).all(|r| r.ends_with(",false")));

    // Success path.
    let good = dir.path().join("good.toml");
    let mut cfg = RunConfig::table1_profile();
    cfg.scan.distances_km = vec![0.0, 25.0];
    cfg.scan.mu_z_step = 0.05;
    std::fs::write(&good, cfg.to_toml()).unwrap();
    let status = Command::new(bin)
        .args(["scan", "--config", good.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
}
