//! Property tests for the interval model, the detection model, and the
//! monotone-degradation behaviour of the certified bounds.

use proptest::prelude::*;

use mdi_decoy::bounds::{binary_entropy, compute_bounds};
use mdi_decoy::channel::{pair_yield, simulate_observables, ChannelParams};
use mdi_decoy::fock::{coeff_interval, poisson_coeffs, poisson_pmf, PartyEnsemble};

fn table1(distance: f64) -> ChannelParams {
    ChannelParams {
        distance_km: distance,
        ..ChannelParams::default()
    }
}

fn ensemble(mu_z: f64, d1: f64, d2: f64) -> PartyEnsemble {
    PartyEnsemble::coherent(
        "party",
        [1e-4, 1e-4, 0.03, 0.03, mu_z],
        (d1, d2),
        [0.1, 0.1, 0.2, 0.25, 0.35],
        10,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn interval_contains_every_admissible_coefficient(
        mu in 1e-6..3.0f64,
        delta in 0.0..0.5f64,
        k in 0usize..8,
        t in 0.0..1.0f64,
    ) {
        let (lo, hi) = coeff_interval(mu, delta, k).unwrap();
        let m = mu * (1.0 - delta) + 2.0 * mu * delta * t;
        let v = poisson_pmf(m, k);
        prop_assert!(v >= lo - 1e-13 * hi.max(1e-300));
        prop_assert!(v <= hi + 1e-13 * hi.max(1e-300));
    }

    #[test]
    fn smaller_fluctuation_gives_nested_intervals(
        mu in 1e-6..3.0f64,
        delta in 0.0..0.5f64,
        shrink in 0.0..1.0f64,
        k in 0usize..8,
    ) {
        let (lo, hi) = coeff_interval(mu, delta, k).unwrap();
        let (lo2, hi2) = coeff_interval(mu, delta * shrink, k).unwrap();
        prop_assert!(lo2 >= lo && hi2 <= hi);
    }

    #[test]
    fn poisson_distribution_normalizes(mu in 0.0..5.0f64, kmax in 20usize..40) {
        let d = poisson_coeffs(mu, kmax).unwrap();
        let total: f64 = d.coeffs.iter().sum::<f64>() + d.tail_mass;
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pair_yield_is_monotone_and_bounded(
        distance in 0.0..200.0f64,
        j in 0usize..6,
        k in 0usize..6,
    ) {
        let p = table1(distance);
        let y = pair_yield(&p, j, k);
        prop_assert!((0.0..=1.0).contains(&y));
        prop_assert!(pair_yield(&p, j + 1, k) >= y);
        prop_assert!(pair_yield(&p, j, k + 1) >= y);
        prop_assert!(pair_yield(&table1(distance + 10.0), j, k) <= y);
    }

    #[test]
    fn average_yield_is_a_probability(
        distance in 0.0..150.0f64,
        mu_a in 0.01..1.0f64,
        mu_b in 0.01..1.0f64,
    ) {
        let p = table1(distance);
        let da = poisson_coeffs(mu_a, 10).unwrap();
        let db = poisson_coeffs(mu_b, 10).unwrap();
        let mut acc = 0.0;
        for (j, &aj) in da.coeffs.iter().enumerate() {
            for (k, &bk) in db.coeffs.iter().enumerate() {
                acc += aj * bk * pair_yield(&p, j, k);
            }
        }
        prop_assert!((0.0..=1.0).contains(&acc));
    }

    #[test]
    fn entropy_is_symmetric_and_peaked(x in 0.0..1.0f64) {
        let h = binary_entropy(x).unwrap();
        let m = binary_entropy(1.0 - x).unwrap();
        prop_assert!((h - m).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-15).contains(&h));
        prop_assert!(h <= binary_entropy(0.5).unwrap() + 1e-15);
    }

    /// Widening the coefficient intervals while holding the observed
    /// statistics fixed never improves a certified value.
    #[test]
    fn certified_values_degrade_monotonically(
        distance in 0.0..120.0f64,
        mu_z in 0.35..0.7f64,
        delta in 0.0..0.02f64,
        widen in 1.0..2.5f64,
    ) {
        let params = table1(distance);
        let narrow = ensemble(mu_z, delta, delta);
        let wide = ensemble(mu_z, delta * widen, delta * widen);
        // Same observables for both: only the claimed intervals differ.
        let stats = simulate_observables(&narrow, &narrow, &params, 1e10).unwrap();
        let rep_narrow = compute_bounds(&stats, &narrow, &narrow, 1.16).unwrap();
        let rep_wide = compute_bounds(&stats, &wide, &wide, 1.16).unwrap();
        let tol = 1e-12;
        prop_assert!(
            rep_wide.single_photon_fraction_lower
                <= rep_narrow.single_photon_fraction_lower + tol,
            "fraction improved under widening: {} -> {}",
            rep_narrow.single_photon_fraction_lower,
            rep_wide.single_photon_fraction_lower
        );
        if let (Some(e_narrow), Some(e_wide)) =
            (rep_narrow.phase_error_rate_upper, rep_wide.phase_error_rate_upper)
        {
            prop_assert!(
                e_wide >= e_narrow - tol,
                "error bound improved under widening: {e_narrow} -> {e_wide}"
            );
        }
        prop_assert!(rep_wide.key_rate <= rep_narrow.key_rate + tol);
    }
}
