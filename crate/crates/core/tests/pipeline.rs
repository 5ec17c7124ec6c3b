//! End-to-end checks across modules: grid convergence of the coherence
//! metrics, spot versus ring structure, and interferometer properties on
//! randomly shaped maps.

use ndarray::Array2;
use pdc_coherence::coherence::correlation_map_padded;
use pdc_coherence::interferometer::{StageSweep, DEFAULT_WINDOW_FRINGES};
use pdc_coherence::{
    build_spectrum, correlation_map, extract_visibility, metrics, synthesize_trace, CoherenceMap,
    CoherenceMetrics, CrystalConfig, GridSpec, InterferometerConfig, SellmeierSet, SpectralGrid,
};
use proptest::prelude::*;

const OMEGA_C: f64 = 1.1773e15;

fn crystal(theta_deg: f64) -> CrystalConfig {
    CrystalConfig::new(10e-3, theta_deg.to_radians(), 800e-9, 6.0, SellmeierSet::bbo()).unwrap()
}

fn orientation_metrics(theta_deg: f64, n_omega: usize, n_k: usize) -> (CoherenceMap, CoherenceMetrics) {
    let cfg = crystal(theta_deg);
    let grid = GridSpec::auto(&cfg, n_omega, n_k).unwrap();
    let map = correlation_map(&build_spectrum(&cfg, &grid).unwrap()).unwrap();
    let m = metrics(&map).unwrap();
    (map, m)
}

#[test]
fn metrics_converge_under_grid_doubling() {
    for theta in [19.87, 19.94] {
        let (_, coarse) = orientation_metrics(theta, 1024, 512);
        let (_, fine) = orientation_metrics(theta, 2048, 1024);
        let rel = |a: f64, b: f64| (a / b - 1.0).abs();
        assert!(rel(coarse.tau_c, fine.tau_c) < 0.01, "{theta}: {} vs {}", coarse.tau_c, fine.tau_c);
        assert!(rel(coarse.xi_c, fine.xi_c) < 0.01, "{theta}: {} vs {}", coarse.xi_c, fine.xi_c);
        assert!((coarse.first_ring_height - fine.first_ring_height).abs() < 0.01);
    }
}

#[test]
fn ring_spectrum_gives_coupled_ringed_map() {
    let (spot_map, spot) = orientation_metrics(19.87, 1024, 512);
    let (ring_map, ring) = orientation_metrics(19.94, 1024, 512);
    assert!(ring.tau_c < spot.tau_c);
    assert!(ring.xi_c < spot.xi_c);
    assert!(ring.first_ring_height > spot.first_ring_height);
    assert!(ring_map.coupling() > spot_map.coupling());
    for m in [&spot_map, &ring_map] {
        assert!(m.hermitian_defect() < 1e-9);
        assert!(m.values.iter().all(|v| v.norm() <= 1.0 + 1e-12));
    }
}

fn gaussian_map(tau_fwhm: f64, xi_fwhm: f64) -> CoherenceMap {
    let (sw, sk) = (2.3548 / tau_fwhm, 2.3548 / xi_fwhm);
    let n = 128;
    let spec = GridSpec {
        center_omega: OMEGA_C,
        omega_half_width: 5.0 * sw,
        n_omega: n,
        k_half_width: 5.0 * sk,
        n_k: n,
    };
    let values = Array2::from_shape_fn((n, n), |(j, l)| {
        let (w, k) = (spec.detuning(j), spec.k(l));
        (-w * w / (2.0 * sw * sw) - k * k / (2.0 * sk * sk)).exp()
    });
    correlation_map_padded(&SpectralGrid::from_values(spec, values, "gaussian").unwrap(), 4).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn visibility_tracks_scaled_envelope(
        tau_fwhm in 14e-15..40e-15_f64,
        r in 0.05..0.95_f64,
        spf in 8.0..20.0_f64,
    ) {
        let m = gaussian_map(tau_fwhm, 40e-6);
        let icfg = InterferometerConfig { split_ratio: r, ..Default::default() };
        let sweep = StageSweep::centered(&icfg, m.carrier_omega, 3.0 * tau_fwhm, spf);
        let t = synthesize_trace(&m, 0.0, &sweep, &icfg, "g").unwrap();
        let e = extract_visibility(&t, DEFAULT_WINDOW_FRINGES, &icfg).unwrap();
        let factor = icfg.balance();
        for (i, v) in e.visibility.iter().enumerate() {
            prop_assert!((0.0..=1.0).contains(v), "{v}");
            let g = m.interpolate(e.tau.value(i), 0.0).unwrap().norm();
            prop_assert!((v - factor * g).abs() < 1e-2 * factor, "{v} vs {}", factor * g);
        }
    }

    #[test]
    fn compensated_bs2_shift_keeps_envelope_peak(steps in -6i32..=6) {
        let m = gaussian_map(20e-15, 40e-6);
        let icfg = InterferometerConfig::default();
        let base = StageSweep::centered(&icfg, m.carrier_omega, 50e-15, 16.0);
        let bs2 = steps as f64 * 40e-6 / 2.0;
        let t = synthesize_trace(&m, bs2, &base.compensated(bs2, &icfg), &icfg, "g").unwrap();
        let e = extract_visibility(&t, DEFAULT_WINDOW_FRINGES, &icfg).unwrap();
        let i = (0..e.visibility.len())
            .max_by(|&a, &b| e.visibility[a].total_cmp(&e.visibility[b]))
            .unwrap();
        prop_assert!(e.tau.value(i).abs() <= e.tau.step);
    }
}
