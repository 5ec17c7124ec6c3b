//! Shared fixtures for the pipeline benchmarks.

use pdc_coherence::interferometer::StageSweep;
use pdc_coherence::{
    build_spectrum, correlation_map, synthesize_trace, CoherenceMap, CrystalConfig, FringeTrace, GridSpec,
    InterferometerConfig, SellmeierSet, SpectralGrid,
};

/// Desktop grid size used in the benchmarks.
pub const N_OMEGA: usize = 1024;
pub const N_K: usize = 512;

/// 10 mm BBO, 800 nm pump, gain 6, at `theta_deg` to the optic axis.
pub fn crystal(theta_deg: f64) -> CrystalConfig {
    CrystalConfig::new(10e-3, theta_deg.to_radians(), 800e-9, 6.0, SellmeierSet::bbo())
        .expect("benchmark crystal is valid")
}

pub fn spectrum(theta_deg: f64, n_omega: usize, n_k: usize) -> SpectralGrid {
    let cfg = crystal(theta_deg);
    let grid = GridSpec::auto(&cfg, n_omega, n_k).expect("auto grid");
    build_spectrum(&cfg, &grid).expect("spectrum")
}

pub fn map(theta_deg: f64) -> CoherenceMap {
    correlation_map(&spectrum(theta_deg, N_OMEGA, N_K)).expect("map")
}

/// Traces at BS₂ = k · 40 µm for |k| ≤ `steps_each_side`, covering ±120 fs
/// at 16 samples per fringe.
pub fn traces(m: &CoherenceMap, steps_each_side: i32) -> Vec<FringeTrace> {
    let icfg = InterferometerConfig::default();
    let base = StageSweep::centered(&icfg, m.carrier_omega, 120e-15, 16.0);
    (-steps_each_side..=steps_each_side)
        .map(|k| {
            let bs2 = k as f64 * 40e-6;
            synthesize_trace(m, bs2, &base.compensated(bs2, &icfg), &icfg, "bench").expect("trace")
        })
        .collect()
}
