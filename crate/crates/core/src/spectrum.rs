//! Frequency–transverse-wavevector spectral density of high-gain PDC,
//!
//!   S(ω, k) = (G sinh 𝒢 / 𝒢)²,   𝒢 = sqrt(G² − (Δk L)² / 4),
//!
//! sampled on uniform grids, plus the (λ, θ_ext) view used to compare with
//! far-field spectrometer scans.

use std::f64::consts::PI;
use std::time::{SystemTime, UNIX_EPOCH};

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::dispersion::SPEED_OF_LIGHT;
use crate::error::{Error, Result};
use crate::grid::{split_position, UniformAxis};
use crate::phasematch::CrystalConfig;

/// Largest allowed ratio between the spectrum on the grid boundary and its
/// peak.
pub const EDGE_DECAY_LIMIT: f64 = 1e-3;

/// Fraction of grid nodes that may fall outside the physical domain.
pub const MAX_INVALID_FRACTION: f64 = 0.01;

pub const MIN_SAMPLES: usize = 64;

/// Below this |𝒢| the series of sinh(x)/x and sin(x)/x is used.
const SERIES_THRESHOLD: f64 = 1e-4;

/// Sampling of the (ω, k) plane. ω nodes sit at `center_omega + (j − n/2) dω`
/// with `dω = 2 · omega_half_width / n_omega`, k nodes likewise around zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub center_omega: f64,
    pub omega_half_width: f64,
    pub n_omega: usize,
    pub k_half_width: f64,
    pub n_k: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        for (field, n) in [("n_omega", self.n_omega), ("n_k", self.n_k)] {
            if n < MIN_SAMPLES || !n.is_power_of_two() {
                return Err(Error::invalid(
                    field,
                    format!("{n} must be a power of two >= {MIN_SAMPLES}"),
                ));
            }
        }
        if !(self.omega_half_width > 0.0 && self.omega_half_width < self.center_omega) {
            return Err(Error::invalid(
                "omega_half_width",
                format!("{:e} rad/s must lie in (0, center)", self.omega_half_width),
            ));
        }
        if !(self.k_half_width > 0.0 && self.k_half_width.is_finite()) {
            return Err(Error::invalid(
                "k_half_width",
                format!("{:e} rad/m must be positive", self.k_half_width),
            ));
        }
        Ok(())
    }

    pub fn omega_step(&self) -> f64 {
        2.0 * self.omega_half_width / self.n_omega as f64
    }

    pub fn k_step(&self) -> f64 {
        2.0 * self.k_half_width / self.n_k as f64
    }

    /// Detuning ω − ω_c of row `j`; rows `n/2 ± m` are exact negatives.
    #[inline]
    pub fn detuning(&self, j: usize) -> f64 {
        (j as f64 - (self.n_omega / 2) as f64) * self.omega_step()
    }

    #[inline]
    pub fn k(&self, l: usize) -> f64 {
        (l as f64 - (self.n_k / 2) as f64) * self.k_step()
    }

    pub fn omega_axis(&self) -> UniformAxis {
        UniformAxis::new(
            self.center_omega - self.omega_half_width,
            self.omega_step(),
            self.n_omega,
        )
    }

    pub fn k_axis(&self) -> UniformAxis {
        UniformAxis::centered(self.k_step(), self.n_k)
    }

    /// Grid centred on the degenerate frequency whose half-widths span the
    /// phase-matched locus plus three gain bandwidths, where the gain region
    /// is |Δk| L / 2 ≤ max(G, 1). The ω range is clipped to the dispersion
    /// data.
    pub fn auto(cfg: &CrystalConfig, n_omega: usize, n_k: usize) -> Result<GridSpec> {
        let mismatch = cfg.mismatch()?;
        let center = mismatch.center;
        let (lo_um, hi_um) = cfg.sellmeier.valid_range_um;
        let omega_of = |um: f64| 2.0 * PI * SPEED_OF_LIGHT / (um * 1e-6);
        let limit = (center - omega_of(hi_um)).min(omega_of(lo_um) - center) * (1.0 - 1e-9);
        let gain_dk = 2.0 * cfg.gain.max(1.0) / cfg.length_m;

        const SCAN: usize = 4000;
        let (mut omega_locus, mut omega_edge) = (0.0_f64, 0.0_f64);
        let (mut k_locus, mut k_edge) = (0.0_f64, 0.0_f64);
        for i in 0..=SCAN {
            let detuning = limit * i as f64 / SCAN as f64;
            let Ok(row) = mismatch.row(detuning) else {
                continue;
            };
            let f0 = row.at(0.0)?;
            if f0 <= 0.0 {
                omega_locus = detuning;
                if let Some(k) = row.solve_k(0.0) {
                    k_locus = k_locus.max(k);
                }
            }
            if f0 <= gain_dk {
                omega_edge = detuning;
                if let Some(k) = row.solve_k(gain_dk) {
                    k_edge = k_edge.max(k);
                }
            }
        }
        if omega_edge == 0.0 && k_edge == 0.0 {
            return Err(Error::invalid(
                "theta",
                format!(
                    "{:.4} deg gives no gain region inside the dispersion data range",
                    cfg.theta_rad.to_degrees()
                ),
            ));
        }
        let omega_half_width =
            (omega_locus + 3.0 * (omega_edge - omega_locus)).clamp(limit * 1e-3, limit);
        let k_half_width = k_locus + 3.0 * (k_edge - k_locus).max(gain_dk.sqrt() * 1e-3);
        let spec = GridSpec {
            center_omega: center,
            omega_half_width,
            n_omega,
            k_half_width,
            n_k,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Parametric gain 𝒢 = sqrt(G² − (ΔkL)²/4). Past the branch point the
/// radicand is negative and only the magnitude of the imaginary value is
/// kept.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gain {
    Real(f64),
    Imaginary(f64),
}

impl Gain {
    pub fn magnitude(self) -> f64 {
        match self {
            Gain::Real(g) | Gain::Imaginary(g) => g,
        }
    }
}

pub fn gain_function(delta_k: f64, length_m: f64, gain: f64) -> Gain {
    let half = 0.5 * delta_k * length_m;
    let radicand = gain * gain - half * half;
    if radicand >= 0.0 {
        Gain::Real(radicand.sqrt())
    } else {
        Gain::Imaginary((-radicand).sqrt())
    }
}

#[inline]
fn sinhc(x: f64) -> f64 {
    if x.abs() < SERIES_THRESHOLD {
        let x2 = x * x;
        1.0 + x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sinh() / x
    }
}

#[inline]
fn sinc(x: f64) -> f64 {
    if x.abs() < SERIES_THRESHOLD {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// S for a given mismatch. On the imaginary branch sinh(i x)/(i x) = sin(x)/x.
pub fn density_from_mismatch(delta_k: f64, length_m: f64, gain: f64) -> f64 {
    let shape = match gain_function(delta_k, length_m, gain) {
        Gain::Real(g) => sinhc(g),
        Gain::Imaginary(g) => sinc(g),
    };
    let amplitude = gain * shape;
    amplitude * amplitude
}

pub fn spectral_density(omega_s: f64, k: f64, cfg: &CrystalConfig) -> Result<f64> {
    let dk = cfg.delta_k(omega_s, k)?;
    Ok(density_from_mismatch(dk, cfg.length_m, cfg.gain))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    /// [`CrystalConfig::hash`] of the source configuration, or a label for
    /// synthetic spectra.
    pub config_hash: String,
    /// Nodes outside the physical domain, set to zero.
    pub invalid_nodes: usize,
    /// max(S on the boundary) / max(S).
    pub edge_ratio: f64,
    /// Build time, seconds since the Unix epoch.
    pub built_unix_s: Option<u64>,
}

/// S(ω, k) on a [`GridSpec`]; rows are ω, columns k.
#[derive(Clone, Debug)]
pub struct SpectralGrid {
    pub spec: GridSpec,
    pub values: Array2<f64>,
    pub provenance: Provenance,
}

impl SpectralGrid {
    /// Wraps externally computed values (test spectra, imported data).
    pub fn from_values(spec: GridSpec, values: Array2<f64>, label: impl Into<String>) -> Result<Self> {
        spec.validate()?;
        if values.dim() != (spec.n_omega, spec.n_k) {
            return Err(Error::invalid(
                "values",
                format!("shape {:?} does not match {}x{}", values.dim(), spec.n_omega, spec.n_k),
            ));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("values", format!("{v} is not a finite non-negative density")));
        }
        let edge_ratio = edge_ratio(&values);
        Ok(Self {
            spec,
            values,
            provenance: Provenance {
                config_hash: label.into(),
                invalid_nodes: 0,
                edge_ratio,
                built_unix_s: None,
            },
        })
    }

    pub fn carrier_omega(&self) -> f64 {
        self.spec.center_omega
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// (row, column) of the largest value; first occurrence wins.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut v = f64::NEG_INFINITY;
        for ((j, l), &s) in self.values.indexed_iter() {
            if s > v {
                v = s;
                best = (j, l);
            }
        }
        best
    }

    pub fn edge_ratio(&self) -> f64 {
        edge_ratio(&self.values)
    }

    pub fn check_edge_decay(&self) -> Result<()> {
        let ratio = self.edge_ratio();
        if ratio < EDGE_DECAY_LIMIT {
            Ok(())
        } else {
            Err(Error::EdgeDecay {
                ratio,
                limit: EDGE_DECAY_LIMIT,
            })
        }
    }

    /// Σ S dω dk.
    pub fn integral(&self) -> f64 {
        self.values.sum() * self.spec.omega_step() * self.spec.k_step()
    }
}

fn edge_ratio(values: &Array2<f64>) -> f64 {
    let peak = values.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    let (rows, cols) = values.dim();
    let mut edge = 0.0_f64;
    for l in 0..cols {
        edge = edge.max(values[[0, l]]).max(values[[rows - 1, l]]);
    }
    for j in 0..rows {
        edge = edge.max(values[[j, 0]]).max(values[[j, cols - 1]]);
    }
    edge / peak
}

/// Evaluates S at every node. Nodes where the mismatch is undefined
/// (evanescent or outside the dispersion data) are zero and counted.
pub fn build_spectrum(cfg: &CrystalConfig, grid: &GridSpec) -> Result<SpectralGrid> {
    cfg.validate()?;
    grid.validate()?;
    let mismatch = cfg.mismatch()?;
    if (grid.center_omega - mismatch.center).abs() > 1e-12 * mismatch.center {
        return Err(Error::invalid(
            "center_omega",
            "grid must be centred on the degenerate frequency",
        ));
    }
    let (length, gain) = (cfg.length_m, cfg.gain);
    let mut values = Array2::<f64>::zeros((grid.n_omega, grid.n_k));
    let invalid: usize = values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .map(|(j, mut row)| {
            let Ok(mm) = mismatch.row(grid.detuning(j)) else {
                return row.len();
            };
            let mut bad = 0;
            for (l, s) in row.iter_mut().enumerate() {
                match mm.at(grid.k(l)) {
                    Ok(dk) => *s = density_from_mismatch(dk, length, gain),
                    Err(_) => bad += 1,
                }
            }
            bad
        })
        .sum();

    let total = grid.n_omega * grid.n_k;
    if invalid as f64 > MAX_INVALID_FRACTION * total as f64 {
        return Err(Error::TooManyInvalidNodes { invalid, total });
    }
    let built_unix_s = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .ok()
        .map(|d| d.as_secs());
    let edge_ratio = edge_ratio(&values);
    Ok(SpectralGrid {
        spec: *grid,
        values,
        provenance: Provenance {
            config_hash: cfg.hash(),
            invalid_nodes: invalid,
            edge_ratio,
            built_unix_s,
        },
    })
}

/// λ = 2πc/ω, θ_ext = kλ/2π.
pub fn to_lambda_theta(omega: f64, k: f64) -> (f64, f64) {
    let lambda = 2.0 * PI * SPEED_OF_LIGHT / omega;
    (lambda, k * lambda / (2.0 * PI))
}

pub fn from_lambda_theta(lambda: f64, theta_ext: f64) -> (f64, f64) {
    (2.0 * PI * SPEED_OF_LIGHT / lambda, 2.0 * PI * theta_ext / lambda)
}

/// S resampled on uniform vacuum wavelength (m) × external angle (rad)
/// axes; rows are λ.
#[derive(Clone, Debug)]
pub struct WavelengthAngleGrid {
    pub lambda: UniformAxis,
    pub theta_ext: UniformAxis,
    pub values: Array2<f64>,
}

/// Bilinear resampling of `grid` onto a (λ, θ_ext) grid with the same node
/// counts. The λ axis spans the ω range of the source; the θ axis is
/// centred on zero and reaches the largest angle present at the longest
/// wavelength. Target nodes mapping outside the source are zero.
pub fn to_wavelength_angle(grid: &SpectralGrid) -> WavelengthAngleGrid {
    let spec = &grid.spec;
    let omega_axis = spec.omega_axis();
    let lambda_min = 2.0 * PI * SPEED_OF_LIGHT / omega_axis.end();
    let lambda_max = 2.0 * PI * SPEED_OF_LIGHT / omega_axis.start;
    let lambda = UniformAxis::new(
        lambda_min,
        (lambda_max - lambda_min) / (spec.n_omega - 1) as f64,
        spec.n_omega,
    );
    let theta_max = spec.k_half_width * lambda_max / (2.0 * PI);
    let theta_ext = UniformAxis::centered(theta_max / (spec.n_k / 2) as f64, spec.n_k);
    let k_axis = spec.k_axis();

    let mut values = Array2::<f64>::zeros((spec.n_omega, spec.n_k));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            for (j, out) in row.iter_mut().enumerate() {
                let (omega, k) = from_lambda_theta(lambda.value(i), theta_ext.value(j));
                let (Some(p), Some(q)) = (omega_axis.position(omega), k_axis.position(k)) else {
                    continue;
                };
                let (j0, fp) = split_position(p, spec.n_omega);
                let (l0, fq) = split_position(q, spec.n_k);
                let v = &grid.values;
                *out = (1.0 - fp) * ((1.0 - fq) * v[[j0, l0]] + fq * v[[j0, l0 + 1]])
                    + fp * ((1.0 - fq) * v[[j0 + 1, l0]] + fq * v[[j0 + 1, l0 + 1]]);
            }
        });
    WavelengthAngleGrid {
        lambda,
        theta_ext,
        values,
    }
}
