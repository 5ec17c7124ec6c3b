//! Emulation of the modified Mach–Zehnder measurement.
//!
//! Arm 1 carries the retroreflector R₁ on a stage: travel adds delay
//! `stage_delay_per_travel` per metre (double pass). Beam splitter BS₂
//! travel shifts one beam across the detector, which images the crystal
//! face with magnification M, and adds delay at the same time. A trace is
//! the detector signal recorded along a stage sweep at fixed BS₂ position;
//! its fringe visibility is |g¹| along τ at that ξ.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use sha2::{Digest, Sha256};

use crate::coherence::{metrics_from_magnitude, CoherenceMap, CoherenceMetrics, Profile};
use crate::dispersion::SPEED_OF_LIGHT;
use crate::error::{Error, Result};
use crate::grid::{split_position, UniformAxis};

/// Allowed relative deviation of any stage step from the mean step.
pub const MAX_STEP_DEVIATION: f64 = 0.01;

pub const MIN_SAMPLES_PER_FRINGE: f64 = 8.0;

pub const MIN_FRINGES: f64 = 3.0;

/// Visibility window length in fringes; see [`extract_visibility`].
pub const DEFAULT_WINDOW_FRINGES: f64 = 2.0;

/// Relative power below which spectral bins are ignored by
/// [`estimate_period_samples`].
pub const SPECTRAL_FLOOR: f64 = 1e-3;

/// Length of the continuation added at each trace end before demodulation,
/// in fringes.
pub const EXTENSION_FRINGES: f64 = 32.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterferometerConfig {
    /// Intensity fraction r₁ sent into arm 1; arm 2 gets 1 − r₁.
    pub split_ratio: f64,
    /// Near-field magnification from the crystal face to the detector.
    pub magnification: f64,
    /// Beam displacement on the detector per metre of BS₂ travel.
    pub bs2_shift_per_travel: f64,
    /// Extra delay per metre of BS₂ travel, s/m.
    pub bs2_delay_per_travel: f64,
    /// Delay per metre of R₁ stage travel, s/m.
    pub stage_delay_per_travel: f64,
}

impl Default for InterferometerConfig {
    /// Balanced arms, M = 6.6, and a 45° BS₂: travel d along its normal
    /// shifts the transmitted beam by d and lengthens its path by d.
    fn default() -> Self {
        Self {
            split_ratio: 0.5,
            magnification: 6.6,
            bs2_shift_per_travel: 1.0,
            bs2_delay_per_travel: 1.0 / SPEED_OF_LIGHT,
            stage_delay_per_travel: 2.0 / SPEED_OF_LIGHT,
        }
    }
}

impl InterferometerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::invalid(
                "split_ratio",
                format!("{} must lie in (0, 1)", self.split_ratio),
            ));
        }
        if !(self.magnification > 0.0 && self.magnification.is_finite()) {
            return Err(Error::invalid(
                "magnification",
                format!("{} must be positive", self.magnification),
            ));
        }
        if !(self.stage_delay_per_travel != 0.0 && self.stage_delay_per_travel.is_finite()) {
            return Err(Error::invalid("stage_delay_per_travel", "must be finite and nonzero"));
        }
        for (field, v) in [
            ("bs2_shift_per_travel", self.bs2_shift_per_travel),
            ("bs2_delay_per_travel", self.bs2_delay_per_travel),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(field, format!("{v} is not finite")));
            }
        }
        Ok(())
    }

    /// Crystal-plane displacement ξ per metre of BS₂ travel.
    pub fn xi_per_travel(&self) -> f64 {
        self.bs2_shift_per_travel / self.magnification
    }

    /// 2√(r₁r₂): fringe visibility of a fully coherent field.
    pub fn balance(&self) -> f64 {
        2.0 * (self.split_ratio * (1.0 - self.split_ratio)).sqrt()
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(format!("{self:?}").as_bytes());
        hex::encode(digest)[..16].to_string()
    }
}

/// Detector intensity 1 + 2√(r₁r₂) Re[g¹(τ, ξ)], in units of the
/// incoherent level.
pub fn detector_signal(
    m: &CoherenceMap,
    tau: f64,
    xi: f64,
    icfg: &InterferometerConfig,
) -> Result<f64> {
    let g = m
        .full_value(tau, xi)
        .ok_or(Error::OutsideMap { tau, xi })?;
    Ok(1.0 + icfg.balance() * g.re)
}

/// Uniform R₁ stage positions, m.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageSweep {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl StageSweep {
    /// Sweep covering delays |τ| ≤ `tau_half_span` around zero stage
    /// position with `samples_per_fringe` samples per carrier period.
    pub fn centered(
        icfg: &InterferometerConfig,
        carrier_omega: f64,
        tau_half_span: f64,
        samples_per_fringe: f64,
    ) -> Self {
        let period = fringe_period_travel(icfg, carrier_omega);
        let step = period / samples_per_fringe;
        let half = (tau_half_span / (icfg.stage_delay_per_travel * step)).floor() as usize;
        Self {
            start: -(half as f64) * step,
            step,
            len: 2 * half + 1,
        }
    }

    /// The same sweep moved so that it cancels the delay added by BS₂ at
    /// `bs2_position`, keeping the covered τ range fixed.
    pub fn compensated(&self, bs2_position: f64, icfg: &InterferometerConfig) -> Self {
        let shift = bs2_position * icfg.bs2_delay_per_travel / icfg.stage_delay_per_travel;
        Self {
            start: self.start - shift,
            ..*self
        }
    }

    pub fn position(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }
}

/// Stage travel per fringe at the carrier frequency.
pub fn fringe_period_travel(icfg: &InterferometerConfig, carrier_omega: f64) -> f64 {
    2.0 * PI / (carrier_omega * icfg.stage_delay_per_travel.abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceSource {
    Synthetic,
    Measured,
}

impl TraceSource {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceSource::Synthetic => "synthetic",
            TraceSource::Measured => "measured",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "synthetic" => Some(TraceSource::Synthetic),
            "measured" => Some(TraceSource::Measured),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceMeta {
    pub bs2_position_m: f64,
    pub orientation: String,
    pub source: TraceSource,
    /// [`InterferometerConfig::hash`] of the setup that recorded the trace.
    pub config_hash: String,
    /// Carrier wavelength when known; otherwise the fringe period is
    /// estimated from the trace.
    pub carrier_wavelength_m: Option<f64>,
    /// Delay added by the BS₂ position, s.
    pub tau_offset_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FringeTrace {
    /// Stage positions, m; strictly monotone.
    pub positions: Vec<f64>,
    /// Detector intensities, arbitrary units; non-negative.
    pub intensities: Vec<f64>,
    pub meta: TraceMeta,
}

impl FringeTrace {
    pub fn validate(&self) -> Result<()> {
        if self.positions.len() != self.intensities.len() {
            return Err(Error::Sampling(format!(
                "{} positions but {} intensities",
                self.positions.len(),
                self.intensities.len()
            )));
        }
        if self.positions.len() < 2 {
            return Err(Error::Sampling("fewer than two samples".into()));
        }
        let rising = self.positions[1] > self.positions[0];
        if self
            .positions
            .windows(2)
            .any(|w| !((w[1] > w[0]) == rising && w[1] != w[0]))
        {
            return Err(Error::Sampling("positions are not strictly monotone".into()));
        }
        if let Some(v) = self.intensities.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Sampling(format!("intensity {v} is not finite and non-negative")));
        }
        Ok(())
    }

    /// Mean stage step after checking uniformity.
    fn uniform_step(&self) -> Result<f64> {
        let n = self.positions.len();
        let step = (self.positions[n - 1] - self.positions[0]) / (n - 1) as f64;
        let deviation = self
            .positions
            .windows(2)
            .map(|w| ((w[1] - w[0]) / step - 1.0).abs())
            .fold(0.0, f64::max);
        if deviation > MAX_STEP_DEVIATION {
            return Err(Error::NonUniformSampling {
                deviation: 100.0 * deviation,
            });
        }
        Ok(step)
    }
}

/// Samples the detector along `sweep` with BS₂ at `bs2_position`.
pub fn synthesize_trace(
    m: &CoherenceMap,
    bs2_position: f64,
    sweep: &StageSweep,
    icfg: &InterferometerConfig,
    orientation: &str,
) -> Result<FringeTrace> {
    icfg.validate()?;
    let period = fringe_period_travel(icfg, m.carrier_omega);
    let per_fringe = period / sweep.step.abs();
    if per_fringe < MIN_SAMPLES_PER_FRINGE {
        return Err(Error::Sampling(format!(
            "{per_fringe:.2} samples per fringe, need at least {MIN_SAMPLES_PER_FRINGE}"
        )));
    }
    let fringes = sweep.len.saturating_sub(1) as f64 / per_fringe;
    if fringes < MIN_FRINGES {
        return Err(Error::Sampling(format!(
            "sweep covers {fringes:.2} fringes, need at least {MIN_FRINGES}"
        )));
    }
    let tau_offset = bs2_position * icfg.bs2_delay_per_travel;
    let xi = bs2_position * icfg.xi_per_travel();
    let positions: Vec<f64> = (0..sweep.len).map(|i| sweep.position(i)).collect();
    let intensities = positions
        .par_iter()
        .map(|&p| detector_signal(m, p * icfg.stage_delay_per_travel + tau_offset, xi, icfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(FringeTrace {
        positions,
        intensities,
        meta: TraceMeta {
            bs2_position_m: bs2_position,
            orientation: orientation.to_string(),
            source: TraceSource::Synthetic,
            config_hash: icfg.hash(),
            carrier_wavelength_m: Some(2.0 * PI * SPEED_OF_LIGHT / m.carrier_omega),
            tau_offset_s: tau_offset,
        },
    })
}

/// Fringe period of a trace in samples, from the power-weighted mean
/// frequency of its spectrum. The mean rather than the peak is used because
/// ring-shaped spectra put their maxima off the degenerate frequency while
/// signal-idler symmetry keeps the mean on it. A Hann taper keeps leakage
/// from the record ends out of the mean. Bins below [`SPECTRAL_FLOOR`] of
/// the peak and the lowest two cycles per trace are excluded.
pub fn estimate_period_samples(intensities: &[f64]) -> Result<f64> {
    let n = intensities.len();
    if n < 16 {
        return Err(Error::Sampling(format!("{n} samples are too few to find the fringe period")));
    }
    let mean = intensities.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = intensities
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let w = (PI * i as f64 / (n - 1) as f64).sin().powi(2);
            Complex64::new((v - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let power: Vec<f64> = buf[..n / 2].iter().map(|c| c.norm_sqr()).collect();
    let band = &power[2.min(power.len())..];
    let peak = band.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::Sampling("trace has no fringes".into()));
    }
    let (mut weight, mut moment) = (0.0, 0.0);
    for (i, &p) in band.iter().enumerate() {
        if p >= SPECTRAL_FLOOR * peak {
            weight += p;
            moment += p * (i + 2) as f64;
        }
    }
    Ok(n as f64 * weight / moment)
}

/// Least-squares B + a cos(2πi/P) + b sin(2πi/P) over `samples`, with i
/// counted from `origin`.
fn fit_sinusoid(samples: &[f64], origin: f64, period: f64) -> Result<[f64; 3]> {
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for (k, &v) in samples.iter().enumerate() {
        let phase = 2.0 * PI * (origin + k as f64) / period;
        let row = Vector3::new(1.0, phase.cos(), phase.sin());
        ata += row * row.transpose();
        atb += row * v;
    }
    let x = ata
        .lu()
        .solve(&atb)
        .ok_or_else(|| Error::Sampling("fringe fit at a trace end is singular".into()))?;
    Ok([x[0], x[1], x[2]])
}

/// The trace with [`EXTENSION_FRINGES`] fringes of continuation on each
/// side, padded equally.
fn extend_record(intensities: &[f64], period: f64, fit_len: usize) -> Result<Vec<f64>> {
    let n = intensities.len();
    let pad = (EXTENSION_FRINGES * period).ceil() as usize;
    let left = fit_sinusoid(&intensities[..fit_len], 0.0, period)?;
    let right = fit_sinusoid(&intensities[n - fit_len..], (n - fit_len) as f64, period)?;
    let level = 0.5 * (left[0] + right[0]);
    // cos² taper from 1 at the record to 0 at the far end
    let taper = |d: usize| (0.5 * PI * d as f64 / pad as f64).cos().powi(2);
    let continue_fit = |c: &[f64; 3], i: f64, w: f64| {
        let phase = 2.0 * PI * i / period;
        level + (c[0] - level) * w + w * (c[1] * phase.cos() + c[2] * phase.sin())
    };
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|d| continue_fit(&left, -(d as f64), taper(d))));
    out.extend_from_slice(intensities);
    out.extend((1..=pad).map(|d| continue_fit(&right, (n - 1 + d) as f64, taper(d))));
    Ok(out)
}

/// Measured fringe period of a trace in stage travel.
pub fn fringe_period(t: &FringeTrace) -> Result<f64> {
    t.validate()?;
    let step = t.uniform_step()?;
    Ok(estimate_period_samples(&t.intensities)? * step.abs())
}

/// |g¹| samples along τ at one ξ, extracted from a trace.
#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    /// Delay including the BS₂ offset, s.
    pub tau: UniformAxis,
    /// Fringe visibility at each τ.
    pub visibility: Vec<f64>,
    /// Crystal-plane displacement of this trace, m.
    pub xi: f64,
    pub meta: TraceMeta,
}

/// Local fringe visibility (I_max − I_min) / (I_max + I_min) along a
/// trace, by Fourier-domain demodulation.
///
/// The trace spectrum is split at 1 / (2 · `window_fringes`) of the carrier
/// frequency: the part below is the local mean intensity B, the positive
/// part above is the analytic fringe term A e^{iφ}. The visibility is
/// 2|A| / B at every sample, so a window of W fringes resolves changes of
/// the mean over about 2W fringes while the fringe envelope keeps its full
/// bandwidth. Unlike a fit over a sliding window, this does not average
/// |g¹| across the window, which matters when the coherence time is only a
/// few fringes. Detector gain cancels in the ratio.
///
/// A sharp split rings wherever the record jumps, so each end is continued
/// by the sinusoid fitted to its last window, with the fringe amplitude
/// tapered to zero and the mean ramped to a common level over
/// [`EXTENSION_FRINGES`] fringes. Half a window is dropped at each end.
pub fn extract_visibility(
    t: &FringeTrace,
    window_fringes: f64,
    icfg: &InterferometerConfig,
) -> Result<Envelope> {
    icfg.validate()?;
    t.validate()?;
    if !(window_fringes >= 1.0) {
        return Err(Error::Sampling(format!(
            "window of {window_fringes} fringes is shorter than one fringe"
        )));
    }
    let step = t.uniform_step()?;
    let period = match t.meta.carrier_wavelength_m {
        Some(lambda) => {
            let omega = 2.0 * PI * SPEED_OF_LIGHT / lambda;
            fringe_period_travel(icfg, omega) / step.abs()
        }
        None => estimate_period_samples(&t.intensities)?,
    };
    if period < MIN_SAMPLES_PER_FRINGE {
        return Err(Error::Sampling(format!(
            "{period:.2} samples per fringe, need at least {MIN_SAMPLES_PER_FRINGE}"
        )));
    }
    let half = (window_fringes * period / 2.0).round() as usize;
    let n = t.intensities.len();
    if n < 2 * half + 2 {
        return Err(Error::Sampling(format!(
            "{n} samples are too few for a {window_fringes}-fringe window"
        )));
    }

    let record = extend_record(&t.intensities, period, 2 * half + 1)?;
    let pad = (record.len() - n) / 2;
    let len = record.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut spectrum: Vec<Complex64> = record.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(len).process(&mut spectrum);
    let split = len as f64 / period / (2.0 * window_fringes);
    let mut mean = vec![Complex64::default(); len];
    let mut fringe = vec![Complex64::default(); len];
    for (i, &c) in spectrum.iter().enumerate() {
        let f = if i <= len / 2 { i as f64 } else { i as f64 - len as f64 };
        if f.abs() < split {
            mean[i] = c;
        } else if f > 0.0 {
            fringe[i] = c;
        }
    }
    let inverse = planner.plan_fft_inverse(len);
    inverse.process(&mut mean);
    inverse.process(&mut fringe);
    let visibility = (half..n - half)
        .map(|i| {
            let b = mean[pad + i].re;
            if !(b > 0.0) {
                return Err(Error::Sampling(format!("non-positive mean intensity near sample {i}")));
            }
            Ok(2.0 * fringe[pad + i].norm() / b)
        })
        .collect::<Result<Vec<_>>>()?;

    let tau_step = step * icfg.stage_delay_per_travel;
    let tau_start = t.positions[half] * icfg.stage_delay_per_travel + t.meta.tau_offset_s;
    let (tau, visibility) = if tau_step > 0.0 {
        (UniformAxis::new(tau_start, tau_step, visibility.len()), visibility)
    } else {
        let len = visibility.len();
        let start = tau_start + (len - 1) as f64 * tau_step;
        (
            UniformAxis::new(start, -tau_step, len),
            visibility.into_iter().rev().collect(),
        )
    };
    Ok(Envelope {
        tau,
        visibility,
        xi: t.meta.bs2_position_m * icfg.xi_per_travel(),
        meta: t.meta.clone(),
    })
}

/// |g¹| on a uniform (τ, ξ) grid; rows are τ.
#[derive(Clone, Debug)]
pub struct ReconstructedMap {
    pub tau: UniformAxis,
    pub xi: UniformAxis,
    pub values: Array2<f64>,
    pub config_hash: String,
}

impl ReconstructedMap {
    pub fn is_one_dimensional(&self) -> bool {
        self.xi.len == 1
    }

    /// |g¹(τ)| at the ξ column nearest zero.
    pub fn tau_cut(&self) -> Profile {
        Profile {
            axis: self.tau,
            values: self.values.column(self.xi.nearest(0.0)).to_vec(),
        }
    }

    pub fn metrics(&self) -> Result<CoherenceMetrics> {
        if self.is_one_dimensional() {
            return Err(Error::Profile {
                axis: "xi",
                reason: "a single trace has no transverse extent".into(),
            });
        }
        metrics_from_magnitude(&self.tau, &self.xi, self.values.view())
    }
}

/// Merges traces taken at several BS₂ positions into one |g¹| map.
///
/// Each trace becomes an [`Envelope`] whose τ already includes its BS₂
/// offset. Envelopes are linearly resampled onto a τ grid that contains zero
/// and spans the delay range common to all traces, then linearly
/// interpolated across ξ onto `n_xi` uniform columns (default: one per
/// trace). Visibility is divided by 2√(r₁r₂) so unbalanced arms still give
/// |g¹|. A single trace gives a one-column map; two traces are rejected.
pub fn assemble_map(
    traces: &[FringeTrace],
    icfg: &InterferometerConfig,
    window_fringes: f64,
    n_xi: Option<usize>,
) -> Result<ReconstructedMap> {
    icfg.validate()?;
    if traces.is_empty() || traces.len() == 2 {
        return Err(Error::Sampling(format!(
            "{} traces given; need one (1D envelope) or at least three BS2 positions",
            traces.len()
        )));
    }
    let hash = icfg.hash();
    if let Some(t) = traces.iter().find(|t| t.meta.config_hash != hash) {
        return Err(Error::Metadata(format!(
            "trace at BS2 = {} m was recorded with configuration {} but the map uses {hash}",
            t.meta.bs2_position_m, t.meta.config_hash
        )));
    }

    let mut envelopes = traces
        .par_iter()
        .map(|t| extract_visibility(t, window_fringes, icfg))
        .collect::<Result<Vec<_>>>()?;
    envelopes.sort_by(|a, b| a.xi.total_cmp(&b.xi));
    if envelopes.windows(2).any(|w| w[0].xi == w[1].xi) {
        return Err(Error::Metadata("two traces share one BS2 position".into()));
    }

    let step = envelopes.iter().map(|e| e.tau.step).fold(f64::INFINITY, f64::min);
    let lo = envelopes.iter().map(|e| e.tau.start).fold(f64::NEG_INFINITY, f64::max);
    let hi = envelopes.iter().map(|e| e.tau.end()).fold(f64::INFINITY, f64::min);
    let first = (lo / step - 1e-9).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    if last - first < 2 {
        return Err(Error::Sampling("traces share no common delay range".into()));
    }
    let tau = UniformAxis::new(first as f64 * step, step, (last - first + 1) as usize);

    let columns: Vec<Vec<f64>> = envelopes
        .iter()
        .map(|e| {
            (0..tau.len)
                .map(|i| {
                    let p = e.tau.position(tau.value(i)).unwrap_or_else(|| {
                        // inside the common range up to round-off
                        ((tau.value(i) - e.tau.start) / e.tau.step).clamp(0.0, (e.tau.len - 1) as f64)
                    });
                    let (j, f) = split_position(p, e.tau.len);
                    let v = &e.visibility;
                    let upper = v[(j + 1).min(v.len() - 1)];
                    ((1.0 - f) * v[j] + f * upper) / icfg.balance()
                })
                .collect()
        })
        .collect();

    let trace_xi: Vec<f64> = envelopes.iter().map(|e| e.xi).collect();
    let (xi, values) = if envelopes.len() == 1 {
        let values = Array2::from_shape_vec((tau.len, 1), columns[0].clone())
            .expect("column length matches the τ axis");
        (UniformAxis::new(trace_xi[0], 0.0, 1), values)
    } else {
        let n = n_xi.unwrap_or(envelopes.len());
        if n < 2 {
            return Err(Error::invalid("n_xi", format!("{n} must be at least 2")));
        }
        let (x0, x1) = (trace_xi[0], trace_xi[trace_xi.len() - 1]);
        let xi = UniformAxis::new(x0, (x1 - x0) / (n - 1) as f64, n);
        let values = Array2::from_shape_fn((tau.len, n), |(i, j)| {
            let x = xi.value(j);
            let r = trace_xi.partition_point(|&v| v <= x).clamp(1, trace_xi.len() - 1);
            let f = ((x - trace_xi[r - 1]) / (trace_xi[r] - trace_xi[r - 1])).clamp(0.0, 1.0);
            (1.0 - f) * columns[r - 1][i] + f * columns[r][i]
        });
        (xi, values)
    };
    Ok(ReconstructedMap {
        tau,
        xi,
        values,
        config_hash: hash,
    })
}
