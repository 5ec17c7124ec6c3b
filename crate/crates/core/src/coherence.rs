//! First-order correlation g¹(τ, ξ) from the spectral density, through the
//! space-time Wiener–Khinchin relation
//!
//!   G¹(τ, ξ) = ∫∫ S(ω, k) exp(i k ξ − i ω τ) dω dk,   g¹ = G¹ / G¹(0, 0).
//!
//! Maps store the envelope taken relative to the carrier ω_c (the grid
//! centre); the full correlation is `envelope · exp(−i ω_c τ)`.

use std::f64::consts::LN_2;

use ndarray::{s, Array2, ArrayView2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{split_position, UniformAxis};
use crate::spectrum::SpectralGrid;

/// Zero-padding factor applied by [`correlation_map`].
pub const DEFAULT_PADDING: usize = 4;

pub const MIN_SAMPLES_PER_FWHM: usize = 8;

/// Secondary maxima below this height are reported as no ring.
pub const RING_NOISE_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct CoherenceMap {
    /// Delay axis, s.
    pub tau: UniformAxis,
    /// Transverse displacement axis, m.
    pub xi: UniformAxis,
    /// Envelope of g¹; rows are τ, columns ξ.
    pub values: Array2<Complex64>,
    /// ω_c, rad/s.
    pub carrier_omega: f64,
    /// Unnormalised G¹(0, 0) = Σ S dω dk.
    pub origin_integral: f64,
    /// Provenance tag of the source spectrum.
    pub source: String,
}

impl CoherenceMap {
    /// Indices of the samples nearest τ = 0, ξ = 0.
    pub fn center(&self) -> (usize, usize) {
        (self.tau.nearest(0.0), self.xi.nearest(0.0))
    }

    pub fn magnitude(&self) -> Array2<f64> {
        self.values.mapv(|v| v.norm())
    }

    /// Bilinear interpolation of the envelope; `None` outside the map.
    pub fn interpolate(&self, tau: f64, xi: f64) -> Option<Complex64> {
        let p = self.tau.position(tau)?;
        let q = self.xi.position(xi)?;
        let (i, fp) = split_position(p, self.tau.len);
        let (j, fq) = split_position(q, self.xi.len);
        let v = &self.values;
        let at = |a: usize, b: usize| v[[a.min(self.tau.len - 1), b.min(self.xi.len - 1)]];
        Some(
            (at(i, j) * (1.0 - fq) + at(i, j + 1) * fq) * (1.0 - fp)
                + (at(i + 1, j) * (1.0 - fq) + at(i + 1, j + 1) * fq) * fp,
        )
    }

    /// Envelope times the carrier, g¹(τ, ξ).
    pub fn full_value(&self, tau: f64, xi: f64) -> Option<Complex64> {
        self.interpolate(tau, xi)
            .map(|g| g * Complex64::from_polar(1.0, -self.carrier_omega * tau))
    }

    /// |g¹(τ, ξ = 0)|.
    pub fn tau_cut(&self) -> Profile {
        let (_, cj) = self.center();
        Profile {
            axis: self.tau,
            values: self.values.column(cj).iter().map(|v| v.norm()).collect(),
        }
    }

    /// |g¹(τ = 0, ξ)|.
    pub fn xi_cut(&self) -> Profile {
        let (ci, _) = self.center();
        Profile {
            axis: self.xi,
            values: self.values.row(ci).iter().map(|v| v.norm()).collect(),
        }
    }

    /// Sub-map with |τ| ≤ `tau_half` and |ξ| ≤ `xi_half`.
    pub fn crop(&self, tau_half: f64, xi_half: f64) -> CoherenceMap {
        let (ci, cj) = self.center();
        let ni = ((tau_half / self.tau.step).floor() as usize).min(ci).min(self.tau.len - 1 - ci);
        let nj = ((xi_half / self.xi.step).floor() as usize).min(cj).min(self.xi.len - 1 - cj);
        let values = self
            .values
            .slice(s![ci - ni..=ci + ni, cj - nj..=cj + nj])
            .to_owned();
        CoherenceMap {
            tau: UniformAxis::new(self.tau.value(ci - ni), self.tau.step, 2 * ni + 1),
            xi: UniformAxis::new(self.xi.value(cj - nj), self.xi.step, 2 * nj + 1),
            values,
            carrier_omega: self.carrier_omega,
            origin_integral: self.origin_integral,
            source: self.source.clone(),
        }
    }

    /// max |g¹(τ, ξ) − g¹(τ, 0) g¹(0, ξ)|; zero for separable spectra.
    pub fn coupling(&self) -> f64 {
        let (ci, cj) = self.center();
        let v = &self.values;
        v.axis_iter(Axis(0))
            .into_par_iter()
            .map(|row| {
                let g_tau = row[cj];
                row.iter()
                    .zip(v.row(ci).iter())
                    .map(|(&g, &g_xi)| (g - g_tau * g_xi).norm())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// max |g¹(−τ, −ξ) − conj g¹(τ, ξ)| over sample pairs present in the map.
    pub fn hermitian_defect(&self) -> f64 {
        let (ci, cj) = self.center();
        let di = ci.min(self.tau.len - 1 - ci);
        let dj = cj.min(self.xi.len - 1 - cj);
        let mut worst = 0.0_f64;
        for a in ci - di..=ci + di {
            for b in cj - dj..=cj + dj {
                let mirror = self.values[[2 * ci - a, 2 * cj - b]];
                worst = worst.max((mirror - self.values[[a, b]].conj()).norm());
            }
        }
        worst
    }
}

/// A one-dimensional cut through a map.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub axis: UniformAxis,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct CoherenceMetrics {
    /// Coherence time (FWHM of |g¹(τ, 0)|), s.
    pub tau_c: f64,
    /// Coherence radius (FWHM of |g¹(0, ξ)|), m.
    pub xi_c: f64,
    /// First secondary maximum of |g¹(τ, 0)| relative to the central peak.
    pub first_ring_height: f64,
    pub tau_cut: Profile,
    pub xi_cut: Profile,
}

/// [`correlation_map_padded`] with [`DEFAULT_PADDING`].
pub fn correlation_map(s: &SpectralGrid) -> Result<CoherenceMap> {
    correlation_map_padded(s, DEFAULT_PADDING)
}

/// Discrete transform of S with kernel exp(i k ξ − i Ω τ), Ω = ω − ω_c.
///
/// The spectrum is zero-padded to `padding` times its size along both axes,
/// which refines the τ and ξ sampling by the same factor; the map extent is
/// 2π/dω by 2π/dk either way.
pub fn correlation_map_padded(s: &SpectralGrid, padding: usize) -> Result<CoherenceMap> {
    if padding == 0 || !padding.is_power_of_two() {
        return Err(Error::invalid("padding", format!("{padding} must be a power of two")));
    }
    s.check_edge_decay()?;
    let spec = &s.spec;
    let (nw, nk) = (spec.n_omega, spec.n_k);
    let (mw, mk) = (nw * padding, nk * padding);

    let mut planner = FftPlanner::<f64>::new();
    let inverse_k = planner.plan_fft_inverse(mk);
    let forward_w = planner.plan_fft_forward(mw);

    // k → ξ for every ω row
    let mut stage = Array2::<Complex64>::zeros((nw, mk));
    stage
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(j, mut row)| {
            let mut buf = vec![Complex64::default(); mk];
            for l in 0..nk {
                buf[wrap(l as isize - (nk / 2) as isize, mk)] = Complex64::new(s.values[[j, l]], 0.0);
            }
            inverse_k.process(&mut buf);
            for (q, out) in row.iter_mut().enumerate() {
                *out = buf[(q + mk - mk / 2) % mk];
            }
        });

    // ω → τ for every ξ column
    let mut values = Array2::<Complex64>::zeros((mw, mk));
    values
        .axis_iter_mut(Axis(1))
        .into_par_iter()
        .enumerate()
        .for_each(|(q, mut col)| {
            let mut buf = vec![Complex64::default(); mw];
            for j in 0..nw {
                buf[wrap(j as isize - (nw / 2) as isize, mw)] = stage[[j, q]];
            }
            forward_w.process(&mut buf);
            for (m, out) in col.iter_mut().enumerate() {
                *out = buf[(m + mw - mw / 2) % mw];
            }
        });
    drop(stage);

    let origin = values[[mw / 2, mk / 2]];
    if origin.re <= 0.0 {
        return Err(Error::invalid("spectrum", "integrated density is zero"));
    }
    values.par_mapv_inplace(|v| v / origin);

    let (d_omega, d_k) = (spec.omega_step(), spec.k_step());
    Ok(CoherenceMap {
        tau: UniformAxis::centered(2.0 * std::f64::consts::PI / (mw as f64 * d_omega), mw),
        xi: UniformAxis::centered(2.0 * std::f64::consts::PI / (mk as f64 * d_k), mk),
        values,
        carrier_omega: s.carrier_omega(),
        origin_integral: origin.re * d_omega * d_k,
        source: s.provenance.config_hash.clone(),
    })
}

#[inline]
fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// Riemann-sum evaluation of the normalised envelope at one (τ, ξ).
pub fn direct_correlation(s: &SpectralGrid, tau: f64, xi: f64) -> Complex64 {
    let spec = &s.spec;
    let e_k: Vec<Complex64> = (0..spec.n_k)
        .map(|l| Complex64::from_polar(1.0, spec.k(l) * xi))
        .collect();
    let mut total = Complex64::default();
    let mut norm = 0.0;
    for (j, row) in s.values.axis_iter(Axis(0)).enumerate() {
        let inner: Complex64 = row.iter().zip(&e_k).map(|(&v, &e)| e * v).sum();
        norm += row.sum();
        total += inner * Complex64::from_polar(1.0, -spec.detuning(j) * tau);
    }
    total / norm
}

/// Coherence time, radius and ring height of a correlation map.
pub fn metrics(m: &CoherenceMap) -> Result<CoherenceMetrics> {
    metrics_from_magnitude(&m.tau, &m.xi, m.magnitude().view())
}

/// Same as [`metrics`] for any |g¹| grid (rows τ, columns ξ). The central
/// peak is the local maximum reached from the sample nearest (0, 0).
pub fn metrics_from_magnitude(
    tau: &UniformAxis,
    xi: &UniformAxis,
    magnitude: ArrayView2<f64>,
) -> Result<CoherenceMetrics> {
    let (ci, cj) = (tau.nearest(0.0), xi.nearest(0.0));
    let tau_cut = Profile {
        axis: *tau,
        values: magnitude.column(cj).to_vec(),
    };
    let xi_cut = Profile {
        axis: *xi,
        values: magnitude.row(ci).to_vec(),
    };
    let tau_c = fwhm(&tau_cut, "tau")?;
    let xi_c = fwhm(&xi_cut, "xi")?;
    let first_ring_height = first_ring_height(&tau_cut);
    Ok(CoherenceMetrics {
        tau_c,
        xi_c,
        first_ring_height,
        tau_cut,
        xi_cut,
    })
}

fn central_peak(p: &Profile) -> usize {
    let v = &p.values;
    let mut i = p.axis.nearest(0.0);
    loop {
        if i + 1 < v.len() && v[i + 1] > v[i] {
            i += 1;
        } else if i > 0 && v[i - 1] > v[i] {
            i -= 1;
        } else {
            return i;
        }
    }
}

/// Full width at half maximum of the central peak, with linear
/// interpolation at both half-maximum crossings.
pub fn fwhm(p: &Profile, axis_name: &'static str) -> Result<f64> {
    let v = &p.values;
    if v.len() < 3 {
        return Err(Error::Profile {
            axis: axis_name,
            reason: format!("{} samples are too few", v.len()),
        });
    }
    let peak = central_peak(p);
    let half = 0.5 * v[peak];
    if !(half > 0.0) {
        return Err(Error::Profile {
            axis: axis_name,
            reason: "central peak is zero".into(),
        });
    }
    let unbounded = || Error::Profile {
        axis: axis_name,
        reason: "half maximum is not reached inside the profile".into(),
    };
    let mut r = peak;
    while v[r] >= half {
        r += 1;
        if r == v.len() {
            return Err(unbounded());
        }
    }
    let right = (r - 1) as f64 + (v[r - 1] - half) / (v[r - 1] - v[r]);
    let mut l = peak;
    while v[l] >= half {
        if l == 0 {
            return Err(unbounded());
        }
        l -= 1;
    }
    let left = (l + 1) as f64 - (v[l + 1] - half) / (v[l + 1] - v[l]);
    let samples = right - left;
    if samples < MIN_SAMPLES_PER_FWHM as f64 {
        return Err(Error::Undersampled {
            axis: axis_name,
            samples,
            required: MIN_SAMPLES_PER_FWHM,
            refine: (MIN_SAMPLES_PER_FWHM as f64 / samples).ceil() as usize,
        });
    }
    Ok(samples * p.axis.step)
}

/// Height of the first local maximum past the central peak on the positive
/// side, relative to the peak; zero when absent or below
/// [`RING_NOISE_FLOOR`].
pub fn first_ring_height(p: &Profile) -> f64 {
    let v = &p.values;
    let peak = central_peak(p);
    let mut i = peak;
    while i + 1 < v.len() && v[i + 1] <= v[i] {
        i += 1;
    }
    while i + 1 < v.len() && v[i + 1] > v[i] {
        i += 1;
    }
    if i + 1 >= v.len() || i == peak {
        return 0.0;
    }
    let height = v[i] / v[peak];
    if height < RING_NOISE_FLOOR {
        0.0
    } else {
        height
    }
}

/// Gaussian smoothing of |g¹| with the given FWHM resolutions (s, m); the
/// phase of every sample is kept. Kernels are truncated at ±4σ and
/// renormalised at the map boundary.
pub fn instrument_blur(m: &CoherenceMap, delta_tau: f64, delta_xi: f64) -> Result<CoherenceMap> {
    for (field, v) in [("delta_tau", delta_tau), ("delta_xi", delta_xi)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::invalid(field, format!("{v} must be non-negative")));
        }
    }
    let k_tau = gaussian_kernel(delta_tau / m.tau.step, m.tau.len, "tau")?;
    let k_xi = gaussian_kernel(delta_xi / m.xi.step, m.xi.len, "xi")?;
    if k_tau.len() == 1 && k_xi.len() == 1 {
        return Ok(m.clone());
    }
    let magnitude = m.magnitude();
    let mut along_tau = magnitude.clone();
    along_tau
        .axis_iter_mut(Axis(1))
        .into_par_iter()
        .zip(magnitude.axis_iter(Axis(1)).into_par_iter())
        .for_each(|(mut out, src)| convolve(&src.to_vec(), &k_tau, out.iter_mut()));
    let mut blurred = along_tau.clone();
    blurred
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(along_tau.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut out, src)| convolve(&src.to_vec(), &k_xi, out.iter_mut()));

    let mut values = m.values.clone();
    ndarray::Zip::from(&mut values)
        .and(&blurred)
        .par_for_each(|v, &b| {
            let n = v.norm();
            *v = if n > 0.0 { *v * (b / n) } else { Complex64::new(b, 0.0) };
        });
    Ok(CoherenceMap {
        values,
        ..m.clone_without_values()
    })
}

impl CoherenceMap {
    fn clone_without_values(&self) -> CoherenceMap {
        CoherenceMap {
            tau: self.tau,
            xi: self.xi,
            values: Array2::zeros((0, 0)),
            carrier_omega: self.carrier_omega,
            origin_integral: self.origin_integral,
            source: self.source.clone(),
        }
    }
}

/// Sampled Gaussian of FWHM `width` samples, normalised to unit sum.
fn gaussian_kernel(width: f64, len: usize, axis: &'static str) -> Result<Vec<f64>> {
    if width == 0.0 {
        return Ok(vec![1.0]);
    }
    let sigma = width / (2.0 * (2.0 * LN_2).sqrt());
    let half = (4.0 * sigma).ceil().max(1.0) as usize;
    let kernel = 2 * half + 1;
    if kernel > len {
        return Err(Error::KernelTooWide { axis, kernel, len });
    }
    let mut w: Vec<f64> = (0..kernel)
        .map(|i| {
            let x = i as f64 - half as f64;
            (-0.5 * x * x / (sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

fn convolve<'a>(src: &[f64], kernel: &[f64], out: impl Iterator<Item = &'a mut f64>) {
    let half = kernel.len() / 2;
    let n = src.len();
    for (i, o) in out.enumerate() {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let mut acc = 0.0;
        let mut weight = 0.0;
        for j in lo..=hi {
            let w = kernel[j + half - i];
            acc += w * src[j];
            weight += w;
        }
        *o = acc / weight;
    }
}
