//! Longitudinal phase mismatch for type-I (e → oo) down-conversion with a
//! monochromatic plane-wave pump, and the phase-matched geometries it
//! admits.
//!
//! The transverse model is one-dimensional: the signal carries transverse
//! wavevector `+k`, the idler `-k`.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dispersion::{OpticalBranch, SellmeierSet, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// Bisection tolerance of [`collinear_degenerate_angle`], rad.
pub const ANGLE_TOLERANCE: f64 = 1e-9;

/// |Δk·L| (rad) below which the collinear point counts as phase matched.
const COLLINEAR_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct CrystalConfig {
    /// Crystal length, m.
    pub length_m: f64,
    /// Pump angle to the optic axis inside the crystal, rad.
    pub theta_rad: f64,
    /// Pump vacuum wavelength, m.
    pub pump_wavelength_m: f64,
    /// Parametric gain at zero mismatch.
    pub gain: f64,
    pub sellmeier: SellmeierSet,
}

impl CrystalConfig {
    pub fn new(
        length_m: f64,
        theta_rad: f64,
        pump_wavelength_m: f64,
        gain: f64,
        sellmeier: SellmeierSet,
    ) -> Result<Self> {
        let cfg = Self {
            length_m,
            theta_rad,
            pump_wavelength_m,
            gain,
            sellmeier,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_m > 0.0 && self.length_m.is_finite()) {
            return Err(Error::invalid("length", format!("{} m must be positive", self.length_m)));
        }
        if !(self.gain >= 0.0 && self.gain.is_finite()) {
            return Err(Error::invalid("gain", format!("{} must be non-negative", self.gain)));
        }
        if !(self.theta_rad > 0.0 && self.theta_rad < FRAC_PI_2) {
            return Err(Error::invalid(
                "theta",
                format!("{} deg is outside (0, 90) deg", self.theta_rad.to_degrees()),
            ));
        }
        let lp_um = self.pump_wavelength_m * 1e6;
        if !self.sellmeier.contains(lp_um) || !self.sellmeier.contains(2.0 * lp_um) {
            return Err(Error::invalid(
                "pump_wavelength",
                format!(
                    "{lp_um} um pump or its {} um degenerate signal lies outside the {} data range",
                    2.0 * lp_um,
                    self.sellmeier.material
                ),
            ));
        }
        if !self.sellmeier.is_negative_uniaxial() {
            return Err(Error::invalid(
                "sellmeier",
                format!("{} is not negative uniaxial; type-I e -> oo needs n_e < n_o", self.sellmeier.material),
            ));
        }
        Ok(())
    }

    pub fn with_theta(&self, theta_rad: f64) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.theta_rad = theta_rad;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn pump_omega(&self) -> f64 {
        2.0 * PI * SPEED_OF_LIGHT / self.pump_wavelength_m
    }

    /// ω_p / 2.
    pub fn degenerate_omega(&self) -> f64 {
        0.5 * self.pump_omega()
    }

    pub fn degenerate_wavelength_m(&self) -> f64 {
        2.0 * self.pump_wavelength_m
    }

    pub fn mismatch(&self) -> Result<Mismatch<'_>> {
        let k_pump = self
            .sellmeier
            .wavenumber(self.pump_omega(), OpticalBranch::ExtraordinaryAtAngle(self.theta_rad))?;
        Ok(Mismatch {
            sellmeier: &self.sellmeier,
            k_pump,
            center: self.degenerate_omega(),
        })
    }

    /// Δk = k_p − k_sz − k_iz for a signal at `omega_s` with transverse
    /// wavevector `k`, rad/m.
    pub fn delta_k(&self, omega_s: f64, k: f64) -> Result<f64> {
        let m = self.mismatch()?;
        m.row(omega_s - m.center)?.at(k)
    }

    /// Short stable digest of every field, used to tag derived data.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(format!("{self:?}").as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    /// Non-negative transverse wavevector solving Δk(ω, k) = 0 for every
    /// `omega` in `omegas`; `None` where no propagating root exists.
    pub fn phase_matched_locus(&self, omegas: &[f64]) -> Vec<LocusPoint> {
        let Ok(m) = self.mismatch() else {
            return omegas.iter().map(|&omega| LocusPoint { omega, k: None }).collect();
        };
        let tol = COLLINEAR_TOLERANCE / self.length_m;
        omegas
            .par_iter()
            .map(|&omega| LocusPoint {
                omega,
                k: m.row(omega - m.center).ok().and_then(|row| row.root(tol)),
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocusPoint {
    pub omega: f64,
    pub k: Option<f64>,
}

/// Mismatch evaluator for a fixed pump geometry.
#[derive(Clone, Copy, Debug)]
pub struct Mismatch<'a> {
    sellmeier: &'a SellmeierSet,
    pub k_pump: f64,
    /// Degenerate angular frequency ω_p / 2.
    pub center: f64,
}

impl<'a> Mismatch<'a> {
    /// Signal at `center + detuning`, idler at `center − detuning`. Swapping
    /// the sign of `detuning` swaps signal and idler exactly.
    pub fn row(&self, detuning: f64) -> Result<MismatchRow> {
        let k_signal = self
            .sellmeier
            .wavenumber(self.center + detuning, OpticalBranch::Ordinary)?;
        let k_idler = self
            .sellmeier
            .wavenumber(self.center - detuning, OpticalBranch::Ordinary)?;
        Ok(MismatchRow {
            k_pump: self.k_pump,
            k_signal,
            k_idler,
        })
    }
}

/// Wavenumbers of one signal/idler frequency pair.
#[derive(Clone, Copy, Debug)]
pub struct MismatchRow {
    pub k_pump: f64,
    pub k_signal: f64,
    pub k_idler: f64,
}

impl MismatchRow {
    pub fn propagation_limit(&self) -> f64 {
        self.k_signal.min(self.k_idler)
    }

    pub fn at(&self, k: f64) -> Result<f64> {
        let limit = self.propagation_limit();
        if k.abs() >= limit {
            return Err(Error::Evanescent { k, limit });
        }
        let k2 = k * k;
        let kz_s = (self.k_signal * self.k_signal - k2).sqrt();
        let kz_i = (self.k_idler * self.k_idler - k2).sqrt();
        Ok(self.k_pump - (kz_s + kz_i))
    }

    /// Δk grows monotonically with |k|, so there is at most one root on
    /// k ≥ 0.
    fn root(&self, collinear_tol: f64) -> Option<f64> {
        if self.at(0.0).ok()?.abs() <= collinear_tol {
            return Some(0.0);
        }
        self.solve_k(0.0)
    }

    /// k ≥ 0 with Δk(k) = `target`, by bisection; Δk grows with |k|.
    pub fn solve_k(&self, target: f64) -> Option<f64> {
        let f = |k: f64| self.at(k).map(|v| v - target).ok();
        let f0 = f(0.0)?;
        if f0 == 0.0 {
            return Some(0.0);
        }
        if f0 > 0.0 {
            return None;
        }
        let mut hi = self.propagation_limit() * (1.0 - 1e-12);
        if f(hi)? < 0.0 {
            return None;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * hi {
                break;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

/// Pump angle at which collinear frequency-degenerate emission is exactly
/// phase matched, rad.
pub fn collinear_degenerate_angle(sellmeier: &SellmeierSet, pump_wavelength_m: f64) -> Result<f64> {
    let omega_p = 2.0 * PI * SPEED_OF_LIGHT / pump_wavelength_m;
    let k_deg = sellmeier.wavenumber(0.5 * omega_p, OpticalBranch::Ordinary)?;
    let f = |theta: f64| -> Result<f64> {
        Ok(sellmeier.wavenumber(omega_p, OpticalBranch::ExtraordinaryAtAngle(theta))? - 2.0 * k_deg)
    };

    const SCAN: usize = 180;
    let mut bracket = None;
    let mut prev = (1e-6, f(1e-6)?);
    for i in 1..=SCAN {
        let t = FRAC_PI_2 * i as f64 / SCAN as f64;
        let v = f(t)?;
        if prev.1 == 0.0 {
            return Ok(prev.0);
        }
        if prev.1.signum() != v.signum() {
            bracket = Some((prev.0, t, prev.1));
            break;
        }
        prev = (t, v);
    }
    let (mut a, mut b, fa) = bracket.ok_or_else(|| Error::NotFound {
        what: "collinear degenerate phase-matching angle",
        bracket: "(0, 90) deg".into(),
    })?;
    while b - a > ANGLE_TOLERANCE {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}
