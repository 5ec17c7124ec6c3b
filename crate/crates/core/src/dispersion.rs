//! Refractive index, wavenumber and group-velocity dispersion of a uniaxial
//! crystal described by Sellmeier coefficients.
//!
//! Wavelengths are in micrometres, angular frequencies in rad/s,
//! wavenumbers in rad/m and GVD in fs²/mm.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Relative finite-difference step used by [`SellmeierSet::gvd`].
pub const GVD_RELATIVE_STEP: f64 = 1e-3;

/// Agreement required between GVD estimates at step `h` and `h/2`, fs²/mm.
pub const GVD_RICHARDSON_TOLERANCE: f64 = 1e-3;

/// |GVD| below this (fs²/mm) counts as zero when scanning for sign changes.
/// Round-off in the second difference of k is a few 1e-6 fs²/mm.
const GVD_NOISE_FLOOR: f64 = 1e-3;

/// Absolute tolerance of [`SellmeierSet::zero_dispersion_wavelength`], µm.
pub const ZDW_TOLERANCE_UM: f64 = 1e-4;

const BUILTIN_BBO: &str = include_str!("../data/bbo_kato1986.toml");

/// Analytic form of n²(λ) for one polarisation branch, λ in µm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum SellmeierFormula {
    /// n² = a + b / (λ² − c) − d λ²
    SinglePole { a: f64, b: f64, c: f64, d: f64 },
    /// n² = 1 + Σ bᵢ λ² / (λ² − cᵢ)
    Terms { b: Vec<f64>, c: Vec<f64> },
    /// Dispersionless medium.
    Constant { n: f64 },
}

impl SellmeierFormula {
    pub fn index_squared(&self, lambda_um: f64) -> f64 {
        let l2 = lambda_um * lambda_um;
        match self {
            Self::SinglePole { a, b, c, d } => a + b / (l2 - c) - d * l2,
            Self::Terms { b, c } => {
                1.0 + b
                    .iter()
                    .zip(c)
                    .map(|(bi, ci)| bi * l2 / (l2 - ci))
                    .sum::<f64>()
            }
            Self::Constant { n } => n * n,
        }
    }
}

/// Propagation branch in a uniaxial crystal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OpticalBranch {
    Ordinary,
    /// Extraordinary wave travelling at `θ` (radians, inside the crystal)
    /// to the optic axis.
    ExtraordinaryAtAngle(f64),
}

impl fmt::Display for OpticalBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ordinary => write!(f, "ordinary"),
            Self::ExtraordinaryAtAngle(t) => {
                write!(f, "extraordinary at {:.4} deg", t.to_degrees())
            }
        }
    }
}

/// Dispersion data for one uniaxial material.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SellmeierSet {
    pub material: String,
    #[serde(default)]
    pub reference: Option<String>,
    #[serde(default)]
    pub version: Option<u32>,
    /// Valid wavelength interval, µm.
    pub valid_range_um: (f64, f64),
    pub ordinary: SellmeierFormula,
    /// Principal extraordinary index (propagation ⟂ optic axis).
    pub extraordinary: SellmeierFormula,
}

impl SellmeierSet {
    /// The shipped BBO set.
    pub fn bbo() -> Self {
        Self::from_toml_str(BUILTIN_BBO).expect("built-in BBO data is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let set: SellmeierSet = toml::from_str(text)
            .map_err(|e| Error::format("crystal data", e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let set: SellmeierSet = toml::from_str(&text)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("sellmeier set serialises")
    }

    /// Checks the valid interval and that both branches give real indices
    /// above one across it.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.valid_range_um;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::invalid(
                "valid_range_um",
                format!("[{lo}, {hi}] is not a positive interval"),
            ));
        }
        for i in 0..=200 {
            let l = lo + (hi - lo) * i as f64 / 200.0;
            for (name, f) in [("ordinary", &self.ordinary), ("extraordinary", &self.extraordinary)] {
                let n2 = f.index_squared(l);
                if !(n2.is_finite() && n2 > 1.0) {
                    return Err(Error::invalid(
                        "sellmeier",
                        format!("{name} n^2 = {n2} at {l} um is not a real index above 1"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// True when n_e < n_o throughout the valid interval.
    pub fn is_negative_uniaxial(&self) -> bool {
        let (lo, hi) = self.valid_range_um;
        (0..=200).all(|i| {
            let l = lo + (hi - lo) * i as f64 / 200.0;
            self.extraordinary.index_squared(l) < self.ordinary.index_squared(l)
        })
    }

    pub fn contains(&self, lambda_um: f64) -> bool {
        let (lo, hi) = self.valid_range_um;
        lambda_um >= lo && lambda_um <= hi
    }

    fn check_range(&self, lambda_um: f64, branch: OpticalBranch) -> Result<()> {
        if self.contains(lambda_um) {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                branch: branch.to_string(),
                wavelength_um: lambda_um,
                min_um: self.valid_range_um.0,
                max_um: self.valid_range_um.1,
            })
        }
    }

    /// Refractive index at `lambda_um`. For an extraordinary wave at angle θ
    /// to the optic axis, 1/n² = cos²θ/n_o² + sin²θ/n_e².
    pub fn index(&self, lambda_um: f64, branch: OpticalBranch) -> Result<f64> {
        self.check_range(lambda_um, branch)?;
        let no2 = self.ordinary.index_squared(lambda_um);
        match branch {
            OpticalBranch::Ordinary => Ok(no2.sqrt()),
            OpticalBranch::ExtraordinaryAtAngle(theta) => {
                if !(0.0..=FRAC_PI_2).contains(&theta) {
                    return Err(Error::invalid(
                        "theta",
                        format!("{theta} rad is outside [0, pi/2]"),
                    ));
                }
                let ne2 = self.extraordinary.index_squared(lambda_um);
                let (s, c) = theta.sin_cos();
                Ok((c * c / no2 + s * s / ne2).sqrt().recip())
            }
        }
    }

    /// k = n(2πc/ω) · ω / c, rad/m.
    pub fn wavenumber(&self, omega: f64, branch: OpticalBranch) -> Result<f64> {
        let n = self.index(omega_to_wavelength_um(omega), branch)?;
        Ok(n * omega / SPEED_OF_LIGHT)
    }

    /// d²k/dω² in fs²/mm by a central difference with step
    /// `GVD_RELATIVE_STEP · ω`.
    pub fn gvd(&self, lambda_um: f64, branch: OpticalBranch) -> Result<f64> {
        self.gvd_with_step(lambda_um, branch, GVD_RELATIVE_STEP)
    }

    pub fn gvd_with_step(
        &self,
        lambda_um: f64,
        branch: OpticalBranch,
        relative_step: f64,
    ) -> Result<f64> {
        let omega = wavelength_um_to_omega(lambda_um);
        let h = relative_step * omega;
        let k_minus = self.wavenumber(omega - h, branch)?;
        let k_zero = self.wavenumber(omega, branch)?;
        let k_plus = self.wavenumber(omega + h, branch)?;
        let d2 = (k_plus - 2.0 * k_zero + k_minus) / (h * h); // s²/m
        Ok(d2 * 1e27)
    }

    /// Wavelength where the GVD of `branch` changes sign, by bisection to
    /// `ZDW_TOLERANCE_UM`. The first crossing from the short-wavelength end
    /// is returned.
    pub fn zero_dispersion_wavelength(&self, branch: OpticalBranch) -> Result<f64> {
        let (lo, hi) = self.valid_range_um;
        // keep the finite-difference stencil inside the valid interval
        let margin = 1.0 + 2.0 * GVD_RELATIVE_STEP;
        let (lo, hi) = (lo * margin, hi / margin);
        let not_found = || Error::NotFound {
            what: "zero-dispersion wavelength",
            bracket: format!("[{lo:.4}, {hi:.4}] um ({branch})"),
        };
        let sign = |l: f64| -> Result<i8> {
            let g = self.gvd(l, branch)?;
            Ok(if g.abs() < GVD_NOISE_FLOOR {
                0
            } else if g > 0.0 {
                1
            } else {
                -1
            })
        };

        const SCAN: usize = 400;
        let mut prev: Option<(f64, i8)> = None;
        let mut bracket = None;
        for i in 0..=SCAN {
            let l = lo + (hi - lo) * i as f64 / SCAN as f64;
            let s = sign(l)?;
            if s == 0 {
                continue;
            }
            if let Some((pl, ps)) = prev {
                if ps != s {
                    bracket = Some((pl, l, ps));
                    break;
                }
            }
            prev = Some((l, s));
        }
        let (mut a, mut b, sa) = bracket.ok_or_else(not_found)?;
        while b - a > ZDW_TOLERANCE_UM * 1e-3 {
            let m = 0.5 * (a + b);
            match sign(m)? {
                0 => return Ok(m),
                s if s == sa => a = m,
                _ => b = m,
            }
        }
        Ok(0.5 * (a + b))
    }
}

#[inline]
pub fn omega_to_wavelength_um(omega: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / omega * 1e6
}

#[inline]
pub fn wavelength_um_to_omega(lambda_um: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / (lambda_um * 1e-6)
}
