//! Run configuration: a sectioned TOML file whose dimensioned values are
//! strings with explicit unit suffixes, e.g. `length = "10 mm"`.

use std::path::{Path, PathBuf};

use pdc_coherence::io::GridFormat;
use pdc_coherence::spectrum::GridSpec;
use pdc_coherence::{CrystalConfig, InterferometerConfig, SellmeierSet};
use serde::Deserialize;
use sha2::{Digest, Sha256};

/// Physical dimension of a configured quantity and its accepted suffixes
/// with the factor to SI.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Time,
    Angle,
    AngularFrequency,
    Wavenumber,
    DelayPerTravel,
}

impl Dimension {
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dimension::Length => &[("nm", 1e-9), ("um", 1e-6), ("µm", 1e-6), ("mm", 1e-3), ("m", 1.0)],
            Dimension::Time => &[("fs", 1e-15), ("ps", 1e-12), ("ns", 1e-9), ("s", 1.0)],
            Dimension::Angle => &[("deg", std::f64::consts::PI / 180.0), ("mrad", 1e-3), ("rad", 1.0)],
            Dimension::AngularFrequency => &[("rad/fs", 1e15), ("rad/ps", 1e12), ("rad/s", 1.0)],
            Dimension::Wavenumber => &[("rad/um", 1e6), ("rad/mm", 1e3), ("rad/m", 1.0)],
            Dimension::DelayPerTravel => &[("fs/um", 1e-9), ("fs/mm", 1e-12), ("s/m", 1.0)],
        }
    }
}

/// Parses `"<number> <unit>"` (the space is optional) into SI.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, String> {
    let text = text.trim();
    let split = text
        .char_indices()
        .map(|(i, _)| i)
        .chain([text.len()])
        .rfind(|&i| text[..i].trim_end().parse::<f64>().is_ok())
        .ok_or_else(|| format!("{text:?} does not start with a number"))?;
    let value: f64 = text[..split].trim_end().parse().expect("prefix parsed above");
    let unit = text[split..].trim();
    let units = dim.units();
    let Some(&(_, factor)) = units.iter().find(|(u, _)| *u == unit) else {
        let accepted: Vec<&str> = units.iter().map(|(u, _)| *u).collect();
        return Err(if unit.is_empty() {
            format!("{text:?} needs a unit ({})", accepted.join(", "))
        } else {
            format!("unknown unit {unit:?} in {text:?} (accepted: {})", accepted.join(", "))
        });
    };
    if !value.is_finite() {
        return Err(format!("{text:?} is not finite"));
    }
    Ok(value * factor)
}

/// A configuration problem, tied to the field it came from.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn field_err(field: &str, reason: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("{field}: {reason}"))
}

fn quantity(field: &str, text: &str, dim: Dimension) -> Result<f64, ConfigError> {
    parse_quantity(text, dim).map_err(|e| field_err(field, e))
}

fn optional(field: &str, text: Option<&String>, dim: Dimension, default: f64) -> Result<f64, ConfigError> {
    text.map_or(Ok(default), |t| quantity(field, t, dim))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    crystal: RawCrystal,
    grid: RawGrid,
    #[serde(default)]
    coherence: RawCoherence,
    #[serde(default)]
    interferometer: RawInterferometer,
    output: RawOutput,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCrystal {
    material: Option<String>,
    sellmeier_file: Option<PathBuf>,
    length: String,
    theta: OneOrMany,
    pump_wavelength: String,
    gain: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n_omega: usize,
    n_k: usize,
    #[serde(default = "auto")]
    omega_half_width: String,
    #[serde(default = "auto")]
    k_half_width: String,
}

fn auto() -> String {
    "auto".into()
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawCoherence {
    padding: Option<usize>,
    crop_tau: Option<String>,
    crop_xi: Option<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawInterferometer {
    split_ratio: Option<f64>,
    magnification: Option<f64>,
    bs2_shift_per_travel: Option<f64>,
    bs2_delay_per_travel: Option<String>,
    stage_delay_per_travel: Option<String>,
    bs2_step: Option<String>,
    bs2_steps: Option<usize>,
    tau_half_span: Option<String>,
    samples_per_fringe: Option<f64>,
    window_fringes: Option<f64>,
    n_xi: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: PathBuf,
    format: String,
}

/// Half-width of one grid axis: automatic or fixed in SI.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HalfWidth {
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub n_omega: usize,
    pub n_k: usize,
    pub omega_half_width: HalfWidth,
    pub k_half_width: HalfWidth,
}

impl GridConfig {
    /// Grid for one crystal orientation; fixed half-widths are centred on
    /// its degenerate frequency.
    pub fn spec(&self, cfg: &CrystalConfig) -> pdc_coherence::Result<GridSpec> {
        let auto = GridSpec::auto(cfg, self.n_omega, self.n_k)?;
        let spec = GridSpec {
            omega_half_width: match self.omega_half_width {
                HalfWidth::Auto => auto.omega_half_width,
                HalfWidth::Fixed(w) => w,
            },
            k_half_width: match self.k_half_width {
                HalfWidth::Auto => auto.k_half_width,
                HalfWidth::Fixed(w) => w,
            },
            ..auto
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceConfig {
    pub padding: usize,
    /// Half-extent of written maps, s.
    pub crop_tau: f64,
    /// Half-extent of written maps, m.
    pub crop_xi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    /// BS₂ travel between traces, m.
    pub bs2_step: f64,
    /// Traces on each side of BS₂ = 0.
    pub bs2_steps: usize,
    /// Delay covered on each side of τ = 0, s.
    pub tau_half_span: f64,
    pub samples_per_fringe: f64,
    pub window_fringes: f64,
    /// ξ columns of the reconstructed map; four per trace spacing when absent.
    pub n_xi: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub path: PathBuf,
    /// SHA-256 of the file bytes.
    pub sha256: String,
    pub crystals: Vec<CrystalConfig>,
    pub grid: GridConfig,
    pub coherence: CoherenceConfig,
    pub interferometer: InterferometerConfig,
    pub sweep: SweepConfig,
    pub output_dir: PathBuf,
    pub format: GridFormat,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let bytes = std::fs::read(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut cfg = Self::parse(&text, base)
            .map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))?;
        cfg.path = path.to_path_buf();
        cfg.sha256 = hex::encode(Sha256::digest(&bytes));
        Ok(cfg)
    }

    /// Parses and validates config text; relative paths resolve against
    /// `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let raw: RawFile = toml::from_str(text).map_err(|e| ConfigError(e.to_string().trim_end().to_string()))?;

        let c = &raw.crystal;
        let sellmeier = match (&c.material, &c.sellmeier_file) {
            (_, Some(file)) => SellmeierSet::from_file(base.join(file))
                .map_err(|e| field_err("crystal.sellmeier_file", e))?,
            (Some(m), None) if m.eq_ignore_ascii_case("bbo") => SellmeierSet::bbo(),
            (Some(m), None) => {
                return Err(field_err(
                    "crystal.material",
                    format!("no built-in data for {m:?}; give crystal.sellmeier_file"),
                ))
            }
            (None, None) => {
                return Err(field_err("crystal", "set material or sellmeier_file"));
            }
        };
        let length = quantity("crystal.length", &c.length, Dimension::Length)?;
        let pump = quantity("crystal.pump_wavelength", &c.pump_wavelength, Dimension::Length)?;
        let thetas = match &c.theta {
            OneOrMany::One(t) => vec![t.clone()],
            OneOrMany::Many(v) => v.clone(),
        };
        if thetas.is_empty() {
            return Err(field_err("crystal.theta", "list is empty"));
        }
        let crystals = thetas
            .iter()
            .map(|t| {
                let theta = quantity("crystal.theta", t, Dimension::Angle)?;
                CrystalConfig::new(length, theta, pump, c.gain, sellmeier.clone())
                    .map_err(|e| field_err("crystal", e))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let half = |field: &str, text: &str, dim| -> Result<HalfWidth, ConfigError> {
            if text.trim() == "auto" {
                Ok(HalfWidth::Auto)
            } else {
                quantity(field, text, dim).map(HalfWidth::Fixed)
            }
        };
        let grid = GridConfig {
            n_omega: raw.grid.n_omega,
            n_k: raw.grid.n_k,
            omega_half_width: half(
                "grid.omega_half_width",
                &raw.grid.omega_half_width,
                Dimension::AngularFrequency,
            )?,
            k_half_width: half("grid.k_half_width", &raw.grid.k_half_width, Dimension::Wavenumber)?,
        };
        for cfg in &crystals {
            grid.spec(cfg).map_err(|e| field_err("grid", e))?;
        }

        let rc = &raw.coherence;
        let coherence = CoherenceConfig {
            padding: rc.padding.unwrap_or(pdc_coherence::coherence::DEFAULT_PADDING),
            crop_tau: optional("coherence.crop_tau", rc.crop_tau.as_ref(), Dimension::Time, 300e-15)?,
            crop_xi: optional("coherence.crop_xi", rc.crop_xi.as_ref(), Dimension::Length, 300e-6)?,
        };
        if !coherence.padding.is_power_of_two() {
            return Err(field_err("coherence.padding", "must be a power of two"));
        }
        if !(coherence.crop_tau > 0.0 && coherence.crop_xi > 0.0) {
            return Err(field_err("coherence", "crop extents must be positive"));
        }

        let ri = &raw.interferometer;
        let d = InterferometerConfig::default();
        let interferometer = InterferometerConfig {
            split_ratio: ri.split_ratio.unwrap_or(d.split_ratio),
            magnification: ri.magnification.unwrap_or(d.magnification),
            bs2_shift_per_travel: ri.bs2_shift_per_travel.unwrap_or(d.bs2_shift_per_travel),
            bs2_delay_per_travel: optional(
                "interferometer.bs2_delay_per_travel",
                ri.bs2_delay_per_travel.as_ref(),
                Dimension::DelayPerTravel,
                d.bs2_delay_per_travel,
            )?,
            stage_delay_per_travel: optional(
                "interferometer.stage_delay_per_travel",
                ri.stage_delay_per_travel.as_ref(),
                Dimension::DelayPerTravel,
                d.stage_delay_per_travel,
            )?,
        };
        interferometer.validate().map_err(|e| field_err("interferometer", e))?;
        let sweep = SweepConfig {
            bs2_step: optional("interferometer.bs2_step", ri.bs2_step.as_ref(), Dimension::Length, 40e-6)?,
            bs2_steps: ri.bs2_steps.unwrap_or(12),
            tau_half_span: optional(
                "interferometer.tau_half_span",
                ri.tau_half_span.as_ref(),
                Dimension::Time,
                120e-15,
            )?,
            samples_per_fringe: ri.samples_per_fringe.unwrap_or(16.0),
            window_fringes: ri
                .window_fringes
                .unwrap_or(pdc_coherence::interferometer::DEFAULT_WINDOW_FRINGES),
            n_xi: ri.n_xi,
        };
        if !(sweep.bs2_step > 0.0) {
            return Err(field_err("interferometer.bs2_step", "must be positive"));
        }
        if !(sweep.tau_half_span > 0.0) {
            return Err(field_err("interferometer.tau_half_span", "must be positive"));
        }
        if !(sweep.samples_per_fringe >= pdc_coherence::interferometer::MIN_SAMPLES_PER_FRINGE) {
            return Err(field_err("interferometer.samples_per_fringe", "must be at least 8"));
        }
        if !(sweep.window_fringes >= 1.0) {
            return Err(field_err("interferometer.window_fringes", "must be at least 1"));
        }

        let format = match raw.output.format.as_str() {
            "csv" => GridFormat::Csv,
            "binary" => GridFormat::Binary,
            other => return Err(field_err("output.format", format!("{other:?} is not csv or binary"))),
        };
        Ok(Self {
            path: PathBuf::new(),
            sha256: String::new(),
            crystals,
            grid,
            coherence,
            interferometer,
            sweep,
            output_dir: raw.output.directory,
            format,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[crystal]
material = "BBO"
length = "10 mm"
theta = ["19.87 deg", "19.94 deg"]
pump_wavelength = "800 nm"
gain = 6.0

[grid]
n_omega = 256
n_k = 128

[output]
directory = "out"
format = "csv"
"#;

    #[test]
    fn quantities_convert_to_si() {
        let cases = [
            ("800 nm", Dimension::Length, 800e-9),
            ("10mm", Dimension::Length, 10e-3),
            ("6 µm", Dimension::Length, 6e-6),
            ("1e-3 m", Dimension::Length, 1e-3),
            ("1 fs", Dimension::Time, 1e-15),
            ("2.5 ps", Dimension::Time, 2.5e-12),
            ("19.87 deg", Dimension::Angle, 19.87f64.to_radians()),
            ("0.35 rad/fs", Dimension::AngularFrequency, 3.5e14),
            ("0.2 rad/um", Dimension::Wavenumber, 2e5),
            ("3.3356 fs/um", Dimension::DelayPerTravel, 3.3356e-9),
        ];
        for (text, dim, si) in cases {
            let v = parse_quantity(text, dim).unwrap();
            assert!((v / si - 1.0).abs() < 1e-12, "{text}: {v}");
        }
    }

    #[test]
    fn bad_quantities_are_explained() {
        assert!(parse_quantity("10", Dimension::Length).unwrap_err().contains("needs a unit"));
        assert!(parse_quantity("10 fs", Dimension::Length).unwrap_err().contains("unknown unit"));
        assert!(parse_quantity("mm", Dimension::Length).unwrap_err().contains("number"));
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::parse(MINIMAL, Path::new("")).unwrap();
        assert_eq!(cfg.crystals.len(), 2);
        assert_eq!(cfg.interferometer, InterferometerConfig::default());
        assert_eq!(cfg.sweep.bs2_step, 40e-6);
        assert_eq!(cfg.grid.omega_half_width, HalfWidth::Auto);
        assert_eq!(cfg.format, GridFormat::Csv);
    }

    #[test]
    fn missing_and_invalid_fields_are_named() {
        let missing = MINIMAL.replace("gain = 6.0\n", "");
        let err = RunConfig::parse(&missing, Path::new("")).unwrap_err().0;
        assert!(err.contains("gain"), "{err}");
        let bad_unit = MINIMAL.replace("\"10 mm\"", "\"10 fs\"");
        let err = RunConfig::parse(&bad_unit, Path::new("")).unwrap_err().0;
        assert!(err.starts_with("crystal.length"), "{err}");
        let unknown = MINIMAL.replace("[output]", "[output]\ncolour = \"red\"");
        let err = RunConfig::parse(&unknown, Path::new("")).unwrap_err().0;
        assert!(err.contains("colour"), "{err}");
        let ratio = format!("{MINIMAL}\n[interferometer]\nsplit_ratio = 1.5\n");
        let err = RunConfig::parse(&ratio, Path::new("")).unwrap_err().0;
        assert!(err.contains("split_ratio"), "{err}");
    }
}
