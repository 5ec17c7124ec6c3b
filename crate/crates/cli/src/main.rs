//! `pdc-coherence`: runs the PDC coherence pipeline from a config file and
//! writes plot-ready data files.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 runtime
//! failure.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdc_coherence::coherence::correlation_map_padded;
use pdc_coherence::dispersion::OpticalBranch;
use pdc_coherence::interferometer::{FringeTrace, StageSweep};
use pdc_coherence::io::{read_manifest, read_trace, write_profile, write_record, write_trace_with_header, GridFile};
use pdc_coherence::{
    assemble_map, build_spectrum, collinear_degenerate_angle, extract_visibility, instrument_blur, metrics,
    synthesize_trace, to_wavelength_angle, CoherenceMap, CoherenceMetrics, CrystalConfig, Error,
    InterferometerConfig, SPEED_OF_LIGHT,
};

use config::{parse_quantity, ConfigError, Dimension, RunConfig};

const CONFIG_ENV: &str = "PDC_COHERENCE_CONFIG";

/// Reconstructed ξ columns per trace spacing when the config sets none.
const XI_REFINE: usize = 4;

#[derive(Parser)]
#[command(name = "pdc-coherence", version, about = "Spatiotemporal coherence of high-gain parametric down-conversion")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ThetaArg {
    /// Pump angle(s) to the optic axis, degrees unless a unit is given;
    /// defaults to every angle in the config.
    #[arg(long, value_delimiter = ',')]
    theta: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Refractive indices, GVD and zero-dispersion wavelengths.
    Dispersion {
        /// Shortest wavelength, e.g. 0.5um.
        #[arg(long)]
        from: Option<String>,
        /// Longest wavelength, e.g. 2.5um.
        #[arg(long)]
        to: Option<String>,
        #[arg(long, default_value_t = 201)]
        points: usize,
    },
    /// Collinear phase-matching angle and the phase-matched locus k(ω).
    Phasematch(ThetaArg),
    /// S(ω, k) and S(λ, θ_ext) grids.
    Spectrum(ThetaArg),
    /// |g¹(τ, ξ)| maps, cuts and metrics.
    Coherence {
        #[command(flatten)]
        theta: ThetaArg,
        /// Instrument resolution "τ,ξ", e.g. 1fs,6um; adds blurred outputs.
        #[arg(long)]
        blur: Option<String>,
    },
    /// Synthetic fringe traces over a BS₂ scan, with a manifest.
    Interferogram {
        #[command(flatten)]
        theta: ThetaArg,
        /// Traces on each side of BS₂ = 0; overrides the config.
        #[arg(long)]
        bs2_steps: Option<usize>,
    },
    /// Reconstructs |g¹| from the traces listed in a manifest.
    Analyze {
        /// Manifest listing trace files, relative to its own directory.
        manifest: PathBuf,
    },
}

/// Failure with its exit code.
enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Invalid { .. }
            | Error::OutOfRange { .. }
            | Error::Format { .. }
            | Error::Metadata(_)
            | Error::NonUniformSampling { .. } => Failure::Validation(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match run(cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Validation(m) | Failure::Runtime(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli, argv: &[String]) -> Outcome {
    let Common { config, out } = cli.common;
    if let Command::Analyze { manifest } = &cli.command {
        let cfg = config.as_deref().map(RunConfig::load).transpose()?;
        return analyze(manifest, cfg.as_ref(), out, argv);
    }
    let path = config.ok_or_else(|| {
        Failure::Validation(format!("no configuration: pass --config or set {CONFIG_ENV}"))
    })?;
    let cfg = RunConfig::load(&path)?;
    let ctx = Context::new(&cfg, out, argv)?;
    match cli.command {
        Command::Dispersion { from, to, points } => dispersion(&ctx, from, to, points),
        Command::Phasematch(t) => phasematch(&ctx, &t),
        Command::Spectrum(t) => spectrum(&ctx, &t),
        Command::Coherence { theta, blur } => coherence(&ctx, &theta, blur.as_deref()),
        Command::Interferogram { theta, bs2_steps } => interferogram(&ctx, &theta, bs2_steps),
        Command::Analyze { .. } => unreachable!("handled above"),
    }
}

/// Output directory plus the provenance written into every file.
struct Context<'a> {
    cfg: &'a RunConfig,
    dir: PathBuf,
    provenance: Vec<(String, String)>,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a RunConfig, out: Option<PathBuf>, argv: &[String]) -> Outcome<Self> {
        let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
        Ok(Self {
            cfg,
            dir: create_dir(dir)?,
            provenance: provenance(argv, Some(cfg)),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn crystals(&self, arg: &ThetaArg) -> Outcome<Vec<CrystalConfig>> {
        if arg.theta.is_empty() {
            return Ok(self.cfg.crystals.clone());
        }
        let base = &self.cfg.crystals[0];
        arg.theta
            .iter()
            .map(|t| {
                let theta = match t.trim().parse::<f64>() {
                    Ok(deg) => deg.to_radians(),
                    Err(_) => parse_quantity(t, Dimension::Angle)
                        .map_err(|e| Failure::Validation(format!("--theta: {e}")))?,
                };
                Ok(base.with_theta(theta)?)
            })
            .collect()
    }

    /// Provenance plus per-orientation keys.
    fn header_for(&self, c: &CrystalConfig) -> Vec<(String, String)> {
        let mut h = self.provenance.clone();
        h.push(("theta_deg".into(), format!("{}", c.theta_rad.to_degrees())));
        h.push(("crystal_hash".into(), c.hash()));
        h
    }

    fn write_grid(&self, name: &str, grid: GridFile, header: &[(String, String)]) -> Outcome {
        let grid = header.iter().fold(grid, |g, (k, v)| g.with_header(k.clone(), v));
        let path = self.path(&format!("{name}.{}", self.cfg.format.extension()));
        Ok(grid.write(&path, self.cfg.format)?)
    }
}

fn create_dir(dir: PathBuf) -> Outcome<PathBuf> {
    fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

/// Enough to re-run the command: arguments, program version and the
/// config file digest. No timestamps, so reruns are byte-identical.
fn provenance(argv: &[String], cfg: Option<&RunConfig>) -> Vec<(String, String)> {
    let mut h = vec![
        ("generator".to_string(), format!("pdc-coherence {}", env!("CARGO_PKG_VERSION"))),
        ("command".to_string(), format!("pdc-coherence {}", argv.join(" "))),
    ];
    if let Some(cfg) = cfg {
        h.push(("config".into(), cfg.path.display().to_string()));
        h.push(("config_sha256".into(), cfg.sha256.clone()));
    }
    h
}

fn theta_tag(c: &CrystalConfig) -> String {
    format!("theta_{:.3}", c.theta_rad.to_degrees())
}

fn dispersion(ctx: &Context, from: Option<String>, to: Option<String>, points: usize) -> Outcome {
    let set = &ctx.cfg.crystals[0].sellmeier;
    let (lo, hi) = set.valid_range_um;
    // keep the GVD difference stencil inside the data range
    let bound = |arg: Option<String>, name: &str, default: f64| -> Outcome<f64> {
        arg.map_or(Ok(default), |t| {
            parse_quantity(&t, Dimension::Length)
                .map(|m| m * 1e6)
                .map_err(|e| Failure::Validation(format!("--{name}: {e}")))
        })
    };
    let from_um = bound(from, "from", lo * 1.01)?;
    let to_um = bound(to, "to", hi * 0.99)?;
    if !(from_um < to_um) || points < 2 {
        return Err(Failure::Validation("need --from < --to and at least 2 points".into()));
    }
    let principal_e = OpticalBranch::ExtraordinaryAtAngle(std::f64::consts::FRAC_PI_2);
    let mut out: String = ctx.provenance.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect();
    out.push_str(&format!("# material: {}\n", set.material));
    out.push_str("wavelength_m,n_o,n_e,gvd_o_fs2_per_mm,gvd_e_fs2_per_mm\n");
    for i in 0..points {
        let um = from_um + (to_um - from_um) * i as f64 / (points - 1) as f64;
        out.push_str(&format!(
            "{:e},{:e},{:e},{:e},{:e}\n",
            um * 1e-6,
            set.index(um, OpticalBranch::Ordinary)?,
            set.index(um, principal_e)?,
            set.gvd(um, OpticalBranch::Ordinary)?,
            set.gvd(um, principal_e)?
        ));
    }
    let path = ctx.path("dispersion.csv");
    fs::write(&path, out).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;

    let mut record = ctx.provenance.clone();
    record.push(("material".into(), set.material.clone()));
    for (name, branch) in [("ordinary", OpticalBranch::Ordinary), ("extraordinary", principal_e)] {
        let value = match set.zero_dispersion_wavelength(branch) {
            Ok(um) => format!("{:e}", um * 1e-6),
            Err(Error::NotFound { .. }) => "none".into(),
            Err(e) => return Err(e.into()),
        };
        record.push((format!("zero_dispersion_wavelength_{name}_m"), value));
    }
    Ok(write_record(&ctx.path("dispersion_record.txt"), &record)?)
}

fn phasematch(ctx: &Context, arg: &ThetaArg) -> Outcome {
    let base = &ctx.cfg.crystals[0];
    let theta_pm = collinear_degenerate_angle(&base.sellmeier, base.pump_wavelength_m)?;
    let mut record = ctx.provenance.clone();
    record.push(("pump_wavelength_m".into(), format!("{:e}", base.pump_wavelength_m)));
    record.push(("degenerate_wavelength_m".into(), format!("{:e}", base.degenerate_wavelength_m())));
    record.push(("collinear_degenerate_theta_deg".into(), format!("{}", theta_pm.to_degrees())));
    write_record(&ctx.path("phasematch.txt"), &record)?;

    for c in ctx.crystals(arg)? {
        let spec = ctx.cfg.grid.spec(&c)?;
        let omegas = spec.omega_axis().values();
        let mut out: String = ctx.header_for(&c).iter().map(|(k, v)| format!("# {k}: {v}\n")).collect();
        out.push_str("omega_rad_per_s,wavelength_m,k_rad_per_m,theta_ext_rad\n");
        for p in c.phase_matched_locus(&omegas) {
            let lambda = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / p.omega;
            match p.k {
                Some(k) => out.push_str(&format!(
                    "{:e},{:e},{:e},{:e}\n",
                    p.omega,
                    lambda,
                    k,
                    k * lambda / (2.0 * std::f64::consts::PI)
                )),
                None => out.push_str(&format!("{:e},{:e},,\n", p.omega, lambda)),
            }
        }
        let path = ctx.path(&format!("locus_{}.csv", theta_tag(&c)));
        fs::write(&path, out).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn spectrum(ctx: &Context, arg: &ThetaArg) -> Outcome {
    for c in ctx.crystals(arg)? {
        let s = build_spectrum(&c, &ctx.cfg.grid.spec(&c)?)?;
        let header = ctx.header_for(&c);
        let tag = theta_tag(&c);
        ctx.write_grid(&format!("spectrum_{tag}"), GridFile::from_spectrum(&s), &header)?;
        ctx.write_grid(
            &format!("spectrum_wavelength_angle_{tag}"),
            GridFile::from_wavelength_angle(&to_wavelength_angle(&s)),
            &header,
        )?;
    }
    Ok(())
}

fn coherence_map(ctx: &Context, c: &CrystalConfig) -> Outcome<CoherenceMap> {
    let s = build_spectrum(c, &ctx.cfg.grid.spec(c)?)?;
    Ok(correlation_map_padded(&s, ctx.cfg.coherence.padding)?)
}

fn metrics_record(m: &CoherenceMetrics, map: &CoherenceMap) -> Vec<(String, String)> {
    vec![
        ("tau_c_s".into(), format!("{:e}", m.tau_c)),
        ("xi_c_m".into(), format!("{:e}", m.xi_c)),
        ("first_ring_height".into(), format!("{:e}", m.first_ring_height)),
        ("coupling".into(), format!("{:e}", map.coupling())),
    ]
}

fn coherence(ctx: &Context, arg: &ThetaArg, blur: Option<&str>) -> Outcome {
    let blur = blur.map(parse_blur).transpose()?;
    let (crop_tau, crop_xi) = (ctx.cfg.coherence.crop_tau, ctx.cfg.coherence.crop_xi);
    let mut summary: String = ctx.provenance.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect();
    summary.push_str("theta_deg,variant,tau_c_s,xi_c_m,first_ring_height\n");
    for c in ctx.crystals(arg)? {
        let full = coherence_map(ctx, &c)?;
        let mut variants = vec![("", full.clone(), Vec::new())];
        if let Some((dt, dx)) = blur {
            let blurred = instrument_blur(&full, dt, dx)?;
            let extra = vec![
                ("blur_tau_s".to_string(), format!("{dt:e}")),
                ("blur_xi_m".to_string(), format!("{dx:e}")),
            ];
            variants.push(("_blurred", blurred, extra));
        }
        for (suffix, map, extra) in variants {
            let m = metrics(&map)?;
            let mut header = ctx.header_for(&c);
            header.extend(extra);
            let tag = format!("{}{suffix}", theta_tag(&c));
            let cropped = map.crop(crop_tau, crop_xi);
            ctx.write_grid(&format!("map_{tag}"), GridFile::magnitude_of_map(&cropped), &header)?;
            write_profile(&ctx.path(&format!("tau_cut_{tag}.csv")), "tau_s", &cropped.tau_cut(), &header)?;
            write_profile(&ctx.path(&format!("xi_cut_{tag}.csv")), "xi_m", &cropped.xi_cut(), &header)?;
            let mut record = header.clone();
            record.extend(metrics_record(&m, &map));
            write_record(&ctx.path(&format!("metrics_{tag}.txt")), &record)?;
            summary.push_str(&format!(
                "{},{},{:e},{:e},{:e}\n",
                c.theta_rad.to_degrees(),
                if suffix.is_empty() { "theory" } else { "blurred" },
                m.tau_c,
                m.xi_c,
                m.first_ring_height
            ));
        }
    }
    let path = ctx.path("metrics_summary.csv");
    fs::write(&path, summary).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// `"1fs,6um"` → (1e-15 s, 6e-6 m).
fn parse_blur(text: &str) -> Outcome<(f64, f64)> {
    let bad = |e: String| Failure::Validation(format!("--blur: {e}"));
    let (t, x) = text
        .split_once(',')
        .ok_or_else(|| bad(format!("{text:?} is not of the form <time>,<length>")))?;
    let dt = parse_quantity(t, Dimension::Time).map_err(bad)?;
    let dx = parse_quantity(x, Dimension::Length).map_err(bad)?;
    if dt < 0.0 || dx < 0.0 {
        return Err(bad("resolutions must be non-negative".into()));
    }
    Ok((dt, dx))
}

fn interferogram(ctx: &Context, arg: &ThetaArg, bs2_steps: Option<usize>) -> Outcome {
    let sweep_cfg = &ctx.cfg.sweep;
    let icfg = &ctx.cfg.interferometer;
    let steps = bs2_steps.unwrap_or(sweep_cfg.bs2_steps) as i64;
    for c in ctx.crystals(arg)? {
        let map = coherence_map(ctx, &c)?;
        let tag = theta_tag(&c);
        let dir = create_dir(ctx.path(&format!("traces_{tag}")))?;
        let base = StageSweep::centered(icfg, map.carrier_omega, sweep_cfg.tau_half_span, sweep_cfg.samples_per_fringe);
        let mut header = ctx.header_for(&c);
        header.push(("interferometer_hash".into(), icfg.hash()));
        let mut manifest: String = header.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect();
        for s in -steps..=steps {
            let bs2 = s as f64 * sweep_cfg.bs2_step;
            let t = synthesize_trace(&map, bs2, &base.compensated(bs2, icfg), icfg, &tag)?;
            let name = format!("trace_{s:+04}.csv");
            write_trace_with_header(&dir.join(&name), &t, &header)?;
            manifest.push_str(&name);
            manifest.push('\n');
        }
        let path = dir.join("manifest.txt");
        fs::write(&path, manifest).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn analyze(manifest: &Path, cfg: Option<&RunConfig>, out: Option<PathBuf>, argv: &[String]) -> Outcome {
    let icfg = cfg.map_or_else(InterferometerConfig::default, |c| c.interferometer);
    let (window, n_xi) = cfg.map_or((pdc_coherence::interferometer::DEFAULT_WINDOW_FRINGES, None), |c| {
        (c.sweep.window_fringes, c.sweep.n_xi)
    });
    let dir = create_dir(
        out.or_else(|| cfg.map(|c| c.output_dir.clone()))
            .unwrap_or_else(|| PathBuf::from(".")),
    )?;
    let format = cfg.map_or(pdc_coherence::io::GridFormat::Csv, |c| c.format);
    let mut header = provenance(argv, cfg);
    header.push(("manifest".into(), manifest.display().to_string()));
    header.push(("interferometer_hash".into(), icfg.hash()));

    let traces = read_manifest(manifest)?
        .iter()
        .map(|p| read_trace(p, &icfg))
        .collect::<Result<Vec<FringeTrace>, _>>()?;
    if let [single] = &traces[..] {
        let e = extract_visibility(single, window, &icfg)?;
        let profile = pdc_coherence::Profile {
            axis: e.tau,
            values: e.visibility.iter().map(|v| v / icfg.balance()).collect(),
        };
        header.push(("xi_m".into(), format!("{:e}", e.xi)));
        return Ok(write_profile(&dir.join("envelope_1d.csv"), "tau_s", &profile, &header)?);
    }
    // linear ξ interpolation leaves the FWHM unchanged and gives the width
    // finder enough columns
    let n_xi = n_xi.unwrap_or(XI_REFINE * (traces.len() - 1) + 1);
    let r = assemble_map(&traces, &icfg, window, Some(n_xi))?;
    let grid = header.iter().fold(GridFile::from_reconstructed(&r), |g, (k, v)| g.with_header(k.clone(), v));
    grid.write(&dir.join(format!("reconstructed_map.{}", format.extension())), format)?;
    write_profile(&dir.join("reconstructed_tau_cut.csv"), "tau_s", &r.tau_cut(), &header)?;
    let m = r.metrics()?;
    let mut record = header;
    record.push(("tau_c_s".into(), format!("{:e}", m.tau_c)));
    record.push(("xi_c_m".into(), format!("{:e}", m.xi_c)));
    record.push(("first_ring_height".into(), format!("{:e}", m.first_ring_height)));
    Ok(write_record(&dir.join("reconstructed_metrics.txt"), &record)?)
}
