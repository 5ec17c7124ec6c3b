//! Runs the `pdc-coherence` binary end to end on small grids.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pdc_coherence::io::{GridData, GridFile};

const CONFIG: &str = r#"
[crystal]
material = "BBO"
length = "10 mm"
theta = ["19.87 deg", "19.94 deg"]
pump_wavelength = "800 nm"
gain = 6.0

[grid]
n_omega = 512
n_k = 256

[coherence]
crop_tau = "150 fs"
crop_xi = "150 um"

[interferometer]
bs2_steps = 6
tau_half_span = "100 fs"

[output]
directory = "out"
format = "csv"
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pdc-coherence"));
    c.env_remove("PDC_COHERENCE_CONFIG");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn workspace(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn magnitude(path: &Path) -> GridFile {
    let g = GridFile::read(path).unwrap();
    assert!(matches!(g.data, GridData::Real(_)));
    g
}

fn real(g: &GridFile) -> &ndarray::Array2<f64> {
    match &g.data {
        GridData::Real(v) => v,
        GridData::Complex(_) => unreachable!(),
    }
}

#[test]
fn missing_field_is_named_with_exit_code_one() {
    let dir = workspace(&CONFIG.replace("gain = 6.0\n", ""));
    let o = run(&["--config", "run.toml", "spectrum"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gain"), "{}", stderr(&o));

    let dir = workspace(&CONFIG.replace("\"10 mm\"", "\"10\""));
    let o = run(&["--config", "run.toml", "spectrum"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("crystal.length"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = workspace(CONFIG);
    assert_eq!(run(&["spectrum", "--bogus"], dir.path()).status.code(), Some(1));
    let o = run(&["spectrum"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("PDC_COHERENCE_CONFIG"));
    let o = run(&["--config", "run.toml", "coherence", "--blur", "1fs"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--blur"));
    assert_eq!(run(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn spectrum_outputs_are_deterministic_and_carry_provenance() {
    let dir = workspace(CONFIG);
    let args = ["--config", "run.toml", "spectrum", "--theta", "19.94"];
    assert!(run(&args, dir.path()).status.success());
    let path = dir.path().join("out/spectrum_theta_19.940.csv");
    let first = fs::read(&path).unwrap();
    let wa = fs::read(dir.path().join("out/spectrum_wavelength_angle_theta_19.940.csv")).unwrap();
    assert!(run(&args, dir.path()).status.success());
    assert_eq!(fs::read(&path).unwrap(), first);
    assert_eq!(fs::read(dir.path().join("out/spectrum_wavelength_angle_theta_19.940.csv")).unwrap(), wa);

    let g = GridFile::read(&path).unwrap();
    assert_eq!(g.header_value("command"), Some("pdc-coherence --config run.toml spectrum --theta 19.94"));
    assert_eq!(g.header_value("config_sha256").map(str::len), Some(64));
    assert!(g.header_value("crystal_hash").is_some());
    assert!(!String::from_utf8_lossy(&first).to_lowercase().contains("time"));
}

#[test]
fn config_from_environment_and_binary_output() {
    let dir = workspace(&CONFIG.replace("format = \"csv\"", "format = \"binary\""));
    let o = bin()
        .env("PDC_COHERENCE_CONFIG", "run.toml")
        .args(["spectrum", "--theta", "19.87deg"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let g = GridFile::read(&dir.path().join("out/spectrum_theta_19.870.bin")).unwrap();
    assert_eq!(g.data.dim(), (512, 256));
}

#[test]
fn coherence_writes_maps_cuts_and_metrics() {
    let dir = workspace(CONFIG);
    let o = run(&["--config", "run.toml", "coherence", "--blur", "1fs,6um"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    for theta in ["19.870", "19.940"] {
        for suffix in ["", "_blurred"] {
            let tag = format!("theta_{theta}{suffix}");
            for name in [format!("map_{tag}.csv"), format!("tau_cut_{tag}.csv"), format!("xi_cut_{tag}.csv")] {
                assert!(out.join(&name).exists(), "{name}");
            }
            let record = pdc_coherence::io::read_record(&out.join(format!("metrics_{tag}.txt"))).unwrap();
            let get = |k: &str| record.iter().find(|(key, _)| key == k).unwrap().1.parse::<f64>().unwrap();
            assert!(get("tau_c_s") > 10e-15 && get("tau_c_s") < 40e-15);
            assert!(get("xi_c_m") > 30e-6 && get("xi_c_m") < 90e-6);
        }
    }
    let map = magnitude(&out.join("map_theta_19.940.csv"));
    assert!(real(&map).iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
    let summary = fs::read_to_string(out.join("metrics_summary.csv")).unwrap();
    assert_eq!(summary.lines().filter(|l| !l.starts_with('#')).count(), 5);
}

fn interferogram(dir: &Path) -> PathBuf {
    let o = run(&["--config", "run.toml", "interferogram", "--theta", "19.94"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join("out/traces_theta_19.940")
}

/// Bilinear |g¹| of a map file at (τ, ξ).
fn sample(g: &GridFile, tau: f64, xi: f64) -> f64 {
    let v = real(g);
    let p = (tau - g.row_axis.start) / g.row_axis.step;
    let q = (xi - g.col_axis.start) / g.col_axis.step;
    let (i, j) = (p.floor() as usize, q.floor() as usize);
    let (fp, fq) = (p - i as f64, q - j as f64);
    (v[[i, j]] * (1.0 - fq) + v[[i, j + 1]] * fq) * (1.0 - fp)
        + (v[[i + 1, j]] * (1.0 - fq) + v[[i + 1, j + 1]] * fq) * fp
}

#[test]
fn interferogram_then_analyze_closes_the_loop() {
    let dir = workspace(CONFIG);
    let traces = interferogram(dir.path());
    assert_eq!(fs::read_dir(&traces).unwrap().count(), 14);
    let o = run(&["--config", "run.toml", "coherence", "--theta", "19.94"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = traces.join("manifest.txt");
    let o = run(
        &["--config", "run.toml", "--out", "analysis", "analyze", manifest.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));

    let source = magnitude(&dir.path().join("out/map_theta_19.940.csv"));
    let rec = magnitude(&dir.path().join("analysis/reconstructed_map.csv"));
    let v = real(&rec);
    let (mut sum, mut n) = (0.0, 0);
    for i in 0..rec.row_axis.len {
        for j in 0..rec.col_axis.len {
            let d = v[[i, j]] - sample(&source, rec.row_axis.value(i), rec.col_axis.value(j));
            sum += d * d;
            n += 1;
        }
    }
    let rms = (sum / n as f64).sqrt();
    assert!(rms < 0.03, "rms {rms}");
    assert!(dir.path().join("analysis/reconstructed_metrics.txt").exists());
}

#[test]
fn analyze_single_trace_gives_envelope() {
    let dir = workspace(CONFIG);
    let traces = interferogram(dir.path());
    fs::write(traces.join("single.txt"), "trace_+000.csv\n").unwrap();
    let o = run(&["--config", "run.toml", "analyze", "out/traces_theta_19.940/single.txt"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("out/envelope_1d.csv")).unwrap();
    let peak = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert!((peak - 1.0).abs() < 1e-3, "{peak}");
    assert!(!dir.path().join("out/reconstructed_map.csv").exists());
}

#[test]
fn analyze_rejects_bad_trace_sets() {
    let dir = workspace(CONFIG);
    let traces = interferogram(dir.path());
    let foreign = traces.join("trace_+001.csv");
    let text = fs::read_to_string(&foreign).unwrap();
    let hash_line = text.lines().find(|l| l.starts_with("# config_hash:")).unwrap().to_string();
    fs::write(&foreign, text.replace(&hash_line, "# config_hash: 0000000000000000")).unwrap();
    let o = run(&["--config", "run.toml", "analyze", "out/traces_theta_19.940/manifest.txt"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("0000000000000000"), "{}", stderr(&o));

    fs::write(traces.join("missing.txt"), "trace_+000.csv\nnot_there.csv\ntrace_-001.csv\n").unwrap();
    let o = run(&["analyze", "out/traces_theta_19.940/missing.txt"], dir.path());
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("not_there.csv"), "{}", stderr(&o));
}
