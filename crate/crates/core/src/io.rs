//! Grid and trace files.
//!
//! Grids are written either as long-format CSV or as a little-endian binary
//! file. The CSV starts with `# key: value` header lines, followed by a
//! column header and one line per node:
//!
//! ```text
//! # rows: omega_rad_per_s 1.05e15 1.2e12 1024
//! # cols: k_rad_per_m -4.1e5 8.0e2 512
//! omega_rad_per_s,k_rad_per_m,value
//! ```
//!
//! Complex grids carry `re,im` instead of `value`. The binary layout is
//!
//! | field | type |
//! |---|---|
//! | magic `PDCGRID\0` | 8 bytes |
//! | version (1) | u32 |
//! | kind (0 real, 1 complex) | u32 |
//! | rows, cols | u64, u64 |
//! | row start, row step, col start, col step | 4 × f64 |
//! | row name, col name | string |
//! | header entry count | u32 |
//! | header entries | string key, string value |
//! | data, row-major; complex as (re, im) pairs | f64 |
//!
//! where a string is a u32 byte length followed by UTF-8 bytes.
//!
//! Trace files are CSV with `position_m,intensity` columns under
//! `# key: value` metadata lines.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;

use crate::coherence::{CoherenceMap, Profile};
use crate::error::{Error, Result};
use crate::grid::UniformAxis;
use crate::interferometer::{FringeTrace, InterferometerConfig, ReconstructedMap, TraceMeta, TraceSource};
use crate::spectrum::{SpectralGrid, WavelengthAngleGrid};

const MAGIC: &[u8; 8] = b"PDCGRID\0";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridFormat {
    Csv,
    Binary,
}

impl GridFormat {
    pub fn extension(self) -> &'static str {
        match self {
            GridFormat::Csv => "csv",
            GridFormat::Binary => "bin",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GridData {
    Real(Array2<f64>),
    Complex(Array2<Complex64>),
}

impl GridData {
    pub fn dim(&self) -> (usize, usize) {
        match self {
            GridData::Real(a) => a.dim(),
            GridData::Complex(a) => a.dim(),
        }
    }
}

/// A named 2D grid with metadata, ready for export.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFile {
    pub header: Vec<(String, String)>,
    pub row_name: String,
    pub row_axis: UniformAxis,
    pub col_name: String,
    pub col_axis: UniformAxis,
    pub data: GridData,
}

impl GridFile {
    pub fn new(
        row: (&str, UniformAxis),
        col: (&str, UniformAxis),
        data: GridData,
    ) -> Result<Self> {
        if data.dim() != (row.1.len, col.1.len) {
            return Err(Error::invalid(
                "data",
                format!("shape {:?} does not match the axes", data.dim()),
            ));
        }
        for name in [row.0, col.0] {
            if name.is_empty() || name.contains([',', '\n', ' ']) {
                return Err(Error::invalid("axis name", format!("{name:?} is not a plain token")));
            }
        }
        Ok(Self {
            header: Vec::new(),
            row_name: row.0.into(),
            row_axis: row.1,
            col_name: col.0.into(),
            col_axis: col.1,
            data,
        })
    }

    pub fn with_header(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.header.push((key.into(), value.to_string()));
        self
    }

    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// S(ω, k) with the provenance of the spectrum.
    pub fn from_spectrum(s: &SpectralGrid) -> Self {
        let spec = &s.spec;
        GridFile::new(
            ("omega_rad_per_s", spec.omega_axis()),
            ("k_rad_per_m", spec.k_axis()),
            GridData::Real(s.values.clone()),
        )
        .expect("spectral grid axes match its values")
        .with_header("quantity", "spectral_density")
        .with_header("config_hash", &s.provenance.config_hash)
        .with_header("invalid_nodes", s.provenance.invalid_nodes)
        .with_header("edge_ratio", format!("{:e}", s.provenance.edge_ratio))
    }

    pub fn from_wavelength_angle(g: &WavelengthAngleGrid) -> Self {
        GridFile::new(
            ("wavelength_m", g.lambda),
            ("theta_ext_rad", g.theta_ext),
            GridData::Real(g.values.clone()),
        )
        .expect("wavelength-angle axes match its values")
        .with_header("quantity", "spectral_density")
    }

    /// Complex envelope of g¹; the carrier is recorded in the header.
    pub fn from_map(m: &CoherenceMap) -> Self {
        GridFile::new(
            ("tau_s", m.tau),
            ("xi_m", m.xi),
            GridData::Complex(m.values.clone()),
        )
        .expect("map axes match its values")
        .with_header("quantity", "g1_envelope")
        .with_header("carrier_omega_rad_per_s", format!("{:e}", m.carrier_omega))
        .with_header("source", &m.source)
    }

    /// |g¹| of a map.
    pub fn magnitude_of_map(m: &CoherenceMap) -> Self {
        GridFile::new(("tau_s", m.tau), ("xi_m", m.xi), GridData::Real(m.magnitude()))
            .expect("map axes match its values")
            .with_header("quantity", "g1_magnitude")
            .with_header("source", &m.source)
    }

    pub fn from_reconstructed(r: &ReconstructedMap) -> Self {
        GridFile::new(("tau_s", r.tau), ("xi_m", r.xi), GridData::Real(r.values.clone()))
            .expect("reconstructed axes match its values")
            .with_header("quantity", "g1_magnitude_reconstructed")
            .with_header("interferometer_hash", &r.config_hash)
    }

    pub fn write(&self, path: &Path, format: GridFormat) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = BufWriter::new(file);
        match format {
            GridFormat::Csv => self.write_csv(&mut w),
            GridFormat::Binary => self.write_binary(&mut w),
        }
        .and_then(|_| w.flush())
        .map_err(|e| io_err(path, e))
    }

    /// Reads either format, detected from the leading bytes.
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        let name = path.display().to_string();
        if bytes.starts_with(MAGIC) {
            read_binary(&bytes).map_err(|reason| Error::format(name, reason))
        } else {
            let text = String::from_utf8(bytes).map_err(|e| Error::format(&name, e.to_string()))?;
            read_csv(&text).map_err(|reason| Error::format(name, reason))
        }
    }

    fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        for (k, v) in &self.header {
            writeln!(w, "# {k}: {v}")?;
        }
        let axis = |name: &str, a: &UniformAxis| format!("{name} {:e} {:e} {}", a.start, a.step, a.len);
        writeln!(w, "# rows: {}", axis(&self.row_name, &self.row_axis))?;
        writeln!(w, "# cols: {}", axis(&self.col_name, &self.col_axis))?;
        match &self.data {
            GridData::Real(a) => {
                writeln!(w, "{},{},value", self.row_name, self.col_name)?;
                for ((i, j), v) in a.indexed_iter() {
                    writeln!(w, "{:e},{:e},{:e}", self.row_axis.value(i), self.col_axis.value(j), v)?;
                }
            }
            GridData::Complex(a) => {
                writeln!(w, "{},{},re,im", self.row_name, self.col_name)?;
                for ((i, j), v) in a.indexed_iter() {
                    writeln!(
                        w,
                        "{:e},{:e},{:e},{:e}",
                        self.row_axis.value(i),
                        self.col_axis.value(j),
                        v.re,
                        v.im
                    )?;
                }
            }
        }
        Ok(())
    }

    fn write_binary(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let kind: u32 = match self.data {
            GridData::Real(_) => 0,
            GridData::Complex(_) => 1,
        };
        w.write_all(&kind.to_le_bytes())?;
        w.write_all(&(self.row_axis.len as u64).to_le_bytes())?;
        w.write_all(&(self.col_axis.len as u64).to_le_bytes())?;
        for v in [
            self.row_axis.start,
            self.row_axis.step,
            self.col_axis.start,
            self.col_axis.step,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        write_str(w, &self.row_name)?;
        write_str(w, &self.col_name)?;
        w.write_all(&(self.header.len() as u32).to_le_bytes())?;
        for (k, v) in &self.header {
            write_str(w, k)?;
            write_str(w, v)?;
        }
        match &self.data {
            GridData::Real(a) => {
                for v in a.iter() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            GridData::Complex(a) => {
                for v in a.iter() {
                    w.write_all(&v.re.to_le_bytes())?;
                    w.write_all(&v.im.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

/// Splits `# key: value` lines from the body of a text file.
fn split_header(text: &str) -> (Vec<(String, String)>, &str) {
    let mut header = Vec::new();
    let mut rest = text;
    while let Some(line) = rest.strip_prefix('#') {
        let (line, tail) = line.split_once('\n').unwrap_or((line, ""));
        if let Some((k, v)) = line.split_once(':') {
            header.push((k.trim().to_string(), v.trim().to_string()));
        }
        rest = tail;
    }
    (header, rest)
}

fn parse_axis(spec: &str) -> std::result::Result<(String, UniformAxis), String> {
    let parts: Vec<&str> = spec.split_whitespace().collect();
    let [name, start, step, len] = parts[..] else {
        return Err(format!("malformed axis line {spec:?}"));
    };
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
    Ok((
        name.to_string(),
        UniformAxis::new(
            num(start)?,
            num(step)?,
            len.parse().map_err(|e| format!("{len:?}: {e}"))?,
        ),
    ))
}

fn read_csv(text: &str) -> std::result::Result<GridFile, String> {
    let (mut header, body) = split_header(text);
    let mut take = |key: &str| -> std::result::Result<String, String> {
        let i = header
            .iter()
            .position(|(k, _)| k == key)
            .ok_or_else(|| format!("missing '# {key}:' line"))?;
        Ok(header.remove(i).1)
    };
    let (row_name, row_axis) = parse_axis(&take("rows")?)?;
    let (col_name, col_axis) = parse_axis(&take("cols")?)?;
    let mut reader = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let complex = match reader.headers().map_err(|e| e.to_string())?.len() {
        3 => false,
        4 => true,
        n => return Err(format!("{n} columns; expected 3 or 4")),
    };
    let (rows, cols) = (row_axis.len, col_axis.len);
    let mut re = Vec::with_capacity(rows * cols);
    let mut im = Vec::with_capacity(if complex { rows * cols } else { 0 });
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        let field = |i: usize| -> std::result::Result<f64, String> {
            record[i]
                .parse()
                .map_err(|e| format!("data line {}: {:?}: {e}", line + 1, &record[i]))
        };
        re.push(field(2)?);
        if complex {
            im.push(field(3)?);
        }
    }
    if re.len() != rows * cols {
        return Err(format!("{} data lines, expected {}", re.len(), rows * cols));
    }
    let shape = (rows, cols);
    let data = if complex {
        let values = re.into_iter().zip(im).map(|(r, i)| Complex64::new(r, i)).collect();
        GridData::Complex(Array2::from_shape_vec(shape, values).map_err(|e| e.to_string())?)
    } else {
        GridData::Real(Array2::from_shape_vec(shape, re).map_err(|e| e.to_string())?)
    };
    Ok(GridFile {
        header,
        row_name,
        row_axis,
        col_name,
        col_axis,
        data,
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if self.bytes.len() < n {
            return Err("truncated file".into());
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> std::result::Result<String, String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| e.to_string())
    }
}

fn read_binary(bytes: &[u8]) -> std::result::Result<GridFile, String> {
    let mut c = Cursor { bytes: &bytes[MAGIC.len()..] };
    let version = c.u32()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let kind = c.u32()?;
    let rows = c.u64()? as usize;
    let cols = c.u64()? as usize;
    let row_axis = UniformAxis::new(c.f64()?, c.f64()?, rows);
    let col_axis = UniformAxis::new(c.f64()?, c.f64()?, cols);
    let row_name = c.string()?;
    let col_name = c.string()?;
    let entries = c.u32()?;
    let header = (0..entries)
        .map(|_| Ok((c.string()?, c.string()?)))
        .collect::<std::result::Result<Vec<_>, String>>()?;
    let count = rows.checked_mul(cols).ok_or("grid too large")?;
    let data = match kind {
        0 => {
            let v = (0..count).map(|_| c.f64()).collect::<std::result::Result<Vec<_>, _>>()?;
            GridData::Real(Array2::from_shape_vec((rows, cols), v).map_err(|e| e.to_string())?)
        }
        1 => {
            let v = (0..count)
                .map(|_| Ok(Complex64::new(c.f64()?, c.f64()?)))
                .collect::<std::result::Result<Vec<_>, String>>()?;
            GridData::Complex(Array2::from_shape_vec((rows, cols), v).map_err(|e| e.to_string())?)
        }
        k => return Err(format!("unknown data kind {k}")),
    };
    if !c.bytes.is_empty() {
        return Err(format!("{} trailing bytes", c.bytes.len()));
    }
    Ok(GridFile {
        header,
        row_name,
        row_axis,
        col_name,
        col_axis,
        data,
    })
}

/// Writes a profile as `axis,value` CSV under optional header lines.
pub fn write_profile(path: &Path, axis_name: &str, p: &Profile, header: &[(String, String)]) -> Result<()> {
    let mut out = String::new();
    for (k, v) in header {
        out.push_str(&format!("# {k}: {v}\n"));
    }
    out.push_str(&format!("{axis_name},value\n"));
    for (i, v) in p.values.iter().enumerate() {
        out.push_str(&format!("{:e},{:e}\n", p.axis.value(i), v));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Writes `key: value` lines.
pub fn write_record(path: &Path, record: &[(String, String)]) -> Result<()> {
    let out: String = record.iter().map(|(k, v)| format!("{k}: {v}\n")).collect();
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_record(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split_once(':')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::format(path.display().to_string(), format!("no ':' in {l:?}")))
        })
        .collect()
}

pub fn write_trace(path: &Path, t: &FringeTrace) -> Result<()> {
    write_trace_with_header(path, t, &[])
}

/// [`write_trace`] with extra `# key: value` lines ahead of the metadata.
/// Readers ignore keys they do not know.
pub fn write_trace_with_header(path: &Path, t: &FringeTrace, header: &[(String, String)]) -> Result<()> {
    let m = &t.meta;
    let mut out: String = header.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect();
    out += &format!(
        "# bs2_position_m: {:e}\n# orientation: {}\n# source: {}\n# config_hash: {}\n# tau_offset_s: {:e}\n",
        m.bs2_position_m,
        m.orientation,
        m.source.as_str(),
        m.config_hash,
        m.tau_offset_s
    );
    if let Some(l) = m.carrier_wavelength_m {
        out.push_str(&format!("# carrier_wavelength_m: {l:e}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::format(path.display().to_string(), e.to_string());
    w.write_record(["position_m", "intensity"]).map_err(csv_err)?;
    for (p, v) in t.positions.iter().zip(&t.intensities) {
        w.write_record([format!("{p:e}"), format!("{v:e}")]).map_err(csv_err)?;
    }
    let body = w
        .into_inner()
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    out.push_str(&String::from_utf8(body).expect("CSV output is UTF-8"));
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a trace file. `bs2_position_m` and `config_hash` are required;
/// a missing `tau_offset_s` is derived from `icfg`, a missing `source`
/// means a measurement.
pub fn read_trace(path: &Path, icfg: &InterferometerConfig) -> Result<FringeTrace> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let (header, body) = split_header(&text);
    let get = |key: &str| header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    let number = |key: &str| -> Result<Option<f64>> {
        get(key)
            .map(|v| v.parse::<f64>().map_err(|e| Error::format(&name, format!("{key}: {e}"))))
            .transpose()
    };
    let bs2_position_m =
        number("bs2_position_m")?.ok_or_else(|| Error::format(&name, "missing '# bs2_position_m:' line"))?;
    let config_hash = get("config_hash")
        .ok_or_else(|| Error::format(&name, "missing '# config_hash:' line"))?
        .to_string();
    let source = match get("source") {
        None => TraceSource::Measured,
        Some(s) => TraceSource::parse(s).ok_or_else(|| Error::format(&name, format!("unknown source {s:?}")))?,
    };
    let meta = TraceMeta {
        bs2_position_m,
        orientation: get("orientation").unwrap_or("").to_string(),
        source,
        config_hash,
        carrier_wavelength_m: number("carrier_wavelength_m")?,
        tau_offset_s: number("tau_offset_s")?.unwrap_or(bs2_position_m * icfg.bs2_delay_per_travel),
    };

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let (mut positions, mut intensities) = (Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(&name, e.to_string()))?;
        if record.len() != 2 {
            return Err(Error::format(&name, format!("data line {}: expected 2 columns", line + 1)));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::format(&name, format!("data line {}: {s:?}: {e}", line + 1)))
        };
        positions.push(parse(&record[0])?);
        intensities.push(parse(&record[1])?);
    }
    let trace = FringeTrace {
        positions,
        intensities,
        meta,
    };
    trace.validate().map_err(|e| Error::format(&name, e.to_string()))?;
    Ok(trace)
}

/// Trace paths listed in a manifest, one per line, relative to the
/// manifest's directory. Blank lines and `#` comments are skipped.
pub fn read_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let entries: Vec<PathBuf> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect();
    if entries.is_empty() {
        return Err(Error::format(path.display().to_string(), "manifest lists no traces"));
    }
    Ok(entries)
}
