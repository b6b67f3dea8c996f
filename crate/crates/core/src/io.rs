//! Artifact serialization and reproducible run manifests.
//!
//! Formats:
//! - trapped-set samples, return-map atlases and resonance lists as CSV with
//!   a `# manifest: <run id>` header comment;
//! - complex matrices in the binary `OQMX` layout (magic, version `u32`,
//!   rows `u32`, cols `u32`, then row-major little-endian `(re, im)` pairs
//!   of 64-bit floats) plus a CSV alternative for inspection;
//! - flat key-value run manifests with a stable field order. The run id is
//!   the SHA-256 of the parameter section, so artifacts can reference their
//!   manifest before output hashes are known; the manifest then records the
//!   hash of every artifact it produced.

use crate::grushin::ResonanceList;
use crate::phase_flow::TrappedSetSample;
use crate::poincare::ReturnMapAtlas;
use crate::scaling1d::StableResonance;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad OQMX file: {0}")]
    BadFormat(String),
    #[error("bad manifest line {0}: expected `key = value`")]
    BadManifest(usize),
}

fn fmt_f64(v: f64) -> String {
    // shortest roundtrip representation keeps artifacts byte-stable
    format!("{}", v)
}

/// Trapped-set CSV: `x1,...,xn,xi1,...,xin,escape_time`.
pub fn write_trapped_csv(
    path: &Path,
    sample: &TrappedSetSample,
    run_id: &str,
) -> Result<(), IoError> {
    let dim = sample.points.first().map(|p| p.dim()).unwrap_or(0);
    let mut out = String::new();
    writeln!(out, "# manifest: {run_id}").unwrap();
    let xs: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    let xis: Vec<String> = (1..=dim).map(|i| format!("xi{i}")).collect();
    writeln!(out, "{},{},escape_time", xs.join(","), xis.join(",")).unwrap();
    for (p, te) in sample.points.iter().zip(&sample.escape_times) {
        let row: Vec<String> = p
            .x
            .iter()
            .chain(p.xi.iter())
            .map(|v| fmt_f64(*v))
            .chain(std::iter::once(fmt_f64(*te)))
            .collect();
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

/// Atlas CSV: one row per record,
/// `k,i,rhoIn...,rhoOut...,tPlus,J11..J(2n-2)(2n-2)` (J row-major).
pub fn write_atlas_csv(path: &Path, atlas: &ReturnMapAtlas, run_id: &str) -> Result<(), IoError> {
    let mut out = String::new();
    writeln!(out, "# manifest: {run_id}").unwrap();
    if let Some(first) = atlas.records.first() {
        let d = first.rho_in.len();
        let mut header: Vec<String> = vec!["k".into(), "i".into()];
        header.extend((1..=d).map(|j| format!("rho_in{j}")));
        header.extend((1..=d).map(|j| format!("rho_out{j}")));
        header.push("t_plus".into());
        for r in 1..=d {
            for c in 1..=d {
                header.push(format!("J{r}{c}"));
            }
        }
        writeln!(out, "{}", header.join(",")).unwrap();
    }
    for rec in &atlas.records {
        let mut row: Vec<String> = vec![rec.from_section.to_string(), rec.to_section.to_string()];
        row.extend(rec.rho_in.iter().map(|v| fmt_f64(*v)));
        row.extend(rec.rho_out.iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(rec.t_plus));
        for r in 0..rec.jacobian.nrows() {
            for c in 0..rec.jacobian.ncols() {
                row.push(fmt_f64(rec.jacobian[(r, c)]));
            }
        }
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

/// Resonance CSV: `re_z,im_z,multiplicity,residual`.
pub fn write_resonances_csv(
    path: &Path,
    list: &ResonanceList,
    run_id: &str,
) -> Result<(), IoError> {
    let mut out = String::new();
    writeln!(out, "# manifest: {run_id}").unwrap();
    writeln!(out, "re_z,im_z,multiplicity,residual").unwrap();
    for z in &list.zeros {
        writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(z.z.re),
            fmt_f64(z.z.im),
            z.multiplicity,
            fmt_f64(z.residual)
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

/// Complex-scaling resonance CSV with the grid parameters appended:
/// `re_z,im_z,multiplicity,residual,theta,Npts,L`.
pub fn write_scaling_resonances_csv(
    path: &Path,
    zeros: &[StableResonance],
    thetas: &[f64],
    npts: usize,
    half_length: f64,
    run_id: &str,
) -> Result<(), IoError> {
    let mut out = String::new();
    writeln!(out, "# manifest: {run_id}").unwrap();
    writeln!(out, "re_z,im_z,multiplicity,residual,theta,Npts,L").unwrap();
    let theta_label = thetas
        .iter()
        .map(|t| fmt_f64(*t))
        .collect::<Vec<_>>()
        .join(";");
    for z in zeros {
        writeln!(
            out,
            "{},{},1,{},{},{},{}",
            fmt_f64(z.z.re),
            fmt_f64(z.z.im),
            fmt_f64(z.residual.max(z.theta_spread)),
            theta_label,
            npts,
            fmt_f64(half_length)
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

const OQMX_MAGIC: &[u8; 4] = b"OQMX";
const OQMX_VERSION: u32 = 1;

/// Writes a complex matrix in the binary OQMX format.
pub fn write_oqmx(path: &Path, m: &DMatrix<C64>) -> Result<(), IoError> {
    let mut f = fs::File::create(path)?;
    f.write_all(OQMX_MAGIC)?;
    f.write_all(&OQMX_VERSION.to_le_bytes())?;
    f.write_all(&(m.nrows() as u32).to_le_bytes())?;
    f.write_all(&(m.ncols() as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.nrows() * m.ncols() * 16);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            buf.extend_from_slice(&m[(r, c)].re.to_le_bytes());
            buf.extend_from_slice(&m[(r, c)].im.to_le_bytes());
        }
    }
    f.write_all(&buf)?;
    Ok(())
}

/// Reads a matrix back from the OQMX format.
pub fn read_oqmx(path: &Path) -> Result<DMatrix<C64>, IoError> {
    let mut f = fs::File::open(path)?;
    let mut head = [0u8; 16];
    f.read_exact(&mut head)
        .map_err(|_| IoError::BadFormat("truncated header".into()))?;
    if &head[0..4] != OQMX_MAGIC {
        return Err(IoError::BadFormat("missing OQMX magic".into()));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != OQMX_VERSION {
        return Err(IoError::BadFormat(format!("unsupported version {version}")));
    }
    let rows = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)?;
    if buf.len() != rows * cols * 16 {
        return Err(IoError::BadFormat(format!(
            "payload {} bytes, expected {}",
            buf.len(),
            rows * cols * 16
        )));
    }
    let mut m = DMatrix::<C64>::zeros(rows, cols);
    let mut off = 0;
    for r in 0..rows {
        for c in 0..cols {
            let re = f64::from_le_bytes(buf[off..off + 8].try_into().unwrap());
            let im = f64::from_le_bytes(buf[off + 8..off + 16].try_into().unwrap());
            m[(r, c)] = C64::new(re, im);
            off += 16;
        }
    }
    Ok(m)
}

/// CSV alternative for matrix inspection: row-major `re,im` pairs.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<C64>, run_id: &str) -> Result<(), IoError> {
    let mut out = String::new();
    writeln!(out, "# manifest: {run_id}").unwrap();
    writeln!(out, "# rows: {} cols: {}", m.nrows(), m.ncols()).unwrap();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .flat_map(|c| [fmt_f64(m[(r, c)].re), fmt_f64(m[(r, c)].im)])
            .collect();
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

/// Flat key-value run manifest with a stable field order.
///
/// The parameter section comes first (tool version, command, parameters,
/// input hashes); its serialization hashes to the run id. Output records
/// are appended afterwards as `output.<name> = <path>` and
/// `output.<name>.sha256 = <hash>`.
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    params: Vec<(String, String)>,
    outputs: Vec<(String, String, String)>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.push("tool_version", env!("CARGO_PKG_VERSION"));
        m.push("command", command);
        m
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.params.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn params(&self) -> &[(String, String)] {
        &self.params
    }

    pub fn outputs(&self) -> &[(String, String, String)] {
        &self.outputs
    }

    fn param_section(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.params {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }

    /// SHA-256 of the parameter section; artifacts reference this id.
    pub fn run_id(&self) -> String {
        hex_digest(self.param_section().as_bytes())
    }

    /// Registers a produced artifact and its content hash.
    pub fn record_output(&mut self, name: &str, path: &Path) -> Result<(), IoError> {
        let hash = file_sha256(path)?;
        self.outputs
            .push((name.to_string(), path.display().to_string(), hash));
        Ok(())
    }

    pub fn serialize(&self) -> String {
        let mut s = self.param_section();
        writeln!(s, "run_id = {}", self.run_id()).unwrap();
        for (name, path, hash) in &self.outputs {
            writeln!(s, "output.{name} = {path}").unwrap();
            writeln!(s, "output.{name}.sha256 = {hash}").unwrap();
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        fs::write(path, self.serialize())?;
        Ok(())
    }

    /// Parses a manifest file back into parameter and output records.
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut m = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(IoError::BadManifest(lineno + 1))?;
            let k = k.trim();
            let v = v.trim();
            if k == "run_id" {
                continue;
            }
            if let Some(rest) = k.strip_prefix("output.") {
                if let Some(name) = rest.strip_suffix(".sha256") {
                    if let Some(o) = m.outputs.iter_mut().find(|(n, _, _)| n == name) {
                        o.2 = v.to_string();
                    }
                } else {
                    m.outputs.push((rest.to_string(), v.to_string(), String::new()));
                }
            } else {
                m.params.push((k.to_string(), v.to_string()));
            }
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in d {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

pub fn file_sha256(path: &Path) -> Result<String, IoError> {
    Ok(hex_digest(&fs::read(path)?))
}
