//! Diagnostics CSV and binary snapshots.
//!
//! Snapshot layout (all integers `u32` and floats `f64`, little-endian):
//!
//! | field | size |
//! |---|---|
//! | magic `KMHDSNAP` | 8 bytes |
//! | format version (1) | u32 |
//! | type tag: 1 kinetic, 2 MHD | u32 |
//! | grid points per axis | 3 x u32 |
//! | velocity modes (0 for MHD) | u32 |
//! | `t`, `eps` (0 for MHD) | 2 x f64 |
//! | spectra as `(re, im)` pairs | rest |
//!
//! Kinetic spectra are stored as `f` (mode by mode), `h`, `E`, `B`; MHD
//! spectra as `u`, `theta`, `B`.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, Spectrum};
use crate::kinetic::{DiagnosticsRecord, KineticState};
use crate::mhd::FluidState;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"KMHDSNAP";
pub const SNAPSHOT_VERSION: u32 = 1;
pub const TAG_KINETIC: u32 = 1;
pub const TAG_MHD: u32 = 2;

/// Column order of the diagnostics CSV.
pub const DIAGNOSTICS_COLUMNS: [&str; 18] = [
    "t",
    "step",
    "momentum_x",
    "momentum_y",
    "momentum_z",
    "energy",
    "mass",
    "charge",
    "magnetic_x",
    "magnetic_y",
    "magnetic_z",
    "div_b",
    "gauss",
    "energy_h",
    "dissipation_d",
    "continuity",
    "jtilde_residual",
    "jtilde_residual_alt",
];

pub fn diagnostics_header() -> String {
    DIAGNOSTICS_COLUMNS.join(",")
}

pub fn diagnostics_row(r: &DiagnosticsRecord) -> String {
    let mut cols = vec![format!("{}", r.t), format!("{}", r.step)];
    cols.extend(r.conserved.as_array().iter().map(|x| format!("{x}")));
    for x in [r.div_b, r.gauss, r.energy_h, r.dissipation_d, r.continuity, r.jtilde_residual, r.jtilde_residual_alt] {
        cols.push(format!("{x}"));
    }
    cols.join(",")
}

/// Append records to a CSV, writing the header if the file is new.
pub fn append_diagnostics(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let fresh = !path.exists();
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(&diagnostics_header());
        text.push('\n');
    }
    for r in records {
        text.push_str(&diagnostics_row(r));
        text.push('\n');
    }
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, x: u32) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn f64(&mut self, x: f64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn spectrum(&mut self, s: &[Complex64]) {
        for z in s {
            self.f64(z.re);
            self.f64(z.im);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(self.path, "truncated snapshot"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn spectrum(&mut self, n: usize) -> Result<Spectrum> {
        (0..n).map(|_| Ok(Complex64::new(self.f64()?, self.f64()?))).collect()
    }
}

fn header(w: &mut Writer, tag: u32, grid: &SpatialGrid, nm: usize, t: f64, eps: f64) {
    w.0.extend_from_slice(SNAPSHOT_MAGIC);
    w.u32(SNAPSHOT_VERSION);
    w.u32(tag);
    for n in grid.shape() {
        w.u32(n as u32);
    }
    w.u32(nm as u32);
    w.f64(t);
    w.f64(eps);
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_kinetic_snapshot(path: &Path, grid: &SpatialGrid, s: &KineticState) -> Result<()> {
    let mut w = Writer(Vec::new());
    header(&mut w, TAG_KINETIC, grid, s.n_modes(), s.t, s.eps);
    for sp in s.f.iter().chain(&s.h).chain(&s.e).chain(&s.b) {
        w.spectrum(sp);
    }
    write_file(path, &w.0)
}

pub fn write_mhd_snapshot(path: &Path, grid: &SpatialGrid, s: &FluidState) -> Result<()> {
    let mut w = Writer(Vec::new());
    header(&mut w, TAG_MHD, grid, 0, s.t, 0.0);
    for sp in s.u.iter().chain(std::iter::once(&s.theta)).chain(&s.b) {
        w.spectrum(sp);
    }
    write_file(path, &w.0)
}

pub enum Snapshot {
    Kinetic { shape: [usize; 3], state: KineticState },
    Mhd { shape: [usize; 3], state: FluidState },
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { bytes: &bytes, pos: 0, path };
    if r.take(8)? != SNAPSHOT_MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    let version = r.u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::format(path, format!("unsupported snapshot version {version}")));
    }
    let tag = r.u32()?;
    let shape = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let npts = shape[0] * shape[1] * shape[2];
    let nm = r.u32()? as usize;
    let t = r.f64()?;
    let eps = r.f64()?;
    let snap = match tag {
        TAG_KINETIC => {
            let f = (0..nm).map(|_| r.spectrum(npts)).collect::<Result<Vec<_>>>()?;
            let h = (0..nm).map(|_| r.spectrum(npts)).collect::<Result<Vec<_>>>()?;
            let e = [r.spectrum(npts)?, r.spectrum(npts)?, r.spectrum(npts)?];
            let b = [r.spectrum(npts)?, r.spectrum(npts)?, r.spectrum(npts)?];
            Snapshot::Kinetic { shape, state: KineticState { t, eps, f, h, e, b } }
        }
        TAG_MHD => {
            let u = [r.spectrum(npts)?, r.spectrum(npts)?, r.spectrum(npts)?];
            let theta = r.spectrum(npts)?;
            let b = [r.spectrum(npts)?, r.spectrum(npts)?, r.spectrum(npts)?];
            Snapshot::Mhd { shape, state: FluidState { t, u, theta, b } }
        }
        other => return Err(Error::format(path, format!("unknown snapshot type {other}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes in snapshot"));
    }
    Ok(snap)
}
