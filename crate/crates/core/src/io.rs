//! File formats shared with external tooling.
//!
//! Binary field file (little endian):
//!
//! ```text
//! magic    b"PRFD"
//! version  u32 (= 1)
//! n        u32
//! dims     n + 1 × u32   nodes per spatial axis, then time slices
//! h, dt, t_final   f64
//! payload  f64 × len     one time slice after another, first axis fastest
//! ```
//!
//! Curve files are CSV with header `r,value`, rows in increasing `r`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec, ScalarField};

pub const FIELD_MAGIC: &[u8; 4] = b"PRFD";
pub const FIELD_VERSION: u32 = 1;

pub fn encode_field(field: &ScalarField) -> Vec<u8> {
    let g = field.grid();
    let n = g.n();
    let mut out = Vec::with_capacity(32 + 8 * g.len());
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&FIELD_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for _ in 0..n {
        out.extend_from_slice(&(g.per_axis() as u32).to_le_bytes());
    }
    out.extend_from_slice(&(g.n_time() as u32).to_le_bytes());
    for v in [g.h(), g.dt(), g.t_final()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos + len;
        if end > self.buf.len() {
            return Err(Error::Format("field file truncated".into()));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_field(bytes: &[u8]) -> Result<ScalarField> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4)? != FIELD_MAGIC {
        return Err(Error::Format("bad magic, expected PRFD".into()));
    }
    let version = c.u32()?;
    if version != FIELD_VERSION {
        return Err(Error::Format(format!("unsupported field version {version}")));
    }
    let n = c.u32()? as usize;
    if !(1..=3).contains(&n) {
        return Err(Error::Format(format!("dimension {n} out of range")));
    }
    let mut per_axis = Vec::with_capacity(n);
    for _ in 0..n {
        per_axis.push(c.u32()? as usize);
    }
    let n_time = c.u32()? as usize;
    let (h, dt, t_final) = (c.f64()?, c.f64()?, c.f64()?);
    if per_axis.iter().any(|&p| p != per_axis[0]) || per_axis[0] % 2 == 0 || n_time < 2 {
        return Err(Error::Format(format!("unsupported node counts {per_axis:?} × {n_time}")));
    }
    let spec = GridSpec::new(
        n,
        (per_axis[0] - 1) as f64 / 2.0 * h,
        (n_time - 1) as f64 * dt,
        h,
        dt,
    );
    let grid = Grid::with_t_final(spec, t_final)?;
    let len = grid.len();
    let payload = c.take(8 * len)?;
    if c.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    let values = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    ScalarField::from_values(grid, values)
}

pub fn write_field(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_field(field))?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_field(&bytes)
}

pub fn curve_csv(radii: &[f64], values: &[f64]) -> String {
    let mut s = String::from("r,value\n");
    for (r, v) in radii.iter().zip(values) {
        s.push_str(&format!("{r},{v}\n"));
    }
    s
}

pub fn parse_curve_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("r,value") {
        return Err(Error::Format("curve CSV must start with `r,value`".into()));
    }
    let (mut rs, mut vs) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("row {}: expected two columns", i + 1)))?;
        let r: f64 = a.trim().parse().map_err(|_| Error::Format(format!("row {}: bad r", i + 1)))?;
        let v: f64 = b.trim().parse().map_err(|_| Error::Format(format!("row {}: bad value", i + 1)))?;
        if let Some(&last) = rs.last() {
            if r <= last {
                return Err(Error::Format(format!("row {}: radii must increase", i + 1)));
            }
        }
        rs.push(r);
        vs.push(v);
    }
    Ok((rs, vs))
}
