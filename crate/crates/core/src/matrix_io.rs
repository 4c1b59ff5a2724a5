//! Binary and CSV export of sampled oscillator matrices.
//!
//! Binary layout, all little-endian:
//!
//! | offset | type     | field                               |
//! |--------|----------|-------------------------------------|
//! | 0      | `[u8;4]` | magic `OSCM`                        |
//! | 4      | `u32`    | format version (1)                  |
//! | 8      | `u64`    | `N`, rows (oscillators)             |
//! | 16     | `u64`    | `M`, columns (time samples)         |
//! | 24     | `f64`    | `dt_record`, sample spacing         |
//! | 32     | `f64`    | `t0`, time of column 0              |
//! | 40     | `f64`    | `N * M` values, column-major        |
//!
//! Column `j` sits at time `t0 + j * dt_record`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::readout::EnvelopeMatrix;

const MAGIC: &[u8; 4] = b"OSCM";
const VERSION: u32 = 1;

/// A column-major `N x M` matrix on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledMatrix {
    pub n: usize,
    pub m: usize,
    pub dt_record: f64,
    pub t0: f64,
    pub values: Vec<f64>,
}

impl SampledMatrix {
    pub fn times(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.t0 + j as f64 * self.dt_record).collect()
    }
}

impl From<&Trajectory> for SampledMatrix {
    fn from(t: &Trajectory) -> Self {
        Self {
            n: t.n,
            m: t.columns(),
            dt_record: t.dt_record,
            t0: t.times.first().copied().unwrap_or(0.0),
            values: t.positions.clone(),
        }
    }
}

impl From<&EnvelopeMatrix> for SampledMatrix {
    fn from(e: &EnvelopeMatrix) -> Self {
        Self {
            n: e.n,
            m: e.columns(),
            dt_record: e.dt(),
            t0: e.times.first().copied().unwrap_or(0.0),
            values: e.values.clone(),
        }
    }
}

impl From<SampledMatrix> for EnvelopeMatrix {
    fn from(s: SampledMatrix) -> Self {
        EnvelopeMatrix {
            n: s.n,
            times: s.times(),
            values: s.values,
        }
    }
}

pub fn write_binary(path: &Path, mat: &SampledMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(mat.n as u64).to_le_bytes())?;
    w.write_all(&(mat.m as u64).to_le_bytes())?;
    w.write_all(&mat.dt_record.to_le_bytes())?;
    w.write_all(&mat.t0.to_le_bytes())?;
    for v in &mat.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<SampledMatrix> {
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 40];
    r.read_exact(&mut head)?;
    if &head[0..4] != MAGIC {
        return Err(bad("not an OSCM matrix file".into()));
    }
    let word = |a: usize| <[u8; 8]>::try_from(&head[a..a + 8]).expect("8-byte slice");
    let version = u32::from_le_bytes(head[4..8].try_into().expect("4-byte slice"));
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(word(8)) as usize;
    let m = u64::from_le_bytes(word(16)) as usize;
    let dt_record = f64::from_le_bytes(word(24));
    let t0 = f64::from_le_bytes(word(32));
    let len = n.checked_mul(m).ok_or_else(|| bad("dimensions overflow".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != len * 8 {
        return Err(bad(format!("expected {} data bytes, found {}", len * 8, bytes.len())));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(SampledMatrix {
        n,
        m,
        dt_record,
        t0,
        values,
    })
}

/// One row per time sample: `t,x1,...,xN`.
pub fn write_csv(path: &Path, mat: &SampledMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=mat.n).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for (j, t) in mat.times().into_iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(mat.values[j * mat.n..(j + 1) * mat.n].iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
