//! Trajectory files.
//!
//! CSV: one header line of column names, then one frame per line.
//!
//! Raw: the bytes `ETO1`, the dimension `d` as a little-endian `u32`, the
//! frame count `M` as a little-endian `u64`, then `M * d` little-endian
//! `f64` values in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;

use super::TrajectoryDataset;
use crate::error::{Error, LoadError, Result};

pub const RAW_MAGIC: &[u8; 4] = b"ETO1";
const RAW_HEADER_LEN: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryFormat {
    Csv,
    RawF64,
}

impl FromStr for TrajectoryFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "raw-f64" | "raw" => Ok(Self::RawF64),
            other => Err(Error::InvalidInput(format!(
                "unknown trajectory format {other:?} (csv | raw-f64)"
            ))),
        }
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    LoadError::Io {
        path: path.to_path_buf(),
        source,
    }
    .into()
}

pub fn load_trajectory(path: &Path, format: TrajectoryFormat) -> Result<TrajectoryDataset> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    let frames = match format {
        TrajectoryFormat::Csv => parse_csv(&bytes)?,
        TrajectoryFormat::RawF64 => parse_raw(&bytes)?,
    };
    TrajectoryDataset::new(frames, path.display().to_string())
}

/// Parses CSV text. Line numbers in errors are 1-based and count the header.
pub fn parse_csv(bytes: &[u8]) -> Result<Array2<f64>> {
    let text = std::str::from_utf8(bytes).map_err(|e| LoadError::MalformedHeader {
        offset: e.valid_up_to() as u64,
        reason: "file is not valid UTF-8".into(),
    })?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(LoadError::EmptyDataset.into());
    };
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names.iter().any(|n| n.is_empty()) {
        return Err(LoadError::MalformedHeader {
            offset: 0,
            reason: "empty column name".into(),
        }
        .into());
    }
    if names.iter().all(|n| n.parse::<f64>().is_ok()) {
        return Err(LoadError::MalformedHeader {
            offset: 0,
            reason: "expected a header row of column names, found numbers".into(),
        }
        .into());
    }
    let d = names.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d {
            return Err(LoadError::RaggedRow {
                line: idx + 1,
                expected: d,
                found: fields.len(),
            }
            .into());
        }
        for (f, field) in fields.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| LoadError::NonNumeric {
                line: idx + 1,
                field: f + 1,
                text: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(LoadError::NonFinite {
                    frame: rows,
                    column: f,
                }
                .into());
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(LoadError::EmptyDataset.into());
    }
    Ok(Array2::from_shape_vec((rows, d), values).expect("row lengths checked"))
}

pub fn parse_raw(bytes: &[u8]) -> Result<Array2<f64>> {
    let len = bytes.len() as u64;
    if len < RAW_HEADER_LEN {
        if len < 4 || &bytes[..4] != RAW_MAGIC {
            return Err(LoadError::MalformedHeader {
                offset: 0,
                reason: "missing ETO1 magic".into(),
            }
            .into());
        }
        return Err(LoadError::Truncated {
            offset: 4,
            expected: RAW_HEADER_LEN - 4,
            found: len - 4,
        }
        .into());
    }
    if &bytes[..4] != RAW_MAGIC {
        return Err(LoadError::MalformedHeader {
            offset: 0,
            reason: "missing ETO1 magic".into(),
        }
        .into());
    }
    let d = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as u64;
    let m = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    if m == 0 {
        return Err(LoadError::EmptyDataset.into());
    }
    if d == 0 {
        return Err(LoadError::MalformedHeader {
            offset: 4,
            reason: "dimension is zero".into(),
        }
        .into());
    }
    let expected = m
        .checked_mul(d)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| LoadError::MalformedHeader {
            offset: 8,
            reason: format!("frame count {m} times dimension {d} overflows"),
        })?;
    let found = len - RAW_HEADER_LEN;
    if found < expected {
        return Err(LoadError::Truncated {
            offset: RAW_HEADER_LEN,
            expected,
            found,
        }
        .into());
    }
    if found > expected {
        return Err(LoadError::MalformedHeader {
            offset: RAW_HEADER_LEN + expected,
            reason: format!("{} trailing bytes after payload", found - expected),
        }
        .into());
    }
    let values: Vec<f64> = bytes[RAW_HEADER_LEN as usize..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Array2::from_shape_vec((m as usize, d as usize), values).expect("length checked"))
}

/// Serializes frames; CSV columns are named `x0, x1, ...` and values use
/// 17 significant digits so they read back exactly.
pub fn encode_trajectory(frames: &Array2<f64>, format: TrajectoryFormat) -> Vec<u8> {
    match format {
        TrajectoryFormat::Csv => {
            let mut out = String::new();
            let header: Vec<String> = (0..frames.ncols()).map(|j| format!("x{j}")).collect();
            out.push_str(&header.join(","));
            out.push('\n');
            for row in frames.rows() {
                let fields: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
                out.push_str(&fields.join(","));
                out.push('\n');
            }
            out.into_bytes()
        }
        TrajectoryFormat::RawF64 => {
            let mut out = Vec::with_capacity(16 + frames.len() * 8);
            out.extend_from_slice(RAW_MAGIC);
            out.extend_from_slice(&(frames.ncols() as u32).to_le_bytes());
            out.extend_from_slice(&(frames.nrows() as u64).to_le_bytes());
            for v in frames.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out
        }
    }
}

pub fn write_trajectory(path: &Path, frames: &Array2<f64>, format: TrajectoryFormat) -> Result<()> {
    let bytes = encode_trajectory(frames, format);
    let mut file = fs::File::create(path).map_err(|e| io_error(path, e))?;
    file.write_all(&bytes).map_err(|e| io_error(path, e))?;
    Ok(())
}
