//! Matrix file formats. Samples are always columns of the returned matrix.
//!
//! * `csv`: UTF-8, comma separated, one feature row per line, no header.
//! * `f64le`: two little-endian `u64` (rows, cols) then `rows*cols` little-endian
//!   `f64` in column-major order.
//! * `idx`: big-endian IDX with unsigned-byte payload (`0x00000803` for image
//!   tensors). The first dimension counts samples; remaining dimensions are
//!   flattened row-major into a feature vector and scaled by `1/255`.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{OpcaError, Result};
use crate::matops::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    Csv,
    F64le,
    Idx,
}

impl FromStr for MatrixFormat {
    type Err = OpcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "f64le" => Ok(MatrixFormat::F64le),
            "idx" => Ok(MatrixFormat::Idx),
            other => Err(OpcaError::Config(format!(
                "unknown matrix format {other:?}"
            ))),
        }
    }
}

pub fn load_matrix_file(path: impl AsRef<Path>, format: MatrixFormat) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| OpcaError::io(path, e))?;
    match format {
        MatrixFormat::Csv => parse_csv(&bytes),
        MatrixFormat::F64le => parse_f64le(&bytes),
        MatrixFormat::Idx => parse_idx(&bytes),
    }
}

pub fn save_f64le(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(16 + 8 * m.len());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    // nalgebra storage is column-major already
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| OpcaError::io(path, e))
}

fn parse_err(offset: usize, message: impl Into<String>) -> OpcaError {
    OpcaError::Parse {
        offset: offset as u64,
        message: message.into(),
    }
}

pub fn parse_csv(bytes: &[u8]) -> Result<Matrix> {
    let text =
        std::str::from_utf8(bytes).map_err(|e| parse_err(e.valid_up_to(), "invalid UTF-8"))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut offset = 0usize;
    for line in text.split_inclusive('\n') {
        let line_start = offset;
        offset += line.len();
        let body = line.trim_end_matches(['\n', '\r']);
        if body.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        let mut field_start = line_start;
        for field in body.split(',') {
            let value: f64 = field.trim().parse().map_err(|_| {
                parse_err(
                    field_start,
                    format!("cannot parse {:?} as a number", field.trim()),
                )
            })?;
            if !value.is_finite() {
                return Err(parse_err(field_start, "non-finite value"));
            }
            row.push(value);
            field_start += field.len() + 1;
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(OpcaError::DimensionMismatch(format!(
                    "ragged CSV: row {} has {} fields, expected {} (byte {})",
                    rows.len() + 1,
                    row.len(),
                    first.len(),
                    line_start
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(0, "empty CSV"));
    }
    let cols = rows[0].len();
    Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn read_u64_le(bytes: &[u8], at: usize) -> Result<u64> {
    bytes
        .get(at..at + 8)
        .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
        .ok_or_else(|| parse_err(at, "truncated header"))
}

pub fn parse_f64le(bytes: &[u8]) -> Result<Matrix> {
    let rows = read_u64_le(bytes, 0)? as usize;
    let cols = read_u64_le(bytes, 8)? as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| parse_err(0, "dimension overflow"))?;
    let expected = 16 + 8 * count;
    if bytes.len() != expected {
        return Err(OpcaError::DimensionMismatch(format!(
            "f64le header declares {rows}x{cols} ({expected} bytes) but file has {} bytes",
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(count);
    for (i, chunk) in bytes[16..].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        if !v.is_finite() {
            return Err(parse_err(16 + 8 * i, "non-finite value"));
        }
        data.push(v);
    }
    Ok(Matrix::from_vec(rows, cols, data))
}

pub fn parse_idx(bytes: &[u8]) -> Result<Matrix> {
    let header = bytes
        .get(0..4)
        .ok_or_else(|| parse_err(0, "truncated magic"))?;
    if header[0] != 0 || header[1] != 0 {
        return Err(parse_err(0, "bad IDX magic"));
    }
    if header[2] != 0x08 {
        return Err(parse_err(
            2,
            format!("unsupported IDX element type 0x{:02x}", header[2]),
        ));
    }
    let ndim = header[3] as usize;
    if ndim < 2 {
        return Err(parse_err(
            3,
            "IDX label files (one dimension) are not sample data",
        ));
    }
    let mut dims = Vec::with_capacity(ndim);
    for d in 0..ndim {
        let at = 4 + 4 * d;
        let b = bytes
            .get(at..at + 4)
            .ok_or_else(|| parse_err(at, "truncated dimension table"))?;
        dims.push(u32::from_be_bytes(b.try_into().expect("4 bytes")) as usize);
    }
    let count = dims[0];
    let features: usize = dims[1..].iter().product();
    let start = 4 + 4 * ndim;
    let expected = start + count * features;
    if bytes.len() != expected {
        return Err(OpcaError::DimensionMismatch(format!(
            "IDX dims {dims:?} need {expected} bytes but file has {}",
            bytes.len()
        )));
    }
    let payload = &bytes[start..];
    Ok(Matrix::from_fn(features, count, |i, j| {
        payload[j * features + i] as f64 / 255.0
    }))
}

/// Subtracts each row's mean from every column.
pub fn center_columns(a: &Matrix) -> Matrix {
    let m = a.ncols().max(1) as f64;
    let means = a.column_sum() / m;
    let mut out = a.clone();
    for mut col in out.column_iter_mut() {
        col -= &means;
    }
    out
}

/// `A A^T / m`.
pub fn empirical_covariance(a: &Matrix) -> Matrix {
    let m = a.ncols().max(1) as f64;
    (a * a.transpose()) / m
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn csv_basic() {
        assert_eq!(
            parse_csv(b"1,2\n3,4").unwrap(),
            dmatrix![1.0, 2.0; 3.0, 4.0]
        );
        assert_eq!(
            parse_csv(b"1, 2\r\n3,4\n\n").unwrap(),
            dmatrix![1.0, 2.0; 3.0, 4.0]
        );
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            parse_csv(b"1,2\n3\n"),
            Err(OpcaError::DimensionMismatch(_))
        ));
        match parse_csv(b"1,2\n3,x\n") {
            Err(OpcaError::Parse { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_csv(b"").is_err());
    }

    #[test]
    fn idx_rejects_labels_and_truncation() {
        let labels = [0u8, 0, 8, 1, 0, 0, 0, 2, 3, 4];
        assert!(matches!(
            parse_idx(&labels),
            Err(OpcaError::Parse { offset: 3, .. })
        ));
        let short = [0u8, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2];
        assert!(matches!(
            parse_idx(&short),
            Err(OpcaError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn f64le_rejects_wrong_length() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        assert!(matches!(
            parse_f64le(&bytes),
            Err(OpcaError::DimensionMismatch(_))
        ));
        assert!(matches!(
            parse_f64le(&bytes[..5]),
            Err(OpcaError::Parse { .. })
        ));
    }

    #[test]
    fn centering() {
        assert_eq!(
            center_columns(&Matrix::from_element(3, 4, 2.5)),
            Matrix::zeros(3, 4)
        );
        assert_eq!(center_columns(&dmatrix![1.0, 3.0]), dmatrix![-1.0, 1.0]);
        let a = Matrix::from_fn(5, 7, |i, j| ((i * 7 + j) as f64).sin() * 3.0 + i as f64);
        let c = center_columns(&a);
        for row in c.row_iter() {
            assert!((row.sum() / 7.0).abs() <= 1e-12);
        }
    }
}
