//! Feature-matrix files and the deep-feature ingestion boundary.
//!
//! Deep features (VGG16 fc6 and fc7 activations) are computed elsewhere and
//! arrive as `KINFEAT1` files:
//!
//! | offset | size | content                          |
//! |--------|------|----------------------------------|
//! | 0      | 8    | magic `KINFEAT1`                 |
//! | 8      | 4    | rows, `u32` little-endian        |
//! | 12     | 4    | cols, `u32` little-endian        |
//! | 16     | 2    | id length `n`, `u16` LE          |
//! | 18     | n    | sample id, UTF-8                 |
//! | 18 + n | 4·rows·cols | `f32` LE, row-major       |
//!
//! The same container caches shallow BSIF matrices and model parameters.

use std::path::Path;

use crate::tensor::Matrix;

pub const MAGIC: &[u8; 8] = b"KINFEAT1";
pub const DEEP_ROWS: usize = 2;
pub const DEEP_COLS: usize = 4096;
const HEADER_FIXED: usize = 18;

#[derive(Debug, thiserror::Error)]
pub enum FeatureFileError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: not a KINFEAT1 file")]
    BadMagic,
    #[error("truncated header")]
    TruncatedHeader,
    #[error("sample id is not valid UTF-8")]
    InvalidId,
    #[error("sample id is {0} bytes, the limit is 65535")]
    IdTooLong(usize),
    #[error("declared shape {rows}x{cols} has a zero dimension")]
    ZeroDimension { rows: usize, cols: usize },
    #[error("matrix shape {rows}x{cols} does not fit the u32 header fields")]
    TooLarge { rows: usize, cols: usize },
    #[error("payload length mismatch: expected {expected} bytes, found {found}")]
    PayloadLength { expected: usize, found: usize },
    #[error("non-finite value at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },
    #[error("expected 2×4096 deep feature, got {rows}×{cols}")]
    DeepShape { rows: usize, cols: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureFileHeader {
    pub rows: usize,
    pub cols: usize,
    pub sample_id: String,
}

/// A validated 2×4096 matrix; row 0 holds fc6, row 1 fc7.
#[derive(Clone, Debug, PartialEq)]
pub struct DeepFeature(Matrix);

impl DeepFeature {
    pub fn new(m: Matrix) -> Result<Self, FeatureFileError> {
        if m.shape() != (DEEP_ROWS, DEEP_COLS) {
            return Err(FeatureFileError::DeepShape {
                rows: m.rows(),
                cols: m.cols(),
            });
        }
        check_finite(&m)?;
        Ok(Self(m))
    }

    pub fn fc6(&self) -> &[f64] {
        self.0.row(0)
    }

    pub fn fc7(&self) -> &[f64] {
        self.0.row(1)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

fn check_finite(m: &Matrix) -> Result<(), FeatureFileError> {
    match m.data().iter().position(|v| !v.is_finite()) {
        Some(i) => Err(FeatureFileError::NonFinite {
            row: i / m.cols().max(1),
            col: i % m.cols().max(1),
        }),
        None => Ok(()),
    }
}

/// Serializes a matrix; values are stored as `f32`.
pub fn encode(m: &Matrix, sample_id: &str) -> Result<Vec<u8>, FeatureFileError> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(FeatureFileError::ZeroDimension { rows, cols });
    }
    if u32::try_from(rows).is_err() || u32::try_from(cols).is_err() {
        return Err(FeatureFileError::TooLarge { rows, cols });
    }
    let id = sample_id.as_bytes();
    let id_len = u16::try_from(id.len()).map_err(|_| FeatureFileError::IdTooLong(id.len()))?;
    let mut out = Vec::with_capacity(HEADER_FIXED + id.len() + 4 * rows * cols);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    out.extend_from_slice(&id_len.to_le_bytes());
    out.extend_from_slice(id);
    for (i, &v) in m.data().iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(FeatureFileError::NonFinite {
                row: i / cols,
                col: i % cols,
            });
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_header(bytes: &[u8]) -> Result<(FeatureFileHeader, usize), FeatureFileError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(FeatureFileError::BadMagic);
    }
    if bytes.len() < HEADER_FIXED {
        return Err(FeatureFileError::TruncatedHeader);
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let id_len = u16::from_le_bytes(bytes[16..18].try_into().unwrap()) as usize;
    let id_end = HEADER_FIXED + id_len;
    if bytes.len() < id_end {
        return Err(FeatureFileError::TruncatedHeader);
    }
    if rows == 0 || cols == 0 {
        return Err(FeatureFileError::ZeroDimension { rows, cols });
    }
    let sample_id = std::str::from_utf8(&bytes[HEADER_FIXED..id_end])
        .map_err(|_| FeatureFileError::InvalidId)?
        .to_string();
    Ok((FeatureFileHeader { rows, cols, sample_id }, id_end))
}

pub fn decode(bytes: &[u8]) -> Result<(FeatureFileHeader, Matrix), FeatureFileError> {
    let (header, start) = decode_header(bytes)?;
    let payload = &bytes[start..];
    let expected = header
        .rows
        .checked_mul(header.cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or(FeatureFileError::TooLarge {
            rows: header.rows,
            cols: header.cols,
        })?;
    if payload.len() != expected {
        return Err(FeatureFileError::PayloadLength {
            expected,
            found: payload.len(),
        });
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let m = Matrix::from_vec(header.rows, header.cols, data).expect("length checked above");
    check_finite(&m)?;
    Ok((header, m))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FeatureFileError + '_ {
    move |source| FeatureFileError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads any `KINFEAT1` matrix.
pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<(FeatureFileHeader, Matrix), FeatureFileError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode(&bytes)
}

/// Reads a deep feature, insisting on the 2×4096 fc6/fc7 layout.
pub fn read_feature_file(path: impl AsRef<Path>) -> Result<DeepFeature, FeatureFileError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let (header, _) = decode_header(&bytes)?;
    if (header.rows, header.cols) != (DEEP_ROWS, DEEP_COLS) {
        return Err(FeatureFileError::DeepShape {
            rows: header.rows,
            cols: header.cols,
        });
    }
    let (_, m) = decode(&bytes)?;
    DeepFeature::new(m)
}

pub fn write_feature_file(path: impl AsRef<Path>, m: &Matrix, sample_id: &str) -> Result<(), FeatureFileError> {
    let path = path.as_ref();
    check_finite(m)?;
    let bytes = encode(m, sample_id)?;
    std::fs::write(path, bytes).map_err(io_err(path))
}

/// Scales every non-zero row to unit Euclidean norm; zero rows stay zero.
pub fn l2_normalize_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}
