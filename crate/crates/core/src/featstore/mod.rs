//! Embedding matrices: loading, saving, standardization and synthetic data.
//!
//! The canonical on-disk format is *featpack*:
//!
//! ```text
//! "FPK1" | u32 n | u32 d | u8 dtype (1 = f32, 2 = f64) | n*d values, row-major, little-endian
//! ```
//!
//! Headerless CSV and version-1.0 `.npy` files (C order, little-endian f32/f64)
//! are accepted as interop formats.

mod formats;
mod standardize;
mod synth;

use std::str::FromStr;

pub use formats::{load_features, save_csv, save_features, save_features_f32};
pub use standardize::{apply_standardizer, fit_standardizer, NormStats, VAR_EPSILON};
pub use synth::{gen_synthetic, SynthSpec};

use crate::error::{Error, Result};

/// An `n x d` matrix of feature vectors, one sample per row.
///
/// The row index is the sample identity used by every later stage.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Dimension(format!(
                "matrix must be non-empty, got {n}x{d}"
            )));
        }
        if data.len() != n * d {
            return Err(Error::Dimension(format!(
                "expected {} values for {n}x{d}, got {}",
                n * d,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "entry ({}, {}) is {}",
                pos / d,
                pos % d,
                data[pos]
            )));
        }
        Ok(EmbeddingMatrix { n, d, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::Dimension(format!(
                "row {i} has {} columns, expected {d}",
                r.len()
            )));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// New matrix made of the given rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            if i >= self.n {
                return Err(Error::InvalidArgument(format!(
                    "row {i} out of range for n = {}",
                    self.n
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(idx.len(), self.d, data)
    }
}

/// On-disk feature formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Featpack,
    Csv,
    Npy,
}

impl FeatureFormat {
    /// Guess from a file extension, defaulting to featpack.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => FeatureFormat::Csv,
            Some("npy") => FeatureFormat::Npy,
            _ => FeatureFormat::Featpack,
        }
    }
}

impl FromStr for FeatureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "featpack" | "fpk" => Ok(FeatureFormat::Featpack),
            "csv" => Ok(FeatureFormat::Csv),
            "npy" => Ok(FeatureFormat::Npy),
            other => Err(Error::InvalidArgument(format!(
                "unknown feature format {other:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_entries() {
        let err = EmbeddingMatrix::new(2, 2, vec![0.0, 1.0, f64::NAN, 3.0]).unwrap_err();
        assert!(err.to_string().contains("(1, 0)"), "{err}");
    }

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(EmbeddingMatrix::new(0, 3, vec![]).is_err());
        assert!(EmbeddingMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn select_rows_preserves_order() {
        let m = EmbeddingMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let s = m.select_rows(&[2, 0, 2]).unwrap();
        assert_eq!(s.as_slice(), &[3.0, 1.0, 3.0]);
        assert!(m.select_rows(&[3]).is_err());
    }
}
