use super::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Variance floor and denominator epsilon of the standardizer.
pub const VAR_EPSILON: f64 = 1e-5;

/// Per-dimension statistics plus a learnable affine, applied as
/// `(x - mean) / sqrt(var + eps) * gamma + beta`.
///
/// `mean` and `var` are fitted once on the full training set and then frozen;
/// `gamma` and `beta` are trained along with the clustering heads.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub momentum: f64,
    /// Dimensions whose variance was raised to [`VAR_EPSILON`].
    pub clamped: Vec<usize>,
}

impl NormStats {
    /// Mean 0, variance 1, identity affine.
    pub fn identity(d: usize) -> Self {
        NormStats {
            mean: vec![0.0; d],
            var: vec![1.0; d],
            gamma: vec![1.0; d],
            beta: vec![0.0; d],
            momentum: 0.0,
            clamped: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `1 / sqrt(var + eps)` per dimension.
    pub fn inv_std(&self) -> Vec<f64> {
        self.var
            .iter()
            .map(|v| 1.0 / (v + VAR_EPSILON).sqrt())
            .collect()
    }

    /// Writes `(z - mean) / sqrt(var + eps)` (no affine) into `out`.
    pub fn normalize_into(&self, z: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (z[j] - self.mean[j]) / (self.var[j] + VAR_EPSILON).sqrt();
        }
    }

    /// Full transform of one row into `out`.
    pub fn standardize_into(&self, z: &[f64], out: &mut [f64]) {
        self.normalize_into(z, out);
        for (j, o) in out.iter_mut().enumerate() {
            *o = *o * self.gamma[j] + self.beta[j];
        }
    }
}

/// Fits mean and (biased) variance over all rows.
pub fn fit_standardizer(features: &EmbeddingMatrix, momentum: f64) -> Result<NormStats> {
    let (n, d) = (features.n(), features.d());
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "standardizer needs n >= 2, got {n}"
        )));
    }
    if !(0.0..=1.0).contains(&momentum) {
        return Err(Error::InvalidArgument(format!(
            "momentum must be in [0, 1], got {momentum}"
        )));
    }
    let mut mean = vec![0.0; d];
    for row in features.rows() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for row in features.rows() {
        for ((v, &m), &x) in var.iter_mut().zip(&mean).zip(row) {
            *v += (x - m) * (x - m);
        }
    }
    let mut clamped = Vec::new();
    for (j, v) in var.iter_mut().enumerate() {
        *v /= n as f64;
        if *v < VAR_EPSILON {
            *v = VAR_EPSILON;
            clamped.push(j);
        }
    }
    Ok(NormStats {
        mean,
        var,
        gamma: vec![1.0; d],
        beta: vec![0.0; d],
        momentum,
        clamped,
    })
}

pub fn apply_standardizer(
    features: &EmbeddingMatrix,
    stats: &NormStats,
) -> Result<EmbeddingMatrix> {
    let d = features.d();
    if stats.dim() != d || stats.var.len() != d || stats.gamma.len() != d || stats.beta.len() != d {
        return Err(Error::Dimension(format!(
            "standardizer has dimension {}, features have {d}",
            stats.dim()
        )));
    }
    let mut data = vec![0.0; features.n() * d];
    for (row, out) in features.rows().zip(data.chunks_exact_mut(d)) {
        stats.standardize_into(row, out);
    }
    EmbeddingMatrix::new(features.n(), d, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, d: usize, scale: f64, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d)
            .map(|_| rng.random_range(-1.0..1.0) * scale + 3.0)
            .collect();
        EmbeddingMatrix::new(n, d, data).unwrap()
    }

    // Two-pass column statistics, written out longhand.
    fn column_stats(m: &EmbeddingMatrix, j: usize) -> (f64, f64) {
        let col: Vec<f64> = (0..m.n()).map(|i| m.row(i)[j]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
        (mean, var)
    }

    #[test]
    fn two_rows_hand_values() {
        let m = EmbeddingMatrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let s = fit_standardizer(&m, 0.1).unwrap();
        assert_eq!(s.mean, vec![1.0, 1.0]);
        assert_eq!(s.var, vec![1.0, 1.0]);
        assert_eq!(s.gamma, vec![1.0, 1.0]);
        assert_eq!(s.beta, vec![0.0, 0.0]);
    }

    #[test]
    fn constant_column_is_clamped() {
        let m =
            EmbeddingMatrix::from_rows(&[vec![5.0, 1.0], vec![5.0, 2.0], vec![5.0, 3.0]]).unwrap();
        let s = fit_standardizer(&m, 0.1).unwrap();
        assert_eq!(s.var[0], VAR_EPSILON);
        assert_eq!(s.clamped, vec![0]);
        let out = apply_standardizer(&m, &s).unwrap();
        assert!(out.as_slice().iter().all(|v| v.is_finite()));
        assert!((0..3).all(|i| out.row(i)[0] == 0.0));
    }

    #[test]
    fn needs_two_rows() {
        let m = EmbeddingMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(fit_standardizer(&m, 0.1).is_err());
    }

    #[test]
    fn identity_stats_leave_input_unchanged() {
        let m = random_matrix(5, 3, 2.0, 1);
        let out = apply_standardizer(&m, &NormStats::identity(3)).unwrap();
        for (a, b) in m.as_slice().iter().zip(out.as_slice()) {
            assert!((a - b).abs() < 1e-5 * a.abs().max(1.0));
        }
    }

    #[test]
    fn zero_gamma_annihilates() {
        let m = random_matrix(4, 3, 1.0, 2);
        let mut s = fit_standardizer(&m, 0.1).unwrap();
        s.gamma = vec![0.0; 3];
        let out = apply_standardizer(&m, &s).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch() {
        let m = random_matrix(4, 3, 1.0, 2);
        assert!(apply_standardizer(&m, &NormStats::identity(2)).is_err());
    }

    #[test]
    fn matches_two_pass_oracle() {
        let m = random_matrix(50, 6, 4.0, 3);
        let s = fit_standardizer(&m, 0.1).unwrap();
        let out = apply_standardizer(&m, &s).unwrap();
        for j in 0..6 {
            let (mean, var) = column_stats(&m, j);
            for i in 0..m.n() {
                let expected = (m.row(i)[j] - mean) / (var + VAR_EPSILON).sqrt();
                assert!((out.row(i)[j] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn standardized_columns_have_zero_mean_unit_variance() {
        // Column variances are well above eps, so var / (var + eps) is within 1e-6 of 1.
        let m = random_matrix(200, 8, 40.0, 4);
        let s = fit_standardizer(&m, 0.1).unwrap();
        let out = apply_standardizer(&m, &s).unwrap();
        for j in 0..8 {
            let (mean, var) = column_stats(&out, j);
            assert!(mean.abs() <= 1e-6, "mean {mean}");
            assert!((var - 1.0).abs() <= 1e-6, "var {var}");
        }
        // In general the fitted variance is var / (var + eps).
        let small = random_matrix(200, 4, 0.01, 5);
        let s = fit_standardizer(&small, 0.1).unwrap();
        let out = apply_standardizer(&small, &s).unwrap();
        for j in 0..4 {
            let (_, v_in) = column_stats(&small, j);
            let (_, v_out) = column_stats(&out, j);
            assert!((v_out - v_in / (v_in + VAR_EPSILON)).abs() < 1e-9);
        }
    }

    #[test]
    fn unstandardize_recovers_input() {
        let m = random_matrix(30, 5, 3.0, 6);
        let s = fit_standardizer(&m, 0.1).unwrap();
        let out = apply_standardizer(&m, &s).unwrap();
        let inverse = NormStats {
            mean: vec![0.0; 5],
            var: vec![1.0 - VAR_EPSILON; 5],
            gamma: s.var.iter().map(|v| (v + VAR_EPSILON).sqrt()).collect(),
            beta: s.mean.clone(),
            momentum: 0.0,
            clamped: vec![],
        };
        let back = apply_standardizer(&out, &inverse).unwrap();
        for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}
