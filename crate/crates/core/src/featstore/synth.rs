use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::EmbeddingMatrix;
use crate::ensemble::Labeling;
use crate::error::{Error, Result};

/// Parameters of a Gaussian-blob data set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    /// Ratio of inter-center distance to the within-cluster standard deviation, per `sqrt(d)`.
    pub separation: f64,
    pub seed: u64,
}

/// `k` isotropic unit-variance Gaussian clusters.
///
/// When `k <= d` the centers lie on mutually orthogonal random directions and every
/// pair of centers is exactly `separation * sqrt(d)` apart. Otherwise the directions
/// are independent random unit vectors and the distance holds only approximately.
/// Cluster sizes are balanced (sizes differ by at most one) and the rows are shuffled.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<(EmbeddingMatrix, Labeling)> {
    let SynthSpec {
        n,
        d,
        k,
        separation,
        seed,
    } = *spec;
    if n == 0 || d == 0 || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "n, d, k must be positive (got {n}, {d}, {k})"
        )));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds n = {n}")));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "separation must be > 0, got {separation}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };

    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(k);
    while directions.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| gauss()).collect();
        if k <= d {
            for u in &directions {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        directions.push(v);
    }
    // Orthonormal u_i, u_j: |r u_i - r u_j| = r sqrt(2) = separation sqrt(d).
    let radius = separation * (d as f64 / 2.0).sqrt();

    let mut order: Vec<usize> = (0..n).collect();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        labels.push(c as u32 + 1);
        for x in &directions[c] {
            data.push(radius * x + gauss());
        }
    }
    order.shuffle(&mut rng);
    let mut shuffled = Vec::with_capacity(n * d);
    let mut shuffled_labels = Vec::with_capacity(n);
    for &i in &order {
        shuffled.extend_from_slice(&data[i * d..(i + 1) * d]);
        shuffled_labels.push(labels[i]);
    }
    Ok((
        EmbeddingMatrix::new(n, d, shuffled)?,
        Labeling::new(shuffled_labels)?,
    ))
}
