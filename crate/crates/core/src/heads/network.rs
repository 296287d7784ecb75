use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::ensemble::Labeling;
use crate::error::{Error, Result};
use crate::featstore::{EmbeddingMatrix, NormStats};

/// One clustering head: an affine map `d -> C`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `C x d`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(c: usize, d: usize) -> Self {
        HeadParams {
            weight: vec![0.0; c * d],
            bias: vec![0.0; c],
        }
    }

    pub fn num_clusters(&self) -> usize {
        self.bias.len()
    }

    /// `W z + b` into `out`.
    pub fn logits_into(&self, z: &[f64], out: &mut [f64]) {
        let d = z.len();
        for (c, o) in out.iter_mut().enumerate() {
            let w = &self.weight[c * d..(c + 1) * d];
            *o = self.bias[c] + w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// The shared standardizer followed by `H` heads.
///
/// Only `norm.gamma` and `norm.beta` of the standardizer are trainable.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub norm: NormStats,
    pub heads: Vec<HeadParams>,
}

impl Network {
    pub(crate) fn init(norm: NormStats, h: usize, c: usize, std: f64, rng: &mut impl Rng) -> Self {
        let d = norm.dim();
        let normal = Normal::new(0.0, std).expect("init std is positive");
        let heads = (0..h)
            .map(|_| HeadParams {
                weight: (0..c * d).map(|_| normal.sample(rng)).collect(),
                bias: vec![0.0; c],
            })
            .collect();
        Network { norm, heads }
    }

    pub fn dim(&self) -> usize {
        self.norm.dim()
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.heads.first().map_or(0, HeadParams::num_clusters)
    }

    /// Same shapes, all trainable entries zero.
    pub fn zeros_like(&self) -> Self {
        let mut norm = self.norm.clone();
        norm.gamma.iter_mut().for_each(|g| *g = 0.0);
        norm.beta.iter_mut().for_each(|b| *b = 0.0);
        Network {
            norm,
            heads: self
                .heads
                .iter()
                .map(|h| HeadParams::zeros(h.num_clusters(), self.dim()))
                .collect(),
        }
    }

    /// Trainable blocks in a fixed order: gamma, beta, then `W_h`, `b_h` per head.
    /// The flag marks blocks subject to weight decay.
    pub fn blocks(&self) -> Vec<(&[f64], bool)> {
        let mut out: Vec<(&[f64], bool)> =
            vec![(&self.norm.gamma, false), (&self.norm.beta, false)];
        for h in &self.heads {
            out.push((&h.weight, true));
            out.push((&h.bias, false));
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(&mut [f64], bool)> {
        let mut out: Vec<(&mut [f64], bool)> =
            vec![(&mut self.norm.gamma, false), (&mut self.norm.beta, false)];
        for h in &mut self.heads {
            out.push((&mut h.weight, true));
            out.push((&mut h.bias, false));
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|(b, _)| b.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks()
            .into_iter()
            .flat_map(|(b, _)| b.iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut off = 0;
        for (b, _) in self.blocks_mut() {
            b.copy_from_slice(&flat[off..off + b.len()]);
            off += b.len();
        }
        Ok(())
    }

    pub(crate) fn same_shape(&self, other: &Network) -> bool {
        self.dim() == other.dim()
            && self.heads.len() == other.heads.len()
            && self
                .heads
                .iter()
                .zip(&other.heads)
                .all(|(a, b)| a.weight.len() == b.weight.len() && a.bias.len() == b.bias.len())
    }

    /// Student-side probabilities of one head for one raw feature row.
    pub fn probabilities(&self, head: usize, z: &[f64], tau: f64) -> Result<Vec<f64>> {
        head_forward(&self.heads[head], &self.norm, z, tau)
    }

    /// Argmax labeling of `features` under one head.
    pub fn predict(&self, head: usize, features: &EmbeddingMatrix) -> Result<Labeling> {
        if head >= self.heads.len() {
            return Err(Error::InvalidArgument(format!(
                "head {head} out of range for {} heads",
                self.heads.len()
            )));
        }
        if features.d() != self.dim() {
            return Err(Error::Dimension(format!(
                "network expects d = {}, features have d = {}",
                self.dim(),
                features.d()
            )));
        }
        let params = &self.heads[head];
        let mut zhat = vec![0.0; self.dim()];
        let mut logits = vec![0.0; params.num_clusters()];
        let classes: Vec<usize> = features
            .rows()
            .map(|row| {
                self.norm.standardize_into(row, &mut zhat);
                params.logits_into(&zhat, &mut logits);
                argmax(&logits)
            })
            .collect();
        Labeling::from_classes(&classes)
    }
}

/// `softmax((W standardize(z) + b) / tau)`.
pub fn head_forward(
    params: &HeadParams,
    norm: &NormStats,
    z: &[f64],
    tau: f64,
) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    if z.len() != norm.dim() || params.weight.len() != params.num_clusters() * z.len() {
        return Err(Error::Dimension(format!(
            "feature of length {} for a head of shape {}x{}",
            z.len(),
            params.num_clusters(),
            norm.dim()
        )));
    }
    let mut zhat = vec![0.0; z.len()];
    norm.standardize_into(z, &mut zhat);
    let mut logits = vec![0.0; params.num_clusters()];
    params.logits_into(&zhat, &mut logits);
    logits.iter_mut().for_each(|l| *l /= tau);
    if let Some(l) = logits.iter().find(|l| !l.is_finite()) {
        return Err(Error::NonFinite(format!("head logit {l}")));
    }
    softmax_in_place(&mut logits);
    Ok(logits)
}

/// First index of the maximum.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    v.iter_mut().for_each(|x| *x /= s);
}

/// Log-softmax into `out`; returns nothing, `out` has the same length as `v`.
pub(crate) fn log_softmax_into(v: &[f64], out: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    for (o, x) in out.iter_mut().zip(v) {
        *o = x - lse;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_head_is_uniform() {
        let p = head_forward(
            &HeadParams::zeros(4, 3),
            &NormStats::identity(3),
            &[1.0, -2.0, 0.5],
            0.1,
        )
        .unwrap();
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn small_temperature_is_nearly_one_hot() {
        let h = HeadParams {
            weight: vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5],
            bias: vec![0.0; 3],
        };
        let p = head_forward(&h, &NormStats::identity(2), &[0.3, 0.1], 1e-3).unwrap();
        assert!(p[0] >= 0.999);
    }

    #[test]
    fn matches_log_sum_exp_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut norm = NormStats::identity(5);
        norm.mean = vec![0.1, -0.2, 0.3, 0.0, 1.0];
        norm.var = vec![2.0, 0.5, 1.0, 3.0, 0.25];
        let net = Network::init(norm.clone(), 1, 4, 1.0, &mut rng);
        let z = [0.4, -1.0, 2.0, 0.0, 0.7];
        let p = net.probabilities(0, &z, 0.5).unwrap();
        // Independent oracle: explicit standardization, logits, log-sum-exp.
        let h = &net.heads[0];
        let zs: Vec<f64> = (0..5)
            .map(|j| (z[j] - norm.mean[j]) / (norm.var[j] + 1e-5).sqrt())
            .collect();
        let logits: Vec<f64> = (0..4)
            .map(|c| ((0..5).map(|j| h.weight[c * 5 + j] * zs[j]).sum::<f64>() + h.bias[c]) / 0.5)
            .collect();
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        for c in 0..4 {
            assert!((p[c] - (logits[c] - lse).exp()).abs() < 1e-10);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bad_inputs() {
        let h = HeadParams::zeros(2, 2);
        assert!(head_forward(&h, &NormStats::identity(2), &[1.0], 0.1).is_err());
        assert!(head_forward(&h, &NormStats::identity(2), &[1.0, 1.0], 0.0).is_err());
        let big = HeadParams {
            weight: vec![f64::MAX, 0.0, 0.0, 0.0],
            bias: vec![0.0; 2],
        };
        assert!(head_forward(&big, &NormStats::identity(2), &[10.0, 0.0], 1e-3).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let net = Network::init(NormStats::identity(3), 2, 4, 0.1, &mut rng);
        let flat = net.to_flat();
        assert_eq!(flat.len(), 3 + 3 + 2 * (12 + 4));
        let mut other = net.zeros_like();
        other.set_flat(&flat).unwrap();
        assert_eq!(other, net);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.25; 4]), 0);
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
    }
}
