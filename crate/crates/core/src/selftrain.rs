//! One round of self-training: a linear probe fitted to consensus pseudo-labels.
//!
//! Checkpoint layout:
//!
//! ```text
//! "CLF1" | u32 len | config (TOML) | u32 C | u32 d | mean (d) | var (d)
//!        | W (C*d) | b (C) | u32 class id per output (C)
//! ```

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{read_file, Reader, Writer};
use crate::ensemble::Labeling;
use crate::error::{Error, Result};
use crate::featstore::{fit_standardizer, EmbeddingMatrix, NormStats};
use crate::heads::HeadParams;

const MAGIC: &[u8; 4] = b"CLF1";
const INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelfTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Learning rates tried; the one with the lowest final training loss wins.
    pub lrs: Vec<f64>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        SelfTrainConfig {
            steps: 12_500,
            batch_size: 256,
            lrs: vec![1e-3, 1e-2, 1e-1],
            momentum: 0.9,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

impl SelfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "batch_size must be at least 1".into(),
            ));
        }
        if self.lrs.is_empty() || self.lrs.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument(
                "lrs must be a non-empty list of finite rates >= 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument("weight_decay must be >= 0".into()));
        }
        Ok(())
    }
}

/// Linear classifier over standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub params: HeadParams,
    /// Mean and variance of the training features; the affine is the identity.
    pub norm: NormStats,
    /// Label id emitted for each output class.
    pub class_ids: Vec<u32>,
    pub config: SelfTrainConfig,
    /// Learning rate selected by the sweep.
    pub lr: f64,
    /// Mean cross-entropy on the training set after training.
    pub final_loss: f64,
}

/// Mean softmax cross-entropy of `params` on `b` standardized rows and its gradient.
pub fn cross_entropy_loss_and_grad(
    params: &HeadParams,
    z: &[f64],
    targets: &[usize],
) -> Result<(f64, HeadParams)> {
    let c = params.num_clusters();
    let b = targets.len();
    if b == 0 || c == 0 || !z.len().is_multiple_of(b) || params.weight.len() != c * (z.len() / b) {
        return Err(Error::Dimension(format!(
            "{} values for {b} rows and {c} classes",
            z.len()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= c) {
        return Err(Error::InvalidArgument(format!(
            "target class {t} out of range for {c} classes"
        )));
    }
    let d = z.len() / b;
    let mut grad = HeadParams::zeros(c, d);
    let mut logits = vec![0.0; c];
    let mut loss = 0.0;
    let inv_b = 1.0 / b as f64;
    for (row, &t) in z.chunks_exact(d).zip(targets) {
        params.logits_into(row, &mut logits);
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        loss += (m + s.ln() - logits[t]) * inv_b;
        for k in 0..c {
            let g = ((logits[k] - m).exp() / s - if k == t { 1.0 } else { 0.0 }) * inv_b;
            grad.bias[k] += g;
            let gw = &mut grad.weight[k * d..(k + 1) * d];
            for j in 0..d {
                gw[j] += g * row[j];
            }
        }
    }
    Ok((loss, grad))
}

/// Fits a linear probe to `pseudo` once per learning rate in `cfg.lrs` and keeps
/// the run with the lowest final training loss (ties go to the earlier rate).
pub fn self_train(
    features: &EmbeddingMatrix,
    pseudo: &Labeling,
    cfg: &SelfTrainConfig,
) -> Result<Classifier> {
    cfg.validate()?;
    if pseudo.n() != features.n() {
        return Err(Error::Dimension(format!(
            "{} pseudo-labels for {} samples",
            pseudo.n(),
            features.n()
        )));
    }
    let (targets, class_ids) = pseudo.dense();
    let norm = if features.n() >= 2 {
        fit_standardizer(features, 0.0)?
    } else {
        NormStats::identity(features.d())
    };
    let d = features.d();
    let mut z = vec![0.0; features.n() * d];
    for (row, out) in features.rows().zip(z.chunks_exact_mut(d)) {
        norm.normalize_into(row, out);
    }

    let runs: Vec<(HeadParams, f64)> = cfg
        .lrs
        .par_iter()
        .map(|&lr| sgd_run(&z, &targets, class_ids.len(), d, lr, cfg))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.1 < runs[best].1 {
            best = i;
        }
    }
    let (params, final_loss) = runs.into_iter().nth(best).expect("at least one rate");
    Ok(Classifier {
        params,
        norm,
        class_ids,
        config: cfg.clone(),
        lr: cfg.lrs[best],
        final_loss,
    })
}

fn sgd_run(
    z: &[f64],
    targets: &[usize],
    c: usize,
    d: usize,
    lr: f64,
    cfg: &SelfTrainConfig,
) -> Result<(HeadParams, f64)> {
    let n = targets.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, INIT_STD).expect("positive std");
    let mut params = HeadParams {
        weight: (0..c * d).map(|_| normal.sample(&mut rng)).collect(),
        bias: vec![0.0; c],
    };
    let mut vel = HeadParams::zeros(c, d);
    let batch = cfg.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut zb = Vec::with_capacity(batch * d);
    let mut tb = Vec::with_capacity(batch);
    for step in 0..cfg.steps {
        if cursor + batch > n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        zb.clear();
        tb.clear();
        for &i in &order[cursor..cursor + batch] {
            zb.extend_from_slice(&z[i * d..(i + 1) * d]);
            tb.push(targets[i]);
        }
        cursor += batch;
        let (loss, grad) = cross_entropy_loss_and_grad(&params, &zb, &tb)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                head: 0,
                step,
                loss,
            });
        }
        for (p, (v, g)) in params
            .weight
            .iter_mut()
            .zip(vel.weight.iter_mut().zip(&grad.weight))
        {
            *v = cfg.momentum * *v + g + cfg.weight_decay * *p;
            *p -= lr * *v;
        }
        for (p, (v, g)) in params
            .bias
            .iter_mut()
            .zip(vel.bias.iter_mut().zip(&grad.bias))
        {
            *v = cfg.momentum * *v + g;
            *p -= lr * *v;
        }
    }
    let (loss, _) = cross_entropy_loss_and_grad(&params, z, targets)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            head: 0,
            step: cfg.steps,
            loss,
        });
    }
    Ok((params, loss))
}

impl Classifier {
    pub fn dim(&self) -> usize {
        self.norm.dim()
    }

    /// Argmax class per row, reported with the pseudo-label ids.
    pub fn predict(&self, features: &EmbeddingMatrix) -> Result<Labeling> {
        if features.d() != self.dim() {
            return Err(Error::Dimension(format!(
                "classifier expects d = {}, features have d = {}",
                self.dim(),
                features.d()
            )));
        }
        let mut z = vec![0.0; self.dim()];
        let mut logits = vec![0.0; self.params.num_clusters()];
        let ids = features
            .rows()
            .map(|row| {
                self.norm.normalize_into(row, &mut z);
                self.params.logits_into(&z, &mut logits);
                let mut best = 0;
                for k in 1..logits.len() {
                    if logits[k] > logits[best] {
                        best = k;
                    }
                }
                self.class_ids[best]
            })
            .collect();
        Labeling::new(ids)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let config = toml::to_string(&self.config)
            .map_err(|e| Error::InvalidArgument(format!("config echo: {e}")))?;
        let mut w = Writer::new(MAGIC);
        w.len_u32(config.len())?;
        w.bytes(config.as_bytes());
        w.len_u32(self.params.num_clusters())?;
        w.len_u32(self.dim())?;
        w.f64s(&self.norm.mean);
        w.f64s(&self.norm.var);
        w.f64s(&self.params.weight);
        w.f64s(&self.params.bias);
        for &id in &self.class_ids {
            w.u32(id);
        }
        w.f64(self.lr);
        w.f64(self.final_loss);
        w.finish(path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = read_file(path)?;
        let mut r = Reader::new(path, &buf, MAGIC)?;
        let len = r.usize()?;
        let text = std::str::from_utf8(r.bytes(len)?)
            .map_err(|e| r.error(None, format!("config echo: {e}")))?;
        let config: SelfTrainConfig =
            toml::from_str(text).map_err(|e| r.error(None, format!("config echo: {e}")))?;
        let (c, d) = (r.usize()?, r.usize()?);
        if c == 0 || d == 0 {
            return Err(r.error(None, format!("empty classifier shape {c}x{d}")));
        }
        let mut norm = NormStats::identity(d);
        norm.mean = r.f64s(d)?;
        norm.var = r.f64s(d)?;
        let params = HeadParams {
            weight: r.f64s(c * d)?,
            bias: r.f64s(c)?,
        };
        let class_ids = (0..c).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        if class_ids.contains(&0) {
            return Err(r.error(None, "class id 0"));
        }
        let lr = r.f64()?;
        let final_loss = r.f64()?;
        r.expect_end()?;
        Ok(Classifier {
            params,
            norm,
            class_ids,
            config,
            lr,
            final_loss,
        })
    }
}
