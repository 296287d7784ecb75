use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::TrainConfig;
use super::network::Network;
use super::objective::{
    composite_loss_and_grad, lambda_schedule, sinkhorn_knopp, HeadBatch, LossParams,
};
use crate::ensemble::Labeling;
use crate::error::{Error, Result};
use crate::featstore::{fit_standardizer, EmbeddingMatrix};
use crate::neighbors::NeighborSets;

const INIT_STD: f64 = 0.02;
const MARGINAL_MOMENTUM: f64 = 0.9;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates, laid out like [`Network::to_flat`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        AdamState {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    /// One AdamW step. Weight decay is decoupled and applies only to blocks
    /// flagged for it (the head weight matrices).
    pub fn update(
        &mut self,
        params: &mut Network,
        grad: &Network,
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        if !params.same_shape(grad) || self.m.len() != params.num_params() {
            return Err(Error::Dimension(
                "optimizer state does not match the network".into(),
            ));
        }
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        let mut off = 0;
        for ((p, decay), (g, _)) in params.blocks_mut().into_iter().zip(grad.blocks()) {
            let m = &mut self.m[off..off + p.len()];
            let v = &mut self.v[off..off + p.len()];
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                if decay {
                    p[i] -= lr * weight_decay * p[i];
                }
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
            off += p.len();
        }
        Ok(())
    }
}

/// `teacher <- momentum * teacher + (1 - momentum) * student` over all trainable entries.
pub fn ema_update(teacher: &mut Network, student: &Network, momentum: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&momentum) {
        return Err(Error::InvalidArgument(format!(
            "momentum must be in [0, 1], got {momentum}"
        )));
    }
    if !teacher.same_shape(student) {
        return Err(Error::Dimension("teacher and student shapes differ".into()));
    }
    if momentum == 1.0 {
        return Ok(());
    }
    for ((t, _), (s, _)) in teacher.blocks_mut().into_iter().zip(student.blocks()) {
        for (a, b) in t.iter_mut().zip(s) {
            *a = momentum * *a + (1.0 - momentum) * b;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadBank {
    pub student: Network,
    pub teacher: Network,
    pub optimizer: AdamState,
    /// Per-head running estimate of the teacher class marginal.
    pub marginals: Vec<Vec<f64>>,
    pub config: TrainConfig,
}

impl HeadBank {
    pub fn num_heads(&self) -> usize {
        self.student.num_heads()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean composite loss of each head over the final epoch.
    pub per_head_loss: Vec<f64>,
    pub per_head_labeling: Vec<Labeling>,
    pub best_head: usize,
    /// Mean over heads of the per-epoch mean loss.
    pub epoch_loss: Vec<f64>,
}

impl TrainReport {
    pub fn to_text(&self) -> String {
        let mut s = String::from("head\tloss\tclusters\n");
        for (h, (l, lab)) in self
            .per_head_loss
            .iter()
            .zip(&self.per_head_labeling)
            .enumerate()
        {
            let mark = if h == self.best_head { "\t*" } else { "" };
            s.push_str(&format!("{h}\t{l:.6}\t{}{mark}\n", lab.k()));
        }
        if !self.epoch_loss.is_empty() {
            s.push_str("\nepoch\tmean_loss\n");
            for (e, l) in self.epoch_loss.iter().enumerate() {
                s.push_str(&format!("{e}\t{l:.6}\n"));
            }
        }
        s.push('\n');
        s.push_str(&format!("num_heads={}\n", self.per_head_loss.len()));
        s.push_str(&format!("best_head={}\n", self.best_head));
        s.push_str(&format!(
            "best_loss={:.6}\n",
            self.per_head_loss[self.best_head]
        ));
        s
    }
}

/// Index of the smallest loss; ties go to the lowest index.
pub fn best_head(losses: &[f64]) -> usize {
    let mut best = 0;
    for (i, &l) in losses.iter().enumerate().skip(1) {
        if l < losses[best] {
            best = i;
        }
    }
    best
}

/// Argmax labeling of one student head.
pub fn predict_labeling(
    bank: &HeadBank,
    head: usize,
    features: &EmbeddingMatrix,
) -> Result<Labeling> {
    bank.student.predict(head, features)
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    sets: &'a NeighborSets,
    /// Normalized (pre-affine) features, `n x d`.
    u: Vec<f64>,
    d: usize,
}

impl Trainer<'_> {
    fn gather(&self, idx: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            out.extend_from_slice(&self.u[i * self.d..(i + 1) * self.d]);
        }
        out
    }

    /// Sinkhorn-centered teacher distributions of head `h` for normalized rows `u`.
    fn teacher_probs(&self, teacher: &Network, h: usize, u: &[f64]) -> Result<Vec<f64>> {
        let d = self.d;
        let params = &teacher.heads[h];
        let c = params.num_clusters();
        let b = u.len() / d;
        let mut logits = vec![0.0; b * c];
        let mut z = vec![0.0; d];
        let inv_tau = 1.0 / self.cfg.tau_teacher;
        for (row, out) in u.chunks_exact(d).zip(logits.chunks_exact_mut(c)) {
            for j in 0..d {
                z[j] = row[j] * teacher.norm.gamma[j] + teacher.norm.beta[j];
            }
            params.logits_into(&z, out);
            out.iter_mut().for_each(|l| *l *= inv_tau);
        }
        sinkhorn_knopp(&logits, b, c, self.cfg.sk_iters)
    }

    /// Builds one head's batch from `m` partner lists (the first is the student partner).
    fn head_batch(
        &self,
        teacher: &Network,
        h: usize,
        u_x: &[f64],
        partners: &[Vec<usize>],
    ) -> Result<HeadBatch> {
        let qt_x = self.teacher_probs(teacher, h, u_x)?;
        let u_xp = self.gather(&partners[0]);
        let mut qt_xp = self.teacher_probs(teacher, h, &u_xp)?;
        if partners.len() > 1 {
            for p in &partners[1..] {
                let q = self.teacher_probs(teacher, h, &self.gather(p))?;
                qt_xp.iter_mut().zip(&q).for_each(|(a, b)| *a += b);
            }
            let m = partners.len() as f64;
            qt_xp.iter_mut().for_each(|a| *a /= m);
        }
        Ok(HeadBatch { u_xp, qt_x, qt_xp })
    }
}

/// Trains `cfg.num_heads` clustering heads on `features` using neighbor pairs drawn from `sets`.
///
/// Samples with an empty neighbor set are never used as anchors.
pub fn train_heads(
    features: &EmbeddingMatrix,
    sets: &NeighborSets,
    cfg: &TrainConfig,
) -> Result<(HeadBank, TrainReport)> {
    cfg.validate()?;
    let (n, d) = (features.n(), features.d());
    if sets.n() != n {
        return Err(Error::Dimension(format!(
            "{} neighbor sets for {n} samples",
            sets.n()
        )));
    }
    if let Some((i, _)) = sets
        .sets
        .iter()
        .enumerate()
        .find(|(i, s)| s.iter().any(|&j| j as usize >= n || j as usize == *i))
    {
        return Err(Error::InvalidArgument(format!(
            "neighbor set of sample {i} has an invalid index"
        )));
    }
    let anchors: Vec<usize> = (0..n).filter(|&i| !sets.sets[i].is_empty()).collect();
    if anchors.is_empty() {
        return Err(Error::InvalidArgument("every neighbor set is empty".into()));
    }

    let norm = fit_standardizer(features, 0.0)?;
    let mut u = vec![0.0; n * d];
    for (row, out) in features.rows().zip(u.chunks_exact_mut(d)) {
        norm.normalize_into(row, out);
    }
    let trainer = Trainer { cfg, sets, u, d };

    let (h_count, c) = (cfg.num_heads, cfg.num_clusters);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut student = Network::init(norm, h_count, c, INIT_STD, &mut rng);
    let mut teacher = student.clone();
    let mut optimizer = AdamState::new(student.num_params());
    let mut marginals = vec![vec![1.0 / c as f64; c]; h_count];
    let mut head_rngs: Vec<ChaCha8Rng> = (0..h_count)
        .map(|h| {
            let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
            r.set_stream(h as u64 + 1);
            r
        })
        .collect();

    let batch = cfg.batch_size.min(anchors.len());
    let per_epoch = anchors.len().div_ceil(batch);
    let total_steps = cfg.epochs * per_epoch;
    let warmup_steps = cfg.warmup_epochs * per_epoch;
    let mut order = anchors.clone();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut per_head_loss = vec![0.0; h_count];
    let mut step = 0usize;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut acc = vec![0.0; h_count];
        for idx in order.chunks(batch) {
            let lr = if warmup_steps > 0 {
                cfg.lr * ((step + 1) as f64 / warmup_steps as f64).min(1.0)
            } else {
                cfg.lr
            };
            let lp = LossParams {
                tau_student: cfg.tau_student,
                beta: cfg.beta,
                lambda: lambda_schedule(step, total_steps, cfg.lambda_max),
            };
            let u_x = trainer.gather(idx);
            let batches: Vec<HeadBatch> = head_rngs
                .par_iter_mut()
                .enumerate()
                .map(|(h, r)| {
                    let partners: Vec<Vec<usize>> = (0..cfg.smoothing_m)
                        .map(|_| {
                            idx.iter()
                                .map(|&i| {
                                    let s = &sets.sets[i];
                                    s[r.random_range(0..s.len())] as usize
                                })
                                .collect()
                        })
                        .collect();
                    trainer.head_batch(&teacher, h, &u_x, &partners)
                })
                .collect::<Result<_>>()?;

            let (_, losses, grad) =
                composite_loss_and_grad(&student, &u_x, &batches, &marginals, lp)?;
            if let Some((h, &loss)) = losses.iter().enumerate().find(|(_, l)| !l.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    head: h,
                    step,
                    loss,
                });
            }
            optimizer.update(&mut student, &grad, lr, cfg.weight_decay)?;
            ema_update(&mut teacher, &student, cfg.teacher_momentum)?;
            let inv_b = 1.0 / idx.len() as f64;
            for (p, hb) in marginals.iter_mut().zip(&batches) {
                let mut mean = vec![0.0; c];
                for row in hb.qt_x.chunks_exact(c) {
                    mean.iter_mut().zip(row).for_each(|(m, q)| *m += q * inv_b);
                }
                p.iter_mut()
                    .zip(&mean)
                    .for_each(|(p, m)| *p = MARGINAL_MOMENTUM * *p + (1.0 - MARGINAL_MOMENTUM) * m);
            }
            for (a, l) in acc.iter_mut().zip(&losses) {
                *a += l * idx.len() as f64 / anchors.len() as f64;
            }
            step += 1;
        }
        epoch_loss.push(acc.iter().sum::<f64>() / h_count as f64);
        per_head_loss = acc;
    }

    if cfg.epochs == 0 {
        per_head_loss = evaluation_loss(&trainer, &student, &teacher, &marginals, &anchors, batch)?;
    }

    let per_head_labeling = (0..h_count)
        .map(|h| student.predict(h, features))
        .collect::<Result<Vec<_>>>()?;
    let report = TrainReport {
        best_head: best_head(&per_head_loss),
        per_head_loss,
        per_head_labeling,
        epoch_loss,
    };
    let bank = HeadBank {
        student,
        teacher,
        optimizer,
        marginals,
        config: cfg.clone(),
    };
    Ok((bank, report))
}

/// Mean per-head loss with each anchor paired to its first neighbor and no CE term.
fn evaluation_loss(
    trainer: &Trainer,
    student: &Network,
    teacher: &Network,
    marginals: &[Vec<f64>],
    anchors: &[usize],
    batch: usize,
) -> Result<Vec<f64>> {
    let h_count = student.num_heads();
    let mut acc = vec![0.0; h_count];
    let lp = LossParams {
        tau_student: trainer.cfg.tau_student,
        beta: trainer.cfg.beta,
        lambda: 0.0,
    };
    for idx in anchors.chunks(batch) {
        let u_x = trainer.gather(idx);
        let partners = vec![idx
            .iter()
            .map(|&i| trainer.sets.sets[i][0] as usize)
            .collect::<Vec<_>>()];
        let batches = (0..h_count)
            .map(|h| trainer.head_batch(teacher, h, &u_x, &partners))
            .collect::<Result<Vec<_>>>()?;
        let (_, losses, _) = composite_loss_and_grad(student, &u_x, &batches, marginals, lp)?;
        for (a, l) in acc.iter_mut().zip(&losses) {
            *a += l * idx.len() as f64 / anchors.len() as f64;
        }
    }
    Ok(acc)
}
