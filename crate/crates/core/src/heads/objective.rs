use rayon::prelude::*;

use super::network::{argmax, log_softmax_into, Network};
use crate::error::{Error, Result};

/// Marginal entries are raised to this before entering a logarithm.
pub const MARGINAL_FLOOR: f64 = 1e-6;
const CE_FLOOR: f64 = 1e-12;

/// Sinkhorn-Knopp centering of a `b x c` batch of (temperature-scaled) logits.
///
/// Starts from the row softmax, then alternates column normalization (columns sum
/// to `b / c`) and row normalization (rows sum to 1) `iters` times. `iters = 0`
/// returns the plain row softmax.
pub fn sinkhorn_knopp(logits: &[f64], b: usize, c: usize, iters: usize) -> Result<Vec<f64>> {
    if b == 0 || c == 0 || logits.len() != b * c {
        return Err(Error::Dimension(format!(
            "{} logits for a {b}x{c} batch",
            logits.len()
        )));
    }
    let mut q = vec![0.0; b * c];
    for (row, out) in logits.chunks_exact(c).zip(q.chunks_exact_mut(c)) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::NonFinite(format!("teacher logit row with max {m}")));
        }
        for (o, &l) in out.iter_mut().zip(row) {
            *o = (l - m).exp();
        }
    }
    normalize_rows(&mut q, c);
    let col_target = b as f64 / c as f64;
    let mut col = vec![0.0; c];
    for _ in 0..iters {
        col.iter_mut().for_each(|s| *s = 0.0);
        for row in q.chunks_exact(c) {
            col.iter_mut().zip(row).for_each(|(s, x)| *s += x);
        }
        for row in q.chunks_exact_mut(c) {
            for (x, s) in row.iter_mut().zip(&col) {
                if *s > 0.0 {
                    *x *= col_target / s;
                }
            }
        }
        normalize_rows(&mut q, c);
    }
    Ok(q)
}

fn normalize_rows(q: &mut [f64], c: usize) {
    for row in q.chunks_exact_mut(c) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
    }
}

/// Weighted, symmetrized pointwise mutual information between an anchor and
/// its neighbor:
///
/// `-w/2 * [log sum_c (qs_x qt_xp)^beta / p + log sum_c (qs_xp qt_x)^beta / p]`
/// with `w = sum_c qt_x qt_xp`.
pub fn temi_pair_loss(
    qs_x: &[f64],
    qs_xp: &[f64],
    qt_x: &[f64],
    qt_xp: &[f64],
    p_c: &[f64],
    beta: f64,
) -> Result<f64> {
    let c = p_c.len();
    if [qs_x.len(), qs_xp.len(), qt_x.len(), qt_xp.len()]
        .iter()
        .any(|&l| l != c)
    {
        return Err(Error::Dimension(
            "distributions of different lengths".into(),
        ));
    }
    if p_c.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::InvalidArgument(
            "marginal has a non-positive entry".into(),
        ));
    }
    let w: f64 = qt_x.iter().zip(qt_xp).map(|(a, b)| a * b).sum();
    if w == 0.0 {
        return Ok(0.0);
    }
    let inner = |s: &[f64], t: &[f64]| -> f64 {
        (0..c)
            .map(|i| (s[i] * t[i]).powf(beta) / p_c[i])
            .sum::<f64>()
            .ln()
    };
    let loss = -0.5 * w * (inner(qs_x, qt_xp) + inner(qs_xp, qt_x));
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("pair loss {loss}")));
    }
    Ok(loss)
}

/// `-log qs_x(argmax qt_xp)`, with the probability floored at 1e-12.
pub fn ce_term(qs_x: &[f64], qt_xp: &[f64]) -> f64 {
    -qs_x[argmax(qt_xp)].max(CE_FLOOR).ln()
}

/// `lambda_max * (1 - cos(pi * step / total)) / 2`.
pub fn lambda_schedule(step: usize, total_steps: usize, lambda_max: f64) -> f64 {
    let t = step.min(total_steps) as f64 / total_steps.max(1) as f64;
    lambda_max * (1.0 - (std::f64::consts::PI * t).cos()) / 2.0
}

/// Elementwise mean of teacher distributions.
pub fn smooth_teacher(qt_list: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = qt_list
        .first()
        .ok_or_else(|| Error::InvalidArgument("no teacher outputs to smooth".into()))?;
    let mut out = vec![0.0; first.len()];
    for q in qt_list {
        if q.len() != out.len() {
            return Err(Error::Dimension(
                "teacher outputs of different lengths".into(),
            ));
        }
        out.iter_mut().zip(q).for_each(|(o, x)| *o += x);
    }
    let m = qt_list.len() as f64;
    out.iter_mut().for_each(|o| *o /= m);
    Ok(out)
}

/// Constants of one loss evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LossParams {
    pub tau_student: f64,
    pub beta: f64,
    pub lambda: f64,
}

/// One head's view of a batch: the student input of the drawn neighbor and the
/// (fixed) teacher targets, all `b` rows.
#[derive(Debug, Clone)]
pub struct HeadBatch {
    /// Normalized (pre-affine) neighbor features, `b x d`.
    pub u_xp: Vec<f64>,
    /// Teacher distributions of anchors and neighbors, `b x C` each.
    pub qt_x: Vec<f64>,
    pub qt_xp: Vec<f64>,
}

/// Mean over heads of the per-head batch-mean composite loss, its gradient with
/// respect to every trainable parameter of `student`, and the per-head losses.
///
/// `u_x` holds the normalized (pre-affine) anchor features, `b x d`.
pub fn composite_loss_and_grad(
    student: &Network,
    u_x: &[f64],
    batches: &[HeadBatch],
    marginals: &[Vec<f64>],
    lp: LossParams,
) -> Result<(f64, Vec<f64>, Network)> {
    let d = student.dim();
    let h_count = student.num_heads();
    if batches.len() != h_count || marginals.len() != h_count {
        return Err(Error::Dimension(format!(
            "{} head batches and {} marginals for {h_count} heads",
            batches.len(),
            marginals.len()
        )));
    }
    if d == 0 || u_x.is_empty() || !u_x.len().is_multiple_of(d) {
        return Err(Error::Dimension(format!(
            "anchor block of {} values for d = {d}",
            u_x.len()
        )));
    }
    let b = u_x.len() / d;
    let zx = affine(u_x, &student.norm.gamma, &student.norm.beta);

    let per_head: Vec<HeadGrad> = (0..h_count)
        .into_par_iter()
        .map(|h| head_loss_and_grad(student, h, &zx, u_x, &batches[h], &marginals[h], lp, b))
        .collect::<Result<_>>()?;

    let scale = 1.0 / h_count as f64;
    let mut grad = student.zeros_like();
    let mut losses = Vec::with_capacity(h_count);
    for (h, hg) in per_head.into_iter().enumerate() {
        losses.push(hg.loss);
        grad.heads[h].weight = hg.weight.into_iter().map(|g| g * scale).collect();
        grad.heads[h].bias = hg.bias.into_iter().map(|g| g * scale).collect();
        for j in 0..d {
            grad.norm.gamma[j] += hg.gamma[j] * scale;
            grad.norm.beta[j] += hg.beta[j] * scale;
        }
    }
    let total = losses.iter().sum::<f64>() * scale;
    Ok((total, losses, grad))
}

fn affine(u: &[f64], gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let d = gamma.len();
    let mut z = u.to_vec();
    for row in z.chunks_exact_mut(d) {
        for j in 0..d {
            row[j] = row[j] * gamma[j] + beta[j];
        }
    }
    z
}

struct HeadGrad {
    loss: f64,
    weight: Vec<f64>,
    bias: Vec<f64>,
    gamma: Vec<f64>,
    beta: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn head_loss_and_grad(
    net: &Network,
    h: usize,
    zx: &[f64],
    u_x: &[f64],
    batch: &HeadBatch,
    marginal: &[f64],
    lp: LossParams,
    b: usize,
) -> Result<HeadGrad> {
    let d = net.dim();
    let params = &net.heads[h];
    let c = params.num_clusters();
    if batch.u_xp.len() != b * d
        || batch.qt_x.len() != b * c
        || batch.qt_xp.len() != b * c
        || marginal.len() != c
    {
        return Err(Error::Dimension(format!(
            "head {h}: batch blocks do not match b = {b}, d = {d}, C = {c}"
        )));
    }
    let zxp = affine(&batch.u_xp, &net.norm.gamma, &net.norm.beta);
    let log_p: Vec<f64> = marginal
        .iter()
        .map(|p| p.max(MARGINAL_FLOOR).ln())
        .collect();
    let inv_tau = 1.0 / lp.tau_student;

    let mut g = HeadGrad {
        loss: 0.0,
        weight: vec![0.0; c * d],
        bias: vec![0.0; c],
        gamma: vec![0.0; d],
        beta: vec![0.0; d],
    };
    let mut logits = vec![0.0; c];
    let mut lq_x = vec![0.0; c];
    let mut lq_xp = vec![0.0; c];
    let mut dl_x = vec![0.0; c];
    let mut dl_xp = vec![0.0; c];
    let mut r = vec![0.0; c];
    let mut dz = vec![0.0; d];
    let inv_b = 1.0 / b as f64;

    for i in 0..b {
        let z_i = &zx[i * d..(i + 1) * d];
        let zp_i = &zxp[i * d..(i + 1) * d];
        let qt_x = &batch.qt_x[i * c..(i + 1) * c];
        let qt_xp = &batch.qt_xp[i * c..(i + 1) * c];

        params.logits_into(z_i, &mut logits);
        logits.iter_mut().for_each(|l| *l *= inv_tau);
        log_softmax_into(&logits, &mut lq_x);
        params.logits_into(zp_i, &mut logits);
        logits.iter_mut().for_each(|l| *l *= inv_tau);
        log_softmax_into(&logits, &mut lq_xp);

        dl_x.iter_mut().for_each(|v| *v = 0.0);
        dl_xp.iter_mut().for_each(|v| *v = 0.0);
        let mut loss = 0.0;

        let w: f64 = qt_x.iter().zip(qt_xp).map(|(a, b)| a * b).sum();
        if w > 0.0 {
            // d/dlogits of log sum_c (q_c t_c)^beta / p_c is beta (r - q), r the normalized summands.
            for (lq, t, dl) in [(&lq_x, qt_xp, &mut dl_x), (&lq_xp, qt_x, &mut dl_xp)] {
                for k in 0..c {
                    r[k] = if t[k] > 0.0 {
                        lp.beta * (lq[k] + t[k].ln()) - log_p[k]
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = r.iter().map(|x| (x - m).exp()).sum();
                let log_sum = m + s.ln();
                loss -= 0.5 * w * log_sum;
                for k in 0..c {
                    let rk = (r[k] - m).exp() / s;
                    dl[k] -= 0.5 * w * lp.beta * (rk - lq[k].exp());
                }
            }
        }

        if lp.lambda != 0.0 {
            let target = argmax(qt_xp);
            let lq = lq_x[target];
            if lq >= CE_FLOOR.ln() {
                loss -= lp.lambda * lq;
                for k in 0..c {
                    dl_x[k] += lp.lambda * lq_x[k].exp();
                }
                dl_x[target] -= lp.lambda;
            } else {
                loss -= lp.lambda * CE_FLOOR.ln();
            }
        }
        g.loss += loss * inv_b;

        for (dl, z, u) in [
            (&dl_x, z_i, &u_x[i * d..(i + 1) * d]),
            (&dl_xp, zp_i, &batch.u_xp[i * d..(i + 1) * d]),
        ] {
            dz.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..c {
                let ds = dl[k] * inv_tau * inv_b;
                if ds == 0.0 {
                    continue;
                }
                g.bias[k] += ds;
                let w_row = &params.weight[k * d..(k + 1) * d];
                let g_row = &mut g.weight[k * d..(k + 1) * d];
                for j in 0..d {
                    g_row[j] += ds * z[j];
                    dz[j] += ds * w_row[j];
                }
            }
            for j in 0..d {
                g.gamma[j] += dz[j] * u[j];
                g.beta[j] += dz[j];
            }
        }
    }
    Ok(g)
}
