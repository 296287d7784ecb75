//! Adaptive nearest-neighbor sets.
//!
//! A sample's neighbor set holds every other sample whose cosine similarity to it
//! is at least `theta`. Sets smaller than `k_min` are replaced by the `k_min` most
//! similar samples. Sets are computed once, exhaustively, before training.

use std::path::Path;

use rayon::prelude::*;

use crate::binio::{read_file, Reader, Writer};
use crate::ensemble::Labeling;
use crate::error::{Error, Result};
use crate::featstore::EmbeddingMatrix;

const NEIGHBORS_MAGIC: &[u8; 4] = b"NNS1";

/// `dot(u, v) / (|u| |v|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!(
            "vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::InvalidArgument(
            "cosine similarity of a zero vector".into(),
        ));
    }
    Ok(cosine_with_norms(u, v, nu, nv))
}

#[inline]
fn norm(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
fn cosine_with_norms(u: &[f64], v: &[f64], nu: f64, nv: f64) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    (dot / (nu * nv)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSets {
    /// Per-sample neighbor indices, most similar first.
    pub sets: Vec<Vec<u32>>,
    /// Similarity threshold, `None` for sets not built by thresholding.
    pub theta: Option<f64>,
    pub k_min: usize,
}

impl NeighborSets {
    pub fn n(&self) -> usize {
        self.sets.len()
    }

    pub fn get(&self, i: usize) -> &[u32] {
        &self.sets[i]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = Writer::new(NEIGHBORS_MAGIC);
        w.len_u32(self.sets.len())?;
        for s in &self.sets {
            w.len_u32(s.len())?;
            for &j in s {
                w.u32(j);
            }
        }
        w.finish(path.as_ref())
    }

    /// The file holds only the sets, so `theta` and `k_min` come back unset.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = read_file(path)?;
        let mut r = Reader::new(path, &buf, NEIGHBORS_MAGIC)?;
        let n = r.usize()?;
        let mut sets = Vec::with_capacity(n);
        for i in 0..n {
            let count = r.usize()?;
            let set = (0..count).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            if let Some(&j) = set.iter().find(|&&j| j as usize >= n || j as usize == i) {
                return Err(r.error(Some(i), format!("invalid neighbor index {j}")));
            }
            sets.push(set);
        }
        r.expect_end()?;
        Ok(NeighborSets {
            sets,
            theta: None,
            k_min: 0,
        })
    }
}

/// Threshold-then-fallback neighbor sets over all pairs.
///
/// Ties in similarity are ordered by ascending sample index.
pub fn build_neighbor_sets(
    features: &EmbeddingMatrix,
    theta: f64,
    k_min: usize,
) -> Result<NeighborSets> {
    let n = features.n();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "neighbor mining needs n >= 2, got {n}"
        )));
    }
    if k_min == 0 {
        return Err(Error::InvalidArgument("k_min must be at least 1".into()));
    }
    if theta.is_nan() {
        return Err(Error::InvalidArgument("theta is NaN".into()));
    }
    let norms: Vec<f64> = features.rows().map(norm).collect();
    if let Some(i) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::InvalidArgument(format!("row {i} has zero norm")));
    }
    let floor = k_min.min(n - 1);
    let sets = (0..n)
        .into_par_iter()
        .map(|i| {
            let zi = features.row(i);
            let mut sims: Vec<(f64, u32)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    (
                        cosine_with_norms(zi, features.row(j), norms[i], norms[j]),
                        j as u32,
                    )
                })
                .collect();
            sims.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let above = sims.iter().take_while(|(s, _)| *s >= theta).count();
            sims.truncate(above.max(floor));
            sims.into_iter().map(|(_, j)| j).collect()
        })
        .collect();
    Ok(NeighborSets {
        sets,
        theta: Some(theta),
        k_min,
    })
}

/// Every other sample with the same label. Singleton classes get empty sets.
pub fn ground_truth_neighbors(labels: &Labeling) -> NeighborSets {
    let (dense, originals) = labels.dense();
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); originals.len()];
    for (i, &c) in dense.iter().enumerate() {
        members[c].push(i as u32);
    }
    let sets = dense
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            members[c]
                .iter()
                .copied()
                .filter(|&j| j as usize != i)
                .collect()
        })
        .collect();
    NeighborSets {
        sets,
        theta: None,
        k_min: 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborStats {
    pub avg_count: f64,
    /// Fraction of (anchor, neighbor) pairs sharing a label.
    pub pair_accuracy: f64,
    pub empty_sets: usize,
}

pub fn neighbor_accuracy(sets: &NeighborSets, labels: &Labeling) -> Result<NeighborStats> {
    if sets.n() != labels.n() {
        return Err(Error::Dimension(format!(
            "{} neighbor sets but {} labels",
            sets.n(),
            labels.n()
        )));
    }
    let ids = labels.ids();
    let mut pairs = 0usize;
    let mut agree = 0usize;
    let mut empty = 0usize;
    for (i, s) in sets.sets.iter().enumerate() {
        if s.is_empty() {
            empty += 1;
        }
        pairs += s.len();
        agree += s.iter().filter(|&&j| ids[j as usize] == ids[i]).count();
    }
    if pairs == 0 {
        return Err(Error::InvalidArgument("all neighbor sets are empty".into()));
    }
    Ok(NeighborStats {
        avg_count: pairs as f64 / sets.n() as f64,
        pair_accuracy: agree as f64 / pairs as f64,
        empty_sets: empty,
    })
}

/// One row per threshold: `(theta, stats)`.
pub fn threshold_sweep(
    features: &EmbeddingMatrix,
    labels: &Labeling,
    thetas: &[f64],
    k_min: usize,
) -> Result<Vec<(f64, NeighborStats)>> {
    thetas
        .iter()
        .map(|&t| {
            Ok((
                t,
                neighbor_accuracy(&build_neighbor_sets(features, t, k_min)?, labels)?,
            ))
        })
        .collect()
}

/// Tab-separated `theta  avg_count  pair_accuracy` table with a trailing key=value block.
pub fn render_sweep(rows: &[(f64, NeighborStats)]) -> String {
    let mut s = String::from("theta\tavg_count\tpair_accuracy\n");
    for (t, st) in rows {
        s.push_str(&format!(
            "{t:.2}\t{:.1}\t{:.2}\n",
            st.avg_count,
            100.0 * st.pair_accuracy
        ));
    }
    s.push('\n');
    for (t, st) in rows {
        s.push_str(&format!(
            "avg_count@{t:.2}={:.1}\npair_accuracy@{t:.2}={:.2}\n",
            st.avg_count,
            100.0 * st.pair_accuracy
        ));
    }
    s
}
