//! Clustering metrics against ground truth: Hungarian-matched accuracy, NMI and ARI.

mod hungarian;

pub use hungarian::{hungarian, Assignment};

use crate::ensemble::{contingency, nmi, Labeling};
use crate::error::{Error, Result};

/// Accuracy under the best one-to-one map from predicted clusters to classes.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedAccuracy {
    pub acc: f64,
    /// `(predicted id, ground-truth id)` pairs.
    pub matching: Vec<(u32, u32)>,
}

pub fn clustering_accuracy(pred: &Labeling, gt: &Labeling) -> Result<MatchedAccuracy> {
    let table = contingency(pred, gt)?;
    let cost: Vec<f64> = table.counts.iter().map(|&c| -(c as f64)).collect();
    let assignment = hungarian(&cost, table.k_a, table.k_b)?;
    let (_, pred_ids) = pred.dense();
    let (_, gt_ids) = gt.dense();
    let matched: u64 = assignment.pairs.iter().map(|&(h, l)| table.get(h, l)).sum();
    Ok(MatchedAccuracy {
        acc: matched as f64 / table.n as f64,
        matching: assignment
            .pairs
            .iter()
            .map(|&(h, l)| (pred_ids[h], gt_ids[l]))
            .collect(),
    })
}

fn comb2(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index (permutation model). Two identical trivial partitions,
/// where the index is 0/0, score 1.
pub fn ari(a: &Labeling, b: &Labeling) -> Result<f64> {
    if a.n() < 2 {
        return Err(Error::InvalidArgument(
            "ARI needs at least two samples".into(),
        ));
    }
    let t = contingency(a, b)?;
    let index: f64 = t.counts.iter().map(|&c| comb2(c)).sum();
    let sum_a: f64 = t.row_sums.iter().map(|&c| comb2(c)).sum();
    let sum_b: f64 = t.col_sums.iter().map(|&c| comb2(c)).sum();
    let expected = sum_a * sum_b / comb2(t.n);
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub matching: Vec<(u32, u32)>,
}

pub fn evaluate(pred: &Labeling, gt: &Labeling) -> Result<MetricsReport> {
    let m = clustering_accuracy(pred, gt)?;
    Ok(MetricsReport {
        acc: m.acc,
        nmi: nmi(pred, gt)?,
        ari: ari(pred, gt)?,
        matching: m.matching,
    })
}

impl MetricsReport {
    /// `acc=..`, `nmi=..`, `ari=..` as percentages with two decimals.
    pub fn key_values(&self) -> String {
        format!(
            "acc={:.2}\nnmi={:.2}\nari={:.2}\n",
            100.0 * self.acc,
            100.0 * self.nmi,
            100.0 * self.ari
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("ACC(%)  {:>6.2}\n", 100.0 * self.acc));
        s.push_str(&format!("NMI(%)  {:>6.2}\n", 100.0 * self.nmi));
        s.push_str(&format!("ARI(%)  {:>6.2}\n", 100.0 * self.ari));
        s.push_str("matching (predicted -> class):\n");
        for (p, g) in &self.matching {
            s.push_str(&format!("  {p} -> {g}\n"));
        }
        s.push('\n');
        s.push_str(&self.key_values());
        s
    }
}
