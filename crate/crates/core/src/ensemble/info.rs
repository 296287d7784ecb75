//! Count-form information estimates between labelings.
//!
//! Mutual information and entropy are kept as *counts* rather than
//! probabilities (no `1/n` factor), and the entropy keeps its sign:
//!
//! ```text
//! MI(a, b) = sum_{h,l} n_hl * ln(n * n_hl / (n_h * n_l))
//! H(a)     = sum_h n_h * ln(n_h / n)          (<= 0)
//! NMI(a,b) = MI(a, b) / sqrt(H(a) * H(b))
//! ```
//!
//! The `n` factors cancel in the ratio, so NMI agrees with the usual
//! geometric-mean normalized mutual information.

use super::Labeling;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    /// `k_a x k_b`, row-major, rows indexed by canonical cluster of `a`.
    pub counts: Vec<u64>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub k_a: usize,
    pub k_b: usize,
    pub n: u64,
}

impl ContingencyTable {
    pub fn get(&self, h: usize, l: usize) -> u64 {
        self.counts[h * self.k_b + l]
    }
}

/// Co-occurrence counts of the canonical clusters of `a` (rows) and `b` (columns).
pub fn contingency(a: &Labeling, b: &Labeling) -> Result<ContingencyTable> {
    if a.n() != b.n() {
        return Err(Error::Dimension(format!(
            "labelings have {} and {} samples",
            a.n(),
            b.n()
        )));
    }
    let (da, oa) = a.dense();
    let (db, ob) = b.dense();
    let (k_a, k_b) = (oa.len(), ob.len());
    let mut counts = vec![0u64; k_a * k_b];
    let mut row_sums = vec![0u64; k_a];
    let mut col_sums = vec![0u64; k_b];
    for (&h, &l) in da.iter().zip(&db) {
        counts[h * k_b + l] += 1;
        row_sums[h] += 1;
        col_sums[l] += 1;
    }
    Ok(ContingencyTable {
        counts,
        row_sums,
        col_sums,
        k_a,
        k_b,
        n: a.n() as u64,
    })
}

pub fn mutual_information(table: &ContingencyTable) -> f64 {
    let n = u128::from(table.n);
    let mut mi = 0.0;
    for h in 0..table.k_a {
        for l in 0..table.k_b {
            let nhl = table.get(h, l);
            if nhl == 0 {
                continue;
            }
            let num = n * u128::from(nhl);
            let den = u128::from(table.row_sums[h]) * u128::from(table.col_sums[l]);
            mi += nhl as f64 * (num as f64 / den as f64).ln();
        }
    }
    mi
}

pub fn entropy_count(labeling: &Labeling) -> f64 {
    let (dense, originals) = labeling.dense();
    let mut sizes = vec![0u64; originals.len()];
    for c in dense {
        sizes[c] += 1;
    }
    entropy_from_sizes(&sizes, labeling.n() as u64)
}

fn entropy_from_sizes(sizes: &[u64], n: u64) -> f64 {
    sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| s as f64 * (s as f64 / n as f64).ln())
        .sum()
}

/// Normalized mutual information in `[0, 1]`; 0 when either labeling has a single cluster.
pub fn nmi(a: &Labeling, b: &Labeling) -> Result<f64> {
    let table = contingency(a, b)?;
    Ok(nmi_from_table(&table))
}

pub(crate) fn nmi_from_table(table: &ContingencyTable) -> f64 {
    let ha = entropy_from_sizes(&table.row_sums, table.n);
    let hb = entropy_from_sizes(&table.col_sums, table.n);
    if ha == 0.0 || hb == 0.0 {
        return 0.0;
    }
    let mi = mutual_information(table);
    (mi / (ha * hb).sqrt()).clamp(0.0, 1.0)
}

/// Sum of NMI between `candidate` and every input labeling.
pub fn anmi(candidate: &Labeling, inputs: &[Labeling]) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument(
            "anmi needs at least one input labeling".into(),
        ));
    }
    inputs.iter().map(|l| nmi(candidate, l)).sum()
}
