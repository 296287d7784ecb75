//! Minimum-cost assignment (Kuhn-Munkres with row/column potentials, O(n^3)).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs, sorted by row. One pair per row when `rows <= cols`,
    /// one per column otherwise.
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

/// Solves the rectangular assignment problem for a row-major `rows x cols` cost matrix.
///
/// The matrix is zero-padded to a square; pairs involving padding are dropped.
pub fn hungarian(cost: &[f64], rows: usize, cols: usize) -> Result<Assignment> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(
            "assignment needs a non-empty cost matrix".into(),
        ));
    }
    if cost.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "{} costs for a {rows}x{cols} matrix",
            cost.len()
        )));
    }
    if let Some(c) = cost.iter().find(|c| !c.is_finite()) {
        return Err(Error::NonFinite(format!("cost {c}")));
    }
    let n = rows.max(cols);
    let at = |i: usize, j: usize| {
        if i < rows && j < cols {
            cost[i * cols + j]
        } else {
            0.0
        }
    };

    // 1-based potentials; p[j] is the row matched to column j, 0 = none.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter(|&j| p[j] > 0)
        .map(|j| (p[j] - 1, j - 1))
        .filter(|&(i, j)| i < rows && j < cols)
        .collect();
    pairs.sort_unstable();
    let total = pairs.iter().map(|&(i, j)| cost[i * cols + j]).sum();
    Ok(Assignment { pairs, cost: total })
}
