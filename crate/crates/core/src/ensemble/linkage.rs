//! Weighted average-linkage agglomerative clustering (nearest-neighbor chain).
//!
//! Items carry a weight (the number of samples they stand for), so a group of
//! identical samples can be collapsed into one item without changing the result.

/// Clusters `m` weighted items into at most `k` groups.
///
/// `dist` is a full symmetric `m x m` matrix. Returns 0-based group indices
/// numbered in order of first appearance.
pub(crate) fn average_linkage_cut(dist: &[f64], weights: &[f64], k: usize) -> Vec<usize> {
    let m = weights.len();
    debug_assert_eq!(dist.len(), m * m);
    if m == 0 {
        return Vec::new();
    }
    let k = k.max(1);
    let merges = nn_chain(dist.to_vec(), weights.to_vec());

    let mut order: Vec<usize> = (0..merges.len()).collect();
    order.sort_by(|&a, &b| {
        merges[a]
            .height
            .total_cmp(&merges[b].height)
            .then(a.cmp(&b))
    });

    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &i in order.iter().take(m.saturating_sub(k)) {
        let (a, b) = (
            find(&mut parent, merges[i].a),
            find(&mut parent, merges[i].b),
        );
        debug_assert_ne!(a, b);
        parent[a.max(b)] = a.min(b);
    }

    let mut group_of_root = vec![usize::MAX; m];
    let mut next = 0;
    (0..m)
        .map(|i| {
            let r = find(&mut parent, i);
            if group_of_root[r] == usize::MAX {
                group_of_root[r] = next;
                next += 1;
            }
            group_of_root[r]
        })
        .collect()
}

struct Merge {
    a: usize,
    b: usize,
    /// Merge distance, raised to at least the heights of the merges it builds on
    /// so that sorting by height is a valid merge order.
    height: f64,
}

fn nn_chain(mut dist: Vec<f64>, mut size: Vec<f64>) -> Vec<Merge> {
    let m = size.len();
    let mut active = vec![true; m];
    let mut last_height = vec![f64::NEG_INFINITY; m];
    let mut merges = Vec::with_capacity(m.saturating_sub(1));
    let mut chain: Vec<usize> = Vec::with_capacity(m);
    let mut remaining = m;

    while remaining > 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).unwrap());
        }
        let a = *chain.last().unwrap();
        let prev = chain.len().checked_sub(2).map(|i| chain[i]);

        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for j in 0..m {
            if j == a || !active[j] {
                continue;
            }
            let d = dist[a * m + j];
            if d < best_d || best == usize::MAX {
                best_d = d;
                best = j;
            }
        }
        if let Some(p) = prev {
            if dist[a * m + p] <= best_d {
                best = p;
                best_d = dist[a * m + p];
            }
        }

        if Some(best) != prev {
            chain.push(best);
            continue;
        }

        chain.pop();
        chain.pop();
        let (keep, drop) = (a.min(best), a.max(best));
        let (wk, wd) = (size[keep], size[drop]);
        for j in 0..m {
            if !active[j] || j == keep || j == drop {
                continue;
            }
            let d = (wk * dist[keep * m + j] + wd * dist[drop * m + j]) / (wk + wd);
            dist[keep * m + j] = d;
            dist[j * m + keep] = d;
        }
        let height = best_d.max(last_height[keep]).max(last_height[drop]);
        merges.push(Merge {
            a: keep,
            b: drop,
            height,
        });
        last_height[keep] = height;
        size[keep] = wk + wd;
        active[drop] = false;
        remaining -= 1;
    }
    merges
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_dist(xs: &[f64]) -> Vec<f64> {
        let m = xs.len();
        let mut d = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                d[i * m + j] = (xs[i] - xs[j]).abs();
            }
        }
        d
    }

    // Naive O(m^3) average linkage: repeatedly merge the closest pair of groups,
    // with group distance the weighted mean of item distances.
    fn naive(dist: &[f64], w: &[f64], k: usize) -> Vec<usize> {
        let m = w.len();
        let mut groups: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
        let avg = |a: &[usize], b: &[usize]| {
            let mut s = 0.0;
            let mut t = 0.0;
            for &i in a {
                for &j in b {
                    s += w[i] * w[j] * dist[i * m + j];
                    t += w[i] * w[j];
                }
            }
            s / t
        };
        while groups.len() > k {
            let mut best = (0, 1, f64::INFINITY);
            for i in 0..groups.len() {
                for j in i + 1..groups.len() {
                    let d = avg(&groups[i], &groups[j]);
                    if d < best.2 {
                        best = (i, j, d);
                    }
                }
            }
            let g = groups.remove(best.1);
            groups[best.0].extend(g);
        }
        let mut out = vec![0; m];
        for (gi, g) in groups.iter().enumerate() {
            for &i in g {
                out[i] = gi;
            }
        }
        // renumber by first appearance
        let mut map = vec![usize::MAX; groups.len()];
        let mut next = 0;
        out.iter()
            .map(|&g| {
                if map[g] == usize::MAX {
                    map[g] = next;
                    next += 1;
                }
                map[g]
            })
            .collect()
    }

    #[test]
    fn separates_obvious_groups() {
        let xs = [0.0, 0.1, 0.2, 10.0, 10.1, 20.0];
        let labels = average_linkage_cut(&line_dist(&xs), &[1.0; 6], 3);
        assert_eq!(labels, vec![0, 0, 0, 1, 1, 2]);
    }

    #[test]
    fn k_one_and_k_m() {
        let xs = [0.0, 3.0, 1.0];
        assert_eq!(
            average_linkage_cut(&line_dist(&xs), &[1.0; 3], 1),
            vec![0, 0, 0]
        );
        assert_eq!(
            average_linkage_cut(&line_dist(&xs), &[1.0; 3], 3),
            vec![0, 1, 2]
        );
        assert_eq!(
            average_linkage_cut(&line_dist(&xs), &[1.0; 3], 10),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn matches_naive_reference_on_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let m = rng.random_range(2..25);
            let xs: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..100.0)).collect();
            let w: Vec<f64> = (0..m).map(|_| rng.random_range(1..4) as f64).collect();
            let d = line_dist(&xs);
            for k in 1..=m.min(6) {
                assert_eq!(
                    average_linkage_cut(&d, &w, k),
                    naive(&d, &w, k),
                    "m={m} k={k}"
                );
            }
        }
    }

    #[test]
    fn weights_equal_duplicated_items() {
        // Item 0 with weight 3 behaves like three coincident copies.
        let xs = [0.0, 4.0, 9.0];
        let w = [3.0, 1.0, 1.0];
        let expanded = [0.0, 0.0, 0.0, 4.0, 9.0];
        let a = average_linkage_cut(&line_dist(&xs), &w, 2);
        let b = average_linkage_cut(&line_dist(&expanded), &[1.0; 5], 2);
        assert_eq!(a, vec![b[0], b[3], b[4]]);
    }
}
