use std::collections::HashMap;

use super::info::anmi;
use super::linkage::average_linkage_cut;
use super::Labeling;
use crate::error::{Error, Result};

/// Fraction of input labelings that put each pair of samples in the same cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct CoAssociationMatrix {
    pub n: usize,
    /// `n x n`, row-major, symmetric, unit diagonal.
    pub values: Vec<f64>,
}

impl CoAssociationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

fn check_inputs(inputs: &[Labeling]) -> Result<usize> {
    let first = inputs.first().ok_or_else(|| {
        Error::InvalidArgument("consensus needs at least one input labeling".into())
    })?;
    let n = first.n();
    if let Some((i, l)) = inputs.iter().enumerate().find(|(_, l)| l.n() != n) {
        return Err(Error::Dimension(format!(
            "input {i} has {} samples, expected {n}",
            l.n()
        )));
    }
    Ok(n)
}

fn dense_inputs(inputs: &[Labeling]) -> Vec<Vec<usize>> {
    inputs.iter().map(|l| l.dense().0).collect()
}

pub fn co_association(inputs: &[Labeling]) -> Result<CoAssociationMatrix> {
    let n = check_inputs(inputs)?;
    let dense = dense_inputs(inputs);
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let agree = dense.iter().filter(|l| l[i] == l[j]).count();
            values[i * n + j] = agree as f64 / inputs.len() as f64;
        }
    }
    Ok(CoAssociationMatrix { n, values })
}

/// Cluster-based similarity partitioning: average linkage on `1 - S`, where `S`
/// is the co-association matrix.
///
/// Samples with identical label vectors across all inputs are collapsed into one
/// weighted item first; they sit at distance 0 from each other and average linkage
/// treats such a group exactly like its members.
pub fn cspa(inputs: &[Labeling], k: usize) -> Result<Labeling> {
    let n = check_inputs(inputs)?;
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "target k = {k} must be in 1..={n}"
        )));
    }
    let dense = dense_inputs(inputs);
    let mut group_of: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut reps: Vec<usize> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let sample_group: Vec<usize> = (0..n)
        .map(|i| {
            let key: Vec<usize> = dense.iter().map(|l| l[i]).collect();
            let g = *group_of.entry(key).or_insert_with(|| {
                reps.push(i);
                weights.push(0.0);
                reps.len() - 1
            });
            weights[g] += 1.0;
            g
        })
        .collect();

    let m = reps.len();
    let total = inputs.len() as f64;
    let mut dist = vec![0.0; m * m];
    for a in 0..m {
        for b in a + 1..m {
            let (ia, ib) = (reps[a], reps[b]);
            let agree = dense.iter().filter(|l| l[ia] == l[ib]).count();
            let d = 1.0 - agree as f64 / total;
            dist[a * m + b] = d;
            dist[b * m + a] = d;
        }
    }
    let groups = average_linkage_cut(&dist, &weights, k);
    let classes: Vec<usize> = sample_group.iter().map(|&g| groups[g]).collect();
    Ok(Labeling::from_classes(&classes)?.canonicalize())
}

/// Meta-clustering: every cluster of every input is a hyperedge; hyperedges are
/// grouped into `k` meta-clusters by average linkage on `1 - Jaccard`, and each
/// sample joins the meta-cluster in which it has the highest mean membership.
///
/// Meta-clusters that win no sample disappear, so the result may have fewer than
/// `k` clusters.
pub fn mcla(inputs: &[Labeling], k: usize) -> Result<Labeling> {
    let n = check_inputs(inputs)?;
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "target k = {k} must be in 1..={n}"
        )));
    }
    let dense = dense_inputs(inputs);
    let mut offsets = Vec::with_capacity(inputs.len());
    let mut edges = 0;
    for l in &dense {
        offsets.push(edges);
        edges += l.iter().max().map_or(0, |&m| m + 1);
    }
    // Hyperedges of sample i: offsets[q] + dense[q][i] for every input q.
    let edge_of = |i: usize| dense.iter().zip(&offsets).map(move |(l, &o)| o + l[i]);

    let mut sizes = vec![0u64; edges];
    let mut inter = vec![0u64; edges * edges];
    let mut scratch = Vec::with_capacity(inputs.len());
    for i in 0..n {
        scratch.clear();
        scratch.extend(edge_of(i));
        for &e in &scratch {
            sizes[e] += 1;
            for &f in &scratch {
                inter[e * edges + f] += 1;
            }
        }
    }
    let mut dist = vec![0.0; edges * edges];
    for e in 0..edges {
        for f in 0..edges {
            let i = inter[e * edges + f];
            let union = sizes[e] + sizes[f] - i;
            dist[e * edges + f] = 1.0 - i as f64 / union as f64;
        }
    }
    let meta = average_linkage_cut(&dist, &vec![1.0; edges], k);
    let n_meta = meta.iter().max().map_or(0, |&m| m + 1);
    let mut meta_size = vec![0usize; n_meta];
    for &g in &meta {
        meta_size[g] += 1;
    }

    let mut counts = vec![0usize; n_meta];
    let classes: Vec<usize> = (0..n)
        .map(|i| {
            counts.iter_mut().for_each(|c| *c = 0);
            for e in edge_of(i) {
                counts[meta[e]] += 1;
            }
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for (g, &c) in counts.iter().enumerate() {
                let score = c as f64 / meta_size[g] as f64;
                if score > best_score {
                    best_score = score;
                    best = g;
                }
            }
            best
        })
        .collect();
    Ok(Labeling::from_classes(&classes)?.canonicalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub name: String,
    pub anmi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupraConsensus {
    pub labeling: Labeling,
    pub candidates: Vec<CandidateScore>,
    /// Index into `candidates` of the winner.
    pub chosen: usize,
}

/// Scores CSPA, MCLA and any extra candidates by ANMI against `inputs` and
/// returns the best one. Ties go to the earliest candidate.
pub fn supra_consensus(
    inputs: &[Labeling],
    k: usize,
    extra_candidates: &[Labeling],
) -> Result<SupraConsensus> {
    let n = check_inputs(inputs)?;
    if let Some(l) = extra_candidates.iter().find(|l| l.n() != n) {
        return Err(Error::Dimension(format!(
            "extra candidate has {} samples, expected {n}",
            l.n()
        )));
    }
    let mut named: Vec<(String, Labeling)> = vec![
        ("cspa".to_string(), cspa(inputs, k)?),
        ("mcla".to_string(), mcla(inputs, k)?),
    ];
    for (i, l) in extra_candidates.iter().enumerate() {
        named.push((format!("extra_{i}"), l.canonicalize()));
    }
    let mut candidates = Vec::with_capacity(named.len());
    let mut chosen = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, (name, l)) in named.iter().enumerate() {
        let score = anmi(l, inputs)?;
        if score > best + 1e-12 {
            chosen = i;
            best = score;
        }
        candidates.push(CandidateScore {
            name: name.clone(),
            anmi: score,
        });
    }
    Ok(SupraConsensus {
        labeling: named.swap_remove(chosen).1,
        candidates,
        chosen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::clustering_accuracy;

    fn lab(ids: &[u32]) -> Labeling {
        Labeling::new(ids.to_vec()).unwrap()
    }

    #[test]
    fn co_association_properties() {
        let inputs = vec![lab(&[1, 1, 2, 2]), lab(&[1, 2, 2, 2])];
        let s = co_association(&inputs).unwrap();
        for i in 0..4 {
            assert_eq!(s.get(i, i), 1.0);
            for j in 0..4 {
                assert_eq!(s.get(i, j), s.get(j, i));
            }
        }
        assert_eq!(s.get(0, 1), 0.5);
        assert_eq!(s.get(2, 3), 1.0);
        assert_eq!(s.get(0, 3), 0.0);
    }

    #[test]
    fn identical_inputs_are_recovered() {
        let planted = lab(&[3, 3, 1, 1, 2, 2, 2, 1]);
        let inputs = vec![planted.clone(); 4];
        for out in [cspa(&inputs, 3).unwrap(), mcla(&inputs, 3).unwrap()] {
            assert_eq!(clustering_accuracy(&out, &planted).unwrap().acc, 1.0);
        }
    }

    #[test]
    fn single_input_is_returned() {
        let l = lab(&[2, 2, 5, 5, 1]);
        assert_eq!(mcla(std::slice::from_ref(&l), 3).unwrap(), l.canonicalize());
        assert_eq!(cspa(std::slice::from_ref(&l), 3).unwrap(), l.canonicalize());
    }

    #[test]
    fn k_one_and_bad_k() {
        let inputs = vec![lab(&[1, 2, 3]), lab(&[1, 1, 2])];
        assert_eq!(cspa(&inputs, 1).unwrap().ids(), &[1, 1, 1]);
        assert!(cspa(&inputs, 4).is_err());
        assert!(cspa(&inputs, 0).is_err());
        assert!(mcla(&inputs, 4).is_err());
        assert!(cspa(&[], 2).is_err());
        assert!(cspa(&[lab(&[1, 2]), lab(&[1])], 1).is_err());
    }

    #[test]
    fn supra_prefers_cspa_on_ties() {
        let l = lab(&[1, 1, 2, 2, 3]);
        let inputs = vec![l.clone(); 3];
        let s = supra_consensus(&inputs, 3, std::slice::from_ref(&l)).unwrap();
        assert_eq!(s.chosen, 0);
        assert_eq!(s.candidates.len(), 3);
        assert!(s.candidates.iter().all(|c| (c.anmi - 3.0).abs() < 1e-9));
    }

    #[test]
    fn supra_picks_an_input_equal_extra_over_collapsed_candidates() {
        let l = lab(&[1, 1, 2, 2, 3, 3]);
        let inputs = vec![l.clone(); 2];
        // Asking for k = 2 forces CSPA and MCLA to merge two true clusters.
        let s = supra_consensus(&inputs, 2, std::slice::from_ref(&l)).unwrap();
        assert_eq!(s.chosen, 2);
        assert_eq!(s.labeling, l);
        assert!((s.candidates[2].anmi - 2.0).abs() < 1e-9);
    }
}
