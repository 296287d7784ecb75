use proptest::prelude::*;

use clusterens::ensemble::{nmi, supra_consensus, Labeling};
use clusterens::eval::{ari, clustering_accuracy};
use clusterens::featstore::{load_features, save_features, FeatureFormat, NormStats};
use clusterens::heads::{
    ema_update, head_forward, lambda_schedule, sinkhorn_knopp, HeadParams, Network,
};
use clusterens::neighbors::{build_neighbor_sets, cosine_similarity};
use clusterens::EmbeddingMatrix;

fn matrix(max_n: usize, max_d: usize) -> impl Strategy<Value = EmbeddingMatrix> {
    (2..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
        proptest::collection::vec(prop_oneof![-5.0f64..-0.01, 0.01f64..5.0], n * d)
            .prop_map(move |v| EmbeddingMatrix::new(n, d, v).unwrap())
    })
}

fn labeling_pair(max_n: usize, max_k: u32) -> impl Strategy<Value = (Vec<u32>, Vec<u32>)> {
    (1..=max_n).prop_flat_map(move |n| {
        (
            proptest::collection::vec(1..=max_k, n),
            proptest::collection::vec(1..=max_k, n),
        )
    })
}

fn network(d: usize, c: usize, h: usize) -> impl Strategy<Value = Network> {
    proptest::collection::vec(-2.0f64..2.0, 2 * d + h * (c * d + c)).prop_map(move |v| {
        let mut norm = NormStats::identity(d);
        norm.gamma = v[..d].to_vec();
        norm.beta = v[d..2 * d].to_vec();
        let heads = v[2 * d..]
            .chunks_exact(c * d + c)
            .map(|p| HeadParams {
                weight: p[..c * d].to_vec(),
                bias: p[c * d..].to_vec(),
            })
            .collect();
        Network { norm, heads }
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn featpack_round_trip_is_exact(m in matrix(20, 8)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.fpk");
        save_features(&p, &m).unwrap();
        prop_assert_eq!(load_features(&p, FeatureFormat::Featpack).unwrap(), m);
    }

    #[test]
    fn nmi_symmetric_and_bounded((a, b) in labeling_pair(40, 5)) {
        let (a, b) = (Labeling::new(a).unwrap(), Labeling::new(b).unwrap());
        let ab = nmi(&a, &b).unwrap();
        let ba = nmi(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
        if a.k() >= 2 {
            prop_assert!((nmi(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_ignore_cluster_names(
        (a, b) in labeling_pair(40, 5),
        perm in Just((1..=5u32).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let la = Labeling::new(a.clone()).unwrap();
        let lb = Labeling::new(b).unwrap();
        let renamed = Labeling::new(a.iter().map(|&x| perm[x as usize - 1] + 10).collect()).unwrap();
        prop_assert_eq!(clustering_accuracy(&la, &lb).unwrap().acc, clustering_accuracy(&renamed, &lb).unwrap().acc);
        prop_assert!((nmi(&la, &lb).unwrap() - nmi(&renamed, &lb).unwrap()).abs() < 1e-12);
        if la.n() >= 2 {
            prop_assert!((ari(&la, &lb).unwrap() - ari(&renamed, &lb).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn neighbor_sets_respect_floor_and_shrink_with_theta(
        m in matrix(40, 6),
        k_min in 1usize..10,
        t in -1.0f64..1.0,
        dt in 0.0f64..0.5,
    ) {
        let lo = build_neighbor_sets(&m, t, k_min).unwrap();
        let hi = build_neighbor_sets(&m, t + dt, k_min).unwrap();
        for i in 0..m.n() {
            let s = lo.get(i);
            prop_assert!(s.len() >= k_min.min(m.n() - 1));
            prop_assert!(!s.contains(&(i as u32)));
            prop_assert!(hi.get(i).len() <= s.len());
            prop_assert!(hi.get(i).iter().all(|j| s.contains(j)));
        }
    }

    #[test]
    fn neighbor_sets_follow_sample_permutation(
        m in matrix(30, 5),
        seed in any::<u64>(),
        theta in -0.5f64..0.9,
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let n = m.n();
        let sims: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).filter(|&j| j != i).map(|j| cosine_similarity(m.row(i), m.row(j)).unwrap()).collect())
            .collect();
        prop_assume!(sims.iter().all(|r| r.iter().enumerate().all(|(a, x)| r[a + 1..].iter().all(|y| x != y))));
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let shuffled = m.select_rows(&perm).unwrap();
        let a = build_neighbor_sets(&m, theta, 3).unwrap();
        let b = build_neighbor_sets(&shuffled, theta, 3).unwrap();
        // Row `i` of the shuffled matrix is original row `perm[i]`.
        for i in 0..n {
            let mapped: Vec<u32> = b.get(i).iter().map(|&j| perm[j as usize] as u32).collect();
            prop_assert_eq!(mapped, a.get(perm[i]).to_vec());
        }
    }

    #[test]
    fn head_outputs_are_distributions(
        net in network(4, 3, 1),
        z in proptest::collection::vec(-10.0f64..10.0, 4),
        tau in 0.05f64..2.0,
    ) {
        let q = head_forward(&net.heads[0], &net.norm, &z, tau).unwrap();
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(q.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn sinkhorn_rows_stay_distributions(
        logits in proptest::collection::vec(-20.0f64..20.0, 6 * 4),
        iters in 0usize..10,
    ) {
        let q = sinkhorn_knopp(&logits, 6, 4, iters).unwrap();
        for row in q.chunks_exact(4) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn lambda_ramps_up_monotonically(total in 1usize..500, lmax in 0.0f64..2.0) {
        let mut prev = lambda_schedule(0, total, lmax);
        prop_assert!(prev.abs() < 1e-15);
        for s in 1..=total + 3 {
            let l = lambda_schedule(s, total, lmax);
            prop_assert!(l >= prev - 1e-15 && l <= lmax + 1e-15);
            prev = l;
        }
        prop_assert!((prev - lmax).abs() < 1e-12);
    }

    #[test]
    fn ema_is_a_convex_combination(
        t in network(3, 2, 2),
        s in network(3, 2, 2),
        momentum in 0.0f64..=1.0,
    ) {
        let mut out = t.clone();
        ema_update(&mut out, &s, momentum).unwrap();
        for ((o, a), b) in out.to_flat().iter().zip(t.to_flat()).zip(s.to_flat()) {
            prop_assert!(*o >= a.min(b) - 1e-12 && *o <= a.max(b) + 1e-12);
            prop_assert!((o - (momentum * a + (1.0 - momentum) * b)).abs() < 1e-12);
        }
    }

    #[test]
    fn consensus_is_a_valid_labeling(
        inputs in (4usize..30).prop_flat_map(|n| proptest::collection::vec(proptest::collection::vec(1u32..=4, n), 1..6)),
        k in 1usize..5,
    ) {
        let labs: Vec<Labeling> = inputs.into_iter().map(|v| Labeling::new(v).unwrap()).collect();
        let out = supra_consensus(&labs, k, &[]).unwrap();
        prop_assert_eq!(out.labeling.n(), labs[0].n());
        prop_assert!(out.labeling.k() >= 1);
    }
}
