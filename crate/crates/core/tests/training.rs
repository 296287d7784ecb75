use clusterens::eval::clustering_accuracy;
use clusterens::featstore::{gen_synthetic, SynthSpec};
use clusterens::heads::{predict_labeling, train_heads, TrainConfig};
use clusterens::neighbors::build_neighbor_sets;
use clusterens::selftrain::{self_train, SelfTrainConfig};

fn blobs(n: usize) -> (clusterens::EmbeddingMatrix, clusterens::ensemble::Labeling) {
    gen_synthetic(&SynthSpec {
        n,
        d: 64,
        k: 5,
        separation: 20.0,
        seed: 0,
    })
    .unwrap()
}

#[test]
fn loss_falls_and_heads_recover_blobs() {
    let (m, gt) = blobs(2000);
    let sets = build_neighbor_sets(&m, 0.3, 50).unwrap();
    let cfg = TrainConfig::desk(5);
    let (bank, report) = train_heads(&m, &sets, &cfg).unwrap();
    assert_eq!(report.epoch_loss.len(), cfg.epochs);
    let tenth = (cfg.epochs / 10).max(1);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let first = mean(&report.epoch_loss[..tenth]);
    let last = mean(&report.epoch_loss[cfg.epochs - tenth..]);
    assert!(last <= first, "epoch loss {first} -> {last}");
    for h in 0..cfg.num_heads {
        assert_eq!(
            predict_labeling(&bank, h, &m).unwrap(),
            report.per_head_labeling[h]
        );
    }
    let acc = clustering_accuracy(&report.per_head_labeling[report.best_head], &gt)
        .unwrap()
        .acc;
    assert!(acc >= 0.95, "best head ACC {acc}");
    let min = report
        .per_head_loss
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    assert_eq!(report.per_head_loss[report.best_head], min);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let (m, gt) = blobs(500);
    let cfg = TrainConfig {
        num_heads: 3,
        epochs: 5,
        batch_size: 128,
        ..TrainConfig::desk(5)
    };
    let st = SelfTrainConfig {
        steps: 200,
        batch_size: 64,
        ..SelfTrainConfig::default()
    };
    let run = || {
        let sets = build_neighbor_sets(&m, 0.3, 20).unwrap();
        let (bank, report) = train_heads(&m, &sets, &cfg).unwrap();
        let clf = self_train(&m, &gt, &st).unwrap();
        (sets, bank.student, report, clf)
    };
    let serial = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(run);
    let parallel = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(run);
    assert_eq!(serial.0, parallel.0);
    assert_eq!(serial.1, parallel.1);
    assert_eq!(serial.2, parallel.2);
    assert_eq!(serial.3, parallel.3);
}

#[test]
fn seed_changes_the_initialization() {
    let (m, _) = blobs(300);
    let sets = build_neighbor_sets(&m, 0.3, 10).unwrap();
    let base = TrainConfig {
        num_heads: 2,
        epochs: 1,
        batch_size: 64,
        ..TrainConfig::desk(5)
    };
    let (a, _) = train_heads(&m, &sets, &base).unwrap();
    let (b, _) = train_heads(
        &m,
        &sets,
        &TrainConfig {
            seed: 1,
            ..base.clone()
        },
    )
    .unwrap();
    let (c, _) = train_heads(&m, &sets, &base).unwrap();
    assert_ne!(a.student, b.student);
    assert_eq!(a.student, c.student);
}
