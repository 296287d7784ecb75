use std::path::{Path, PathBuf};

use clusterens::ensemble::Labeling;
use clusterens::featstore::{
    gen_synthetic, load_features, save_csv, save_features, save_features_f32, FeatureFormat,
    SynthSpec,
};
use clusterens::heads::{load_bank, save_bank, train_heads, TrainConfig};
use clusterens::neighbors::{build_neighbor_sets, NeighborSets};
use clusterens::selftrain::{self_train, Classifier, SelfTrainConfig};
use clusterens::{EmbeddingMatrix, Error};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn small() -> EmbeddingMatrix {
    EmbeddingMatrix::new(3, 4, (0..12).map(|i| i as f64 * 0.25 - 1.0).collect()).unwrap()
}

fn is_load_error(e: &Error) -> bool {
    matches!(e, Error::Load { .. })
}

#[test]
fn npy_f32_fixture_matches_numpy() {
    let m = load_features(fixture("small_f32.npy"), FeatureFormat::Npy).unwrap();
    assert_eq!((m.n(), m.d()), (3, 4));
    assert_eq!(m, small());
}

#[test]
fn npy_fortran_order_and_vectors_are_rejected() {
    let e = load_features(fixture("small_f64_fortran.npy"), FeatureFormat::Npy).unwrap_err();
    assert!(e.to_string().contains("C-order"), "{e}");
    let e = load_features(fixture("vector_f32.npy"), FeatureFormat::Npy).unwrap_err();
    assert!(e.to_string().contains("2-d"), "{e}");
}

#[test]
fn format_from_extension() {
    assert_eq!(
        FeatureFormat::from_path(Path::new("a.npy")),
        FeatureFormat::Npy
    );
    assert_eq!(
        FeatureFormat::from_path(Path::new("a.csv")),
        FeatureFormat::Csv
    );
    assert_eq!(
        FeatureFormat::from_path(Path::new("a.fpk")),
        FeatureFormat::Featpack
    );
    assert_eq!("NPY".parse::<FeatureFormat>().unwrap(), FeatureFormat::Npy);
    assert!("parquet".parse::<FeatureFormat>().is_err());
}

#[test]
fn featpack_and_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _) = gen_synthetic(&SynthSpec {
        n: 40,
        d: 7,
        k: 3,
        separation: 4.0,
        seed: 3,
    })
    .unwrap();
    let p = dir.path().join("m.fpk");
    save_features(&p, &m).unwrap();
    assert_eq!(load_features(&p, FeatureFormat::Featpack).unwrap(), m);
    let c = dir.path().join("m.csv");
    save_csv(&c, &m).unwrap();
    assert_eq!(load_features(&c, FeatureFormat::Csv).unwrap(), m);
    let p32 = dir.path().join("m32.fpk");
    save_features_f32(&p32, &m).unwrap();
    let back = load_features(&p32, FeatureFormat::Featpack).unwrap();
    for (a, b) in back.as_slice().iter().zip(m.as_slice()) {
        assert_eq!(*a, *b as f32 as f64);
    }
}

#[test]
fn featpack_corruption_is_a_load_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.fpk");
    save_features(&p, &small()).unwrap();
    let good = std::fs::read(&p).unwrap();

    let mut bad = good.clone();
    bad[0] = b'X';
    std::fs::write(&p, &bad).unwrap();
    assert!(is_load_error(
        &load_features(&p, FeatureFormat::Featpack).unwrap_err()
    ));

    std::fs::write(&p, &good[..good.len() - 3]).unwrap();
    let e = load_features(&p, FeatureFormat::Featpack).unwrap_err();
    assert!(
        is_load_error(&e) && e.to_string().contains("payload"),
        "{e}"
    );

    let mut nan = good.clone();
    let at = good.len() - 8 * 6;
    nan[at..at + 8].copy_from_slice(&f64::NAN.to_le_bytes());
    std::fs::write(&p, &nan).unwrap();
    let e = load_features(&p, FeatureFormat::Featpack).unwrap_err();
    assert!(matches!(e, Error::Load { row: Some(1), .. }), "{e}");

    let missing = dir.path().join("nope.fpk");
    assert!(matches!(
        load_features(&missing, FeatureFormat::Featpack),
        Err(Error::Io { .. })
    ));
}

#[test]
fn labeling_binary_and_text() {
    let dir = tempfile::tempdir().unwrap();
    let l = Labeling::new(vec![4, 4, 1, 9, 1]).unwrap();
    let b = dir.path().join("l.lbl");
    let t = dir.path().join("l.txt");
    l.save(&b).unwrap();
    l.save_text(&t).unwrap();
    assert_eq!(Labeling::load(&b).unwrap(), l);
    assert_eq!(Labeling::load(&t).unwrap(), l);
    assert_eq!(&std::fs::read(&b).unwrap()[..4], b"LBL1");

    std::fs::write(&t, "1\n2\nx\n").unwrap();
    let e = Labeling::load(&t).unwrap_err();
    assert!(matches!(e, Error::Load { row: Some(2), .. }), "{e}");
    let bytes = std::fs::read(&b).unwrap();
    std::fs::write(&b, &bytes[..bytes.len() - 1]).unwrap();
    assert!(is_load_error(&Labeling::load(&b).unwrap_err()));
}

#[test]
fn neighbor_sets_round_trip_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _) = gen_synthetic(&SynthSpec {
        n: 30,
        d: 5,
        k: 3,
        separation: 5.0,
        seed: 1,
    })
    .unwrap();
    let sets = build_neighbor_sets(&m, 0.4, 3).unwrap();
    let p = dir.path().join("n.nns");
    sets.save(&p).unwrap();
    assert_eq!(NeighborSets::load(&p).unwrap().sets, sets.sets);

    let bad = NeighborSets {
        sets: vec![vec![1], vec![1]],
        theta: None,
        k_min: 1,
    };
    bad.save(&p).unwrap();
    assert!(is_load_error(&NeighborSets::load(&p).unwrap_err()));
    let oob = NeighborSets {
        sets: vec![vec![5], vec![0]],
        theta: Some(0.5),
        k_min: 1,
    };
    oob.save(&p).unwrap();
    assert!(is_load_error(&NeighborSets::load(&p).unwrap_err()));
}

#[test]
fn head_bank_and_classifier_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (m, gt) = gen_synthetic(&SynthSpec {
        n: 60,
        d: 6,
        k: 3,
        separation: 8.0,
        seed: 5,
    })
    .unwrap();
    let sets = build_neighbor_sets(&m, 0.5, 5).unwrap();
    let cfg = TrainConfig {
        num_heads: 3,
        epochs: 2,
        batch_size: 16,
        ..TrainConfig::desk(3)
    };
    let (bank, _) = train_heads(&m, &sets, &cfg).unwrap();
    let p = dir.path().join("b.hdb");
    save_bank(&bank, &p).unwrap();
    let back = load_bank(&p).unwrap();
    assert_eq!(back.student, bank.student);
    assert_eq!(back.teacher, bank.teacher);
    assert_eq!(back.marginals, bank.marginals);
    assert_eq!(back.config, bank.config);

    let st = SelfTrainConfig {
        steps: 50,
        batch_size: 16,
        lrs: vec![0.1],
        ..SelfTrainConfig::default()
    };
    let clf = self_train(&m, &gt, &st).unwrap();
    let c = dir.path().join("c.clf");
    clf.save(&c).unwrap();
    let back = Classifier::load(&c).unwrap();
    assert_eq!(back, clf);
    assert_eq!(back.predict(&m).unwrap(), clf.predict(&m).unwrap());

    let bytes = std::fs::read(&c).unwrap();
    std::fs::write(&c, &bytes[..bytes.len() / 2]).unwrap();
    assert!(is_load_error(&Classifier::load(&c).unwrap_err()));
}
