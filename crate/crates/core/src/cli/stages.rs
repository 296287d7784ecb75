//! Pipeline stages. Each stage reads its inputs from files and writes its
//! outputs to files, so any stage can be rerun from its predecessor's outputs.

use std::path::{Path, PathBuf};

use super::config::PipelineConfig;
use super::CliError;
use crate::ensemble::{supra_consensus, Labeling};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport};
use crate::featstore::{
    apply_standardizer, fit_standardizer, load_features, EmbeddingMatrix, FeatureFormat,
};
use crate::heads::{save_bank, train_heads, TrainReport};
use crate::neighbors::{
    build_neighbor_sets, ground_truth_neighbors, neighbor_accuracy, NeighborSets,
};
use crate::selftrain::{self_train, Classifier};

pub const NEIGHBORS_FILE: &str = "neighbors.nns";
pub const BANK_FILE: &str = "heads.hdb";
pub const HEADS_DIR: &str = "heads";
pub const BEST_HEAD_FILE: &str = "best_head";
pub const CONSENSUS_FILE: &str = "consensus.lbl";
pub const CLASSIFIER_FILE: &str = "classifier.clf";
pub const PREDICTIONS_FILE: &str = "predictions.lbl";

/// What a stage produced.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub name: &'static str,
    pub outputs: Vec<PathBuf>,
    /// Against `paths.labels`, when configured.
    pub metrics: Option<MetricsReport>,
    /// Plain-text report ending in a key=value block.
    pub report: String,
}

pub(crate) fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{what} file {} does not exist",
            path.display()
        )))
    }
}

pub(crate) fn runtime(stage: &'static str) -> impl Fn(Error) -> CliError {
    move |source| CliError::Runtime { stage, source }
}

pub fn read_features(path: &Path) -> Result<EmbeddingMatrix> {
    load_features(path, FeatureFormat::from_path(path))
}

fn ground_truth(cfg: &PipelineConfig, stage: &'static str) -> Result<Option<Labeling>, CliError> {
    match &cfg.paths.labels {
        Some(p) => {
            require_file(p, "label")?;
            Labeling::load(p).map(Some).map_err(runtime(stage))
        }
        None => Ok(None),
    }
}

fn metrics_for(
    cfg: &PipelineConfig,
    gt: &Option<Labeling>,
    pred: &Labeling,
) -> Result<Option<MetricsReport>> {
    match gt {
        Some(gt) if cfg.metrics.enabled => evaluate(pred, gt).map(Some),
        _ => Ok(None),
    }
}

/// Neighbor sets as configured: ground truth, or mined on raw or standardized features.
pub fn neighbor_sets_for(
    cfg: &PipelineConfig,
    features: &EmbeddingMatrix,
    gt: Option<&Labeling>,
) -> Result<NeighborSets> {
    if cfg.neighbors.ground_truth {
        let gt =
            gt.ok_or_else(|| Error::InvalidArgument("ground-truth neighbors need labels".into()))?;
        return Ok(ground_truth_neighbors(gt));
    }
    if cfg.neighbors.standardized {
        let z = apply_standardizer(features, &fit_standardizer(features, 0.0)?)?;
        build_neighbor_sets(&z, cfg.neighbors.theta, cfg.neighbors.k_min)
    } else {
        build_neighbor_sets(features, cfg.neighbors.theta, cfg.neighbors.k_min)
    }
}

pub fn head_file(dir: &Path, h: usize) -> PathBuf {
    dir.join(format!("head_{h:03}.lbl"))
}

/// Stage 1: neighbor sets (loaded or mined) and head training.
pub fn train_stage(
    cfg: &PipelineConfig,
    features_path: &Path,
    neighbors_path: Option<&Path>,
    out: &Path,
) -> Result<StageOutcome, CliError> {
    const STAGE: &str = "train";
    let rt = runtime(STAGE);
    require_file(features_path, "feature")?;
    if let Some(p) = neighbors_path {
        require_file(p, "neighbor")?;
    }
    let gt = ground_truth(cfg, STAGE)?;
    let features = read_features(features_path).map_err(&rt)?;
    let mut outputs = Vec::new();
    let sets = match neighbors_path {
        Some(p) => NeighborSets::load(p).map_err(&rt)?,
        None => {
            let sets = neighbor_sets_for(cfg, &features, gt.as_ref()).map_err(&rt)?;
            let p = out.join(NEIGHBORS_FILE);
            sets.save(&p).map_err(&rt)?;
            outputs.push(p);
            sets
        }
    };
    let (bank, report) = train_heads(&features, &sets, &cfg.heads).map_err(&rt)?;

    let bank_path = out.join(BANK_FILE);
    save_bank(&bank, &bank_path).map_err(&rt)?;
    outputs.push(bank_path);
    let dir = out.join(HEADS_DIR);
    for (h, lab) in report.per_head_labeling.iter().enumerate() {
        let p = head_file(&dir, h);
        lab.save(&p).map_err(&rt)?;
        outputs.push(p);
    }
    let best_path = dir.join(BEST_HEAD_FILE);
    std::fs::write(&best_path, format!("{}\n", report.best_head))
        .map_err(|e| rt(Error::io(&best_path, e)))?;
    outputs.push(best_path);

    let best = &report.per_head_labeling[report.best_head];
    let metrics = metrics_for(cfg, &gt, best).map_err(&rt)?;
    let text = train_text(cfg, &report, &sets, gt.as_ref()).map_err(&rt)?;
    Ok(StageOutcome {
        name: STAGE,
        outputs,
        metrics,
        report: text,
    })
}

fn train_text(
    cfg: &PipelineConfig,
    report: &TrainReport,
    sets: &NeighborSets,
    gt: Option<&Labeling>,
) -> Result<String> {
    let mut s = String::new();
    let mut kv = String::new();
    if let Some(gt) = gt {
        if let Ok(st) = neighbor_accuracy(sets, gt) {
            s.push_str(&format!(
                "neighbors: avg_count {:.1}, pair_accuracy {:.2}%, empty {}\n\n",
                st.avg_count,
                100.0 * st.pair_accuracy,
                st.empty_sets
            ));
            kv.push_str(&format!(
                "nn_avg_count={:.1}\nnn_pair_accuracy={:.2}\n",
                st.avg_count,
                100.0 * st.pair_accuracy
            ));
        }
        if cfg.metrics.enabled {
            s.push_str("head\tacc\tnmi\tari\n");
            for (h, lab) in report.per_head_labeling.iter().enumerate() {
                let m = evaluate(lab, gt)?;
                s.push_str(&format!(
                    "{h}\t{:.2}\t{:.2}\t{:.2}\n",
                    100.0 * m.acc,
                    100.0 * m.nmi,
                    100.0 * m.ari
                ));
            }
            s.push('\n');
            kv.push_str(&evaluate(&report.per_head_labeling[report.best_head], gt)?.key_values());
        }
    }
    s.push_str(&report.to_text());
    s.push_str(&kv);
    Ok(s)
}

/// Head labelings written by [`train_stage`], in head order, and the best head.
pub fn read_heads(dir: &Path) -> Result<(Vec<Labeling>, usize), CliError> {
    const STAGE: &str = "ensemble";
    let rt = runtime(STAGE);
    let best_path = dir.join(BEST_HEAD_FILE);
    require_file(&best_path, "best-head")?;
    let best: usize = std::fs::read_to_string(&best_path)
        .map_err(|e| rt(Error::io(&best_path, e)))?
        .trim()
        .parse()
        .map_err(|e| rt(Error::load(&best_path, None, format!("{e}"))))?;
    let mut labelings = Vec::new();
    while head_file(dir, labelings.len()).is_file() {
        labelings.push(Labeling::load(head_file(dir, labelings.len())).map_err(&rt)?);
    }
    if best >= labelings.len() {
        return Err(CliError::Config(format!(
            "best head {best} but only {} head files in {}",
            labelings.len(),
            dir.display()
        )));
    }
    Ok((labelings, best))
}

/// Stage 2: supra-consensus over all head labelings, with the best head as an extra candidate.
pub fn ensemble_stage(
    cfg: &PipelineConfig,
    heads_dir: &Path,
    out: &Path,
) -> Result<StageOutcome, CliError> {
    const STAGE: &str = "ensemble";
    let rt = runtime(STAGE);
    let gt = ground_truth(cfg, STAGE)?;
    let (inputs, best) = read_heads(heads_dir)?;
    let result = supra_consensus(&inputs, cfg.target_k(), &[inputs[best].clone()]).map_err(&rt)?;
    let path = out.join(CONSENSUS_FILE);
    result.labeling.save(&path).map_err(&rt)?;
    let metrics = metrics_for(cfg, &gt, &result.labeling).map_err(&rt)?;

    let mut s = String::from("candidate\tanmi\n");
    for c in &result.candidates {
        s.push_str(&format!("{}\t{:.6}\n", c.name, c.anmi));
    }
    s.push('\n');
    s.push_str(&format!("inputs={}\n", inputs.len()));
    s.push_str(&format!("target_k={}\n", cfg.target_k()));
    s.push_str(&format!("clusters={}\n", result.labeling.k()));
    s.push_str(&format!(
        "chosen={}\n",
        result.candidates[result.chosen].name
    ));
    s.push_str(&format!(
        "anmi={:.6}\n",
        result.candidates[result.chosen].anmi
    ));
    if let Some(m) = &metrics {
        s.push_str(&m.key_values());
    }
    Ok(StageOutcome {
        name: STAGE,
        outputs: vec![path],
        metrics,
        report: s,
    })
}

/// Stage 3: fit the classifier to the consensus labeling.
pub fn selftrain_stage(
    cfg: &PipelineConfig,
    features_path: &Path,
    pseudo_path: &Path,
    out: &Path,
) -> Result<StageOutcome, CliError> {
    const STAGE: &str = "selftrain";
    let rt = runtime(STAGE);
    require_file(features_path, "feature")?;
    require_file(pseudo_path, "pseudo-label")?;
    let features = read_features(features_path).map_err(&rt)?;
    let pseudo = Labeling::load(pseudo_path).map_err(&rt)?;
    let clf = self_train(&features, &pseudo, &cfg.selftrain).map_err(&rt)?;
    let path = out.join(CLASSIFIER_FILE);
    clf.save(&path).map_err(&rt)?;
    let fitted = clf.predict(&features).map_err(&rt)?;
    let agree = fitted
        .ids()
        .iter()
        .zip(pseudo.ids())
        .filter(|(a, b)| a == b)
        .count();
    let s = format!(
        "lr\t{}\nfinal_loss\t{:.6}\n\nlr={}\nfinal_loss={:.6}\npseudo_agreement={:.2}\nrounds=1\n",
        clf.lr,
        clf.final_loss,
        clf.lr,
        clf.final_loss,
        100.0 * agree as f64 / pseudo.n() as f64
    );
    Ok(StageOutcome {
        name: STAGE,
        outputs: vec![path],
        metrics: None,
        report: s,
    })
}

/// Classifier inference; writes the labeling to `out_file`.
pub fn predict_stage(
    cfg: &PipelineConfig,
    classifier_path: &Path,
    features_path: &Path,
    out_file: &Path,
) -> Result<StageOutcome, CliError> {
    const STAGE: &str = "predict";
    let rt = runtime(STAGE);
    require_file(classifier_path, "classifier")?;
    require_file(features_path, "feature")?;
    let gt = ground_truth(cfg, STAGE)?;
    let clf = Classifier::load(classifier_path).map_err(&rt)?;
    let features = read_features(features_path).map_err(&rt)?;
    let pred = clf.predict(&features).map_err(&rt)?;
    save_labeling(&pred, out_file).map_err(&rt)?;
    let metrics = metrics_for(cfg, &gt, &pred).map_err(&rt)?;
    let mut s = format!("samples={}\nclusters={}\n", pred.n(), pred.k());
    if let Some(m) = &metrics {
        s.push_str(&m.key_values());
    }
    Ok(StageOutcome {
        name: STAGE,
        outputs: vec![out_file.to_path_buf()],
        metrics,
        report: s,
    })
}

/// Binary LBL1 unless the extension is `.txt`.
pub fn save_labeling(l: &Labeling, path: &Path) -> Result<()> {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("txt"))
    {
        l.save_text(path)
    } else {
        l.save(path)
    }
}

/// Metrics of a predicted labeling file against a ground-truth file.
pub fn eval_files(pred: &Path, gt: &Path) -> Result<MetricsReport, CliError> {
    let rt = runtime("eval");
    require_file(pred, "prediction")?;
    require_file(gt, "label")?;
    let p = Labeling::load(pred).map_err(&rt)?;
    let g = Labeling::load(gt).map_err(&rt)?;
    evaluate(&p, &g).map_err(&rt)
}
