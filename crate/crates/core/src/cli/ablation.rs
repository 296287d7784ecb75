use std::fmt;
use std::str::FromStr;

use super::config::PipelineConfig;
use super::stages::{neighbor_sets_for, read_features, require_file, runtime};
use super::CliError;
use crate::ensemble::{supra_consensus, Labeling};
use crate::error::Result;
use crate::eval::{evaluate, MetricsReport};
use crate::featstore::EmbeddingMatrix;
use crate::heads::{train_heads, TrainConfig, TrainReport};
use crate::neighbors::{ground_truth_neighbors, neighbor_accuracy, NeighborSets, NeighborStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationKind {
    ThresholdSweep,
    HeadCountSweep,
    GtNeighbors,
}

impl FromStr for AblationKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "threshold_sweep" | "threshold-sweep" => Ok(AblationKind::ThresholdSweep),
            "head_count_sweep" | "head-count-sweep" => Ok(AblationKind::HeadCountSweep),
            "gt_neighbors" | "gt-neighbors" => Ok(AblationKind::GtNeighbors),
            other => Err(CliError::Config(format!(
                "unknown ablation `{other}` (threshold_sweep, head_count_sweep, gt_neighbors)"
            ))),
        }
    }
}

impl fmt::Display for AblationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationKind::ThresholdSweep => "threshold_sweep",
            AblationKind::HeadCountSweep => "head_count_sweep",
            AblationKind::GtNeighbors => "gt_neighbors",
        })
    }
}

/// Best-head metrics plus mean and standard deviation over all heads.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadSummary {
    pub best_head: usize,
    pub best: MetricsReport,
    /// `(mean, std)` of ACC, NMI and ARI over heads.
    pub acc: (f64, f64),
    pub nmi: (f64, f64),
    pub ari: (f64, f64),
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    (m, v.sqrt())
}

pub fn summarize_heads(report: &TrainReport, gt: &Labeling) -> Result<HeadSummary> {
    let all = report
        .per_head_labeling
        .iter()
        .map(|l| evaluate(l, gt))
        .collect::<Result<Vec<_>>>()?;
    let pick = |f: fn(&MetricsReport) -> f64| mean_std(&all.iter().map(f).collect::<Vec<_>>());
    Ok(HeadSummary {
        best_head: report.best_head,
        best: all[report.best_head].clone(),
        acc: pick(|m| m.acc),
        nmi: pick(|m| m.nmi),
        ari: pick(|m| m.ari),
    })
}

/// Stage-1 summaries with the given neighbor sets and with ground-truth sets.
pub fn compare_with_gt_neighbors(
    features: &EmbeddingMatrix,
    gt: &Labeling,
    adaptive: &NeighborSets,
    cfg: &TrainConfig,
) -> Result<[(NeighborStats, HeadSummary); 2]> {
    let gt_sets = ground_truth_neighbors(gt);
    let mut out = Vec::with_capacity(2);
    for sets in [adaptive, &gt_sets] {
        let stats = neighbor_accuracy(sets, gt)?;
        let (_, report) = train_heads(features, sets, cfg)?;
        out.push((stats, summarize_heads(&report, gt)?));
    }
    let b = out.pop().expect("two runs");
    let a = out.pop().expect("two runs");
    Ok([a, b])
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub kind: AblationKind,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub key_values: Vec<(String, String)>,
}

impl AblationTable {
    pub fn to_text(&self) -> String {
        let mut s = self.header.join("\t");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join("\t"));
            s.push('\n');
        }
        s.push('\n');
        s.push_str(&format!("ablation={}\n", self.kind));
        for (k, v) in &self.key_values {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn pm((m, s): (f64, f64)) -> String {
    format!("{:.2}±{:.2}", 100.0 * m, 100.0 * s)
}

fn summary_cells(h: &HeadSummary) -> Vec<String> {
    vec![
        pct(h.best.acc),
        pct(h.best.nmi),
        pct(h.best.ari),
        pm(h.acc),
        pm(h.nmi),
        pm(h.ari),
    ]
}

const SUMMARY_COLUMNS: [&str; 6] = [
    "best_acc", "best_nmi", "best_ari", "mean_acc", "mean_nmi", "mean_ari",
];

/// Runs one ablation harness in memory over `paths.features` and `paths.labels`.
pub fn run_ablation(kind: AblationKind, cfg: &PipelineConfig) -> Result<AblationTable, CliError> {
    cfg.validate()?;
    let rt = runtime("ablate");
    let fpath = cfg
        .paths
        .features
        .clone()
        .ok_or_else(|| CliError::Config("paths.features is not set".into()))?;
    let lpath = cfg
        .paths
        .labels
        .clone()
        .ok_or_else(|| CliError::Config("ablations need paths.labels".into()))?;
    require_file(&fpath, "feature")?;
    require_file(&lpath, "label")?;
    let features = read_features(&fpath).map_err(&rt)?;
    let gt = Labeling::load(&lpath).map_err(&rt)?;

    let mut header: Vec<String> = Vec::new();
    let mut rows = Vec::new();
    let mut kv = Vec::new();
    match kind {
        AblationKind::ThresholdSweep => {
            header.extend(["theta", "avg_nn", "nn_acc"].map(String::from));
            header.extend(SUMMARY_COLUMNS.map(String::from));
            for &theta in &cfg.ablation.thetas {
                let mut c = cfg.clone();
                c.neighbors.theta = theta;
                c.neighbors.ground_truth = false;
                let sets = neighbor_sets_for(&c, &features, None).map_err(&rt)?;
                let stats = neighbor_accuracy(&sets, &gt).map_err(&rt)?;
                let (_, report) = train_heads(&features, &sets, &c.heads).map_err(&rt)?;
                let h = summarize_heads(&report, &gt).map_err(&rt)?;
                let mut row = vec![
                    format!("{theta:.2}"),
                    format!("{:.1}", stats.avg_count),
                    pct(stats.pair_accuracy),
                ];
                row.extend(summary_cells(&h));
                rows.push(row);
                kv.push((
                    format!("avg_nn@{theta:.2}"),
                    format!("{:.1}", stats.avg_count),
                ));
                kv.push((format!("best_acc@{theta:.2}"), pct(h.best.acc)));
            }
        }
        AblationKind::HeadCountSweep => {
            header.push("heads".into());
            header.extend(SUMMARY_COLUMNS.map(String::from));
            header.extend(["ens_acc", "ens_nmi", "ens_ari"].map(String::from));
            let sets = neighbor_sets_for(cfg, &features, Some(&gt)).map_err(&rt)?;
            for &h_count in &cfg.ablation.head_counts {
                let tc = TrainConfig {
                    num_heads: h_count,
                    ..cfg.heads.clone()
                };
                let (_, report) = train_heads(&features, &sets, &tc).map_err(&rt)?;
                let h = summarize_heads(&report, &gt).map_err(&rt)?;
                let best = report.per_head_labeling[report.best_head].clone();
                let ens = supra_consensus(&report.per_head_labeling, cfg.target_k(), &[best])
                    .map_err(&rt)?;
                let em = evaluate(&ens.labeling, &gt).map_err(&rt)?;
                let mut row = vec![h_count.to_string()];
                row.extend(summary_cells(&h));
                row.extend([pct(em.acc), pct(em.nmi), pct(em.ari)]);
                rows.push(row);
                kv.push((format!("best_acc@{h_count}"), pct(h.best.acc)));
                kv.push((format!("ensemble_acc@{h_count}"), pct(em.acc)));
            }
        }
        AblationKind::GtNeighbors => {
            header.extend(["neighbors", "avg_nn", "nn_acc"].map(String::from));
            header.extend(SUMMARY_COLUMNS.map(String::from));
            let mut c = cfg.clone();
            c.neighbors.ground_truth = false;
            let sets = neighbor_sets_for(&c, &features, None).map_err(&rt)?;
            let runs = compare_with_gt_neighbors(&features, &gt, &sets, &cfg.heads).map_err(&rt)?;
            for (name, (stats, h)) in ["adaptive", "ground_truth"].iter().zip(&runs) {
                let mut row = vec![
                    name.to_string(),
                    format!("{:.1}", stats.avg_count),
                    pct(stats.pair_accuracy),
                ];
                row.extend(summary_cells(h));
                rows.push(row);
                kv.push((format!("{name}_best_acc"), pct(h.best.acc)));
                kv.push((format!("{name}_nn_acc"), pct(stats.pair_accuracy)));
            }
        }
    }
    Ok(AblationTable {
        kind,
        header,
        rows,
        key_values: kv,
    })
}
