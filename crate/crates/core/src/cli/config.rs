use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::heads::TrainConfig;
use crate::selftrain::SelfTrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub features: Option<PathBuf>,
    /// Ground-truth labels; metrics are reported only when set.
    pub labels: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            features: None,
            labels: None,
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeighborConfig {
    /// Cosine-similarity lower bound.
    pub theta: f64,
    pub k_min: usize,
    /// Mine on standardized rather than raw features.
    pub standardized: bool,
    /// Replace mined sets with same-label sets (needs `paths.labels`).
    pub ground_truth: bool,
}

impl Default for NeighborConfig {
    fn default() -> Self {
        NeighborConfig {
            theta: 0.3,
            k_min: 50,
            standardized: false,
            ground_truth: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Target cluster count; defaults to `heads.num_clusters`.
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub enabled: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { enabled: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub thetas: Vec<f64>,
    pub head_counts: Vec<usize>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            thetas: (1..=10).map(|i| i as f64 / 10.0).collect(),
            head_counts: (1..=8).map(|i| i * 10).collect(),
        }
    }
}

/// Every setting of a run. Serialized as TOML with one table per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct PipelineConfig {
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub paths: PathsConfig,
    pub neighbors: NeighborConfig,
    pub heads: TrainConfig,
    pub ensemble: EnsembleConfig,
    pub selftrain: SelfTrainConfig,
    pub metrics: MetricsConfig,
    pub ablation: AblationConfig,
}

impl PipelineConfig {
    /// Reads `path` (if any), then applies `key=value` overrides in order.
    ///
    /// Keys are dotted (`heads.lr`, `paths.features`, `threads`). Values are TOML
    /// literals; anything that does not parse as one is taken as a string.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: crate::Error| CliError::Config(e.to_string());
        self.heads.validate().map_err(cfg)?;
        self.selftrain.validate().map_err(cfg)?;
        if self.target_k() < 2 {
            return Err(CliError::Config(format!(
                "ensemble.k must be at least 2, got {}",
                self.target_k()
            )));
        }
        if self.neighbors.theta.is_nan() {
            return Err(CliError::Config("neighbors.theta is NaN".into()));
        }
        if self.neighbors.k_min == 0 {
            return Err(CliError::Config(
                "neighbors.k_min must be at least 1".into(),
            ));
        }
        if self.neighbors.ground_truth && self.paths.labels.is_none() {
            return Err(CliError::Config(
                "neighbors.ground_truth needs paths.labels".into(),
            ));
        }
        Ok(())
    }

    pub fn target_k(&self) -> usize {
        self.ensemble.k.unwrap_or(self.heads.num_clusters)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{item}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(CliError::Config(format!(
            "override `{item}` has an empty key"
        )));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{part}` in `{key}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        let back: PipelineConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.heads.num_heads, 50);
        assert_eq!(cfg.selftrain.steps, 12_500);
    }

    #[test]
    fn overrides() {
        let cfg = PipelineConfig::load(
            None,
            &[
                "heads.lr=1e-3".into(),
                "heads.num_heads = 4".into(),
                "paths.features=data/x.fpk".into(),
                "threads=2".into(),
                "selftrain.lrs=[0.5]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.heads.lr, 1e-3);
        assert_eq!(cfg.heads.num_heads, 4);
        assert_eq!(cfg.paths.features, Some(PathBuf::from("data/x.fpk")));
        assert_eq!(cfg.threads, 2);
        assert_eq!(cfg.selftrain.lrs, vec![0.5]);
    }

    #[test]
    fn config_errors() {
        for bad in [
            "heads.nope=1",
            "heads.beta=2.0",
            "ensemble.k=1",
            "noequals",
            "heads.lr=\"fast\"",
        ] {
            assert!(
                matches!(
                    PipelineConfig::load(None, &[bad.into()]),
                    Err(CliError::Config(_))
                ),
                "{bad}"
            );
        }
        assert!(PipelineConfig::load(Some(Path::new("/nonexistent/cfg.toml")), &[]).is_err());
    }

    #[test]
    fn file_then_override() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "threads = 1\n[heads]\nnum_heads = 3\nlr = 0.01\n").unwrap();
        let cfg = PipelineConfig::load(Some(&p), &["heads.lr=0.02".into()]).unwrap();
        assert_eq!(
            (cfg.threads, cfg.heads.num_heads, cfg.heads.lr),
            (1, 3, 0.02)
        );
    }
}
