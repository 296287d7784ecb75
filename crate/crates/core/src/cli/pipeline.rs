use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use super::config::PipelineConfig;
use super::stages::{
    ensemble_stage, predict_stage, require_file, runtime, selftrain_stage, train_stage,
    StageOutcome, CLASSIFIER_FILE, CONSENSUS_FILE, HEADS_DIR, PREDICTIONS_FILE,
};
use super::CliError;
use crate::error::{Error, Result};
use crate::eval::MetricsReport;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CONFIG_ECHO_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub name: String,
    /// Output path and its SHA-256 digest (hex).
    pub outputs: Vec<(PathBuf, String)>,
    pub seconds: f64,
    pub metrics: Option<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
    pub selftrain_rounds: usize,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Checks that every listed output still exists with its recorded digest.
    pub fn verify(&self) -> Result<()> {
        for s in &self.stages {
            for (p, digest) in &s.outputs {
                if &sha256_file(p)? != digest {
                    return Err(Error::load(p, None, "digest differs from the manifest"));
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for st in &self.stages {
            s.push_str(&format!("[{}] {:.3}s\n", st.name, st.seconds));
            for (p, d) in &st.outputs {
                s.push_str(&format!("  {d}  {}\n", p.display()));
            }
        }
        s.push('\n');
        s.push_str(&format!("config_hash={}\n", self.config_hash));
        s.push_str(&format!("seed={}\n", self.seed));
        s.push_str(&format!("selftrain_rounds={}\n", self.selftrain_rounds));
        for st in &self.stages {
            s.push_str(&format!("{}_seconds={:.3}\n", st.name, st.seconds));
            if let Some(m) = &st.metrics {
                for line in m.key_values().lines() {
                    s.push_str(&format!("{}_{line}\n", st.name));
                }
            }
        }
        s
    }
}

fn record(outcome: StageOutcome, start: Instant) -> Result<StageRecord, CliError> {
    let rt = runtime(outcome.name);
    let outputs = outcome
        .outputs
        .iter()
        .map(|p| Ok((p.clone(), sha256_file(p)?)))
        .collect::<Result<Vec<_>>>()
        .map_err(rt)?;
    Ok(StageRecord {
        name: outcome.name.to_string(),
        outputs,
        seconds: start.elapsed().as_secs_f64(),
        metrics: outcome.metrics,
    })
}

fn write_report(out: &Path, outcome: &StageOutcome) -> Result<(), CliError> {
    let p = out.join(format!("{}_report.txt", outcome.name));
    std::fs::write(&p, &outcome.report).map_err(|e| runtime(outcome.name)(Error::io(&p, e)))
}

/// Runs train, ensemble, selftrain and predict into `cfg.paths.output`.
///
/// Stage reports go to `<stage>_report.txt` and the manifest to `manifest.txt`.
/// Outputs of stages that finished are kept if a later stage fails.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest, CliError> {
    cfg.validate()?;
    let features = cfg
        .paths
        .features
        .clone()
        .ok_or_else(|| CliError::Config("paths.features is not set".into()))?;
    require_file(&features, "feature")?;
    if let Some(l) = &cfg.paths.labels {
        require_file(l, "label")?;
    }
    let out = cfg.paths.output.clone();
    std::fs::create_dir_all(&out).map_err(|e| runtime("setup")(Error::io(&out, e)))?;
    let echo = cfg.to_toml();
    let echo_path = out.join(CONFIG_ECHO_FILE);
    std::fs::write(&echo_path, &echo).map_err(|e| runtime("setup")(Error::io(&echo_path, e)))?;

    let mut stages = Vec::new();
    let mut rounds = 0;

    let t = Instant::now();
    let o = train_stage(cfg, &features, None, &out)?;
    write_report(&out, &o)?;
    stages.push(record(o, t)?);

    let t = Instant::now();
    let o = ensemble_stage(cfg, &out.join(HEADS_DIR), &out)?;
    write_report(&out, &o)?;
    stages.push(record(o, t)?);

    let t = Instant::now();
    let o = selftrain_stage(cfg, &features, &out.join(CONSENSUS_FILE), &out)?;
    rounds += 1;
    write_report(&out, &o)?;
    stages.push(record(o, t)?);

    let t = Instant::now();
    let o = predict_stage(
        cfg,
        &out.join(CLASSIFIER_FILE),
        &features,
        &out.join(PREDICTIONS_FILE),
    )?;
    write_report(&out, &o)?;
    stages.push(record(o, t)?);

    let manifest = RunManifest {
        config_hash: hex(&Sha256::digest(echo.as_bytes())),
        seed: cfg.heads.seed,
        stages,
        selftrain_rounds: rounds,
    };
    let p = out.join(MANIFEST_FILE);
    std::fs::write(&p, manifest.to_text()).map_err(|e| runtime("manifest")(Error::io(&p, e)))?;
    Ok(manifest)
}
