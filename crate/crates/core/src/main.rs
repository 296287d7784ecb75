use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use clusterens::cli::{
    ensemble_stage, eval_files, predict_stage, read_features, run_ablation, run_pipeline,
    save_labeling, selftrain_stage, train_stage, AblationKind, CliError, PipelineConfig,
    StageOutcome, CLASSIFIER_FILE, CONSENSUS_FILE, HEADS_DIR, PREDICTIONS_FILE,
};
use clusterens::ensemble::Labeling;
use clusterens::featstore::{gen_synthetic, save_csv, save_features, SynthSpec};
use clusterens::neighbors::{render_sweep, threshold_sweep};

#[derive(Parser)]
#[command(
    name = "clusterens",
    version,
    about = "Multi-head clustering, consensus and self-training on embeddings"
)]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set heads.lr=1e-3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write Gaussian-blob features and their labels.
    GenSynth {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        d: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 20.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Feature file (`.csv` for CSV, featpack otherwise).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Stage 1: mine neighbors (unless given) and train the heads.
    Train {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        neighbors: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stage 2: consensus over the head labelings in `<out>/heads`.
    Ensemble {
        #[arg(long)]
        heads: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stage 3: fit the classifier to a consensus labeling.
    Selftrain {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        pseudo: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label features with a trained classifier.
    Predict {
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ACC, NMI and ARI of a labeling against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// All stages end to end.
    Pipeline,
    /// Neighbor count and accuracy over `ablation.thetas`.
    NnAnalysis {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// threshold_sweep, head_count_sweep or gt_neighbors.
    Ablate { kind: String },
}

fn override_path(slot: &mut Option<PathBuf>, flag: Option<PathBuf>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn features_of(cfg: &PipelineConfig) -> Result<PathBuf, CliError> {
    cfg.paths.features.clone().ok_or_else(|| {
        CliError::Config("no feature file (use --features or paths.features)".into())
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime {
        stage: "setup",
        source: clusterens::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        },
    })
}

fn finish_stage(out: &Path, o: StageOutcome) -> Result<String, CliError> {
    let p = out.join(format!("{}_report.txt", o.name));
    std::fs::write(&p, &o.report).map_err(|e| CliError::Runtime {
        stage: o.name,
        source: clusterens::Error::Io { path: p, source: e },
    })?;
    Ok(o.report)
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref(), &cli.set)?;
    if cfg.threads > 0 {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }
    let out_dir = |cfg: &PipelineConfig, flag: Option<PathBuf>| {
        flag.unwrap_or_else(|| cfg.paths.output.clone())
    };
    let rt = |stage: &'static str| move |source| CliError::Runtime { stage, source };

    match cli.command {
        Command::GenSynth {
            n,
            d,
            k,
            separation,
            seed,
            out,
            labels,
        } => {
            let (m, l) = gen_synthetic(&SynthSpec {
                n,
                d,
                k,
                separation,
                seed,
            })
            .map_err(|e| CliError::Config(e.to_string()))?;
            if out
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
            {
                save_csv(&out, &m).map_err(rt("gen-synth"))?;
            } else {
                save_features(&out, &m).map_err(rt("gen-synth"))?;
            }
            save_labeling(&l, &labels).map_err(rt("gen-synth"))?;
            Ok(format!(
                "wrote {} and {}\n\nn={n}\nd={d}\nk={k}\nseed={seed}\n",
                out.display(),
                labels.display()
            ))
        }
        Command::Train {
            features,
            neighbors,
            out,
        } => {
            override_path(&mut cfg.paths.features, features);
            let f = features_of(&cfg)?;
            let out = out_dir(&cfg, out);
            ensure_dir(&out)?;
            let o = train_stage(&cfg, &f, neighbors.as_deref(), &out)?;
            finish_stage(&out, o)
        }
        Command::Ensemble { heads, out } => {
            let out = out_dir(&cfg, out);
            let heads = heads.unwrap_or_else(|| out.join(HEADS_DIR));
            ensure_dir(&out)?;
            let o = ensemble_stage(&cfg, &heads, &out)?;
            finish_stage(&out, o)
        }
        Command::Selftrain {
            features,
            pseudo,
            out,
        } => {
            override_path(&mut cfg.paths.features, features);
            let f = features_of(&cfg)?;
            let out = out_dir(&cfg, out);
            let pseudo = pseudo.unwrap_or_else(|| out.join(CONSENSUS_FILE));
            ensure_dir(&out)?;
            let o = selftrain_stage(&cfg, &f, &pseudo, &out)?;
            finish_stage(&out, o)
        }
        Command::Predict {
            classifier,
            features,
            out,
        } => {
            override_path(&mut cfg.paths.features, features);
            let f = features_of(&cfg)?;
            let clf = classifier.unwrap_or_else(|| cfg.paths.output.join(CLASSIFIER_FILE));
            let out = out.unwrap_or_else(|| cfg.paths.output.join(PREDICTIONS_FILE));
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                ensure_dir(parent)?;
            }
            Ok(predict_stage(&cfg, &clf, &f, &out)?.report)
        }
        Command::Eval { pred, labels } => {
            override_path(&mut cfg.paths.labels, labels);
            let gt = cfg.paths.labels.clone().ok_or_else(|| {
                CliError::Config("no ground truth (use --labels or paths.labels)".into())
            })?;
            Ok(eval_files(&pred, &gt)?.to_text())
        }
        Command::Pipeline => Ok(run_pipeline(&cfg)?.to_text()),
        Command::NnAnalysis { features, labels } => {
            override_path(&mut cfg.paths.features, features);
            override_path(&mut cfg.paths.labels, labels);
            let f = features_of(&cfg)?;
            let l = cfg
                .paths
                .labels
                .clone()
                .ok_or_else(|| CliError::Config("nn-analysis needs labels".into()))?;
            for (p, what) in [(&f, "feature"), (&l, "label")] {
                if !p.is_file() {
                    return Err(CliError::Config(format!(
                        "{what} file {} does not exist",
                        p.display()
                    )));
                }
            }
            let m = read_features(&f).map_err(rt("nn-analysis"))?;
            let gt = Labeling::load(&l).map_err(rt("nn-analysis"))?;
            let rows = threshold_sweep(&m, &gt, &cfg.ablation.thetas, cfg.neighbors.k_min)
                .map_err(rt("nn-analysis"))?;
            Ok(render_sweep(&rows))
        }
        Command::Ablate { kind } => {
            let kind: AblationKind = kind.parse()?;
            Ok(run_ablation(kind, &cfg)?.to_text())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Usage mistakes count as configuration errors.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Runtime { source, .. } = &e {
                let mut cause = std::error::Error::source(source);
                while let Some(c) = cause {
                    eprintln!("  caused by: {c}");
                    cause = c.source();
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
