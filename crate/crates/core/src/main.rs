use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use depthseg::pipeline::{
    cmd_describe, cmd_eval, cmd_infer, cmd_predict, cmd_propose, cmd_ranker, cmd_scene, cmd_synth,
    cmd_train, PipelineConfig,
};
use depthseg::synth::SynthConfig;
use depthseg::Result;

/// RGB-D semantic segmentation: proposals, region descriptors, per-class
/// regressors and sequential labeling.
#[derive(Parser)]
#[command(name = "depthseg", version)]
struct Cli {
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

/// Configuration sources, applied in order: built-in defaults, `--config`,
/// the named flags, then `--set`.
#[derive(Args)]
struct Settings {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Proposal σ values, comma separated.
    #[arg(long, global = true)]
    sigma: Option<String>,
    #[arg(long, global = true)]
    lambda_min: Option<f64>,
    #[arg(long, global = true)]
    lambda_max: Option<f64>,
    /// overlap, overlap_confidence or confidence.
    #[arg(long, global = true)]
    criterion: Option<String>,
    /// Color only: no depth boundaries or depth descriptor blocks.
    #[arg(long, global = true)]
    no_depth: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 6)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Objects take the wall's colors; only depth separates them.
        #[arg(long)]
        camouflage: bool,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 96)]
        height: usize,
    },
    /// Boundary maps and ranked proposal pools.
    Propose {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory of precomputed `scene_NNNN.raw` boundary maps.
        #[arg(long)]
        boundaries_in: Option<PathBuf>,
    },
    /// PCA bank and region descriptors.
    Describe {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        proposals: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Extra per-region features laid out like the descriptor output.
        #[arg(long)]
        external: Option<PathBuf>,
    },
    /// Per-class regressors.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        proposals: PathBuf,
        #[arg(long)]
        descriptors: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Class and confidence of every test proposal.
    Predict {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        proposals: PathBuf,
        #[arg(long)]
        descriptors: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-pixel labelings from the labeled proposals.
    Infer {
        #[arg(long)]
        proposals: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics report and overlays.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        labelings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also report the pool upper bound of these proposals.
        #[arg(long)]
        proposals: Option<PathBuf>,
    },
    /// Scene classification on the corpus split.
    Scene {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit objectness ranker weights on the training split.
    Ranker {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Propose { .. } => "propose",
            Command::Describe { .. } => "describe",
            Command::Train { .. } => "train",
            Command::Predict { .. } => "predict",
            Command::Infer { .. } => "infer",
            Command::Eval { .. } => "eval",
            Command::Scene { .. } => "scene",
            Command::Ranker { .. } => "ranker",
        }
    }
}

fn load_config(s: &Settings) -> Result<PipelineConfig> {
    let mut config = match &s.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if s.no_depth {
        config = config.without_depth();
    }
    let named = [
        ("sigmas", s.sigma.clone()),
        ("lambda_min", s.lambda_min.map(|v| v.to_string())),
        ("lambda_max", s.lambda_max.map(|v| v.to_string())),
        ("criterion", s.criterion.clone()),
        ("jobs", s.jobs.map(|v| v.to_string())),
    ];
    for (key, value) in named {
        if let Some(v) = value {
            config.set(key, &v)?;
        }
    }
    for kv in &s.overrides {
        let (key, value) = kv.split_once('=').ok_or_else(|| depthseg::Error::Config {
            key: kv.clone(),
            reason: "expected KEY=VALUE".into(),
        })?;
        config.set(key.trim(), value.trim())?;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<()> {
    let config = load_config(&cli.settings)?;
    if config.jobs > 0 {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build_global();
    }
    match &cli.command {
        Command::Synth {
            out,
            count,
            classes,
            seed,
            camouflage,
            width,
            height,
        } => {
            let synth = SynthConfig {
                classes: *classes,
                camouflage: *camouflage,
                width: *width,
                height: *height,
                grid: config.grid,
                ..Default::default()
            };
            cmd_synth(out, &synth, *count, *seed)
        }
        Command::Propose {
            corpus,
            out,
            boundaries_in,
        } => cmd_propose(&config, corpus, out, boundaries_in.as_deref()),
        Command::Describe {
            corpus,
            proposals,
            out,
            external,
        } => cmd_describe(&config, corpus, proposals, out, external.as_deref()),
        Command::Train {
            corpus,
            proposals,
            descriptors,
            out,
        } => cmd_train(&config, corpus, proposals, descriptors, out),
        Command::Predict {
            corpus,
            proposals,
            descriptors,
            models,
            out,
        } => cmd_predict(&config, corpus, proposals, descriptors, models, out),
        Command::Infer {
            proposals,
            predictions,
            out,
        } => cmd_infer(&config, proposals, predictions, out),
        Command::Eval {
            corpus,
            labelings,
            out,
            proposals,
        } => cmd_eval(&config, corpus, labelings, proposals.as_deref(), out),
        Command::Scene { corpus, out } => cmd_scene(&config, corpus, out),
        Command::Ranker { corpus, out } => cmd_ranker(&config, corpus, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("depthseg {}: {e}", cli.command.stage());
            ExitCode::FAILURE
        }
    }
}
