//! `pitcast` — multimodal trajectory prediction for unstructured roads.
//!
//! Subcommands wire the full pipeline: `synth` generates scenario data,
//! `preprocess` turns trajectory logs into windowed instances, `rasterize`
//! exports BEV rasters, `train` fits the convolutional predictor,
//! `predict` emits model or EKF forecasts, `eval` scores methods against
//! each other, and `plot` renders prediction figures.

mod commands;
mod config;
mod output;
mod plot;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use pitcast_core::scene::{Footprint, ScenarioKind};
use pitcast_core::train::{LossConfig, LossKind, OptimizerKind, TrainConfig};

use commands::{Predictor, SplitChoice};
use config::FileConfig;

#[derive(Parser)]
#[command(name = "pitcast", version, about = "Multimodal trajectory prediction toolkit for unstructured roads")]
struct Cli {
    /// Root random seed; each stochastic stage derives its own stream from it
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON config file; explicit flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path (directory for synth/preprocess, file otherwise)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    #[value(name = "straight")]
    Straight,
    #[value(name = "t_junction")]
    TJunction,
    #[value(name = "crossroads")]
    Crossroads,
}

impl From<KindArg> for ScenarioKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Straight => ScenarioKind::Straight,
            KindArg::TJunction => ScenarioKind::TJunction,
            KindArg::Crossroads => ScenarioKind::Crossroads,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WhichArg {
    Train,
    Val,
    Test,
    All,
}

impl From<WhichArg> for SplitChoice {
    fn from(w: WhichArg) -> Self {
        match w {
            WhichArg::Train => SplitChoice::Train,
            WhichArg::Val => SplitChoice::Val,
            WhichArg::Test => SplitChoice::Test,
            WhichArg::All => SplitChoice::All,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EkfModelArg {
    Cv,
    Ca,
    Ctrv,
    Ctra,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    #[value(name = "best-mode")]
    BestMode,
    #[value(name = "mixture-of-experts")]
    MixtureOfExperts,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario: polygon map plus 10 Hz trajectory logs
    Synth {
        /// Scenario layout
        #[arg(long)]
        kind: KindArg,
        /// Number of vehicles
        #[arg(long, default_value_t = 10)]
        agents: usize,
    },
    /// Resample logs to the history rate, window into instances, and split
    Preprocess {
        /// Trajectory log (.csv or line-delimited JSON)
        #[arg(long)]
        logs: PathBuf,
        /// Scene map JSON
        #[arg(long)]
        map: PathBuf,
        /// History length in steps
        #[arg(long, default_value_t = 6)]
        k: usize,
        /// Prediction horizon in steps
        #[arg(long, default_value_t = 6)]
        horizon: usize,
        /// Seconds between predicted positions
        #[arg(long, default_value_t = 1.0)]
        pred_dt: f64,
        /// History sampling rate after downsampling, Hz
        #[arg(long, default_value_t = 2.0)]
        history_hz: f64,
        /// Default vehicle footprint as LENGTHxWIDTH meters
        #[arg(long, default_value = "5.0x2.5")]
        footprint: String,
    },
    /// Render one instance's agent-centric raster to PNG (or PPM)
    Rasterize {
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        map: PathBuf,
        /// Instance id to render
        #[arg(long, default_value_t = 0)]
        id: usize,
        /// Raster preset: paper, train, or small
        #[arg(long)]
        preset: Option<String>,
    },
    /// Train the convolutional predictor
    Train {
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// Raster preset: paper, train, or small
        #[arg(long)]
        preset: Option<String>,
        /// Number of predicted modes M
        #[arg(long, default_value_t = 5)]
        modes: usize,
        /// Prediction horizon H (must match the instances)
        #[arg(long, default_value_t = 6)]
        horizon: usize,
        /// Mini-batch size
        #[arg(long)]
        batch: Option<usize>,
        /// Learning rate
        #[arg(long)]
        lr: Option<f64>,
        /// Number of epochs
        #[arg(long)]
        epochs: Option<usize>,
        /// Hard cap on optimizer steps
        #[arg(long)]
        steps: Option<usize>,
        /// Loss kind
        #[arg(long)]
        loss: Option<LossArg>,
        /// Weight on the regression term
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Forecast with a trained checkpoint or the EKF baseline
    Predict {
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// Which split to predict on
        #[arg(long, value_enum, default_value_t = WhichArg::Test)]
        which: WhichArg,
        /// Model checkpoint path
        #[arg(long, conflicts_with = "ekf")]
        checkpoint: Option<PathBuf>,
        /// Use the extended-Kalman baseline instead of a checkpoint
        #[arg(long)]
        ekf: bool,
        /// Kinematic model for the EKF baseline
        #[arg(long, value_enum, default_value_t = EkfModelArg::Ctrv)]
        ekf_model: EkfModelArg,
        /// Seconds between predicted positions
        #[arg(long, default_value_t = 1.0)]
        pred_dt: f64,
    },
    /// Score prediction files against ground truth in one report
    Eval {
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// Prediction files, one method each (comma-separated or repeated)
        #[arg(long, value_delimiter = ',', required = true)]
        predictions: Vec<PathBuf>,
        /// Which split the predictions cover
        #[arg(long, value_enum, default_value_t = WhichArg::Test)]
        which: WhichArg,
        /// missRate threshold on final displacement, meters
        #[arg(long)]
        miss_threshold: Option<f64>,
        /// Zero probabilities of modes leaving the drivable area
        #[arg(long)]
        filter_feasible: bool,
        /// Scene map (required with --filter-feasible)
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Render one instance's prediction as an SVG figure
    Plot {
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Instance id to plot
        #[arg(long)]
        id: usize,
        /// Render infeasible modes dashed with zeroed probability
        #[arg(long)]
        filter_feasible: bool,
    },
}

fn parse_footprint(s: &str) -> anyhow::Result<Footprint> {
    let (l, w) = s
        .split_once('x')
        .ok_or_else(|| anyhow::anyhow!("footprint must be LENGTHxWIDTH, got {s:?}"))?;
    let fp = Footprint { length: l.parse()?, width: w.parse()? };
    fp.validate()?;
    Ok(fp)
}

fn require_out(out: &Option<PathBuf>) -> anyhow::Result<&PathBuf> {
    out.as_ref().ok_or_else(|| anyhow::anyhow!("--out is required for this command"))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file_cfg = FileConfig::load(cli.config.as_deref())?;
    let seed = cli.seed;

    match cli.command {
        Command::Synth { kind, agents } => {
            commands::run_synth(kind.into(), agents, seed, require_out(&cli.out)?)
        }
        Command::Preprocess { logs, map, k, horizon, pred_dt, history_hz, footprint } => {
            let scene = file_cfg.scene.as_ref();
            commands::run_preprocess(
                &logs,
                &map,
                scene.and_then(|s| s.k).unwrap_or(k),
                scene.and_then(|s| s.horizon).unwrap_or(horizon),
                scene.and_then(|s| s.pred_dt).unwrap_or(pred_dt),
                scene.and_then(|s| s.history_hz).unwrap_or(history_hz),
                parse_footprint(&footprint)?,
                seed,
                require_out(&cli.out)?,
            )
        }
        Command::Rasterize { instances, map, id, preset } => {
            let raster = file_cfg.raster(preset.as_deref())?;
            commands::run_rasterize(&instances, &map, id, &raster, require_out(&cli.out)?)
        }
        Command::Train {
            instances,
            map,
            split,
            preset,
            modes,
            horizon,
            batch,
            lr,
            epochs,
            steps,
            loss,
            alpha,
        } => {
            let raster = file_cfg.raster(preset.as_deref())?;
            let base_t = file_cfg.train.unwrap_or_default();
            let tcfg = TrainConfig {
                batch_size: batch.unwrap_or(base_t.batch_size),
                learning_rate: lr.unwrap_or(base_t.learning_rate),
                epochs: epochs.unwrap_or(base_t.epochs),
                max_steps: steps.or(base_t.max_steps),
                optimizer: OptimizerKind::Adam,
                ..base_t
            };
            let base_l = file_cfg.loss.unwrap_or_default();
            let lcfg = LossConfig {
                alpha: alpha.unwrap_or(base_l.alpha),
                kind: match loss {
                    Some(LossArg::BestMode) => LossKind::BestMode,
                    Some(LossArg::MixtureOfExperts) => LossKind::MixtureOfExperts,
                    None => base_l.kind,
                },
                ..base_l
            };
            commands::run_train(
                &instances,
                &map,
                &split,
                &raster,
                modes,
                horizon,
                &tcfg,
                &lcfg,
                seed,
                require_out(&cli.out)?,
            )
        }
        Command::Predict { instances, map, split, which, checkpoint, ekf, ekf_model, pred_dt } => {
            let predictor = match (checkpoint, ekf) {
                (Some(path), false) => Predictor::Checkpoint(path),
                (None, true) => Predictor::Ekf(match ekf_model {
                    EkfModelArg::Cv => pitcast_core::physics::ModelKind::Cv,
                    EkfModelArg::Ca => pitcast_core::physics::ModelKind::Ca,
                    EkfModelArg::Ctrv => pitcast_core::physics::ModelKind::Ctrv,
                    EkfModelArg::Ctra => pitcast_core::physics::ModelKind::Ctra,
                }),
                _ => anyhow::bail!("pass exactly one of --checkpoint <path> or --ekf"),
            };
            commands::run_predict(
                &instances,
                &map,
                &split,
                which.into(),
                &predictor,
                pred_dt,
                require_out(&cli.out)?,
            )
        }
        Command::Eval {
            instances,
            split,
            predictions,
            which,
            miss_threshold,
            filter_feasible,
            map,
        } => {
            let threshold = miss_threshold
                .or(file_cfg.eval.and_then(|e| e.miss_threshold))
                .unwrap_or(pitcast_core::eval::DEFAULT_MISS_THRESHOLD);
            commands::run_eval(
                &instances,
                &split,
                &predictions,
                which.into(),
                threshold,
                filter_feasible,
                map.as_deref(),
                require_out(&cli.out)?,
            )
        }
        Command::Plot { instances, map, predictions, id, filter_feasible } => commands::run_plot(
            &instances,
            &map,
            &predictions,
            id,
            filter_feasible,
            require_out(&cli.out)?,
        ),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
