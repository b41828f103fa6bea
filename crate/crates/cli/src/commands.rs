//! Subcommand implementations. Every command validates its inputs, writes
//! its artifacts through an [`OutputGuard`], and prints a short summary.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use pitcast_core::eval::{
    compare, feasibility_filter, read_predictions, write_predictions, Prediction,
};
use pitcast_core::geom::Vec2;
use pitcast_core::nn::{checkpoint, forward, ModelParams, NetConfig};
use pitcast_core::physics::{ekf_forecast, ModelKind, ProcessModel};
use pitcast_core::raster::{export_png, export_ppm, render, RasterConfig};
use pitcast_core::scene::{
    io, make_instances, resample, source_hz, split_dataset, split_on_gaps, synth_scenario,
    DatasetSplit, Footprint, Instance, ScenarioKind, SceneMap, Trajectory,
};
use pitcast_core::train::{
    prepare_training_set, train, write_history_csv, LossConfig, TrainConfig,
};

use crate::config::seed_stream;
use crate::output::OutputGuard;
use crate::plot::{render_svg, PlotInput};

pub fn load_instances(path: &Path) -> anyhow::Result<Vec<Instance>> {
    io::read_instances(path).with_context(|| format!("reading instances {}", path.display()))
}

pub fn load_map(path: &Path) -> anyhow::Result<SceneMap> {
    io::read_map(path).with_context(|| format!("reading map {}", path.display()))
}

pub fn load_split(path: &Path) -> anyhow::Result<DatasetSplit> {
    io::read_split(path).with_context(|| format!("reading split {}", path.display()))
}

pub fn run_synth(
    kind: ScenarioKind,
    agents: usize,
    seed: u64,
    out_dir: &Path,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let (map, trajectories) = synth_scenario(kind, agents, seed_stream(seed, "synth"))?;
    let mut guard = OutputGuard::new();
    let map_path = guard.register(&out_dir.join("map.json"));
    let log_path = guard.register(&out_dir.join("trajectories.csv"));
    io::write_map(&map_path, &map)?;
    io::write_trajectories_csv(&log_path, &trajectories)?;
    guard.commit();
    let frames: usize = trajectories.iter().map(|t| t.states.len()).sum();
    println!(
        "synth {kind:?}: {} agents, {frames} frames at 10 Hz -> {}",
        trajectories.len(),
        out_dir.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn run_preprocess(
    logs: &Path,
    map_path: &Path,
    k: usize,
    horizon: usize,
    pred_dt: f64,
    history_hz: f64,
    footprint: Footprint,
    seed: u64,
    out_dir: &Path,
) -> anyhow::Result<()> {
    // Validate the map early; it travels with the instances.
    load_map(map_path)?;
    let raw = io::read_trajectories(logs, footprint)
        .with_context(|| format!("reading logs {}", logs.display()))?;
    if raw.is_empty() {
        bail!("no instances: log file {} holds no trajectories", logs.display());
    }

    let mut pieces: Vec<Trajectory> = Vec::new();
    let mut frames = 0usize;
    for traj in &raw {
        frames += traj.states.len();
        let nominal = 1.0 / source_hz(traj)?;
        pieces.extend(split_on_gaps(traj, nominal));
    }

    let mut instances = Vec::new();
    for piece in &pieces {
        let downsampled = resample(piece, history_hz)?;
        for mut inst in make_instances(&downsampled, k, horizon, pred_dt)? {
            inst.id = instances.len();
            instances.push(inst);
        }
    }
    if instances.is_empty() {
        bail!("no instances: trajectories too short for k={k}, H={horizon}");
    }
    let split = split_dataset(instances.len(), [7.0, 1.5, 1.5], seed_stream(seed, "split"))?;

    std::fs::create_dir_all(out_dir)?;
    let mut guard = OutputGuard::new();
    let inst_path = guard.register(&out_dir.join("instances.jsonl"));
    let split_path = guard.register(&out_dir.join("splits.json"));
    io::write_instances(&inst_path, &instances)?;
    io::write_split(&split_path, &split)?;
    guard.commit();
    println!(
        "preprocess: k={k} H={horizon} pred_dt={pred_dt}s history={history_hz}Hz | \
         {} trajectories ({} after gap splitting), {frames} source frames | \
         {} instances, split 7:1.5:1.5 -> {}/{}/{}",
        raw.len(),
        pieces.len(),
        instances.len(),
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(())
}

pub fn run_rasterize(
    instances_path: &Path,
    map_path: &Path,
    id: usize,
    raster_cfg: &RasterConfig,
    out: &Path,
) -> anyhow::Result<()> {
    let instances = load_instances(instances_path)?;
    let map = load_map(map_path)?;
    let inst = instances
        .iter()
        .find(|i| i.id == id)
        .with_context(|| format!("no instance with id {id}"))?;
    let history: Vec<_> = inst.history.iter().map(|&s| (s, inst.footprint)).collect();
    let raster = render(&map, &history, raster_cfg)?;
    let mut guard = OutputGuard::new();
    let out = guard.register(out);
    if out.extension().is_some_and(|e| e == "ppm") {
        export_ppm(&raster, &out)?;
    } else {
        export_png(&raster, &out)?;
    }
    guard.commit();
    println!(
        "rasterize: instance {id} at {} px ({} m/px) -> {}",
        raster_cfg.size_px,
        raster_cfg.resolution,
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn run_train(
    instances_path: &Path,
    map_path: &Path,
    split_path: &Path,
    raster_cfg: &RasterConfig,
    modes: usize,
    horizon: usize,
    tcfg: &TrainConfig,
    lcfg: &LossConfig,
    seed: u64,
    out: &Path,
) -> anyhow::Result<()> {
    let instances = load_instances(instances_path)?;
    let map = load_map(map_path)?;
    let split = load_split(split_path)?;
    if split.total() != instances.len() {
        bail!("split covers {} instances, file has {}", split.total(), instances.len());
    }

    let data = prepare_training_set(&instances, &map, raster_cfg)?;
    let net = NetConfig::new(*raster_cfg, horizon, modes);
    let init = ModelParams::init(net, seed_stream(seed, "model-init"))?;
    let tcfg = TrainConfig { seed: seed_stream(seed, "train-shuffle"), ..*tcfg };

    let (params, history) = train(&data, &split.train, &split.val, init, &tcfg, lcfg)?;

    let mut guard = OutputGuard::new();
    let ckpt = guard.register(out);
    let history_path = guard.register(&out.with_extension("loss.csv"));
    checkpoint::save(&params, &ckpt)?;
    write_history_csv(&history_path, &history)?;
    guard.commit();

    let last = history.epochs.last();
    println!(
        "train: M={modes} H={horizon}, {} steps{} | train {:.4} val {:.4} -> {}",
        history.step_losses.len(),
        history
            .stopped_at
            .map(|s| format!(" (stop ratio hit at step {s})"))
            .unwrap_or_default(),
        last.map(|e| e.train_loss).unwrap_or(f64::NAN),
        last.map(|e| e.val_loss).unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitChoice {
    Train,
    Val,
    Test,
    All,
}

impl SplitChoice {
    fn indices(self, split: &DatasetSplit) -> Vec<usize> {
        match self {
            SplitChoice::Train => split.train.clone(),
            SplitChoice::Val => split.val.clone(),
            SplitChoice::Test => split.test.clone(),
            SplitChoice::All => {
                let mut all: Vec<usize> =
                    split.train.iter().chain(&split.val).chain(&split.test).copied().collect();
                all.sort_unstable();
                all
            }
        }
    }
}

pub enum Predictor {
    Checkpoint(PathBuf),
    Ekf(ModelKind),
}

pub fn run_predict(
    instances_path: &Path,
    map_path: &Path,
    split_path: &Path,
    which: SplitChoice,
    predictor: &Predictor,
    pred_dt: f64,
    out: &Path,
) -> anyhow::Result<()> {
    let instances = load_instances(instances_path)?;
    let map = load_map(map_path)?;
    let split = load_split(split_path)?;
    let by_id: HashMap<usize, &Instance> = instances.iter().map(|i| (i.id, i)).collect();
    let ids = which.indices(&split);

    let mut predictions = Vec::with_capacity(ids.len());
    match predictor {
        Predictor::Checkpoint(path) => {
            let params = checkpoint::load(path)
                .with_context(|| format!("loading checkpoint {}", path.display()))?;
            let tag = format!("model-M{}", params.config.modes);
            for &id in &ids {
                let inst = by_id[&id];
                let history: Vec<_> =
                    inst.history.iter().map(|&s| (s, inst.footprint)).collect();
                let raster = render(&map, &history, &params.config.raster)?;
                let anchor = inst.anchor();
                let (modes, _) = forward(&params, &raster, (anchor.v, anchor.a, anchor.omega))?;
                predictions.push(Prediction::new(
                    id,
                    tag.clone(),
                    modes.to_world(anchor),
                    modes.probs.clone(),
                ));
            }
        }
        Predictor::Ekf(kind) => {
            let model = ProcessModel::default_noise(*kind);
            for &id in &ids {
                let inst = by_id[&id];
                let traj = ekf_forecast(&inst.history, &model, inst.future.len(), pred_dt)?;
                predictions.push(Prediction::new(id, "ekf", vec![traj], vec![1.0]));
            }
        }
    }

    let mut guard = OutputGuard::new();
    let out = guard.register(out);
    write_predictions(&out, &predictions)?;
    guard.commit();
    let tag = predictions.first().map(|p| p.source.clone()).unwrap_or_default();
    println!("predict: {tag} on {} instances -> {}", predictions.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn run_eval(
    instances_path: &Path,
    split_path: &Path,
    prediction_files: &[PathBuf],
    which: SplitChoice,
    miss_threshold: f64,
    filter_feasible: bool,
    map_path: Option<&Path>,
    out: &Path,
) -> anyhow::Result<()> {
    let instances = load_instances(instances_path)?;
    let split = load_split(split_path)?;
    let ids = which.indices(&split);
    let by_id: HashMap<usize, &Instance> = instances.iter().map(|i| (i.id, i)).collect();
    let ground_truth: HashMap<usize, Vec<Vec2>> = ids
        .iter()
        .map(|&id| (id, by_id[&id].future.clone()))
        .collect();

    let map = match (filter_feasible, map_path) {
        (true, Some(path)) => Some(load_map(path)?),
        (true, None) => bail!("--filter-feasible needs --map"),
        _ => None,
    };

    let mut methods: Vec<(String, Vec<Prediction>)> = Vec::new();
    for file in prediction_files {
        let mut preds = read_predictions(file)
            .with_context(|| format!("reading predictions {}", file.display()))?;
        if preds.is_empty() {
            bail!("prediction file {} is empty", file.display());
        }
        let tag = preds[0].source.clone();
        if preds.iter().any(|p| p.source != tag) {
            bail!("prediction file {} mixes method tags", file.display());
        }
        if let Some(map) = &map {
            preds = preds.iter().map(|p| feasibility_filter(p, map)).collect();
        }
        methods.push((tag, preds));
    }

    let report = compare(&methods, &ground_truth, miss_threshold)?;
    let mut guard = OutputGuard::new();
    let csv_path = guard.register(&out.with_extension("csv"));
    let txt_path = guard.register(&out.with_extension("txt"));
    std::fs::write(&csv_path, report.to_csv())?;
    std::fs::write(&txt_path, report.to_text())?;
    guard.commit();
    print!("{}", report.to_text());
    println!("eval: {} methods on {} instances -> {}", report.rows.len(), ids.len(), csv_path.display());
    Ok(())
}

pub fn run_plot(
    instances_path: &Path,
    map_path: &Path,
    predictions_path: &Path,
    id: usize,
    filter_feasible: bool,
    out: &Path,
) -> anyhow::Result<()> {
    let instances = load_instances(instances_path)?;
    let map = load_map(map_path)?;
    let preds = read_predictions(predictions_path)?;
    let pred = preds
        .iter()
        .find(|p| p.id == id)
        .with_context(|| format!("no prediction record for instance {id}"))?;
    let inst = instances
        .iter()
        .find(|i| i.id == id)
        .with_context(|| format!("no instance with id {id}"))?;

    let (prediction, infeasible) = if filter_feasible {
        let flags: Vec<bool> = pred
            .modes
            .iter()
            .map(|traj| traj.iter().any(|&p| !map.is_drivable(p)))
            .collect();
        (feasibility_filter(pred, &map), flags)
    } else {
        (pred.clone(), Vec::new())
    };

    let svg = render_svg(&PlotInput {
        map: &map,
        ground_truth: &inst.future,
        prediction: &prediction,
        infeasible: &infeasible,
    });
    let mut guard = OutputGuard::new();
    let out = guard.register(out);
    std::fs::write(&out, svg)?;
    guard.commit();
    println!("plot: instance {id} ({} modes) -> {}", prediction.modes.len(), out.display());
    Ok(())
}
