//! Mini-batch training: raster preparation, the seeded epoch loop with
//! Adam updates, and loss-history bookkeeping.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::nn::{backward, decode_output, forward_traced, ModelParams};
use crate::raster::{render, Raster, RasterConfig};
use crate::scene::{to_agent_frame, Instance, SceneMap};
use crate::train::loss::{loss_and_raw_grad, total_loss, LossConfig};
use crate::train::optimizer::{Optimizer, OptimizerKind};

/// Window used when smoothing step losses for the stop criterion.
pub const SMOOTH_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Hard cap on optimizer steps; unlimited when absent.
    pub max_steps: Option<usize>,
    /// Stop once the smoothed training loss falls to this fraction of the
    /// step-0 loss.
    pub stop_at_train_ratio: Option<f64>,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            learning_rate: 1e-4,
            epochs: 10,
            max_steps: None,
            stop_at_train_ratio: None,
            seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

/// Model-ready samples: pre-rendered rasters, anchor motion states, and
/// agent-frame future positions.
pub struct TrainingSet {
    pub rasters: Vec<Raster>,
    pub states: Vec<(f64, f64, f64)>,
    pub futures: Vec<Vec<Vec2>>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.rasters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rasters.is_empty()
    }
}

/// Render every instance once and convert its future into the agent frame.
pub fn prepare_training_set(
    instances: &[Instance],
    map: &SceneMap,
    raster_cfg: &RasterConfig,
) -> Result<TrainingSet> {
    let mut rasters = Vec::with_capacity(instances.len());
    let mut states = Vec::with_capacity(instances.len());
    let mut futures = Vec::with_capacity(instances.len());
    for inst in instances {
        let history: Vec<_> = inst.history.iter().map(|&s| (s, inst.footprint)).collect();
        let raster = render(map, &history, raster_cfg)?;
        let anchor = inst.anchor();
        states.push((anchor.v, anchor.a, anchor.omega));
        futures.push(inst.future.iter().map(|&p| to_agent_frame(p, anchor)).collect());
        rasters.push(raster);
    }
    Ok(TrainingSet { rasters, states, futures })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    /// Mean batch loss (pre-update) at every optimizer step.
    pub step_losses: Vec<f64>,
    pub epochs: Vec<EpochStats>,
    /// Step at which the stop ratio was reached, if it was.
    pub stopped_at: Option<usize>,
}

impl TrainHistory {
    /// Trailing mean over the smoothing window ending at `step`.
    pub fn smoothed_loss(&self, step: usize) -> f64 {
        let lo = (step + 1).saturating_sub(SMOOTH_WINDOW);
        let window = &self.step_losses[lo..=step];
        window.iter().sum::<f64>() / window.len() as f64
    }
}

/// Mean loss over a set of samples with the current parameters.
pub fn evaluate_loss(
    params: &ModelParams,
    data: &TrainingSet,
    indices: &[usize],
    loss_cfg: &LossConfig,
) -> Result<f64> {
    if indices.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for &i in indices {
        let trace = forward_traced(params, &data.rasters[i], data.states[i])?;
        let (modes, _) = decode_output(&params.config, &trace.raw_output);
        let (loss, _) = total_loss(&modes, &data.futures[i], loss_cfg)?;
        total += loss;
    }
    Ok(total / indices.len() as f64)
}

/// Seeded mini-batch training. Shuffles the training indices each epoch,
/// accumulates mean gradients over each batch, applies the optimizer, and
/// tracks per-epoch validation loss. Returns the parameters with the best
/// validation loss (the final parameters when there is no validation set)
/// along with the loss history.
pub fn train(
    data: &TrainingSet,
    train_idx: &[usize],
    val_idx: &[usize],
    init: ModelParams,
    tcfg: &TrainConfig,
    lcfg: &LossConfig,
) -> Result<(ModelParams, TrainHistory)> {
    if train_idx.is_empty() {
        return Err(Error::EmptyInput("empty training split".into()));
    }
    for &i in train_idx.iter().chain(val_idx) {
        if data.futures[i].len() != init.config.horizon {
            return Err(Error::ShapeMismatch(format!(
                "instance {i} has {} future steps, model expects {}",
                data.futures[i].len(),
                init.config.horizon
            )));
        }
    }

    let mut params = init;
    let mut opt = Optimizer::new(tcfg.optimizer, tcfg.learning_rate, &params.blocks);
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut order: Vec<usize> = train_idx.to_vec();
    let mut step = 0usize;

    'epochs: for epoch in 0..tcfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;

        for batch in order.chunks(tcfg.batch_size) {
            let mut grads: Vec<Vec<f64>> =
                params.blocks.iter().map(|b| vec![0.0; b.data.len()]).collect();
            let mut batch_loss = 0.0;
            for &i in batch {
                let trace = forward_traced(&params, &data.rasters[i], data.states[i])?;
                let (modes, _) = decode_output(&params.config, &trace.raw_output);
                let (loss, _, grad_raw) =
                    loss_and_raw_grad(&params.config, &modes, &data.futures[i], lcfg)?;
                batch_loss += loss;
                let sample_grads = backward(&params, &trace, &grad_raw)?;
                for (acc, g) in grads.iter_mut().zip(sample_grads) {
                    for (a, v) in acc.iter_mut().zip(g) {
                        *a += v;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                return Err(Error::Divergence { step });
            }
            for block in &mut grads {
                for g in block.iter_mut() {
                    *g *= scale;
                }
            }

            history.step_losses.push(batch_loss);
            epoch_loss += batch_loss;
            epoch_batches += 1;
            opt.apply(&mut params.blocks, &grads);

            if let Some(ratio) = tcfg.stop_at_train_ratio {
                let smoothed = history.smoothed_loss(step);
                if smoothed <= ratio * history.step_losses[0] {
                    history.stopped_at = Some(step);
                    break 'epochs;
                }
            }
            step += 1;
            if tcfg.max_steps.is_some_and(|max| step >= max) {
                break 'epochs;
            }
        }

        let val_loss = evaluate_loss(&params, data, val_idx, lcfg)?;
        history.epochs.push(EpochStats {
            epoch,
            train_loss: epoch_loss / epoch_batches.max(1) as f64,
            val_loss,
        });
        if !val_idx.is_empty() && best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, params.clone()));
        }
    }

    let final_params = match best {
        Some((_, p)) => p,
        None => params,
    };
    Ok((final_params, history))
}

/// Loss history as `epoch,train_loss,val_loss` CSV.
pub fn write_history_csv(path: &Path, history: &TrainHistory) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "epoch,train_loss,val_loss")?;
    for e in &history.epochs {
        writeln!(out, "{},{},{}", e.epoch, e.train_loss, e.val_loss)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetConfig;
    use crate::scene::{make_instances, resample, synth_scenario, ScenarioKind};
    use crate::train::loss::LossKind;

    fn tiny_raster_cfg() -> RasterConfig {
        RasterConfig { resolution: 7.5, size_px: 16, agent_px: (8, 4), fade_delta: 0.1 }
    }

    fn tiny_net(horizon: usize, modes: usize) -> NetConfig {
        NetConfig {
            conv_channels: vec![4, 8],
            hidden: 32,
            ..NetConfig::new(tiny_raster_cfg(), horizon, modes)
        }
    }

    fn small_dataset(seed: u64) -> (TrainingSet, usize) {
        let (map, trajs) = synth_scenario(ScenarioKind::Straight, 4, seed).unwrap();
        let mut instances = Vec::new();
        for traj in &trajs {
            let two_hz = resample(&traj, 2.0).unwrap();
            instances.extend(make_instances(&two_hz, 6, 6, 1.0).unwrap());
        }
        let data = prepare_training_set(&instances, &map, &tiny_raster_cfg()).unwrap();
        let n = data.len();
        (data, n)
    }

    #[test]
    fn zero_lr_leaves_params_bit_identical() {
        let (data, n) = small_dataset(21);
        let idx: Vec<usize> = (0..n).collect();
        let init = ModelParams::init(tiny_net(6, 2), 5).unwrap();
        let tcfg = TrainConfig {
            batch_size: 8,
            learning_rate: 0.0,
            epochs: 2,
            ..TrainConfig::default()
        };
        let (out, _) = train(&data, &idx, &[], init.clone(), &tcfg, &LossConfig::default()).unwrap();
        assert_eq!(out.blocks, init.blocks);
    }

    #[test]
    fn same_seed_gives_identical_history() {
        let (data, n) = small_dataset(22);
        let idx: Vec<usize> = (0..n).collect();
        let tcfg = TrainConfig {
            batch_size: 16,
            learning_rate: 1e-3,
            epochs: 2,
            seed: 9,
            ..TrainConfig::default()
        };
        let run = || {
            let init = ModelParams::init(tiny_net(6, 2), 5).unwrap();
            train(&data, &idx, &[], init, &tcfg, &LossConfig::default()).unwrap()
        };
        let (pa, ha) = run();
        let (pb, hb) = run();
        assert_eq!(ha.step_losses, hb.step_losses);
        assert_eq!(pa.blocks, pb.blocks);
    }

    #[test]
    fn overfits_single_instance() {
        let (data, _) = small_dataset(23);
        let idx = vec![0usize];
        let init = ModelParams::init(tiny_net(6, 1), 5).unwrap();
        let tcfg = TrainConfig {
            batch_size: 1,
            learning_rate: 3e-3,
            epochs: 500,
            max_steps: Some(500),
            ..TrainConfig::default()
        };
        let (_, history) = train(&data, &idx, &[], init, &tcfg, &LossConfig::default()).unwrap();
        assert_eq!(history.step_losses.len(), 500);
        let initial = history.step_losses[0];
        let final_loss = *history.step_losses.last().unwrap();
        assert!(
            final_loss < 0.1 * initial,
            "loss {final_loss} vs initial {initial}"
        );
        // Smoothed over 50-step windows, the curve is monotone decreasing.
        let smoothed: Vec<f64> =
            (SMOOTH_WINDOW - 1..500).map(|s| history.smoothed_loss(s)).collect();
        for w in smoothed.windows(2) {
            assert!(w[1] <= w[0] * 1.02, "smoothed loss rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn me_loss_trains_too() {
        let (data, n) = small_dataset(24);
        let idx: Vec<usize> = (0..n).collect();
        let init = ModelParams::init(tiny_net(6, 2), 1).unwrap();
        let tcfg = TrainConfig {
            batch_size: 16,
            learning_rate: 1e-3,
            epochs: 3,
            ..TrainConfig::default()
        };
        let lcfg = LossConfig { kind: LossKind::MixtureOfExperts, ..LossConfig::default() };
        let (_, history) = train(&data, &idx, &[], init, &tcfg, &lcfg).unwrap();
        let last = *history.step_losses.last().unwrap();
        assert!(last < history.step_losses[0]);
    }

    #[test]
    fn best_val_params_returned() {
        let (data, n) = small_dataset(25);
        let split_at = n * 3 / 4;
        let train_idx: Vec<usize> = (0..split_at).collect();
        let val_idx: Vec<usize> = (split_at..n).collect();
        let init = ModelParams::init(tiny_net(6, 2), 5).unwrap();
        let tcfg = TrainConfig {
            batch_size: 16,
            learning_rate: 1e-3,
            epochs: 4,
            seed: 3,
            ..TrainConfig::default()
        };
        let lcfg = LossConfig::default();
        let (best, history) = train(&data, &train_idx, &val_idx, init, &tcfg, &lcfg).unwrap();
        let best_epoch_loss =
            history.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        let returned = evaluate_loss(&best, &data, &val_idx, &lcfg).unwrap();
        assert!((returned - best_epoch_loss).abs() < 1e-9);
    }

    #[test]
    fn horizon_mismatch_rejected() {
        let (data, n) = small_dataset(26);
        let idx: Vec<usize> = (0..n).collect();
        let init = ModelParams::init(tiny_net(4, 2), 5).unwrap();
        assert!(train(&data, &idx, &[], init, &TrainConfig::default(), &LossConfig::default())
            .is_err());
    }
}
