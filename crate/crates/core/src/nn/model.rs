//! The compact convolutional predictor: a stride-2 conv stack over the
//! BEV raster, global average pooling, concatenation with the normalized
//! motion state (v, a, ω), and an MLP head emitting (2H+1)·M values —
//! M·2H trajectory coordinates plus M mode logits.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::nn::layers::{
    conv2d_backward, conv2d_forward, conv_out_size, global_avg_pool_backward,
    global_avg_pool_forward, linear_backward, linear_forward, relu_backward, relu_forward,
    softmax, KERNEL,
};
use crate::nn::tensor::Tensor;
use crate::raster::{Raster, RasterConfig};
use crate::scene::{from_agent_frame, AgentState};

/// Architecture and normalization constants. Everything a checkpoint needs
/// to reproduce the forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub raster: RasterConfig,
    /// Channels per conv block (each block is a 3×3 stride-2 conv + ReLU).
    pub conv_channels: Vec<usize>,
    /// Width of the hidden MLP layer.
    pub hidden: usize,
    /// Prediction horizon H.
    pub horizon: usize,
    /// Mode count M.
    pub modes: usize,
    /// Divisors bringing (v, a, ω) to O(1).
    pub state_norm: [f64; 3],
    /// Meters represented by one unit of raw head output.
    pub output_scale: f64,
}

impl NetConfig {
    pub fn new(raster: RasterConfig, horizon: usize, modes: usize) -> Self {
        NetConfig {
            raster,
            conv_channels: vec![16, 32, 64],
            hidden: 128,
            horizon,
            modes,
            state_norm: [15.0, 3.0, 0.5],
            output_scale: 10.0,
        }
    }

    /// Length of the raw head output: (2H+1)·M.
    pub fn head_len(&self) -> usize {
        (2 * self.horizon + 1) * self.modes
    }

    /// Feature length after pooling and state concatenation.
    pub fn feature_len(&self) -> usize {
        self.conv_channels.last().copied().unwrap_or(0) + 3
    }

    /// Block names and shapes in declared (checkpoint) order.
    pub fn block_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut layout = Vec::new();
        let mut in_ch = 3;
        for (i, &oc) in self.conv_channels.iter().enumerate() {
            layout.push((format!("conv{i}_w"), vec![oc, KERNEL, KERNEL, in_ch]));
            layout.push((format!("conv{i}_b"), vec![oc]));
            in_ch = oc;
        }
        layout.push(("head1_w".into(), vec![self.hidden, self.feature_len()]));
        layout.push(("head1_b".into(), vec![self.hidden]));
        layout.push(("head2_w".into(), vec![self.head_len(), self.hidden]));
        layout.push(("head2_b".into(), vec![self.head_len()]));
        layout
    }

    pub fn validate(&self) -> Result<()> {
        self.raster.validate()?;
        if self.conv_channels.is_empty() || self.horizon == 0 || self.modes == 0 {
            return Err(Error::ShapeMismatch("degenerate architecture".into()));
        }
        let mut side = self.raster.size_px;
        for _ in &self.conv_channels {
            side = conv_out_size(side);
            if side == 0 {
                return Err(Error::ShapeMismatch("raster too small for conv stack".into()));
            }
        }
        Ok(())
    }
}

/// One named parameter block. Storage is f32 (the checkpoint format);
/// all arithmetic upcasts to f64.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl ParamBlock {
    pub fn as_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

/// All trainable parameters plus the architecture they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: NetConfig,
    pub blocks: Vec<ParamBlock>,
}

impl ModelParams {
    /// He-uniform initialization for conv/hidden layers, zero biases; the
    /// final layer is scaled down so initial trajectories start near the
    /// origin. Deterministic under `seed`.
    pub fn init(config: NetConfig, seed: u64) -> Result<ModelParams> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = config.block_layout();
        let last_w = layout.len() - 2;
        let blocks = layout
            .into_iter()
            .enumerate()
            .map(|(idx, (name, shape))| {
                let len: usize = shape.iter().product();
                let data = if name.ends_with("_b") {
                    vec![0.0f32; len]
                } else {
                    let fan_in: usize = shape[1..].iter().product();
                    let limit = (6.0 / fan_in as f64).sqrt();
                    let damp = if idx == last_w { 0.01 } else { 1.0 };
                    (0..len)
                        .map(|_| (rng.random_range(-limit..limit) * damp) as f32)
                        .collect()
                };
                ParamBlock { name, shape, data }
            })
            .collect();
        Ok(ModelParams { config, blocks })
    }

    pub fn n_params(&self) -> usize {
        self.blocks.iter().map(|b| b.data.len()).sum()
    }

    fn conv_count(&self) -> usize {
        self.config.conv_channels.len()
    }

    /// Check the block list against the architecture.
    pub fn validate(&self) -> Result<()> {
        let layout = self.config.block_layout();
        if layout.len() != self.blocks.len() {
            return Err(Error::ArchitectureMismatch(format!(
                "{} blocks vs {} expected",
                self.blocks.len(),
                layout.len()
            )));
        }
        for (block, (name, shape)) in self.blocks.iter().zip(&layout) {
            if &block.name != name || &block.shape != shape {
                return Err(Error::ArchitectureMismatch(format!(
                    "block {} {:?} vs expected {} {:?}",
                    block.name, block.shape, name, shape
                )));
            }
            let len: usize = shape.iter().product();
            if block.data.len() != len {
                return Err(Error::ArchitectureMismatch(format!(
                    "block {} has {} values, shape wants {len}",
                    block.name,
                    block.data.len()
                )));
            }
        }
        Ok(())
    }
}

/// M predicted agent-frame trajectories with a probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    /// M sequences of H positions, agent frame, meters.
    pub trajectories: Vec<Vec<Vec2>>,
    pub probs: Vec<f64>,
}

impl ModeSet {
    pub fn validate(&self) -> Result<()> {
        if self.trajectories.len() != self.probs.len() {
            return Err(Error::ShapeMismatch("modes vs probs".into()));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || self.probs.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidState(format!("probs sum {sum}")));
        }
        if self.trajectories.iter().flatten().any(|p| !p.is_finite()) {
            return Err(Error::InvalidState("non-finite mode position".into()));
        }
        Ok(())
    }

    /// Convert every mode into world frame through the raster anchor.
    pub fn to_world(&self, anchor: &AgentState) -> Vec<Vec<Vec2>> {
        self.trajectories
            .iter()
            .map(|traj| traj.iter().map(|&p| from_agent_frame(p, anchor)).collect())
            .collect()
    }
}

/// Retained intermediates of one forward pass, consumed by [`backward`].
pub struct ForwardTrace {
    /// Normalized input image.
    input: Tensor,
    /// Pre-activation output of each conv block.
    conv_pre: Vec<Tensor>,
    /// Post-ReLU output of each conv block.
    conv_post: Vec<Tensor>,
    /// Pooled features concatenated with the normalized state.
    features: Vec<f64>,
    /// Hidden layer pre-activation and activation.
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    /// Raw head output, length (2H+1)·M.
    pub raw_output: Vec<f64>,
}

impl ForwardTrace {
    /// Sign pattern of every ReLU pre-activation. Finite-difference probes
    /// are only valid where this pattern is stable, since the loss is not
    /// differentiable across a ReLU kink.
    pub fn relu_signature(&self) -> Vec<bool> {
        self.conv_pre
            .iter()
            .flat_map(|t| t.data.iter())
            .chain(self.hidden_pre.iter())
            .map(|&z| z > 0.0)
            .collect()
    }
}

/// Raster pixels to a normalized HWC tensor in [0, 1].
pub fn raster_to_tensor(raster: &Raster) -> Tensor {
    let n = raster.config.size_px;
    Tensor {
        shape: vec![n, n, 3],
        data: raster.pixels.iter().map(|&p| p as f64 / 255.0).collect(),
    }
}

fn check_input(params: &ModelParams, raster: &Raster) -> Result<()> {
    if raster.config != params.config.raster {
        return Err(Error::ArchitectureMismatch(format!(
            "raster config {:?} vs model's {:?}",
            raster.config, params.config.raster
        )));
    }
    Ok(())
}

/// Full forward pass retaining intermediates for the backward pass.
pub fn forward_traced(
    params: &ModelParams,
    raster: &Raster,
    state: (f64, f64, f64),
) -> Result<ForwardTrace> {
    check_input(params, raster)?;
    if ![state.0, state.1, state.2].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidState("non-finite motion state".into()));
    }
    let cfg = &params.config;
    let n_conv = params.conv_count();

    let input = raster_to_tensor(raster);
    let mut conv_pre = Vec::with_capacity(n_conv);
    let mut conv_post = Vec::with_capacity(n_conv);
    let mut x = input.clone();
    for i in 0..n_conv {
        let w = params.blocks[2 * i].as_f64();
        let b = params.blocks[2 * i + 1].as_f64();
        let pre = conv2d_forward(&x, &w, &b)?;
        let post = relu_forward(&pre);
        conv_pre.push(pre);
        x = post.clone();
        conv_post.push(post);
    }

    let mut features = global_avg_pool_forward(&x);
    features.push(state.0 / cfg.state_norm[0]);
    features.push(state.1 / cfg.state_norm[1]);
    features.push(state.2 / cfg.state_norm[2]);

    let w1 = params.blocks[2 * n_conv].as_f64();
    let b1 = params.blocks[2 * n_conv + 1].as_f64();
    let hidden_pre = linear_forward(&features, &w1, &b1);
    let hidden: Vec<f64> = hidden_pre.iter().map(|&v| v.max(0.0)).collect();

    let w2 = params.blocks[2 * n_conv + 2].as_f64();
    let b2 = params.blocks[2 * n_conv + 3].as_f64();
    let raw_output = linear_forward(&hidden, &w2, &b2);
    if !raw_output.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidState("non-finite head output".into()));
    }

    Ok(ForwardTrace { input, conv_pre, conv_post, features, hidden_pre, hidden, raw_output })
}

/// Split the raw head output into M trajectories (scaled to meters) and
/// softmax probabilities. Coordinates come first, mode-major, as
/// (x₁, y₁, …, x_H, y_H); the final M values are the logits.
pub fn decode_output(cfg: &NetConfig, raw: &[f64]) -> (ModeSet, Vec<f64>) {
    let (h, m) = (cfg.horizon, cfg.modes);
    let trajectories = (0..m)
        .map(|mode| {
            (0..h)
                .map(|step| {
                    let base = mode * 2 * h + 2 * step;
                    Vec2::new(raw[base] * cfg.output_scale, raw[base + 1] * cfg.output_scale)
                })
                .collect()
        })
        .collect();
    let logits = raw[m * 2 * h..].to_vec();
    let probs = softmax(&logits);
    (ModeSet { trajectories, probs }, logits)
}

/// Predict M trajectories and their probabilities for one raster + motion
/// state. Returns the mode set and the raw logits.
pub fn forward(
    params: &ModelParams,
    raster: &Raster,
    state: (f64, f64, f64),
) -> Result<(ModeSet, Vec<f64>)> {
    let trace = forward_traced(params, raster, state)?;
    Ok(decode_output(&params.config, &trace.raw_output))
}

/// Exact gradients of a scalar loss with respect to every parameter block,
/// given dL/d(raw head output). Blocks are returned in declared order.
pub fn backward(
    params: &ModelParams,
    trace: &ForwardTrace,
    grad_raw: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if grad_raw.len() != trace.raw_output.len() {
        return Err(Error::ShapeMismatch(format!(
            "loss gradient length {} vs head {}",
            grad_raw.len(),
            trace.raw_output.len()
        )));
    }
    let n_conv = params.conv_count();
    let mut grads: Vec<Vec<f64>> = params.blocks.iter().map(|b| vec![0.0; b.data.len()]).collect();

    let w2 = params.blocks[2 * n_conv + 2].as_f64();
    let (d_hidden, d_w2, d_b2) = linear_backward(&trace.hidden, &w2, grad_raw);
    grads[2 * n_conv + 2] = d_w2;
    grads[2 * n_conv + 3] = d_b2;

    let d_hidden_pre: Vec<f64> = trace
        .hidden_pre
        .iter()
        .zip(&d_hidden)
        .map(|(&z, &g)| if z > 0.0 { g } else { 0.0 })
        .collect();

    let w1 = params.blocks[2 * n_conv].as_f64();
    let (d_features, d_w1, d_b1) = linear_backward(&trace.features, &w1, &d_hidden_pre);
    grads[2 * n_conv] = d_w1;
    grads[2 * n_conv + 1] = d_b1;

    // Drop the three state entries; pool gradient covers the rest.
    let pooled_len = d_features.len() - 3;
    let last_shape = &trace.conv_post[n_conv - 1].shape;
    let mut d_x = global_avg_pool_backward(last_shape, &d_features[..pooled_len]);

    for i in (0..n_conv).rev() {
        let d_pre = relu_backward(&trace.conv_pre[i], &d_x);
        let input = if i == 0 { &trace.input } else { &trace.conv_post[i - 1] };
        let w = params.blocks[2 * i].as_f64();
        let (d_in, d_w, d_b) = conv2d_backward(input, &w, &d_pre);
        grads[2 * i] = d_w;
        grads[2 * i + 1] = d_b;
        d_x = d_in;
    }
    Ok(grads)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::raster::render;
    use crate::scene::{Footprint, SceneMap};

    pub(crate) fn tiny_config() -> NetConfig {
        let raster = RasterConfig { resolution: 7.5, size_px: 16, agent_px: (8, 4), fade_delta: 0.1 };
        NetConfig {
            raster,
            conv_channels: vec![4, 6],
            hidden: 16,
            horizon: 3,
            modes: 2,
            state_norm: [15.0, 3.0, 0.5],
            output_scale: 10.0,
        }
    }

    pub(crate) fn tiny_raster(cfg: &NetConfig) -> Raster {
        let anchor = AgentState { t: 0.0, x: 0.0, y: 0.0, theta: 0.4, v: 6.0, a: 0.3, omega: 0.1 };
        let map = SceneMap {
            origin_note: String::new(),
            drivable: vec![crate::geom::Polygon::new(vec![
                Vec2::new(-60.0, -25.0),
                Vec2::new(70.0, -20.0),
                Vec2::new(65.0, 30.0),
                Vec2::new(-55.0, 25.0),
            ])],
            non_drivable: vec![],
        };
        render(&map, &[(anchor, Footprint::PICKUP)], &cfg.raster).unwrap()
    }

    #[test]
    fn head_emits_2h_plus_1_times_m_values() {
        for (h, m) in [(6usize, 5usize), (6, 1), (12, 3)] {
            let mut cfg = tiny_config();
            cfg.horizon = h;
            cfg.modes = m;
            assert_eq!(cfg.head_len(), (2 * h + 1) * m);
            let params = ModelParams::init(cfg.clone(), 0).unwrap();
            let raster = tiny_raster(&cfg);
            let trace = forward_traced(&params, &raster, (5.0, 0.1, 0.02)).unwrap();
            assert_eq!(trace.raw_output.len(), (2 * h + 1) * m);
            let (modes, logits) = decode_output(&cfg, &trace.raw_output);
            assert_eq!(modes.trajectories.len(), m);
            assert_eq!(logits.len(), m);
            assert!(modes.trajectories.iter().all(|t| t.len() == h));
            modes.validate().unwrap();
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = tiny_config();
        let params = ModelParams::init(cfg.clone(), 3).unwrap();
        let raster = tiny_raster(&cfg);
        let (a, la) = forward(&params, &raster, (5.0, 0.1, 0.02)).unwrap();
        let (b, lb) = forward(&params, &raster, (5.0, 0.1, 0.02)).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn equal_logits_give_uniform_probs() {
        let cfg = tiny_config();
        let raw = vec![0.0; cfg.head_len()];
        let (modes, _) = decode_output(&cfg, &raw);
        for p in modes.probs {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn raster_config_mismatch_rejected() {
        let cfg = tiny_config();
        let params = ModelParams::init(cfg.clone(), 0).unwrap();
        let mut other = cfg;
        other.raster = RasterConfig::small();
        let raster = tiny_raster(&other);
        match forward(&params, &raster, (1.0, 0.0, 0.0)) {
            Err(Error::ArchitectureMismatch(_)) => {}
            other => panic!("expected architecture mismatch, got {other:?}"),
        }
    }

    #[test]
    fn zero_loss_grad_gives_zero_param_grads() {
        let cfg = tiny_config();
        let params = ModelParams::init(cfg.clone(), 1).unwrap();
        let raster = tiny_raster(&cfg);
        let trace = forward_traced(&params, &raster, (4.0, 0.0, 0.0)).unwrap();
        let grads = backward(&params, &trace, &vec![0.0; cfg.head_len()]).unwrap();
        assert!(grads.iter().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn full_model_gradcheck() {
        // Random linear loss over the raw output; compare analytic gradients
        // against central differences for a sample from every block. The
        // perturbations are the exactly-representable f32 steps.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let cfg = tiny_config();
        let mut params = ModelParams::init(cfg.clone(), 2).unwrap();
        // Check at a generic point: zero-init biases park black-pixel
        // pre-activations exactly on the ReLU kink, where no difference
        // quotient is a derivative.
        for block in &mut params.blocks {
            if block.name.ends_with("_b") {
                for v in &mut block.data {
                    *v = rng.random_range(-0.2..0.2);
                }
            }
        }
        let raster = tiny_raster(&cfg);
        let state = (6.0, 0.5, -0.1);
        let cost: Vec<f64> = (0..cfg.head_len()).map(|_| rng.random_range(-1.0..1.0)).collect();

        let loss_and_sig = |p: &ModelParams| -> (f64, Vec<bool>) {
            let t = forward_traced(p, &raster, state).unwrap();
            let l = t.raw_output.iter().zip(&cost).map(|(o, c)| o * c).sum();
            (l, t.relu_signature())
        };
        let trace = forward_traced(&params, &raster, state).unwrap();
        let grads = backward(&params, &trace, &cost).unwrap();

        for (bi, block) in params.blocks.iter().enumerate() {
            let mut checked = 0;
            let mut attempts = 0;
            while checked < 6 && attempts < 60 {
                attempts += 1;
                let idx = rng.random_range(0..block.data.len());
                let w = block.data[idx];
                let eps = 1e-4_f32.max(w.abs() * 1e-4);
                let mut plus = params.clone();
                plus.blocks[bi].data[idx] = w + eps;
                let mut minus = params.clone();
                minus.blocks[bi].data[idx] = w - eps;
                let actual_step =
                    (plus.blocks[bi].data[idx] as f64) - (minus.blocks[bi].data[idx] as f64);
                let (lp, sig_p) = loss_and_sig(&plus);
                let (lm, sig_m) = loss_and_sig(&minus);
                if sig_p != sig_m {
                    // The probe straddles a ReLU kink; the difference
                    // quotient is not a derivative there.
                    continue;
                }
                let fd = (lp - lm) / actual_step;
                let an = grads[bi][idx];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                assert!(rel < 1e-5, "block {} [{idx}]: fd={fd} analytic={an}", block.name);
                checked += 1;
            }
            assert!(checked >= 4, "too few clean probes for block {}", block.name);
        }
    }
}
