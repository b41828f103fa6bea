//! Layer primitives with exact analytic backward passes: 3×3 stride-2
//! convolution, ReLU, global average pooling, fully-connected, softmax.
//!
//! Activations are HWC tensors; convolution weights are [oc, 3, 3, ic] so
//! the inner products run over contiguous memory.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

pub const KERNEL: usize = 3;
pub const STRIDE: usize = 2;
pub const PAD: usize = 1;

/// Output side length of the stride-2 convolution.
pub fn conv_out_size(n: usize) -> usize {
    (n + 2 * PAD - KERNEL) / STRIDE + 1
}

/// Zero-pad an HWC image by one pixel on each side.
fn pad_input(input: &Tensor) -> Tensor {
    let (h, w, c) = (input.shape[0], input.shape[1], input.shape[2]);
    let (ph, pw) = (h + 2 * PAD, w + 2 * PAD);
    let mut out = Tensor::zeros(&[ph, pw, c]);
    for y in 0..h {
        let src = (y * w) * c;
        let dst = ((y + PAD) * pw + PAD) * c;
        out.data[dst..dst + w * c].copy_from_slice(&input.data[src..src + w * c]);
    }
    out
}

/// 3×3 stride-2 convolution. `weights` is [oc, 3, 3, ic] flattened,
/// `bias` is [oc]; returns [oh, ow, oc].
pub fn conv2d_forward(input: &Tensor, weights: &[f64], bias: &[f64]) -> Result<Tensor> {
    let (h, w, ic) = (input.shape[0], input.shape[1], input.shape[2]);
    let oc = bias.len();
    if weights.len() != oc * KERNEL * KERNEL * ic {
        return Err(Error::ShapeMismatch(format!(
            "conv weights {} vs expected {}",
            weights.len(),
            oc * KERNEL * KERNEL * ic
        )));
    }
    let (oh, ow) = (conv_out_size(h), conv_out_size(w));
    let padded = pad_input(input);
    let pw = w + 2 * PAD;
    let mut out = Tensor::zeros(&[oh, ow, oc]);
    let row_span = KERNEL * ic;

    for oy in 0..oh {
        let iy0 = oy * STRIDE;
        for ox in 0..ow {
            let ix0 = ox * STRIDE;
            let out_base = (oy * ow + ox) * oc;
            for o in 0..oc {
                let mut acc = bias[o];
                let w_base = o * KERNEL * row_span;
                for ky in 0..KERNEL {
                    let in_base = ((iy0 + ky) * pw + ix0) * ic;
                    let in_row = &padded.data[in_base..in_base + row_span];
                    let w_row = &weights[w_base + ky * row_span..w_base + (ky + 1) * row_span];
                    let mut dot = 0.0;
                    for i in 0..row_span {
                        dot += in_row[i] * w_row[i];
                    }
                    acc += dot;
                }
                out.data[out_base + o] = acc;
            }
        }
    }
    Ok(out)
}

/// Gradients of the convolution: returns (d_input, d_weights, d_bias).
pub fn conv2d_backward(
    input: &Tensor,
    weights: &[f64],
    grad_out: &Tensor,
) -> (Tensor, Vec<f64>, Vec<f64>) {
    let (h, w, ic) = (input.shape[0], input.shape[1], input.shape[2]);
    let (oh, ow, oc) = (grad_out.shape[0], grad_out.shape[1], grad_out.shape[2]);
    let padded = pad_input(input);
    let pw = w + 2 * PAD;
    let row_span = KERNEL * ic;

    let mut d_padded = Tensor::zeros(&[h + 2 * PAD, pw, ic]);
    let mut d_weights = vec![0.0; weights.len()];
    let mut d_bias = vec![0.0; oc];

    for oy in 0..oh {
        let iy0 = oy * STRIDE;
        for ox in 0..ow {
            let ix0 = ox * STRIDE;
            let out_base = (oy * ow + ox) * oc;
            for o in 0..oc {
                let g = grad_out.data[out_base + o];
                if g == 0.0 {
                    continue;
                }
                d_bias[o] += g;
                let w_base = o * KERNEL * row_span;
                for ky in 0..KERNEL {
                    let in_base = ((iy0 + ky) * pw + ix0) * ic;
                    let dw_row = &mut d_weights[w_base + ky * row_span..w_base + (ky + 1) * row_span];
                    let in_row = &padded.data[in_base..in_base + row_span];
                    for i in 0..row_span {
                        dw_row[i] += g * in_row[i];
                    }
                    let w_row = &weights[w_base + ky * row_span..w_base + (ky + 1) * row_span];
                    let din_row = &mut d_padded.data[in_base..in_base + row_span];
                    for i in 0..row_span {
                        din_row[i] += g * w_row[i];
                    }
                }
            }
        }
    }

    // Strip the padding ring.
    let mut d_input = Tensor::zeros(&[h, w, ic]);
    for y in 0..h {
        let src = ((y + PAD) * pw + PAD) * ic;
        let dst = (y * w) * ic;
        d_input.data[dst..dst + w * ic].copy_from_slice(&d_padded.data[src..src + w * ic]);
    }
    (d_input, d_weights, d_bias)
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    Tensor {
        shape: input.shape.clone(),
        data: input.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// ReLU gradient gated on the pre-activation values.
pub fn relu_backward(pre_activation: &Tensor, grad_out: &Tensor) -> Tensor {
    Tensor {
        shape: grad_out.shape.clone(),
        data: pre_activation
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&z, &g)| if z > 0.0 { g } else { 0.0 })
            .collect(),
    }
}

/// Mean over the spatial dimensions of an HWC tensor: [h, w, c] → [c].
pub fn global_avg_pool_forward(input: &Tensor) -> Vec<f64> {
    let (h, w, c) = (input.shape[0], input.shape[1], input.shape[2]);
    let mut out = vec![0.0; c];
    for px in input.data.chunks_exact(c) {
        for (o, &v) in out.iter_mut().zip(px) {
            *o += v;
        }
    }
    let scale = 1.0 / (h * w) as f64;
    for o in &mut out {
        *o *= scale;
    }
    out
}

pub fn global_avg_pool_backward(input_shape: &[usize], grad_out: &[f64]) -> Tensor {
    let (h, w, c) = (input_shape[0], input_shape[1], input_shape[2]);
    let scale = 1.0 / (h * w) as f64;
    let mut out = Tensor::zeros(input_shape);
    for px in out.data.chunks_exact_mut(c) {
        for (o, &g) in px.iter_mut().zip(grad_out) {
            *o = g * scale;
        }
    }
    out
}

/// Fully-connected layer: `weights` is [out, in] row-major.
pub fn linear_forward(input: &[f64], weights: &[f64], bias: &[f64]) -> Vec<f64> {
    let n_in = input.len();
    bias.iter()
        .enumerate()
        .map(|(o, &b)| {
            let row = &weights[o * n_in..(o + 1) * n_in];
            let mut acc = b;
            for i in 0..n_in {
                acc += row[i] * input[i];
            }
            acc
        })
        .collect()
}

/// Gradients of the linear layer: (d_input, d_weights, d_bias).
pub fn linear_backward(
    input: &[f64],
    weights: &[f64],
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n_in = input.len();
    let n_out = grad_out.len();
    let mut d_input = vec![0.0; n_in];
    let mut d_weights = vec![0.0; weights.len()];
    let d_bias = grad_out.to_vec();
    for o in 0..n_out {
        let g = grad_out[o];
        let row = &weights[o * n_in..(o + 1) * n_in];
        let dw_row = &mut d_weights[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            d_input[i] += g * row[i];
            dw_row[i] = g * input[i];
        }
    }
    (d_input, d_weights, d_bias)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Pull a gradient w.r.t. probabilities back through the softmax:
/// dL/dz_j = p_j · (dL/dp_j − Σ_k p_k · dL/dp_k).
pub fn softmax_backward(probs: &[f64], grad_probs: &[f64]) -> Vec<f64> {
    let weighted: f64 = probs.iter().zip(grad_probs).map(|(&p, &g)| p * g).sum();
    probs.iter().zip(grad_probs).map(|(&p, &g)| p * (g - weighted)).collect()
}
