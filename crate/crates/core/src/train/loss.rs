//! Trajectory losses: average displacement error, the two-stage best-mode
//! selector (angle gate, then minimum ADE), and the combined
//! classification + regression objective with its mixture-of-experts
//! alternative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{angle_diff, Vec2};
use crate::nn::{ModeSet, NetConfig};

/// Displacement below which a final direction is considered undefined.
const DEGENERATE_DISP: f64 = 1e-6;
/// Probability floor inside −log, keeping the loss finite early on.
const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    BestMode,
    MixtureOfExperts,
}

/// Loss hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight on the regression term.
    pub alpha: f64,
    /// Angle gate for best-mode selection, radians.
    pub dist_angle_threshold: f64,
    pub kind: LossKind,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 1.0,
            dist_angle_threshold: 45f64.to_radians(),
            kind: LossKind::BestMode,
        }
    }
}

/// Mean Euclidean displacement between two equal-length position sequences.
pub fn ade_loss(pred: &[Vec2], gt: &[Vec2]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::LengthMismatch { pred: pred.len(), gt: gt.len() });
    }
    let sum: f64 = pred.iter().zip(gt).map(|(p, g)| p.dist(*g)).sum();
    Ok(sum / pred.len() as f64)
}

/// Two-stage optimal-mode rule. Directions are the displacement from the
/// anchor (the origin of the agent frame) to the final position. Modes
/// whose direction is within `threshold` of the ground truth's compete on
/// ADE; if none qualify, the closest direction wins. A degenerate ground
/// truth (final displacement under 1 µm) skips the angle stage entirely.
/// Ties break toward the lowest index.
pub fn select_best_mode(modes: &[Vec<Vec2>], gt: &[Vec2], threshold: f64) -> usize {
    assert!(!modes.is_empty(), "select_best_mode needs at least one mode");
    let gt_final = *gt.last().expect("non-empty ground truth");

    let min_ade_of = |indices: &mut dyn Iterator<Item = usize>| -> usize {
        let mut best = (usize::MAX, f64::INFINITY);
        for m in indices {
            let ade = ade_loss(&modes[m], gt).unwrap_or(f64::INFINITY);
            if ade < best.1 {
                best = (m, ade);
            }
        }
        best.0
    };

    if gt_final.norm() < DEGENERATE_DISP {
        return min_ade_of(&mut (0..modes.len()));
    }
    let gt_dir = gt_final.angle();
    let angle_of = |m: usize| {
        let final_pos = *modes[m].last().unwrap();
        angle_diff(final_pos.angle(), gt_dir)
    };

    let eligible: Vec<usize> = (0..modes.len()).filter(|&m| angle_of(m) <= threshold).collect();
    if !eligible.is_empty() {
        return min_ade_of(&mut eligible.iter().copied());
    }
    let mut best = (usize::MAX, f64::INFINITY);
    for m in 0..modes.len() {
        let a = angle_of(m);
        if a < best.1 {
            best = (m, a);
        }
    }
    best.0
}

/// Combined loss for one sample. Best-mode: −log p_{m*} + α·ADE(m*), with
/// m* from [`select_best_mode`]. Mixture-of-experts: Σ_m p_m·ADE_m, with
/// the reported index being the min-ADE mode.
pub fn total_loss(modes: &ModeSet, gt: &[Vec2], cfg: &LossConfig) -> Result<(f64, usize)> {
    modes.validate()?;
    match cfg.kind {
        LossKind::BestMode => {
            let m_star = select_best_mode(&modes.trajectories, gt, cfg.dist_angle_threshold);
            let ade = ade_loss(&modes.trajectories[m_star], gt)?;
            let p = modes.probs[m_star].max(PROB_FLOOR);
            Ok((-p.ln() + cfg.alpha * ade, m_star))
        }
        LossKind::MixtureOfExperts => {
            let ades: Vec<f64> = modes
                .trajectories
                .iter()
                .map(|traj| ade_loss(traj, gt))
                .collect::<Result<_>>()?;
            let loss = modes.probs.iter().zip(&ades).map(|(p, a)| p * a).sum();
            let m_min = ades
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            Ok((loss, m_min))
        }
    }
}

/// Loss plus its exact gradient with respect to the raw head output.
///
/// Coordinate gradients flow only into the selected mode (best-mode kind)
/// or are probability-weighted (ME kind); logit gradients come through the
/// softmax coupling. The selection itself is a hard assignment with no
/// gradient.
pub fn loss_and_raw_grad(
    net: &NetConfig,
    modes: &ModeSet,
    gt: &[Vec2],
    cfg: &LossConfig,
) -> Result<(f64, usize, Vec<f64>)> {
    let (loss, m_star) = total_loss(modes, gt, cfg)?;
    let (h, m_count) = (net.horizon, net.modes);
    let mut grad = vec![0.0; net.head_len()];

    // d(ADE_m)/d(position) = unit vector / H; raw outputs are positions
    // divided by the output scale.
    let mut ade_coord_grad = |mode: usize, weight: f64| {
        for (step, (&p, &g)) in modes.trajectories[mode].iter().zip(gt).enumerate() {
            let d = p.dist(g);
            if d < DEGENERATE_DISP {
                continue;
            }
            let coeff = weight * net.output_scale / (h as f64 * d);
            let base = mode * 2 * h + 2 * step;
            grad[base] += coeff * (p.x - g.x);
            grad[base + 1] += coeff * (p.y - g.y);
        }
    };

    let logit_base = m_count * 2 * h;
    match cfg.kind {
        LossKind::BestMode => {
            ade_coord_grad(m_star, cfg.alpha);
            // −log p_{m*} through softmax: p_j − 1[j = m*].
            for j in 0..m_count {
                grad[logit_base + j] = modes.probs[j] - if j == m_star { 1.0 } else { 0.0 };
            }
        }
        LossKind::MixtureOfExperts => {
            let ades: Vec<f64> = modes
                .trajectories
                .iter()
                .map(|traj| ade_loss(traj, gt))
                .collect::<Result<_>>()?;
            let mean: f64 = modes.probs.iter().zip(&ades).map(|(p, a)| p * a).sum();
            for mode in 0..m_count {
                ade_coord_grad(mode, modes.probs[mode]);
            }
            for j in 0..m_count {
                grad[logit_base + j] = modes.probs[j] * (ades[j] - mean);
            }
        }
    }
    Ok((loss, m_star, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::softmax;

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    fn straight(n: usize) -> Vec<Vec2> {
        (1..=n).map(|i| v(i as f64, 0.0)).collect()
    }

    #[test]
    fn ade_examples() {
        let gt = straight(6);
        assert_eq!(ade_loss(&gt, &gt).unwrap(), 0.0);
        let offset: Vec<Vec2> = gt.iter().map(|p| v(p.x + 3.0, p.y + 4.0)).collect();
        assert!((ade_loss(&offset, &gt).unwrap() - 5.0).abs() < 1e-12);
        let two_gt = vec![v(0.0, 0.0), v(1.0, 0.0)];
        let two_pred = vec![v(0.0, 0.0), v(1.0, 2.0)];
        assert!((ade_loss(&two_pred, &two_gt).unwrap() - 1.0).abs() < 1e-12);
        assert!(ade_loss(&straight(3), &gt).is_err());
    }

    #[test]
    fn ade_pseudometric() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let a: Vec<Vec2> =
                (0..6).map(|_| v(rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0))).collect();
            let b: Vec<Vec2> =
                (0..6).map(|_| v(rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0))).collect();
            let ab = ade_loss(&a, &b).unwrap();
            let ba = ade_loss(&b, &a).unwrap();
            assert!(ab >= 0.0);
            assert_eq!(ab, ba);
            assert_eq!(ade_loss(&a, &a).unwrap(), 0.0);
            if a != b {
                assert!(ab > 0.0);
            }
        }
    }

    #[test]
    fn single_mode_always_selected() {
        let gt = straight(6);
        let modes = vec![straight(6)];
        assert_eq!(select_best_mode(&modes, &gt, 0.8), 0);
    }

    #[test]
    fn angle_gate_beats_lower_ade() {
        // Ground truth heads along +x with final displacement (1, 0). Mode 0
        // stays on-direction with ADE 1.0; mode 1 ends 85° off-direction
        // with ADE 0.8. The gate disqualifies mode 1 despite its lower ADE.
        let gt = vec![v(2.0, 0.0), v(3.0, 0.0), v(2.5, 0.0), v(2.0, 0.0), v(1.5, 0.0), v(1.0, 0.0)];
        let mode0: Vec<Vec2> = vec![
            v(2.0, 1.18),
            v(3.0, -1.18),
            v(2.5, 1.18),
            v(2.0, -1.18),
            v(1.5, 1.18),
            v(1.1, 0.0),
        ];
        let ang = 85f64.to_radians();
        let final1 = v(ang.cos(), -ang.sin());
        let spread = (4.8 - gt[5].dist(final1)) / 5.0;
        let mode1: Vec<Vec2> = (0..5).map(|i| v(gt[i].x, gt[i].y + spread)).chain([final1]).collect();

        let ade0 = ade_loss(&mode0, &gt).unwrap();
        let ade1 = ade_loss(&mode1, &gt).unwrap();
        assert!((ade0 - 1.0).abs() < 1e-2, "ade0 {ade0}");
        assert!((ade1 - 0.8).abs() < 1e-2, "ade1 {ade1}");
        assert!(ade1 < ade0);
        assert_eq!(select_best_mode(&[mode0, mode1], &gt, 45f64.to_radians()), 0);
    }

    #[test]
    fn identical_modes_tie_break_to_zero() {
        let gt = straight(6);
        let modes = vec![straight(6), straight(6), straight(6)];
        assert_eq!(select_best_mode(&modes, &gt, 0.8), 0);
    }

    #[test]
    fn no_mode_passes_gate_falls_back_to_min_angle() {
        let gt = straight(4);
        let up: Vec<Vec2> = (1..=4).map(|i| v(0.0, i as f64)).collect(); // 90° off
        let diag: Vec<Vec2> = (1..=4).map(|i| v(i as f64, i as f64)).collect(); // 45+ε° off
        assert_eq!(select_best_mode(&[up, diag], &gt, 30f64.to_radians()), 1);
    }

    #[test]
    fn degenerate_ground_truth_uses_pure_min_ade() {
        let gt = vec![v(3.0, 0.0), v(0.0, 0.0)]; // loops back to the anchor
        let near = vec![v(3.0, 0.1), v(0.0, 0.1)];
        let far = vec![v(0.0, 5.0), v(5.0, 5.0)];
        assert_eq!(select_best_mode(&[far, near], &gt, 0.01), 1);
    }

    #[test]
    fn selection_rotation_invariant() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec2> {
                (0..5)
                    .map(|_| v(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)))
                    .collect()
            };
            let modes: Vec<Vec<Vec2>> = (0..4).map(|_| mk(&mut rng)).collect();
            let gt = mk(&mut rng);
            let base = select_best_mode(&modes, &gt, 0.6);
            let ang = rng.random_range(-3.0..3.0);
            let rot = |traj: &Vec<Vec2>| -> Vec<Vec2> { traj.iter().map(|p| p.rotate(ang)).collect() };
            let modes_r: Vec<Vec<Vec2>> = modes.iter().map(rot).collect();
            let gt_r = rot(&gt);
            assert_eq!(select_best_mode(&modes_r, &gt_r, 0.6), base);
        }
    }

    #[test]
    fn total_loss_examples() {
        let gt = straight(6);
        let exact = ModeSet { trajectories: vec![straight(6)], probs: vec![1.0] };
        let cfg = LossConfig::default();
        let (l, m) = total_loss(&exact, &gt, &cfg).unwrap();
        assert_eq!((l, m), (0.0, 0));

        // p = 0.5 on the best mode with ADE 2.0 and α = 1: ln 2 + 2.
        let off: Vec<Vec2> = gt.iter().map(|p| v(p.x, p.y + 2.0)).collect();
        let wild: Vec<Vec2> = gt.iter().map(|p| v(-p.x, p.y)).collect();
        let two = ModeSet { trajectories: vec![off, wild], probs: vec![0.5, 0.5] };
        let (l, m) = total_loss(&two, &gt, &cfg).unwrap();
        assert_eq!(m, 0);
        assert!((l - (2.0_f64.ln() + 2.0)).abs() < 1e-9, "loss {l}");

        // Mixture of experts: probability-weighted ADEs.
        let me_cfg = LossConfig { kind: LossKind::MixtureOfExperts, ..cfg };
        let a2: Vec<Vec2> = gt.iter().map(|p| v(p.x, p.y + 2.0)).collect();
        let a4: Vec<Vec2> = gt.iter().map(|p| v(p.x, p.y - 4.0)).collect();
        let me = ModeSet { trajectories: vec![a2, a4], probs: vec![0.5, 0.5] };
        let (l, _) = total_loss(&me, &gt, &me_cfg).unwrap();
        assert!((l - 3.0).abs() < 1e-12);
    }

    #[test]
    fn regression_grad_zero_for_non_selected_modes() {
        let net = NetConfig::new(crate::raster::RasterConfig::small(), 6, 3);
        let gt = straight(6);
        let raw: Vec<f64> = (0..net.head_len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let (modes, _) = crate::nn::decode_output(&net, &raw);
        let cfg = LossConfig::default();
        let (_, m_star, grad) = loss_and_raw_grad(&net, &modes, &gt, &cfg).unwrap();
        for mode in 0..3 {
            let coords = &grad[mode * 12..(mode + 1) * 12];
            if mode == m_star {
                assert!(coords.iter().any(|&g| g != 0.0));
            } else {
                assert!(coords.iter().all(|&g| g == 0.0), "mode {mode} leaked gradient");
            }
        }
    }

    #[test]
    fn raw_grad_matches_finite_differences() {
        // Both loss kinds, differentiated against the raw head vector.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let net = NetConfig::new(crate::raster::RasterConfig::small(), 4, 3);
        let gt: Vec<Vec2> =
            (0..4).map(|_| v(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0))).collect();
        for kind in [LossKind::BestMode, LossKind::MixtureOfExperts] {
            let cfg = LossConfig { kind, ..LossConfig::default() };
            let raw: Vec<f64> = (0..net.head_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let eval = |r: &[f64]| -> (f64, usize) {
                let (modes, _) = crate::nn::decode_output(&net, r);
                total_loss(&modes, &gt, &cfg).unwrap()
            };
            let (modes, _) = crate::nn::decode_output(&net, &raw);
            let (_, m0, grad) = loss_and_raw_grad(&net, &modes, &gt, &cfg).unwrap();
            let eps = 1e-7;
            for idx in 0..raw.len() {
                let mut p = raw.clone();
                let mut m = raw.clone();
                p[idx] += eps;
                m[idx] -= eps;
                let (lp, sp) = eval(&p);
                let (lm, sm) = eval(&m);
                if sp != sm || sp != m0 {
                    continue; // selection boundary, not differentiable
                }
                let fd = (lp - lm) / (2.0 * eps);
                let rel = (fd - grad[idx]).abs() / fd.abs().max(grad[idx].abs()).max(1e-8);
                assert!(rel < 1e-5, "{kind:?} [{idx}]: fd={fd} analytic={}", grad[idx]);
            }
        }
    }

    #[test]
    fn probability_floor_keeps_loss_finite() {
        let gt = straight(6);
        let logits = vec![0.0, 60.0];
        let probs = softmax(&logits);
        let modes = ModeSet { trajectories: vec![straight(6), straight(6)], probs };
        let (l, _) = total_loss(&modes, &gt, &LossConfig::default()).unwrap();
        assert!(l.is_finite());
    }
}
