//! Trajectory resampling, instance windowing, and dataset splitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scene::{DatasetSplit, Instance, Trajectory};

/// Infer the recording rate from consecutive timestamps (median interval).
pub fn source_hz(traj: &Trajectory) -> Result<f64> {
    if traj.states.len() < 2 {
        return Err(Error::EmptyTrajectory);
    }
    let mut dts: Vec<f64> = traj.states.windows(2).map(|w| w[1].t - w[0].t).collect();
    dts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(1.0 / dts[dts.len() / 2])
}

/// Downsample by decimation: keep every (source_hz/target_hz)-th state
/// starting from the first. Timestamps are preserved; no interpolation.
pub fn resample(traj: &Trajectory, target_hz: f64) -> Result<Trajectory> {
    if traj.states.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let src_hz = source_hz(traj)?;
    let ratio = src_hz / target_hz;
    let step = ratio.round() as usize;
    if step == 0 || (ratio - step as f64).abs() > 1e-6 {
        return Err(Error::IncompatibleRates { source_hz: src_hz, target_hz });
    }
    let states = traj.states.iter().step_by(step).copied().collect();
    Ok(Trajectory::new(traj.agent_id.clone(), states, traj.footprint))
}

/// Split a trajectory wherever consecutive timestamps differ by more than
/// twice the nominal interval. Gapped logs become separate trajectories
/// rather than being bridged. Singleton pieces are dropped.
pub fn split_on_gaps(traj: &Trajectory, nominal_dt: f64) -> Vec<Trajectory> {
    let mut pieces = Vec::new();
    let mut current: Vec<_> = Vec::new();
    for s in &traj.states {
        if let Some(last) = current.last() {
            let last: &crate::scene::AgentState = last;
            if s.t - last.t > 2.0 * nominal_dt {
                if current.len() > 1 {
                    pieces.push(std::mem::take(&mut current));
                } else {
                    current.clear();
                }
            }
        }
        current.push(*s);
    }
    if current.len() > 1 {
        pieces.push(current);
    }
    pieces
        .into_iter()
        .enumerate()
        .map(|(i, states)| {
            let id = if i == 0 {
                traj.agent_id.clone()
            } else {
                format!("{}#{}", traj.agent_id, i)
            };
            Trajectory::new(id, states, traj.footprint)
        })
        .collect()
}

/// Slide a window over a history-rate trajectory, producing one instance per
/// valid anchor: `k` consecutive history states ending at the anchor and `H`
/// future positions spaced `pred_dt` seconds apart. Windows that run off the
/// trajectory end are dropped; a too-short trajectory yields an empty list.
///
/// `pred_dt` must be an integer multiple of the history interval.
pub fn make_instances(
    traj: &Trajectory,
    k: usize,
    horizon: usize,
    pred_dt: f64,
) -> Result<Vec<Instance>> {
    if k == 0 || horizon == 0 {
        return Err(Error::InvalidState("k and H must be positive".into()));
    }
    let n = traj.states.len();
    if n < 2 {
        return Ok(Vec::new());
    }
    let hist_dt = traj.states[1].t - traj.states[0].t;
    let ratio = pred_dt / hist_dt;
    let stride = ratio.round() as usize;
    if stride == 0 || (ratio - stride as f64).abs() > 1e-6 {
        return Err(Error::IncompatibleRates {
            source_hz: 1.0 / hist_dt,
            target_hz: 1.0 / pred_dt,
        });
    }

    let mut out = Vec::new();
    let mut anchor = k - 1;
    while anchor + horizon * stride < n {
        let history = traj.states[anchor + 1 - k..=anchor].to_vec();
        let future = (1..=horizon)
            .map(|j| traj.states[anchor + j * stride].position())
            .collect();
        out.push(Instance {
            id: out.len(),
            agent_id: traj.agent_id.clone(),
            footprint: traj.footprint,
            history,
            future,
        });
        anchor += 1;
    }
    Ok(out)
}

/// Deterministic shuffled split in the given proportions (largest-remainder
/// apportionment; remainder ties go to the earlier of train, val, test).
pub fn split_dataset(n: usize, ratios: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    if n < 3 {
        return Err(Error::DatasetTooSmall { min: 3, got: n });
    }
    let total: f64 = ratios.iter().sum();
    let quotas: Vec<f64> = ratios.iter().map(|r| n as f64 * r / total).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut leftover = n - sizes.iter().sum::<usize>();
    // Seats by descending remainder; ties broken by set order.
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        sizes[i] += 1;
        leftover -= 1;
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);

    let train = indices[..sizes[0]].to_vec();
    let val = indices[sizes[0]..sizes[0] + sizes[1]].to_vec();
    let test = indices[sizes[0] + sizes[1]..].to_vec();
    Ok(DatasetSplit { seed, train, val, test })
}
