//! Displacement-error metrics (minADE, minFDE, missRate), the
//! drivable-area feasibility filter, and multi-method comparison reports.
//!
//! Metrics take the minimum over modes that still carry probability mass,
//! so modes zeroed by the feasibility filter drop out of the scoring.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::scene::SceneMap;
use crate::train::ade_loss;

/// Default missRate threshold on final displacement, meters.
pub const DEFAULT_MISS_THRESHOLD: f64 = 2.0;

/// One method's prediction for one instance: world-frame mode trajectories
/// with a probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: usize,
    /// Method tag: `ekf`, `model-M1`, `model-M5`, ...
    pub source: String,
    pub modes: Vec<Vec<Vec2>>,
    pub probs: Vec<f64>,
    /// Set when the feasibility filter found every mode infeasible and
    /// returned the distribution unchanged. Not serialized.
    #[serde(skip)]
    pub filter_fallback: bool,
}

impl Prediction {
    pub fn new(id: usize, source: impl Into<String>, modes: Vec<Vec<Vec2>>, probs: Vec<f64>) -> Self {
        Prediction { id, source: source.into(), modes, probs, filter_fallback: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() || self.modes.len() != self.probs.len() {
            return Err(Error::InvalidState(format!(
                "prediction {} has {} modes and {} probs",
                self.id,
                self.modes.len(),
                self.probs.len()
            )));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || self.probs.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidState(format!("prediction {} probs sum {sum}", self.id)));
        }
        Ok(())
    }

    /// Indices of modes still carrying probability.
    fn live_modes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.modes.len()).filter(|&m| self.probs[m] > 0.0)
    }
}

/// Minimum over live modes of the average displacement error.
pub fn min_ade(pred: &Prediction, gt: &[Vec2]) -> Result<f64> {
    let mut best = f64::INFINITY;
    for m in pred.live_modes() {
        best = best.min(ade_loss(&pred.modes[m], gt)?);
    }
    Ok(best)
}

/// Minimum over live modes of the final-step displacement.
pub fn min_fde(pred: &Prediction, gt: &[Vec2]) -> Result<f64> {
    let gt_final = *gt.last().ok_or_else(|| Error::EmptyInput("empty ground truth".into()))?;
    let mut best = f64::INFINITY;
    for m in pred.live_modes() {
        if pred.modes[m].len() != gt.len() {
            return Err(Error::LengthMismatch { pred: pred.modes[m].len(), gt: gt.len() });
        }
        best = best.min(pred.modes[m].last().unwrap().dist(gt_final));
    }
    Ok(best)
}

/// Fraction of instances whose min-FDE exceeds the threshold.
pub fn miss_rate(preds: &[Prediction], gts: &[Vec<Vec2>], threshold: f64) -> Result<f64> {
    if preds.is_empty() || preds.len() != gts.len() {
        return Err(Error::EmptyInput(format!(
            "{} predictions vs {} ground truths",
            preds.len(),
            gts.len()
        )));
    }
    let mut misses = 0usize;
    for (pred, gt) in preds.iter().zip(gts) {
        if min_fde(pred, gt)? > threshold {
            misses += 1;
        }
    }
    Ok(misses as f64 / preds.len() as f64)
}

/// Zero the probability of every mode that leaves the drivable area and
/// renormalize the survivors. A mode is infeasible when any of its
/// positions is inside a non-drivable polygon or outside every drivable
/// polygon. If no mode survives, the input distribution is returned
/// unchanged with `filter_fallback` set.
pub fn feasibility_filter(pred: &Prediction, map: &SceneMap) -> Prediction {
    let infeasible: Vec<bool> = pred
        .modes
        .iter()
        .map(|traj| traj.iter().any(|&p| !map.is_drivable(p)))
        .collect();
    let removed: f64 = pred
        .probs
        .iter()
        .zip(&infeasible)
        .filter(|(_, &bad)| bad)
        .map(|(&p, _)| p)
        .sum();
    if removed == 0.0 {
        return pred.clone();
    }
    let survivor_mass: f64 = pred
        .probs
        .iter()
        .zip(&infeasible)
        .filter(|(_, &bad)| !bad)
        .map(|(&p, _)| p)
        .sum();
    if survivor_mass <= 0.0 {
        let mut out = pred.clone();
        out.filter_fallback = true;
        return out;
    }
    let probs = pred
        .probs
        .iter()
        .zip(&infeasible)
        .map(|(&p, &bad)| if bad { 0.0 } else { p / survivor_mass })
        .collect();
    Prediction { probs, filter_fallback: false, ..pred.clone() }
}

/// One line of the comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub method: String,
    pub min_ade: f64,
    pub min_fde: f64,
    pub miss_rate: Option<f64>,
    pub n: usize,
}

/// The full comparison table plus the configuration it was computed under.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub horizon: usize,
    pub miss_threshold: f64,
}

/// Table-row ordering: EKF first, then models by ascending mode count,
/// then anything else alphabetically.
fn method_rank(tag: &str) -> (u8, usize, String) {
    if tag == "ekf" {
        return (0, 0, String::new());
    }
    if let Some(m) = tag.strip_prefix("model-M").and_then(|s| s.parse::<usize>().ok()) {
        return (1, m, String::new());
    }
    (2, 0, tag.to_string())
}

/// Score every method against the same ground truths. Each method must
/// supply a prediction for every instance; mean minADE/minFDE and the miss
/// rate make up its row. The EKF row reports no miss rate, and methods are
/// ordered EKF, M ascending.
pub fn compare(
    methods: &[(String, Vec<Prediction>)],
    ground_truth: &HashMap<usize, Vec<Vec2>>,
    miss_threshold: f64,
) -> Result<MetricReport> {
    if methods.is_empty() || ground_truth.is_empty() {
        return Err(Error::EmptyInput("nothing to compare".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for (tag, _) in methods {
        if !seen.insert(tag.clone()) {
            return Err(Error::DuplicateMethod(tag.clone()));
        }
    }
    let mut ids: Vec<usize> = ground_truth.keys().copied().collect();
    ids.sort_unstable();
    let mut horizon = 0;

    let mut rows = Vec::with_capacity(methods.len());
    for (tag, preds) in methods {
        let by_id: HashMap<usize, &Prediction> = preds.iter().map(|p| (p.id, p)).collect();
        let mut ordered = Vec::with_capacity(ids.len());
        let mut gts = Vec::with_capacity(ids.len());
        for &id in &ids {
            let pred = *by_id.get(&id).ok_or(Error::MissingPrediction(id))?;
            pred.validate()?;
            ordered.push(pred.clone());
            let gt = &ground_truth[&id];
            horizon = gt.len();
            gts.push(gt.clone());
        }
        let mut ade_sum = 0.0;
        let mut fde_sum = 0.0;
        for (pred, gt) in ordered.iter().zip(&gts) {
            ade_sum += min_ade(pred, gt)?;
            fde_sum += min_fde(pred, gt)?;
        }
        let n = ids.len();
        let miss = if tag == "ekf" {
            None
        } else {
            Some(miss_rate(&ordered, &gts, miss_threshold)?)
        };
        rows.push(MetricRow {
            method: tag.clone(),
            min_ade: ade_sum / n as f64,
            min_fde: fde_sum / n as f64,
            miss_rate: miss,
            n,
        });
    }
    rows.sort_by_key(|r| method_rank(&r.method));
    Ok(MetricReport { rows, horizon, miss_threshold })
}

impl MetricReport {
    /// `method,minADE,minFDE,missRate,n` (blank missRate for EKF).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,minADE,minFDE,missRate,n\n");
        for r in &self.rows {
            let miss = r.miss_rate.map(|m| format!("{m:.3}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{:.3},{:.3},{},{}\n",
                r.method, r.min_ade, r.min_fde, miss, r.n
            ));
        }
        out
    }

    /// Aligned text rendering for terminals.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<14} {:>8} {:>8} {:>9} {:>6}\n",
            "method", "minADE", "minFDE", "missRate", "n"
        );
        for r in &self.rows {
            let miss = r.miss_rate.map(|m| format!("{m:.3}")).unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{:<14} {:>8.3} {:>8.3} {:>9} {:>6}\n",
                r.method, r.min_ade, r.min_fde, miss, r.n
            ));
        }
        out
    }
}

/// Predictions as line-delimited JSON: `{id, source, modes, probs}`.
pub fn write_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for p in preds {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let file = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pred: Prediction = serde_json::from_str(&line)
            .map_err(|e| Error::MalformedRecord { line: i + 1, msg: e.to_string() })?;
        pred.validate()?;
        out.push(pred);
    }
    Ok(out)
}
