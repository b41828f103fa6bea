//! Optional JSON run configuration. Keys mirror the library config types;
//! explicit command-line flags override file values, which override the
//! built-in defaults.

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

use pitcast_core::raster::RasterConfig;
use pitcast_core::train::{LossConfig, TrainConfig};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Full raster config; mutually exclusive with `raster_preset`.
    pub raster: Option<RasterConfig>,
    /// One of `paper`, `train`, `small`.
    pub raster_preset: Option<String>,
    pub train: Option<TrainConfig>,
    pub loss: Option<LossConfig>,
    pub scene: Option<SceneConfig>,
    pub eval: Option<EvalConfig>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub k: Option<usize>,
    pub horizon: Option<usize>,
    pub pred_dt: Option<f64>,
    pub history_hz: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub miss_threshold: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: FileConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn raster(&self, flag: Option<&str>) -> anyhow::Result<RasterConfig> {
        if let Some(preset) = flag {
            return Ok(RasterConfig::preset(preset)?);
        }
        if let Some(r) = self.raster {
            r.validate()?;
            return Ok(r);
        }
        if let Some(preset) = &self.raster_preset {
            return Ok(RasterConfig::preset(preset)?);
        }
        Ok(RasterConfig::train())
    }
}

/// Deterministic per-purpose seed derivation from the single `--seed`
/// flag: FNV-1a over the purpose tag, mixed with the root seed.
pub fn seed_stream(root: u64, purpose: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in purpose.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^ root
}
