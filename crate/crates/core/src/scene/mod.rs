//! Scene data: domain types, trajectory-log ingestion, resampling,
//! coordinate transforms, instance windowing, dataset splitting, and the
//! synthetic scenario generator.

mod dataset;
pub mod io;
pub mod synth;
mod transform;
mod types;

pub use dataset::{make_instances, resample, source_hz, split_dataset, split_on_gaps};
pub use synth::{synth_scenario, ScenarioKind};
pub use transform::{from_agent_frame, to_agent_frame, LocalProjection};
pub use types::{AgentState, DatasetSplit, Footprint, Instance, SceneMap, Trajectory};
