//! Domain types for trajectory logs and scene maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Polygon, Vec2};

/// Pose and kinematics of one vehicle at one timestep.
///
/// `theta` is heading in radians, CCW from +x, wrapped to (−π, π].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    /// Timestamp, seconds.
    pub t: f64,
    /// World-frame position, meters.
    pub x: f64,
    pub y: f64,
    /// Heading, radians in (−π, π].
    pub theta: f64,
    /// Speed, m/s.
    pub v: f64,
    /// Acceleration, m/s².
    pub a: f64,
    /// Yaw rate, rad/s.
    pub omega: f64,
}

impl AgentState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.t, self.x, self.y, self.theta, self.v, self.a, self.omega];
        if fields.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidState("non-finite field".into()));
        }
        if self.theta <= -std::f64::consts::PI || self.theta > std::f64::consts::PI {
            return Err(Error::InvalidState(format!(
                "theta {} outside (-pi, pi]",
                self.theta
            )));
        }
        Ok(())
    }
}

/// Vehicle bounding-box dimensions, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub length: f64,
    pub width: f64,
}

impl Footprint {
    /// Pickup-class default.
    pub const PICKUP: Footprint = Footprint { length: 5.0, width: 2.5 };
    /// Mining-truck preset.
    pub const MINING_TRUCK: Footprint = Footprint { length: 9.0, width: 5.0 };

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.width > 0.0)
            || !self.length.is_finite()
            || !self.width.is_finite()
        {
            return Err(Error::InvalidState(format!(
                "footprint {}x{} must be positive",
                self.length, self.width
            )));
        }
        Ok(())
    }
}

impl Default for Footprint {
    fn default() -> Self {
        Footprint::PICKUP
    }
}

/// One vehicle's recorded motion: an ordered state sequence plus its
/// bounding-box dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub agent_id: String,
    pub states: Vec<AgentState>,
    pub footprint: Footprint,
}

impl Trajectory {
    pub fn new(agent_id: impl Into<String>, states: Vec<AgentState>, footprint: Footprint) -> Self {
        Trajectory { agent_id: agent_id.into(), states, footprint }
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        self.footprint.validate()?;
        for s in &self.states {
            s.validate()?;
        }
        for w in self.states.windows(2) {
            if w[1].t <= w[0].t {
                return Err(Error::InvalidState(format!(
                    "timestamps not strictly increasing at t={}",
                    w[1].t
                )));
            }
        }
        Ok(())
    }
}

/// Polygon layers partitioning the plane into drivable and non-drivable
/// regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMap {
    /// Free text describing the chosen local origin.
    pub origin_note: String,
    pub drivable: Vec<Polygon>,
    pub non_drivable: Vec<Polygon>,
}

impl SceneMap {
    pub fn empty() -> Self {
        SceneMap { origin_note: String::new(), drivable: Vec::new(), non_drivable: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        for p in self.drivable.iter().chain(self.non_drivable.iter()) {
            p.validate()?;
        }
        Ok(())
    }

    /// A point is drivable when it lies inside some drivable polygon and
    /// inside no non-drivable polygon.
    pub fn is_drivable(&self, p: Vec2) -> bool {
        if self.non_drivable.iter().any(|poly| poly.contains(p)) {
            return false;
        }
        self.drivable.iter().any(|poly| poly.contains(p))
    }
}

/// One training/evaluation sample: a k-step history, the H future positions,
/// and the agent's footprint. The map travels alongside the instance set
/// rather than inside each instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: usize,
    pub agent_id: String,
    pub footprint: Footprint,
    /// k states at the history interval; the last one is the anchor pose.
    pub history: Vec<AgentState>,
    /// H world-frame positions at the prediction interval.
    pub future: Vec<Vec2>,
}

impl Instance {
    pub fn anchor(&self) -> &AgentState {
        self.history.last().expect("instance history is never empty")
    }
}

/// Train/validation/test partition of instance indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplit {
    pub fn total(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }
}
