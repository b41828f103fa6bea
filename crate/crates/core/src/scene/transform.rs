//! Rigid transforms between the world frame and the agent-centric frame.
//!
//! The agent frame is anchored at a reference pose with +x along the
//! heading and +y to the left.

use crate::geom::Vec2;
use crate::scene::AgentState;

/// World point → agent frame: translate by −anchor position, rotate by
/// −anchor heading.
pub fn to_agent_frame(point: Vec2, anchor: &AgentState) -> Vec2 {
    (point - anchor.position()).rotate(-anchor.theta)
}

/// Agent-frame point → world. Inverse of [`to_agent_frame`].
pub fn from_agent_frame(point: Vec2, anchor: &AgentState) -> Vec2 {
    point.rotate(anchor.theta) + anchor.position()
}

/// Equirectangular local projection of geodetic coordinates around a
/// declared origin. Adequate at mine scale (a few kilometers); not a
/// geodetic-grade projection.
#[derive(Debug, Clone, Copy)]
pub struct LocalProjection {
    pub origin_lat_deg: f64,
    pub origin_lon_deg: f64,
}

impl LocalProjection {
    const EARTH_RADIUS_M: f64 = 6_371_000.0;

    pub fn project(&self, lat_deg: f64, lon_deg: f64) -> Vec2 {
        let lat0 = self.origin_lat_deg.to_radians();
        let dlat = (lat_deg - self.origin_lat_deg).to_radians();
        let dlon = (lon_deg - self.origin_lon_deg).to_radians();
        Vec2::new(
            Self::EARTH_RADIUS_M * dlon * lat0.cos(),
            Self::EARTH_RADIUS_M * dlat,
        )
    }
}
