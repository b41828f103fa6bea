//! Synthetic unstructured-road scenarios for desk-scale experiments:
//! corridor maps with irregular junction geometry and vehicles following
//! jittered centerline paths with trapezoidal speed profiles.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Polygon, Vec2};
use crate::scene::{AgentState, Footprint, SceneMap, Trajectory};

const SAMPLE_HZ: f64 = 10.0;
const ARM_LEN: f64 = 160.0;
const MIN_SPEED: f64 = 3.0;
const MAX_SPEED: f64 = 12.0;
const LONG_ACCEL: f64 = 0.8;
const LAT_ACCEL: f64 = 2.5;

/// Scenario layouts: one corridor, a T-junction, or a four-arm crossroads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Straight,
    TJunction,
    Crossroads,
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straight" => Ok(ScenarioKind::Straight),
            "t_junction" => Ok(ScenarioKind::TJunction),
            "crossroads" => Ok(ScenarioKind::Crossroads),
            other => Err(Error::UnknownScenarioKind(other.to_string())),
        }
    }
}

/// A corridor radiating from the junction at `angle`, extended `backoff`
/// meters past the origin so adjacent corridors overlap at the junction.
struct Arm {
    angle: f64,
    len: f64,
    half_width: f64,
    backoff: f64,
}

impl Arm {
    fn dir(&self) -> Vec2 {
        Vec2::new(self.angle.cos(), self.angle.sin())
    }

    fn end(&self) -> Vec2 {
        self.dir().scale(self.len)
    }

    /// Corridor polygon with uneven (outward-bumped) boundaries. Bumps are
    /// outward only, so the nominal half-width is a containment guarantee.
    fn polygon(&self, rng: &mut ChaCha8Rng) -> Polygon {
        let dir = self.dir();
        let left = dir.rotate(std::f64::consts::FRAC_PI_2);
        let n_stations = 8;
        let station = |i: usize| {
            -self.backoff + (self.len + self.backoff) * i as f64 / (n_stations - 1) as f64
        };
        let mut verts = Vec::with_capacity(2 * n_stations);
        let mut bumps = Vec::with_capacity(2 * n_stations);
        for _ in 0..2 * n_stations {
            bumps.push(rng.random_range(0.0..2.5));
        }
        for i in 0..n_stations {
            let off = self.half_width + bumps[i];
            verts.push(dir.scale(station(i)) + left.scale(off));
        }
        for i in (0..n_stations).rev() {
            let off = self.half_width + bumps[n_stations + i];
            verts.push(dir.scale(station(i)) - left.scale(off));
        }
        Polygon::new(verts)
    }
}

/// One leg of a centerline path.
enum Seg {
    Line { start: Vec2, dir: Vec2, len: f64 },
    /// Circular blend: from `entry` with heading `heading0`, turning
    /// `sweep` radians (signed) at radius `radius`.
    Arc { center: Vec2, entry: Vec2, heading0: f64, sweep: f64, radius: f64 },
}

impl Seg {
    fn len(&self) -> f64 {
        match self {
            Seg::Line { len, .. } => *len,
            Seg::Arc { sweep, radius, .. } => sweep.abs() * radius,
        }
    }

    fn pose_at(&self, s: f64) -> (Vec2, f64) {
        match self {
            Seg::Line { start, dir, .. } => (*start + dir.scale(s), dir.angle()),
            Seg::Arc { center, entry, heading0, sweep, radius } => {
                let u = sweep.signum() * s / radius;
                let pos = *center + (*entry - *center).rotate(u);
                (pos, wrap_angle(heading0 + u))
            }
        }
    }
}

struct Path {
    segs: Vec<Seg>,
    /// Arc-length interval occupied by the junction blend, if any.
    turn_span: Option<(f64, f64)>,
    turn_radius: f64,
}

impl Path {
    fn total_len(&self) -> f64 {
        self.segs.iter().map(Seg::len).sum()
    }

    fn pose_at(&self, mut s: f64) -> (Vec2, f64) {
        for seg in &self.segs {
            if s <= seg.len() {
                return seg.pose_at(s);
            }
            s -= seg.len();
        }
        let last = self.segs.last().unwrap();
        last.pose_at(last.len())
    }
}

/// Build the centerline from the far end of `entry` through the junction to
/// the far end of `exit`, blending the corner with a circular arc whose
/// radius is capped so the arc stays inside the corridor overlap.
fn route_path(entry: &Arm, exit: &Arm) -> Path {
    let start = entry.end();
    let d_in = entry.dir().scale(-1.0);
    let d_out = exit.dir();
    let turn = wrap_angle(d_out.angle() - d_in.angle());
    let delta = turn.abs();

    if delta < 0.02 {
        let chord = exit.end() - start;
        let len = chord.norm();
        return Path {
            segs: vec![Seg::Line { start, dir: chord.scale(1.0 / len), len }],
            turn_span: None,
            turn_radius: f64::INFINITY,
        };
    }

    // Keep the arc's deepest point within the narrower corridor.
    let margin = entry.half_width.min(exit.half_width) - 0.5;
    let half = delta / 2.0;
    let depth_per_r = (1.0 / half.cos() - 1.0) * half.sin();
    let radius = (margin / depth_per_r.max(1e-9)).clamp(1.5, 6.0);
    let tangent = radius * half.tan();

    let t_in = d_in.scale(-tangent); // tangent point before the origin
    let t_out = d_out.scale(tangent);
    let center = t_in + d_in.rotate(turn.signum() * std::f64::consts::FRAC_PI_2).scale(radius);

    let leg_in = (t_in - start).norm();
    let leg_out = (exit.end() - t_out).norm();
    Path {
        segs: vec![
            Seg::Line { start, dir: d_in, len: leg_in },
            Seg::Arc { center, entry: t_in, heading0: d_in.angle(), sweep: turn, radius },
            Seg::Line { start: t_out, dir: d_out, len: leg_out },
        ],
        turn_span: Some((leg_in, leg_in + delta * radius)),
        turn_radius: radius,
    }
}

/// Longitudinal speed plan over the path: cruise speed capped in the turn,
/// ramps limited to `LONG_ACCEL`, everything clamped to [3, 12] m/s.
fn plan_speeds(path: &Path, cruise: f64, v_start: f64, v_end: f64) -> (Vec<f64>, f64) {
    let ds = 0.5;
    let total = path.total_len();
    let n = (total / ds).ceil() as usize + 1;
    let turn_limit = match path.turn_span {
        Some(_) => (LAT_ACCEL * path.turn_radius).sqrt().clamp(MIN_SPEED, cruise),
        None => cruise,
    };
    let mut limit = vec![cruise; n];
    if let Some((s0, s1)) = path.turn_span {
        for (i, l) in limit.iter_mut().enumerate() {
            let s = i as f64 * ds;
            if s >= s0 - 5.0 && s <= s1 + 5.0 {
                *l = turn_limit;
            }
        }
    }
    limit[0] = limit[0].min(v_start);
    limit[n - 1] = limit[n - 1].min(v_end);
    // Forward/backward passes enforce the acceleration limit.
    for i in 1..n {
        let reachable = (limit[i - 1] * limit[i - 1] + 2.0 * LONG_ACCEL * ds).sqrt();
        limit[i] = limit[i].min(reachable);
    }
    for i in (0..n - 1).rev() {
        let reachable = (limit[i + 1] * limit[i + 1] + 2.0 * LONG_ACCEL * ds).sqrt();
        limit[i] = limit[i].min(reachable);
    }
    for v in &mut limit {
        *v = v.clamp(MIN_SPEED, MAX_SPEED);
    }
    (limit, ds)
}

fn speed_at(plan: &[f64], ds: f64, s: f64) -> f64 {
    let idx = (s / ds).floor() as usize;
    if idx + 1 >= plan.len() {
        return plan[plan.len() - 1];
    }
    let frac = s / ds - idx as f64;
    plan[idx] * (1.0 - frac) + plan[idx + 1] * frac
}

/// Drive one vehicle along the path, emitting 10 Hz world-frame positions.
fn sample_positions(path: &Path, plan: &[f64], ds: f64, jitter: &Jitter) -> Vec<Vec2> {
    let total = path.total_len();
    let dt_sub = 0.01;
    let mut s = 0.0;
    let mut positions = Vec::new();
    let mut step = 0usize;
    while s < total {
        if step % 10 == 0 {
            let (base, heading) = path.pose_at(s);
            let normal = Vec2::new(-heading.sin(), heading.cos());
            let taper = (base.norm() / 30.0).min(1.0);
            let offset = jitter.offset(s) * taper;
            positions.push(base + normal.scale(offset));
        }
        s += speed_at(plan, ds, s) * dt_sub;
        step += 1;
    }
    positions
}

struct Jitter {
    amp: f64,
    wavelength: f64,
    phase: f64,
}

impl Jitter {
    fn offset(&self, s: f64) -> f64 {
        self.amp * (2.0 * std::f64::consts::PI * s / self.wavelength + self.phase).sin()
    }
}

/// Derive full kinematic states from 10 Hz positions via central
/// differences; the first and last samples are consumed by the stencil.
fn states_from_positions(positions: &[Vec2]) -> Vec<AgentState> {
    let dt = 1.0 / SAMPLE_HZ;
    let n = positions.len();
    if n < 3 {
        return Vec::new();
    }
    let mut headings = Vec::with_capacity(n - 2);
    let mut speeds = Vec::with_capacity(n - 2);
    for i in 1..n - 1 {
        let vel = (positions[i + 1] - positions[i - 1]).scale(1.0 / (2.0 * dt));
        headings.push(vel.angle());
        speeds.push(vel.norm());
    }
    let m = headings.len();
    (0..m)
        .map(|j| {
            let next = (j + 1).min(m - 1);
            let prev = j.saturating_sub(1);
            let span = (next - prev).max(1) as f64 * dt;
            let omega = wrap_angle(headings[next] - headings[prev]) / span;
            let a = (speeds[next] - speeds[prev]) / span;
            AgentState {
                t: j as f64 * dt,
                x: positions[j + 1].x,
                y: positions[j + 1].y,
                theta: headings[j],
                v: speeds[j],
                a,
                omega,
            }
        })
        .collect()
}

fn build_arms(kind: ScenarioKind, rng: &mut ChaCha8Rng) -> Vec<Arm> {
    let width = |rng: &mut ChaCha8Rng| rng.random_range(8.0..15.0) / 2.0;
    match kind {
        ScenarioKind::Straight => {
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let hw = width(rng);
            vec![
                Arm { angle: phi, len: ARM_LEN, half_width: hw, backoff: 12.0 },
                Arm { angle: wrap_angle(phi + std::f64::consts::PI), len: ARM_LEN, half_width: hw, backoff: 12.0 },
            ]
        }
        ScenarioKind::TJunction => {
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            // Stem meets the through road off-perpendicular.
            let skew = rng.random_range(0.2..0.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let stem = wrap_angle(phi + std::f64::consts::FRAC_PI_2 + skew);
            let hw_through = width(rng);
            vec![
                Arm { angle: stem, len: ARM_LEN, half_width: width(rng), backoff: 12.0 },
                Arm { angle: phi, len: ARM_LEN, half_width: hw_through, backoff: 12.0 },
                Arm { angle: wrap_angle(phi + std::f64::consts::PI), len: ARM_LEN, half_width: hw_through, backoff: 12.0 },
            ]
        }
        ScenarioKind::Crossroads => {
            let rot = rng.random_range(0.0..std::f64::consts::TAU);
            (0..4)
                .map(|i| {
                    let base = rot + i as f64 * std::f64::consts::FRAC_PI_2;
                    let jit = rng.random_range(-0.35..0.35);
                    Arm { angle: wrap_angle(base + jit), len: ARM_LEN, half_width: width(rng), backoff: 12.0 }
                })
                .collect()
        }
    }
}

/// Entry/exit arm indices for one vehicle.
fn draw_route(kind: ScenarioKind, n_arms: usize, rng: &mut ChaCha8Rng) -> (usize, usize) {
    match kind {
        ScenarioKind::Straight => {
            if rng.random_bool(0.5) {
                (0, 1)
            } else {
                (1, 0)
            }
        }
        // All traffic enters on the stem and picks a branch uniformly.
        ScenarioKind::TJunction => (0, if rng.random_bool(0.5) { 1 } else { 2 }),
        ScenarioKind::Crossroads => {
            let entry = rng.random_range(0..n_arms);
            let mut exit = rng.random_range(0..n_arms - 1);
            if exit >= entry {
                exit += 1;
            }
            (entry, exit)
        }
    }
}

/// Decorative non-drivable patches in the wedges between arms, placed far
/// enough from every centerline that they cannot clip a corridor.
fn place_obstacles(arms: &[Arm], rng: &mut ChaCha8Rng) -> Vec<Polygon> {
    let mut patches = Vec::new();
    let n = arms.len();
    for i in 0..n {
        let a0 = arms[i].angle;
        let a1 = arms[(i + 1) % n].angle;
        let mut gap = wrap_angle(a1 - a0);
        if gap <= 0.0 {
            gap += std::f64::consts::TAU;
        }
        let bisector = a0 + gap / 2.0;
        let radius = rng.random_range(35.0..55.0);
        let size = rng.random_range(4.0..8.0);
        let center = Vec2::new(bisector.cos(), bisector.sin()).scale(radius);
        let clear = arms.iter().all(|arm| {
            let along = center.dot(arm.dir());
            let lateral = (center - arm.dir().scale(along)).norm();
            along < -arm.backoff || lateral > arm.half_width + 2.5 + size + 2.0
        });
        if !clear {
            continue;
        }
        let verts = (0..5)
            .map(|k| {
                let ang = std::f64::consts::TAU * k as f64 / 5.0 + rng.random_range(-0.2..0.2);
                let r = size * rng.random_range(0.7..1.0);
                center + Vec2::new(ang.cos(), ang.sin()).scale(r)
            })
            .collect();
        let poly = Polygon::new(verts);
        if poly.validate().is_ok() {
            patches.push(poly);
        }
    }
    patches
}

/// Generate a scenario map and `n_agents` trajectories sampled at 10 Hz.
/// Deterministic under `seed`; every emitted position lies inside a
/// drivable polygon by construction.
pub fn synth_scenario(
    kind: ScenarioKind,
    n_agents: usize,
    seed: u64,
) -> Result<(SceneMap, Vec<Trajectory>)> {
    if n_agents == 0 {
        return Err(Error::InvalidState("n_agents must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arms = build_arms(kind, &mut rng);
    let drivable = arms.iter().map(|a| a.polygon(&mut rng)).collect();
    let non_drivable = place_obstacles(&arms, &mut rng);
    let map = SceneMap {
        origin_note: format!("{kind:?} junction center, local Cartesian meters"),
        drivable,
        non_drivable,
    };
    map.validate()?;

    let mut trajectories = Vec::with_capacity(n_agents);
    for agent in 0..n_agents {
        let (entry, exit) = draw_route(kind, arms.len(), &mut rng);
        let path = route_path(&arms[entry], &arms[exit]);
        let cruise = rng.random_range(6.0..MAX_SPEED);
        let v_start = rng.random_range(MIN_SPEED..5.0);
        let v_end = rng.random_range(MIN_SPEED..5.0);
        let jitter = Jitter {
            amp: rng.random_range(0.3..1.0),
            wavelength: rng.random_range(50.0..120.0),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        };
        let footprint = if rng.random_bool(0.25) {
            Footprint::MINING_TRUCK
        } else {
            Footprint::PICKUP
        };
        let (plan, ds) = plan_speeds(&path, cruise, v_start, v_end);
        let positions = sample_positions(&path, &plan, ds, &jitter);
        let states = states_from_positions(&positions);
        debug_assert!(states.iter().all(|s| map.is_drivable(s.position())));
        let traj = Trajectory::new(format!("agent{agent:03}"), states, footprint);
        traj.validate()?;
        trajectories.push(traj);
    }
    Ok((map, trajectories))
}
