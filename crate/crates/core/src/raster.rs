//! Agent-centric bird's-eye-view rasterization.
//!
//! The scene is painted into an RGB canvas anchored at the target vehicle's
//! pose: background black, drivable polygons white, non-drivable polygons
//! black on top, then the vehicle's history boxes as progressively dimmer
//! red, newest last. Rows grow along the agent's heading, so the rendered
//! image has the vehicle driving "up" with most of the context ahead of it.
//!
//! Pixel coordinates are measured from the bottom-left corner; pixel
//! `(col, row)` covers the half-open unit square with center
//! `(col + 0.5, row + 0.5)`. Fill decisions use the pixel center with an
//! even-odd rule and no anti-aliasing, so renders are bit-deterministic.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::scene::{to_agent_frame, AgentState, Footprint, SceneMap};

pub const WHITE: [u8; 3] = [255, 255, 255];
pub const BLACK: [u8; 3] = [0, 0, 0];

/// Rasterization parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterConfig {
    /// Meters per pixel.
    pub resolution: f64,
    /// Pixels per side.
    pub size_px: usize,
    /// Agent placement (w, h) in pixels from the bottom-left corner.
    pub agent_px: (usize, usize),
    /// Brightness drop per history step.
    pub fade_delta: f64,
}

impl RasterConfig {
    /// Full-resolution export preset: 0.1 m/px over a 120 m square.
    pub fn paper() -> Self {
        RasterConfig { resolution: 0.1, size_px: 1200, agent_px: (600, 300), fade_delta: 0.1 }
    }

    /// Default model-input preset: same extent at 0.5 m/px.
    pub fn train() -> Self {
        RasterConfig { resolution: 0.5, size_px: 240, agent_px: (120, 60), fade_delta: 0.1 }
    }

    /// Coarse preset for fast experiments: same extent at 3 m/px.
    pub fn small() -> Self {
        RasterConfig { resolution: 3.0, size_px: 40, agent_px: (20, 10), fade_delta: 0.1 }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "train" => Ok(Self::train()),
            "small" => Ok(Self::small()),
            other => Err(Error::InvalidRasterConfig(format!("unknown preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0) {
            return Err(Error::InvalidRasterConfig("resolution must be > 0".into()));
        }
        if self.size_px == 0 {
            return Err(Error::InvalidRasterConfig("size_px must be > 0".into()));
        }
        if self.agent_px.0 >= self.size_px || self.agent_px.1 >= self.size_px {
            return Err(Error::InvalidRasterConfig("agent placement outside canvas".into()));
        }
        if !(0.0..=1.0).contains(&self.fade_delta) {
            return Err(Error::InvalidRasterConfig("fade_delta must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Brightness of the history box K steps into the past: max(0, 1 − Kδ).
pub fn history_brightness(k_steps: usize, delta: f64) -> f64 {
    (1.0 - k_steps as f64 * delta).max(0.0)
}

/// World point → continuous pixel coordinates (col, row) from bottom-left.
/// Agent-frame forward maps to increasing row, agent-frame left to
/// decreasing column. Out-of-canvas coordinates are returned unclipped.
pub fn world_to_pixel(point: Vec2, anchor: &AgentState, cfg: &RasterConfig) -> (f64, f64) {
    let af = to_agent_frame(point, anchor);
    let col = cfg.agent_px.0 as f64 - af.y / cfg.resolution;
    let row = cfg.agent_px.1 as f64 + af.x / cfg.resolution;
    (col, row)
}

/// Inverse of [`world_to_pixel`].
pub fn pixel_to_world(col: f64, row: f64, anchor: &AgentState, cfg: &RasterConfig) -> Vec2 {
    let af = Vec2::new(
        (row - cfg.agent_px.1 as f64) * cfg.resolution,
        (cfg.agent_px.0 as f64 - col) * cfg.resolution,
    );
    crate::scene::from_agent_frame(af, anchor)
}

/// An n×n×3 image of 8-bit channels, stored row-major with row 0 at the
/// bottom. A raster is a pure function of (map, history, config, anchor)
/// and immutable once rendered.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub config: RasterConfig,
    pub anchor: AgentState,
    pub pixels: Vec<u8>,
}

impl Raster {
    pub fn get(&self, col: usize, row: usize) -> [u8; 3] {
        let i = (row * self.config.size_px + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn set(&mut self, col: usize, row: usize, color: [u8; 3]) {
        let i = (row * self.config.size_px + col) * 3;
        self.pixels[i..i + 3].copy_from_slice(&color);
    }
}

/// Scanline even-odd fill of a polygon given in continuous pixel
/// coordinates. A pixel belongs to the polygon when its center does.
fn fill_polygon(raster: &mut Raster, verts: &[(f64, f64)], color: [u8; 3]) {
    let n = raster.config.size_px;
    if verts.len() < 3 {
        return;
    }
    let (mut row_min, mut row_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(_, r) in verts {
        row_min = row_min.min(r);
        row_max = row_max.max(r);
    }
    let r_lo = (row_min - 0.5).ceil().max(0.0) as usize;
    let r_hi = ((row_max - 0.5).floor().min(n as f64 - 1.0) as isize).max(-1);
    let mut crossings: Vec<f64> = Vec::with_capacity(8);

    for row in r_lo as isize..=r_hi {
        let y = row as f64 + 0.5;
        crossings.clear();
        for i in 0..verts.len() {
            let (x1, y1) = verts[i];
            let (x2, y2) = verts[(i + 1) % verts.len()];
            if (y1 <= y) != (y2 <= y) {
                crossings.push(x1 + (y - y1) * (x2 - x1) / (y2 - y1));
            }
        }
        crossings.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for pair in crossings.chunks_exact(2) {
            let c_lo = (pair[0] - 0.5).ceil().max(0.0) as usize;
            let c_hi = ((pair[1] - 0.5).ceil() - 1.0).min(n as f64 - 1.0);
            if c_hi < 0.0 {
                continue;
            }
            for col in c_lo..=c_hi as usize {
                raster.set(col, row as usize, color);
            }
        }
    }
}

fn polygon_to_pixels(
    vertices: &[Vec2],
    anchor: &AgentState,
    cfg: &RasterConfig,
) -> Vec<(f64, f64)> {
    vertices.iter().map(|&v| world_to_pixel(v, anchor, cfg)).collect()
}

/// Corners of an oriented footprint rectangle at a pose, world frame.
fn footprint_corners(state: &AgentState, footprint: &Footprint) -> [Vec2; 4] {
    let half_l = footprint.length / 2.0;
    let half_w = footprint.width / 2.0;
    let fwd = Vec2::new(state.theta.cos(), state.theta.sin());
    let left = Vec2::new(-state.theta.sin(), state.theta.cos());
    let c = state.position();
    [
        c + fwd.scale(half_l) + left.scale(half_w),
        c + fwd.scale(half_l) - left.scale(half_w),
        c - fwd.scale(half_l) - left.scale(half_w),
        c - fwd.scale(half_l) + left.scale(half_w),
    ]
}

/// Render the agent-centric raster. The last history element is the anchor
/// (time step T). Paint order: background black, drivable white,
/// non-drivable black, then history boxes oldest-first so the newest
/// occludes older ones.
pub fn render(
    map: &SceneMap,
    history: &[(AgentState, Footprint)],
    cfg: &RasterConfig,
) -> Result<Raster> {
    cfg.validate()?;
    let (anchor, _) = *history.last().ok_or(Error::AnchorRequired)?;
    let n = cfg.size_px;
    let mut raster = Raster { config: *cfg, anchor, pixels: vec![0; n * n * 3] };

    for poly in &map.drivable {
        let verts = polygon_to_pixels(&poly.vertices, &anchor, cfg);
        fill_polygon(&mut raster, &verts, WHITE);
    }
    for poly in &map.non_drivable {
        let verts = polygon_to_pixels(&poly.vertices, &anchor, cfg);
        fill_polygon(&mut raster, &verts, BLACK);
    }

    let k = history.len();
    for (i, (state, footprint)) in history.iter().enumerate() {
        let steps_back = k - 1 - i;
        let b = history_brightness(steps_back, cfg.fade_delta);
        let color = [(255.0 * b).round() as u8, 0, 0];
        let corners = footprint_corners(state, footprint);
        let verts: Vec<_> =
            corners.iter().map(|&c| world_to_pixel(c, &anchor, cfg)).collect();
        fill_polygon(&mut raster, &verts, color);
    }
    Ok(raster)
}

/// Write the raster as a lossless 8-bit RGB PNG (top row first, so the
/// agent's heading points up).
pub fn export_png(raster: &Raster, path: &Path) -> Result<()> {
    let n = raster.config.size_px as u32;
    let mut img = image::RgbImage::new(n, n);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let row = (n - 1 - y) as usize;
        *px = image::Rgb(raster.get(x as usize, row));
    }
    img.save(path)?;
    Ok(())
}

/// Read an RGB PNG back into bottom-up row-major pixels: (width, height, data).
pub fn read_png(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0u8; w * h * 3];
    for (x, y, px) in img.enumerate_pixels() {
        let row = h - 1 - y as usize;
        let i = (row * w + x as usize) * 3;
        data[i..i + 3].copy_from_slice(&px.0);
    }
    Ok((w, h, data))
}

/// Dependency-free binary PPM (P6) export, top row first.
pub fn export_ppm(raster: &Raster, path: &Path) -> Result<()> {
    use std::io::Write;
    let n = raster.config.size_px;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "P6\n{n} {n}\n255\n")?;
    for row in (0..n).rev() {
        let i = row * n * 3;
        out.write_all(&raster.pixels[i..i + n * 3])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Polygon;

    fn anchor_at(x: f64, y: f64, theta: f64) -> AgentState {
        AgentState { t: 0.0, x, y, theta, v: 5.0, a: 0.0, omega: 0.0 }
    }

    fn full_drivable_map(anchor: &AgentState, cfg: &RasterConfig) -> SceneMap {
        // One drivable square generously covering the whole canvas.
        let extent = cfg.size_px as f64 * cfg.resolution * 2.0;
        let c = anchor.position();
        SceneMap {
            origin_note: String::new(),
            drivable: vec![Polygon::new(vec![
                Vec2::new(c.x - extent, c.y - extent),
                Vec2::new(c.x + extent, c.y - extent),
                Vec2::new(c.x + extent, c.y + extent),
                Vec2::new(c.x - extent, c.y + extent),
            ])],
            non_drivable: vec![],
        }
    }

    #[test]
    fn brightness_formula() {
        assert_eq!(history_brightness(0, 0.1), 1.0);
        assert!((history_brightness(3, 0.1) - 0.7).abs() < 1e-12);
        assert_eq!(history_brightness(10, 0.1), 0.0);
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let b = history_brightness(k, 0.1);
            assert!(b <= prev && (0.0..=1.0).contains(&b));
            prev = b;
        }
    }

    #[test]
    fn anchor_lands_on_agent_placement() {
        let cfg = RasterConfig::paper();
        let a = anchor_at(37.5, -12.25, 0.83);
        let (col, row) = world_to_pixel(a.position(), &a, &cfg);
        assert!((col - 600.0).abs() < 1e-9);
        assert!((row - 300.0).abs() < 1e-9);
    }

    #[test]
    fn ahead_and_left_pixel_offsets() {
        let cfg = RasterConfig::paper();
        let a = anchor_at(0.0, 0.0, 0.3);
        let fwd = Vec2::new(a.theta.cos(), a.theta.sin());
        let left = Vec2::new(-a.theta.sin(), a.theta.cos());
        let (col, row) = world_to_pixel(fwd.scale(30.0), &a, &cfg);
        assert!((col - 600.0).abs() < 1e-9 && (row - 600.0).abs() < 1e-9);
        let (col, row) = world_to_pixel(left.scale(5.0), &a, &cfg);
        assert!((col - 550.0).abs() < 1e-9 && (row - 300.0).abs() < 1e-9);
    }

    #[test]
    fn pixel_world_round_trip() {
        let cfg = RasterConfig::train();
        let a = anchor_at(100.0, -40.0, -2.1);
        for (c, r) in [(0.0, 0.0), (120.0, 60.0), (239.9, 11.7), (53.25, 201.0)] {
            let w = pixel_to_world(c, r, &a, &cfg);
            let (c2, r2) = world_to_pixel(w, &a, &cfg);
            assert!((c2 - c).abs() < 1e-9 && (r2 - r).abs() < 1e-9);
        }
    }

    #[test]
    fn red_box_size_on_blank_map() {
        let cfg = RasterConfig::paper();
        let a = anchor_at(12.0, 34.0, 0.9);
        let map = full_drivable_map(&a, &cfg);
        let history = vec![(a, Footprint::PICKUP)];
        let raster = render(&map, &history, &cfg).unwrap();
        let mut red = 0usize;
        let mut white = 0usize;
        for row in 0..cfg.size_px {
            for col in 0..cfg.size_px {
                match raster.get(col, row) {
                    [255, 0, 0] => red += 1,
                    [255, 255, 255] => white += 1,
                    other => panic!("unexpected color {other:?}"),
                }
            }
        }
        // 5.0 m x 2.5 m at 0.1 m/px is nominally 50 x 25 = 1250 pixels.
        assert!((1176..=1326).contains(&red), "red pixel count {red}");
        assert_eq!(red + white, cfg.size_px * cfg.size_px);
    }

    #[test]
    fn render_deterministic() {
        let cfg = RasterConfig::train();
        let a = anchor_at(5.0, 5.0, 1.2);
        let map = full_drivable_map(&a, &cfg);
        let hist: Vec<_> = (0..6)
            .map(|i| {
                let s = anchor_at(5.0 - i as f64, 5.0, 1.2);
                (s, Footprint::PICKUP)
            })
            .rev()
            .collect();
        let r1 = render(&map, &hist, &cfg).unwrap();
        let r2 = render(&map, &hist, &cfg).unwrap();
        assert_eq!(r1.pixels, r2.pixels);
    }

    #[test]
    fn empty_map_black_background() {
        let cfg = RasterConfig::train();
        let a = anchor_at(0.0, 0.0, 0.0);
        let map = SceneMap::empty();
        let raster = render(&map, &[(a, Footprint::PICKUP)], &cfg).unwrap();
        let mut red = 0usize;
        for row in 0..cfg.size_px {
            for col in 0..cfg.size_px {
                match raster.get(col, row) {
                    [255, 0, 0] => red += 1,
                    [0, 0, 0] => {}
                    other => panic!("unexpected color {other:?}"),
                }
            }
        }
        // 5.0 x 2.5 m at 0.5 m/px: 10 x 5 = 50 pixels.
        assert_eq!(red, 50);
    }

    #[test]
    fn empty_history_is_error() {
        let cfg = RasterConfig::train();
        match render(&SceneMap::empty(), &[], &cfg) {
            Err(Error::AnchorRequired) => {}
            other => panic!("expected anchor required, got {other:?}"),
        }
    }

    #[test]
    fn red_pixels_only_inside_history_boxes() {
        let cfg = RasterConfig::train();
        let states: Vec<AgentState> = (0..6)
            .map(|i| anchor_at(i as f64 * 2.0, 0.3 * i as f64, 0.15 * i as f64))
            .collect();
        let a = *states.last().unwrap();
        let map = full_drivable_map(&a, &cfg);
        let hist: Vec<_> = states.iter().map(|&s| (s, Footprint::PICKUP)).collect();
        let raster = render(&map, &hist, &cfg).unwrap();
        // The same history on an empty map marks exactly the painted area.
        let boxes_only = render(&SceneMap::empty(), &hist, &cfg).unwrap();
        for row in 0..cfg.size_px {
            for col in 0..cfg.size_px {
                let [r, g, b] = raster.get(col, row);
                let is_red = r > 0 && g == 0 && b == 0;
                let painted = boxes_only.get(col, row) != BLACK;
                assert_eq!(is_red, painted, "pixel ({col}, {row})");
            }
        }
    }

    #[test]
    fn rigid_motion_equivariance() {
        // Moving map and history by the same rigid transform as the anchor
        // leaves the raster bit-identical.
        let cfg = RasterConfig::train();
        let states: Vec<AgentState> = (0..4)
            .map(|i| anchor_at(i as f64 * 3.0, 1.0 + 0.5 * i as f64, 0.2 * i as f64))
            .collect();
        let map = SceneMap {
            origin_note: String::new(),
            drivable: vec![Polygon::new(vec![
                Vec2::new(-30.0, -14.0),
                Vec2::new(55.0, -11.0),
                Vec2::new(60.0, 17.0),
                Vec2::new(-25.0, 13.0),
            ])],
            non_drivable: vec![Polygon::new(vec![
                Vec2::new(20.0, 4.0),
                Vec2::new(27.0, 5.0),
                Vec2::new(24.0, 9.0),
            ])],
        };
        let hist: Vec<_> = states.iter().map(|&s| (s, Footprint::PICKUP)).collect();
        let base = render(&map, &hist, &cfg).unwrap();

        let angle = 0.7;
        let shift = Vec2::new(12.3, -7.9);
        let move_pt = |p: Vec2| p.rotate(angle) + shift;
        let moved_map = SceneMap {
            origin_note: String::new(),
            drivable: map
                .drivable
                .iter()
                .map(|p| Polygon::new(p.vertices.iter().map(|&v| move_pt(v)).collect()))
                .collect(),
            non_drivable: map
                .non_drivable
                .iter()
                .map(|p| Polygon::new(p.vertices.iter().map(|&v| move_pt(v)).collect()))
                .collect(),
        };
        let moved_hist: Vec<_> = states
            .iter()
            .map(|&s| {
                let p = move_pt(s.position());
                (
                    AgentState {
                        x: p.x,
                        y: p.y,
                        theta: crate::geom::wrap_angle(s.theta + angle),
                        ..s
                    },
                    Footprint::PICKUP,
                )
            })
            .collect();
        let moved = render(&moved_map, &moved_hist, &cfg).unwrap();
        assert_eq!(base.pixels, moved.pixels);
    }

    #[test]
    fn png_round_trip() {
        let cfg = RasterConfig::small();
        let a = anchor_at(0.0, 0.0, 0.4);
        let map = full_drivable_map(&a, &cfg);
        let raster = render(&map, &[(a, Footprint::MINING_TRUCK)], &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raster.png");
        export_png(&raster, &path).unwrap();
        let (w, h, data) = read_png(&path).unwrap();
        assert_eq!((w, h), (cfg.size_px, cfg.size_px));
        assert_eq!(data, raster.pixels);
    }

    #[test]
    fn export_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        for cfg in [RasterConfig::train(), RasterConfig::small()] {
            let a = anchor_at(0.0, 0.0, 0.0);
            let raster = render(&SceneMap::empty(), &[(a, Footprint::PICKUP)], &cfg).unwrap();
            let path = dir.path().join(format!("r{}.png", cfg.size_px));
            export_png(&raster, &path).unwrap();
            let (w, h, _) = read_png(&path).unwrap();
            assert_eq!((w, h), (cfg.size_px, cfg.size_px));
        }
    }
}
