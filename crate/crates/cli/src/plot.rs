//! Deterministic SVG figures: map polygons as light/dark patches, the
//! ground truth as one green polyline, and each predicted mode as a red
//! polyline whose opacity tracks its probability. Modes flagged infeasible
//! render dashed. Coordinates are emitted y-flipped at fixed precision so
//! identical inputs produce byte-identical files.

use std::fmt::Write;

use pitcast_core::eval::Prediction;
use pitcast_core::geom::Vec2;
use pitcast_core::scene::SceneMap;

pub struct PlotInput<'a> {
    pub map: &'a SceneMap,
    pub ground_truth: &'a [Vec2],
    pub prediction: &'a Prediction,
    /// Per-mode infeasibility flags (dashed rendering); empty when the
    /// feasibility filter is off.
    pub infeasible: &'a [bool],
}

fn fmt_point(out: &mut String, p: Vec2) {
    let _ = write!(out, "{:.2},{:.2} ", p.x, -p.y);
}

fn polyline_points(points: &[Vec2]) -> String {
    let mut s = String::new();
    for &p in points {
        fmt_point(&mut s, p);
    }
    s.trim_end().to_string()
}

/// Render the figure. Opacity of mode m is 0.25 + 0.75·(p_m / p_max), so
/// the most probable mode is fully opaque; its probability is printed as a
/// numeric label at its endpoint.
pub fn render_svg(input: &PlotInput) -> String {
    let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut grow = |p: Vec2| {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    };
    for poly in input.map.drivable.iter().chain(&input.map.non_drivable) {
        for &v in &poly.vertices {
            grow(v);
        }
    }
    for &p in input.ground_truth {
        grow(p);
    }
    for traj in &input.prediction.modes {
        for &p in traj {
            grow(p);
        }
    }
    let margin = 10.0;
    let (x0, y0) = (min.x - margin, -(max.y + margin));
    let (w, h) = (max.x - min.x + 2.0 * margin, max.y - min.y + 2.0 * margin);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{x0:.2} {y0:.2} {w:.2} {h:.2}\">"
    );
    let _ = writeln!(svg, "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"#d9d2c7\"/>");

    for poly in &input.map.drivable {
        let _ = writeln!(
            svg,
            "<polygon class=\"drivable\" points=\"{}\" fill=\"#f2f2f2\" stroke=\"none\"/>",
            polyline_points(&poly.vertices)
        );
    }
    for poly in &input.map.non_drivable {
        let _ = writeln!(
            svg,
            "<polygon class=\"non-drivable\" points=\"{}\" fill=\"#3c3c3c\" stroke=\"none\"/>",
            polyline_points(&poly.vertices)
        );
    }

    let p_max = input
        .prediction
        .probs
        .iter()
        .cloned()
        .fold(f64::MIN, f64::max)
        .max(1e-12);
    for (m, traj) in input.prediction.modes.iter().enumerate() {
        let p = input.prediction.probs[m];
        let opacity = 0.25 + 0.75 * (p / p_max);
        let dashed = input.infeasible.get(m).copied().unwrap_or(false);
        let dash = if dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        let _ = writeln!(
            svg,
            "<polyline class=\"mode\" points=\"{}\" fill=\"none\" stroke=\"red\" stroke-width=\"1.2\" stroke-opacity=\"{opacity:.3}\"{dash}/>",
            polyline_points(traj)
        );
    }

    let _ = writeln!(
        svg,
        "<polyline class=\"gt\" points=\"{}\" fill=\"none\" stroke=\"green\" stroke-width=\"1.2\"/>",
        polyline_points(input.ground_truth)
    );

    // Label the most probable mode with its probability value.
    if let Some(best) = input
        .prediction
        .probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
    {
        if let Some(&end) = input.prediction.modes[best].last() {
            let _ = writeln!(
                svg,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"4\" fill=\"#900\">{:.2}</text>",
                end.x + 2.0,
                -end.y,
                input.prediction.probs[best]
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use pitcast_core::geom::Polygon;

    fn sample_input() -> (SceneMap, Vec<Vec2>, Prediction) {
        let map = SceneMap {
            origin_note: String::new(),
            drivable: vec![Polygon::new(vec![
                Vec2::new(-10.0, -5.0),
                Vec2::new(60.0, -5.0),
                Vec2::new(60.0, 5.0),
                Vec2::new(-10.0, 5.0),
            ])],
            non_drivable: vec![Polygon::new(vec![
                Vec2::new(20.0, 6.0),
                Vec2::new(30.0, 6.0),
                Vec2::new(25.0, 12.0),
            ])],
        };
        let gt: Vec<Vec2> = (1..=6).map(|i| Vec2::new(5.0 * i as f64, 0.0)).collect();
        let modes: Vec<Vec<Vec2>> = (0..3)
            .map(|m| (1..=6).map(|i| Vec2::new(5.0 * i as f64, m as f64)).collect())
            .collect();
        let pred = Prediction::new(0, "model-M3", modes, vec![0.5, 0.3, 0.2]);
        (map, gt, pred)
    }

    #[test]
    fn one_green_and_m_red_polylines() {
        let (map, gt, pred) = sample_input();
        let svg = render_svg(&PlotInput {
            map: &map,
            ground_truth: &gt,
            prediction: &pred,
            infeasible: &[],
        });
        assert_eq!(svg.matches("stroke=\"red\"").count(), 3);
        assert_eq!(svg.matches("stroke=\"green\"").count(), 1);
        assert!(svg.contains(">0.50</text>"));
    }

    #[test]
    fn byte_identical_output() {
        let (map, gt, pred) = sample_input();
        let make = || {
            render_svg(&PlotInput {
                map: &map,
                ground_truth: &gt,
                prediction: &pred,
                infeasible: &[],
            })
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn infeasible_mode_rendered_dashed() {
        let (map, gt, pred) = sample_input();
        let svg = render_svg(&PlotInput {
            map: &map,
            ground_truth: &gt,
            prediction: &pred,
            infeasible: &[false, true, false],
        });
        assert_eq!(svg.matches("stroke-dasharray").count(), 1);
    }
}
