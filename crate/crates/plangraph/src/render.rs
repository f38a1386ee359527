//! Deterministic SVG scene plots.
//!
//! Observed tracks are solid, ground truth is solid and lighter, predictions
//! are dashed. The ego is drawn thicker in its own colour. Ground truth is
//! drawn only for agents that have a prediction.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use plangraph_core::{Category, Predictions, Sample, Vec2};

use crate::error::{Error, Result};

const SIZE: f64 = 800.0;
const MARGIN: f64 = 40.0;

fn colour(c: Category) -> &'static str {
    match c {
        Category::Vehicle => "#1f77b4",
        Category::Pedestrian => "#2ca02c",
        Category::Bicyclist => "#ff7f0e",
        Category::Others => "#7f7f7f",
    }
}

struct Frame {
    min: Vec2,
    scale: f64,
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a Vec2>) -> Frame {
        let (mut lo, mut hi) = (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in points {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if !lo.x.is_finite() {
            return Frame {
                min: Vec2::ZERO,
                scale: 1.0,
            };
        }
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(1.0);
        Frame {
            min: lo,
            scale: (SIZE - 2.0 * MARGIN) / span,
        }
    }

    // SVG y grows downwards.
    fn map(&self, p: Vec2) -> (f64, f64) {
        (
            MARGIN + (p.x - self.min.x) * self.scale,
            SIZE - MARGIN - (p.y - self.min.y) * self.scale,
        )
    }
}

fn path_data(frame: &Frame, points: &[Vec2], mask: &[bool]) -> String {
    let mut d = String::new();
    let mut pen_down = false;
    for (p, &m) in points.iter().zip(mask) {
        if !m {
            pen_down = false;
            continue;
        }
        let (x, y) = frame.map(*p);
        let _ = write!(d, "{}{x:.2} {y:.2}", if pen_down { " L" } else if d.is_empty() { "M" } else { " M" });
        pen_down = true;
    }
    d
}

/// SVG text for `sample` with optional `predictions` in the same frame.
pub fn scene_svg(sample: &Sample, predictions: Option<&Predictions>) -> String {
    let predicted: Vec<(usize, &[Vec2])> = predictions.map(|p| p.predicted_agents().collect()).unwrap_or_default();
    let mut pts: Vec<&Vec2> = Vec::new();
    for (row, mask) in sample.observed.iter().zip(&sample.obs_mask) {
        pts.extend(row.iter().zip(mask).filter(|(_, &m)| m).map(|(p, _)| p));
    }
    for &(i, traj) in &predicted {
        pts.extend(traj.iter());
        pts.extend(sample.future[i].iter().zip(&sample.fut_mask[i]).filter(|(_, &m)| m).map(|(p, _)| p));
    }
    let frame = Frame::fit(pts.into_iter());

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for i in 0..sample.agent_count() {
        let d = path_data(&frame, &sample.observed[i], &sample.obs_mask[i]);
        if d.is_empty() {
            continue;
        }
        let (stroke, width) = if i == 0 { ("#d62728", 3.0) } else { (colour(sample.categories[i]), 1.5) };
        let _ = writeln!(
            s,
            r#"<path class="observed" data-agent="{i}" d="{d}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#
        );
    }
    for &(i, traj) in &predicted {
        let c = colour(sample.categories[i]);
        let truth = path_data(&frame, &sample.future[i], &sample.fut_mask[i]);
        if !truth.is_empty() {
            let _ = writeln!(
                s,
                r#"<path class="truth" data-agent="{i}" d="{truth}" fill="none" stroke="{c}" stroke-opacity="0.45" stroke-width="1.5"/>"#
            );
        }
        let all = vec![true; traj.len()];
        let _ = writeln!(
            s,
            r#"<path class="predicted" data-agent="{i}" d="{}" fill="none" stroke="{c}" stroke-width="1.5" stroke-dasharray="6 4"/>"#,
            path_data(&frame, traj, &all)
        );
    }
    if let Some(p) = sample.current(0) {
        let (x, y) = frame.map(p);
        let _ = writeln!(s, r##"<circle class="ego" cx="{x:.2}" cy="{y:.2}" r="5" fill="#d62728"/>"##);
    }
    s.push_str("</svg>\n");
    s
}

pub fn render_scene(sample: &Sample, predictions: Option<&Predictions>, path: &Path) -> Result<()> {
    fs::write(path, scene_svg(sample, predictions)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use plangraph_core::metrics::oracle_predictions;
    use plangraph_core::synthetic::synthetic_dataset;

    fn count(svg: &str, class: &str) -> usize {
        svg.matches(&format!("class=\"{class}\"")).count()
    }

    #[test]
    fn no_predictions_draws_observed_only() {
        let s = &synthetic_dataset()[0];
        let svg = scene_svg(s, None);
        assert_eq!(count(&svg, "observed"), s.agent_count());
        assert_eq!(count(&svg, "truth") + count(&svg, "predicted"), 0);
        let empty = Predictions {
            trajectories: vec![None; s.agent_count()],
        };
        assert_eq!(scene_svg(s, Some(&empty)), svg);
    }

    #[test]
    fn one_path_per_agent_per_track_type() {
        let s = &synthetic_dataset()[2];
        let svg = scene_svg(s, Some(&oracle_predictions(s)));
        assert_eq!(count(&svg, "observed"), 4);
        assert_eq!(count(&svg, "truth"), 3);
        assert_eq!(count(&svg, "predicted"), 3);
        assert_eq!(svg.matches("<path").count(), 10);
        assert_eq!(svg.matches("stroke-dasharray").count(), 3);
    }

    #[test]
    fn output_is_deterministic() {
        let s = &synthetic_dataset()[5];
        let p = oracle_predictions(s);
        assert_eq!(scene_svg(s, Some(&p)), scene_svg(s, Some(&p)));
    }

    #[test]
    fn masked_points_break_the_line() {
        let frame = Frame {
            min: Vec2::ZERO,
            scale: 1.0,
        };
        let pts = [Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0)];
        let d = path_data(&frame, &pts, &[true, false, true]);
        assert_eq!(d.matches('M').count(), 2);
        assert!(!d.contains('L'));
    }
}
