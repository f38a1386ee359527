//! Small scripted scenes for smoke tests and overfitting checks.

use alloc::vec;
use alloc::vec::Vec;

use crate::scene::{Category, Sample, Vec2};

/// One scripted agent: start position, per-frame velocity and a constant
/// turn rate (radians per frame).
#[derive(Debug, Clone, Copy)]
struct Script {
    category: Category,
    start: Vec2,
    velocity: Vec2,
    turn: f64,
}

impl Script {
    fn path(&self, frames: usize) -> Vec<Vec2> {
        let mut p = self.start;
        let mut v = self.velocity;
        let mut out = Vec::with_capacity(frames);
        for _ in 0..frames {
            out.push(p);
            p = p + v;
            v = v.rotated(self.turn);
        }
        out
    }
}

fn scene(k: usize, obs_points: usize, pred_points: usize, frame_rate: f64) -> Sample {
    let kf = k as f64;
    let heading = 0.4 * kf;
    let dir = Vec2::new(libm::cos(heading), libm::sin(heading));
    let side = Vec2::new(-dir.y, dir.x);
    let scripts = [
        Script {
            category: Category::Vehicle,
            start: Vec2::ZERO,
            velocity: dir * 1.0,
            turn: 0.0,
        },
        Script {
            category: Category::Vehicle,
            start: dir * 4.0 + side * 1.5,
            velocity: dir * (0.8 + 0.05 * kf),
            turn: 0.02 * (kf - 3.5),
        },
        Script {
            category: Category::Pedestrian,
            start: side * 3.0 - dir * (0.5 * kf),
            velocity: side * -0.3 + dir * 0.1,
            turn: 0.0,
        },
        Script {
            category: Category::Bicyclist,
            start: side * -2.0 + dir * 1.0,
            velocity: dir * 0.6 + side * (0.05 * (kf - 4.0)),
            turn: -0.03,
        },
    ];
    let total = obs_points + pred_points;
    let paths: Vec<Vec<Vec2>> = scripts.iter().map(|s| s.path(total)).collect();
    let n = scripts.len();
    Sample {
        agent_ids: (0..n as i64).collect(),
        categories: scripts.iter().map(|s| s.category).collect(),
        observed: paths.iter().map(|p| p[..obs_points].to_vec()).collect(),
        obs_mask: vec![vec![true; obs_points]; n],
        future: paths.iter().map(|p| p[obs_points..].to_vec()).collect(),
        fut_mask: vec![vec![true; pred_points]; n],
        ego_plan: paths[0][obs_points..].to_vec(),
        frame_rate,
        origin: Vec2::ZERO,
    }
}

/// Eight scenes with an ego vehicle plus one vehicle, pedestrian and
/// bicyclist each. Observation and prediction horizons follow the 2 Hz urban
/// preset (6 and 6 points).
pub fn synthetic_dataset() -> Vec<Sample> {
    synthetic_dataset_with(8, 6, 6)
}

pub fn synthetic_dataset_with(samples: usize, obs_points: usize, pred_points: usize) -> Vec<Sample> {
    (0..samples).map(|k| scene(k, obs_points, pred_points, 2.0)).collect()
}
