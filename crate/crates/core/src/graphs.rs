//! The four interaction graphs and adjacency normalization.
//!
//! All graphs are built once per sample from positions at the current (last
//! observed) frame. Node order follows the sample, ego at index 0. Raw
//! matrices have a zero diagonal; self-loops are added by
//! [`normalize_adjacency`].
//!
//! | graph      | edge `i -> j`                                        | symmetric |
//! |------------|------------------------------------------------------|-----------|
//! | distance   | `1/|p_i - p_j|` when within the threshold            | yes       |
//! | visibility | `cos(a_ij)/|p_i - p_j|` when `j` is ahead of `i`     | no        |
//! | planning   | `1` into the ego when the planned endpoint is in `i`'s cone | no |
//! | category   | `1` for same-type pairs                              | yes       |

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::scene::{Sample, Vec2};
use crate::tensor::Tensor;

/// Displacements shorter than this (meters per frame) give no heading.
pub const MOTION_EPSILON: f64 = 1e-4;
/// Pairs closer than this (meters) count as coincident.
pub const COINCIDENT_DISTANCE: f64 = 1e-9;
/// Distance weight used for coincident pairs.
pub const MAX_DISTANCE_WEIGHT: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum GraphKind {
    Distance,
    Visibility,
    Planning,
    Category,
}

impl GraphKind {
    pub const ALL: [GraphKind; 4] = [
        GraphKind::Distance,
        GraphKind::Visibility,
        GraphKind::Planning,
        GraphKind::Category,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GraphKind::Distance => "distance",
            GraphKind::Visibility => "visibility",
            GraphKind::Planning => "planning",
            GraphKind::Category => "category",
        }
    }
}

/// Heading of one agent at the current frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionDirection {
    pub vector: Vec2,
    pub valid: bool,
}

/// Backward difference `p_t - p_(t-1)` at the current frame.
///
/// Invalid when either frame is masked or the displacement is shorter than
/// [`MOTION_EPSILON`].
pub fn motion_directions(sample: &Sample) -> Vec<MotionDirection> {
    let t = sample.obs_points();
    (0..sample.agent_count())
        .map(|i| {
            if t < 2 || !sample.obs_mask[i][t - 1] || !sample.obs_mask[i][t - 2] {
                return MotionDirection {
                    vector: Vec2::ZERO,
                    valid: false,
                };
            }
            let d = sample.observed[i][t - 1] - sample.observed[i][t - 2];
            MotionDirection {
                vector: d,
                valid: d.norm() >= MOTION_EPSILON,
            }
        })
        .collect()
}

fn current_positions(sample: &Sample) -> Vec<Option<Vec2>> {
    (0..sample.agent_count()).map(|i| sample.current(i)).collect()
}

/// Distance graph. The flag reports whether any pair was coincident (and
/// therefore capped at [`MAX_DISTANCE_WEIGHT`]).
pub fn build_distance_graph(sample: &Sample, threshold: f64) -> (Tensor, bool) {
    let pos = current_positions(sample);
    let n = pos.len();
    let mut e = Tensor::zeros(&[n, n]);
    let mut coincident = false;
    for i in 0..n {
        for j in 0..n {
            let (Some(pi), Some(pj)) = (pos[i], pos[j]) else { continue };
            if i == j {
                continue;
            }
            let d = (pi - pj).norm();
            if d < COINCIDENT_DISTANCE {
                coincident = true;
                e.set(&[i, j], MAX_DISTANCE_WEIGHT);
            } else if d <= threshold {
                e.set(&[i, j], 1.0 / d);
            }
        }
    }
    (e, coincident)
}

/// Visibility graph: row `i` weights the agents in front of agent `i`.
#[allow(clippy::needless_range_loop)]
pub fn build_visibility_graph(sample: &Sample) -> Tensor {
    let pos = current_positions(sample);
    let dirs = motion_directions(sample);
    let n = pos.len();
    let mut e = Tensor::zeros(&[n, n]);
    for i in 0..n {
        let (Some(pi), true) = (pos[i], dirs[i].valid) else { continue };
        let di = dirs[i].vector;
        for j in 0..n {
            let Some(pj) = pos[j] else { continue };
            if i == j {
                continue;
            }
            let dij = pj - pi;
            let dist = dij.norm();
            if dist < COINCIDENT_DISTANCE {
                continue;
            }
            let dot = di.dot(dij);
            if dot > 0.0 {
                let cos = dot / (di.norm() * dist);
                e.set(&[i, j], cos / dist);
            }
        }
    }
    e
}

/// Planning graph: `e[i][0] = 1` when the ego's planned final position lies
/// within `beta_degrees` of agent `i`'s heading. Only column 0 is populated.
pub fn build_planning_graph(sample: &Sample, beta_degrees: f64) -> Tensor {
    let pos = current_positions(sample);
    let dirs = motion_directions(sample);
    let n = pos.len();
    let mut e = Tensor::zeros(&[n, n]);
    let Some(&end) = sample.ego_plan.last() else { return e };
    let cos_beta = libm::cos(beta_degrees.to_radians());
    for i in 1..n {
        let (Some(pi), true) = (pos[i], dirs[i].valid) else { continue };
        let d = end - pi;
        let dist = d.norm();
        if dist < COINCIDENT_DISTANCE {
            continue;
        }
        let di = dirs[i].vector;
        let cos = di.dot(d) / (di.norm() * dist);
        if cos >= cos_beta {
            e.set(&[i, 0], 1.0);
        }
    }
    e
}

/// Category graph: 1 between distinct agents of the same type.
pub fn build_category_graph(sample: &Sample) -> Tensor {
    let n = sample.agent_count();
    let mut e = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            if i != j && sample.categories[i] == sample.categories[j] {
                e.set(&[i, j], 1.0);
            }
        }
    }
    e
}

/// Adds self-loops and divides every entry by its column sum.
pub fn normalize_adjacency(e: &Tensor) -> Tensor {
    let n = e.shape()[0];
    let mut out = e.clone();
    for i in 0..n {
        let v = out.at(&[i, i]);
        out.set(&[i, i], v + 1.0);
    }
    for j in 0..n {
        let sum: f64 = (0..n).map(|i| out.at(&[i, j])).sum();
        for i in 0..n {
            let v = out.at(&[i, j]);
            out.set(&[i, j], v / sum);
        }
    }
    out
}

/// Raw adjacency matrices of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencySet {
    pub distance: Tensor,
    pub visibility: Tensor,
    pub planning: Tensor,
    pub category: Tensor,
    /// Some pair of agents was coincident in the distance graph.
    pub coincident_agents: bool,
}

impl AdjacencySet {
    pub fn build(sample: &Sample, distance_threshold: f64, beta_degrees: f64) -> Self {
        let (distance, coincident_agents) = build_distance_graph(sample, distance_threshold);
        Self {
            distance,
            visibility: build_visibility_graph(sample),
            planning: build_planning_graph(sample, beta_degrees),
            category: build_category_graph(sample),
            coincident_agents,
        }
    }

    pub fn get(&self, kind: GraphKind) -> &Tensor {
        match kind {
            GraphKind::Distance => &self.distance,
            GraphKind::Visibility => &self.visibility,
            GraphKind::Planning => &self.planning,
            GraphKind::Category => &self.category,
        }
    }
}

/// Dense decimal-text grid, one row per line, for fixture comparison.
pub fn dump_grid(m: &Tensor) -> String {
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    let mut s = String::new();
    for i in 0..rows {
        for j in 0..cols {
            if j > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{:.16e}", m.at(&[i, j]));
        }
        s.push('\n');
    }
    s
}
