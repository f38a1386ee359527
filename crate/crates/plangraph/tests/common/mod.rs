//! Random scenes and brute-force graph oracles shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use plangraph_core::{Category, Sample, Tensor, Vec2};
use rand::{Rng, RngCore};

pub const D_THRESHOLD: f64 = 10.0;
pub const BETA_DEG: f64 = 20.0;

/// A scene at the current frame: positions, previous positions (`None` when
/// masked) and the planned endpoint.
#[derive(Debug, Clone)]
pub struct Scene {
    pub now: Vec<Vec2>,
    pub prev: Vec<Option<Vec2>>,
    pub categories: Vec<Category>,
    pub plan_end: Vec2,
}

fn coord(rng: &mut impl RngCore, span: f64, grid: bool) -> f64 {
    let v = rng.random_range(-span..span);
    if grid {
        (v * 1024.0).round() / 1024.0
    } else {
        v
    }
}

/// Up to `max_agents` agents within 12 m of the origin. Some agents stand
/// still, some miss the previous frame, a few share a position. With `grid`
/// every coordinate is a multiple of 1/1024.
pub fn random_scene(rng: &mut impl RngCore, max_agents: usize, grid: bool) -> Scene {
    let n = rng.random_range(1..=max_agents);
    let mut now = Vec::with_capacity(n);
    let mut prev = Vec::with_capacity(n);
    let mut categories = Vec::with_capacity(n);
    for i in 0..n {
        let p = if i > 0 && rng.random_bool(0.05) {
            now[rng.random_range(0..i)]
        } else {
            Vec2::new(coord(rng, 12.0, grid), coord(rng, 12.0, grid))
        };
        let roll: f64 = rng.random();
        let q = if roll < 0.1 {
            Some(p)
        } else if roll < 0.2 && i > 0 {
            None
        } else {
            let len = rng.random_range(0.01..2.0);
            let ang = rng.random_range(0.0..std::f64::consts::TAU);
            let h = Vec2::new(len * ang.cos(), len * ang.sin());
            let q = p - h;
            Some(if grid {
                Vec2::new((q.x * 1024.0).round() / 1024.0, (q.y * 1024.0).round() / 1024.0)
            } else {
                q
            })
        };
        now.push(p);
        prev.push(q);
        categories.push(Category::ALL[rng.random_range(0..4)]);
    }
    let plan_end = if n > 1 && rng.random_bool(0.5) {
        // Aim near some agent's heading so planning edges are common.
        let i = rng.random_range(1..n);
        let h = prev[i].map_or(Vec2::new(1.0, 0.0), |q| now[i] - q);
        let h = if h.norm() > 0.0 { h * (1.0 / h.norm()) } else { Vec2::new(1.0, 0.0) };
        let dist = rng.random_range(1.0..15.0);
        let off = rng.random_range(-40f64..40.0).to_radians();
        now[i] + h.rotated(off) * dist
    } else {
        Vec2::new(coord(rng, 15.0, false), coord(rng, 15.0, false))
    };
    let plan_end = if grid {
        Vec2::new((plan_end.x * 1024.0).round() / 1024.0, (plan_end.y * 1024.0).round() / 1024.0)
    } else {
        plan_end
    };
    Scene {
        now,
        prev,
        categories,
        plan_end,
    }
}

impl Scene {
    /// Three observed points (oldest masked) and a two-point plan ending at
    /// `plan_end`.
    pub fn to_sample(&self) -> Sample {
        let n = self.now.len();
        let observed = (0..n)
            .map(|i| vec![Vec2::ZERO, self.prev[i].unwrap_or(Vec2::ZERO), self.now[i]])
            .collect();
        let obs_mask = (0..n).map(|i| vec![i == 0, self.prev[i].is_some(), true]).collect();
        let mut s = Sample {
            agent_ids: (0..n as i64).collect(),
            categories: self.categories.clone(),
            observed,
            obs_mask,
            future: vec![vec![Vec2::ZERO; 2]; n],
            fut_mask: vec![vec![false; 2]; n],
            ego_plan: vec![(self.now[0] + self.plan_end) * 0.5, self.plan_end],
            frame_rate: 2.0,
            origin: Vec2::ZERO,
        };
        // The ego must be fully observed.
        let q = self.prev[0].unwrap_or(self.now[0]);
        s.observed[0][0] = q;
        s.observed[0][1] = q;
        s.obs_mask[0] = vec![true; 3];
        s
    }
}

fn heading(s: &Scene, i: usize) -> Option<Vec2> {
    let h = s.now[i] - s.prev[i]?;
    (h.x.hypot(h.y) >= 1e-4).then_some(h)
}

fn wrap(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    let r = a.rem_euclid(t);
    if r > std::f64::consts::PI {
        r - t
    } else {
        r
    }
}

fn bearing(from: Vec2, to: Vec2) -> f64 {
    (to.y - from.y).atan2(to.x - from.x)
}

fn dist(a: Vec2, b: Vec2) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

pub fn oracle_distance(s: &Scene) -> Vec<Vec<f64>> {
    let n = s.now.len();
    let mut e = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = dist(s.now[i], s.now[j]);
            e[i][j] = if d < 1e-9 {
                1e9
            } else if d <= D_THRESHOLD {
                1.0 / d
            } else {
                0.0
            };
        }
    }
    e
}

pub fn oracle_visibility(s: &Scene) -> Vec<Vec<f64>> {
    let n = s.now.len();
    let mut e = vec![vec![0.0; n]; n];
    for i in 0..n {
        let Some(h) = heading(s, i) else { continue };
        let facing = h.y.atan2(h.x);
        for j in 0..n {
            let d = dist(s.now[i], s.now[j]);
            if i == j || d < 1e-9 {
                continue;
            }
            let c = wrap(bearing(s.now[i], s.now[j]) - facing).cos();
            if c > 0.0 {
                e[i][j] = c / d;
            }
        }
    }
    e
}

/// `true` where agent `i` has an edge into the ego.
pub fn oracle_planning(s: &Scene) -> Vec<bool> {
    (0..s.now.len())
        .map(|i| {
            if i == 0 || dist(s.now[i], s.plan_end) < 1e-9 {
                return false;
            }
            let Some(h) = heading(s, i) else { return false };
            let off = wrap(bearing(s.now[i], s.plan_end) - h.y.atan2(h.x));
            off.abs() <= BETA_DEG.to_radians()
        })
        .collect()
}

pub fn oracle_category(s: &Scene) -> Vec<Vec<f64>> {
    let n = s.now.len();
    (0..n)
        .map(|i| (0..n).map(|j| if i != j && s.categories[i] == s.categories[j] { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn max_abs_diff(t: &Tensor, m: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((t.at(&[i, j]) - v).abs());
        }
    }
    worst
}

pub fn planning_matches(t: &Tensor, oracle: &[bool]) -> bool {
    let n = oracle.len();
    (0..n).all(|i| (0..n).all(|j| t.at(&[i, j]) == if j == 0 && oracle[i] { 1.0 } else { 0.0 }))
}

pub fn exact_match(t: &Tensor, m: &[Vec<f64>]) -> bool {
    m.iter()
        .enumerate()
        .all(|(i, row)| row.iter().enumerate().all(|(j, v)| t.at(&[i, j]) == *v))
}
