//! Agent tracks, windowed samples and the windowing/centering operations.
//!
//! A [`Sample`] always puts the ego agent at index 0. Observation windows hold
//! `obs_points` positions ending at the current frame; the prediction window
//! holds the following `pred_points` positions. Neighbours missing from some
//! frames are zero-filled and masked.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

/// 2-D position or displacement in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        libm::hypot(self.x, self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotation by `angle` radians about the origin.
    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = (libm::sin(angle), libm::cos(angle));
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Agent type. Small and big vehicles share [`Category::Vehicle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Category {
    Vehicle,
    Pedestrian,
    Bicyclist,
    Others,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Vehicle,
        Category::Pedestrian,
        Category::Bicyclist,
        Category::Others,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Vehicle => "vehicle",
            Category::Pedestrian => "pedestrian",
            Category::Bicyclist => "bicyclist",
            Category::Others => "others",
        }
    }

    pub fn parse(s: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.as_str() == s)
    }

    /// Apollo-style type codes: 1 small vehicle, 2 big vehicle, 3 pedestrian,
    /// 4 motorcyclist/bicyclist, 5 others.
    pub fn from_apollo_code(code: i64) -> Option<Category> {
        match code {
            1 | 2 => Some(Category::Vehicle),
            3 => Some(Category::Pedestrian),
            4 => Some(Category::Bicyclist),
            5 => Some(Category::Others),
            _ => None,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub frame: i64,
    pub position: Vec2,
    /// Lane index, when the source provides one.
    pub lane: Option<i32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrack {
    pub agent_id: i64,
    pub category: Category,
    /// Strictly increasing in `frame`.
    pub states: Vec<TrackPoint>,
}

impl AgentTrack {
    pub fn validate(&self) -> Result<()> {
        for w in self.states.windows(2) {
            if w[1].frame <= w[0].frame {
                return Err(Error::Data(format!(
                    "agent {}: frame {} follows frame {}",
                    self.agent_id, w[1].frame, w[0].frame
                )));
            }
        }
        if let Some(p) = self.states.iter().find(|p| !p.position.is_finite()) {
            return Err(Error::Data(format!(
                "agent {}: non-finite position at frame {}",
                self.agent_id, p.frame
            )));
        }
        Ok(())
    }
}

/// All tracks from one source recording, sorted by agent id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Recording {
    pub name: String,
    pub tracks: Vec<AgentTrack>,
}

/// Rule deciding which agents around the ego become nodes of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "rule", rename_all = "snake_case"))]
pub enum Neighborhood {
    /// Within `scope * distance_threshold` meters of the ego.
    Radius { scope: f64 },
    /// Within `longitudinal` meters along the road (y axis) and at most
    /// `lanes` lanes away.
    HighwayBand { longitudinal: f64, lanes: i32 },
}

/// 90 ft in meters.
pub const HIGHWAY_LONGITUDINAL_M: f64 = 90.0 * 0.3048;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DatasetConfig {
    /// Observed positions per window, current frame included.
    pub obs_points: usize,
    /// Future positions per window.
    pub pred_points: usize,
    /// Distance-graph threshold in meters.
    pub distance_threshold: f64,
    /// Half-angle of the planning cone in degrees.
    pub beta_degrees: f64,
    pub neighborhood: Neighborhood,
    /// Frame rate of the raw source, Hz.
    pub source_frame_rate: f64,
    /// Keep every `downsample`-th source frame.
    pub downsample: usize,
    /// Window start spacing, in retained frames.
    pub window_stride: usize,
}

impl DatasetConfig {
    /// Urban mixed traffic at 2 Hz: 6 observed + 6 future points.
    pub fn apollo() -> Self {
        Self {
            obs_points: 6,
            pred_points: 6,
            distance_threshold: 10.0,
            beta_degrees: 20.0,
            neighborhood: Neighborhood::Radius { scope: 3.0 },
            source_frame_rate: 2.0,
            downsample: 1,
            window_stride: 1,
        }
    }

    /// Highway vehicles at 10 Hz downsampled to 5 Hz, cut into 8 s segments:
    /// 15 observed + 25 future points.
    pub fn ngsim() -> Self {
        Self {
            obs_points: 15,
            pred_points: 25,
            distance_threshold: 10.0,
            beta_degrees: 20.0,
            neighborhood: Neighborhood::HighwayBand {
                longitudinal: HIGHWAY_LONGITUDINAL_M,
                lanes: 1,
            },
            source_frame_rate: 10.0,
            downsample: 2,
            window_stride: 40,
        }
    }

    pub fn frame_rate(&self) -> f64 {
        self.source_frame_rate / self.downsample as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.obs_points < 2 {
            return Err(Error::Config("obs_points must be at least 2".into()));
        }
        if self.pred_points == 0 || self.downsample == 0 || self.window_stride == 0 {
            return Err(Error::Config("frame counts must be positive".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.distance_threshold) || !positive(self.beta_degrees) || !positive(self.source_frame_rate) {
            return Err(Error::Config("thresholds and frame rate must be positive".into()));
        }
        match self.neighborhood {
            Neighborhood::Radius { scope } if !positive(scope) => {
                Err(Error::Config("neighborhood scope must be positive".into()))
            }
            Neighborhood::HighwayBand { longitudinal, lanes } if !positive(longitudinal) || lanes < 0 => {
                Err(Error::Config("highway band must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Whether `other` (at the current frame) is a node of a sample centred on `ego`.
    pub fn admits(&self, ego: &TrackPoint, other: &TrackPoint) -> bool {
        match self.neighborhood {
            Neighborhood::Radius { scope } => {
                (other.position - ego.position).norm() <= scope * self.distance_threshold
            }
            Neighborhood::HighwayBand { longitudinal, lanes } => match (ego.lane, other.lane) {
                (Some(a), Some(b)) => {
                    libm::fabs(other.position.y - ego.position.y) <= longitudinal && (a - b).abs() <= lanes
                }
                _ => false,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgoSelection {
    GivenId(i64),
    EveryCompleteAgent,
}

/// One training/evaluation unit. Index 0 is the ego agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub agent_ids: Vec<i64>,
    pub categories: Vec<Category>,
    /// `N x obs_points`, oldest first; masked entries are zero.
    pub observed: Vec<Vec<Vec2>>,
    pub obs_mask: Vec<Vec<bool>>,
    /// `N x pred_points`; masked entries are zero.
    pub future: Vec<Vec<Vec2>>,
    pub fut_mask: Vec<Vec<bool>>,
    /// Planned ego positions for the prediction window.
    pub ego_plan: Vec<Vec2>,
    /// Hz.
    pub frame_rate: f64,
    /// Offset subtracted by [`ego_center`]; zero for raw samples.
    pub origin: Vec2,
}

impl Sample {
    pub fn agent_count(&self) -> usize {
        self.categories.len()
    }

    pub fn obs_points(&self) -> usize {
        self.observed.first().map_or(0, Vec::len)
    }

    pub fn pred_points(&self) -> usize {
        self.ego_plan.len()
    }

    /// Position at the current (last observed) frame.
    pub fn current(&self, agent: usize) -> Option<Vec2> {
        let last = self.obs_points().checked_sub(1)?;
        self.obs_mask[agent][last].then(|| self.observed[agent][last])
    }

    /// Non-ego agents with a fully observed future and a predictable type.
    pub fn is_supervised(&self, agent: usize) -> bool {
        agent != 0 && self.categories[agent] != Category::Others && self.fut_mask[agent].iter().all(|&m| m)
    }

    pub fn supervised_agents(&self) -> Vec<usize> {
        (0..self.agent_count()).filter(|&i| self.is_supervised(i)).collect()
    }

    /// Checks the structural invariants of a sample.
    pub fn validate(&self) -> Result<()> {
        let n = self.agent_count();
        if n == 0 {
            return Err(Error::Data("sample has no agents".into()));
        }
        let (to, tp) = (self.obs_points(), self.pred_points());
        let lens_ok = self.agent_ids.len() == n
            && self.observed.len() == n
            && self.obs_mask.len() == n
            && self.future.len() == n
            && self.fut_mask.len() == n
            && self.observed.iter().all(|r| r.len() == to)
            && self.obs_mask.iter().all(|r| r.len() == to)
            && self.future.iter().all(|r| r.len() == tp)
            && self.fut_mask.iter().all(|r| r.len() == tp);
        if !lens_ok || to < 2 || tp == 0 {
            return Err(Error::Data("inconsistent sample dimensions".into()));
        }
        if !self.obs_mask[0].iter().all(|&m| m) {
            return Err(Error::Data("ego is not fully observed".into()));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::Data("frame rate must be positive".into()));
        }
        let rows = self
            .observed
            .iter()
            .zip(&self.obs_mask)
            .chain(self.future.iter().zip(&self.fut_mask));
        for (pts, mask) in rows {
            for (p, &m) in pts.iter().zip(mask) {
                if !p.is_finite() || (!m && *p != Vec2::ZERO) {
                    return Err(Error::Data("non-finite or unpadded masked coordinate".into()));
                }
            }
        }
        if !self.ego_plan.iter().all(|p| p.is_finite()) || !self.origin.is_finite() {
            return Err(Error::Data("non-finite plan".into()));
        }
        for i in 1..n {
            if self.current(i).is_none() {
                return Err(Error::Data(format!("agent {} absent at current frame", self.agent_ids[i])));
            }
        }
        Ok(())
    }

    /// Applies `f` to every unmasked coordinate, the plan and nothing else.
    pub fn map_positions(&self, f: impl Fn(Vec2) -> Vec2) -> Sample {
        let mut s = self.clone();
        for (row, mask) in s.observed.iter_mut().zip(&s.obs_mask) {
            for (p, &m) in row.iter_mut().zip(mask) {
                if m {
                    *p = f(*p);
                }
            }
        }
        for (row, mask) in s.future.iter_mut().zip(&s.fut_mask) {
            for (p, &m) in row.iter_mut().zip(mask) {
                if m {
                    *p = f(*p);
                }
            }
        }
        for p in &mut s.ego_plan {
            *p = f(*p);
        }
        s
    }
}

/// Shifts all coordinates so the ego's current position is the origin.
pub fn ego_center(sample: &Sample) -> Sample {
    let offset = sample.current(0).unwrap_or(Vec2::ZERO);
    let mut s = sample.map_positions(|p| p - offset);
    s.origin = sample.origin + offset;
    s
}

/// Inverse of [`ego_center`].
pub fn uncenter(sample: &Sample) -> Sample {
    let offset = sample.origin;
    let mut s = sample.map_positions(|p| p + offset);
    s.origin = Vec2::ZERO;
    s
}

/// Cuts a recording into samples.
///
/// Windows start at the earliest frame of the recording and advance by
/// `window_stride` retained frames. For each window, every eligible ego (fully
/// present over observation and prediction) yields one sample whose nodes are
/// the agents present at the current frame and admitted by the neighbourhood
/// rule. Output is ordered by window start, then ego id.
pub fn window_samples(recording: &Recording, config: &DatasetConfig, ego: EgoSelection) -> Result<Vec<Sample>> {
    config.validate()?;
    let step = config.downsample as i64;
    let span = (config.obs_points + config.pred_points) as i64;

    let mut by_agent: BTreeMap<i64, (Category, BTreeMap<i64, TrackPoint>)> = BTreeMap::new();
    for track in &recording.tracks {
        track.validate()?;
        let frames = track.states.iter().map(|p| (p.frame, *p)).collect();
        if by_agent.insert(track.agent_id, (track.category, frames)).is_some() {
            return Err(Error::Data(format!("duplicate track for agent {}", track.agent_id)));
        }
    }
    let all_frames = by_agent.values().flat_map(|(_, f)| f.keys().copied());
    let (Some(first), Some(last)) = (all_frames.clone().min(), all_frames.max()) else {
        return Ok(Vec::new());
    };

    let mut out = Vec::new();
    let mut start = first;
    while start + (span - 1) * step <= last {
        let frame_at = |k: usize| start + k as i64 * step;
        let now = frame_at(config.obs_points - 1);
        let complete = |frames: &BTreeMap<i64, TrackPoint>| (0..span as usize).all(|k| frames.contains_key(&frame_at(k)));

        let egos: Vec<i64> = match ego {
            EgoSelection::GivenId(id) => by_agent.get(&id).filter(|(_, f)| complete(f)).map(|_| id).into_iter().collect(),
            EgoSelection::EveryCompleteAgent => by_agent
                .iter()
                .filter(|(_, (_, f))| complete(f))
                .map(|(&id, _)| id)
                .collect(),
        };

        for ego_id in egos {
            let (ego_cat, ego_frames) = &by_agent[&ego_id];
            let ego_now = ego_frames[&now];
            let mut nodes = vec![(ego_id, *ego_cat, ego_frames)];
            for (&id, (cat, frames)) in &by_agent {
                if id == ego_id {
                    continue;
                }
                if let Some(p) = frames.get(&now) {
                    if config.admits(&ego_now, p) {
                        nodes.push((id, *cat, frames));
                    }
                }
            }

            let mut sample = Sample {
                agent_ids: Vec::with_capacity(nodes.len()),
                categories: Vec::with_capacity(nodes.len()),
                observed: Vec::with_capacity(nodes.len()),
                obs_mask: Vec::with_capacity(nodes.len()),
                future: Vec::with_capacity(nodes.len()),
                fut_mask: Vec::with_capacity(nodes.len()),
                ego_plan: Vec::new(),
                frame_rate: config.frame_rate(),
                origin: Vec2::ZERO,
            };
            for (id, cat, frames) in nodes {
                let lookup = |k: usize| frames.get(&frame_at(k)).map(|p| p.position);
                let obs: Vec<Option<Vec2>> = (0..config.obs_points).map(lookup).collect();
                let fut: Vec<Option<Vec2>> = (config.obs_points..span as usize).map(lookup).collect();
                sample.agent_ids.push(id);
                sample.categories.push(cat);
                sample.observed.push(obs.iter().map(|p| p.unwrap_or_default()).collect());
                sample.obs_mask.push(obs.iter().map(Option::is_some).collect());
                sample.future.push(fut.iter().map(|p| p.unwrap_or_default()).collect());
                sample.fut_mask.push(fut.iter().map(Option::is_some).collect());
            }
            sample.ego_plan = sample.future[0].clone();
            out.push(sample);
        }
        start += config.window_stride as i64 * step;
    }
    Ok(out)
}
