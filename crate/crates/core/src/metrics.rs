//! Displacement metrics and type-weighted scores.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{Model, PreparedSample, Predictions};
use crate::scene::{Category, Sample, Vec2};

/// Weights of vehicle, pedestrian and bicyclist errors in the weighted scores.
pub const CATEGORY_WEIGHTS: [(Category, f64); 3] = [
    (Category::Vehicle, 0.20),
    (Category::Pedestrian, 0.58),
    (Category::Bicyclist, 0.22),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementError {
    /// Mean Euclidean error over unmasked frames (m).
    pub ade: f64,
    /// Euclidean error at the last unmasked frame (m).
    pub fde: f64,
}

/// ADE/FDE of one trajectory. `None` when every frame is masked.
pub fn displacement_error(pred: &[Vec2], truth: &[Vec2], mask: &[bool]) -> Option<DisplacementError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut last = None;
    for ((p, t), &m) in pred.iter().zip(truth).zip(mask) {
        if m {
            let e = (*p - *t).norm();
            sum += e;
            count += 1;
            last = Some(e);
        }
    }
    last.map(|fde| DisplacementError {
        ade: sum / count as f64,
        fde,
    })
}

/// 0-based future index used for FDE at `seconds`: `round(seconds * frame_rate) - 1`.
pub fn horizon_index(seconds: usize, frame_rate: f64) -> Option<usize> {
    let k = libm::round(seconds as f64 * frame_rate) as usize;
    k.checked_sub(1)
}

/// Whole-second horizons that fit in `pred_points` frames.
pub fn horizons(pred_points: usize, frame_rate: f64) -> Vec<usize> {
    (1..)
        .map_while(|s| horizon_index(s, frame_rate).filter(|&i| i < pred_points).map(|_| s))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentError {
    pub agent: usize,
    pub category: Category,
    pub error: DisplacementError,
    /// Error at each whole-second horizon, `None` if that frame is masked.
    pub at_seconds: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleErrors {
    pub agents: Vec<AgentError>,
    /// Agents with a prediction but no unmasked future frame.
    pub excluded: usize,
}

/// Per-agent errors for every predicted non-ego agent of a scored type.
pub fn displacement_errors(predictions: &Predictions, sample: &Sample) -> SampleErrors {
    let hz = horizons(sample.pred_points(), sample.frame_rate);
    let mut out = SampleErrors::default();
    for (i, traj) in predictions.predicted_agents() {
        if i == 0 || sample.categories[i] == Category::Others {
            continue;
        }
        match displacement_error(traj, &sample.future[i], &sample.fut_mask[i]) {
            Some(error) => {
                let at_seconds = hz
                    .iter()
                    .map(|&s| {
                        let k = horizon_index(s, sample.frame_rate)?;
                        sample.fut_mask[i][k].then(|| (traj[k] - sample.future[i][k]).norm())
                    })
                    .collect();
                out.agents.push(AgentError {
                    agent: i,
                    category: sample.categories[i],
                    error,
                    at_seconds,
                });
            }
            None => out.excluded += 1,
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryErrors {
    pub category: Category,
    pub ade: f64,
    pub fde: f64,
    pub agents: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// Categories with at least one scored agent, in [`Category`] order.
    pub per_category: Vec<CategoryErrors>,
    pub ade: f64,
    pub fde: f64,
    /// Present only when vehicles, pedestrians and bicyclists are all scored.
    pub wsade: Option<f64>,
    pub wsfde: Option<f64>,
    /// `(seconds, mean FDE)` per whole-second horizon.
    pub fde_at_seconds: Vec<(usize, f64)>,
    pub samples: usize,
    pub agents: usize,
    pub excluded_agents: usize,
}

/// Linear combination of per-category errors with [`CATEGORY_WEIGHTS`].
pub fn weighted_sum(per_category: &[(Category, f64)]) -> Result<f64> {
    let mut total = 0.0;
    for (cat, w) in CATEGORY_WEIGHTS {
        let v = per_category
            .iter()
            .find(|(c, _)| *c == cat)
            .ok_or(Error::MissingCategory(cat))?
            .1;
        total += w * v;
    }
    Ok(total)
}

/// `(WSADE, WSFDE)`.
pub fn weighted_scores(per_category: &[CategoryErrors]) -> Result<(f64, f64)> {
    let ade: Vec<_> = per_category.iter().map(|c| (c.category, c.ade)).collect();
    let fde: Vec<_> = per_category.iter().map(|c| (c.category, c.fde)).collect();
    Ok((weighted_sum(&ade)?, weighted_sum(&fde)?))
}

/// Order-independent running sums over samples.
#[derive(Debug, Clone, Default)]
pub struct MetricAccumulator {
    // (ade sum, fde sum, count) per category in Category::ALL order
    by_cat: [(f64, f64, usize); 4],
    horizon: Vec<(usize, f64, usize)>,
    samples: usize,
    excluded: usize,
}

impl MetricAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, sample: &Sample, errors: &SampleErrors) {
        self.samples += 1;
        self.excluded += errors.excluded;
        let hz = horizons(sample.pred_points(), sample.frame_rate);
        if self.horizon.len() < hz.len() {
            self.horizon.resize(hz.len(), (0, 0.0, 0));
        }
        for (slot, &s) in self.horizon.iter_mut().zip(&hz) {
            slot.0 = s;
        }
        for a in &errors.agents {
            let slot = &mut self.by_cat[a.category as usize];
            slot.0 += a.error.ade;
            slot.1 += a.error.fde;
            slot.2 += 1;
            for (h, v) in self.horizon.iter_mut().zip(&a.at_seconds) {
                if let Some(v) = v {
                    h.1 += v;
                    h.2 += 1;
                }
            }
        }
    }

    pub fn finish(&self) -> MetricReport {
        let mut per_category = Vec::new();
        let (mut ade, mut fde, mut n) = (0.0, 0.0, 0usize);
        for (cat, &(a, f, c)) in Category::ALL.iter().zip(&self.by_cat) {
            if c > 0 {
                per_category.push(CategoryErrors {
                    category: *cat,
                    ade: a / c as f64,
                    fde: f / c as f64,
                    agents: c,
                });
                ade += a;
                fde += f;
                n += c;
            }
        }
        let (wsade, wsfde) = match weighted_scores(&per_category) {
            Ok((a, f)) => (Some(a), Some(f)),
            Err(_) => (None, None),
        };
        let denom = n.max(1) as f64;
        MetricReport {
            per_category,
            ade: ade / denom,
            fde: fde / denom,
            wsade,
            wsfde,
            fde_at_seconds: self
                .horizon
                .iter()
                .filter(|h| h.2 > 0)
                .map(|&(s, v, c)| (s, v / c as f64))
                .collect(),
            samples: self.samples,
            agents: n,
            excluded_agents: self.excluded,
        }
    }
}

/// Predicts every sample and aggregates the errors.
pub fn evaluate(model: &Model, data: &[PreparedSample]) -> Result<MetricReport> {
    let mut acc = MetricAccumulator::new();
    for prep in data {
        let preds = model.predict(prep)?;
        acc.add(&prep.sample, &displacement_errors(&preds, &prep.sample));
    }
    Ok(acc.finish())
}

/// Predictions equal to the sample's own future, for metric fixtures.
pub fn oracle_predictions(sample: &Sample) -> Predictions {
    let mut trajectories = vec![None; sample.agent_count()];
    for (i, t) in trajectories.iter_mut().enumerate().skip(1) {
        *t = Some(sample.future[i].clone());
    }
    Predictions { trajectories }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_has_zero_error() {
        let t = [Vec2::new(1.0, 2.0), Vec2::new(3.0, 4.0)];
        let e = displacement_error(&t, &t, &[true, true]).unwrap();
        assert_eq!((e.ade, e.fde), (0.0, 0.0));
    }

    #[test]
    fn constant_offset_three_four_five() {
        let truth = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(2.0, 0.5)];
        let pred: Vec<Vec2> = truth.iter().map(|&p| p + Vec2::new(3.0, 4.0)).collect();
        let e = displacement_error(&pred, &truth, &[true; 3]).unwrap();
        assert!((e.ade - 5.0).abs() < 1e-12);
        assert!((e.fde - 5.0).abs() < 1e-12);
    }

    #[test]
    fn fully_masked_is_excluded() {
        let t = [Vec2::ZERO];
        assert!(displacement_error(&t, &t, &[false]).is_none());
    }

    #[test]
    fn fde_uses_last_unmasked_frame() {
        let truth = [Vec2::ZERO; 3];
        let pred = [Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(9.0, 0.0)];
        let e = displacement_error(&pred, &truth, &[true, true, false]).unwrap();
        assert_eq!(e.fde, 2.0);
        assert_eq!(e.ade, 1.5);
    }

    #[test]
    fn horizon_mapping() {
        assert_eq!(horizons(25, 5.0), vec![1, 2, 3, 4, 5]);
        assert_eq!(horizon_index(1, 5.0), Some(4));
        assert_eq!(horizons(6, 2.0), vec![1, 2, 3]);
        assert_eq!(horizons(1, 2.0), Vec::<usize>::new());
    }

    #[test]
    fn weighted_scores_of_published_row() {
        let ade = [
            (Category::Vehicle, 1.58),
            (Category::Pedestrian, 0.62),
            (Category::Bicyclist, 1.29),
        ];
        assert!((weighted_sum(&ade).unwrap() - 0.9594).abs() < 1e-12);
        let fde = [
            (Category::Vehicle, 2.65),
            (Category::Pedestrian, 1.01),
            (Category::Bicyclist, 2.09),
        ];
        assert!((weighted_sum(&fde).unwrap() - 1.5756).abs() < 1e-12);
    }

    #[test]
    fn equal_category_errors_give_that_error() {
        let e = 0.731;
        let v = [(Category::Vehicle, e), (Category::Pedestrian, e), (Category::Bicyclist, e)];
        assert!((weighted_sum(&v).unwrap() - e).abs() < 1e-15);
    }

    #[test]
    fn missing_category_is_named() {
        let v = [(Category::Vehicle, 1.0), (Category::Bicyclist, 1.0)];
        assert_eq!(weighted_sum(&v), Err(Error::MissingCategory(Category::Pedestrian)));
    }
}
