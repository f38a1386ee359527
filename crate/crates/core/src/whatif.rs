//! Prediction under alternative ego plans.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graphs::build_planning_graph;
use crate::model::{Model, PreparedSample, Predictions};
use crate::scene::{Sample, Vec2};

/// A base sample and named replacement plans, both in the sample's own frame.
#[derive(Debug, Clone, PartialEq)]
pub struct WhatIfScenario {
    pub sample: Sample,
    pub plans: Vec<(String, Vec<Vec2>)>,
}

impl WhatIfScenario {
    pub fn validate(&self) -> Result<()> {
        let want = self.sample.pred_points();
        for (name, plan) in &self.plans {
            if plan.len() != want {
                return Err(Error::Usage(format!(
                    "plan `{name}` has {} points, expected {want}",
                    plan.len()
                )));
            }
            if !plan.iter().all(|p| p.is_finite()) {
                return Err(Error::Usage(format!("plan `{name}` has non-finite points")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhatIfOutcome {
    pub name: String,
    /// In the base sample's frame.
    pub predictions: Predictions,
    /// Column 0 of the raw planning graph.
    pub planning_column: Vec<f64>,
    /// Mean per-frame L2 distance to the base predictions, per agent.
    pub divergence: Vec<Option<f64>>,
    /// Largest coordinate difference to the base predictions.
    pub max_abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhatIfReport {
    pub base: WhatIfOutcome,
    pub alternatives: Vec<WhatIfOutcome>,
}

fn planning_column(prep: &PreparedSample) -> Vec<f64> {
    let e = &prep.adjacency.planning;
    (0..e.shape()[0]).map(|i| e.at(&[i, 0])).collect()
}

fn to_sample_frame(p: Predictions, origin_shift: Vec2) -> Predictions {
    Predictions {
        trajectories: p
            .trajectories
            .into_iter()
            .map(|t| t.map(|t| t.into_iter().map(|q| q + origin_shift).collect()))
            .collect(),
    }
}

fn compare(base: &Predictions, other: &Predictions) -> (Vec<Option<f64>>, f64) {
    let mut max = 0.0f64;
    let div = base
        .trajectories
        .iter()
        .zip(&other.trajectories)
        .map(|(a, b)| {
            let (a, b) = (a.as_ref()?, b.as_ref()?);
            let mut sum = 0.0;
            for (p, q) in a.iter().zip(b) {
                let d = *p - *q;
                max = max.max(libm::fabs(d.x)).max(libm::fabs(d.y));
                sum += d.norm();
            }
            Some(sum / a.len().max(1) as f64)
        })
        .collect();
    (div, max)
}

/// Reruns the model once per plan with the planning graph rebuilt from it.
/// All other graphs are shared with the base sample.
pub fn what_if(
    scenario: &WhatIfScenario,
    model: &Model,
    distance_threshold: f64,
    beta_degrees: f64,
) -> Result<WhatIfReport> {
    scenario.validate()?;
    let base_prep = PreparedSample::new(&scenario.sample, distance_threshold, beta_degrees)?;
    // Centering shift between the sample's frame and the model's frame.
    let shift = base_prep.sample.origin - scenario.sample.origin;
    let base_pred = to_sample_frame(model.predict(&base_prep)?, shift);
    let (zero_div, _) = compare(&base_pred, &base_pred);
    let base = WhatIfOutcome {
        name: String::from("base"),
        predictions: base_pred.clone(),
        planning_column: planning_column(&base_prep),
        divergence: zero_div,
        max_abs_diff: 0.0,
    };
    let mut alternatives = Vec::with_capacity(scenario.plans.len());
    for (name, plan) in &scenario.plans {
        let mut sample = base_prep.sample.clone();
        sample.ego_plan = plan.iter().map(|&p| p - shift).collect();
        let mut adjacency = base_prep.adjacency.clone();
        adjacency.planning = build_planning_graph(&sample, beta_degrees);
        let prep = PreparedSample::from_parts(sample, adjacency);
        let pred = to_sample_frame(model.predict(&prep)?, shift);
        let (divergence, max_abs_diff) = compare(&base_pred, &pred);
        alternatives.push(WhatIfOutcome {
            name: name.clone(),
            predictions: pred,
            planning_column: planning_column(&prep),
            divergence,
            max_abs_diff,
        });
    }
    Ok(WhatIfReport { base, alternatives })
}
