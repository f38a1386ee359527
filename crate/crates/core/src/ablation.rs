//! Cumulative component ablation A1..A6.
//!
//! | row | distance | visibility | planning | category | plan fusion | per-type decoders |
//! |-----|----------|------------|----------|----------|-------------|-------------------|
//! | A1  | x        |            |          |          |             |                   |
//! | A2  | x        | x          |          |          |             |                   |
//! | A3  | x        | x          | x        |          |             |                   |
//! | A4  | x        | x          | x        | x        |             |                   |
//! | A5  | x        | x          | x        | x        | x           |                   |
//! | A6  | x        | x          | x        | x        | x           | x                 |

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::Result;
use crate::graphs::GraphKind;
use crate::metrics::{evaluate, MetricReport};
use crate::model::{parameter_layout, ModelConfig, PreparedSample};
use crate::params::ParamStore;
use crate::train::{train, TrainConfig};

/// Components switched on in one ablation row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Components {
    pub distance: bool,
    pub visibility: bool,
    pub planning: bool,
    pub category: bool,
    pub plan_fusion: bool,
    pub category_decoders: bool,
}

impl Components {
    /// Row `A{row}` for `row` in 1..=6.
    pub fn row(row: usize) -> Self {
        Self {
            distance: row >= 1,
            visibility: row >= 2,
            planning: row >= 3,
            category: row >= 4,
            plan_fusion: row >= 5,
            category_decoders: row >= 6,
        }
    }

    pub fn graphs(&self) -> Vec<GraphKind> {
        let flags = [self.distance, self.visibility, self.planning, self.category];
        GraphKind::ALL
            .into_iter()
            .zip(flags)
            .filter_map(|(k, on)| on.then_some(k))
            .collect()
    }

    pub fn apply(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig {
            enabled_graphs: self.graphs(),
            planning_fusion: self.plan_fusion,
            category_specific_decoders: self.category_decoders,
            ..base.clone()
        }
    }
}

/// The six cumulative configurations derived from `base`.
pub fn ablation_configs(base: &ModelConfig) -> Vec<(String, Components, ModelConfig)> {
    (1..=6)
        .map(|r| {
            let c = Components::row(r);
            (format!("A{r}"), c, c.apply(base))
        })
        .collect()
}

/// Reads the enabled components back from registered parameter names.
pub fn audit_components(params: &ParamStore) -> Components {
    let has = |prefix: &str| params.names().any(|n| n.starts_with(prefix));
    Components {
        distance: has("graph.distance."),
        visibility: has("graph.visibility."),
        planning: has("graph.planning."),
        category: has("graph.category."),
        plan_fusion: has("plan_fusion.") && has("plan."),
        category_decoders: !has("decoder.shared.") && has("decoder."),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub name: String,
    pub components: Components,
    /// Components read back from the row's registered parameter names.
    pub audited: Option<Components>,
    pub outcome: core::result::Result<MetricReport, String>,
}

impl AblationRow {
    pub fn wsade(&self) -> Option<f64> {
        self.outcome.as_ref().ok().and_then(|r| r.wsade)
    }

    pub fn audit_matches(&self) -> bool {
        self.audited == Some(self.components)
    }
}

/// Trains and evaluates A1..A6 with the seed in `train_config`. A failed row
/// keeps its error message and the remaining rows still run.
pub fn run_ablation(
    train_set: &[PreparedSample],
    eval_set: &[PreparedSample],
    base: &ModelConfig,
    train_config: &TrainConfig,
    clock: &mut dyn FnMut() -> f64,
) -> Vec<AblationRow> {
    ablation_configs(base)
        .into_iter()
        .map(|(name, components, config)| {
            let audited = parameter_layout(&config).ok().map(|p| audit_components(&p));
            let outcome = run_one(train_set, eval_set, config, train_config, clock).map_err(|e| e.to_string());
            AblationRow {
                name,
                components,
                audited,
                outcome,
            }
        })
        .collect()
}

fn run_one(
    train_set: &[PreparedSample],
    eval_set: &[PreparedSample],
    config: ModelConfig,
    train_config: &TrainConfig,
    clock: &mut dyn FnMut() -> f64,
) -> Result<MetricReport> {
    let (model, _) = train(train_set, config, train_config.clone(), clock)?;
    evaluate(&model, eval_set)
}
