//! Run configuration file (TOML).
//!
//! ```toml
//! [data]
//! obs_points = 6
//! pred_points = 6
//! distance_threshold = 10.0
//! beta_degrees = 20.0
//! source_frame_rate = 2.0
//! downsample = 1
//! window_stride = 1
//! neighborhood = { rule = "radius", scope = 3.0 }
//!
//! [model]
//! channels = 64
//! ...
//!
//! [train]
//! batch_size = 128
//! ...
//! ```

use std::fs;
use std::path::Path;

use plangraph_core::graphs::GraphKind;
use plangraph_core::{Category, DatasetConfig, ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::TableFormat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Input table layout for `prepare`.
    pub format: TableFormat,
    pub data: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Urban mixed traffic: all four graphs and per-type decoders.
    pub fn apollo() -> Self {
        let data = DatasetConfig::apollo();
        Self {
            format: TableFormat::ApolloLike,
            model: ModelConfig::full(data.obs_points, data.pred_points),
            data,
            train: TrainConfig::apollo(),
        }
    }

    /// Highway vehicles only: no category graph, a single vehicle decoder.
    pub fn ngsim() -> Self {
        let data = DatasetConfig::ngsim();
        let mut model = ModelConfig::full(data.obs_points, data.pred_points);
        model.enabled_graphs = vec![GraphKind::Distance, GraphKind::Visibility, GraphKind::Planning];
        model.categories_decoded = vec![Category::Vehicle];
        Self {
            format: TableFormat::NgsimLike,
            model,
            data,
            train: TrainConfig::ngsim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.model.obs_points != self.data.obs_points || self.model.pred_points != self.data.pred_points {
            return Err(Error::Usage("model and data horizons differ".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Usage(m) => Error::Usage(format!("{}: {m}", path.display())),
            e => e,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for cfg in [RunConfig::apollo(), RunConfig::ngsim()] {
            let text = cfg.to_toml();
            assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg, "{text}");
        }
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        let mut text = RunConfig::apollo().to_toml();
        text = text.replace("batch_size = 128", "batch_size = 0");
        assert!(RunConfig::from_toml(&text).is_err());
        let extra = format!("{}\n[extra]\nx = 1\n", RunConfig::apollo().to_toml());
        assert!(RunConfig::from_toml(&extra).is_err());
    }

    #[test]
    fn horizon_mismatch_rejected() {
        let mut cfg = RunConfig::apollo();
        cfg.model.pred_points = 5;
        assert!(cfg.validate().is_err());
    }
}
