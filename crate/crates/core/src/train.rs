//! Deterministic mini-batch training with a step learning-rate schedule.
//!
//! Randomness comes from two ChaCha8 streams derived from the run seed:
//! stream 0 (via [`Model::new`]) initializes weights, stream 1 shuffles the
//! dataset each epoch with a Fisher-Yates pass drawing
//! `j = (next_u64() * (i + 1)) >> 64` for `i = n-1 .. 1`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, PreparedSample};
use crate::optim::{adam_step, AdamState};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Precision {
    #[default]
    F64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_decay_factor: f64,
    pub decay_every_epochs: usize,
    pub max_epochs: usize,
    pub seed: u64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub precision: Precision,
}

impl TrainConfig {
    /// Batch 128, lr 1e-3 decayed by 0.1 every 200 epochs.
    pub fn apollo() -> Self {
        Self {
            batch_size: 128,
            initial_lr: 0.001,
            lr_decay_factor: 0.1,
            decay_every_epochs: 200,
            max_epochs: 600,
            seed: 0,
            precision: Precision::F64,
        }
    }

    /// As [`TrainConfig::apollo`] but decaying every 5 epochs.
    pub fn ngsim() -> Self {
        Self {
            decay_every_epochs: 5,
            max_epochs: 15,
            ..Self::apollo()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.decay_every_epochs == 0 {
            return Err(Error::Config("batch size and decay period must be positive".into()));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::Config("initial learning rate must be positive".into()));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return Err(Error::Config("decay factor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// `initial_lr * decay ^ floor(epoch / decay_every_epochs)`.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    let k = epoch / config.decay_every_epochs;
    config.initial_lr * libm::pow(config.lr_decay_factor, k as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the batch losses (m^2).
    pub mean_loss: f64,
    pub learning_rate: f64,
    pub seconds: f64,
    pub batch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    pub epochs: Vec<EpochRecord>,
}

impl RunRecord {
    /// Loss of every optimizer step, in order.
    pub fn step_losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.epochs.iter().flat_map(|e| e.batch_losses.iter().copied())
    }
}

/// Everything needed to resume a run bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub params: Vec<(String, Tensor)>,
    pub optimizer: AdamState,
    pub epoch: usize,
    pub rng_seed: [u8; 32],
    pub rng_stream: u64,
    pub rng_word_pos: u128,
}

/// Owns the model and optimizer for the duration of a run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub optimizer: AdamState,
    pub config: TrainConfig,
    /// Number of completed epochs.
    pub epoch: usize,
    rng: ChaCha8Rng,
}

fn shuffle_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

impl Trainer {
    /// Fresh run: weights drawn from `config.seed`.
    pub fn new(model_config: ModelConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Model::new(model_config, config.seed)?;
        Ok(Self::with_model(model, config))
    }

    pub fn with_model(model: Model, config: TrainConfig) -> Self {
        let optimizer = AdamState::new(&model.params, config.initial_lr);
        Self {
            rng: shuffle_rng(config.seed),
            model,
            optimizer,
            config,
            epoch: 0,
        }
    }

    pub fn state(&self) -> TrainerState {
        TrainerState {
            params: self.model.params.to_named(),
            optimizer: self.optimizer.clone(),
            epoch: self.epoch,
            rng_seed: self.rng.get_seed(),
            rng_stream: self.rng.get_stream(),
            rng_word_pos: self.rng.get_word_pos(),
        }
    }

    /// Rebuilds a trainer from a saved state. Parameter names and shapes must
    /// match `model_config`.
    pub fn restore(model_config: ModelConfig, config: TrainConfig, state: TrainerState) -> Result<Self> {
        config.validate()?;
        let mut params = crate::model::parameter_layout(&model_config)?;
        params.load_from(&state.params)?;
        check_moments(&params, &state.optimizer)?;
        let mut rng = ChaCha8Rng::from_seed(state.rng_seed);
        rng.set_stream(state.rng_stream);
        rng.set_word_pos(state.rng_word_pos);
        Ok(Self {
            model: Model {
                config: model_config,
                params,
            },
            optimizer: state.optimizer,
            config,
            epoch: state.epoch,
            rng,
        })
    }

    fn shuffled(&mut self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = ((u128::from(self.rng.next_u64()) * (i as u128 + 1)) >> 64) as usize;
            order.swap(i, j);
        }
        order
    }

    /// One pass over `data` in a freshly shuffled order.
    pub fn run_epoch(&mut self, data: &[PreparedSample]) -> Result<EpochRecord> {
        if data.is_empty() {
            return Err(Error::Config("empty training set".into()));
        }
        let lr = lr_at(self.epoch, &self.config);
        self.optimizer.learning_rate = lr;
        let order = self.shuffled(data.len());
        let mut batch_losses = Vec::new();
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let batch: Vec<&PreparedSample> = chunk.iter().map(|&i| &data[i]).collect();
            let Some((loss, grads)) = self.model.batch_loss_and_grads(&batch)? else {
                continue;
            };
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.all_finite()) {
                return Err(Error::NonFinite {
                    context: format!("epoch {} batch {b}", self.epoch),
                });
            }
            adam_step(&mut self.model.params, &grads, &mut self.optimizer)?;
            batch_losses.push(loss);
        }
        let mean_loss = if batch_losses.is_empty() {
            0.0
        } else {
            batch_losses.iter().sum::<f64>() / batch_losses.len() as f64
        };
        let record = EpochRecord {
            epoch: self.epoch,
            mean_loss,
            learning_rate: lr,
            seconds: 0.0,
            batch_losses,
        };
        self.epoch += 1;
        Ok(record)
    }
}

fn check_moments(params: &ParamStore, opt: &AdamState) -> Result<()> {
    let ok = opt.first_moment.len() == params.len()
        && opt.second_moment.len() == params.len()
        && params
            .iter()
            .zip(opt.first_moment.iter().zip(&opt.second_moment))
            .all(|(p, (m, v))| m.shape() == p.value.shape() && v.shape() == p.value.shape());
    if ok {
        Ok(())
    } else {
        Err(Error::ParamMismatch("optimizer moments do not match parameters".into()))
    }
}

/// Trains from scratch for `max_epochs`. `clock` returns seconds on any
/// monotone scale; it only feeds the run record.
pub fn train(
    data: &[PreparedSample],
    model_config: ModelConfig,
    config: TrainConfig,
    clock: &mut dyn FnMut() -> f64,
) -> Result<(Model, RunRecord)> {
    if data.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let mut trainer = Trainer::new(model_config, config)?;
    let mut record = RunRecord::default();
    for _ in 0..trainer.config.max_epochs {
        let t0 = clock();
        let mut e = trainer.run_epoch(data)?;
        e.seconds = clock() - t0;
        record.epochs.push(e);
    }
    Ok((trainer.model, record))
}
