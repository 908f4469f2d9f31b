use serde::{Deserialize, Serialize};

use crate::model::SimRng;
use crate::neural::adam::{AdamConfig, AdamState};
use crate::neural::buffer::{ReplayBuffer, TrainingSequence};
use crate::neural::gru::PredictorParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps_per_episode: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    /// Defaults to `1 / sqrt(hidden)`.
    pub init_scale: Option<f64>,
    /// Global L2 norm clip; off by default.
    pub grad_clip: Option<f64>,
    #[serde(flatten)]
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps_per_episode: 64,
            batch_size: 128,
            learning_rate: 0.001,
            hidden: 8,
            init_scale: None,
            grad_clip: None,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn gtc() -> Self {
        TrainConfig {
            learning_rate: 0.00025,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::Config(format!("train: {m}")));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.hidden == 0 {
            return bad("hidden must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if matches!(self.init_scale, Some(s) if !(s >= 0.0)) {
            return bad("init_scale must be non-negative");
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return bad("grad_clip must be positive");
        }
        Ok(())
    }
}

/// Predictor parameters together with their optimizer state.
#[derive(Clone, Debug)]
pub struct Learner {
    pub params: PredictorParams,
    pub adam: AdamState,
    pub cfg: TrainConfig,
    grads: Vec<f64>,
}

impl Learner {
    pub fn new(params: PredictorParams, cfg: TrainConfig) -> Self {
        let n = params.values.len();
        Learner {
            params,
            adam: AdamState::new(n),
            cfg,
            grads: Vec::new(),
        }
    }

    /// One optimizer step on `batch`; returns the batch loss before the update.
    pub fn step(&mut self, batch: &[&TrainingSequence]) -> f64 {
        let loss = self.params.loss_and_gradients(batch, &mut self.grads);
        if let Some(clip) = self.cfg.grad_clip {
            let norm = self.grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > clip {
                let s = clip / norm;
                self.grads.iter_mut().for_each(|g| *g *= s);
            }
        }
        self.adam
            .step(&mut self.params.values, &self.grads, self.cfg.learning_rate, &self.cfg.adam);
        loss
    }

    /// `steps_per_episode` optimizer steps on uniformly drawn batches.
    /// Returns the mean batch loss, or `None` when nothing was trained.
    pub fn train_after_episode(&mut self, buffer: &ReplayBuffer, rng: &mut SimRng) -> Option<f64> {
        self.train_steps(buffer, self.cfg.steps_per_episode, rng)
    }

    pub fn train_steps(&mut self, buffer: &ReplayBuffer, steps: usize, rng: &mut SimRng) -> Option<f64> {
        if buffer.is_empty() || steps == 0 {
            return None;
        }
        let mut batch = Vec::with_capacity(self.cfg.batch_size);
        let mut total = 0.0;
        for _ in 0..steps {
            buffer.sample(self.cfg.batch_size, rng, &mut batch);
            total += self.step(&batch);
        }
        Some(total / steps as f64)
    }
}
