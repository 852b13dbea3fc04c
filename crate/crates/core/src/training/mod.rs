//! Losses, exact gradients, finite-difference checking, Adam and the two
//! training stages.

mod adam;
mod backward;
mod gradcheck;
mod loss;
mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::model::{AblationFlags, ModelError};

pub use adam::{optimizer_step, AdamConfig, AdamState};
pub use backward::{
    backward, trace_example, trace_example_with_negative, trace_stream, ComparativeTrace,
    ExampleTrace, Gradients, LossSpec, TrainingExample,
};
pub use gradcheck::{
    check_gradient, finite_difference_check, standard_probe, GradCheckReport, GradProbe,
};
pub use loss::{
    comparative_loss, comparative_loss_from_similarities, comparative_loss_with_negatives,
    cosine_similarity, generation_loss, stage_loss, total_loss, LossBreakdown, COSINE_EPS,
};
pub use trainer::{build_examples, train_comparative, train_pretrain, LogRecord, TrainOutcome};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{logits} logit rows for {targets} targets")]
    LengthMismatch { logits: usize, targets: usize },
    #[error("similarity set is empty")]
    EmptySet,
    #[error("stale trace: {0}")]
    StaleTrace(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("example {0} has no insights")]
    MissingInsights(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Comparative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage: Stage,
    pub learning_rate: f64,
    pub epochs: usize,
    pub lambda: f64,
    pub l_chunk: usize,
    pub d: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub key_k: usize,
    pub flags: AblationFlags,
    /// Global L2 norm above which gradients are rescaled.
    pub clip_norm: f64,
    /// Adds the previously visited example's reference as a contrastive negative.
    pub in_batch_negatives: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: Stage::Pretrain,
            learning_rate: 0.01,
            epochs: 3,
            lambda: 0.5,
            l_chunk: 16,
            d: 32,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            key_k: 1,
            flags: AblationFlags::default(),
            clip_norm: 5.0,
            in_batch_negatives: false,
        }
    }
}

impl TrainConfig {
    /// Zero whenever the contrastive term is ablated.
    pub fn effective_lambda(&self) -> f64 {
        if self.flags.disable_comparative {
            0.0
        } else {
            self.lambda
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be nonnegative");
        }
        if self.l_chunk == 0 {
            return bad("l_chunk must be positive");
        }
        if self.d == 0 {
            return bad("d must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        if self.key_k == 0 {
            return bad("key_k must be positive");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }
}
