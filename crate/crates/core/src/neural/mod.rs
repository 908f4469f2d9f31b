//! GRU influence predictor, its optimizer, and the replay buffer it trains on.

pub mod adam;
pub mod buffer;
pub mod gru;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use buffer::{ReplayBuffer, TrainingSequence, TrainingStep};
pub use gru::{ParamLayout, PredictorParams};
pub use train::{Learner, TrainConfig};
