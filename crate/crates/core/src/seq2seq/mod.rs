//! Recurrent sequence-to-sequence predictor trained from scratch.

mod adam;
mod io;
mod loss;
mod model;
mod train;

pub use adam::{adam_update, clip_global_norm, AdamState};
pub use io::{load_model, read_model, save_model, write_model, FORMAT_VERSION, MAGIC};
pub use loss::{loss_cce, loss_mae, PROB_FLOOR};
pub use model::{init_model, Dims, ForwardCache, ForwardPass, Gradients, HeadKind, RnnModel, DEFAULT_HIDDEN};
pub use train::{evaluate, predict_sequence, train, EpisodeRecord, Metrics, Prediction, TrainConfig, TrainOutcome};
