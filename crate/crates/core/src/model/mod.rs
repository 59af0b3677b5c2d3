//! The fusion selector network: construction, training, prediction,
//! evaluation and the model file.

mod config;
mod eval;
mod io;
mod network;
mod train;

pub use config::{MaskMode, ModelConfig, BRANCH_WIDTH, CONV1_FILTERS, CONV2_FILTERS, KERNEL};
pub use eval::{evaluate_predictions, majority_rate, random_selector_slowdown, EvalReport};
pub use io::{MODEL_MAGIC, MODEL_VERSION};
pub use network::{build_model, Inputs, NormStats, Prediction, SelectorModel};
pub use train::{
    stratified_split, train, Dataset, EarlyStopping, EpochRecord, History, LabeledSample, Split,
    SplitFractions, StopDecision,
};
