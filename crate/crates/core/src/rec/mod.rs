//! Preference utilization: encode greedy cots, pass them through a
//! connector and feed them with id embeddings and raw features into a small
//! click-through-rate model.

pub mod ctr;
pub mod encoder;
pub mod metrics;

pub use ctr::{ctr_forward, ctr_predict, ctr_train, CtrModelParams, CtrShape, CtrTrainConfig, CtrTrainOutcome};
pub use encoder::TagEncoder;
pub use metrics::{evaluate, roc_auc, MetricsReport};
