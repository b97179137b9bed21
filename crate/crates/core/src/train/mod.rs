//! Seed splitting, the directional ranking loss, the training loop and
//! evaluation metrics.

mod config;
mod eval;
mod loss;
mod trainer;

pub use config::{TrainConfig, Variant, CLIP_NORM};
pub use eval::{evaluate, hits_at, mean_reciprocal_rank, rank_of, EvalReport, Metrics, QueryRank};
pub use loss::{pair_loss, pair_loss_var};
pub use trainer::{directional_queries, BatchGradient, EpochStats, Query, TrainReport, Trainer};
