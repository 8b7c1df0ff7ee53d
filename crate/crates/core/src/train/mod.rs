//! Learning-to-hash training: relaxed-hash ranking loss, InfoNCE, pairwise
//! PQ InfoNCE, and MarginMSE, optimized with plain SGD over a linear query
//! head and PQ centroid tables.

pub mod batch;
pub mod head;
pub mod losses;
pub mod sources;
pub mod trainer;

pub use batch::{Gradients, MarginLabels, Passages, TrainingBatch, TrainingExample, Trainables};
pub use head::QueryHead;
pub use losses::{bpr_loss, infonce_loss, jpq_loss, margin_mse_loss, rank_loss, relaxed_hash, LossValue};
pub use sources::{FixedBatch, PqHardNegatives, ShuffledBatches};
pub use trainer::{
    evaluate, moving_average, train, write_trace_csv, BatchSource, BetaSchedule, LossConfig, LossKind, TraceRow,
    TrainOutcome,
};
