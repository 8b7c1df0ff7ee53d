//! Retrieval metrics and the efficiency harness.

pub mod latency;
pub mod metrics;
pub mod size;

pub use latency::{hardware_note, measure_latency, LatencyReport};
pub use metrics::{ndcg_at_k, recall_at_k, MetricReport};
pub use size::{format_mb, report_index_size, SizeRow};
