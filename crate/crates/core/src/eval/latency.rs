//! Per-query wall-clock latency of exhaustive search, single-threaded.

use std::fs;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::index::SearchIndex;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub index_kind: String,
    pub n_queries: usize,
    pub samples: usize,
    pub k: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub hardware_note: String,
    pub search_mode: String,
}

/// CPU model from `/proc/cpuinfo` when available, plus the thread count used.
pub fn hardware_note() -> String {
    let model = fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string());
    format!("{model}; 1 thread")
}

/// Times every query `repeats` times after `warmup` untimed searches, all on
/// the calling thread. Std is the population deviation over all samples.
pub fn measure_latency<T: Scalar, I: SearchIndex<T> + ?Sized>(
    index: &I,
    queries: &EmbeddingMatrix<T>,
    k: usize,
    warmup: usize,
    repeats: usize,
) -> Result<LatencyReport> {
    if queries.is_empty() {
        return Err(Error::EmptyQuerySet);
    }
    if warmup == 0 || repeats == 0 {
        return Err(Error::InvalidParameter("warmup and repeats must be at least 1".into()));
    }
    for i in 0..warmup {
        std::hint::black_box(index.search(queries.row(i % queries.len()), k)?);
    }
    let mut ms = Vec::with_capacity(queries.len() * repeats);
    for _ in 0..repeats {
        for q in queries.rows() {
            let start = Instant::now();
            std::hint::black_box(index.search(q, k)?);
            ms.push(start.elapsed().as_secs_f64() * 1e3);
        }
    }
    let n = ms.len() as f64;
    let mean = ms.iter().sum::<f64>() / n;
    let var = ms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(LatencyReport {
        index_kind: index.kind().name().to_string(),
        n_queries: queries.len(),
        samples: ms.len(),
        k,
        mean_ms: mean,
        std_ms: var.sqrt(),
        hardware_note: hardware_note(),
        search_mode: "exhaustive".to_string(),
    })
}
