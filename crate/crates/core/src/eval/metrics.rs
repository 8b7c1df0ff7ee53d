//! nDCG@k with linear gains and recall@k.
//!
//! Both average over every query in the qrels. Unjudged documents have grade
//! 0; a query missing from the run, or with no relevant document, scores 0.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::qrels::Qrels;
use crate::data::run::RunResult;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub k: usize,
    pub mean: f64,
    pub per_query: BTreeMap<String, f64>,
}

impl MetricReport {
    fn from_per_query(metric: &str, k: usize, per_query: BTreeMap<String, f64>) -> Self {
        let mean = per_query.values().sum::<f64>() / per_query.len() as f64;
        Self {
            metric: metric.to_string(),
            k,
            mean,
            per_query,
        }
    }

    pub fn name(&self) -> String {
        format!("{}@{}", self.metric, self.k)
    }

    /// `query  metric@k  value` lines followed by an `all` line.
    pub fn write_tsv<W: Write>(&self, w: &mut W) -> Result<()> {
        let name = self.name();
        for (q, v) in &self.per_query {
            writeln!(w, "{q}\t{name}\t{v:.6}")?;
        }
        writeln!(w, "all\t{name}\t{:.6}", self.mean)?;
        Ok(())
    }
}

fn check(qrels: &Qrels, k: usize) -> Result<()> {
    if qrels.is_empty() {
        return Err(Error::EmptyQrels);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    Ok(())
}

fn ranked_docs<'a>(run: &'a RunResult, query: &str, k: usize) -> impl Iterator<Item = &'a str> {
    run.get(query).into_iter().flatten().take(k).map(|(d, _)| d.as_str())
}

pub fn ndcg_at_k(run: &RunResult, qrels: &Qrels, k: usize) -> Result<MetricReport> {
    check(qrels, k)?;
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let mut per_query = BTreeMap::new();
    for q in qrels.queries() {
        let judged = qrels.for_query(q).expect("query listed by qrels");
        let dcg: f64 = ranked_docs(run, q, k)
            .enumerate()
            .map(|(i, d)| judged.get(d).copied().unwrap_or(0) as f64 * discount(i))
            .sum();
        let mut ideal: Vec<u32> = judged.values().copied().filter(|&g| g > 0).collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal.iter().take(k).enumerate().map(|(i, &g)| g as f64 * discount(i)).sum();
        per_query.insert(q.to_string(), if idcg > 0.0 { dcg / idcg } else { 0.0 });
    }
    Ok(MetricReport::from_per_query("ndcg", k, per_query))
}

pub fn recall_at_k(run: &RunResult, qrels: &Qrels, k: usize) -> Result<MetricReport> {
    check(qrels, k)?;
    let mut per_query = BTreeMap::new();
    for q in qrels.queries() {
        let judged = qrels.for_query(q).expect("query listed by qrels");
        let relevant = judged.values().filter(|&&g| g > 0).count();
        let found = ranked_docs(run, q, k)
            .filter(|d| judged.get(*d).is_some_and(|&g| g > 0))
            .count();
        per_query.insert(q.to_string(), if relevant > 0 { found as f64 / relevant as f64 } else { 0.0 });
    }
    Ok(MetricReport::from_per_query("recall", k, per_query))
}
