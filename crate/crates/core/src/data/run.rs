//! Ranked retrieval output and the 6-column TREC run format
//! (`qid Q0 docid rank score tag`).

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_RUN_TAG: &str = "qdr";

/// Per-query ranked lists, scores non-increasing, no repeated documents.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunResult {
    rankings: BTreeMap<String, Vec<(String, f64)>>,
}

impl RunResult {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores a list that is already in rank order.
    pub fn insert_ranked(&mut self, query: &str, ranked: Vec<(String, f64)>) -> Result<()> {
        let mut seen = HashSet::with_capacity(ranked.len());
        for (i, (doc, score)) in ranked.iter().enumerate() {
            if !score.is_finite() {
                return Err(Error::InvalidParameter(format!("score for {doc:?} is not finite")));
            }
            if !seen.insert(doc.as_str()) {
                return Err(Error::DuplicateId(doc.clone()));
            }
            if i > 0 && ranked[i - 1].1 < *score {
                return Err(Error::InvalidParameter(format!(
                    "scores for query {query:?} increase at rank {}",
                    i + 1
                )));
            }
        }
        self.rankings.insert(query.to_string(), ranked);
        Ok(())
    }

    /// Sorts by score descending, ties by ascending document id, then stores.
    pub fn insert_scored(&mut self, query: &str, mut scored: Vec<(String, f64)>) -> Result<()> {
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        self.insert_ranked(query, scored)
    }

    pub fn get(&self, query: &str) -> Option<&[(String, f64)]> {
        self.rankings.get(query).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[(String, f64)])> {
        self.rankings.iter().map(|(q, r)| (q.as_str(), r.as_slice()))
    }

    pub fn num_queries(&self) -> usize {
        self.rankings.len()
    }
}

pub fn write_run(run: &RunResult, path: &Path, tag: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    format_run(run, &mut w, tag)?;
    w.flush()?;
    Ok(())
}

pub fn format_run<W: Write>(run: &RunResult, w: &mut W, tag: &str) -> Result<()> {
    for (q, ranked) in run.iter() {
        for (rank, (doc, score)) in ranked.iter().enumerate() {
            writeln!(w, "{q} Q0 {doc} {} {score:?} {tag}", rank + 1)?;
        }
    }
    Ok(())
}

pub fn read_run(path: &Path) -> Result<RunResult> {
    parse_run(BufReader::new(File::open(path)?))
}

/// Parses a TREC run. Lines are ordered by their rank column within a query.
pub fn parse_run<R: BufRead>(reader: R) -> Result<RunResult> {
    let mut raw: BTreeMap<String, Vec<(usize, String, f64)>> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(Error::MalformedLine {
                line: line_no,
                reason: format!("expected 6 columns, found {}", f.len()),
            });
        }
        let rank: usize = f[3].parse().map_err(|_| Error::MalformedLine {
            line: line_no,
            reason: format!("rank {:?} is not an integer", f[3]),
        })?;
        let score: f64 = f[4].parse().map_err(|_| Error::MalformedLine {
            line: line_no,
            reason: format!("score {:?} is not a number", f[4]),
        })?;
        raw.entry(f[0].to_string())
            .or_default()
            .push((rank, f[2].to_string(), score));
    }
    let mut run = RunResult::new();
    for (q, mut entries) in raw {
        entries.sort_by_key(|e| e.0);
        run.insert_ranked(&q, entries.into_iter().map(|(_, d, s)| (d, s)).collect())?;
    }
    Ok(run)
}
