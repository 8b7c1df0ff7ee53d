use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapt::mining::MinedNegatives;
use crate::error::{Error, Result};

/// A query with a positive, a negative, teacher scores for both, and their
/// difference; one JSON line of the triplets file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GplTriplet {
    pub query: String,
    pub pos_id: String,
    pub neg_id: String,
    pub ce_pos: f64,
    pub ce_neg: f64,
    pub margin: f64,
}

impl GplTriplet {
    pub fn new(query: String, pos_id: String, neg_id: String, ce_pos: f64, ce_neg: f64) -> Result<Self> {
        if pos_id == neg_id {
            return Err(Error::SelfNegative { query, doc: pos_id });
        }
        Ok(Self {
            query,
            pos_id,
            neg_id,
            ce_pos,
            ce_neg,
            margin: ce_pos - ce_neg,
        })
    }
}

/// Precomputed teacher scores keyed by (query id, doc id).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CeScores {
    scores: HashMap<(String, String), f64>,
}

impl CeScores {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query: &str, doc: &str, score: f64) -> Result<()> {
        if !score.is_finite() {
            return Err(Error::InvalidParameter(format!("score for ({query}, {doc}) is not finite")));
        }
        if self.scores.insert((query.to_string(), doc.to_string()), score).is_some() {
            return Err(Error::DuplicateJudgment {
                query: query.to_string(),
                doc: doc.to_string(),
            });
        }
        Ok(())
    }

    pub fn get(&self, query: &str, doc: &str) -> Option<f64> {
        self.scores.get(&(query.to_string(), doc.to_string())).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

pub fn read_ce_scores(path: &Path) -> Result<CeScores> {
    parse_ce_scores(BufReader::new(File::open(path)?))
}

/// TSV `query-id  doc-id  score`. A first line whose score column is not a
/// number is taken as a header.
pub fn parse_ce_scores<R: BufRead>(reader: R) -> Result<CeScores> {
    let mut out = CeScores::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::MalformedLine { line: idx + 1, reason };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(bad(format!("expected 3 tab-separated columns, found {}", cols.len())));
        }
        let score = match cols[2].trim().parse::<f64>() {
            Ok(s) => s,
            Err(_) if idx == 0 => continue,
            Err(e) => return Err(bad(format!("score {:?}: {e}", cols[2]))),
        };
        out.insert(cols[0].trim(), cols[1].trim(), score)?;
    }
    Ok(out)
}

/// One triplet per mined negative, labelled with teacher scores. Every
/// missing score is counted before failing.
pub fn build_gpl_triplets(mined: &[MinedNegatives], ce: &CeScores) -> Result<Vec<GplTriplet>> {
    let mut out = Vec::new();
    let mut missing = 0usize;
    let mut first_missing: Option<(String, String)> = None;
    let mut lookup = |q: &str, d: &str| match ce.get(q, d) {
        Some(s) => Some(s),
        None => {
            missing += 1;
            first_missing.get_or_insert_with(|| (q.to_string(), d.to_string()));
            None
        }
    };
    for m in mined {
        let pos = lookup(&m.query_id, &m.positive_id);
        for neg in &m.negatives {
            let s_neg = lookup(&m.query_id, neg);
            if let (Some(p), Some(n)) = (pos, s_neg) {
                out.push(GplTriplet::new(m.query_id.clone(), m.positive_id.clone(), neg.clone(), p, n)?);
            } else if neg == &m.positive_id {
                return Err(Error::SelfNegative {
                    query: m.query_id.clone(),
                    doc: neg.clone(),
                });
            }
        }
    }
    if let Some((query, doc)) = first_missing {
        return Err(Error::MissingScore {
            count: missing,
            query,
            doc,
        });
    }
    Ok(out)
}
