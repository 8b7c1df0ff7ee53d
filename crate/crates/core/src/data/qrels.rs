//! Relevance judgments in BEIR TSV (`query-id corpus-id score`, with header)
//! or TREC (`query-id iteration doc-id relevance`) layout.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QrelsFormat {
    BeirTsv,
    Trec,
}

/// Graded judgments keyed by query id then document id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one judgment; a pair may only be judged once.
    pub fn insert(&mut self, query: &str, doc: &str, grade: u32) -> Result<()> {
        let docs = self.judgments.entry(query.to_string()).or_default();
        if docs.insert(doc.to_string(), grade).is_some() {
            return Err(Error::DuplicateJudgment {
                query: query.to_string(),
                doc: doc.to_string(),
            });
        }
        Ok(())
    }

    pub fn grade(&self, query: &str, doc: &str) -> u32 {
        self.judgments
            .get(query)
            .and_then(|d| d.get(doc))
            .copied()
            .unwrap_or(0)
    }

    pub fn for_query(&self, query: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.judgments
            .iter()
            .flat_map(|(q, docs)| docs.iter().map(move |(d, g)| (q.as_str(), d.as_str(), *g)))
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn read_qrels(path: &Path) -> Result<Qrels> {
    parse_qrels(BufReader::new(File::open(path)?))
}

/// Parses either layout. The column count of the first non-blank line picks
/// the format; every later line must agree with it.
pub fn parse_qrels<R: BufRead>(reader: R) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    let mut format = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = if trimmed.contains('\t') {
            trimmed.split('\t').map(str::trim).collect()
        } else {
            trimmed.split_whitespace().collect()
        };
        let fmt = match (format, fields.len()) {
            (None, 3) => {
                format = Some(QrelsFormat::BeirTsv);
                if fields[2].parse::<i64>().is_err() {
                    // BEIR header row
                    continue;
                }
                QrelsFormat::BeirTsv
            }
            (None, 4) => {
                format = Some(QrelsFormat::Trec);
                QrelsFormat::Trec
            }
            (None, n) => {
                return Err(Error::UnsupportedFormat(format!(
                    "qrels line {line_no} has {n} columns; expected 3 (BEIR TSV) or 4 (TREC)"
                )))
            }
            (Some(f), n) => {
                let want = if f == QrelsFormat::BeirTsv { 3 } else { 4 };
                if n != want {
                    return Err(malformed(line_no, format!("expected {want} columns, found {n}")));
                }
                f
            }
        };
        let (query, doc, grade) = match fmt {
            QrelsFormat::BeirTsv => (fields[0], fields[1], fields[2]),
            QrelsFormat::Trec => (fields[0], fields[2], fields[3]),
        };
        let grade: i64 = grade
            .parse()
            .map_err(|_| malformed(line_no, format!("relevance {grade:?} is not an integer")))?;
        let grade = u32::try_from(grade)
            .map_err(|_| malformed(line_no, format!("relevance {grade} is negative")))?;
        qrels.insert(query, doc, grade).map_err(|e| match e {
            Error::DuplicateJudgment { query, doc } => {
                malformed(line_no, format!("duplicate judgment ({query}, {doc})"))
            }
            e => e,
        })?;
    }
    Ok(qrels)
}

pub fn write_qrels(qrels: &Qrels, path: &Path, format: QrelsFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    format_qrels(qrels, &mut w, format)?;
    w.flush()?;
    Ok(())
}

pub fn format_qrels<W: Write>(qrels: &Qrels, w: &mut W, format: QrelsFormat) -> Result<()> {
    if format == QrelsFormat::BeirTsv {
        writeln!(w, "query-id\tcorpus-id\tscore")?;
    }
    for (q, d, g) in qrels.iter() {
        match format {
            QrelsFormat::BeirTsv => writeln!(w, "{q}\t{d}\t{g}")?,
            QrelsFormat::Trec => writeln!(w, "{q} 0 {d} {g}")?,
        }
    }
    Ok(())
}

fn malformed(line: usize, reason: String) -> Error {
    Error::MalformedLine { line, reason }
}
