use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, Term};

// Scores are compared after subtraction, so a margin that is exact in
// decimal may come out a few ulps short.
const MARGIN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QcParams {
    pub banned_words: BTreeSet<String>,
    pub margin: f64,
}

impl Default for QcParams {
    fn default() -> Self {
        Self {
            banned_words: ["articles", "reports", "speaker", "these"].into_iter().map(String::from).collect(),
            margin: 0.15,
        }
    }
}

/// True when no banned word occurs as a whole token of the query.
pub fn qc_banned(query: &str, qc: &QcParams) -> bool {
    let banned: Vec<Term> = qc.banned_words.iter().flat_map(|w| tokenize(w)).collect();
    !tokenize(query).iter().any(|t| banned.contains(t))
}

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("scorer process: {0}")]
    Io(#[from] std::io::Error),
    #[error("scorer returned {0:?}, expected a number in [0, 1]")]
    BadScore(String),
}

/// Relevance of a document text to a query, in `[0, 1]`.
pub trait RelevanceScorer: Send + Sync {
    fn score(&self, query: &str, doc: &str) -> Result<f64, ScorerError>;
}

/// True when the positive outscores the negative by at least `qc.margin`.
pub fn qc_margin(
    scorer: &dyn RelevanceScorer,
    query: &str,
    pos_doc: &str,
    neg_doc: &str,
    qc: &QcParams,
) -> Result<bool, ScorerError> {
    let pos = scorer.score(query, pos_doc)?;
    let neg = scorer.score(query, neg_doc)?;
    Ok(margin_holds(pos, neg, qc.margin))
}

pub fn margin_holds(pos: f64, neg: f64, margin: f64) -> bool {
    pos - neg >= margin - MARGIN_EPS
}

/// Deterministic offline scorer: 0.8 × the fraction of distinct query terms
/// found in the document plus 0.2 × a hash of the pair.
#[derive(Debug, Clone, Default)]
pub struct StubScorer;

impl RelevanceScorer for StubScorer {
    fn score(&self, query: &str, doc: &str) -> Result<f64, ScorerError> {
        let q: BTreeSet<Term> = tokenize(query).into_iter().collect();
        let d: BTreeSet<Term> = tokenize(doc).into_iter().collect();
        let overlap = if q.is_empty() {
            0.0
        } else {
            q.intersection(&d).count() as f64 / q.len() as f64
        };
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in query.bytes().chain([0]).chain(doc.bytes()) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        let jitter = (h >> 11) as f64 / (1u64 << 53) as f64;
        Ok(0.8 * overlap + 0.2 * jitter)
    }
}

/// Long-running external scorer: one `query\tdoc` line in, one decimal
/// score line out.
pub struct SubprocessScorer {
    child: Mutex<Child>,
    io: Mutex<(ChildStdin, BufReader<ChildStdout>)>,
}

impl SubprocessScorer {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, ScorerError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            child: Mutex::new(child),
            io: Mutex::new((stdin, stdout)),
        })
    }
}

impl RelevanceScorer for SubprocessScorer {
    fn score(&self, query: &str, doc: &str) -> Result<f64, ScorerError> {
        let clean = |s: &str| s.replace(['\t', '\n', '\r'], " ");
        let mut io = self.io.lock().unwrap_or_else(|e| e.into_inner());
        let (stdin, stdout) = &mut *io;
        writeln!(stdin, "{}\t{}", clean(query), clean(doc))?;
        stdin.flush()?;
        let mut line = String::new();
        if stdout.read_line(&mut line)? == 0 {
            return Err(ScorerError::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "scorer closed its output",
            )));
        }
        let s = line.trim();
        match s.parse::<f64>() {
            Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
            _ => Err(ScorerError::BadScore(s.to_string())),
        }
    }
}

impl Drop for SubprocessScorer {
    fn drop(&mut self) {
        if let Ok(mut child) = self.child.lock() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
