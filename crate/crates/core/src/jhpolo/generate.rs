use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::chat::{complete_with_retry, ChatClient, RateLimiter, RequestPolicy};
use super::mining::MinedPair;
use super::prompt::{build_prompt, parse_response};
use super::qc::{qc_banned, qc_margin, QcParams, RelevanceScorer, ScorerError};
use crate::corpus::Collection;
use crate::train::Triple;

/// Which half of the response a query came from; the matching document of
/// the pair is the positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    #[serde(rename = "DOCA")]
    DocA,
    #[serde(rename = "DOCB")]
    DocB,
}

/// One generated query with its positive and negative docids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedExample {
    pub query: String,
    pub pos: String,
    pub neg: String,
    /// Index of the source pair in the mined list.
    pub pair_id: usize,
    pub slot: Slot,
}

/// Raw endpoint output kept for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResponse {
    pub pair_id: usize,
    pub doc_a: String,
    pub doc_b: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub pair_id: usize,
    pub doc_a: String,
    pub doc_b: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Generation {
    /// Ordered by pair, then slot, then position in the response.
    pub examples: Vec<GeneratedExample>,
    pub responses: Vec<RawResponse>,
    pub failures: Vec<FailureRecord>,
}

enum Outcome {
    Done(String, Vec<GeneratedExample>),
    Failed(Option<String>, String),
}

/// Prompts the client once per pair, with bounded concurrency, and turns
/// each parsed response into examples. Failed requests and unparseable
/// responses become failure records; the rest of the batch continues.
pub fn generate_examples(
    client: &dyn ChatClient,
    pairs: &[MinedPair],
    collection: &Collection,
    policy: &RequestPolicy,
) -> Generation {
    let limiter = RateLimiter::new(Duration::from_millis(policy.min_interval_ms));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Outcome>>> = Mutex::new((0..pairs.len()).map(|_| None).collect());
    let workers = policy.concurrency.max(1).min(pairs.len().max(1));

    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= pairs.len() {
                    break;
                }
                let outcome = run_pair(client, i, &pairs[i], collection, policy, &limiter);
                results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(outcome);
            });
        }
    });

    let mut out = Generation::default();
    for (i, outcome) in results.into_inner().unwrap_or_else(|e| e.into_inner()).into_iter().enumerate() {
        let pair = &pairs[i];
        let record = |body: String| RawResponse {
            pair_id: i,
            doc_a: pair.doc_a.clone(),
            doc_b: pair.doc_b.clone(),
            body,
        };
        match outcome.expect("every pair is processed") {
            Outcome::Done(body, examples) => {
                out.responses.push(record(body));
                out.examples.extend(examples);
            }
            Outcome::Failed(body, error) => {
                log::warn!("pair {i} ({} / {}) failed: {error}", pair.doc_a, pair.doc_b);
                if let Some(body) = body {
                    out.responses.push(record(body));
                }
                out.failures.push(FailureRecord {
                    pair_id: i,
                    doc_a: pair.doc_a.clone(),
                    doc_b: pair.doc_b.clone(),
                    error,
                });
            }
        }
    }
    out
}

fn run_pair(
    client: &dyn ChatClient,
    pair_id: usize,
    pair: &MinedPair,
    collection: &Collection,
    policy: &RequestPolicy,
    limiter: &RateLimiter,
) -> Outcome {
    let (Some(a), Some(b)) = (collection.by_docid(&pair.doc_a), collection.by_docid(&pair.doc_b)) else {
        return Outcome::Failed(None, "pair refers to a docid missing from the collection".into());
    };
    let body = match complete_with_retry(client, &build_prompt(a, b), policy, limiter) {
        Ok(body) => body,
        Err(e) => return Outcome::Failed(None, e.to_string()),
    };
    match parse_response(&body) {
        Ok((first, second)) => {
            let make = |slot: Slot, queries: Vec<String>| {
                let (pos, neg) = match slot {
                    Slot::DocA => (&pair.doc_a, &pair.doc_b),
                    Slot::DocB => (&pair.doc_b, &pair.doc_a),
                };
                queries.into_iter().map(move |query| GeneratedExample {
                    query,
                    pos: pos.clone(),
                    neg: neg.clone(),
                    pair_id,
                    slot,
                })
            };
            let examples = make(Slot::DocA, first).chain(make(Slot::DocB, second)).collect();
            Outcome::Done(body, examples)
        }
        Err(e) => Outcome::Failed(Some(body), e.to_string()),
    }
}

/// Counts of examples removed by each quality check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct QcReport {
    pub input: usize,
    pub banned: usize,
    pub margin: usize,
    pub kept: usize,
}

/// Drops examples with a banned word, then those whose positive does not
/// outscore the negative by the margin. Order is preserved.
pub fn apply_qc(
    examples: &[GeneratedExample],
    collection: &Collection,
    scorer: &dyn RelevanceScorer,
    qc: &QcParams,
) -> Result<(Vec<GeneratedExample>, QcReport), ScorerError> {
    let mut report = QcReport {
        input: examples.len(),
        ..QcReport::default()
    };
    let mut kept = Vec::new();
    for ex in examples {
        if !qc_banned(&ex.query, qc) {
            report.banned += 1;
            continue;
        }
        let text = |id: &str| collection.by_docid(id).map(|d| d.text.as_str()).unwrap_or("");
        if !qc_margin(scorer, &ex.query, text(&ex.pos), text(&ex.neg), qc)? {
            report.margin += 1;
            continue;
        }
        kept.push(ex.clone());
    }
    report.kept = kept.len();
    Ok((kept, report))
}

/// Resolves docids to texts; examples naming unknown docids are skipped.
pub fn examples_to_triples(examples: &[GeneratedExample], collection: &Collection) -> Vec<Triple> {
    examples
        .iter()
        .filter_map(|ex| {
            let pos = collection.by_docid(&ex.pos)?;
            let neg = collection.by_docid(&ex.neg)?;
            Some(Triple::new(ex.query.clone(), pos.text.clone(), neg.text.clone()))
        })
        .collect()
}
