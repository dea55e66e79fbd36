use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lcs::lcs_len;
use super::matching::lexmin_max_matching;
use crate::corpus::{tokenize, Collection, Document};
use crate::sparse::{weighted_search, SparseIndex, WeightedQuery};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningParams {
    /// Documents need strictly more characters than this to act as queries.
    pub min_query_doc_chars: usize,
    pub top_k: usize,
    pub max_score_ratio: f64,
    pub max_lcs_frac: f64,
    pub min_non_lcs_chars: usize,
    pub min_cand_chars: usize,
}

impl Default for MiningParams {
    fn default() -> Self {
        Self {
            min_query_doc_chars: 150,
            top_k: 20,
            max_score_ratio: 0.65,
            max_lcs_frac: 0.60,
            min_non_lcs_chars: 20,
            min_cand_chars: 150,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MiningError {
    #[error("invalid mining parameters: {0}")]
    Params(String),
    #[error("query score must be positive, got {0}")]
    QueryScore(f64),
}

impl MiningParams {
    pub fn validate(&self) -> Result<(), MiningError> {
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if !unit(self.max_score_ratio) || !unit(self.max_lcs_frac) {
            return Err(MiningError::Params(
                "max_score_ratio and max_lcs_frac must lie in (0, 1]".into(),
            ));
        }
        if self.top_k == 0 || self.min_query_doc_chars == 0 || self.min_non_lcs_chars == 0 || self.min_cand_chars == 0 {
            return Err(MiningError::Params("count thresholds must be positive".into()));
        }
        Ok(())
    }
}

/// First failing rule, checked in the order listed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    ScoreRatio,
    LcsFraction,
    NonLcsChars,
    MinLength,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::ScoreRatio => "score ratio",
            RejectReason::LcsFraction => "lcs fraction",
            RejectReason::NonLcsChars => "non-lcs chars",
            RejectReason::MinLength => "min length",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

/// Applies the four candidate rules. Lengths count Unicode scalar values.
pub fn filter_candidate(
    query_doc: &Document,
    cand: &Document,
    query_score: f64,
    cand_score: f64,
    p: &MiningParams,
) -> Result<Verdict, MiningError> {
    if !(query_score > 0.0) {
        return Err(MiningError::QueryScore(query_score));
    }
    if cand_score / query_score > p.max_score_ratio {
        return Ok(Verdict::Reject(RejectReason::ScoreRatio));
    }
    let len = cand.char_len();
    let lcs = lcs_len(&query_doc.text, &cand.text);
    if lcs as f64 > p.max_lcs_frac * len as f64 {
        return Ok(Verdict::Reject(RejectReason::LcsFraction));
    }
    if len - lcs < p.min_non_lcs_chars {
        return Ok(Verdict::Reject(RejectReason::NonLcsChars));
    }
    if len < p.min_cand_chars {
        return Ok(Verdict::Reject(RejectReason::MinLength));
    }
    Ok(Verdict::Accept)
}

/// Two documents selected to be written about together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinedPair {
    /// The query document.
    pub doc_a: String,
    /// The candidate retrieved for it.
    pub doc_b: String,
    /// Candidate score over the query document's own score.
    pub bm25_ratio: f64,
}

impl MinedPair {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.bm25_ratio
            .total_cmp(&other.bm25_ratio)
            .then_with(|| self.doc_a.cmp(&other.doc_a))
            .then_with(|| self.doc_b.cmp(&other.doc_b))
    }
}

/// Every (query document, candidate) edge that survives the filters, sorted
/// by ratio, then docids.
pub fn candidate_edges(index: &SparseIndex, collection: &Collection, p: &MiningParams) -> Vec<MinedPair> {
    let mut edges: Vec<MinedPair> = (0..collection.len())
        .into_par_iter()
        .flat_map_iter(|ord| edges_from(index, collection, p, ord))
        .collect();
    edges.sort_by(MinedPair::key_cmp);
    edges
}

fn edges_from(index: &SparseIndex, collection: &Collection, p: &MiningParams, ord: usize) -> Vec<MinedPair> {
    let doc = &collection.documents()[ord];
    if doc.char_len() <= p.min_query_doc_chars {
        return Vec::new();
    }
    let query = WeightedQuery::from_counts(&tokenize(&doc.text));
    let query_score = index.score_doc(&query, ord);
    if !(query_score > 0.0) {
        return Vec::new();
    }
    weighted_search(index, &query, p.top_k + 1)
        .into_iter()
        .filter(|h| h.ordinal != ord)
        .take(p.top_k)
        .filter_map(|h| {
            let cand = &collection.documents()[h.ordinal];
            match filter_candidate(doc, cand, query_score, h.score, p) {
                Ok(Verdict::Accept) => Some(MinedPair {
                    doc_a: doc.docid.clone(),
                    doc_b: cand.docid.clone(),
                    bm25_ratio: h.score / query_score,
                }),
                _ => None,
            }
        })
        .collect()
}

/// Selects pairs so that no document appears twice and the number of pairs
/// is as large as possible. Among maximum selections the one whose pairs,
/// listed by ratio then docids, form the smallest sequence wins, so the
/// most dissimilar pairs are preferred. Output is in that order.
pub fn mine_pairs(index: &SparseIndex, collection: &Collection, p: &MiningParams) -> Vec<MinedPair> {
    select_pairs(candidate_edges(index, collection, p))
}

/// The matching step of [`mine_pairs`] over already-filtered edges.
pub fn select_pairs(mut edges: Vec<MinedPair>) -> Vec<MinedPair> {
    edges.sort_by(MinedPair::key_cmp);
    // one edge per unordered pair: the earliest in preference order
    let mut seen = HashSet::new();
    edges.retain(|e| {
        let key = if e.doc_a <= e.doc_b {
            (e.doc_a.clone(), e.doc_b.clone())
        } else {
            (e.doc_b.clone(), e.doc_a.clone())
        };
        e.doc_a != e.doc_b && seen.insert(key)
    });

    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &edges {
        for d in [&e.doc_a, &e.doc_b] {
            let next = ids.len();
            ids.entry(d.as_str()).or_insert(next);
        }
    }
    let graph: Vec<(usize, usize)> = edges.iter().map(|e| (ids[e.doc_a.as_str()], ids[e.doc_b.as_str()])).collect();
    let chosen = lexmin_max_matching(ids.len(), &graph);

    let greedy = greedy_size(&graph);
    if greedy < chosen.len() {
        log::info!(
            "pair matching: {} pairs ({} more than greedy selection)",
            chosen.len(),
            chosen.len() - greedy
        );
    }
    chosen.into_iter().map(|i| edges[i].clone()).collect()
}

fn greedy_size(graph: &[(usize, usize)]) -> usize {
    let mut used = HashSet::new();
    graph
        .iter()
        .filter(|(u, v)| {
            if used.contains(u) || used.contains(v) {
                false
            } else {
                used.insert(*u);
                used.insert(*v);
                true
            }
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Lang;

    fn doc(id: &str, text: &str) -> Document {
        Document::new(id, text, Lang::En)
    }

    fn filler(n: usize, seed: char) -> String {
        (0..n).map(|i| char::from(b'a' + ((i * 7 + seed as usize) % 26) as u8)).collect()
    }

    #[test]
    fn ratio_boundary() {
        let p = MiningParams::default();
        let q = doc("q", &filler(300, 'a'));
        let c = doc("c", &"xyz ".repeat(50));
        assert_eq!(filter_candidate(&q, &c, 10.0, 7.0, &p), Ok(Verdict::Reject(RejectReason::ScoreRatio)));
        assert_eq!(filter_candidate(&q, &c, 10.0, 6.5, &p), Ok(Verdict::Accept));
        assert_eq!(filter_candidate(&q, &c, 0.0, 1.0, &p), Err(MiningError::QueryScore(0.0)));
    }

    #[test]
    fn identical_document_fails_lcs_rule() {
        let p = MiningParams::default();
        let q = doc("q", &filler(300, 'a'));
        let c = doc("c", &q.text);
        assert_eq!(filter_candidate(&q, &c, 10.0, 1.0, &p), Ok(Verdict::Reject(RejectReason::LcsFraction)));
    }

    #[test]
    fn short_candidate_fails_length_rule() {
        let p = MiningParams::default();
        let q = doc("q", "qqqqqqqqqq");
        let c = doc("c", &"xyz ".repeat(40)[..149]);
        assert_eq!(c.char_len(), 149);
        assert_eq!(filter_candidate(&q, &c, 10.0, 1.0, &p), Ok(Verdict::Reject(RejectReason::MinLength)));
        let c = doc("c", &"xyz ".repeat(40)[..150]);
        assert_eq!(filter_candidate(&q, &c, 10.0, 1.0, &p), Ok(Verdict::Accept));
    }

    #[test]
    fn reasons_render() {
        assert_eq!(RejectReason::ScoreRatio.to_string(), "score ratio");
        assert_eq!(RejectReason::MinLength.to_string(), "min length");
    }

    #[test]
    fn selection_prefers_maximum_size() {
        let e = |a: &str, b: &str, r: f64| MinedPair {
            doc_a: a.into(),
            doc_b: b.into(),
            bm25_ratio: r,
        };
        // greedy would take b-c and strand a and d
        let got = select_pairs(vec![e("a", "b", 0.5), e("b", "c", 0.1), e("c", "d", 0.6), e("c", "b", 0.05)]);
        assert_eq!(got, vec![e("a", "b", 0.5), e("c", "d", 0.6)]);
    }

    #[test]
    fn params_validate() {
        assert!(MiningParams::default().validate().is_ok());
        let bad = MiningParams {
            max_score_ratio: 1.5,
            ..MiningParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
