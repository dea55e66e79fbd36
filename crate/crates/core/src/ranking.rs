//! Ranked-list primitives shared by every retriever.

use std::cmp::Ordering;

use serde::Serialize;

/// One scored document in a ranked list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub docid: String,
    pub ordinal: usize,
    pub score: f64,
}

/// Descending score, then ascending docid.
pub fn rank_order(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_id.cmp(b_id))
}

pub fn sort_hits(hits: &mut [Hit]) {
    hits.sort_by(|a, b| rank_order(a.score, &a.docid, b.score, &b.docid));
}

/// Sorts and keeps the best `k`.
pub fn top_k(mut hits: Vec<Hit>, k: usize) -> Vec<Hit> {
    sort_hits(&mut hits);
    hits.truncate(k);
    hits
}
