//! Brute-force reference for pair mining, shared by test targets.

use std::collections::HashSet;

use clirkit::corpus::{tokenize, Collection, Document, Lang};
use clirkit::jhpolo::{MinedPair, MiningParams};
use clirkit::sparse::{SparseIndex, WeightedQuery};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn dp_lcs(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev = vec![0usize; b.len() + 1];
    let mut best = 0;
    for i in 1..=a.len() {
        let mut cur = vec![0usize; b.len() + 1];
        for j in 1..=b.len() {
            if a[i - 1] == b[j - 1] {
                cur[j] = prev[j - 1] + 1;
                best = best.max(cur[j]);
            }
        }
        prev = cur;
    }
    best
}

pub fn oracle_accepts(q: &str, c: &str, q_score: f64, c_score: f64, p: &MiningParams) -> bool {
    let len = c.chars().count();
    let lcs = dp_lcs(q, c);
    c_score / q_score <= p.max_score_ratio
        && lcs as f64 <= p.max_lcs_frac * len as f64
        && len - lcs >= p.min_non_lcs_chars
        && len >= p.min_cand_chars
}

/// Scores every document against every long document, applies the rules,
/// then enumerates all matchings and keeps the lexicographically smallest
/// maximum one.
pub fn oracle(collection: &Collection, index: &SparseIndex, p: &MiningParams) -> Vec<MinedPair> {
    let docs = collection.documents();
    let mut edges = Vec::new();
    for (qi, q) in docs.iter().enumerate() {
        if q.text.chars().count() <= p.min_query_doc_chars {
            continue;
        }
        let query = WeightedQuery::from_counts(&tokenize(&q.text));
        let q_score = index.score_doc(&query, qi);
        if q_score <= 0.0 {
            continue;
        }
        let mut ranked: Vec<(f64, &str, usize)> = (0..docs.len())
            .map(|i| (index.score_doc(&query, i), docs[i].docid.as_str(), i))
            .filter(|&(s, _, i)| s > 0.0 && i != qi)
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        for &(s, _, ci) in ranked.iter().take(p.top_k) {
            if oracle_accepts(&q.text, &docs[ci].text, q_score, s, p) {
                edges.push((s / q_score, q.docid.clone(), docs[ci].docid.clone()));
            }
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    fn rec(i: usize, edges: &[(f64, String, String)], used: &mut HashSet<String>, cur: &mut Vec<usize>, best: &mut Vec<usize>) {
        if i == edges.len() {
            if cur.len() > best.len() || (cur.len() == best.len() && *cur < *best) {
                *best = cur.clone();
            }
            return;
        }
        let (_, a, b) = &edges[i];
        if !used.contains(a) && !used.contains(b) {
            used.insert(a.clone());
            used.insert(b.clone());
            cur.push(i);
            rec(i + 1, edges, used, cur, best);
            cur.pop();
            used.remove(a);
            used.remove(b);
        }
        rec(i + 1, edges, used, cur, best);
    }
    let mut best = Vec::new();
    rec(0, &edges, &mut HashSet::new(), &mut Vec::new(), &mut best);
    best.into_iter()
        .map(|i| MinedPair {
            doc_a: edges[i].1.clone(),
            doc_b: edges[i].2.clone(),
            bm25_ratio: edges[i].0,
        })
        .collect()
}

pub fn random_collection(rng: &mut ChaCha8Rng) -> Collection {
    let n = rng.random_range(4..=12);
    let vocab = rng.random_range(8..40);
    let docs = (0..n)
        .map(|i| {
            let words = rng.random_range(15..70);
            let text: Vec<String> = (0..words).map(|_| format!("w{}", rng.random_range(0..vocab))).collect();
            Document::new(format!("d{i:02}"), text.join(" "), Lang::So)
        })
        .collect();
    Collection::from_documents(docs).unwrap()
}

