//! Late-interaction scoring and search.
//!
//! [`search_exact`] re-encodes every document and scores it with
//! [`maxsim`]; it is the reference the compressed path is measured against.
//! [`search_plaid`] works on a [`PlaidIndex`] in three stages:
//!
//! 1. each query row probes its `n_probe` closest centroids and the tokens in
//!    those inverted lists nominate their documents;
//! 2. a nominated document is scored with centroid dot products only (for
//!    each query row, the best centroid among the document's reached tokens)
//!    and the best `n_candidates` survive;
//! 3. survivors are fully decompressed and re-ranked with exact MaxSim
//!    against the reconstructed vectors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Collection;
use crate::encoder::{dot, encode_doc, encode_query, EmbeddingProvider, EncoderConfig, TokenMatrix};
use crate::plaid::PlaidIndex;
use crate::ranking::{rank_order, top_k, Hit};

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("provider dimension {provider} does not match index dimension {index}")]
    DimMismatch { provider: usize, index: usize },
    #[error("invalid search parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchParams {
    pub k: usize,
    pub n_probe: usize,
    pub n_candidates: usize,
}

impl SearchParams {
    /// Defaults for a given depth: 4 probes, `max(4k, 100)` candidates.
    pub fn new(k: usize) -> Self {
        Self {
            k,
            n_probe: 4,
            n_candidates: (4 * k).max(100),
        }
    }

    /// Probes every centroid and reranks every document.
    pub fn exhaustive(k: usize, index: &PlaidIndex) -> Self {
        Self {
            k,
            n_probe: index.centroids().k(),
            n_candidates: index.n_docs().max(k),
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.k == 0 || self.n_probe == 0 {
            return Err(SearchError::Params("k and n_probe must be at least 1".into()));
        }
        if self.n_candidates < self.k {
            return Err(SearchError::Params(format!(
                "n_candidates ({}) must be at least k ({})",
                self.n_candidates, self.k
            )));
        }
        Ok(())
    }
}

/// Sum over query rows of the best dot product with any document row.
pub fn maxsim(query: &TokenMatrix, doc: &TokenMatrix) -> f64 {
    query
        .rows()
        .map(|q| doc.rows().map(|d| dot(q, d)).fold(f64::NEG_INFINITY, f64::max))
        .filter(|m| m.is_finite())
        .sum()
}

/// Brute-force scorer over freshly encoded documents. Encodings are cached
/// so the same searcher can answer many queries.
pub struct ExactSearcher<'a> {
    collection: &'a Collection,
    provider: &'a dyn EmbeddingProvider,
    cfg: EncoderConfig,
    docs: Vec<TokenMatrix>,
}

impl<'a> ExactSearcher<'a> {
    pub fn new(collection: &'a Collection, provider: &'a dyn EmbeddingProvider, cfg: &EncoderConfig) -> Self {
        let docs = collection
            .documents()
            .par_iter()
            .map(|d| encode_doc(provider, &d.text, cfg))
            .collect();
        Self {
            collection,
            provider,
            cfg: cfg.clone(),
            docs,
        }
    }

    pub fn doc_matrix(&self, ordinal: usize) -> &TokenMatrix {
        &self.docs[ordinal]
    }

    pub fn search(&self, query_text: &str, k: usize) -> Vec<Hit> {
        let q = encode_query(self.provider, query_text, &self.cfg);
        self.search_encoded(&q, k)
    }

    pub fn search_encoded(&self, query: &TokenMatrix, k: usize) -> Vec<Hit> {
        let hits = self
            .docs
            .par_iter()
            .enumerate()
            .map(|(i, d)| Hit {
                docid: self.collection.documents()[i].docid.clone(),
                ordinal: i,
                score: maxsim(query, d),
            })
            .collect();
        top_k(hits, k)
    }
}

pub fn search_exact(
    collection: &Collection,
    provider: &dyn EmbeddingProvider,
    cfg: &EncoderConfig,
    query_text: &str,
    k: usize,
) -> Vec<Hit> {
    ExactSearcher::new(collection, provider, cfg).search(query_text, k)
}

pub fn search_plaid(
    index: &PlaidIndex,
    provider: &dyn EmbeddingProvider,
    query_text: &str,
    params: &SearchParams,
) -> Result<Vec<Hit>, SearchError> {
    if provider.dim() != index.dim() {
        return Err(SearchError::DimMismatch {
            provider: provider.dim(),
            index: index.dim(),
        });
    }
    let q = encode_query(provider, query_text, index.config());
    search_plaid_encoded(index, &q, params)
}

/// Indices of the `n` largest scores; ties go to the lower index.
fn top_n_indices(scores: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

pub fn search_plaid_encoded(
    index: &PlaidIndex,
    query: &TokenMatrix,
    params: &SearchParams,
) -> Result<Vec<Hit>, SearchError> {
    params.validate()?;
    if query.dim() != index.dim() {
        return Err(SearchError::DimMismatch {
            provider: query.dim(),
            index: index.dim(),
        });
    }
    let centroids = index.centroids();
    let k_centroids = centroids.k();

    // Stage 1: probe.
    let centroid_scores: Vec<Vec<f64>> = query.rows().map(|q| centroids.scores(q)).collect();
    let mut probed = vec![false; k_centroids];
    for s in &centroid_scores {
        for c in top_n_indices(s, params.n_probe) {
            probed[c] = true;
        }
    }
    let mut reached: Vec<Vec<u32>> = vec![Vec::new(); index.n_docs()];
    for c in (0..k_centroids).filter(|&c| probed[c]) {
        for &t in index.inverted_list(c) {
            let codes = &mut reached[index.token_doc(t as usize)];
            if codes.last() != Some(&(c as u32)) {
                codes.push(c as u32);
            }
        }
    }

    // Stage 2: centroid-only approximation.
    let mut approx: Vec<(usize, f64)> = reached
        .par_iter()
        .enumerate()
        .filter(|(_, codes)| !codes.is_empty())
        .map(|(doc, codes)| {
            let score = centroid_scores
                .iter()
                .map(|s| codes.iter().map(|&c| s[c as usize]).fold(f64::NEG_INFINITY, f64::max))
                .sum();
            (doc, score)
        })
        .collect();
    approx.sort_by(|a, b| rank_order(a.1, index.docid(a.0), b.1, index.docid(b.0)));
    approx.truncate(params.n_candidates);

    // Stage 3: decompress and rerank.
    let hits = approx
        .par_iter()
        .map(|&(doc, _)| Hit {
            docid: index.docid(doc).to_string(),
            ordinal: doc,
            score: maxsim(query, &index.decompress_doc(doc)),
        })
        .collect();
    Ok(top_k(hits, params.k))
}

/// Fraction of `reference`'s top-`k` docids that also appear in the top `k`
/// of `candidate`.
pub fn overlap_recall(candidate: &[Hit], reference: &[Hit], k: usize) -> f64 {
    let truth: Vec<&str> = reference.iter().take(k).map(|h| h.docid.as_str()).collect();
    if truth.is_empty() {
        return 1.0;
    }
    let found = candidate
        .iter()
        .take(k)
        .filter(|h| truth.contains(&h.docid.as_str()))
        .count();
    found as f64 / truth.len() as f64
}
