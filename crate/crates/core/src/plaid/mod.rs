//! Compressed late-interaction index.
//!
//! Every document token is encoded, assigned to its nearest k-means centroid
//! and stored as `(centroid id, 1-bit-per-dimension residual)`. At dim 128
//! that is 16 bytes of residual per token. Centroid-keyed inverted lists map
//! each centroid to the tokens assigned to it.

mod kmeans;
mod residual;
mod store;

use std::collections::HashMap;
use std::ops::Range;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Collection;
use crate::encoder::{dot, encode_doc, EmbeddingProvider, EncoderConfig, EncoderError, TokenMatrix};

pub use kmeans::{sse, train_centroids, train_centroids_traced, KMeansRun};
pub use residual::{
    compress_token, decompress, decompress_into, estimate_alpha, pack_signs, residual_bytes, unpack_signs,
    CompressedToken,
};
pub use store::{load_index, save_index, FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum PlaidError {
    #[error("cannot train {k} centroids from {samples} samples")]
    TooFewSamples { k: usize, samples: usize },
    #[error("cannot index an empty collection")]
    EmptyCollection,
    #[error("provider dimension {provider} does not match configured dimension {config}")]
    DimMismatch { provider: usize, config: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing index file {0}")]
    MissingFile(String),
    #[error("corrupt index file {file}: {message}")]
    Corrupt { file: String, message: String },
}

/// `k × dim` matrix of unit-norm centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    dim: usize,
    data: Vec<f32>,
}

impl Centroids {
    pub fn zeros(k: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; k * dim],
        }
    }

    pub fn from_rows<R: AsRef<[f32]>>(dim: usize, rows: impl IntoIterator<Item = R>) -> Self {
        let mut data = Vec::new();
        for r in rows {
            assert_eq!(r.as_ref().len(), dim, "centroid dimension mismatch");
            data.extend_from_slice(r.as_ref());
        }
        Self { dim, data }
    }

    pub fn k(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (0..self.k()).all(|i| (dot(self.row(i), self.row(i)).sqrt() - 1.0).abs() <= tol)
    }

    /// Highest-dot-product centroid; ties go to the lowest id.
    pub fn nearest(&self, v: &[f32]) -> (u32, f64) {
        let mut best = (0u32, f64::NEG_INFINITY);
        for i in 0..self.k() {
            let s = dot(v, self.row(i));
            if s > best.1 {
                best = (i as u32, s);
            }
        }
        best
    }

    /// Dot products of `v` against every centroid.
    pub fn scores(&self, v: &[f32]) -> Vec<f64> {
        (0..self.k()).map(|i| dot(v, self.row(i))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlaidBuildParams {
    /// Number of centroids; `None` means `round(4 * sqrt(total tokens))`.
    pub k: Option<usize>,
    pub kmeans_iters: usize,
    /// Upper bound on the number of tokens used to train centroids.
    pub max_training_tokens: usize,
    pub seed: u64,
}

impl Default for PlaidBuildParams {
    fn default() -> Self {
        Self {
            k: None,
            kmeans_iters: 10,
            max_training_tokens: 1_000_000,
            seed: 0,
        }
    }
}

pub fn default_k(total_tokens: usize) -> usize {
    ((4.0 * (total_tokens as f64).sqrt()).round() as usize).max(1)
}

/// A built index. Immutable; all accessors are read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaidIndex {
    config: EncoderConfig,
    centroids: Centroids,
    alpha: f64,
    seed: u64,
    docids: Vec<String>,
    /// `n_docs + 1` token offsets.
    doc_offsets: Vec<u32>,
    codes: Vec<u32>,
    residuals: Vec<u8>,
    ivf: Vec<Vec<u32>>,
    token_doc: Vec<u32>,
}

impl PlaidIndex {
    pub(crate) fn from_parts(
        config: EncoderConfig,
        centroids: Centroids,
        alpha: f64,
        seed: u64,
        docids: Vec<String>,
        doc_offsets: Vec<u32>,
        codes: Vec<u32>,
        residuals: Vec<u8>,
    ) -> Self {
        let mut ivf = vec![Vec::new(); centroids.k()];
        for (t, &c) in codes.iter().enumerate() {
            ivf[c as usize].push(t as u32);
        }
        let mut token_doc = Vec::with_capacity(codes.len());
        for d in 0..docids.len() {
            let n = doc_offsets[d + 1] - doc_offsets[d];
            token_doc.extend(std::iter::repeat_n(d as u32, n as usize));
        }
        Self {
            config,
            centroids,
            alpha,
            seed,
            docids,
            doc_offsets,
            codes,
            residuals,
            ivf,
            token_doc,
        }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn centroids(&self) -> &Centroids {
        &self.centroids
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.centroids.dim()
    }

    pub fn n_docs(&self) -> usize {
        self.docids.len()
    }

    pub fn n_tokens(&self) -> usize {
        self.codes.len()
    }

    pub fn docid(&self, doc: usize) -> &str {
        &self.docids[doc]
    }

    pub fn docids(&self) -> &[String] {
        &self.docids
    }

    pub fn doc_tokens(&self, doc: usize) -> Range<usize> {
        self.doc_offsets[doc] as usize..self.doc_offsets[doc + 1] as usize
    }

    pub fn token_doc(&self, token: usize) -> usize {
        self.token_doc[token] as usize
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn residuals(&self) -> &[u8] {
        &self.residuals
    }

    pub fn inverted_list(&self, centroid: usize) -> &[u32] {
        &self.ivf[centroid]
    }

    pub fn token(&self, token: usize) -> CompressedToken {
        let nb = residual_bytes(self.dim());
        CompressedToken {
            centroid_id: self.codes[token],
            residual: self.residuals[token * nb..(token + 1) * nb].to_vec(),
        }
    }

    /// Reconstructs every token of a document.
    pub fn decompress_doc(&self, doc: usize) -> TokenMatrix {
        let dim = self.dim();
        let nb = residual_bytes(dim);
        let range = self.doc_tokens(doc);
        let mut data = Vec::with_capacity(range.len() * dim);
        for t in range {
            decompress_into(
                self.codes[t],
                &self.residuals[t * nb..(t + 1) * nb],
                &self.centroids,
                self.alpha,
                &mut data,
            );
        }
        TokenMatrix::from_rows(dim, data.chunks_exact(dim))
    }
}

/// Encodes, clusters and compresses a whole collection.
pub fn build_plaid(
    collection: &Collection,
    provider: &dyn EmbeddingProvider,
    cfg: &EncoderConfig,
    params: &PlaidBuildParams,
) -> Result<PlaidIndex, PlaidError> {
    cfg.validate()?;
    if collection.is_empty() {
        return Err(PlaidError::EmptyCollection);
    }
    if provider.dim() != cfg.dim {
        return Err(PlaidError::DimMismatch {
            provider: provider.dim(),
            config: cfg.dim,
        });
    }

    let encoded: Vec<TokenMatrix> = collection
        .documents()
        .par_iter()
        .map(|d| encode_doc(provider, &d.text, cfg))
        .collect();
    let total: usize = encoded.iter().map(TokenMatrix::n_tokens).sum();
    if total > u32::MAX as usize {
        return Err(PlaidError::Config("more than 2^32 tokens".into()));
    }

    let mut all = TokenMatrix::new(cfg.dim);
    for m in &encoded {
        for r in m.rows() {
            all.push_row(r);
        }
    }
    let samples = if total <= params.max_training_tokens {
        all
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5eed_5a3b1e);
        let mut picked = sample(&mut rng, total, params.max_training_tokens).into_vec();
        picked.sort_unstable();
        TokenMatrix::from_rows(cfg.dim, picked.into_iter().map(|i| all.row(i).to_vec()))
    };

    let k = params
        .k
        .unwrap_or_else(|| default_k(total))
        .min(samples.n_tokens());
    log::info!(
        "training {k} centroids on {} of {total} tokens",
        samples.n_tokens()
    );
    let centroids = train_centroids(&samples, k, params.kmeans_iters, params.seed)?;
    let alpha = estimate_alpha(&samples, &centroids);

    // identical vectors compress identically; compress each distinct one once
    let mut slot: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut distinct: Vec<&[f32]> = Vec::new();
    let mut which: Vec<Vec<usize>> = Vec::with_capacity(encoded.len());
    for m in &encoded {
        which.push(
            m.rows()
                .map(|r| {
                    *slot.entry(r.iter().map(|x| x.to_bits()).collect()).or_insert_with(|| {
                        distinct.push(r);
                        distinct.len() - 1
                    })
                })
                .collect(),
        );
    }
    let table: Vec<CompressedToken> = distinct.par_iter().map(|r| compress_token(r, &centroids)).collect();
    let compressed: Vec<Vec<&CompressedToken>> =
        which.iter().map(|doc| doc.iter().map(|&i| &table[i]).collect()).collect();

    let mut doc_offsets = Vec::with_capacity(encoded.len() + 1);
    doc_offsets.push(0u32);
    let mut codes = Vec::with_capacity(total);
    let mut residuals = Vec::with_capacity(total * residual_bytes(cfg.dim));
    for doc in compressed {
        for ct in doc {
            codes.push(ct.centroid_id);
            residuals.extend_from_slice(&ct.residual);
        }
        doc_offsets.push(codes.len() as u32);
    }

    Ok(PlaidIndex::from_parts(
        cfg.clone(),
        centroids,
        alpha,
        params.seed,
        collection.iter().map(|d| d.docid.clone()).collect(),
        doc_offsets,
        codes,
        residuals,
    ))
}
