//! Token-level encoders producing [`TokenMatrix`] values.
//!
//! Real model embeddings are out of reach here, so providers map each
//! [`Term`] to a fixed vector: either a seeded hash embedding or a
//! precomputed table loaded from disk. Queries are padded to a fixed length
//! with the mask symbol; documents are truncated but never padded.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, Term};

pub const DEFAULT_DIM: usize = 128;
pub const DEFAULT_QUERY_LEN: usize = 32;
pub const DEFAULT_DOC_MAXLEN: usize = 180;
pub const MASK_SYMBOL: &str = "[mask]";

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} values, found {found}")]
    DimMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("invalid encoder config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub dim: usize,
    pub query_len: usize,
    pub doc_maxlen: usize,
    pub mask_symbol: String,
    /// Seed of the hash embedding (also used as fallback for tables).
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            query_len: DEFAULT_QUERY_LEN,
            doc_maxlen: DEFAULT_DOC_MAXLEN,
            mask_symbol: MASK_SYMBOL.to_string(),
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.dim == 0 || self.query_len == 0 || self.doc_maxlen == 0 {
            return Err(EncoderError::Config(
                "dim, query_len and doc_maxlen must be positive".into(),
            ));
        }
        if Term::new(self.mask_symbol.clone()).is_none() {
            return Err(EncoderError::Config(format!(
                "mask symbol {:?} is not a valid term",
                self.mask_symbol
            )));
        }
        Ok(())
    }

    pub fn mask_term(&self) -> Term {
        Term::new(self.mask_symbol.clone()).expect("validated mask symbol")
    }
}

/// Row-major `n_tokens × dim` matrix of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl TokenMatrix {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dim must be positive");
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[f32]>>(dim: usize, rows: impl IntoIterator<Item = R>) -> Self {
        let mut m = Self::new(dim);
        for r in rows {
            m.push_row(r.as_ref());
        }
        m
    }

    pub fn push_row(&mut self, row: &[f32]) {
        assert_eq!(row.len(), self.dim, "row dimension mismatch");
        self.data.extend_from_slice(row);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_tokens(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.rows().all(|r| (l2_norm(r) - 1.0).abs() <= tol)
    }
}

/// f64 dot product of two f32 slices; eight lanes summed in a fixed order.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] as f64 * y[l] as f64;
        }
    }
    for (l, (&x, &y)) in ra.iter().zip(rb).enumerate() {
        acc[l] += x as f64 * y as f64;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

pub fn l2_norm(v: &[f32]) -> f64 {
    dot(v, v).sqrt()
}

// Largest deviation of the f64 norm of an f32 vector that was normalized in
// f64 and rounded (per-component relative error is at most 2^-24).
const UNIT_TOLERANCE: f64 = 1e-7;

/// Scales `v` to unit length in place. Vectors already unit-norm to within
/// f32 rounding are left untouched, which makes the operation idempotent.
/// Zero vectors stay zero.
pub fn normalize(v: &mut [f32]) {
    let norm = l2_norm(v);
    if norm == 0.0 || (norm - 1.0).abs() <= UNIT_TOLERANCE {
        return;
    }
    for x in v.iter_mut() {
        *x = (*x as f64 / norm) as f32;
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic pseudo-random unit vector for a term: Gaussian entries
/// drawn from a ChaCha stream keyed by the term bytes and the seed.
pub fn hash_embed(term: &Term, dim: usize, seed: u64) -> Vec<f32> {
    assert!(dim > 0, "dim must be positive");
    let key = splitmix64(fnv1a(term.as_str().as_bytes()) ^ splitmix64(seed));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    raw.into_iter().map(|x| (x / norm) as f32).collect()
}

/// Maps terms to unit vectors of a fixed dimension.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, term: &Term) -> Vec<f32>;
}

#[derive(Debug, Clone)]
pub struct HashProvider {
    dim: usize,
    seed: u64,
}

impl HashProvider {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }
}

impl EmbeddingProvider for HashProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, term: &Term) -> Vec<f32> {
        hash_embed(term, self.dim, self.seed)
    }
}

/// Precomputed embeddings with a hash fallback for unknown terms.
#[derive(Debug, Clone)]
pub struct TableProvider {
    table: HashMap<Term, Vec<f32>>,
    fallback: HashProvider,
}

impl TableProvider {
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn contains(&self, term: &Term) -> bool {
        self.table.contains_key(term)
    }
}

impl EmbeddingProvider for TableProvider {
    fn dim(&self) -> usize {
        self.fallback.dim
    }

    fn embed(&self, term: &Term) -> Vec<f32> {
        match self.table.get(term) {
            Some(v) => v.clone(),
            None => self.fallback.embed(term),
        }
    }
}

/// Parses `term v1 v2 ... vd` lines. The first row fixes the dimension,
/// which must equal `expected_dim` when given.
pub fn read_embedding_table<R: BufRead>(
    reader: R,
    expected_dim: Option<usize>,
    seed: u64,
) -> Result<TableProvider, EncoderError> {
    let mut dim = expected_dim;
    let mut table = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| EncoderError::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        let mut fields = line.split_whitespace();
        let Some(surface) = fields.next() else {
            continue;
        };
        let term = Term::new(surface).ok_or_else(|| EncoderError::Malformed {
            line: lineno,
            message: format!("invalid term {surface:?}"),
        })?;
        let mut v = fields
            .map(str::parse::<f32>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| EncoderError::Malformed {
                line: lineno,
                message: e.to_string(),
            })?;
        let expected = *dim.get_or_insert(v.len());
        if v.len() != expected || expected == 0 {
            return Err(EncoderError::DimMismatch {
                line: lineno,
                expected,
                found: v.len(),
            });
        }
        normalize(&mut v);
        table.insert(term, v);
    }
    let dim = dim.unwrap_or(DEFAULT_DIM);
    Ok(TableProvider {
        table,
        fallback: HashProvider::new(dim, seed),
    })
}

pub fn load_embedding_table(
    path: impl AsRef<Path>,
    expected_dim: Option<usize>,
    seed: u64,
) -> Result<TableProvider, EncoderError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| EncoderError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_embedding_table(BufReader::new(file), expected_dim, seed)
}

/// Term sequence behind a query encoding: the first `cfg.query_len`
/// tokens, then the mask symbol up to exactly `cfg.query_len` entries.
pub fn query_terms(text: &str, cfg: &EncoderConfig) -> Vec<Term> {
    let mut terms = tokenize(text);
    terms.truncate(cfg.query_len);
    terms.resize(cfg.query_len, cfg.mask_term());
    terms
}

/// Term sequence behind a document encoding: at most `cfg.doc_maxlen`
/// tokens, or a single mask symbol for an empty document.
pub fn doc_terms(text: &str, cfg: &EncoderConfig) -> Vec<Term> {
    let mut terms = tokenize(text);
    terms.truncate(cfg.doc_maxlen);
    if terms.is_empty() {
        terms.push(cfg.mask_term());
    }
    terms
}

fn embed_terms(provider: &dyn EmbeddingProvider, terms: &[Term]) -> TokenMatrix {
    let mut m = TokenMatrix::new(provider.dim());
    let mut cache: HashMap<&Term, Vec<f32>> = HashMap::new();
    for t in terms {
        let row = cache.entry(t).or_insert_with(|| {
            let mut v = provider.embed(t);
            normalize(&mut v);
            v
        });
        m.push_row(row);
    }
    m
}

/// Encodes a query to exactly `cfg.query_len` unit rows, padding with the
/// mask embedding after the (truncated) token sequence.
pub fn encode_query(provider: &dyn EmbeddingProvider, text: &str, cfg: &EncoderConfig) -> TokenMatrix {
    embed_terms(provider, &query_terms(text, cfg))
}

/// Encodes a document to `min(tokens, doc_maxlen)` unit rows; an empty
/// document becomes a single mask row.
pub fn encode_doc(provider: &dyn EmbeddingProvider, text: &str, cfg: &EncoderConfig) -> TokenMatrix {
    embed_terms(provider, &doc_terms(text, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn term(s: &str) -> Term {
        Term::new(s).unwrap()
    }

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn query_padding() {
        let p = HashProvider::new(128, 7);
        let cfg = EncoderConfig::default();
        let q = encode_query(&p, &words(5), &cfg);
        assert_eq!(q.n_tokens(), 32);
        let mask = hash_embed(&term(MASK_SYMBOL), 128, 7);
        for i in 5..32 {
            assert_eq!(q.row(i), mask.as_slice());
        }
        assert_eq!(q.row(0), hash_embed(&term("w0"), 128, 7).as_slice());
        assert_eq!(q.row(4), hash_embed(&term("w4"), 128, 7).as_slice());

        let q = encode_query(&p, "", &cfg);
        assert_eq!(q.n_tokens(), 32);
        assert!(q.rows().all(|r| r == mask.as_slice()));

        let q = encode_query(&p, &words(40), &cfg);
        assert_eq!(q.n_tokens(), 32);
        assert_eq!(q.row(31), hash_embed(&term("w31"), 128, 7).as_slice());
    }

    #[test]
    fn doc_truncation() {
        let p = HashProvider::new(128, 0);
        let cfg = EncoderConfig::default();
        assert_eq!(encode_doc(&p, &words(200), &cfg).n_tokens(), 180);
        assert_eq!(encode_doc(&p, "one", &cfg).n_tokens(), 1);
        let empty = encode_doc(&p, "", &cfg);
        assert_eq!(empty.n_tokens(), 1);
        assert_eq!(empty.row(0), hash_embed(&term(MASK_SYMBOL), 128, 0).as_slice());
    }

    #[test]
    fn hash_embed_determinism_and_norm() {
        let t = term("habari");
        assert_eq!(hash_embed(&t, 128, 3), hash_embed(&t, 128, 3));
        assert_ne!(hash_embed(&t, 128, 3), hash_embed(&t, 128, 4));

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let s: String = (0..rng.random_range(1..12))
                .map(|_| rng.random_range(b'a'..=b'z') as char)
                .collect();
            let v = hash_embed(&term(&s), 128, 5);
            assert!((l2_norm(&v) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn hash_embed_distinct_terms_are_spread() {
        let mut low = 0;
        for i in 0..1000 {
            let a = hash_embed(&term(&format!("a{i}")), 128, 1);
            let b = hash_embed(&term(&format!("b{i}")), 128, 1);
            if dot(&a, &b) < 0.9 {
                low += 1;
            }
        }
        assert!(low >= 990, "only {low} of 1000 pairs below cosine 0.9");
    }

    #[test]
    fn normalize_is_idempotent() {
        let mut v = vec![3.0_f32, 4.0, 0.0];
        normalize(&mut v);
        assert_eq!(v, [0.6, 0.8, 0.0]);
        let once = hash_embed(&term("x"), 64, 0);
        let mut twice = once.clone();
        normalize(&mut twice);
        assert_eq!(once, twice);
        let mut z = vec![0.0_f32; 4];
        normalize(&mut z);
        assert_eq!(z, [0.0; 4]);
    }

    #[test]
    fn table_provider() {
        let a: Vec<String> = (0..128).map(|i| format!("{}", i as f32 + 1.0)).collect();
        let b: Vec<String> = (0..128).map(|i| format!("{}", -(i as f32))).collect();
        let src = format!("alpha {}\nbeta {}\n", a.join(" "), b.join(" "));
        let p = read_embedding_table(src.as_bytes(), Some(128), 9).unwrap();
        assert_eq!(p.len(), 2);
        let mut expect: Vec<f32> = (0..128).map(|i| i as f32 + 1.0).collect();
        normalize(&mut expect);
        assert_eq!(p.embed(&term("alpha")), expect);
        assert_eq!(p.embed(&term("gamma")), hash_embed(&term("gamma"), 128, 9));

        let short: Vec<String> = (0..64).map(|i| i.to_string()).collect();
        let src = format!("alpha {}\nbeta {}\n", a.join(" "), short.join(" "));
        let err = read_embedding_table(src.as_bytes(), Some(128), 9).unwrap_err();
        assert!(matches!(
            err,
            EncoderError::DimMismatch {
                line: 2,
                expected: 128,
                found: 64
            }
        ));
    }

    #[test]
    fn provider_swap_is_bitwise_identical() {
        let cfg = EncoderConfig::default();
        let hash = HashProvider::new(128, 21);
        let text = "the quick brown fox jumps over the lazy dog";
        let mut src = String::new();
        for t in tokenize(text).into_iter().chain([cfg.mask_term()]) {
            let v = hash_embed(&t, 128, 21);
            let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            src.push_str(&format!("{} {}\n", t, vals.join(" ")));
        }
        // different fallback seed, so only table hits can match
        let table = read_embedding_table(src.as_bytes(), Some(128), 999).unwrap();
        assert_eq!(encode_query(&hash, text, &cfg), encode_query(&table, text, &cfg));
        assert_eq!(encode_doc(&hash, text, &cfg), encode_doc(&table, text, &cfg));
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig::default().validate().is_ok());
        let bad = EncoderConfig {
            query_len: 0,
            ..EncoderConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = EncoderConfig {
            mask_symbol: "MASK".into(),
            ..EncoderConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn query_rows_fixed_and_unit(text in "\\PC{0,200}", qlen in 1usize..40) {
                let cfg = EncoderConfig { query_len: qlen, ..EncoderConfig::default() };
                let q = encode_query(&HashProvider::new(32, 1), &text, &cfg);
                prop_assert_eq!(q.n_tokens(), qlen);
                prop_assert!(q.is_normalized(1e-6));
                let d = encode_doc(&HashProvider::new(32, 1), &text, &cfg);
                prop_assert!(d.n_tokens() >= 1);
                prop_assert!(d.is_normalized(1e-6));
            }
        }
    }
}
