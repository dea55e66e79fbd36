//! Inverted-index BM25 retrieval with RM3 pseudo-relevance feedback.
//!
//! Scoring uses the non-negative IDF `ln((N - df + 0.5) / (df + 0.5) + 1)`
//! and the usual saturation term
//!
//! ```text
//! tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
//! ```
//!
//! Query terms are weighted: a plain query weights each distinct term by its
//! number of occurrences, an RM3 query by its expansion weight. All rankings
//! break score ties by ascending docid.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, Collection, Term};
use crate::ranking::{sort_hits, Hit};

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid sparse index file {path}: {message}")]
    Format { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Rm3Params {
    pub fb_docs: usize,
    pub fb_terms: usize,
    pub orig_weight: f64,
}

impl Default for Rm3Params {
    fn default() -> Self {
        Self {
            fb_docs: 10,
            fb_terms: 10,
            orig_weight: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseIndex {
    docids: Vec<String>,
    vocab: Vec<Term>,
    term_ids: HashMap<Term, u32>,
    postings: Vec<Vec<Posting>>,
    /// Per-document (term id, tf), sorted by term id. Used by RM3.
    forward: Vec<Vec<(u32, u32)>>,
    doc_lengths: Vec<u32>,
    avg_doc_len: f64,
    params: Bm25Params,
}

impl SparseIndex {
    pub fn build(collection: &Collection, params: Bm25Params) -> Self {
        let mut term_ids: HashMap<Term, u32> = HashMap::new();
        let mut vocab = Vec::new();
        let mut postings: Vec<Vec<Posting>> = Vec::new();
        let mut forward = Vec::with_capacity(collection.len());
        let mut doc_lengths = Vec::with_capacity(collection.len());

        for (ord, doc) in collection.iter().enumerate() {
            let tokens = tokenize(&doc.text);
            doc_lengths.push(tokens.len() as u32);
            let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
            for t in tokens {
                let id = *term_ids.entry(t.clone()).or_insert_with(|| {
                    vocab.push(t);
                    postings.push(Vec::new());
                    (vocab.len() - 1) as u32
                });
                *counts.entry(id).or_default() += 1;
            }
            for (&id, &tf) in &counts {
                postings[id as usize].push(Posting { doc: ord as u32, tf });
            }
            forward.push(counts.into_iter().collect());
        }

        Self::assemble(
            collection.iter().map(|d| d.docid.clone()).collect(),
            vocab,
            postings,
            forward,
            doc_lengths,
            params,
        )
    }

    fn assemble(
        docids: Vec<String>,
        vocab: Vec<Term>,
        postings: Vec<Vec<Posting>>,
        forward: Vec<Vec<(u32, u32)>>,
        doc_lengths: Vec<u32>,
        params: Bm25Params,
    ) -> Self {
        let term_ids = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let avg_doc_len = if doc_lengths.is_empty() {
            0.0
        } else {
            doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_lengths.len() as f64
        };
        Self {
            docids,
            vocab,
            term_ids,
            postings,
            forward,
            doc_lengths,
            avg_doc_len,
            params,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.docids.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_length(&self, ordinal: usize) -> u32 {
        self.doc_lengths[ordinal]
    }

    pub fn docid(&self, ordinal: usize) -> &str {
        &self.docids[ordinal]
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn df(&self, term: &Term) -> usize {
        self.postings(term).map_or(0, <[Posting]>::len)
    }

    pub fn postings(&self, term: &Term) -> Option<&[Posting]> {
        self.term_ids
            .get(term)
            .map(|&id| self.postings[id as usize].as_slice())
    }

    pub fn tf(&self, term: &Term, ordinal: usize) -> u32 {
        let Some(&id) = self.term_ids.get(term) else {
            return 0;
        };
        let fwd = &self.forward[ordinal];
        fwd.binary_search_by_key(&id, |&(t, _)| t)
            .map_or(0, |i| fwd[i].1)
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.doc_count() as f64;
        let df = df as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln().max(0.0)
    }

    fn term_weight(&self, tf: u32, doc_len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let norm = if self.avg_doc_len > 0.0 {
            1.0 - b + b * doc_len as f64 / self.avg_doc_len
        } else {
            1.0
        };
        tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    /// Resolves a weighted query to (term id, weight) pairs, dropping unknown
    /// terms and zero weights.
    fn resolve(&self, query: &WeightedQuery) -> Vec<(u32, f64)> {
        query
            .terms()
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .filter_map(|(t, w)| self.term_ids.get(t).map(|&id| (id, *w)))
            .collect()
    }

    /// BM25 score of a single document; 0 if it shares no query term.
    pub fn score_doc(&self, query: &WeightedQuery, ordinal: usize) -> f64 {
        let fwd = &self.forward[ordinal];
        let dl = self.doc_lengths[ordinal];
        self.resolve(query)
            .into_iter()
            .filter_map(|(id, w)| {
                let tf = fwd.binary_search_by_key(&id, |&(t, _)| t).ok()?;
                let idf = self.idf(self.postings[id as usize].len());
                Some(w * idf * self.term_weight(fwd[tf].1, dl))
            })
            .sum()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SparseError> {
        let path = path.as_ref();
        let io_err = |source| SparseError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = SparseIndexFile {
            format: SPARSE_FORMAT.to_string(),
            params: self.params,
            docids: self.docids.clone(),
            doc_lengths: self.doc_lengths.clone(),
            vocab: self.vocab.clone(),
            postings: self
                .postings
                .iter()
                .map(|ps| ps.iter().map(|p| [p.doc, p.tf]).collect())
                .collect(),
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        serde_json::to_writer(&mut w, &file).map_err(|e| io_err(e.into()))?;
        w.flush().map_err(io_err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SparseError> {
        let path = path.as_ref();
        let format_err = |message: String| SparseError::Format {
            path: path.display().to_string(),
            message,
        };
        let reader = BufReader::new(File::open(path).map_err(|source| SparseError::Io {
            path: path.display().to_string(),
            source,
        })?);
        let file: SparseIndexFile =
            serde_json::from_reader(reader).map_err(|e| format_err(e.to_string()))?;
        if file.format != SPARSE_FORMAT {
            return Err(format_err(format!("unsupported format tag {:?}", file.format)));
        }
        let n = file.docids.len();
        if file.doc_lengths.len() != n || file.postings.len() != file.vocab.len() {
            return Err(format_err("inconsistent array lengths".into()));
        }
        let mut forward: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n];
        let mut postings = Vec::with_capacity(file.postings.len());
        for (id, list) in file.postings.into_iter().enumerate() {
            let mut prev = None;
            let mut ps = Vec::with_capacity(list.len());
            for [doc, tf] in list {
                if doc as usize >= n || prev.is_some_and(|p| p >= doc) {
                    return Err(format_err(format!("bad posting list for term #{id}")));
                }
                prev = Some(doc);
                forward[doc as usize].push((id as u32, tf));
                ps.push(Posting { doc, tf });
            }
            postings.push(ps);
        }
        Ok(Self::assemble(
            file.docids,
            file.vocab,
            postings,
            forward,
            file.doc_lengths,
            file.params,
        ))
    }
}

const SPARSE_FORMAT: &str = "clirkit-sparse-v1";

#[derive(Serialize, Deserialize)]
struct SparseIndexFile {
    format: String,
    params: Bm25Params,
    docids: Vec<String>,
    doc_lengths: Vec<u32>,
    vocab: Vec<Term>,
    postings: Vec<Vec<[u32; 2]>>,
}

/// Unique terms with non-negative weights, sorted by term.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedQuery {
    terms: Vec<(Term, f64)>,
}

impl WeightedQuery {
    /// Merges duplicate terms by summing their weights. Negative or
    /// non-finite weights are clamped to zero.
    pub fn new(terms: impl IntoIterator<Item = (Term, f64)>) -> Self {
        let mut merged: BTreeMap<Term, f64> = BTreeMap::new();
        for (t, w) in terms {
            let w = if w.is_finite() { w.max(0.0) } else { 0.0 };
            *merged.entry(t).or_default() += w;
        }
        Self {
            terms: merged.into_iter().collect(),
        }
    }

    /// Each distinct term weighted by its occurrence count.
    pub fn from_counts(query: &[Term]) -> Self {
        Self::new(query.iter().map(|t| (t.clone(), 1.0)))
    }

    /// Maximum-likelihood distribution of the query terms.
    pub fn uniform(query: &[Term]) -> Self {
        let n = query.len() as f64;
        Self::new(query.iter().map(|t| (t.clone(), 1.0 / n)))
    }

    pub fn terms(&self) -> &[(Term, f64)] {
        &self.terms
    }

    pub fn weight(&self, term: &Term) -> f64 {
        self.terms
            .binary_search_by(|(t, _)| t.cmp(term))
            .map_or(0.0, |i| self.terms[i].1)
    }

    pub fn total_weight(&self) -> f64 {
        self.terms.iter().map(|(_, w)| w).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Ranks documents for a weighted query. Only documents sharing at least
/// one positively weighted term are returned.
pub fn weighted_search(index: &SparseIndex, query: &WeightedQuery, k: usize) -> Vec<Hit> {
    let mut acc: HashMap<u32, f64> = HashMap::new();
    for (id, w) in index.resolve(query) {
        let list = &index.postings[id as usize];
        let idf = index.idf(list.len());
        for p in list {
            *acc.entry(p.doc).or_default() +=
                w * idf * index.term_weight(p.tf, index.doc_lengths[p.doc as usize]);
        }
    }
    let mut hits: Vec<Hit> = acc
        .into_iter()
        .map(|(doc, score)| Hit {
            docid: index.docids[doc as usize].clone(),
            ordinal: doc as usize,
            score,
        })
        .collect();
    sort_hits(&mut hits);
    hits.truncate(k);
    hits
}

/// Plain BM25; repeated query terms contribute once per occurrence.
pub fn bm25_search(index: &SparseIndex, query: &[Term], k: usize) -> Vec<Hit> {
    weighted_search(index, &WeightedQuery::from_counts(query), k)
}

/// RM3 expansion: interpolates the query's term distribution with a
/// relevance model estimated from the top `fb_docs` BM25 results.
///
/// The relevance model weights each feedback document by its BM25 score
/// and uses maximum-likelihood term probabilities within the document; the
/// `fb_terms` heaviest terms are kept and renormalized before mixing.
pub fn rm3_expand(index: &SparseIndex, query: &[Term], params: &Rm3Params) -> WeightedQuery {
    let original = WeightedQuery::uniform(query);
    if query.is_empty() {
        return original;
    }
    let feedback = bm25_search(index, query, params.fb_docs.max(1));
    if feedback.is_empty() || params.orig_weight >= 1.0 {
        return original;
    }

    let mut relevance: HashMap<u32, f64> = HashMap::new();
    for hit in &feedback {
        let dl = index.doc_lengths[hit.ordinal];
        if dl == 0 {
            continue;
        }
        for &(id, tf) in &index.forward[hit.ordinal] {
            *relevance.entry(id).or_default() += hit.score * tf as f64 / dl as f64;
        }
    }
    let mut expansion: Vec<(&Term, f64)> = relevance
        .into_iter()
        .map(|(id, w)| (&index.vocab[id as usize], w))
        .collect();
    expansion.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    expansion.truncate(params.fb_terms.max(1));
    let mass: f64 = expansion.iter().map(|(_, w)| w).sum();
    if mass <= 0.0 {
        return original;
    }

    let lambda = params.orig_weight.clamp(0.0, 1.0);
    WeightedQuery::new(
        original
            .terms()
            .iter()
            .map(|(t, w)| (t.clone(), lambda * w))
            .chain(
                expansion
                    .into_iter()
                    .map(|(t, w)| (t.clone(), (1.0 - lambda) * w / mass)),
            ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Lang};

    fn coll(texts: &[&str]) -> Collection {
        Collection::from_documents(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Document::new(format!("d{i}"), *t, Lang::En))
                .collect(),
        )
        .unwrap()
    }

    fn term(s: &str) -> Term {
        Term::new(s).unwrap()
    }

    #[test]
    fn build_counts() {
        let idx = SparseIndex::build(&coll(&[]), Bm25Params::default());
        assert_eq!(idx.doc_count(), 0);
        assert!(bm25_search(&idx, &[term("a")], 5).is_empty());

        let idx = SparseIndex::build(&coll(&["a b", "b c"]), Bm25Params::default());
        assert_eq!(idx.df(&term("b")), 2);
        assert_eq!(idx.df(&term("a")), 1);
        assert_eq!(idx.df(&term("c")), 1);
        assert_eq!(idx.avg_doc_len(), 2.0);

        let idx = SparseIndex::build(&coll(&["x x x"]), Bm25Params::default());
        assert_eq!(idx.tf(&term("x"), 0), 3);
        assert_eq!(idx.doc_length(0), 3);
    }

    #[test]
    fn postings_sorted_and_in_range() {
        let idx = SparseIndex::build(&coll(&["a b a", "b", "c a"]), Bm25Params::default());
        for t in ["a", "b", "c"] {
            let ps = idx.postings(&term(t)).unwrap();
            assert!(ps.windows(2).all(|w| w[0].doc < w[1].doc));
            assert!(ps.iter().all(|p| (p.doc as usize) < idx.doc_count()));
        }
    }

    #[test]
    fn no_match_and_ties() {
        let idx = SparseIndex::build(&coll(&["same words", "same words", "other"]), Bm25Params::default());
        assert!(bm25_search(&idx, &[term("absent")], 10).is_empty());
        let hits = bm25_search(&idx, &[term("same")], 10);
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].score, hits[1].score);
        assert_eq!(hits[0].docid, "d0");
        assert_eq!(hits[1].docid, "d1");
    }

    #[test]
    fn rm3_identity_and_fallback() {
        let idx = SparseIndex::build(&coll(&["a b", "b c", "c d"]), Bm25Params::default());
        let q = [term("a"), term("b")];
        let p = Rm3Params {
            orig_weight: 1.0,
            ..Rm3Params::default()
        };
        assert_eq!(rm3_expand(&idx, &q, &p), WeightedQuery::uniform(&q));

        let q = [term("zzz")];
        assert_eq!(
            rm3_expand(&idx, &q, &Rm3Params::default()),
            WeightedQuery::uniform(&q)
        );
    }

    #[test]
    fn save_load_round_trip() {
        let idx = SparseIndex::build(&coll(&["a b a", "b", "", "c a"]), Bm25Params { k1: 1.2, b: 0.75 });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sparse.json");
        idx.save(&path).unwrap();
        assert_eq!(SparseIndex::load(&path).unwrap(), idx);
    }

    // Independent evaluation of the scoring formula for explicit counts.
    fn oracle(n: f64, df: f64, tf: f64, dl: f64, avgdl: f64) -> f64 {
        let (k1, b) = (0.9, 0.4);
        let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl))
    }

    fn three_docs() -> Collection {
        coll(&["a b c", "a a d e", "b f"])
    }

    #[test]
    fn bm25_matches_hand_formula() {
        let idx = SparseIndex::build(&three_docs(), Bm25Params::default());
        let avg = 9.0 / 3.0;
        let want = [
            oracle(3.0, 2.0, 1.0, 3.0, avg) + oracle(3.0, 2.0, 1.0, 3.0, avg),
            oracle(3.0, 2.0, 2.0, 4.0, avg),
            oracle(3.0, 2.0, 1.0, 2.0, avg),
        ];
        let hits = bm25_search(&idx, &[term("a"), term("b")], 10);
        assert_eq!(hits.len(), 3);
        for h in &hits {
            assert!((h.score - want[h.ordinal]).abs() < 1e-6, "{}: {} vs {}", h.docid, h.score, want[h.ordinal]);
        }
        assert_eq!(hits[0].docid, "d0");
        // a repeated query term counts twice
        let twice = bm25_search(&idx, &[term("d"), term("d")], 1);
        assert!((twice[0].score - 2.0 * oracle(3.0, 1.0, 1.0, 4.0, avg)).abs() < 1e-9);
    }

    #[test]
    fn weighted_query_scales_contributions() {
        let idx = SparseIndex::build(&three_docs(), Bm25Params::default());
        let avg = 3.0;
        let q = WeightedQuery::new([(term("a"), 0.8), (term("f"), 0.2)]);
        let hits = weighted_search(&idx, &q, 10);
        let want_d1 = 0.8 * oracle(3.0, 2.0, 2.0, 4.0, avg);
        let want_d2 = 0.2 * oracle(3.0, 1.0, 1.0, 2.0, avg);
        let d1 = hits.iter().find(|h| h.docid == "d1").unwrap();
        let d2 = hits.iter().find(|h| h.docid == "d2").unwrap();
        assert!((d1.score - want_d1).abs() < 1e-9 && (d2.score - want_d2).abs() < 1e-9);
    }

    #[test]
    fn rm3_matches_hand_computation() {
        let idx = SparseIndex::build(&three_docs(), Bm25Params::default());
        let p = Rm3Params { fb_docs: 2, fb_terms: 3, orig_weight: 0.5 };
        let q = [term("d")];
        // only d1 contains "d": relevance model is its term distribution
        let s1 = oracle(3.0, 1.0, 1.0, 4.0, 3.0);
        let rel = [("a", s1 * 2.0 / 4.0), ("d", s1 / 4.0), ("e", s1 / 4.0)];
        let mass: f64 = rel.iter().map(|r| r.1).sum();
        let got = rm3_expand(&idx, &q, &p);
        assert!((got.weight(&term("a")) - 0.5 * rel[0].1 / mass).abs() < 1e-12);
        assert!((got.weight(&term("d")) - (0.5 + 0.5 * rel[1].1 / mass)).abs() < 1e-12);
        assert!((got.weight(&term("e")) - 0.5 * rel[2].1 / mass).abs() < 1e-12);
        assert!((got.total_weight() - 1.0).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn texts() -> impl Strategy<Value = Vec<String>> {
            proptest::collection::vec("(w[0-5] ){0,8}", 1..12)
        }

        fn query() -> impl Strategy<Value = Vec<Term>> {
            proptest::collection::vec((0..6u8).prop_map(|i| Term::new(format!("w{i}")).unwrap()), 1..5)
        }

        fn build(texts: &[String]) -> SparseIndex {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            SparseIndex::build(&coll(&refs), Bm25Params::default())
        }

        proptest! {
            #[test]
            fn top_k_is_a_prefix(t in texts(), q in query(), k in 1usize..6) {
                let idx = build(&t);
                let short = bm25_search(&idx, &q, k);
                let long = bm25_search(&idx, &q, k + 5);
                prop_assert_eq!(&long[..short.len()], &short[..]);
            }

            #[test]
            fn adding_documents_never_lowers_df(t in texts(), extra in texts()) {
                let small = build(&t);
                let mut all = t.clone();
                all.extend(extra);
                let big = build(&all);
                for i in 0..6 {
                    let w = Term::new(format!("w{i}")).unwrap();
                    prop_assert!(big.df(&w) >= small.df(&w));
                }
            }

            #[test]
            fn rm3_weights_sum_to_one(t in texts(), q in query(), fb_docs in 1usize..5, fb_terms in 1usize..8, lambda in 0.0f64..1.0) {
                let idx = build(&t);
                let p = Rm3Params { fb_docs, fb_terms, orig_weight: lambda };
                let e = rm3_expand(&idx, &q, &p);
                prop_assert!((e.total_weight() - 1.0).abs() < 1e-9);
                prop_assert!(e.terms().iter().all(|(_, w)| *w >= 0.0));
                let id = rm3_expand(&idx, &q, &Rm3Params { orig_weight: 1.0, ..p });
                prop_assert_eq!(id, WeightedQuery::uniform(&q));
            }
        }
    }
}
