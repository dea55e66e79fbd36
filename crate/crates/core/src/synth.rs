//! Seeded synthetic corpora for tests, benchmarks and smoke runs.
//!
//! Documents are drawn from a fixed number of topics. Each topic owns a
//! small vocabulary; a document mostly samples its own topic's words plus a
//! shared background vocabulary, so both sparse and dense retrievers see
//! real topical structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{Collection, Document, Lang, Term};
use crate::encoder::{hash_embed, normalize};

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_docs: usize,
    pub n_topics: usize,
    pub words_per_topic: usize,
    pub background_words: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a token comes from the document's topic.
    pub topic_share: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_docs: 200,
            n_topics: 20,
            words_per_topic: 12,
            background_words: 40,
            min_len: 30,
            max_len: 80,
            topic_share: 0.8,
            seed: 0,
        }
    }
}

/// Documents per topic in [`SynthSpec::with_docs`].
pub const DOCS_PER_TOPIC: usize = 10;

impl SynthSpec {
    /// Defaults with `n_docs` documents and one topic per
    /// [`DOCS_PER_TOPIC`] of them.
    pub fn with_docs(n_docs: usize, seed: u64) -> Self {
        Self {
            n_docs,
            n_topics: n_docs.div_ceil(DOCS_PER_TOPIC).max(1),
            seed,
            ..Self::default()
        }
    }
}

/// Number of embedding directions in the default clustered table.
pub const DEFAULT_CLUSTERS: usize = 64;
/// Per-word noise of the default clustered table.
pub const DEFAULT_SPREAD: f32 = 0.1;

pub fn topic_word(topic: usize, j: usize) -> String {
    format!("t{topic}w{j}")
}

pub fn background_word(j: usize) -> String {
    format!("bg{j}")
}

pub fn topic_of(doc: usize, spec: &SynthSpec) -> usize {
    doc % spec.n_topics
}

/// Index skewed towards small values, giving a Zipf-like word distribution.
fn skewed(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let u: f64 = rng.random();
    ((u * u) * n as f64) as usize % n
}

/// Documents `s0000`, `s0001`, ... with languages cycling through all five.
pub fn clustered_corpus(spec: &SynthSpec) -> Collection {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let docs = (0..spec.n_docs)
        .map(|i| {
            let topic = topic_of(i, spec);
            let len = rng.random_range(spec.min_len..=spec.max_len);
            let words: Vec<String> = (0..len)
                .map(|_| {
                    if rng.random_bool(spec.topic_share) {
                        topic_word(topic, skewed(&mut rng, spec.words_per_topic))
                    } else {
                        background_word(skewed(&mut rng, spec.background_words))
                    }
                })
                .collect();
            Document::new(format!("s{i:04}"), words.join(" "), Lang::ALL[i % 5])
        })
        .collect();
    Collection::from_documents(docs).expect("generated docids are unique")
}

/// `n` queries of 3..=6 topic words, with the topic each was drawn from.
pub fn topic_queries(spec: &SynthSpec, n: usize, seed: u64) -> Vec<(usize, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|q| {
            let topic = q % spec.n_topics;
            let len = rng.random_range(3..=6);
            let words: Vec<String> = (0..len)
                .map(|_| topic_word(topic, skewed(&mut rng, spec.words_per_topic)))
                .collect();
            (topic, words.join(" "))
        })
        .collect()
}

/// Embedding table whose vectors lie near `n_clusters` shared directions
/// (`spread` scales the per-word noise), in the `term v1 .. vd` text format
/// read by [`crate::encoder::read_embedding_table`]. Words of one topic are
/// spread over consecutive directions so topics stay separable.
pub fn clustered_embedding_table(spec: &SynthSpec, dim: usize, n_clusters: usize, spread: f32, seed: u64) -> String {
    assert!(n_clusters > 0, "n_clusters must be positive");
    let centers: Vec<Vec<f32>> = (0..n_clusters)
        .map(|c| hash_embed(&Term::new(format!("center{c}")).unwrap(), dim, seed))
        .collect();
    let mut words: Vec<String> = (0..spec.n_topics)
        .flat_map(|t| (0..spec.words_per_topic).map(move |j| topic_word(t, j)))
        .collect();
    words.extend((0..spec.background_words).map(background_word));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for (g, word) in words.iter().enumerate() {
        let center = &centers[g * n_clusters / words.len()];
        let mut v: Vec<f32> = center
            .iter()
            .map(|&c| {
                let z: f32 = StandardNormal.sample(&mut rng);
                c + spread * z / (dim as f32).sqrt()
            })
            .collect();
        normalize(&mut v);
        out.push_str(word);
        for x in v {
            out.push(' ');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}
