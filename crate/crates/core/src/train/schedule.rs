use serde::Serialize;

use crate::corpus::Lang;

/// Hyperparameters of one fine-tuning stage. They document the reference
/// setup and are written into run manifests; nothing here runs a
/// transformer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageSchedule {
    pub stage: Stage,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Maximum sequence length, when the stage uses one.
    pub max_len: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Masked-language-model continued pretraining on the language mix.
    Mlm,
    /// Retrieval fine-tuning on (query, positive, negative) triples.
    Retrieval,
}

pub const MLM_STAGE: StageSchedule = StageSchedule {
    stage: Stage::Mlm,
    learning_rate: 1e-5,
    batch_size: 48,
    steps: 200_000,
    max_len: Some(512),
};

pub const RETRIEVAL_STAGE: StageSchedule = StageSchedule {
    stage: Stage::Retrieval,
    learning_rate: 5e-6,
    batch_size: 64,
    steps: 200_000,
    max_len: None,
};

/// Interleaves one stream per language in [`Lang::ALL`] order, taking one
/// item from each stream that still has items and cycling until all are
/// exhausted.
pub struct RoundRobin<I> {
    streams: Vec<(Lang, I)>,
    live: Vec<bool>,
    next: usize,
}

impl<I: Iterator> Iterator for RoundRobin<I> {
    type Item = (Lang, I::Item);

    fn next(&mut self) -> Option<Self::Item> {
        let n = self.streams.len();
        for _ in 0..n {
            let i = self.next;
            self.next = (self.next + 1) % n;
            if !self.live[i] {
                continue;
            }
            let (lang, stream) = &mut self.streams[i];
            match stream.next() {
                Some(item) => return Some((*lang, item)),
                None => self.live[i] = false,
            }
        }
        None
    }
}

/// Builds the scheduler from `(language, stream)` pairs; pairs are reordered
/// to the fixed language order, and languages without a stream are skipped.
/// Panics if the same language appears twice.
pub fn round_robin<I: Iterator>(streams: impl IntoIterator<Item = (Lang, I)>) -> RoundRobin<I> {
    let mut streams: Vec<(Lang, I)> = streams.into_iter().collect();
    streams.sort_by_key(|(l, _)| *l as usize);
    for w in streams.windows(2) {
        assert!(w[0].0 != w[1].0, "duplicate stream for {}", w[0].0.code());
    }
    let live = vec![true; streams.len()];
    RoundRobin {
        streams,
        live,
        next: 0,
    }
}
