//! Synthetic training data from document pairs: mine pairs of related but
//! distinct documents with BM25, ask a chat model for quiz questions that
//! separate them, and filter the questions.

mod chat;
mod generate;
mod lcs;
mod matching;
mod mining;
mod prompt;
mod qc;

pub use chat::{
    ChatClient, ChatError, HttpChatClient, HttpChatConfig, MockChatClient, RequestPolicy, ENV_KEY, ENV_MODEL, ENV_URL,
};
pub use generate::{
    apply_qc, examples_to_triples, generate_examples, FailureRecord, GeneratedExample, Generation, QcReport,
    RawResponse, Slot,
};
pub use lcs::lcs_len;
pub use matching::lexmin_max_matching;
pub use mining::{
    candidate_edges, filter_candidate, mine_pairs, select_pairs, MinedPair, MiningError, MiningParams, RejectReason,
    Verdict,
};
pub use prompt::{build_prompt, parse_content, parse_response, response_content, ParseError, QUERIES_PER_DOC};
pub use qc::{margin_holds, qc_banned, qc_margin, QcParams, RelevanceScorer, ScorerError, StubScorer, SubprocessScorer};
