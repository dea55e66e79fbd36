//! Cross-language retrieval toolkit.
//!
//! - [`corpus`]: JSONL collections and the shared analyzer
//! - [`sparse`]: BM25 with RM3 query expansion
//! - [`encoder`]: token-vector encoders with fixed-length query padding
//! - [`plaid`]: k-means centroids, 1-bit residual compression, index files
//! - [`search`]: exact and compressed late-interaction (MaxSim) search
//! - [`train`]: training triples, contrastive loss, gradient checking,
//!   round-robin language scheduling
//! - [`jhpolo`]: document-pair mining and LLM query generation for
//!   synthetic training examples
//! - [`eval`]: TREC run/qrels I/O and nDCG, recall and judged-fraction metrics

pub mod corpus;
pub mod encoder;
pub mod eval;
pub mod jhpolo;
pub mod plaid;
pub mod ranking;
pub mod search;
pub mod sparse;
pub mod synth;
pub mod train;
