//! Training-side pieces that can be exercised without a transformer:
//! triple files, the two-candidate contrastive loss, a small differentiable
//! encoder with an analytic gradient, and the multilingual round-robin
//! scheduler used for continued pretraining.

mod loss;
mod schedule;
mod toy;
mod triples;

pub use loss::{contrastive_ce_loss, contrastive_ce_grad};
pub use schedule::{round_robin, RoundRobin, Stage, StageSchedule, MLM_STAGE, RETRIEVAL_STAGE};
pub use toy::{grad_check, train_demo, triple_loss, GradCheck, ToyEncoder};
pub use triples::{load_triples, read_triples, write_triples, Triple, TripleError};
