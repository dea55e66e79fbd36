//! TREC run and qrels files, and the ranking metrics computed over them.

mod metrics;
mod trec;

pub use metrics::{evaluate, judged_at, ndcg_at, recall_at, Gain, Metric, MetricError, TopicScores};
pub use trec::{load_qrels, load_run, read_qrels, read_run, write_run, EvalError, Qrels, RunEntry, RunFile};
