//! `clirkit`: command-line pipeline over the clirkit library.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 external-service
//! failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "clirkit", version, about = "Cross-language retrieval pipeline")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed recorded in every output and used by all randomized steps.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Embedding table (`term v1 .. vd` lines) instead of hash embeddings.
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Validate a collection and write it as JSONL.
    Ingest(IngestArgs),
    /// Build a BM25 index.
    IndexSparse(IndexSparseArgs),
    /// Build a compressed late-interaction index.
    IndexPlaid(IndexPlaidArgs),
    /// Rank with BM25.
    SearchBm25(SparseSearchArgs),
    /// Rank with BM25 after RM3 expansion.
    SearchRm3(Rm3SearchArgs),
    /// Rank with the compressed late-interaction index.
    SearchPlaid(PlaidSearchArgs),
    /// Rank with uncompressed MaxSim over every document.
    SearchExact(ExactSearchArgs),
    /// Select document pairs for query generation.
    MinePairs(MinePairsArgs),
    /// Ask a chat model for queries on each mined pair.
    GenQueries(GenQueriesArgs),
    /// Filter generated examples.
    Qc(QcArgs),
    /// Turn examples into query/positive/negative text triples.
    MakeTriples(MakeTriplesArgs),
    /// Compare analytic and numeric loss gradients on triples.
    GradCheck(GradCheckArgs),
    /// Score a run against relevance judgments.
    Eval(EvalArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    /// JSONL (`docid`, `text`, `lang`) or TSV (`docid<TAB>text[<TAB>lang]`).
    #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    pub input: Option<PathBuf>,
    /// Generate a seeded synthetic collection of this many documents.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Language of TSV rows without a third column.
    #[arg(long)]
    pub lang: Option<String>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct IndexSparseArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
}

#[derive(Args)]
pub struct IndexPlaidArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Index directory.
    #[arg(long)]
    pub output: PathBuf,
    /// Number of centroids.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub kmeans_iters: Option<usize>,
}

#[derive(Args)]
pub struct TopicsOut {
    /// `topic_id<TAB>query` lines.
    #[arg(long)]
    pub topics: PathBuf,
    /// TREC run file.
    #[arg(long)]
    pub output: PathBuf,
    /// Depth of each ranking.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Args)]
pub struct SparseSearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[command(flatten)]
    pub io: TopicsOut,
}

#[derive(Args)]
pub struct Rm3SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[command(flatten)]
    pub io: TopicsOut,
    #[arg(long)]
    pub fb_docs: Option<usize>,
    #[arg(long)]
    pub fb_terms: Option<usize>,
    #[arg(long)]
    pub orig_weight: Option<f64>,
}

#[derive(Args)]
pub struct PlaidSearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[command(flatten)]
    pub io: TopicsOut,
    #[arg(long)]
    pub n_probe: Option<usize>,
    #[arg(long)]
    pub n_candidates: Option<usize>,
    /// Also run exact search over this collection and report Recall@k of
    /// the compressed ranking against it.
    #[arg(long)]
    pub compare_exact: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExactSearchArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub io: TopicsOut,
}

#[derive(Args)]
pub struct MinePairsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Prebuilt BM25 index over the same collection; built on the fly if
    /// omitted.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Pairs as JSONL.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub min_query_doc_chars: Option<usize>,
}

#[derive(Args)]
pub struct GenQueriesArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    /// Examples as JSONL; raw responses and failures go to sibling files.
    #[arg(long)]
    pub output: PathBuf,
    /// Answer every prompt with this saved response body instead of calling
    /// the endpoint.
    #[arg(long)]
    pub mock: Option<PathBuf>,
    /// Only the first N pairs.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Args)]
pub struct QcArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub examples: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// External scorer reading `query<TAB>doc` lines and printing one score
    /// per line; the built-in stub is used otherwise.
    #[arg(long, num_args = 1.., allow_hyphen_values = true)]
    pub scorer_cmd: Option<Vec<String>>,
    #[arg(long)]
    pub margin: Option<f64>,
}

#[derive(Args)]
pub struct MakeTriplesArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub examples: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct GradCheckArgs {
    #[arg(long)]
    pub triples: PathBuf,
    /// JSON report.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub entries: Option<usize>,
    #[arg(long)]
    pub max_triples: Option<usize>,
    #[arg(long)]
    pub demo_steps: Option<usize>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    /// ndcg@k, recall@k (r@k) or judged@k; repeatable.
    #[arg(long, default_value = "ndcg@20")]
    pub metric: Vec<String>,
    /// Gain of graded judgments for nDCG.
    #[arg(long, value_enum, default_value = "linear")]
    pub gain: GainArg,
    /// Also write the per-topic table here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum GainArg {
    Linear,
    Exponential,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.kind.code())
        }
    }
}
