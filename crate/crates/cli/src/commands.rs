use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clirkit::corpus::{load_jsonl, read_jsonl, tokenize, Collection, Document, Lang};
use clirkit::encoder::{load_embedding_table, EmbeddingProvider, EncoderConfig, HashProvider};
use clirkit::eval::{evaluate, load_qrels, load_run, write_run, Gain, Metric, RunFile};
use clirkit::jhpolo::{
    apply_qc, examples_to_triples, generate_examples, mine_pairs, ChatClient, GeneratedExample, HttpChatClient,
    HttpChatConfig, MinedPair, MockChatClient, RelevanceScorer, StubScorer, SubprocessScorer,
};
use clirkit::plaid::{build_plaid, load_index, save_index, PlaidBuildParams};
use clirkit::ranking::Hit;
use clirkit::search::{overlap_recall, search_plaid, ExactSearcher, SearchParams};
use clirkit::sparse::{bm25_search, rm3_expand, weighted_search, SparseIndex};
use clirkit::synth::{clustered_corpus, SynthSpec};
use clirkit::train::{grad_check, load_triples, train_demo, write_triples, ToyEncoder};
use serde::Serialize;
use serde_json::json;

use crate::config::Config;
use crate::output::{write_atomic, write_dir_atomic, write_manifest};
use crate::{Cli, Command, GainArg};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    External,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::External => 3,
        }
    }
}

pub struct Failure {
    pub kind: Kind,
    pub error: anyhow::Error,
}

type Res<T> = Result<T, Failure>;

trait Classify<T> {
    fn usage(self) -> Res<T>;
    fn data(self) -> Res<T>;
    fn external(self) -> Res<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Res<T> {
        self.map_err(|e| Failure { kind: Kind::Usage, error: e.into() })
    }
    fn data(self) -> Res<T> {
        self.map_err(|e| Failure { kind: Kind::Data, error: e.into() })
    }
    fn external(self) -> Res<T> {
        self.map_err(|e| Failure { kind: Kind::External, error: e.into() })
    }
}

fn fail<T>(kind: Kind, error: anyhow::Error) -> Res<T> {
    Err(Failure { kind, error })
}

pub fn run(cli: Cli) -> Res<()> {
    let mut cfg = Config::load(cli.config.as_deref()).usage()?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(e) = cli.embeddings {
        cfg.embeddings = Some(e);
    }
    cfg.encoder.validate().usage()?;
    cfg.mining.validate().usage()?;
    match cli.command {
        Command::Ingest(a) => ingest(cfg, a),
        Command::IndexSparse(a) => index_sparse(cfg, a),
        Command::IndexPlaid(a) => index_plaid(cfg, a),
        Command::SearchBm25(a) => search_sparse(cfg, a.index, a.io, None),
        Command::SearchRm3(a) => {
            let mut cfg = cfg;
            set(&mut cfg.rm3.fb_docs, a.fb_docs);
            set(&mut cfg.rm3.fb_terms, a.fb_terms);
            set(&mut cfg.rm3.orig_weight, a.orig_weight);
            let rm3 = cfg.rm3.clone();
            search_sparse(cfg, a.index, a.io, Some(rm3))
        }
        Command::SearchPlaid(a) => search_plaid_cmd(cfg, a),
        Command::SearchExact(a) => search_exact_cmd(cfg, a),
        Command::MinePairs(a) => mine(cfg, a),
        Command::GenQueries(a) => gen_queries(cfg, a),
        Command::Qc(a) => qc(cfg, a),
        Command::MakeTriples(a) => make_triples(cfg, a),
        Command::GradCheck(a) => grad_check_cmd(cfg, a),
        Command::Eval(a) => eval(a),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn require_file(path: &Path) -> Res<()> {
    if path.exists() {
        Ok(())
    } else {
        fail(Kind::Data, anyhow!("{} does not exist", path.display()))
    }
}

fn load_corpus(path: &Path) -> Res<Collection> {
    require_file(path)?;
    load_jsonl(path).with_context(|| format!("reading {}", path.display())).data()
}

fn provider(cfg: &Config, enc: &EncoderConfig) -> Res<Box<dyn EmbeddingProvider>> {
    match &cfg.embeddings {
        Some(path) => {
            require_file(path)?;
            let table = load_embedding_table(path, Some(enc.dim), enc.seed)
                .with_context(|| format!("reading {}", path.display()))
                .data()?;
            Ok(Box::new(table))
        }
        None => Ok(Box::new(HashProvider::new(enc.dim, enc.seed))),
    }
}

fn with_embeddings<'a>(cfg: &'a Config, inputs: &[&'a Path]) -> Vec<&'a Path> {
    let mut v = inputs.to_vec();
    if let Some(e) = &cfg.embeddings {
        v.push(e.as_path());
    }
    v
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Res<()> {
    write_atomic(path, |w| {
        for item in items {
            serde_json::to_writer(&mut *w, item)?;
            writeln!(w)?;
        }
        Ok(())
    })
    .with_context(|| format!("writing {}", path.display()))
    .data()
}

fn read_jsonl_items<T: serde::de::DeserializeOwned>(path: &Path) -> Res<Vec<T>> {
    require_file(path)?;
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display())).data()?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.data()?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .with_context(|| format!("{} line {}", path.display(), i + 1))
            .data()?;
        out.push(item);
    }
    Ok(out)
}

/// `topic_id<TAB>query` lines, blank lines ignored.
fn read_topics(path: &Path) -> Res<Vec<(String, String)>> {
    require_file(path)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).data()?;
    let mut topics = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((id, query)) = line.split_once('\t') else {
            return fail(Kind::Data, anyhow!("{} line {}: expected topic_id<TAB>query", path.display(), i + 1));
        };
        let id = id.trim();
        if id.is_empty() || id.contains(char::is_whitespace) {
            return fail(Kind::Data, anyhow!("{} line {}: invalid topic id {id:?}", path.display(), i + 1));
        }
        topics.push((id.to_string(), query.trim().to_string()));
    }
    Ok(topics)
}

fn write_run_file(path: &Path, results: &[(String, Vec<Hit>)], tag: &str) -> Res<()> {
    let mut run = RunFile::new();
    for (topic, hits) in results {
        run.insert_hits(topic, hits, tag).data()?;
    }
    write_atomic(path, |w| Ok(write_run(w, &run)?))
        .with_context(|| format!("writing {}", path.display()))
        .data()
}

fn ingest(cfg: Config, a: crate::IngestArgs) -> Res<()> {
    let collection = match (&a.input, a.synthetic) {
        (_, Some(n)) => clustered_corpus(&SynthSpec::with_docs(n, cfg.seed)),
        (Some(input), None) => {
            require_file(input)?;
            let is_tsv = input.extension().is_some_and(|e| e == "tsv");
            if is_tsv {
                read_tsv_corpus(input, a.lang.as_deref())?
            } else {
                let f = fs::File::open(input).data()?;
                read_jsonl(BufReader::new(f)).with_context(|| format!("reading {}", input.display())).data()?
            }
        }
        (None, None) => return fail(Kind::Usage, anyhow!("either --input or --synthetic is required")),
    };
    write_atomic(&a.output, |w| Ok(collection.write_jsonl(w)?))
        .with_context(|| format!("writing {}", a.output.display()))
        .data()?;
    let inputs: Vec<&Path> = a.input.as_deref().into_iter().collect();
    let mut by_lang = std::collections::BTreeMap::new();
    for d in collection.iter() {
        *by_lang.entry(d.lang.code()).or_insert(0usize) += 1;
    }
    write_manifest("ingest", &cfg, &inputs, &[&a.output], json!({"documents": collection.len(), "by_lang": by_lang})).data()?;
    eprintln!("ingested {} documents", collection.len());
    Ok(())
}

fn read_tsv_corpus(path: &Path, lang: Option<&str>) -> Res<Collection> {
    let default_lang: Option<Lang> = lang.map(|l| l.parse()).transpose().usage()?;
    let text = fs::read_to_string(path).data()?;
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let lang = match (f.len(), default_lang) {
            (2, Some(l)) => l,
            (3, _) => f[2].trim().parse().with_context(|| format!("{} line {}", path.display(), i + 1)).data()?,
            (2, None) => return fail(Kind::Usage, anyhow!("{} line {}: no language column; pass --lang", path.display(), i + 1)),
            (n, _) => return fail(Kind::Data, anyhow!("{} line {}: expected 2 or 3 fields, found {n}", path.display(), i + 1)),
        };
        docs.push(Document::new(f[0].trim(), f[1], lang));
    }
    Collection::from_documents(docs).with_context(|| format!("reading {}", path.display())).data()
}

fn index_sparse(mut cfg: Config, a: crate::IndexSparseArgs) -> Res<()> {
    set(&mut cfg.bm25.k1, a.k1);
    set(&mut cfg.bm25.b, a.b);
    let collection = load_corpus(&a.corpus)?;
    let index = SparseIndex::build(&collection, cfg.bm25);
    write_atomic(&a.output, |w| {
        let tmp = a.output.with_extension("build");
        index.save(&tmp)?;
        let bytes = fs::read(&tmp);
        let _ = fs::remove_file(&tmp);
        w.write_all(&bytes?)?;
        Ok(())
    })
    .with_context(|| format!("writing {}", a.output.display()))
    .data()?;
    write_manifest(
        "index-sparse",
        &cfg,
        &[&a.corpus],
        &[&a.output],
        json!({"documents": index.doc_count(), "vocabulary": index.vocab_size()}),
    )
    .data()?;
    eprintln!("indexed {} documents, {} terms", index.doc_count(), index.vocab_size());
    Ok(())
}

fn index_plaid(mut cfg: Config, a: crate::IndexPlaidArgs) -> Res<()> {
    if a.k.is_some() {
        cfg.plaid.k = a.k;
    }
    set(&mut cfg.plaid.kmeans_iters, a.kmeans_iters);
    let collection = load_corpus(&a.corpus)?;
    let prov = provider(&cfg, &cfg.encoder)?;
    let params = PlaidBuildParams {
        k: cfg.plaid.k,
        kmeans_iters: cfg.plaid.kmeans_iters,
        max_training_tokens: cfg.plaid.max_training_tokens,
        seed: cfg.seed,
    };
    let index = build_plaid(&collection, prov.as_ref(), &cfg.encoder, &params).data()?;
    write_dir_atomic(&a.output, |dir| Ok(save_index(&index, dir)?))
        .with_context(|| format!("writing {}", a.output.display()))
        .data()?;
    let summary = json!({
        "documents": index.n_docs(),
        "tokens": index.n_tokens(),
        "centroids": index.centroids().k(),
        "alpha": index.alpha(),
    });
    write_manifest("index-plaid", &cfg, &with_embeddings(&cfg, &[&a.corpus]), &[&a.output], summary).data()?;
    eprintln!(
        "indexed {} documents, {} tokens, {} centroids",
        index.n_docs(),
        index.n_tokens(),
        index.centroids().k()
    );
    Ok(())
}

fn search_sparse(
    mut cfg: Config,
    index_path: PathBuf,
    io: crate::TopicsOut,
    rm3: Option<clirkit::sparse::Rm3Params>,
) -> Res<()> {
    set(&mut cfg.search.k, io.k);
    require_file(&index_path)?;
    let index = SparseIndex::load(&index_path)
        .with_context(|| format!("reading {}", index_path.display()))
        .data()?;
    let topics = read_topics(&io.topics)?;
    let k = cfg.search.k;
    let results: Vec<(String, Vec<Hit>)> = topics
        .iter()
        .map(|(id, q)| {
            let terms = tokenize(q);
            let hits = match &rm3 {
                None => bm25_search(&index, &terms, k),
                Some(p) => weighted_search(&index, &rm3_expand(&index, &terms, p), k),
            };
            (id.clone(), hits)
        })
        .collect();
    let (command, tag) = if rm3.is_some() { ("search-rm3", "rm3") } else { ("search-bm25", "bm25") };
    write_run_file(&io.output, &results, tag)?;
    write_manifest(command, &cfg, &[&index_path, &io.topics], &[&io.output], json!({"topics": topics.len()})).data()
}

fn search_plaid_cmd(mut cfg: Config, a: crate::PlaidSearchArgs) -> Res<()> {
    set(&mut cfg.search.k, a.io.k);
    set(&mut cfg.search.n_probe, a.n_probe);
    if a.n_candidates.is_some() {
        cfg.search.n_candidates = a.n_candidates;
    }
    let index_dir = &a.index;
    require_file(index_dir)?;
    let index = load_index(index_dir).with_context(|| format!("reading {}", index_dir.display())).data()?;
    let enc = index.config().clone();
    let prov = provider(&cfg, &enc)?;
    let k = cfg.search.k;
    let params = SearchParams {
        k,
        n_probe: cfg.search.n_probe,
        n_candidates: cfg.search.n_candidates.unwrap_or_else(|| SearchParams::new(k).n_candidates),
    };
    params.validate().usage()?;
    let topics = read_topics(&a.io.topics)?;
    let mut results = Vec::with_capacity(topics.len());
    for (id, q) in &topics {
        let hits = search_plaid(&index, prov.as_ref(), q, &params).data()?;
        results.push((id.clone(), hits));
    }
    write_run_file(&a.io.output, &results, "plaid")?;

    let mut summary = json!({"topics": topics.len(), "params": params});
    let mut inputs = with_embeddings(&cfg, &[index_dir.as_path(), a.io.topics.as_path()]);
    if let Some(corpus_path) = &a.compare_exact {
        let collection = load_corpus(corpus_path)?;
        let exact = ExactSearcher::new(&collection, prov.as_ref(), &enc);
        let total: f64 = results
            .iter()
            .zip(&topics)
            .map(|((_, hits), (_, q))| overlap_recall(hits, &exact.search(q, k), k))
            .sum();
        let recall = if topics.is_empty() { 1.0 } else { total / topics.len() as f64 };
        println!("recall@{k} vs exact: {recall:.4}");
        summary["recall_vs_exact"] = json!(recall);
        inputs.push(corpus_path.as_path());
    }
    write_manifest("search-plaid", &cfg, &inputs, &[&a.io.output], summary).data()
}

fn search_exact_cmd(mut cfg: Config, a: crate::ExactSearchArgs) -> Res<()> {
    set(&mut cfg.search.k, a.io.k);
    let collection = load_corpus(&a.corpus)?;
    let prov = provider(&cfg, &cfg.encoder)?;
    let exact = ExactSearcher::new(&collection, prov.as_ref(), &cfg.encoder);
    let topics = read_topics(&a.io.topics)?;
    let results: Vec<(String, Vec<Hit>)> =
        topics.iter().map(|(id, q)| (id.clone(), exact.search(q, cfg.search.k))).collect();
    write_run_file(&a.io.output, &results, "exact")?;
    write_manifest(
        "search-exact",
        &cfg,
        &with_embeddings(&cfg, &[&a.corpus, &a.io.topics]),
        &[&a.io.output],
        json!({"topics": topics.len()}),
    )
    .data()
}

fn mine(mut cfg: Config, a: crate::MinePairsArgs) -> Res<()> {
    set(&mut cfg.mining.min_query_doc_chars, a.min_query_doc_chars);
    cfg.mining.validate().usage()?;
    let collection = load_corpus(&a.corpus)?;
    let index = match &a.index {
        Some(p) => {
            require_file(p)?;
            let index = SparseIndex::load(p).with_context(|| format!("reading {}", p.display())).data()?;
            if index.doc_count() != collection.len() || (0..collection.len()).any(|i| index.docid(i) != collection.documents()[i].docid) {
                return fail(Kind::Data, anyhow!("{} was not built over {}", p.display(), a.corpus.display()));
            }
            index
        }
        None => SparseIndex::build(&collection, cfg.bm25),
    };
    let pairs = mine_pairs(&index, &collection, &cfg.mining);
    write_jsonl(&a.output, &pairs)?;
    let mut inputs: Vec<&Path> = vec![&a.corpus];
    inputs.extend(a.index.as_deref());
    write_manifest("mine-pairs", &cfg, &inputs, &[&a.output], json!({"pairs": pairs.len()})).data()?;
    eprintln!("mined {} pairs", pairs.len());
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn gen_queries(cfg: Config, a: crate::GenQueriesArgs) -> Res<()> {
    let collection = load_corpus(&a.corpus)?;
    let mut pairs: Vec<MinedPair> = read_jsonl_items(&a.pairs)?;
    if let Some(n) = a.limit {
        pairs.truncate(n);
    }
    let client: Box<dyn ChatClient> = match &a.mock {
        Some(path) => {
            require_file(path)?;
            let body = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).data()?;
            Box::new(MockChatClient::fixed(body))
        }
        None => {
            let http = HttpChatConfig {
                url: cfg.llm.url.clone(),
                model: cfg.llm.model.clone(),
                api_key: None,
                timeout_secs: cfg.llm.timeout_secs,
            }
            .with_env();
            Box::new(HttpChatClient::new(http).usage()?)
        }
    };
    let generation = generate_examples(client.as_ref(), &pairs, &collection, &cfg.llm.requests);
    let responses_path = sibling(&a.output, ".responses.jsonl");
    let failures_path = sibling(&a.output, ".failures.jsonl");
    if !pairs.is_empty() && generation.responses.is_empty() {
        let first = generation.failures.first().map(|f| f.error.clone()).unwrap_or_default();
        return fail(
            Kind::External,
            anyhow!("no response received for any of {} pairs (first error: {first})", pairs.len()),
        );
    }
    write_jsonl(&a.output, &generation.examples)?;
    write_jsonl(&failures_path, &generation.failures)?;
    write_jsonl(&responses_path, &generation.responses)?;
    let mut inputs: Vec<&Path> = vec![&a.corpus, &a.pairs];
    inputs.extend(a.mock.as_deref());
    let summary = json!({
        "pairs": pairs.len(),
        "examples": generation.examples.len(),
        "failures": generation.failures.len(),
    });
    write_manifest(
        "gen-queries",
        &cfg,
        &inputs,
        &[&a.output, &responses_path, &failures_path],
        summary,
    )
    .data()?;
    eprintln!(
        "generated {} examples from {} pairs ({} failed)",
        generation.examples.len(),
        pairs.len(),
        generation.failures.len()
    );
    Ok(())
}

fn qc(mut cfg: Config, a: crate::QcArgs) -> Res<()> {
    set(&mut cfg.qc.margin, a.margin);
    if !(cfg.qc.margin >= 0.0) {
        return fail(Kind::Usage, anyhow!("margin must be non-negative"));
    }
    let collection = load_corpus(&a.corpus)?;
    let examples: Vec<GeneratedExample> = read_jsonl_items(&a.examples)?;
    let scorer: Box<dyn RelevanceScorer> = match &a.scorer_cmd {
        Some(cmd) if !cmd.is_empty() => Box::new(SubprocessScorer::spawn(&cmd[0], &cmd[1..]).external()?),
        _ => Box::new(StubScorer),
    };
    let (kept, report) = apply_qc(&examples, &collection, scorer.as_ref(), &cfg.qc).external()?;
    write_jsonl(&a.output, &kept)?;
    let scorer_name = match &a.scorer_cmd {
        Some(cmd) => cmd.join(" "),
        None => "stub".into(),
    };
    write_manifest(
        "qc",
        &cfg,
        &[&a.corpus, &a.examples],
        &[&a.output],
        json!({"report": report, "scorer": scorer_name}),
    )
    .data()?;
    eprintln!(
        "kept {} of {} examples ({} banned word, {} margin)",
        report.kept, report.input, report.banned, report.margin
    );
    Ok(())
}

fn make_triples(cfg: Config, a: crate::MakeTriplesArgs) -> Res<()> {
    let collection = load_corpus(&a.corpus)?;
    let examples: Vec<GeneratedExample> = read_jsonl_items(&a.examples)?;
    let triples = examples_to_triples(&examples, &collection);
    if triples.len() != examples.len() {
        return fail(
            Kind::Data,
            anyhow!("{} examples name docids missing from the collection", examples.len() - triples.len()),
        );
    }
    write_atomic(&a.output, |w| Ok(write_triples(w, &triples)?))
        .with_context(|| format!("writing {}", a.output.display()))
        .data()?;
    write_manifest("make-triples", &cfg, &[&a.corpus, &a.examples], &[&a.output], json!({"triples": triples.len()}))
        .data()
}

#[derive(Serialize)]
struct TripleCheck {
    line: usize,
    max_rel_error: f64,
    checked: usize,
    excluded: usize,
}

fn grad_check_cmd(mut cfg: Config, a: crate::GradCheckArgs) -> Res<()> {
    set(&mut cfg.grad_check.epsilon, a.epsilon);
    set(&mut cfg.grad_check.entries, a.entries);
    set(&mut cfg.grad_check.max_triples, a.max_triples);
    set(&mut cfg.grad_check.demo_steps, a.demo_steps);
    let g = cfg.grad_check.clone();
    if !(g.epsilon > 0.0) {
        return fail(Kind::Usage, anyhow!("epsilon must be positive"));
    }
    require_file(&a.triples)?;
    let mut triples = load_triples(&a.triples)
        .with_context(|| format!("reading {}", a.triples.display()))
        .data()?;
    triples.truncate(g.max_triples);
    let enc = ToyEncoder::perturbed_identity(cfg.encoder.dim, g.init_scale, cfg.seed);
    let checks: Vec<TripleCheck> = triples
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let r = grad_check(&enc, t, &cfg.encoder, g.epsilon, g.entries, cfg.seed.wrapping_add(i as u64));
            TripleCheck {
                line: i + 1,
                max_rel_error: r.max_rel_error,
                checked: r.checked,
                excluded: r.excluded,
            }
        })
        .collect();
    let max_rel_error = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    let demo = if g.demo_steps > 0 {
        let mut trained = enc.clone();
        train_demo(&mut trained, &triples, &cfg.encoder, g.learning_rate, g.demo_steps)
    } else {
        Vec::new()
    };
    let report = json!({
        "max_rel_error": max_rel_error,
        "epsilon": g.epsilon,
        "triples": checks,
        "demo_loss": demo,
    });
    write_atomic(&a.output, |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w)?;
        Ok(())
    })
    .with_context(|| format!("writing {}", a.output.display()))
    .data()?;
    write_manifest("grad-check", &cfg, &[&a.triples], &[&a.output], json!({"max_rel_error": max_rel_error})).data()?;
    println!("max relative error: {max_rel_error:.3e} over {} triples", checks.len());
    Ok(())
}

fn eval(a: crate::EvalArgs) -> Res<()> {
    let metrics: Vec<Metric> = a.metric.iter().map(|m| m.parse()).collect::<Result<_, _>>().usage()?;
    let gain = match a.gain {
        GainArg::Linear => Gain::Linear,
        GainArg::Exponential => Gain::Exponential,
    };
    require_file(&a.run)?;
    require_file(&a.qrels)?;
    let run = load_run(&a.run).with_context(|| format!("reading {}", a.run.display())).data()?;
    let qrels = load_qrels(&a.qrels).with_context(|| format!("reading {}", a.qrels.display())).data()?;
    let mut table = String::new();
    for m in &metrics {
        let scores = evaluate(&run, &qrels, *m, gain);
        for (topic, v) in &scores.per_topic {
            table.push_str(&format!("{m}\t{topic}\t{v:.4}\n"));
        }
        table.push_str(&format!("{m}\tall\t{:.4}\n", scores.mean));
    }
    print!("{table}");
    if let Some(out) = &a.output {
        write_atomic(out, |w| Ok(w.write_all(table.as_bytes())?))
            .with_context(|| format!("writing {}", out.display()))
            .data()?;
        let cfg = Config::default();
        write_manifest("eval", &cfg, &[&a.run, &a.qrels], &[out], json!({"metrics": a.metric})).data()?;
    }
    Ok(())
}
