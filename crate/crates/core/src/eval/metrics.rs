use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::trec::{Qrels, RunFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// gain = grade
    #[default]
    Linear,
    /// gain = 2^grade - 1
    Exponential,
}

impl Gain {
    fn apply(self, grade: u32) -> f64 {
        match self {
            Gain::Linear => grade as f64,
            Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Ndcg(usize),
    Recall(usize),
    Judged(usize),
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown metric {0:?}; expected ndcg@k, recall@k (or r@k) or judged@k")]
pub struct MetricError(pub String);

impl FromStr for Metric {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MetricError(s.to_string());
        let (name, k) = s.split_once('@').ok_or_else(bad)?;
        let k: usize = k.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        match name.to_ascii_lowercase().as_str() {
            "ndcg" => Ok(Metric::Ndcg(k)),
            "recall" | "r" => Ok(Metric::Recall(k)),
            "judged" => Ok(Metric::Judged(k)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Ndcg(k) => write!(f, "ndcg@{k}"),
            Metric::Recall(k) => write!(f, "recall@{k}"),
            Metric::Judged(k) => write!(f, "judged@{k}"),
        }
    }
}

/// Per-topic values over the qrels topics, and their mean (0 when there are
/// no topics).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicScores {
    pub per_topic: BTreeMap<String, f64>,
    pub mean: f64,
}

fn over_topics(qrels: &Qrels, f: impl Fn(&str) -> f64) -> TopicScores {
    let per_topic: BTreeMap<String, f64> = qrels.topics().map(|t| (t.to_string(), f(t))).collect();
    let mean = if per_topic.is_empty() {
        0.0
    } else {
        per_topic.values().sum::<f64>() / per_topic.len() as f64
    };
    TopicScores { per_topic, mean }
}

/// Normalized discounted cumulative gain over the first `cutoff` ranks,
/// with unjudged documents counting as grade 0.
pub fn ndcg_at(run: &RunFile, qrels: &Qrels, cutoff: usize, gain: Gain) -> TopicScores {
    over_topics(qrels, |topic| {
        let judged = qrels.judgments(topic).expect("topic from qrels");
        let dcg: f64 = run
            .ranking(topic)
            .iter()
            .take(cutoff)
            .enumerate()
            .map(|(i, e)| gain.apply(judged.get(&e.docid).copied().unwrap_or(0)) / ((i + 2) as f64).log2())
            .sum();
        let mut grades: Vec<u32> = judged.values().copied().collect();
        grades.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = grades
            .iter()
            .take(cutoff)
            .enumerate()
            .map(|(i, &g)| gain.apply(g) / ((i + 2) as f64).log2())
            .sum();
        if idcg > 0.0 {
            dcg / idcg
        } else {
            0.0
        }
    })
}

/// Fraction of the topic's relevant (grade > 0) documents found in the
/// first `cutoff` ranks.
pub fn recall_at(run: &RunFile, qrels: &Qrels, cutoff: usize) -> TopicScores {
    over_topics(qrels, |topic| {
        let judged = qrels.judgments(topic).expect("topic from qrels");
        let relevant = judged.values().filter(|&&g| g > 0).count();
        if relevant == 0 {
            return 0.0;
        }
        let found = run
            .ranking(topic)
            .iter()
            .take(cutoff)
            .filter(|e| judged.get(&e.docid).is_some_and(|&g| g > 0))
            .count();
        found as f64 / relevant as f64
    })
}

/// Judged documents among the first `cutoff` ranks, divided by `cutoff`.
pub fn judged_at(run: &RunFile, qrels: &Qrels, cutoff: usize) -> TopicScores {
    over_topics(qrels, |topic| {
        let judged = qrels.judgments(topic).expect("topic from qrels");
        let hits = run
            .ranking(topic)
            .iter()
            .take(cutoff)
            .filter(|e| judged.contains_key(&e.docid))
            .count();
        hits as f64 / cutoff as f64
    })
}

pub fn evaluate(run: &RunFile, qrels: &Qrels, metric: Metric, gain: Gain) -> TopicScores {
    match metric {
        Metric::Ndcg(k) => ndcg_at(run, qrels, k, gain),
        Metric::Recall(k) => recall_at(run, qrels, k),
        Metric::Judged(k) => judged_at(run, qrels, k),
    }
}
