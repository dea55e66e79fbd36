use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::ranking::Hit;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("topic {topic}: {message}")]
    InvalidRun { topic: String, message: String },
}

fn malformed(line: usize, message: impl Into<String>) -> EvalError {
    EvalError::Malformed {
        line,
        message: message.into(),
    }
}

/// Relevance grades by topic, then docid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    topics: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false (and keeps the old grade) if the pair is already judged.
    pub fn insert(&mut self, topic: &str, docid: &str, grade: u32) -> bool {
        let t = self.topics.entry(topic.to_string()).or_default();
        if t.contains_key(docid) {
            return false;
        }
        t.insert(docid.to_string(), grade);
        true
    }

    pub fn topics(&self) -> impl Iterator<Item = &str> {
        self.topics.keys().map(String::as_str)
    }

    pub fn judgments(&self, topic: &str) -> Option<&BTreeMap<String, u32>> {
        self.topics.get(topic)
    }

    pub fn grade(&self, topic: &str, docid: &str) -> Option<u32> {
        self.topics.get(topic)?.get(docid).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }
}

/// Parses `topic iteration docid grade` lines.
pub fn read_qrels<R: BufRead>(reader: R) -> Result<Qrels, EvalError> {
    let mut q = Qrels::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 4 {
            return Err(malformed(n, format!("expected 4 fields, found {}", f.len())));
        }
        let grade: i64 = f[3].parse().map_err(|_| malformed(n, format!("grade {:?} is not an integer", f[3])))?;
        if grade < 0 {
            return Err(malformed(n, format!("negative grade {grade}")));
        }
        let grade = u32::try_from(grade).map_err(|_| malformed(n, format!("grade {grade} is too large")))?;
        if !q.insert(f[0], f[2], grade) {
            return Err(malformed(n, format!("duplicate judgment for {} / {}", f[0], f[2])));
        }
    }
    Ok(q)
}

pub fn load_qrels(path: impl AsRef<Path>) -> Result<Qrels, EvalError> {
    read_qrels(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub docid: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

/// Ranked lists by topic. Every list has ranks `1..=n`, non-increasing
/// scores and distinct docids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunFile {
    topics: BTreeMap<String, Vec<RunEntry>>,
}

impl RunFile {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a ranked list for a topic, replacing any earlier one.
    pub fn insert(&mut self, topic: &str, entries: Vec<RunEntry>) -> Result<(), EvalError> {
        validate(topic, &entries)?;
        self.topics.insert(topic.to_string(), entries);
        Ok(())
    }

    /// Ranked list from search hits, assumed already in rank order.
    pub fn insert_hits(&mut self, topic: &str, hits: &[Hit], tag: &str) -> Result<(), EvalError> {
        let entries = hits
            .iter()
            .enumerate()
            .map(|(i, h)| RunEntry {
                docid: h.docid.clone(),
                rank: i + 1,
                score: h.score,
                tag: tag.to_string(),
            })
            .collect();
        self.insert(topic, entries)
    }

    pub fn topics(&self) -> impl Iterator<Item = &str> {
        self.topics.keys().map(String::as_str)
    }

    pub fn ranking(&self, topic: &str) -> &[RunEntry] {
        self.topics.get(topic).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }
}

fn validate(topic: &str, entries: &[RunEntry]) -> Result<(), EvalError> {
    let err = |message: String| EvalError::InvalidRun {
        topic: topic.to_string(),
        message,
    };
    let mut seen = std::collections::HashSet::new();
    for (i, e) in entries.iter().enumerate() {
        if e.rank != i + 1 {
            return Err(err(format!("rank {} at position {}; ranks must run 1..n", e.rank, i + 1)));
        }
        if !e.score.is_finite() {
            return Err(err(format!("non-finite score for {}", e.docid)));
        }
        if i > 0 && e.score > entries[i - 1].score {
            return Err(err(format!("score rises at rank {}", e.rank)));
        }
        if !seen.insert(e.docid.as_str()) {
            return Err(err(format!("docid {} appears twice", e.docid)));
        }
    }
    Ok(())
}

/// Parses `topic Q0 docid rank score tag` lines. Lines of a topic may come
/// in any order; they are sorted by rank before validation.
pub fn read_run<R: BufRead>(reader: R) -> Result<RunFile, EvalError> {
    let mut grouped: BTreeMap<String, Vec<RunEntry>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 6 {
            return Err(malformed(n, format!("expected 6 fields, found {}", f.len())));
        }
        let rank: usize = f[3].parse().map_err(|_| malformed(n, format!("rank {:?} is not a positive integer", f[3])))?;
        let score: f64 = f[4].parse().map_err(|_| malformed(n, format!("score {:?} is not a number", f[4])))?;
        grouped.entry(f[0].to_string()).or_default().push(RunEntry {
            docid: f[2].to_string(),
            rank,
            score,
            tag: f[5].to_string(),
        });
    }
    let mut run = RunFile::new();
    for (topic, mut entries) in grouped {
        entries.sort_by_key(|e| e.rank);
        run.insert(&topic, entries)?;
    }
    Ok(run)
}

pub fn load_run(path: impl AsRef<Path>) -> Result<RunFile, EvalError> {
    read_run(BufReader::new(File::open(path)?))
}

/// Writes topics in sorted order; scores use the shortest representation
/// that parses back to the same value.
pub fn write_run<W: Write>(mut w: W, run: &RunFile) -> std::io::Result<()> {
    for (topic, entries) in &run.topics {
        for e in entries {
            writeln!(w, "{topic} Q0 {} {} {} {}", e.docid, e.rank, e.score, e.tag)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_round_trip() {
        let text = "1 Q0 a 1 2.5 t\n1 Q0 b 2 0.1 t\n2 Q0 c 1 -0.3333333333333333 t\n";
        let run = read_run(text.as_bytes()).unwrap();
        assert_eq!(run.len(), 2);
        let mut out = Vec::new();
        write_run(&mut out, &run).unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap(), text);
        assert_eq!(read_run(out.as_slice()).unwrap(), run);
    }

    #[test]
    fn lines_are_sorted_by_rank() {
        let run = read_run("t Q0 b 2 1 x\nt Q0 a 1 2 x\n".as_bytes()).unwrap();
        assert_eq!(run.ranking("t")[0].docid, "a");
    }

    #[test]
    fn invalid_runs_name_the_topic() {
        let e = read_run("7 Q0 a 1 1 x\n7 Q0 b 2 3 x\n".as_bytes()).unwrap_err();
        assert!(matches!(&e, EvalError::InvalidRun { topic, .. } if topic == "7"));
        assert!(e.to_string().starts_with("topic 7"));
        assert!(read_run("7 Q0 a 1 1 x\n7 Q0 b 3 0 x\n".as_bytes()).is_err());
        assert!(read_run("7 Q0 a 1 1 x\n7 Q0 a 2 0 x\n".as_bytes()).is_err());
        assert!(matches!(read_run("7 Q0 a 1 x\n".as_bytes()), Err(EvalError::Malformed { line: 1, .. })));
    }

    #[test]
    fn qrels_errors() {
        let q = read_qrels("1 0 a 2\n1 0 b 0\n\n2 0 a 1\n".as_bytes()).unwrap();
        assert_eq!(q.grade("1", "a"), Some(2));
        assert_eq!(q.grade("2", "b"), None);
        assert!(matches!(read_qrels("1 0 a -1\n".as_bytes()), Err(EvalError::Malformed { line: 1, .. })));
        assert!(matches!(read_qrels("1 0 a 1\n1 0 a 2\n".as_bytes()), Err(EvalError::Malformed { line: 2, .. })));
        assert!(read_qrels("1 0 a\n".as_bytes()).is_err());
    }
}
