use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TripleError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// A query with one positive and one negative passage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub query: String,
    pub pos: String,
    pub neg: String,
}

impl Triple {
    pub fn new(query: impl Into<String>, pos: impl Into<String>, neg: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            pos: pos.into(),
            neg: neg.into(),
        }
    }
}

/// Streams `query\tpositive\tnegative` lines. Blank lines are not allowed;
/// every line must have exactly three non-empty fields.
pub fn read_triples<R: BufRead>(reader: R) -> impl Iterator<Item = Result<Triple, TripleError>> {
    reader.lines().enumerate().map(|(i, line)| {
        let line = line?;
        let line_no = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(TripleError::Malformed {
                line: line_no,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        if fields.iter().any(|f| f.trim().is_empty()) {
            return Err(TripleError::Malformed {
                line: line_no,
                message: "empty field".into(),
            });
        }
        Ok(Triple::new(fields[0], fields[1], fields[2]))
    })
}

pub fn load_triples(path: &Path) -> Result<Vec<Triple>, TripleError> {
    read_triples(BufReader::new(File::open(path)?)).collect()
}

/// Writes triples in the format read by [`read_triples`]; tabs and line
/// breaks inside fields are replaced by spaces.
pub fn write_triples<W: Write>(mut w: W, triples: &[Triple]) -> std::io::Result<()> {
    let clean = |s: &str| s.replace(['\t', '\n', '\r'], " ");
    for t in triples {
        writeln!(w, "{}\t{}\t{}", clean(&t.query), clean(&t.pos), clean(&t.neg))?;
    }
    Ok(())
}
