//! Document collections and the shared text analyzer.
//!
//! A [`Collection`] is loaded once from JSONL and never mutated afterwards;
//! every index in the crate refers to documents by their ordinal in it.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate docid {docid:?}")]
    DuplicateDocid { line: usize, docid: String },
    #[error("unknown language code {0:?} (expected one of ha, so, sw, yo, en)")]
    UnknownLang(String),
}

/// Languages handled by the toolkit, in round-robin order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    Ha,
    So,
    Sw,
    Yo,
    En,
}

impl Lang {
    pub const ALL: [Lang; 5] = [Lang::Ha, Lang::So, Lang::Sw, Lang::Yo, Lang::En];

    pub fn code(self) -> &'static str {
        match self {
            Lang::Ha => "ha",
            Lang::So => "so",
            Lang::Sw => "sw",
            Lang::Yo => "yo",
            Lang::En => "en",
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Lang {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Lang::ALL
            .into_iter()
            .find(|l| l.code() == s)
            .ok_or_else(|| CorpusError::UnknownLang(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub docid: String,
    pub text: String,
    pub lang: Lang,
}

impl Document {
    pub fn new(docid: impl Into<String>, text: impl Into<String>, lang: Lang) -> Self {
        Self {
            docid: docid.into(),
            text: text.into(),
            lang,
        }
    }

    /// Length in Unicode scalar values.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

/// An ordered, immutable set of documents with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Collection {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Collection {
    /// Builds a collection, rejecting empty or duplicate docids.
    ///
    /// Docids end up as whitespace-delimited fields in TREC files, so they
    /// may not contain whitespace either.
    pub fn from_documents(docs: Vec<Document>) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            validate_docid(&d.docid).map_err(|message| CorpusError::Malformed {
                line: i + 1,
                message,
            })?;
            if by_id.insert(d.docid.clone(), i).is_some() {
                return Err(CorpusError::DuplicateDocid {
                    line: i + 1,
                    docid: d.docid.clone(),
                });
            }
        }
        Ok(Self { docs, by_id })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn lookup(&self, docid: &str) -> Option<usize> {
        self.by_id.get(docid).copied()
    }

    pub fn get(&self, ordinal: usize) -> Option<&Document> {
        self.docs.get(ordinal)
    }

    pub fn by_docid(&self, docid: &str) -> Option<&Document> {
        self.lookup(docid).map(|i| &self.docs[i])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.docs.iter()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for d in &self.docs {
            serde_json::to_writer(&mut out, d)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let io_err = |source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
        self.write_jsonl(&mut w).map_err(io_err)?;
        w.flush().map_err(io_err)
    }
}

impl<'a> IntoIterator for &'a Collection {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;

    fn into_iter(self) -> Self::IntoIter {
        self.docs.iter()
    }
}

fn validate_docid(docid: &str) -> Result<(), String> {
    if docid.is_empty() {
        return Err("empty docid".to_string());
    }
    if docid.chars().any(char::is_whitespace) {
        return Err(format!("docid {docid:?} contains whitespace"));
    }
    Ok(())
}

/// Parses JSONL records from any reader. Blank lines are skipped.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Collection, CorpusError> {
    let mut docs = Vec::new();
    let mut by_id = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        validate_docid(&doc.docid).map_err(|message| CorpusError::Malformed {
            line: lineno,
            message,
        })?;
        if by_id.insert(doc.docid.clone(), docs.len()).is_some() {
            return Err(CorpusError::DuplicateDocid {
                line: lineno,
                docid: doc.docid,
            });
        }
        docs.push(doc);
    }
    Ok(Collection { docs, by_id })
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Collection, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_jsonl(BufReader::new(file))
}

/// A lowercase, whitespace-free, non-empty token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Term(String);

impl Term {
    /// Wraps an already-normalized surface form. Returns `None` if it is
    /// empty or contains whitespace or uppercase characters.
    pub fn new(surface: impl Into<String>) -> Option<Self> {
        let s = surface.into();
        if s.is_empty() || s.chars().any(|c| c.is_whitespace() || c.is_uppercase()) {
            None
        } else {
            Some(Self(s))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Term {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

// Combining diacritics carry tone and vowel marks in Yoruba and must stay
// attached to their base letter.
fn is_combining_mark(c: char) -> bool {
    matches!(c as u32,
        0x0300..=0x036F | 0x1AB0..=0x1AFF | 0x1DC0..=0x1DFF | 0x20D0..=0x20FF | 0xFE20..=0xFE2F)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c)
}

/// Lowercases and splits on whitespace and punctuation (anything that is
/// not a letter, digit or combining mark). Apostrophes and hyphens split.
pub fn tokenize(text: &str) -> Vec<Term> {
    text.split(|c: char| !is_word_char(c))
        .filter(|frag| !frag.is_empty())
        .map(|frag| Term(frag.to_lowercase()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn terms(ts: &[Term]) -> Vec<&str> {
        ts.iter().map(Term::as_str).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert!(tokenize("").is_empty());
        assert_eq!(
            terms(&tokenize("President Buhari's leadership")),
            ["president", "buhari", "s", "leadership"]
        );
        assert_eq!(terms(&tokenize("a  b")), ["a", "b"]);
        assert_eq!(terms(&tokenize("well-known, ok?")), ["well", "known", "ok"]);
    }

    #[test]
    fn tokenize_keeps_yoruba_diacritics() {
        // "ọ̀rọ̀" spelled with combining grave accents
        let t = tokenize("O\u{323}\u{300}ro\u{323}\u{300} tuntun");
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].as_str(), "o\u{323}\u{300}ro\u{323}\u{300}");
    }

    #[test]
    fn load_examples() {
        let c = read_jsonl("".as_bytes()).unwrap();
        assert!(c.is_empty());

        let src = r#"{"docid":"a","text":"x","lang":"ha"}
{"docid":"b","text":"","lang":"yo"}
{"docid":"c","text":"z","lang":"en"}
"#;
        let c = read_jsonl(src.as_bytes()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(
            ["a", "b", "c"].map(|d| c.lookup(d).unwrap()),
            [0, 1, 2]
        );
    }

    #[test]
    fn duplicate_docid_is_reported() {
        let src = r#"{"docid":"d1","text":"x","lang":"ha"}
{"docid":"d2","text":"x","lang":"ha"}
{"docid":"d3","text":"x","lang":"ha"}
{"docid":"d1","text":"y","lang":"so"}
"#;
        let err = read_jsonl(src.as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateDocid { line: 4, .. }));
        assert!(err.to_string().contains("\"d1\""));
    }

    #[test]
    fn malformed_line_is_reported() {
        let src = "{\"docid\":\"a\",\"text\":\"x\",\"lang\":\"ha\"}\nnot json\n";
        let err = read_jsonl(src.as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 2, .. }));

        let src = "{\"docid\":\"a\",\"text\":\"x\",\"lang\":\"fr\"}\n";
        assert!(matches!(
            read_jsonl(src.as_bytes()).unwrap_err(),
            CorpusError::Malformed { line: 1, .. }
        ));
    }

    #[test]
    fn term_validation() {
        assert!(Term::new("").is_none());
        assert!(Term::new("a b").is_none());
        assert!(Term::new("Abc").is_none());
        assert_eq!(Term::new("[mask]").unwrap().as_str(), "[mask]");
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn lang() -> impl Strategy<Value = Lang> {
            prop::sample::select(Lang::ALL.to_vec())
        }

        proptest! {
            #[test]
            fn tokenize_is_idempotent_on_joined_output(s in "\\PC{0,80}") {
                let once = tokenize(&s);
                let joined = once.iter().map(Term::as_str).collect::<Vec<_>>().join(" ");
                prop_assert_eq!(tokenize(&joined), once);
            }

            #[test]
            fn jsonl_round_trip(texts in prop::collection::vec(("\\PC{0,40}", lang()), 0..12)) {
                let docs = texts
                    .into_iter()
                    .enumerate()
                    .map(|(i, (t, l))| Document::new(format!("doc-{i}"), t, l))
                    .collect();
                let c = Collection::from_documents(docs).unwrap();
                let mut buf = Vec::new();
                c.write_jsonl(&mut buf).unwrap();
                let back = read_jsonl(buf.as_slice()).unwrap();
                prop_assert_eq!(back, c);
            }
        }
    }
}
