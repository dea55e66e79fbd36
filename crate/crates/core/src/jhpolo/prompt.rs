use serde::Deserialize;
use thiserror::Error;

use crate::corpus::Document;

/// Queries requested per document.
pub const QUERIES_PER_DOC: usize = 5;

const TEMPLATE: &str = "You must write questions for a news quiz to appear in the newspaper. A news quiz asks about events in the news, NOT about news articles. Here are two articles that appeared in this week's news: <<{first}>> <<{second}>> For each article give five factual news quiz English questions, one per line with no extraneous words, that are answered by the events described in that document and are not answered by the events described in the other document. The quiz questions must never refer to individual news articles, or assume the quiz-taker has seen those articles. Precede the first five with DOCA: and the second with DOCB:";

/// Fills the quiz-question template with the two document texts.
pub fn build_prompt(first: &Document, second: &Document) -> String {
    let (head, rest) = TEMPLATE.split_once("{first}").expect("template has {first}");
    let (middle, tail) = rest.split_once("{second}").expect("template has {second}");
    let mut out = String::with_capacity(TEMPLATE.len() + first.text.len() + second.text.len());
    out.push_str(head);
    out.push_str(&first.text);
    out.push_str(middle);
    out.push_str(&second.text);
    out.push_str(tail);
    out
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("response is not a chat completion: {0}")]
    Envelope(String),
    #[error("missing {0} marker")]
    MissingMarker(&'static str),
    #[error("DOCB: appears before DOCA:")]
    MarkerOrder,
    #[error("no queries in the {0} block")]
    EmptyBlock(&'static str),
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

/// Extracts `choices[0].message.content` from a chat-completion body.
pub fn response_content(body: &str) -> Result<String, ParseError> {
    let c: Completion = serde_json::from_str(body).map_err(|e| ParseError::Envelope(e.to_string()))?;
    c.choices
        .into_iter()
        .next()
        .map(|ch| ch.message.content)
        .ok_or_else(|| ParseError::Envelope("no choices".into()))
}

/// Splits a chat-completion body into the DOCA and DOCB query lists.
pub fn parse_response(body: &str) -> Result<(Vec<String>, Vec<String>), ParseError> {
    parse_content(&response_content(body)?)
}

/// As [`parse_response`] for the bare message content.
pub fn parse_content(content: &str) -> Result<(Vec<String>, Vec<String>), ParseError> {
    let a = content.find("DOCA:").ok_or(ParseError::MissingMarker("DOCA:"))?;
    let b = content.find("DOCB:").ok_or(ParseError::MissingMarker("DOCB:"))?;
    if b < a {
        return Err(ParseError::MarkerOrder);
    }
    let first = block(&content[a + 5..b], "DOCA")?;
    let second = block(&content[b + 5..], "DOCB")?;
    Ok((first, second))
}

fn block(text: &str, name: &'static str) -> Result<Vec<String>, ParseError> {
    let mut queries: Vec<String> = text
        .lines()
        .map(|l| strip_number(l.trim()).trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    if queries.is_empty() {
        return Err(ParseError::EmptyBlock(name));
    }
    if queries.len() > QUERIES_PER_DOC {
        log::warn!(
            "{name} block has {} queries; keeping the first {QUERIES_PER_DOC}",
            queries.len()
        );
        queries.truncate(QUERIES_PER_DOC);
    }
    Ok(queries)
}

/// Removes a leading `12.` or `12)` list number.
fn strip_number(line: &str) -> &str {
    let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return r;
        }
    }
    line
}
