//! Paragraph realization and candidate scoring.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{render_acus, CompositionError, Ordering};
use crate::gateway::{GatewayError, Tag};
use crate::planning::{dedup_key, parse_list, Acu};
use crate::prompts;
use crate::sentence::split_text;
use crate::session::{Role, Session};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paragraph {
    pub text: String,
    /// Whether a bulleted first answer caused a second request.
    pub reprompted: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn has_list_markup(text: &str) -> bool {
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    lines.iter().any(|l| {
        l.starts_with("- ")
            || l.starts_with("* ")
            || l.starts_with("• ")
            || {
                let d = l.chars().take_while(char::is_ascii_digit).count();
                d > 0 && (l[d..].starts_with(". ") || l[d..].starts_with(") "))
            }
    })
}

fn flatten(text: &str) -> String {
    render_acus(parse_list(text).iter().map(String::as_str))
}

/// Write one paragraph from the ACUs in `ordering` order.
pub fn write_paragraph(
    session: &Session,
    ordering: &Ordering,
    acus: &[Acu],
    variant: &str,
) -> Result<Paragraph, CompositionError> {
    if !ordering.is_permutation_of(acus.len()) {
        return Err(CompositionError::Precondition("ordering is not a permutation of the ACUs".into()));
    }
    let ordered: Vec<&str> = ordering.permutation.iter().map(|&i| acus[i].text.as_str()).collect();
    let rendered = render_acus(ordered.iter().copied());
    let mut warnings = Vec::new();
    let mut reprompted = false;
    let mut text = session
        .chat(
            Role::Generator,
            Tag::Paragraph,
            prompts::paragraph_writing(&rendered),
            Some(variant.to_string()),
        )?
        .text;
    if has_list_markup(&text) {
        reprompted = true;
        text = session
            .chat(
                Role::Generator,
                Tag::Paragraph,
                prompts::paragraph_writing(&rendered),
                Some(format!("{variant}.retry1")),
            )?
            .text;
        if has_list_markup(&text) {
            warnings.push("paragraph still contained list markup after a reprompt; flattened".to_string());
            text = flatten(&text);
        }
    }
    let trimmed = text.trim();
    let single = if trimmed.contains('\n') {
        warnings.push("paragraph contained line breaks; joined".to_string());
        trimmed.split_whitespace().collect::<Vec<_>>().join(" ")
    } else {
        trimmed.to_string()
    };

    let sentences = split_text(&single);
    let first_ok = sentences.first().map(|s| dedup_key(s)) == ordered.first().map(|s| dedup_key(s));
    let last_ok = sentences.last().map(|s| dedup_key(s)) == ordered.last().map(|s| dedup_key(s));
    if !first_ok {
        warnings.push("paragraph does not open with the first ordered ACU".to_string());
    }
    if !last_ok {
        warnings.push("paragraph does not close with the last ordered ACU".to_string());
    }
    for w in &warnings {
        session.warn(format!("{variant}: {w}"));
    }
    Ok(Paragraph {
        text: single,
        reprompted,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ScoreParseError {
    #[error("expected exactly two numbers, found {0} tokens")]
    TokenCount(usize),
    #[error("not a number: {0:?}")]
    NotNumeric(String),
    #[error("score outside [0, 1]: {0}")]
    OutOfRange(String),
}

/// Parse a scorer reply of exactly two whitespace-separated reals in [0, 1].
pub fn parse_scores(text: &str) -> Result<(f64, f64), ScoreParseError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() != 2 {
        return Err(ScoreParseError::TokenCount(tokens.len()));
    }
    let mut out = [0.0; 2];
    for (slot, tok) in out.iter_mut().zip(&tokens) {
        let v: f64 = tok.parse().map_err(|_| ScoreParseError::NotNumeric(tok.to_string()))?;
        if !v.is_finite() {
            return Err(ScoreParseError::NotNumeric(tok.to_string()));
        }
        if !(0.0..=1.0).contains(&v) {
            return Err(ScoreParseError::OutOfRange(tok.to_string()));
        }
        *slot = v;
    }
    Ok((out[0], out[1]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreAttempt {
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOutcome {
    /// (coherence, coverage); `None` when every attempt was malformed.
    pub scores: Option<(f64, f64)>,
    pub attempts: Vec<ScoreAttempt>,
}

/// Score with up to `retry_limit` retries after a malformed reply. Retry n
/// uses variant `{variant}.r{n}` so it is a distinct request.
pub fn score_candidate(
    session: &Session,
    source: &str,
    candidate: &str,
    variant: &str,
    retry_limit: u32,
) -> Result<ScoreOutcome, GatewayError> {
    let mut attempts = Vec::new();
    for n in 0..=retry_limit {
        let v = if n == 0 {
            variant.to_string()
        } else {
            format!("{variant}.r{n}")
        };
        let reply = session.chat(Role::Scorer, Tag::Evaluate, prompts::evaluation(source, candidate), Some(v))?;
        match parse_scores(&reply.text) {
            Ok(scores) => {
                attempts.push(ScoreAttempt {
                    response: reply.text,
                    error: None,
                });
                return Ok(ScoreOutcome {
                    scores: Some(scores),
                    attempts,
                });
            }
            Err(e) => attempts.push(ScoreAttempt {
                response: reply.text,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(ScoreOutcome { scores: None, attempts })
}
