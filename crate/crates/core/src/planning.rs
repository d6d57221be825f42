//! Content planning: aspects, then atomic content units (ACUs) per aspect.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{cosine, CacheKey, GatewayError, Tag};
use crate::prompts;
use crate::session::{Role, Session};
use crate::thread::DocumentSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aspect {
    pub label: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acu {
    pub id: usize,
    pub text: String,
    pub aspect_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningResult {
    pub aspects: Vec<Aspect>,
    pub acus: Vec<Acu>,
    /// ACU count before deduplication.
    pub raw_acu_count: usize,
    /// Cache keys of the aspect call followed by one ACU call per aspect.
    pub raw_responses: Vec<CacheKey>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanningOptions {
    /// Also merge ACUs whose embeddings reach this cosine (off when `None`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_dedup: Option<f64>,
}

pub const SEMANTIC_DEDUP_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PlanningError {
    #[error("document set is empty")]
    EmptyInput,
    #[error("aspect extraction produced no aspects")]
    NoAspects,
    #[error("no aspect produced any ACU")]
    NoAcus,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

fn strip_bullet(line: &str) -> Option<&str> {
    for marker in ["- ", "* ", "• ", "\u{2013} "] {
        if let Some(rest) = line.strip_prefix(marker) {
            return Some(rest);
        }
    }
    if matches!(line, "-" | "*" | "•") {
        return Some("");
    }
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &line[digits..];
        for sep in [". ", ") ", ".\t", ")\t"] {
            if let Some(r) = rest.strip_prefix(sep) {
                return Some(r);
            }
        }
    }
    None
}

/// Trim and collapse internal whitespace.
pub fn normalize_label(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parse a newline- or bullet-delimited list. When any line carries a
/// bullet, unbulleted lines (preambles, headings) are dropped.
pub fn parse_list(text: &str) -> Vec<String> {
    let lines: Vec<(bool, String)> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| match strip_bullet(l) {
            Some(rest) => (true, rest.to_string()),
            None => (false, l.to_string()),
        })
        .collect();
    let any_bullet = lines.iter().any(|(b, _)| *b);
    lines
        .into_iter()
        .filter(|(b, _)| *b || !any_bullet)
        .map(|(_, l)| normalize_label(&l.replace("**", "")))
        .filter(|l| !l.is_empty())
        .collect()
}

/// Key used by [`deduplicate`]: case-folded, trimmed, whitespace-collapsed,
/// with trailing punctuation removed.
pub fn dedup_key(text: &str) -> String {
    normalize_label(text)
        .to_lowercase()
        .trim_end_matches(|c: char| matches!(c, '.' | '!' | '?' | ';' | ':' | ',') || c.is_whitespace())
        .to_string()
}

fn parse_aspects(text: &str) -> Vec<Aspect> {
    let mut seen = HashSet::new();
    parse_list(text)
        .into_iter()
        .filter(|l| seen.insert(l.to_lowercase()))
        .enumerate()
        .map(|(index, label)| Aspect { label, index })
        .collect()
}

pub fn extract_aspects(session: &Session, docs: &DocumentSet) -> Result<(Vec<Aspect>, CacheKey), PlanningError> {
    if docs.is_empty() {
        return Err(PlanningError::EmptyInput);
    }
    let reply = session.chat(Role::Generator, Tag::Aspect, prompts::aspect_extraction(docs), None)?;
    let aspects = parse_aspects(&reply.text);
    if aspects.is_empty() {
        return Err(PlanningError::NoAspects);
    }
    Ok((aspects, reply.key))
}

/// ACUs for one aspect; ids are positions within this aspect's list.
pub fn generate_acus(
    session: &Session,
    docs: &DocumentSet,
    aspect: &Aspect,
) -> Result<(Vec<Acu>, CacheKey), PlanningError> {
    let reply = session.chat(
        Role::Generator,
        Tag::Acu,
        prompts::acu_generation(docs, &aspect.label),
        None,
    )?;
    let acus: Vec<Acu> = parse_list(&reply.text)
        .into_iter()
        .enumerate()
        .map(|(id, text)| Acu {
            id,
            text,
            aspect_index: aspect.index,
        })
        .collect();
    if acus.is_empty() {
        session.warn(format!("aspect {:?} produced no ACUs", aspect.label));
    }
    Ok((acus, reply.key))
}

/// Drop ACUs equal to an earlier one under [`dedup_key`]; renumber 0..r-1.
pub fn deduplicate(acus: &[Acu]) -> Vec<Acu> {
    let mut seen = HashSet::new();
    acus.iter()
        .filter(|a| seen.insert(dedup_key(&a.text)))
        .enumerate()
        .map(|(id, a)| Acu { id, ..a.clone() })
        .collect()
}

/// Drop ACUs whose embedding reaches `threshold` cosine with a kept earlier one.
pub fn semantic_deduplicate(session: &Session, acus: &[Acu], threshold: f64) -> Result<Vec<Acu>, GatewayError> {
    if acus.len() < 2 {
        return Ok(deduplicate(acus));
    }
    let texts: Vec<String> = acus.iter().map(|a| a.text.clone()).collect();
    let vectors = session.embed(&texts)?;
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..acus.len() {
        if kept.iter().all(|&j| cosine(&vectors[i], &vectors[j]) < threshold) {
            kept.push(i);
        }
    }
    let survivors: Vec<Acu> = kept.into_iter().map(|i| acus[i].clone()).collect();
    Ok(deduplicate(&survivors))
}

/// Aspects, concurrent per-aspect ACU generation, deduplication.
pub fn plan(session: &Session, docs: &DocumentSet, options: PlanningOptions) -> Result<PlanningResult, PlanningError> {
    let (aspects, aspect_key) = extract_aspects(session, docs)?;
    let results: Vec<(Session, Result<(Vec<Acu>, CacheKey), PlanningError>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = aspects
            .iter()
            .map(|aspect| {
                let fork = session.fork();
                scope.spawn(move || {
                    let r = generate_acus(&fork, docs, aspect);
                    (fork, r)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("ACU worker panicked")).collect()
    });

    let mut raw_responses = vec![aspect_key];
    let mut all = Vec::new();
    let mut first_err = None;
    for (fork, result) in results {
        session.absorb(fork);
        match result {
            Ok((acus, key)) => {
                raw_responses.push(key);
                all.extend(acus);
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    if all.is_empty() {
        return Err(PlanningError::NoAcus);
    }
    let raw_acu_count = all.len();
    let acus = match options.semantic_dedup {
        Some(t) => semantic_deduplicate(session, &deduplicate(&all), t)?,
        None => deduplicate(&all),
    };
    if acus.len() < aspects.len() {
        session.warn(format!(
            "{} ACUs for {} aspects (fewer ACUs than aspects)",
            acus.len(),
            aspects.len()
        ));
    }
    Ok(PlanningResult {
        aspects,
        acus,
        raw_acu_count,
        raw_responses,
    })
}
