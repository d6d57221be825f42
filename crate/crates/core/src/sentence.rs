//! Rule-based sentence segmentation.
//!
//! Boundaries fall after a run of `.`, `!` or `?` (optionally followed by
//! closing quotes or brackets) when whitespace or end of text follows, and at
//! every line break. A period does not end a sentence when the word before it
//! is a known abbreviation or a single capital letter (initials, emoticons
//! such as `;D.`). The rule set is versioned through [`SPLITTER_ID`] so
//! sentence indices stay reproducible across releases.

use serde::{Deserialize, Serialize};

use crate::thread::DocumentSet;

/// Identifier of the current rule set; recorded in run manifests.
pub const SPLITTER_ID: &str = "rule-v1";

const ABBREVIATIONS: &[&str] = &[
    "e.g", "i.e", "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "approx", "inc",
    "ltd", "u.s", "fig", "cf",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceUnit {
    pub text: String,
    pub doc_index: usize,
    pub sent_index: usize,
    pub global_index: usize,
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn guarded_period(before: &str) -> bool {
    let word = before
        .rsplit(|c: char| c.is_whitespace() || c == '(' || c == '"')
        .next()
        .unwrap_or("");
    let bare = word.trim_start_matches(|c: char| !c.is_alphanumeric());
    if bare.is_empty() {
        return false;
    }
    let mut chars = bare.chars();
    let first = chars.next().unwrap();
    if chars.next().is_none() && first.is_uppercase() {
        return true;
    }
    let lower = bare.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

/// Split one text block into trimmed sentences.
pub fn split_text(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes_len = text.len();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;

    let push = |from: usize, to: usize, out: &mut Vec<String>| {
        let piece = text[from..to].trim();
        if !piece.is_empty() {
            out.push(piece.to_string());
        }
    };

    while i < chars.len() {
        let (pos, c) = chars[i];
        if c == '\n' {
            push(start, pos, &mut out);
            start = pos + 1;
            i += 1;
            continue;
        }
        if is_terminator(c) {
            let run_start = i;
            let mut j = i;
            while j < chars.len() && is_terminator(chars[j].1) {
                j += 1;
            }
            while j < chars.len() && CLOSERS.contains(&chars[j].1) {
                j += 1;
            }
            let end = if j < chars.len() { chars[j].0 } else { bytes_len };
            let at_gap = j >= chars.len() || chars[j].1.is_whitespace();
            let single_period = j - run_start == 1 && c == '.';
            let guarded = single_period && guarded_period(&text[start..pos]);
            if at_gap && !guarded {
                push(start, end, &mut out);
                start = end;
            }
            i = j.max(i + 1);
            continue;
        }
        i += 1;
    }
    push(start, bytes_len, &mut out);
    out
}

/// Segment every document; `global_index` runs over the whole set.
pub fn split_sentences(doc_set: &DocumentSet) -> Vec<SentenceUnit> {
    let mut units = Vec::new();
    for (doc_index, doc) in doc_set.documents().iter().enumerate() {
        for (sent_index, text) in split_text(doc).into_iter().enumerate() {
            let global_index = units.len();
            units.push(SentenceUnit {
                text,
                doc_index,
                sent_index,
                global_index,
            });
        }
    }
    units
}
