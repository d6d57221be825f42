//! Sentence ordering, paragraph writing, scoring and the search over them.

pub mod ordering;
pub mod paragraph;
pub mod search;

use thiserror::Error;

use crate::gateway::{GatewayError, Tag};
use crate::prompts;
use crate::session::{Role, Session};
use crate::thread::DocumentSet;

pub use ordering::{
    is_permutation, parse_ordering, propose_ordering, repair_ordering, similarity_matrix, Ordering,
    ProposedOrdering, Provenance,
};
pub use paragraph::{parse_scores, score_candidate, write_paragraph, Paragraph, ScoreOutcome, ScoreParseError};
pub use search::{argmax_first, tot_search, CandidateRecord, Combiner, StepTrace, ToTConfig, ToTTrace};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CompositionError {
    #[error("no ACUs to compose")]
    NoAcus,
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("every candidate of step {step} was discarded")]
    StepFailed { step: usize, trace: Box<ToTTrace> },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

fn ends_sentence(text: &str) -> bool {
    text.trim_end_matches(['"', '\'', ')', ']', '\u{201d}', '\u{2019}'])
        .ends_with(['.', '!', '?'])
}

/// Join sentences into one continuous text, adding a period where missing.
pub fn render_acus<'a>(texts: impl IntoIterator<Item = &'a str>) -> String {
    texts
        .into_iter()
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            if ends_sentence(t) {
                t.to_string()
            } else {
                format!("{t}.")
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Single-call baseline with the plain expert-summarizer instruction.
pub fn vanilla_summarize(session: &Session, docs: &DocumentSet) -> Result<String, CompositionError> {
    if docs.is_empty() {
        return Err(CompositionError::Precondition("document set is empty".into()));
    }
    Ok(session
        .chat(Role::Generator, Tag::Vanilla, prompts::vanilla(docs), None)?
        .text)
}
