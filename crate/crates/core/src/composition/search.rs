//! Tree-of-Thoughts controller over orderings and paragraphs.
//!
//! Step `s` proposes `reorder_proposals` orderings (seeded by the previous
//! step's winning ordering after step 1), writes `paragraph_proposals`
//! paragraphs per ordering and scores each. Candidate `j * p + k` comes from
//! ordering `j`, proposal `k`. The step winner is the first candidate with
//! the largest combined score; the returned summary is the best candidate
//! over every step, earlier steps winning ties.

use serde::{Deserialize, Serialize};

use super::ordering::{propose_ordering, Ordering, Provenance};
use super::paragraph::{score_candidate, write_paragraph, ScoreAttempt};
use super::CompositionError;
use crate::planning::Acu;
use crate::session::Session;
use crate::thread::DocumentSet;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Combiner {
    #[default]
    Mean,
    Min,
    Max,
    /// `w * coherence + (1 - w) * coverage`.
    Weighted { coherence_weight: f64 },
}

impl Combiner {
    pub fn combine(self, coherence: f64, coverage: f64) -> f64 {
        match self {
            Combiner::Mean => (coherence + coverage) / 2.0,
            Combiner::Min => coherence.min(coverage),
            Combiner::Max => coherence.max(coverage),
            Combiner::Weighted { coherence_weight: w } => w * coherence + (1.0 - w) * coverage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToTConfig {
    pub steps: usize,
    pub reorder_proposals: usize,
    pub paragraph_proposals: usize,
    pub score_retry_limit: u32,
    pub combiner: Combiner,
}

impl Default for ToTConfig {
    fn default() -> Self {
        ToTConfig {
            steps: 3,
            reorder_proposals: 1,
            paragraph_proposals: 2,
            score_retry_limit: 2,
            combiner: Combiner::Mean,
        }
    }
}

impl ToTConfig {
    pub fn new(steps: usize, reorder_proposals: usize, paragraph_proposals: usize) -> Self {
        ToTConfig {
            steps,
            reorder_proposals,
            paragraph_proposals,
            ..ToTConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), CompositionError> {
        if self.steps == 0 || self.reorder_proposals == 0 || self.paragraph_proposals == 0 {
            return Err(CompositionError::Precondition(
                "steps, reorder_proposals and paragraph_proposals must be positive".into(),
            ));
        }
        if let Combiner::Weighted { coherence_weight } = self.combiner {
            if !(0.0..=1.0).contains(&coherence_weight) {
                return Err(CompositionError::Precondition("combiner weight outside [0, 1]".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingRecord {
    pub permutation: Vec<usize>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: usize,
    pub ordering_ref: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coherence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combined: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub discarded: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reprompted: bool,
    pub score_attempts: Vec<ScoreAttempt>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_ordering: Option<Vec<usize>>,
    pub orderings: Vec<OrderingRecord>,
    pub candidates: Vec<CandidateRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToTTrace {
    pub config: ToTConfig,
    pub steps: Vec<StepTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_candidate_id: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_combined: Option<f64>,
}

impl ToTTrace {
    pub fn final_candidate(&self) -> Option<&CandidateRecord> {
        let step = self.steps.iter().find(|s| Some(s.step) == self.final_step)?;
        step.candidates.iter().find(|c| Some(c.id) == self.final_candidate_id)
    }
}

/// First index holding the strictly largest score; `None` entries skipped.
pub fn argmax_first(scores: impl IntoIterator<Item = Option<f64>>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        if let Some(s) = s {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    best.map(|(i, _)| i)
}

fn run_candidate(
    session: &Session,
    source: &str,
    acus: &[Acu],
    ordering: &Ordering,
    ordering_ref: usize,
    id: usize,
    variant: &str,
    cfg: &ToTConfig,
) -> Result<CandidateRecord, CompositionError> {
    let paragraph = write_paragraph(session, ordering, acus, variant)?;
    let scored = score_candidate(
        session,
        source,
        &paragraph.text,
        &format!("{variant}.score"),
        cfg.score_retry_limit,
    )?;
    let mut notes = paragraph.warnings;
    let (coherence, coverage, combined) = match scored.scores {
        Some((coh, cov)) => (Some(coh), Some(cov), Some(cfg.combiner.combine(coh, cov))),
        None => {
            notes.push(format!("discarded after {} malformed score replies", scored.attempts.len()));
            (None, None, None)
        }
    };
    Ok(CandidateRecord {
        id,
        ordering_ref,
        text: paragraph.text,
        coherence,
        coverage,
        combined,
        discarded: combined.is_none(),
        reprompted: paragraph.reprompted,
        score_attempts: scored.attempts,
        notes,
    })
}

/// Run the search; returns the best paragraph and the full trace.
pub fn tot_search(
    session: &Session,
    docs: &DocumentSet,
    acus: &[Acu],
    cfg: &ToTConfig,
) -> Result<(String, ToTTrace), CompositionError> {
    cfg.validate()?;
    if acus.is_empty() {
        return Err(CompositionError::NoAcus);
    }
    let source = docs.joined();
    let mut trace = ToTTrace {
        config: *cfg,
        steps: Vec::new(),
        final_step: None,
        final_candidate_id: None,
        final_combined: None,
    };
    let mut seed: Option<Ordering> = None;

    for step in 1..=cfg.steps {
        let mut orderings = Vec::with_capacity(cfg.reorder_proposals);
        let mut records = Vec::with_capacity(cfg.reorder_proposals);
        for j in 0..cfg.reorder_proposals {
            let proposed = propose_ordering(session, acus, seed.as_ref(), &format!("s{step}.o{j}"))?;
            records.push(OrderingRecord {
                permutation: proposed.ordering.permutation.clone(),
                provenance: proposed.ordering.provenance,
                parsed: proposed.parsed,
                notes: proposed.notes,
            });
            orderings.push(proposed.ordering);
        }

        let p = cfg.paragraph_proposals;
        let jobs: Vec<(usize, usize, String)> = (0..cfg.reorder_proposals)
            .flat_map(|j| (0..p).map(move |k| (j * p + k, j, format!("s{step}.o{j}.p{k}"))))
            .collect();
        let results: Vec<(Session, Result<CandidateRecord, CompositionError>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|(id, j, variant)| {
                    let fork = session.fork();
                    let ordering = &orderings[*j];
                    let source = &source;
                    scope.spawn(move || {
                        let r = run_candidate(&fork, source, acus, ordering, *j, *id, variant, cfg);
                        (fork, r)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("candidate worker panicked")).collect()
        });

        let mut candidates = Vec::with_capacity(results.len());
        let mut failure = None;
        for (fork, r) in results {
            session.absorb(fork);
            match r {
                Ok(c) => candidates.push(c),
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        }
        if let Some(e) = failure {
            return Err(e);
        }

        let selected = argmax_first(candidates.iter().map(|c| c.combined));
        trace.steps.push(StepTrace {
            step,
            seed_ordering: seed.as_ref().map(|o| o.permutation.clone()),
            orderings: records,
            candidates,
            selected,
        });
        let Some(winner) = selected else {
            return Err(CompositionError::StepFailed {
                step,
                trace: Box::new(trace),
            });
        };
        let current = trace.steps.last().expect("just pushed");
        seed = Some(orderings[current.candidates[winner].ordering_ref].clone());
    }

    let mut best: Option<(usize, usize, f64)> = None;
    for s in &trace.steps {
        let w = s.selected.expect("every completed step has a winner");
        let score = s.candidates[w].combined.expect("winner was scored");
        if best.is_none_or(|(_, _, b)| score > b) {
            best = Some((s.step, w, score));
        }
    }
    let (final_step, final_id, final_combined) = best.expect("at least one step");
    trace.final_step = Some(final_step);
    trace.final_candidate_id = Some(final_id);
    trace.final_combined = Some(final_combined);
    let text = trace.final_candidate().expect("final candidate recorded").text.clone();
    Ok((text, trace))
}
