//! ACU ordering: LLM proposal, parse-back to ids, greedy repair.

use serde::{Deserialize, Serialize};

use super::{render_acus, CompositionError};
use crate::gateway::{cosine, Tag};
use crate::planning::{dedup_key, parse_list, Acu};
use crate::prompts;
use crate::sentence::split_text;
use crate::session::{Role, Session};

/// Cosine floor for matching a paraphrased sentence back to an ACU.
pub const EMBEDDING_MATCH_THRESHOLD: f64 = 0.85;
/// Below this share of recovered ACUs the response counts as unparseable.
pub const MIN_MATCHED_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Llm,
    Repair,
    Initial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ordering {
    pub permutation: Vec<usize>,
    pub provenance: Provenance,
}

impl Ordering {
    pub fn identity(n: usize) -> Self {
        Ordering {
            permutation: (0..n).collect(),
            provenance: Provenance::Initial,
        }
    }

    pub fn is_permutation_of(&self, n: usize) -> bool {
        is_permutation(&self.permutation, n)
    }
}

pub fn is_permutation(ids: &[usize], n: usize) -> bool {
    if ids.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &i in ids {
        if i >= n || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

/// Ordering plus what happened while producing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposedOrdering {
    pub ordering: Ordering,
    /// Ids recovered from the response before repair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Keep the first occurrence of each valid id, then append the missing ids
/// greedily: each next id has maximal `similarity[last][id]`, ties to the
/// lowest id. With nothing valid to start from, the first id is the one with
/// the largest off-diagonal row sum.
pub fn repair_ordering(n: usize, partial: &[usize], similarity: &[Vec<f64>]) -> Vec<usize> {
    let mut placed = vec![false; n];
    let mut out = Vec::with_capacity(n);
    for &i in partial {
        if i < n && !placed[i] {
            placed[i] = true;
            out.push(i);
        }
    }
    if out.is_empty() && n > 0 {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, row) in similarity.iter().enumerate().take(n) {
            let sum: f64 = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v).sum();
            if sum > best.1 {
                best = (i, sum);
            }
        }
        placed[best.0] = true;
        out.push(best.0);
    }
    while out.len() < n {
        let last = *out.last().expect("non-empty");
        let mut best: Option<(usize, f64)> = None;
        for c in (0..n).filter(|&c| !placed[c]) {
            let s = similarity[last][c];
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((c, s));
            }
        }
        let (c, _) = best.expect("missing id exists");
        placed[c] = true;
        out.push(c);
    }
    out
}

pub fn similarity_matrix(vectors: &[Vec<f32>]) -> Vec<Vec<f64>> {
    vectors
        .iter()
        .map(|a| vectors.iter().map(|b| cosine(a, b)).collect())
        .collect()
}

fn segments(response: &str) -> Vec<String> {
    parse_list(response)
        .iter()
        .flat_map(|line| split_text(line))
        .collect()
}

fn lookup(text: &str, acus: &[Acu]) -> Option<usize> {
    let t = text.trim();
    if let Some(a) = acus.iter().find(|a| a.text.trim() == t) {
        return Some(a.id);
    }
    let key = dedup_key(t);
    acus.iter().find(|a| dedup_key(&a.text) == key).map(|a| a.id)
}

/// Map a reorder response back to ACU ids (possibly with gaps or repeats).
///
/// Exact text, then normalized text, each also tried over runs of adjacent
/// sentences so multi-sentence ACUs are found; remaining sentences go to the
/// embedder and match the most similar ACU at cosine >= 0.85.
pub fn parse_ordering(session: &Session, response: &str, acus: &[Acu]) -> Result<Vec<usize>, CompositionError> {
    let segs = segments(response);
    let max_span = acus.iter().map(|a| split_text(&a.text).len()).max().unwrap_or(1).max(1);
    let mut matched: Vec<(usize, Option<usize>)> = Vec::new();
    let mut i = 0;
    while i < segs.len() {
        let mut hit = None;
        for span in (1..=max_span.min(segs.len() - i)).rev() {
            let joined = segs[i..i + span].join(" ");
            if let Some(id) = lookup(&joined, acus) {
                hit = Some((span, id));
                break;
            }
        }
        match hit {
            Some((span, id)) => {
                matched.push((i, Some(id)));
                i += span;
            }
            None => {
                matched.push((i, None));
                i += 1;
            }
        }
    }

    let unmatched: Vec<usize> = matched.iter().filter(|(_, id)| id.is_none()).map(|(s, _)| *s).collect();
    if !unmatched.is_empty() {
        let mut texts: Vec<String> = acus.iter().map(|a| a.text.clone()).collect();
        texts.extend(unmatched.iter().map(|&s| segs[s].clone()));
        let vectors = session.embed(&texts)?;
        let (acu_vecs, seg_vecs) = vectors.split_at(acus.len());
        for (slot, seg_vec) in unmatched.iter().zip(seg_vecs) {
            let mut best: Option<(usize, f64)> = None;
            for (a, v) in acus.iter().zip(acu_vecs) {
                let s = cosine(seg_vec, v);
                if s >= EMBEDDING_MATCH_THRESHOLD && best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((a.id, s));
                }
            }
            if let Some(entry) = matched.iter_mut().find(|(s, _)| s == slot) {
                entry.1 = best.map(|(id, _)| id);
            }
        }
    }
    Ok(matched.into_iter().filter_map(|(_, id)| id).collect())
}

/// Ask for an ordering of `acus` (ids must be 0..n-1), presented in `seed`
/// order when given. Never returns an invalid permutation.
pub fn propose_ordering(
    session: &Session,
    acus: &[Acu],
    seed: Option<&Ordering>,
    variant: &str,
) -> Result<ProposedOrdering, CompositionError> {
    let n = acus.len();
    if n == 0 {
        return Err(CompositionError::NoAcus);
    }
    if acus.iter().enumerate().any(|(i, a)| a.id != i) {
        return Err(CompositionError::Precondition("ACU ids must be contiguous from 0".into()));
    }
    if n == 1 {
        return Ok(ProposedOrdering {
            ordering: Ordering::identity(1),
            parsed: None,
            notes: Vec::new(),
        });
    }
    let order: Vec<usize> = match seed {
        Some(s) if s.is_permutation_of(n) => s.permutation.clone(),
        _ => (0..n).collect(),
    };
    let rendered = render_acus(order.iter().map(|&i| acus[i].text.as_str()));
    let reply = session.chat(
        Role::Generator,
        Tag::Reorder,
        prompts::sentence_ordering(&rendered),
        Some(variant.to_string()),
    )?;
    let parsed = parse_ordering(session, &reply.text, acus)?;
    let mut notes = Vec::new();
    if is_permutation(&parsed, n) {
        return Ok(ProposedOrdering {
            ordering: Ordering {
                permutation: parsed.clone(),
                provenance: Provenance::Llm,
            },
            parsed: Some(parsed),
            notes,
        });
    }

    let mut distinct = parsed.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let fraction = distinct.len() as f64 / n as f64;
    if fraction < MIN_MATCHED_FRACTION {
        notes.push(format!(
            "ordering parse error: recovered {} of {n} ACUs; repaired",
            distinct.len()
        ));
    } else {
        notes.push(format!(
            "ordering not a permutation ({} ids, {} distinct of {n}); repaired",
            parsed.len(),
            distinct.len()
        ));
    }
    let texts: Vec<String> = acus.iter().map(|a| a.text.clone()).collect();
    let sim = similarity_matrix(&session.embed(&texts)?);
    Ok(ProposedOrdering {
        ordering: Ordering {
            permutation: repair_ordering(n, &parsed, &sim),
            provenance: Provenance::Repair,
        },
        parsed: Some(parsed),
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::{Matcher, MockChat, MockEmbedder, Rule};
    use crate::gateway::Gateway;
    use std::sync::Arc;

    fn matrix() -> Vec<Vec<f64>> {
        vec![
            vec![1.0, 0.2, 0.1, 0.9],
            vec![0.2, 1.0, 0.3, 0.4],
            vec![0.1, 0.3, 1.0, 0.2],
            vec![0.9, 0.4, 0.2, 1.0],
        ]
    }

    #[test]
    fn repair_identity_on_valid() {
        assert_eq!(repair_ordering(4, &[3, 1, 0, 2], &matrix()), [3, 1, 0, 2]);
    }

    #[test]
    fn repair_drops_duplicates_and_appends_greedily() {
        assert_eq!(repair_ordering(4, &[2, 2, 0], &matrix()), [2, 0, 3, 1]);
        assert_eq!(repair_ordering(4, &[9, 1], &matrix()), [1, 3, 0, 2]);
    }

    fn greedy_from(start: usize, m: &[Vec<f64>]) -> Vec<usize> {
        repair_ordering(m.len(), &[start], m)
    }

    #[test]
    fn repair_empty_starts_at_max_row_sum() {
        let m = matrix();
        // off-diagonal row sums: 1.2, 0.9, 0.6, 1.5
        let sums: Vec<f64> = (0..4)
            .map(|i| (0..4).filter(|&j| j != i).map(|j| m[i][j]).sum())
            .collect();
        let start = (0..4).max_by(|&a, &b| sums[a].total_cmp(&sums[b]).then(b.cmp(&a))).unwrap();
        assert_eq!(start, 3);
        assert_eq!(repair_ordering(4, &[], &m), greedy_from(start, &m));
        assert_eq!(repair_ordering(4, &[], &m), [3, 0, 1, 2]);
    }

    #[test]
    fn repair_ties_go_to_lowest_id() {
        let flat = vec![vec![0.5; 3]; 3];
        assert_eq!(repair_ordering(3, &[], &flat), [0, 1, 2]);
    }

    fn acus(texts: &[&str]) -> Vec<Acu> {
        texts
            .iter()
            .enumerate()
            .map(|(id, t)| Acu {
                id,
                text: t.to_string(),
                aspect_index: 0,
            })
            .collect()
    }

    fn session(reply: &str) -> Session {
        let gw = Gateway::builder()
            .chat(Arc::new(
                MockChat::new("m", "m1", vec![Rule::new(Matcher::tag(Tag::Reorder), reply)]).unwrap(),
            ))
            .embedding(Arc::new(MockEmbedder::new("e", "e1", 16)))
            .build();
        Session::single(Arc::new(gw), "m", "e")
    }

    #[test]
    fn single_acu_needs_no_call() {
        let s = session("unused");
        let p = propose_ordering(&s, &acus(&["Cash is anonymous."]), None, "s1.o0").unwrap();
        assert_eq!(p.ordering, Ordering::identity(1));
        assert_eq!(s.call_count(), 0);
    }

    #[test]
    fn reversed_echo_parses_as_llm() {
        let a = acus(&["Alpha one.", "Beta two.", "Gamma three"]);
        let s = session("Gamma three. Beta two. Alpha one.");
        let p = propose_ordering(&s, &a, None, "v").unwrap();
        assert_eq!(p.ordering.permutation, [2, 1, 0]);
        assert_eq!(p.ordering.provenance, Provenance::Llm);
    }

    #[test]
    fn multi_sentence_acu_and_bullets() {
        let a = acus(&["It is old. It runs well.", "Price is fair."]);
        let s = session("1. Price is fair.\n2. It is old. It runs well.");
        let p = propose_ordering(&s, &a, None, "v").unwrap();
        assert_eq!(p.ordering.permutation, [1, 0]);
    }

    #[test]
    fn omission_and_duplicate_are_repaired() {
        let a = acus(&["Alpha one.", "Beta two.", "Gamma three.", "Delta four."]);
        let s = session("Gamma three. Gamma three. Alpha one.");
        let p = propose_ordering(&s, &a, None, "v").unwrap();
        assert_eq!(p.ordering.provenance, Provenance::Repair);
        assert!(p.ordering.is_permutation_of(4));
        assert_eq!(&p.ordering.permutation[..2], &[2, 0]);
        assert_eq!(p.notes.len(), 1);
    }

    #[test]
    fn garbage_response_is_parse_error_then_repair() {
        let a = acus(&["Alpha one.", "Beta two.", "Gamma three."]);
        let s = session("I cannot do that.");
        let p = propose_ordering(&s, &a, None, "v").unwrap();
        assert!(p.notes[0].starts_with("ordering parse error"));
        assert!(p.ordering.is_permutation_of(3));
    }

    #[test]
    fn seed_order_is_what_gets_rendered() {
        let a = acus(&["Alpha one.", "Beta two."]);
        let s = session("Alpha one. Beta two.");
        let seed = Ordering {
            permutation: vec![1, 0],
            provenance: Provenance::Llm,
        };
        propose_ordering(&s, &a, Some(&seed), "v").unwrap();
        let prompt = s.ledger()[0].user_prompt.clone().unwrap();
        assert!(prompt.ends_with("Beta two. Alpha one."));
    }
}
