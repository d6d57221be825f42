//! Acceptance gate. Prints one PASS / FAIL / SKIP line per criterion and
//! exits nonzero when any criterion fails. Runs without a network unless
//! `THREADSUMM_LIVE=1` is set (criterion 8).

mod common;

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use threadsumm_core::composition::{
    parse_scores, propose_ordering, score_candidate, tot_search, write_paragraph, CompositionError, ToTConfig,
};
use threadsumm_core::gateway::mock::{HashingEmbedder, Matcher, MockChat, MockEmbedder, Rule};
use threadsumm_core::gateway::{Gateway, Tag};
use threadsumm_core::metrics::kmeans::{dist2, kmeans_f64};
use threadsumm_core::metrics::{
    opinion_coverage, position_from_scores, position_representation, rouge1_recall, rouge1_recall_docasref,
    DEFAULT_CUTOFF, DEFAULT_K, DEFAULT_T,
};
use threadsumm_core::planning::Acu;
use threadsumm_core::prompts;
use threadsumm_core::report::position_svg;
use threadsumm_core::run::{summarize, RunStatus, SummarizeOptions};
use threadsumm_core::sentence::{split_sentences, split_text, SentenceUnit};
use threadsumm_core::session::Session;
use threadsumm_core::thread::{parse_flat, DocumentSet, Origin, FLAT_DELIMITER};

// Pinned tolerances and sizes.
const ORDERING_CASES: usize = 1200;
const ORDERING_BUDGET: Duration = Duration::from_secs(10);
const EXHAUSTIVE_LIMIT: usize = 20_000;
const TOT_SAMPLED_GRIDS: usize = 400;
const ROUGE_CASES: usize = 50;
const KMEANS_INSTANCES: u64 = 20;
const SSE_TOLERANCE: f64 = 1e-9;
const OPINION_INSTANCES: usize = 100;
const POSITION_CASES: usize = 200;
const ANCHOR_SENTENCES: usize = 62;
const ANCHOR_NOT_REPRESENTED: usize = 6;
const ANCHOR_SLACK: usize = 2;
const ANCHOR_ROUGE_FLOOR: f64 = 0.10;
const MALFORMED_MINIMUM: usize = 20;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const VOCAB: &[&str] = &[
    "cash", "bitcoin", "anonymous", "trace", "vpn", "nsa", "wallet", "exchange", "gloves", "bank", "mixer",
    "ledger", "phone", "email", "face", "seller", "buyer", "goods", "online", "payment",
];

fn words(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Vec<&'static str> {
    let n = rng.random_range(lo..=hi);
    (0..n).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect()
}

fn chat_session(f: impl Fn(&threadsumm_core::gateway::ChatRequest) -> Option<String> + Send + Sync + 'static) -> Session {
    let gw = Gateway::builder()
        .chat(Arc::new(MockChat::from_fn("m", "m1", f)))
        .embedding(Arc::new(HashingEmbedder::new("e", "bow", 128)))
        .build();
    Session::single(Arc::new(gw), "m", "e")
}

fn acus(texts: &[String]) -> Vec<Acu> {
    texts
        .iter()
        .enumerate()
        .map(|(id, t)| Acu {
            id,
            text: t.clone(),
            aspect_index: 0,
        })
        .collect()
}

/// Scripted reorder reply damaged in one of several ways.
fn damaged_reply(rng: &mut ChaCha8Rng, texts: &[String]) -> String {
    let mut order: Vec<usize> = (0..texts.len()).collect();
    order.shuffle(rng);
    let mut lines: Vec<String> = order.iter().map(|&i| texts[i].clone()).collect();
    match rng.random_range(0..7) {
        0 => {}
        1 => {
            let keep = rng.random_range(1..=lines.len());
            lines.truncate(keep);
        }
        2 => {
            let extra = lines[rng.random_range(0..lines.len())].clone();
            let at = rng.random_range(0..=lines.len());
            lines.insert(at, extra);
        }
        3 => {
            for l in lines.iter_mut() {
                if rng.random_bool(0.5) {
                    *l = format!("It is said that {}", l.to_lowercase().trim_end_matches('.'));
                }
            }
        }
        4 => lines.push("An entirely new claim about weather patterns.".into()),
        5 => return lines.join(" "),
        _ => {
            lines = lines.iter().enumerate().map(|(i, l)| format!("{}. {l}", i + 1)).collect();
        }
    }
    lines.join("\n")
}

fn c1_ordering_permutation() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..ORDERING_CASES {
        let n = rng.random_range(1..=20usize);
        let texts: Vec<String> = (0..n)
            .map(|i| {
                let w = words(&mut rng, 3, 7).join(" ");
                format!("Claim {i} says {w}.")
            })
            .collect();
        let reply = damaged_reply(&mut rng, &texts);
        let session = chat_session(move |req| match req.tag {
            Tag::Reorder => Some(reply.clone()),
            Tag::Paragraph => Some("A paragraph.".into()),
            _ => None,
        });
        let set = acus(&texts);
        let proposed = propose_ordering(&session, &set, None, "o").map_err(|e| format!("case {case}: {e}"))?;
        ensure!(
            proposed.ordering.is_permutation_of(n),
            "case {case}: {:?} is not a permutation of 0..{n}",
            proposed.ordering.permutation
        );
        write_paragraph(&session, &proposed.ordering, &set, "p").map_err(|e| format!("case {case}: {e}"))?;
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < ORDERING_BUDGET, "took {elapsed:?}");
    Ok(format!("{ORDERING_CASES} damaged reorder replies over 1-20 ACUs, {:.2} s", elapsed.as_secs_f64()))
}

/// Scores a candidate can receive; `None` is a malformed reply on every retry.
const SCORE_CHOICES: [Option<(f64, f64)>; 5] =
    [Some((0.0, 0.0)), Some((0.5, 0.5)), Some((1.0, 0.0)), Some((1.0, 1.0)), None];

fn run_grid(cfg: &ToTConfig, grid: &[Option<(f64, f64)>]) -> Check {
    let (r, p) = (cfg.reorder_proposals, cfg.paragraph_proposals);
    let per_step = r * p;
    let mut table: HashMap<String, Option<(f64, f64)>> = HashMap::new();
    for s in 0..cfg.steps {
        for j in 0..r {
            for k in 0..p {
                table.insert(format!("s{}.o{j}.p{k}", s + 1), grid[s * per_step + j * p + k]);
            }
        }
    }
    let texts = vec!["Alpha holds.".to_string(), "Beta follows.".to_string(), "Gamma ends.".to_string()];
    let reorder = texts.join("\n");
    let table = Arc::new(table);
    let t = Arc::clone(&table);
    let session = chat_session(move |req| {
        let v = req.variant.clone().unwrap_or_default();
        match req.tag {
            Tag::Reorder => Some(reorder.clone()),
            Tag::Paragraph => Some(format!("Alpha holds. Candidate {v}. Gamma ends.")),
            Tag::Evaluate => {
                let base = v.split(".score").next().unwrap_or_default();
                Some(match t.get(base).copied().flatten() {
                    Some((a, b)) => format!("{a} {b}"),
                    None => "coherent and complete".into(),
                })
            }
            _ => None,
        }
    });
    let docs = DocumentSet::new(vec!["Alpha holds. Beta follows. Gamma ends.".into()], Origin::Flat).unwrap();

    // brute force: earliest (ordering, paragraph) wins ties within a step,
    // earliest step wins ties across steps
    let combined: Vec<Option<f64>> = grid.iter().map(|g| g.map(|(a, b)| (a + b) / 2.0)).collect();
    let mut expected_selected = Vec::new();
    let mut failed_step = None;
    for s in 0..cfg.steps {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in combined[s * per_step..(s + 1) * per_step].iter().enumerate() {
            if let Some(c) = *c {
                if best.is_none() || c > best.unwrap().1 {
                    best = Some((i, c));
                }
            }
        }
        match best {
            Some(b) => expected_selected.push(b),
            None => {
                failed_step = Some(s + 1);
                break;
            }
        }
    }

    match tot_search(&session, &docs, &acus(&texts), cfg) {
        Ok((text, trace)) => {
            ensure!(failed_step.is_none(), "search succeeded but step {failed_step:?} has no valid score");
            for (s, step) in trace.steps.iter().enumerate() {
                ensure!(
                    step.selected == Some(expected_selected[s].0),
                    "step {}: selected {:?}, brute force {}",
                    s + 1,
                    step.selected,
                    expected_selected[s].0
                );
            }
            let mut best = (0usize, expected_selected[0]);
            for (s, b) in expected_selected.iter().enumerate() {
                if b.1 > best.1 .1 {
                    best = (s, *b);
                }
            }
            ensure!(
                trace.final_step == Some(best.0 + 1) && trace.final_candidate_id == Some(best.1 .0),
                "final ({:?}, {:?}) vs brute force ({}, {})",
                trace.final_step,
                trace.final_candidate_id,
                best.0 + 1,
                best.1 .0
            );
            let fin = trace.final_combined.unwrap();
            ensure!(fin >= expected_selected[0].1, "final {fin} below step-1 winner {}", expected_selected[0].1);
            let (j, k) = (best.1 .0 / p, best.1 .0 % p);
            ensure!(text.contains(&format!("s{}.o{j}.p{k}", best.0 + 1)), "summary text is not the winner's");
            Ok(String::new())
        }
        Err(CompositionError::StepFailed { step, .. }) => {
            ensure!(failed_step == Some(step), "search failed at step {step}, brute force says {failed_step:?}");
            Ok(String::new())
        }
        Err(e) => Err(e.to_string()),
    }
}

fn c2_tot_argmax() -> Check {
    let configs = [(1, 1, 1), (1, 1, 2), (1, 2, 2), (3, 1, 2), (3, 2, 2)];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut summary = Vec::new();
    for (s, r, p) in configs {
        let cfg = ToTConfig::new(s, r, p);
        let cells = s * r * p;
        let total = SCORE_CHOICES.len().pow(cells as u32);
        let grids: Vec<Vec<Option<(f64, f64)>>> = if total <= EXHAUSTIVE_LIMIT {
            (0..total)
                .map(|mut code| {
                    (0..cells)
                        .map(|_| {
                            let c = SCORE_CHOICES[code % SCORE_CHOICES.len()];
                            code /= SCORE_CHOICES.len();
                            c
                        })
                        .collect()
                })
                .collect()
        } else {
            (0..TOT_SAMPLED_GRIDS)
                .map(|_| {
                    (0..cells)
                        .map(|_| SCORE_CHOICES[rng.random_range(0..SCORE_CHOICES.len())])
                        .collect()
                })
                .collect()
        };
        for g in &grids {
            run_grid(&cfg, g).map_err(|e| format!("cfg ({s},{r},{p}) grid {g:?}: {e}"))?;
        }
        let how = if total <= EXHAUSTIVE_LIMIT { "all" } else { "sampled" };
        summary.push(format!("({s},{r},{p}) {how} {}", grids.len()));
    }
    Ok(format!("grids: {}", summary.join(", ")))
}

fn c3_golden() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = common::cash_thread(&tmp.path().join("a"), None);
    let b = common::cash_thread(&tmp.path().join("b"), None);
    let c = common::cash_thread(&tmp.path().join("c"), Some(&a.run_dir.join("manifest.json")));
    for o in [&a, &b, &c] {
        ensure!(o.stats.network_calls == 0, "{} network calls", o.stats.network_calls);
        ensure!(o.manifest.status == RunStatus::Completed, "run did not complete");
    }
    let golden = common::fixture("golden/cash_thread");
    for name in common::RUN_FILES {
        let first = common::read(&a.run_dir, name);
        ensure!(first == common::read(&b.run_dir, name), "{name} differs between two runs");
        ensure!(first == common::read(&c.run_dir, name), "{name} differs under replay");
        ensure!(first == common::read(&golden, name), "{name} differs from the blessed copy");
    }
    Ok(format!(
        "{} files identical across 2 runs, replay and golden; {} ledger entries, 0 network calls",
        common::RUN_FILES.len(),
        a.manifest.ledger.len()
    ))
}

/// Independent bag-of-words recall.
fn rouge_oracle(candidate: &str, reference: &str) -> f64 {
    let bag = |s: &str| {
        let mut m: BTreeMap<String, usize> = BTreeMap::new();
        let mut cur = String::new();
        for ch in s.chars().chain(std::iter::once(' ')) {
            if ch.is_alphanumeric() {
                cur.extend(ch.to_lowercase());
            } else if !cur.is_empty() {
                *m.entry(std::mem::take(&mut cur)).or_default() += 1;
            }
        }
        m
    };
    let (c, r) = (bag(candidate), bag(reference));
    let total: usize = r.values().sum();
    let hit: usize = r.iter().map(|(w, n)| (*n).min(c.get(w).copied().unwrap_or(0))).sum();
    hit as f64 / total as f64
}

fn c4_rouge() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let punct = [" ", ", ", ". ", "! ", " - "];
    let text = |rng: &mut ChaCha8Rng| {
        let ws = words(rng, 1, 15);
        let mut s = String::new();
        for w in ws {
            let w = if rng.random_bool(0.3) { w.to_uppercase() } else { w.to_string() };
            s.push_str(&w);
            s.push_str(punct[rng.random_range(0..punct.len())]);
        }
        s
    };
    for i in 0..ROUGE_CASES {
        let (cand, reference) = (text(&mut rng), text(&mut rng));
        let got = rouge1_recall(&cand, &reference).map_err(|e| e.to_string())?;
        let want = rouge_oracle(&cand, &reference);
        ensure!(got == want, "case {i}: {got} vs oracle {want} for {cand:?} / {reference:?}");
        ensure!(rouge1_recall(&reference, &reference).unwrap() == 1.0, "case {i}: identity is not 1");
        let mut shuffled: Vec<&str> = reference.split_whitespace().collect();
        shuffled.shuffle(&mut rng);
        ensure!(
            rouge1_recall(&cand, &shuffled.join(" ")).unwrap() == got,
            "case {i}: reordering the reference changed the score"
        );
    }
    ensure!(rouge1_recall("xyz", "the cat").unwrap() == 0.0, "disjoint texts do not score 0");
    let docs = parse_flat("The cat sat. </s> A dog ran.", FLAT_DELIMITER).unwrap();
    ensure!(
        rouge1_recall_docasref("the cat sat a dog ran", &docs).unwrap() == 1.0,
        "source-as-reference identity is not 1"
    );
    Ok(format!("{ROUGE_CASES} random pairs equal the bag oracle exactly"))
}

fn brute_force_sse(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    // point 0 stays in group A, so each 2-partition is visited once
    for mask in 0u32..(1 << (n - 1)) {
        let in_b = |i: usize| i > 0 && mask & (1 << (i - 1)) != 0;
        let groups: Vec<Vec<&Vec<f64>>> = [false, true]
            .iter()
            .map(|&b| (0..n).filter(|&i| in_b(i) == b).map(|i| &points[i]).collect())
            .collect();
        if groups[1].is_empty() {
            continue;
        }
        let sse: f64 = groups
            .iter()
            .map(|g| {
                let cx = g.iter().map(|p| p[0]).sum::<f64>() / g.len() as f64;
                let cy = g.iter().map(|p| p[1]).sum::<f64>() / g.len() as f64;
                g.iter().map(|p| (p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sum::<f64>()
            })
            .sum();
        best = best.min(sse);
    }
    best
}

fn c5_kmeans() -> Check {
    for seed in 0..KMEANS_INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let n = rng.random_range(4..=8usize);
        let centers = [
            (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)),
            (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)),
        ];
        let points: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let (cx, cy) = centers[if i < 2 { i } else { rng.random_range(0..2) }];
                vec![cx + rng.random_range(-1.0..1.0), cy + rng.random_range(-1.0..1.0)]
            })
            .collect();
        let c = kmeans_f64(&points, 2, seed).map_err(|e| e.to_string())?;
        let again = kmeans_f64(&points, 2, seed).map_err(|e| e.to_string())?;
        ensure!(c == again, "instance {seed}: same seed gave different clusterings");
        let got = c.sse(&points);
        let opt = brute_force_sse(&points);
        ensure!(
            (got - opt).abs() <= SSE_TOLERANCE * opt.max(1.0),
            "instance {seed}: SSE {got} vs optimum {opt} for {points:?}"
        );
        let direct: f64 = points
            .iter()
            .zip(&c.assignments)
            .map(|(p, &a)| dist2(p, &c.centroids[a]))
            .sum();
        ensure!((direct - got).abs() < 1e-9, "instance {seed}: sse() disagrees with centroid distances");
    }
    Ok(format!("{KMEANS_INSTANCES} planted 2-D instances (4-8 points) reach the brute-force SSE"))
}

fn embed_session(dim: usize) -> Session {
    let gw = Gateway::builder()
        .embedding(Arc::new(MockEmbedder::new("e", "seeded", dim)))
        .build();
    Session::single(Arc::new(gw), "none", "e")
}

fn units(texts: &[String]) -> Vec<SentenceUnit> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| SentenceUnit {
            text: t.clone(),
            doc_index: 0,
            sent_index: i,
            global_index: i,
        })
        .collect()
}

fn c6_opinion() -> Check {
    ensure!(DEFAULT_K == 5 && DEFAULT_T == 0.6, "defaults are k={DEFAULT_K}, t={DEFAULT_T}");
    let session = embed_session(32);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for inst in 0..OPINION_INSTANCES {
        let n = rng.random_range(DEFAULT_K..=14);
        let source: Vec<String> = (0..n).map(|i| format!("{} {i}.", words(&mut rng, 2, 6).join(" "))).collect();
        let src = units(&source);
        let full = opinion_coverage(&session, &src, &source, DEFAULT_K, DEFAULT_T, inst as u64)
            .map_err(|e| e.to_string())?;
        ensure!(full.coverage == 1.0, "instance {inst}: summary = source gives {}", full.coverage);
        let empty = opinion_coverage(&session, &src, &[], DEFAULT_K, DEFAULT_T, inst as u64)
            .map_err(|e| e.to_string())?;
        ensure!(empty.coverage == 0.0, "instance {inst}: empty summary gives {}", empty.coverage);

        // grow a summary from source sentences and unrelated ones
        let mut pool: Vec<String> = source.clone();
        pool.extend((0..n).map(|i| format!("unrelated remark {i} {}", words(&mut rng, 1, 4).join(" "))));
        pool.shuffle(&mut rng);
        let mut summary = Vec::new();
        let mut last = 0.0;
        for s in pool {
            summary.push(s);
            let cov = opinion_coverage(&session, &src, &summary, DEFAULT_K, DEFAULT_T, inst as u64)
                .map_err(|e| e.to_string())?
                .coverage;
            ensure!(cov >= last, "instance {inst}: coverage fell from {last} to {cov}");
            last = cov;
        }
        ensure!(last == 1.0, "instance {inst}: full pool ends at {last}");
    }
    Ok(format!("{OPINION_INSTANCES} seeded instances: identity 1.0, empty 0.0, monotone; k=5 t=0.6"))
}

fn c7_position() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..POSITION_CASES {
        let n = rng.random_range(2..=200usize);
        let mut scores: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 + 1e-6 * rng.random_range(0.0..1.0)).collect();
        scores.shuffle(&mut rng);
        let idx: Vec<usize> = (0..n).collect();
        let r = position_from_scores(&idx, &scores, DEFAULT_CUTOFF).map_err(|e| e.to_string())?;
        let want = (DEFAULT_CUTOFF * n as f64).ceil() as usize;
        ensure!(
            r.not_represented_indices.len() == want,
            "case {case}: n={n} gives {} not represented, expected {want}",
            r.not_represented_indices.len()
        );
    }

    let gw = Gateway::builder()
        .embedding(Arc::new(HashingEmbedder::new("e", "bow", 256)))
        .build();
    let session = Session::single(Arc::new(gw), "none", "e");
    for case in 0..20 {
        let n = rng.random_range(2..=30usize);
        let texts: Vec<String> = (0..n).map(|i| format!("{} {i}.", words(&mut rng, 2, 8).join(" "))).collect();
        let r = position_representation(&session, &units(&texts), &texts, DEFAULT_CUTOFF).map_err(|e| e.to_string())?;
        let max = r.sentences.iter().map(|s| s.max_similarity).fold(f64::MIN, f64::max);
        ensure!(
            r.sentences.iter().filter(|s| s.max_similarity == max).all(|s| s.represented),
            "case {case}: a maximal-similarity sentence is not represented"
        );
    }

    let source: Vec<String> = (0..ANCHOR_SENTENCES)
        .map(|i| format!("Post {i} mentions {} and {}.", VOCAB[i % VOCAB.len()], VOCAB[(i * 7) % VOCAB.len()]))
        .collect();
    let docs = DocumentSet::new(source.clone(), Origin::Flat).unwrap();
    let sentences = split_sentences(&docs);
    ensure!(sentences.len() == ANCHOR_SENTENCES, "splitter produced {} sentences", sentences.len());
    let summary = split_text("Cash is anonymous and bitcoin can be traced. A VPN and gloves help.");
    let r = position_representation(&session, &sentences, &summary, DEFAULT_CUTOFF).map_err(|e| e.to_string())?;
    let circles = position_svg(&r).matches("<circle").count();
    ensure!(circles == ANCHOR_SENTENCES, "SVG has {circles} circles");
    Ok(format!(
        "{POSITION_CASES} distinct-score cases hit ceil(0.1 n); maxima represented; 62-sentence SVG has {circles} points"
    ))
}

fn c8_live_anchor() -> Result<Verdict, String> {
    if std::env::var("THREADSUMM_LIVE").as_deref() != Ok("1") {
        return Ok(Verdict::Skip("set THREADSUMM_LIVE=1, THREADSUMM_CONFIG and THREADSUMM_ANCHOR_INPUT".into()));
    }
    let (Some(config), Some(input)) = (
        std::env::var_os("THREADSUMM_CONFIG"),
        std::env::var_os("THREADSUMM_ANCHOR_INPUT"),
    ) else {
        return Ok(Verdict::Skip("THREADSUMM_CONFIG or THREADSUMM_ANCHOR_INPUT is unset".into()));
    };
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let outcome = summarize(&SummarizeOptions {
        input: PathBuf::from(input),
        out: tmp.path().to_path_buf(),
        config: Some(PathBuf::from(config)),
        baseline_vanilla: true,
        ..SummarizeOptions::default()
    })
    .map_err(|e| e.to_string())?;
    let m = &outcome.manifest;
    let docs_text = common::read(&outcome.run_dir, "baseline_vanilla.txt");
    let vanilla = String::from_utf8_lossy(&docs_text).into_owned();
    let report = m.metrics.as_ref().ok_or("no metrics")?;
    let ours = report.rouge1_docasref.ok_or("no docasref score")?;
    let input_docs = threadsumm_core::run::load_input(&PathBuf::from(std::env::var_os("THREADSUMM_ANCHOR_INPUT").unwrap()), None)
        .map_err(|e| e.to_string())?
        .0;
    let theirs = rouge1_recall_docasref(&vanilla, &input_docs).map_err(|e| e.to_string())?;
    let pos = report.position.as_ref().ok_or("no position report")?;
    let missing = pos.not_represented_indices.len();
    let mut problems = Vec::new();
    if m.input.documents != 26 {
        problems.push(format!("{} documents, expected 26", m.input.documents));
    }
    if ours < ANCHOR_ROUGE_FLOOR {
        problems.push(format!("docasref {:.1} below 10.0", ours * 100.0));
    }
    if theirs >= ANCHOR_ROUGE_FLOOR {
        problems.push(format!("vanilla docasref {:.1} not below 10.0", theirs * 100.0));
    }
    if pos.sentences.len() != ANCHOR_SENTENCES {
        problems.push(format!("{} source sentences, expected 62", pos.sentences.len()));
    }
    if missing.abs_diff(ANCHOR_NOT_REPRESENTED) > ANCHOR_SLACK {
        problems.push(format!("{missing} not represented, expected 6 +/- 2"));
    }
    let detail = format!(
        "docasref {:.1} vs vanilla {:.1}; {missing} of {} not represented",
        ours * 100.0,
        theirs * 100.0,
        pos.sentences.len()
    );
    Ok(if problems.is_empty() {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(format!("{detail}; {}", problems.join("; ")))
    })
}

fn c9_prompts() -> Check {
    let sha = |s: &str| hex::encode(Sha256::digest(s.as_bytes()));
    let pinned = [
        ("aspect extraction system", prompts::ASPECT_EXTRACTION.system, "8bfb45a59a8b6be6835795ee669f6fb44a80c0fdc03e839014c1895f9bfbdea5"),
        ("aspect extraction user", prompts::ASPECT_EXTRACTION.user, "117bb42a9b3ec378f0743b42f13f914a883698c4493d9e7723ce32e97474f77f"),
        ("acu generation system", prompts::ACU_GENERATION.system, "d6e611bc7a39eed487c2e753d4083f39dfcac75bd3bf129e89f90c2e258b8428"),
        ("acu generation user", prompts::ACU_GENERATION.user, "aa8bfd0434c1c95f56d5485f634c8abf928a8a11cb6496930332d7d40c066369"),
        ("sentence ordering system", prompts::SENTENCE_ORDERING.system, "71581df48438b40d15586d4d9a80da892ce145fcc30adc373d8856aa9bc73fb1"),
        ("sentence ordering user", prompts::SENTENCE_ORDERING.user, "e287e1469e1c13605f867d4a11a33892d92b6a22c2e6bf79f9fe798b5c0bc4f1"),
        ("paragraph writing system", prompts::PARAGRAPH_WRITING.system, "2a061dab0bf108697479cd5c584507b93316bbe94af535d54d9c1747576af0c0"),
        ("paragraph writing user", prompts::PARAGRAPH_WRITING.user, "fb06d4cc2eb1c961aaa66a37e965301457bdd4eb2fd3e40cf62429e36e7270b8"),
        ("evaluation system", prompts::EVALUATION.system, "10426a585d1bbc817626874729da03b358bfb7fcf47467b223608e4b407d2c49"),
        ("evaluation user", prompts::EVALUATION.user, "eb0f78a26b494b9b7e6c3a8cd74754cb0a71b99b4935215115af26d03854274a"),
        ("vanilla", prompts::VANILLA, "f4d0a7fd0efbc1223afa736aabb10df1bc79064c64c4300250d8d03a00823c66"),
        ("aspect metric", prompts::ASPECT_METRIC, "caf20205224c7c396258ae18f9f953ed8c8c50810178e4163f22b746eb21e13a"),
    ];
    for (name, text, digest) in pinned {
        ensure!(sha(text) == digest, "{name} template drifted");
    }
    ensure!(prompts::CATALOG_VERSION == "prompts-v1", "catalog version changed");
    Ok(format!("{} template parts match pinned SHA-256 digests", pinned.len()))
}

const MALFORMED: &[&str] = &[
    "n/a",
    "0.9",
    "0.9 1.0 0.5",
    "high low",
    "0.9, 1.0",
    "1.2 0.4",
    "-0.1 0.5",
    "0.5 1.5",
    "NaN 0.5",
    "inf 0.5",
    "0.5 -inf",
    "Coherence: 0.9 Coverage: 1.0",
    "0.9/1.0",
    "0.9\n1.0\n0.8",
    "[0.9, 1.0]",
    "0.9 1.0 because it flows well",
    "zero one",
    "1e3 0.5",
    "0.5 2",
    "\u{bd} 0.5",
    "0x1 0.5",
    "0.9 1.0.",
    "0.9;1.0",
    "(0.9) (1.0)",
];

fn c10_score_parse() -> Check {
    ensure!(MALFORMED.len() >= MALFORMED_MINIMUM, "only {} malformed replies", MALFORMED.len());
    ensure!(parse_scores("0.9 1.0") == Ok((0.9, 1.0)), "canonical reply rejected");
    for bad in MALFORMED {
        ensure!(parse_scores(bad).is_err(), "{bad:?} was accepted");

        let gw = Gateway::builder()
            .chat(Arc::new(
                MockChat::new(
                    "m",
                    "m1",
                    vec![
                        Rule::new(Matcher::tagged(Tag::Evaluate, Some("c"), None), *bad),
                        Rule::new(Matcher::tagged(Tag::Evaluate, Some("c.r1"), None), "0.9 1.0"),
                    ],
                )
                .map_err(|e| e.to_string())?,
            ))
            .build();
        let s = Session::single(Arc::new(gw), "m", "none");
        let out = score_candidate(&s, "source", "paragraph", "c", 2).map_err(|e| e.to_string())?;
        ensure!(out.scores == Some((0.9, 1.0)) && out.attempts.len() == 2, "{bad:?}: retry did not recover");

        let gw = Gateway::builder()
            .chat(Arc::new(
                MockChat::new("m", "m1", vec![Rule::new(Matcher::tag(Tag::Evaluate), *bad)]).map_err(|e| e.to_string())?,
            ))
            .build();
        let s = Session::single(Arc::new(gw), "m", "none");
        let out = score_candidate(&s, "source", "paragraph", "c", 2).map_err(|e| e.to_string())?;
        ensure!(
            out.scores.is_none() && out.attempts.len() == 3 && out.attempts.iter().all(|a| a.error.is_some()),
            "{bad:?}: not discarded after the retry limit"
        );
    }
    Ok(format!("{} malformed replies rejected, retried, then recovered or discarded", MALFORMED.len()))
}

fn guarded(f: impl FnOnce() -> Check) -> Verdict {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(detail)) => Verdict::Pass(detail),
        Ok(Err(why)) => Verdict::Fail(why),
        Err(panic) => Verdict::Fail(
            panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()),
        ),
    }
}

fn main() {
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Verdict>)> = vec![
        ("ordering permutation", Box::new(|| guarded(c1_ordering_permutation))),
        ("tot argmax", Box::new(|| guarded(c2_tot_argmax))),
        ("golden end-to-end", Box::new(|| guarded(c3_golden))),
        ("rouge-1 oracle", Box::new(|| guarded(c4_rouge))),
        ("k-means oracle", Box::new(|| guarded(c5_kmeans))),
        ("opinion coverage", Box::new(|| guarded(c6_opinion))),
        ("position report", Box::new(|| guarded(c7_position))),
        (
            "live case-study anchor",
            Box::new(|| match catch_unwind(c8_live_anchor) {
                Ok(Ok(v)) => v,
                Ok(Err(e)) => Verdict::Fail(e),
                Err(_) => Verdict::Fail("panicked".into()),
            }),
        ),
        ("prompt fidelity", Box::new(|| guarded(c9_prompts))),
        ("score-parse robustness", Box::new(|| guarded(c10_score_parse))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let (label, detail) = match check() {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("criterion {:>2} {label} {name}: {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
