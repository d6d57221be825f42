//! Cash thread through the scripted provider, checked against blessed
//! outputs. Set `THREADSUMM_BLESS=1` to rewrite them.

mod common;

use common::{cash_thread, fixture, read, RUN_FILES, RUN_ID};
use threadsumm_core::run::RunStatus;

#[test]
fn cash_thread_matches_blessed_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let outcome = cash_thread(tmp.path(), None);
    assert_eq!(outcome.manifest.status, RunStatus::Completed);
    assert_eq!(outcome.stats.network_calls, 0);

    let golden = fixture("golden/cash_thread");
    let run = tmp.path().join(RUN_ID);
    if std::env::var_os("THREADSUMM_BLESS").is_some() {
        for name in RUN_FILES {
            let dst = golden.join(name);
            std::fs::create_dir_all(dst.parent().unwrap()).unwrap();
            std::fs::write(&dst, read(&run, name)).unwrap();
        }
    }
    for name in RUN_FILES {
        assert!(read(&run, name) == read(&golden, name), "{name} differs from the blessed copy");
    }
}

#[test]
fn cash_thread_is_byte_stable_and_replayable() {
    let tmp = tempfile::tempdir().unwrap();
    let first = cash_thread(&tmp.path().join("a"), None);
    cash_thread(&tmp.path().join("b"), None);
    let replayed = cash_thread(&tmp.path().join("c"), Some(&first.run_dir.join("manifest.json")));
    assert_eq!(replayed.stats.network_calls, 0);
    assert_eq!(replayed.manifest.run_id, RUN_ID);
    for name in RUN_FILES {
        let a = read(&tmp.path().join("a").join(RUN_ID), name);
        assert!(a == read(&tmp.path().join("b").join(RUN_ID), name), "{name} differs between runs");
        assert!(a == read(&tmp.path().join("c").join(RUN_ID), name), "{name} differs under replay");
    }
}

#[test]
fn cash_thread_run_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let m = cash_thread(tmp.path(), None).manifest;
    let labels: Vec<&str> = m.stages.aspects.as_ref().unwrap().iter().map(|a| a.label.as_str()).collect();
    assert_eq!(labels, ["Cash", "Bitcoin", "NSA"]);
    assert_eq!(m.stages.raw_acu_count, Some(7));
    assert_eq!(m.stages.acus.as_ref().unwrap().len(), 6);
    let trace = m.stages.trace.as_ref().unwrap();
    assert_eq!(trace.steps.len(), 3);
    assert_eq!((trace.final_step, trace.final_candidate_id), (Some(2), Some(0)));
    assert_eq!(trace.final_combined, Some(0.9));
    // s2 p1 and s3 p0 recover on their first retry
    assert_eq!(trace.steps[1].candidates[1].score_attempts.len(), 2);
    assert_eq!(trace.steps[2].candidates[0].score_attempts.len(), 2);
    // 1 aspect + 3 ACU + 3 x (1 reorder + 2 paragraphs + 2 scores) + 2 retries + 1 vanilla
    // + source and summary batches for each of the two embedding metrics
    assert_eq!(m.ledger.len(), 1 + 3 + 15 + 2 + 1 + 4);
    assert!(m.ledger.iter().all(|e| e.error.is_none()));
    let report = m.metrics.as_ref().unwrap();
    assert!(report.rouge1_docasref.unwrap() > 0.0);
    assert_eq!(report.length.unwrap().sentence_count, 4);
}
