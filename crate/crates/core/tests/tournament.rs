use std::collections::HashSet;
use std::fs;

use persona_debate::analysis::tally_transcripts;
use persona_debate::backend::{DebateBackend, DialogueSession, DialogueSetup, SyntheticBackend, SyntheticParams};
use persona_debate::persona::default_roster;
use persona_debate::protocol::{default_topics, Transcript};
use persona_debate::tournament::{
    execute_run, load_transcripts, persist_run, schedule_pairings, sha256_hex, transcripts_to_jsonl,
    RunSettings, MANIFEST_FILE, TRANSCRIPTS_FILE,
};
use persona_debate::Error;

fn settings(repetitions: u32, parallelism: usize) -> RunSettings {
    RunSettings {
        master_seed: 42,
        repetitions,
        max_turns_per_agent: 3,
        parallelism,
    }
}

fn run(repetitions: u32, parallelism: usize, backend: &dyn DebateBackend) -> persona_debate::tournament::RunOutput {
    let roster = default_roster();
    let topics = default_topics();
    let specs = schedule_pairings(&roster, &topics, repetitions, 42).unwrap();
    execute_run(&specs, &roster, &topics, backend, &settings(repetitions, parallelism)).unwrap()
}

#[test]
fn default_schedule_size_and_order() {
    let specs = schedule_pairings(&default_roster(), &default_topics(), 64, 42).unwrap();
    assert_eq!(specs.len(), 15 * 6 * 64);
    assert_eq!(specs[0].interaction_id(), "1-2-HIV-0");
    assert_eq!(specs[63].interaction_id(), "1-2-HIV-63");
    assert_eq!(specs[64].interaction_id(), "1-2-QAnon-0");
    assert_eq!(specs.last().unwrap().interaction_id(), "5-6-Superfood-63");
    let seeds: HashSet<u64> = specs.iter().map(|s| s.seed).collect();
    assert_eq!(seeds.len(), specs.len(), "derived seeds collide");
}

#[test]
fn output_is_independent_of_parallelism() {
    let backend = SyntheticBackend::new(SyntheticParams::illustrative_default());
    let serial = run(4, 1, &backend);
    let parallel = run(4, 8, &backend);
    assert_eq!(transcripts_to_jsonl(&serial.transcripts), transcripts_to_jsonl(&parallel.transcripts));
    assert_eq!(serial.manifest.run_id, parallel.manifest.run_id);
    assert_eq!(serial.manifest.counts.completed, 360);
}

#[test]
fn master_seed_changes_the_run() {
    let backend = SyntheticBackend::new(SyntheticParams::illustrative_default());
    let roster = default_roster();
    let topics = default_topics();
    let a = schedule_pairings(&roster, &topics, 2, 1).unwrap();
    let b = schedule_pairings(&roster, &topics, 2, 2).unwrap();
    let ra = execute_run(&a, &roster, &topics, &backend, &settings(2, 2)).unwrap();
    let rb = execute_run(&b, &roster, &topics, &backend, &settings(2, 2)).unwrap();
    assert_ne!(transcripts_to_jsonl(&ra.transcripts), transcripts_to_jsonl(&rb.transcripts));
}

/// Synthetic backend that refuses one interaction.
struct FailOne {
    inner: SyntheticBackend,
    pair: (u32, u32),
    topic: &'static str,
}

impl DebateBackend for FailOne {
    fn kind(&self) -> &'static str {
        "fail-one"
    }

    fn settings(&self) -> serde_json::Value {
        self.inner.settings()
    }

    fn open_session<'s>(&'s self, setup: &DialogueSetup<'_>) -> persona_debate::Result<Box<dyn DialogueSession + 's>> {
        if (setup.agent_a.id, setup.agent_b.id) == self.pair && setup.topic.abbreviation == self.topic {
            return Err(Error::BackendUnavailable {
                attempts: 4,
                last_error: "HTTP 503".into(),
            });
        }
        self.inner.open_session(setup)
    }
}

#[test]
fn one_failure_does_not_abort_the_run() {
    let backend = FailOne {
        inner: SyntheticBackend::new(SyntheticParams::illustrative_default()),
        pair: (2, 5),
        topic: "MMR",
    };
    let out = run(1, 4, &backend);
    let counts = &out.manifest.counts;
    assert_eq!((counts.scheduled, counts.completed, counts.failed), (90, 89, 1));
    assert_eq!(out.manifest.failures[0].interaction_id, "2-5-MMR-0");
    assert!(out.manifest.failures[0].reason.contains("HTTP 503"));
    assert!(out.transcripts.iter().all(|t| t.interaction_id != "2-5-MMR-0"));
    assert_eq!(tally_transcripts(&out.transcripts).unwrap().len(), 89);
}

#[test]
fn persist_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let backend = SyntheticBackend::new(SyntheticParams::illustrative_default());
    let mut out = run(2, 2, &backend);
    let (transcripts_path, manifest_path) = persist_run(dir.path(), &mut out).unwrap();
    assert_eq!(transcripts_path, dir.path().join(TRANSCRIPTS_FILE));
    assert_eq!(manifest_path, dir.path().join(MANIFEST_FILE));

    let bytes = fs::read(&transcripts_path).unwrap();
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(&manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["transcripts_sha256"], sha256_hex(&bytes));
    assert_eq!(manifest["partial"], false);
    assert_eq!(manifest["counts"]["completed"], 180);
    assert_eq!(manifest["run_id"].as_str().unwrap().len(), 16);

    let loaded = load_transcripts(&transcripts_path).unwrap();
    assert_eq!(loaded, out.transcripts);
}

#[test]
fn unwritable_transcripts_leave_a_partial_manifest() {
    let dir = tempfile::tempdir().unwrap();
    // a directory where the transcript file should go makes the write fail
    fs::create_dir(dir.path().join(TRANSCRIPTS_FILE)).unwrap();
    let backend = SyntheticBackend::new(SyntheticParams::illustrative_default());
    let mut out = run(1, 1, &backend);
    let err = persist_run(dir.path(), &mut out).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest["partial"], true);
    assert!(manifest["transcripts_sha256"].is_null());
}

fn one_transcript() -> Transcript {
    let backend = SyntheticBackend::new(SyntheticParams::illustrative_default());
    run(1, 1, &backend).transcripts.remove(0)
}

#[test]
fn load_reports_line_of_bad_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let good = serde_json::to_string(&one_transcript()).unwrap();
    fs::write(&path, format!("{good}\n{{\"interaction_id\": 3\n")).unwrap();
    match load_transcripts(&path).unwrap_err() {
        Error::Parse { line, .. } => assert_eq!(line, 2),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn load_rejects_inconsistent_records() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let mut t = one_transcript();
    t.turns.swap(0, 1);
    fs::write(&path, format!("{}\n", serde_json::to_string(&t).unwrap())).unwrap();
    let err = load_transcripts(&path).unwrap_err();
    assert!(matches!(err, Error::Validation { .. } | Error::MalformedTranscript(_)), "{err}");

    let mut t = one_transcript();
    let a = t.pair.0;
    let flipped = t.final_stances[&a].flip();
    t.final_stances.insert(a, flipped);
    fs::write(&path, format!("{}\n", serde_json::to_string(&t).unwrap())).unwrap();
    assert!(load_transcripts(&path).is_err());
}

#[test]
fn load_missing_and_empty_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_transcripts(&dir.path().join("absent.jsonl")), Err(Error::Io { .. })));
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    assert!(load_transcripts(&empty).unwrap().is_empty());
}

#[test]
fn unknown_agents_and_topics_are_rejected_up_front() {
    let roster = default_roster();
    let topics = default_topics();
    let mut specs = schedule_pairings(&roster, &topics, 1, 42).unwrap();
    specs[0].topic = "Flat earth".into();
    let backend = SyntheticBackend::new(SyntheticParams::illustrative_default());
    let err = execute_run(&specs, &roster, &topics, &backend, &settings(1, 1)).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)), "{err}");
}
