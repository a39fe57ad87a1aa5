//! Round-robin scheduling, per-interaction seeding, execution and transcript
//! persistence.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{DebateBackend, DialogueSetup};
use crate::error::{Error, Result};
use crate::persona::Roster;
use crate::protocol::{assign_initial_stances, interaction_id, run_dialogue, Topic, Transcript};

pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InteractionSpec {
    pub pair: (u32, u32),
    pub topic: String,
    pub repetition: u32,
    pub seed: u64,
}

impl InteractionSpec {
    pub fn interaction_id(&self) -> String {
        interaction_id(self.pair, &self.topic, self.repetition)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// 64-bit FNV-1a over `"idA:idB:topic:repetition:master_seed"`.
pub fn derive_seed(master_seed: u64, pair: (u32, u32), topic: &str, repetition: u32) -> u64 {
    let key = format!("{}:{}:{}:{}:{}", pair.0, pair.1, topic, repetition, master_seed);
    fnv1a64(key.as_bytes())
}

/// Every unordered pair × topic × repetition, pair-lexicographic first, then
/// topic order, then repetition.
pub fn schedule_pairings(
    roster: &Roster,
    topics: &[Topic],
    repetitions: u32,
    master_seed: u64,
) -> Result<Vec<InteractionSpec>> {
    if roster.len() < 2 {
        return Err(Error::InvalidArgument("a tournament needs at least 2 agents".into()));
    }
    if repetitions == 0 {
        return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
    }
    let ids: Vec<u32> = roster.ids().collect();
    let n = ids.len();
    let mut specs = Vec::with_capacity(n * (n - 1) / 2 * topics.len() * repetitions as usize);
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            for topic in topics {
                for repetition in 0..repetitions {
                    specs.push(InteractionSpec {
                        pair: (a, b),
                        topic: topic.abbreviation.clone(),
                        repetition,
                        seed: derive_seed(master_seed, (a, b), &topic.abbreviation, repetition),
                    });
                }
            }
        }
    }
    Ok(specs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub interaction_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionCounts {
    pub scheduled: usize,
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub master_seed: u64,
    pub roster_digest: String,
    pub topics_digest: String,
    pub repetitions: u32,
    pub max_turns_per_agent: usize,
    pub backend_kind: String,
    pub backend_settings_digest: String,
    pub started_at: String,
    pub finished_at: String,
    pub counts: InteractionCounts,
    pub failures: Vec<FailureRecord>,
    /// Set when persistence stopped before every file was written.
    pub partial: bool,
    pub transcripts_sha256: Option<String>,
}

/// Run-level settings recorded in the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSettings {
    pub master_seed: u64,
    pub repetitions: u32,
    pub max_turns_per_agent: usize,
    pub parallelism: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub transcripts: Vec<Transcript>,
    pub manifest: RunManifest,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest_of<T: Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("value serializes"))
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Executes every spec once. Failed interactions are recorded in the
/// manifest and left out of the transcripts; transcripts come back in spec
/// order whatever the parallelism.
pub fn execute_run(
    specs: &[InteractionSpec],
    roster: &Roster,
    topics: &[Topic],
    backend: &dyn DebateBackend,
    settings: &RunSettings,
) -> Result<RunOutput> {
    if settings.parallelism == 0 {
        return Err(Error::InvalidArgument("parallelism must be at least 1".into()));
    }
    if settings.max_turns_per_agent == 0 {
        return Err(Error::InvalidArgument("max_turns_per_agent must be at least 1".into()));
    }
    for spec in specs {
        for id in [spec.pair.0, spec.pair.1] {
            if roster.get(id).is_none() {
                return Err(Error::InvalidArgument(format!(
                    "{} references unknown agent {id}",
                    spec.interaction_id()
                )));
            }
        }
        if !topics.iter().any(|t| t.abbreviation == spec.topic) {
            return Err(Error::InvalidArgument(format!(
                "{} references unknown topic {}",
                spec.interaction_id(),
                spec.topic
            )));
        }
    }

    let started_at = now_rfc3339();
    let run_one = |spec: &InteractionSpec| -> Result<Transcript> {
        let agent_a = roster.get(spec.pair.0).expect("checked above");
        let agent_b = roster.get(spec.pair.1).expect("checked above");
        let topic = topics
            .iter()
            .find(|t| t.abbreviation == spec.topic)
            .expect("checked above");
        let initial = assign_initial_stances(spec.pair, spec.repetition)?;
        let setup = DialogueSetup {
            agent_a,
            agent_b,
            topic,
            initial_stances: &initial,
            repetition: spec.repetition,
            seed: spec.seed,
            max_turns_per_agent: settings.max_turns_per_agent,
        };
        run_dialogue(&setup, backend)
    };

    let results: Vec<Result<Transcript>> = if settings.parallelism == 1 {
        specs.iter().map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(settings.parallelism)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
        pool.install(|| specs.par_iter().map(run_one).collect())
    };

    let mut transcripts = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (spec, result) in specs.iter().zip(results) {
        match result {
            Ok(t) => transcripts.push(t),
            Err(e) => failures.push(FailureRecord {
                interaction_id: spec.interaction_id(),
                reason: e.to_string(),
            }),
        }
    }

    let roster_digest = digest_of(roster);
    let topics_digest = digest_of(topics);
    let backend_settings_digest = digest_of(&backend.settings());
    let run_id = digest_of(&serde_json::json!({
        "master_seed": settings.master_seed,
        "roster": roster_digest,
        "topics": topics_digest,
        "repetitions": settings.repetitions,
        "max_turns_per_agent": settings.max_turns_per_agent,
        "backend": backend.kind(),
        "backend_settings": backend_settings_digest,
    }))[..16]
        .to_string();

    let manifest = RunManifest {
        run_id,
        master_seed: settings.master_seed,
        roster_digest,
        topics_digest,
        repetitions: settings.repetitions,
        max_turns_per_agent: settings.max_turns_per_agent,
        backend_kind: backend.kind().to_string(),
        backend_settings_digest,
        started_at,
        finished_at: now_rfc3339(),
        counts: InteractionCounts {
            scheduled: specs.len(),
            completed: transcripts.len(),
            failed: failures.len(),
        },
        failures,
        partial: false,
        transcripts_sha256: None,
    };
    Ok(RunOutput {
        transcripts,
        manifest,
    })
}

/// Serializes transcripts as JSONL, one record per line.
pub fn transcripts_to_jsonl(transcripts: &[Transcript]) -> Vec<u8> {
    let mut out = Vec::new();
    for t in transcripts {
        serde_json::to_writer(&mut out, t).expect("transcript serializes");
        out.push(b'\n');
    }
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

/// Writes `transcripts.jsonl` and `manifest.json` into `dir`. If the
/// transcripts cannot be written the manifest is still attempted, marked
/// partial.
pub fn persist_run(dir: &Path, output: &mut RunOutput) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let transcripts_path = dir.join(TRANSCRIPTS_FILE);
    let manifest_path = dir.join(MANIFEST_FILE);
    let bytes = transcripts_to_jsonl(&output.transcripts);
    if let Err(e) = write_file(&transcripts_path, &bytes) {
        output.manifest.partial = true;
        output.manifest.transcripts_sha256 = None;
        let _ = write_manifest(&manifest_path, &output.manifest);
        return Err(e);
    }
    output.manifest.transcripts_sha256 = Some(sha256_hex(&bytes));
    write_manifest(&manifest_path, &output.manifest)?;
    Ok((transcripts_path, manifest_path))
}

/// Reads and validates a JSONL transcript file.
pub fn load_transcripts(path: &Path) -> Result<Vec<Transcript>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Transcript = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        t.validate(None)?;
        out.push(t);
    }
    Ok(out)
}
