mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::{completion, StubServer};
use persona_debate::protocol::adjudicate;
use persona_debate::tournament::load_transcripts;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_persona-debate"));
    cmd.env_remove("PERSONA_DEBATE_API_KEY");
    cmd
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_documents_key_variable_and_exit_codes() {
    let o = bin().arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("PERSONA_DEBATE_API_KEY"));
    for cmd in ["run", "analyze", "validate-paper", "report", "replay"] {
        assert!(text.contains(cmd), "help lacks {cmd}");
    }
    let o = bin().arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_analyze_report_replay() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["--reps", "1", "--out", "out", "run"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.contains("90 completed, 0 failed of 90 scheduled"), "{line}");
    assert!(line.contains("out"), "{line}");

    // same invocation, same digest
    let again = run_in(dir.path(), &["--reps", "1", "--out", "out2", "run"]);
    let digest = |s: &str| s.rsplit("sha256 ").next().unwrap().trim().to_string();
    assert_eq!(digest(&line), digest(&stdout(&again)));
    assert_eq!(
        fs::read(dir.path().join("out/transcripts.jsonl")).unwrap(),
        fs::read(dir.path().join("out2/transcripts.jsonl")).unwrap()
    );

    let o = run_in(dir.path(), &["--out", "out", "analyze", "--fit"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["tallies.csv", "tables.md", "rates.json", "dominance.json", "fit.json"] {
        assert!(dir.path().join("out").join(f).exists(), "missing {f}");
    }
    let csv = fs::read_to_string(dir.path().join("out/tallies.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 90);

    let o = run_in(dir.path(), &["--out", "out", "report", "--subject", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let svg = fs::read_to_string(dir.path().join("out/charts/agent_3.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(!dir.path().join("out/charts/agent_1.svg").exists());

    let transcripts = load_transcripts(&dir.path().join("out/transcripts.jsonl")).unwrap();
    let t = &transcripts[17];
    let o = run_in(dir.path(), &["replay", "out/transcripts.jsonl", &t.interaction_id]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.matches("[turn ").count(), t.turns.len());
    let outcome = adjudicate(t).unwrap();
    assert!(text.contains(&format!("outcome: {}", outcome.as_str())), "{text}");

    let o = run_in(dir.path(), &["replay", "out/transcripts.jsonl", "9-9-Nothing-0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("9-9-Nothing-0"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["--config", "missing.toml", "run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.toml"));

    fs::write(dir.path().join("bad.toml"), "repetitions = 0\n").unwrap();
    let o = run_in(dir.path(), &["--config", "bad.toml", "run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("repetitions"), "{}", stderr(&o));

    let o = run_in(dir.path(), &["--parallelism", "0", "run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("parallelism"));
}

#[test]
fn analyze_input_errors_and_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["--out", "a", "analyze", "nope.jsonl"]);
    assert_eq!(o.status.code(), Some(2));

    fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let o = run_in(dir.path(), &["--out", "a", "analyze", "empty.jsonl"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(dir.path().join("a/tables.md")).unwrap(), "");
    let csv = fs::read_to_string(dir.path().join("a/tallies.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    let rates: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("a/rates.json")).unwrap()).unwrap();
    assert_eq!(rates, serde_json::json!([]));
}

#[test]
fn analyze_builtin_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["--out", "p", "analyze", "--paper", "--tables", "--transitivity"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("non-transitive triad: 4 > 5 > 6 > 4"), "{}", stdout(&o));
    let md = fs::read_to_string(dir.path().join("p/tables.md")).unwrap();
    assert!(md.contains("| HIV | **38(59.4%)** | 14(21.9%) | 10(15.6%) | 2(3.1%) |"));
    assert!(!dir.path().join("p/rates.json").exists());
    let dom: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("p/dominance.json")).unwrap()).unwrap();
    assert_eq!(dom["triads"], serde_json::json!([[4, 5, 6]]));
}

#[test]
fn validate_paper_reports_but_never_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["--out", "v", "validate-paper"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let row = text.lines().find(|l| l.contains("agents 5-6") && l.contains("5G")).unwrap();
    assert!(row.contains("FLAGGED") && row.contains("88.6%"), "{row}");
    let hiv = text.lines().find(|l| l.contains("table 1") && l.contains("HIV")).unwrap();
    assert!(hiv.ends_with("ok"), "{hiv}");
    assert!(text.contains("33.2% in the caption but 42.2% in the text"), "caption/text conflict missing");

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("v/validation.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 18);
    assert!(!json["notes"].as_array().unwrap().is_empty());

    let o = run_in(dir.path(), &["--out", "v", "validate-paper", "--tolerance", "99"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("0 of 18 rows flagged"));
}

#[test]
fn report_from_figures_and_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["--out", "r", "report", "--paper-figures"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let svg = fs::read_to_string(dir.path().join("r/charts/agent_1.svg")).unwrap();
    for label in ["47.5%", "33.2%", "40.4%"] {
        assert!(svg.contains(&format!(">{label}</text>")));
    }
    assert!(dir.path().join("r/charts/agent_3.svg").exists());

    let o = run_in(dir.path(), &["--out", "nothing-here", "report"]);
    assert_eq!(o.status.code(), Some(2));
}

fn remote_config(dir: &Path, url: &str) -> std::path::PathBuf {
    let path = dir.join("remote.toml");
    fs::write(
        &path,
        format!(
            r#"
repetitions = 1
parallelism = 1
output_dir = "remote-out"

[[topics]]
abbreviation = "MMR"
claim = "The MMR vaccine is associated with autism"

[[roster.agents]]
id = 1
name = "Agent 1"
profile = {{ dimension = "extraversion", polarity = "high", descriptors = ["bold", "energetic"] }}

[[roster.agents]]
id = 2
name = "Agent 2"
profile = {{ dimension = "extraversion", polarity = "low", descriptors = ["shy", "bashful"] }}

[backend]
kind = "remote"

[backend.remote]
endpoint_url = "{url}"
api_key_env = "STUB_CHAT_KEY"
retry = {{ max_attempts = 2, base_backoff_ms = 1 }}
"#
        ),
    )
    .unwrap();
    path
}

#[test]
fn remote_backend_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = StubServer::scripted(vec![(200, completion("Fine.\nSTANCE: REJECT"))]);
    let config = remote_config(dir.path(), &ok.url);
    let config = config.to_str().unwrap();

    // key missing from the environment
    let o = run_in(dir.path(), &["--config", config, "run"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("STUB_CHAT_KEY"));

    let o = bin()
        .current_dir(dir.path())
        .env("STUB_CHAT_KEY", "secret")
        .args(["--config", config, "run"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("1 completed, 0 failed"), "{}", stdout(&o));
    assert_eq!(ok.requests().len(), 6);

    let down = StubServer::scripted(vec![(503, "unavailable".into())]);
    let config = remote_config(dir.path(), &down.url);
    let o = bin()
        .current_dir(dir.path())
        .env("STUB_CHAT_KEY", "secret")
        .args(["--config", config.to_str().unwrap(), "run"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert_eq!(down.requests().len(), 2);
    // the failure is still recorded
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("remote-out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["counts"]["failed"], 1);
}
