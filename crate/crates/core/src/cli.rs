//! Command-line surface: `run`, `analyze`, `validate-paper`, `report` and
//! `replay`.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 environment or backend
//! error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{
    all_rate_summaries, builtin_paper_dataset, dominance_matrix, fit_trait_parameters,
    nontransitive_triads, tally_transcripts, validate_paper_dataset, write_tallies_csv,
    DominanceMatrix, FitConfig, OutcomeTally, RateSummary, TableValidationReport,
    DEFAULT_TOLERANCE_PP,
};
use crate::config::{BackendKind, RunConfig};
use crate::error::{Error, Result};
use crate::protocol::{adjudicate, Transcript};
use crate::report::{render_markdown_tables, render_svg_chart, ChartSpec};
use crate::tournament::{
    execute_run, load_transcripts, persist_run, schedule_pairings, RunManifest, RunSettings,
    TRANSCRIPTS_FILE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ENVIRONMENT: i32 = 3;

pub const TALLIES_FILE: &str = "tallies.csv";
pub const TABLES_FILE: &str = "tables.md";
pub const RATES_FILE: &str = "rates.json";
pub const DOMINANCE_FILE: &str = "dominance.json";
pub const FIT_FILE: &str = "fit.json";
pub const VALIDATION_FILE: &str = "validation.json";
pub const CHARTS_DIR: &str = "charts";

const AFTER_HELP: &str = "\
Environment:
  PERSONA_DEBATE_API_KEY  API key sent as a bearer token by the remote backend
                          (the variable name can be changed in the config file
                          under backend.remote.api_key_env)

Exit codes:
  0  success
  2  usage or input error
  3  environment or backend error";

#[derive(Debug, Parser)]
#[command(name = "persona-debate", version, about = "Personality-conditioned misinformation debate simulator", after_help = AFTER_HELP)]
pub struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for `run`.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Repetitions per (pair, topic).
    #[arg(long, global = true)]
    pub reps: Option<u32>,
    /// Turns per agent in each dialogue.
    #[arg(long = "max-turns", global = true)]
    pub max_turns: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the round-robin tournament and write transcripts and a manifest.
    Run,
    /// Tally transcripts and write tables, rates, dominance and fit results.
    Analyze(AnalyzeArgs),
    /// Check the built-in published tables for arithmetic consistency.
    ValidatePaper {
        /// Allowed deviation in percentage points.
        #[arg(long, default_value_t = DEFAULT_TOLERANCE_PP)]
        tolerance: f64,
    },
    /// Render SVG outcome-rate charts from analysis output.
    Report(ReportArgs),
    /// Print one stored dialogue turn by turn.
    Replay {
        /// Transcript file written by `run`.
        transcripts: PathBuf,
        /// Interaction id such as `4-5-HIV-0` (agent a, agent b, topic, repetition).
        interaction_id: String,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct AnalyzeArgs {
    /// Transcript file; defaults to `<out>/transcripts.jsonl`.
    pub transcripts: Option<PathBuf>,
    /// Analyze the built-in published tables instead of transcripts.
    #[arg(long, conflicts_with = "transcripts")]
    pub paper: bool,
    /// Write outcome tables. Without any report flag, every report is written.
    #[arg(long)]
    pub tables: bool,
    /// Write per-agent convince / convinced rates.
    #[arg(long)]
    pub rates: bool,
    /// Write the pairwise dominance matrix.
    #[arg(long)]
    pub dominance: bool,
    /// Report non-transitive dominance triads.
    #[arg(long)]
    pub transitivity: bool,
    /// Also fit trait-level parameters; adds to whichever reports are selected.
    #[arg(long)]
    pub fit: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ReportArgs {
    /// Directory holding `rates.json`; defaults to the output directory.
    pub analysis_dir: Option<PathBuf>,
    /// Subject agents to chart (repeatable); defaults to every subject.
    #[arg(long = "subject")]
    pub subjects: Vec<u32>,
    /// Restrict opponents (repeatable); defaults to every opponent.
    #[arg(long = "opponent")]
    pub opponents: Vec<u32>,
    /// Chart the built-in figure-caption rates instead of analysis output.
    #[arg(long)]
    pub paper_figures: bool,
}

/// An error paired with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: Error,
}

impl Failure {
    fn usage(error: Error) -> Self {
        Failure { code: EXIT_USAGE, error }
    }

    fn classify(error: Error) -> Self {
        let code = if error.is_environmental() { EXIT_ENVIRONMENT } else { EXIT_USAGE };
        Failure { code, error }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.error);
            f.code
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let config = effective_config(cli).map_err(Failure::usage)?;
    match &cli.command {
        Command::Run => {
            let summary = cmd_run(&config)?;
            println!("{}", summary.line());
            Ok(())
        }
        Command::Analyze(args) => {
            let summary = cmd_analyze(&config, args)?;
            for triad in &summary.triads {
                println!("non-transitive triad: {} > {} > {} > {}", triad[0], triad[1], triad[2], triad[0]);
            }
            println!(
                "analyzed {} cells; wrote {}",
                summary.cells,
                config.output_dir.display()
            );
            Ok(())
        }
        Command::ValidatePaper { tolerance } => {
            let report = cmd_validate_paper(&config.output_dir, *tolerance)?;
            print!("{}", format_validation_report(&report));
            Ok(())
        }
        Command::Report(args) => {
            let written = cmd_report(&config, args)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Replay { transcripts, interaction_id } => {
            print!("{}", cmd_replay(transcripts, interaction_id)?);
            Ok(())
        }
    }
}

/// Config file (or defaults) with command-line overrides applied, validated.
pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(p) = cli.parallelism {
        config.parallelism = p;
    }
    if let Some(kind) = cli.backend {
        config.backend.kind = kind;
    }
    if let Some(reps) = cli.reps {
        config.repetitions = reps;
    }
    if let Some(turns) = cli.max_turns {
        config.max_turns_per_agent = turns;
    }
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunSummary {
    pub fn line(&self) -> String {
        let m = &self.manifest;
        format!(
            "run {}: {} completed, {} failed of {} scheduled; wrote {} (transcripts sha256 {})",
            m.run_id,
            m.counts.completed,
            m.counts.failed,
            m.counts.scheduled,
            self.output_dir.display(),
            m.transcripts_sha256.as_deref().unwrap_or("-"),
        )
    }
}

/// Schedules, runs and persists a tournament. Individual failed
/// interactions do not fail the run; a run where every interaction failed
/// is treated as an unavailable backend.
pub fn cmd_run(config: &RunConfig) -> CliResult<RunSummary> {
    let roster = config.roster();
    let topics = config.topics();
    let backend = config.build_backend().map_err(Failure::classify)?;
    let specs = schedule_pairings(&roster, &topics, config.repetitions, config.master_seed)
        .map_err(Failure::usage)?;
    let settings = RunSettings {
        master_seed: config.master_seed,
        repetitions: config.repetitions,
        max_turns_per_agent: config.max_turns_per_agent,
        parallelism: config.parallelism,
    };
    let mut output =
        execute_run(&specs, &roster, &topics, backend.as_ref(), &settings).map_err(Failure::usage)?;
    persist_run(&config.output_dir, &mut output).map_err(Failure::classify)?;
    let summary = RunSummary {
        output_dir: config.output_dir.clone(),
        manifest: output.manifest,
    };
    let counts = &summary.manifest.counts;
    if counts.scheduled > 0 && counts.completed == 0 {
        let reason = summary
            .manifest
            .failures
            .first()
            .map(|f| f.reason.clone())
            .unwrap_or_default();
        println!("{}", summary.line());
        return Err(Failure {
            code: EXIT_ENVIRONMENT,
            error: Error::BackendUnavailable {
                attempts: 0,
                last_error: format!("every interaction failed; first failure: {reason}"),
            },
        });
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct DominanceReport {
    pub matrix: DominanceMatrix,
    pub triads: Vec<[u32; 3]>,
}

#[derive(Debug, Clone, Default)]
pub struct AnalyzeSummary {
    pub cells: usize,
    pub triads: Vec<[u32; 3]>,
    pub written: Vec<PathBuf>,
}

/// Topics in configured order, then any other topics found in the tallies.
fn topic_order_for(config: &RunConfig, tallies: &[OutcomeTally]) -> Vec<String> {
    let mut order = config.topic_order();
    let mut extra: Vec<String> = tallies
        .iter()
        .map(|t| t.topic.clone())
        .filter(|t| !order.contains(t))
        .collect();
    extra.sort();
    extra.dedup();
    order.extend(extra);
    order
}

fn write_output(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| Failure::classify(Error::io(path, e)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Failure::classify(e.into()))?;
    bytes.push(b'\n');
    write_output(path, &bytes)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::classify(Error::io(dir, e)))
}

/// Writes `tallies.csv` plus the selected reports into the output directory.
/// With no report selected, tables, rates, dominance and transitivity are
/// all produced.
pub fn cmd_analyze(config: &RunConfig, args: &AnalyzeArgs) -> CliResult<AnalyzeSummary> {
    let tallies = if args.paper {
        builtin_paper_dataset().tallies()
    } else {
        let path = args
            .transcripts
            .clone()
            .unwrap_or_else(|| config.output_dir.join(TRANSCRIPTS_FILE));
        let transcripts = load_transcripts(&path).map_err(Failure::usage)?;
        tally_transcripts(&transcripts).map_err(Failure::usage)?
    };
    let everything = !(args.tables || args.rates || args.dominance || args.transitivity);
    let out = &config.output_dir;
    ensure_dir(out)?;
    let mut summary = AnalyzeSummary {
        cells: tallies.len(),
        ..AnalyzeSummary::default()
    };
    let topic_order = topic_order_for(config, &tallies);

    let tallies_path = out.join(TALLIES_FILE);
    let mut csv_bytes = Vec::new();
    write_tallies_csv(&mut csv_bytes, &tallies).map_err(Failure::classify)?;
    write_output(&tallies_path, &csv_bytes)?;
    summary.written.push(tallies_path);

    if everything || args.tables {
        let path = out.join(TABLES_FILE);
        write_output(&path, render_markdown_tables(&tallies, &topic_order).as_bytes())?;
        summary.written.push(path);
    }
    if everything || args.rates {
        let path = out.join(RATES_FILE);
        write_json(&path, &all_rate_summaries(&tallies))?;
        summary.written.push(path);
    }
    if everything || args.dominance || args.transitivity {
        let matrix = dominance_matrix(&tallies);
        let triads = nontransitive_triads(&matrix);
        if everything || args.transitivity {
            summary.triads = triads.clone();
        }
        let path = out.join(DOMINANCE_FILE);
        write_json(&path, &DominanceReport { matrix, triads })?;
        summary.written.push(path);
    }
    if args.fit {
        let fit = fit_trait_parameters(&tallies, &topic_order, &FitConfig::default()).map_err(Failure::usage)?;
        let path = out.join(FIT_FILE);
        write_json(&path, &fit)?;
        summary.written.push(path);
    }
    Ok(summary)
}

/// Validates the built-in tables, writes `validation.json` and returns the
/// report. Findings never make this fail.
pub fn cmd_validate_paper(out: &Path, tolerance_pp: f64) -> CliResult<TableValidationReport> {
    if !(tolerance_pp.is_finite() && tolerance_pp >= 0.0) {
        return Err(Failure::usage(Error::InvalidArgument(format!(
            "tolerance must be a non-negative number, got {tolerance_pp}"
        ))));
    }
    let report = validate_paper_dataset(&builtin_paper_dataset(), tolerance_pp);
    ensure_dir(out)?;
    write_json(&out.join(VALIDATION_FILE), &report)?;
    Ok(report)
}

pub fn format_validation_report(report: &TableValidationReport) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    for row in &report.rows {
        let _ = writeln!(
            s,
            "table {} | agents {}-{} | {:<9} | counts sum {:>3} | published sum {:>5.1}% | {}",
            row.table,
            row.pair.0,
            row.pair.1,
            row.topic,
            row.count_sum,
            row.published_sum,
            if row.is_flagged() { "FLAGGED" } else { "ok" }
        );
        for d in &row.discrepancies {
            let _ = writeln!(
                s,
                "    {}: published {:.1}, recomputed {:.1} (delta {:+.1})",
                d.field, d.published, d.recomputed, d.delta
            );
        }
    }
    for note in &report.notes {
        let _ = writeln!(s, "note: {note}");
    }
    let _ = writeln!(
        s,
        "{} of {} rows flagged (tolerance {} pp)",
        report.flagged().count(),
        report.rows.len(),
        report.tolerance_pp
    );
    s
}

/// Writes `charts/agent_<id>.svg` for each requested subject.
pub fn cmd_report(config: &RunConfig, args: &ReportArgs) -> CliResult<Vec<PathBuf>> {
    let analysis_dir = args.analysis_dir.clone().unwrap_or_else(|| config.output_dir.clone());
    let charts: Vec<ChartSpec> = if args.paper_figures {
        let figures = builtin_paper_dataset().figure_captions;
        figures
            .iter()
            .filter(|f| args.subjects.is_empty() || args.subjects.contains(&f.subject))
            .map(|f| ChartSpec::from_figure(f).map(|spec| restrict_opponents(spec, &args.opponents)))
            .collect::<Result<Vec<_>>>()
            .map_err(Failure::usage)?
    } else {
        let rates_path = analysis_dir.join(RATES_FILE);
        let text = fs::read_to_string(&rates_path).map_err(|e| Failure::usage(Error::io(&rates_path, e)))?;
        let summaries: Vec<RateSummary> = serde_json::from_str(&text).map_err(|e| {
            Failure::usage(Error::Parse {
                path: rates_path.clone(),
                line: e.line(),
                message: e.to_string(),
            })
        })?;
        let mut subjects: Vec<u32> = if args.subjects.is_empty() {
            summaries.iter().map(|r| r.subject).collect()
        } else {
            args.subjects.clone()
        };
        subjects.sort_unstable();
        subjects.dedup();
        subjects
            .into_iter()
            .map(|subject| {
                let opponents: Vec<u32> = summaries
                    .iter()
                    .filter(|r| r.subject == subject)
                    .map(|r| r.opponent)
                    .filter(|o| args.opponents.is_empty() || args.opponents.contains(o))
                    .collect();
                ChartSpec::from_summaries(&summaries, subject, &opponents)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(Failure::usage)?
    };
    if charts.is_empty() {
        return Err(Failure::usage(Error::MissingData("no charts to render".into())));
    }
    let dir = analysis_dir.join(CHARTS_DIR);
    ensure_dir(&dir)?;
    let mut written = Vec::new();
    for spec in &charts {
        let svg = render_svg_chart(spec).map_err(Failure::usage)?;
        let path = dir.join(format!("agent_{}.svg", spec.subject));
        write_output(&path, svg.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

fn restrict_opponents(mut spec: ChartSpec, keep: &[u32]) -> ChartSpec {
    if keep.is_empty() {
        return spec;
    }
    let idx: Vec<usize> = (0..spec.opponents.len())
        .filter(|&i| keep.contains(&spec.opponents[i]))
        .collect();
    let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
    spec.success = pick(&spec.success);
    spec.failure = pick(&spec.failure);
    spec.draw = pick(&spec.draw);
    spec.opponents = idx.iter().map(|&i| spec.opponents[i]).collect();
    spec
}

/// Turn-by-turn rendering of one stored dialogue with its outcome.
pub fn cmd_replay(transcripts_path: &Path, interaction_id: &str) -> CliResult<String> {
    let transcripts = load_transcripts(transcripts_path).map_err(Failure::usage)?;
    let t = transcripts
        .iter()
        .find(|t| t.interaction_id == interaction_id)
        .ok_or_else(|| {
            Failure::usage(Error::MissingData(format!(
                "no interaction {interaction_id:?} in {}",
                transcripts_path.display()
            )))
        })?;
    let outcome = adjudicate(t).map_err(Failure::usage)?;
    Ok(format_replay(t, outcome.as_str()))
}

fn format_replay(t: &Transcript, outcome: &str) -> String {
    use std::fmt::Write as _;
    let (a, b) = t.pair;
    let stance = |map: &crate::protocol::StanceMap, id: u32| map.get(&id).map(|s| s.to_string()).unwrap_or_default();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "interaction {}: agent {a} vs agent {b} on {} (repetition {})",
        t.interaction_id, t.topic, t.repetition
    );
    let _ = writeln!(
        s,
        "initial: agent {a} {}, agent {b} {}",
        stance(&t.initial_stances, a),
        stance(&t.initial_stances, b)
    );
    for turn in &t.turns {
        let _ = writeln!(
            s,
            "\n[turn {}] agent {} ({})",
            turn.index + 1,
            turn.speaker_id,
            turn.declared_stance
        );
        for line in turn.text.lines() {
            let _ = writeln!(s, "  {line}");
        }
    }
    let _ = writeln!(
        s,
        "\nfinal: agent {a} {}, agent {b} {}",
        stance(&t.final_stances, a),
        stance(&t.final_stances, b)
    );
    let _ = writeln!(s, "outcome: {outcome}");
    s
}
