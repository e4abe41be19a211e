//! Implementations behind the command-line subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{HarnessConfig, Overrides, SystemKind};
use crate::corpus::{import_multiwoz, parse_corpus, read_json, Corpus, ImportReport};
use crate::diagnostics::DiagnosticsConfig;
use crate::error::{CorpusError, HarnessError};
use crate::goal_metrics::Validity;
use crate::goalgen::{generate_goal, render_requirements, GoalConfig, PhraseTable, RequirementsFormat};
use crate::lexdiv::{LexParams, LexReport};
use crate::llm::{LlmBackendConfig, LlmProvider};
use crate::model::{Dialog, Ontology, Outcome, UserGoal};
use crate::orchestrator::{run_experiment, RunContext, TranscriptRecord};
use crate::prompt::TaskDescriptions;
use crate::report::{render_markdown, score_sessions, ExperimentResult, SessionView};
use crate::system::{Annotator, MockDatabase};

pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const RESULT_FILE: &str = "result.json";
pub const REPORT_FILE: &str = "report.md";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Reads an ontology from either an ontology file or a corpus file.
pub fn load_ontology(path: &Path) -> Result<Ontology, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    if let Ok(corpus) = Corpus::from_json(&text) {
        return Ok(corpus.ontology);
    }
    let ontology: Ontology = crate::corpus::from_json_str(&text)?;
    Ok(ontology.canonicalize())
}

pub struct RunArtifacts {
    pub run_id: String,
    pub dir: PathBuf,
    pub result: ExperimentResult,
}

/// Runs the configured experiment and writes transcripts, result and
/// report under `<output_dir>/<run id>/`. Failed dialogs are part of the
/// result; only configuration and backend problems are errors.
pub fn cmd_run(config_path: &Path, overrides: &Overrides) -> Result<RunArtifacts, HarnessError> {
    let (mut cfg, base) = HarnessConfig::load(config_path)?;
    cfg.apply(overrides);
    cfg.validate()?;
    let run_id = cfg.run_id();
    let snapshot = cfg.snapshot();
    let mut r = cfg.resolved(&base);
    if let Some(dir) = &overrides.output_dir {
        r.run.output_dir = dir.clone();
    }
    let run_cfg = r.run_config();

    let ontology = load_ontology(&r.goals.ontology)?;
    let pool = match &r.shots.corpus {
        Some(path) => parse_corpus(path)?.shot_pool(),
        None => Vec::new(),
    };
    let descriptions = match &r.prompt.task_descriptions {
        Some(path) => TaskDescriptions::load(path)?,
        None => TaskDescriptions::default(),
    };
    let phrases = match &r.prompt.phrase_table {
        Some(path) => PhraseTable::load(path)?,
        None => PhraseTable::default(),
    };
    if let LlmBackendConfig::HttpCompletion { credential_env, .. } = &r.backend {
        if std::env::var_os(credential_env).is_none() {
            log::warn!("environment variable {credential_env} is not set; sending requests without credentials");
        }
    }
    let llm = LlmProvider::from_config(&r.backend, &run_cfg.generation)
        .map_err(|e| HarnessError::BackendUnreachable(e.to_string()))?;
    let system = r.system_provider(&ontology)?;
    let annotator = Annotator::new(&ontology, r.system.annotator.clone());
    let ctx = RunContext {
        llm: &llm,
        system: &system,
        annotator: &annotator,
        shot_pool: &pool,
        descriptions: &descriptions,
        phrases: &phrases,
    };
    log::info!("run {run_id}: {} dialogs", run_cfg.n_dialogs);
    let run = run_experiment(&run_cfg, &ctx, &ontology)?;

    let dir = r.run.output_dir.join(&run_id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut lines = String::new();
    for (session, scored) in run.sessions.iter().zip(&run.scores.dialogs) {
        let eval = match (&scored.eval, &scored.eval_error) {
            (Some(e), _) => Ok(e),
            (None, err) => Err(err.as_deref().unwrap_or("not evaluated")),
        };
        let record = TranscriptRecord::new(session, eval, &scored.flags);
        lines.push_str(&serde_json::to_string(&record).expect("transcript serializes"));
        lines.push('\n');
    }
    write_file(&dir.join(TRANSCRIPTS_FILE), &lines)?;
    let result = ExperimentResult {
        run_id: run_id.clone(),
        config: snapshot,
        config_dir: base,
        scores: run.scores,
        wall_clock_secs: run.wall_clock_secs,
    };
    write_file(&dir.join(RESULT_FILE), &result.to_json())?;
    write_file(&dir.join(REPORT_FILE), &render_markdown(&[&result]))?;

    let dead = run
        .sessions
        .iter()
        .all(|s| s.dialog.turns().is_empty() && s.dialog.outcome() == Some(Outcome::GenerationFailure));
    if dead {
        let why = run.sessions.first().and_then(|s| s.failure.clone()).unwrap_or_default();
        return Err(HarnessError::BackendUnreachable(format!(
            "no dialog produced a single turn ({why}); artifacts in {}",
            dir.display()
        )));
    }
    Ok(RunArtifacts { run_id, dir, result })
}

/// Parses a transcript file; schema errors name the line.
pub fn read_transcripts(path: &Path) -> Result<Vec<TranscriptRecord>, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            crate::corpus::from_json_str::<TranscriptRecord>(line).map_err(|e| match e {
                CorpusError::Schema { pointer, message } => HarnessError::Corpus(CorpusError::Schema {
                    pointer: format!("line {}: {pointer}", i + 1),
                    message,
                }),
                other => other.into(),
            })
        })
        .collect()
}

/// Re-scores saved transcripts. Run metadata and the mock database come
/// from a `result.json` beside the transcripts when present, so re-scoring
/// a fresh run reproduces its result exactly.
pub fn cmd_evaluate(
    transcripts: &Path,
    corpus: &Path,
    database: Option<&Path>,
    out: Option<&Path>,
) -> Result<(ExperimentResult, PathBuf), HarnessError> {
    let records = read_transcripts(transcripts)?;
    let ontology = load_ontology(corpus)?;
    let dir = transcripts.parent().map(Path::to_path_buf).unwrap_or_default();
    let sibling = dir.join(RESULT_FILE);
    let meta = if sibling.is_file() {
        Some(ExperimentResult::load(&sibling)?)
    } else {
        None
    };
    let run_cfg: Option<HarnessConfig> = meta
        .as_ref()
        .and_then(|m| serde_json::from_value::<HarnessConfig>(m.config.clone()).ok())
        .map(|c| c.resolved(&meta.as_ref().expect("meta present").config_dir));

    let db = match database {
        Some(path) => Some(MockDatabase::load(path)?),
        None => match &run_cfg {
            Some(c) if c.system.kind == SystemKind::Mock => match &c.system.database {
                Some(path) => Some(MockDatabase::load(path)?),
                None => None,
            },
            _ => None,
        },
    };
    let validity = match &db {
        Some(db) => Validity::Database(db),
        None => Validity::Ontology(&ontology),
    };
    let diag = run_cfg.as_ref().map(|c| c.run.diagnostics.clone()).unwrap_or_else(DiagnosticsConfig::default);

    let dialogs: Vec<Dialog> = records
        .iter()
        .map(TranscriptRecord::to_dialog)
        .collect::<Result<_, _>>()?;
    let views: Vec<SessionView<'_>> = records
        .iter()
        .zip(&dialogs)
        .map(|(r, d)| SessionView {
            index: r.index,
            dialog: d,
            stop_reason: r.stop_reason,
            failure: r.failure.as_deref(),
            raw_completions: &r.raw_completions,
        })
        .collect();
    let scores = score_sessions(&views, validity, &diag);
    for d in &scores.dialogs {
        if let Some(e) = &d.eval_error {
            log::warn!("{}: {e}", d.id);
        }
    }
    let result = match meta {
        Some(m) => ExperimentResult { scores, ..m },
        None => ExperimentResult {
            run_id: "evaluated".into(),
            config: serde_json::Value::Null,
            config_dir: dir.clone(),
            scores,
            wall_clock_secs: None,
        },
    };
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| dir.join("result.evaluated.json"));
    write_file(&out, &result.to_json())?;
    Ok((result, out))
}

/// User utterances of a corpus (`.json`), a transcript file (`.jsonl`) or a
/// plain text file with one utterance per line.
pub fn read_user_utterances(path: &Path) -> Result<Vec<String>, HarnessError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let user_texts = |d: &Dialog| d.user_turns().map(|t| t.text.clone()).collect::<Vec<_>>();
    match ext {
        "jsonl" => {
            let mut out = Vec::new();
            for r in read_transcripts(path)? {
                out.extend(user_texts(&r.to_dialog()?));
            }
            Ok(out)
        }
        "json" => Ok(parse_corpus(path)?.dialogs.iter().flat_map(user_texts).collect()),
        _ => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
        }
    }
}

pub fn cmd_lexdiv(input: &Path, params: &LexParams) -> Result<LexReport, HarnessError> {
    let utterances = read_user_utterances(input)?;
    Ok(LexReport::from_utterances(&utterances, params))
}

/// Draws `n` goals; goal `i` uses seed `seed + i`, as a run would.
pub fn cmd_gen_goals(
    ontology: &Ontology,
    n: usize,
    seed: u64,
    cfg: &GoalConfig,
    format: RequirementsFormat,
    phrases: &PhraseTable,
) -> Result<Vec<UserGoal>, HarnessError> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let goal = generate_goal(ontology, cfg, &mut rng)?;
            let text = render_requirements(&goal, format, phrases);
            Ok(goal.with_requirements(text))
        })
        .collect()
}

pub fn write_goals(goals: &[UserGoal], mut out: impl std::io::Write) -> std::io::Result<()> {
    for g in goals {
        writeln!(out, "{}", serde_json::to_string(g).expect("goal serializes"))?;
    }
    Ok(())
}

pub fn cmd_import_multiwoz(input: &Path, output: &Path) -> Result<ImportReport, HarnessError> {
    let (corpus, report) = import_multiwoz(input)?;
    corpus.save(output)?;
    if let Some(n) = report.partial_import_warning() {
        log::warn!("partial import: skipped {n} dialogs");
    }
    Ok(report)
}

/// Loads an ontology file (for `gen-goals`).
pub fn read_ontology_file(path: &Path) -> Result<Ontology, HarnessError> {
    let o: Ontology = read_json(path)?;
    Ok(o.canonicalize())
}
