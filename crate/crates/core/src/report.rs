//! Scoring of finished sessions and the goal / lexical-diversity report
//! tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::diagnostics::{diagnose, BreakdownFlags, DiagnosticsConfig, FlagSummary};
use crate::error::HarnessError;
use crate::goal_metrics::{aggregate_metrics, evaluate_dialog, GoalAggregate, GoalEvalRecord, Validity};
use crate::lexdiv::{LexParams, LexReport};
use crate::model::{Dialog, Outcome};
use crate::orchestrator::StopReason;

/// Borrowed view of a finished session, enough to score it.
#[derive(Debug, Clone, Copy)]
pub struct SessionView<'a> {
    pub index: usize,
    pub dialog: &'a Dialog,
    pub stop_reason: Option<StopReason>,
    pub failure: Option<&'a str>,
    pub raw_completions: &'a [String],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogResult {
    pub index: usize,
    pub id: String,
    pub outcome: Outcome,
    pub stop_reason: Option<StopReason>,
    pub failure: Option<String>,
    pub eval: Option<GoalEvalRecord>,
    pub eval_error: Option<String>,
    pub flags: BreakdownFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub dialogs: Vec<DialogResult>,
    pub goal_table: Option<GoalAggregate>,
    pub lex_table: LexReport,
    pub flag_summary: FlagSummary,
    pub outcomes: BTreeMap<String, usize>,
}

fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Completed => "completed",
        Outcome::MaxTurns => "max_turns",
        Outcome::GenerationFailure => "generation_failure",
        Outcome::SystemFailure => "system_failure",
    }
}

/// Goal evaluation, breakdown flags and lexical diversity of the user turns.
/// Dialogs that cannot be evaluated keep their error and are left out of
/// the goal table.
pub fn score_sessions(sessions: &[SessionView<'_>], validity: Validity<'_>, diag: &DiagnosticsConfig) -> Scores {
    let mut dialogs = Vec::with_capacity(sessions.len());
    let mut outcomes = BTreeMap::new();
    let mut utterances = Vec::new();
    for s in sessions {
        let outcome = s.dialog.outcome().unwrap_or(Outcome::GenerationFailure);
        *outcomes.entry(outcome_name(outcome).to_string()).or_insert(0) += 1;
        utterances.extend(s.dialog.user_turns().map(|t| t.text.clone()));
        let eval = evaluate_dialog(s.dialog, &s.dialog.goal, validity);
        let flags = diagnose(s.dialog, s.raw_completions, eval.as_ref().ok(), diag);
        dialogs.push(DialogResult {
            index: s.index,
            id: s.dialog.id.clone(),
            outcome,
            stop_reason: s.stop_reason,
            failure: s.failure.map(str::to_string),
            eval_error: eval.as_ref().err().map(|e| e.to_string()),
            eval: eval.ok(),
            flags,
        });
    }
    let evals: Vec<GoalEvalRecord> = dialogs.iter().filter_map(|d| d.eval.clone()).collect();
    Scores {
        goal_table: aggregate_metrics(&evals).ok(),
        lex_table: LexReport::from_utterances(&utterances, &LexParams::default()),
        flag_summary: FlagSummary::from_flags(dialogs.iter().map(|d| &d.flags)),
        outcomes,
        dialogs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub run_id: String,
    /// Configuration as written plus command-line overrides.
    pub config: Value,
    /// Directory relative config paths resolve against.
    pub config_dir: PathBuf,
    #[serde(flatten)]
    pub scores: Scores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_secs: Option<f64>,
}

impl ExperimentResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes") + "\n"
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        crate::corpus::read_json(path).map_err(HarnessError::from)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Markdown,
    Json,
}

fn opt(v: Option<f64>, places: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.places$}"))
}

fn count(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}

fn pct(v: f64) -> String {
    format!("{:.1}%", v * 100.0)
}

/// Goal, lexical and breakdown tables with one row per run, in the given
/// order.
pub fn render_markdown(results: &[&ExperimentResult]) -> String {
    let mut out = String::new();
    out.push_str("## Goal fulfillment\n\n");
    out.push_str("| Run | Dialogs | Compl Rate | Succ Rate | Book Rate | Inform Prec | Inform Rec | Inform F1 | Succ DT | DT |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n");
    for r in results {
        match &r.scores.goal_table {
            Some(g) => writeln!(
                out,
                "| {} | {} | {:.2} | {:.2} | {} | {:.2} | {:.2} | {:.2} | {} | {:.2} |",
                r.run_id,
                g.n_dialogs,
                g.compl_rate,
                g.succ_rate,
                opt(g.book_rate, 2),
                g.inform_precision,
                g.inform_recall,
                g.inform_f1,
                opt(g.succ_dt, 2),
                g.dt
            ),
            None => writeln!(out, "| {} | 0 | - | - | - | - | - | - | - | - |", r.run_id),
        }
        .unwrap();
    }
    out.push_str("\n## Lexical diversity\n\n");
    out.push_str("| Run | #UUtt | UUtt Length | Unigrams | Bigrams | Trigrams | SE | CE | MSTTR | HDD | MTLD |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n");
    for r in results {
        let l = &r.scores.lex_table;
        writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            r.run_id,
            count(l.n_utterances),
            opt(l.utterance_length, 2),
            count(l.unigrams),
            count(l.bigrams),
            count(l.trigrams),
            opt(l.shannon_entropy, 2),
            opt(l.conditional_entropy, 2),
            opt(l.msttr, 2),
            opt(l.hdd, 2),
            opt(l.mtld, 2)
        )
        .unwrap();
    }
    out.push_str("\n## Breakdowns\n\n");
    out.push_str("| Run | Premature termination | Repetition | Role confusion | Goal contradiction |\n");
    out.push_str("|---|---:|---:|---:|---:|\n");
    for r in results {
        let f = &r.scores.flag_summary;
        writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            r.run_id,
            pct(f.premature_termination),
            pct(f.repetition),
            pct(f.role_confusion),
            pct(f.goal_contradiction)
        )
        .unwrap();
    }
    out
}

pub fn render_json(results: &[&ExperimentResult]) -> String {
    let rows = |f: &dyn Fn(&ExperimentResult) -> Value| -> Vec<Value> {
        results
            .iter()
            .map(|r| {
                let mut v = f(r);
                if let Value::Object(map) = &mut v {
                    map.insert("run_id".into(), json!(r.run_id));
                }
                v
            })
            .collect()
    };
    let doc = json!({
        "goal_table": rows(&|r| r.scores.goal_table.as_ref().map_or(json!({}), |g| json!(g))),
        "lex_table": rows(&|r| json!(r.scores.lex_table)),
        "breakdowns": rows(&|r| json!(r.scores.flag_summary)),
    });
    serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
}

fn collect_results(dir: &Path, out: &mut Vec<PathBuf>, depth: usize) -> std::io::Result<()> {
    let direct = dir.join("result.json");
    if direct.is_file() {
        out.push(direct);
    }
    if depth == 0 {
        return Ok(());
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_results(&path, out, depth - 1)?;
        }
    }
    Ok(())
}

/// Renders every `result.json` under `dir` (up to two levels deep), one row
/// per run sorted by run id.
pub fn cmd_report(dir: &Path, format: ReportFormat) -> Result<String, HarnessError> {
    let mut paths = Vec::new();
    collect_results(dir, &mut paths, 2).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    if paths.is_empty() {
        return Err(HarnessError::NoResults(dir.to_path_buf()));
    }
    let mut results = paths
        .iter()
        .map(|p| ExperimentResult::load(p))
        .collect::<Result<Vec<_>, _>>()?;
    results.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    let refs: Vec<&ExperimentResult> = results.iter().collect();
    Ok(match format {
        ReportFormat::Markdown => render_markdown(&refs),
        ReportFormat::Json => render_json(&refs),
    })
}
