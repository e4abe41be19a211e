//! The simulation loop: prompt, generate, annotate, ask the system, decide
//! whether to stop, extend the prompt. Batches run dialogs in parallel with
//! per-dialog seeds.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{DialogRecord, TurnRecord};
use crate::diagnostics::{BreakdownFlags, DiagnosticsConfig};
use crate::error::{CorpusError, HarnessError, LlmError};
use crate::goal_metrics::{GoalEvalRecord, Validity};
use crate::goalgen::{generate_goal, render_requirements, GoalConfig, PhraseTable, RequirementsFormat};
use crate::llm::{complete, postprocess_completion, CompletionBackend, GenerationParams, LlmProvider};
use crate::model::{normalize_text, Dialog, DialogActItem, Intent, Ontology, Outcome, Speaker, UserGoal};
use crate::prompt::{build_initial_prompt, PromptState, TaskDescriptionKind, TaskDescriptions};
use crate::report::{score_sessions, Scores, SessionView};
use crate::shots::{select_shots, ShotKind, ShotStrategy};
use crate::system::{Annotator, SystemProvider, SystemSession};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShotConfig {
    pub kind: ShotKind,
    pub k: usize,
}

impl Default for ShotConfig {
    fn default() -> Self {
        ShotConfig {
            kind: ShotKind::Jaccard,
            k: 2,
        }
    }
}

pub fn default_farewell_patterns() -> Vec<String> {
    ["bye", "that is all", "that's all", "have a good day"].map(String::from).to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_dialogs: usize,
    pub max_turns: usize,
    pub seed: u64,
    pub parallelism: usize,
    pub shots: ShotConfig,
    pub task_description: TaskDescriptionKind,
    pub requirements_format: RequirementsFormat,
    pub generation: GenerationParams,
    pub farewell_patterns: Vec<String>,
    /// Extra attempts when post-processing leaves nothing.
    pub empty_generation_retries: u32,
    pub record_timing: bool,
    pub goals: GoalConfig,
    pub diagnostics: DiagnosticsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_dialogs: 200,
            max_turns: 20,
            seed: 0,
            parallelism: 1,
            shots: ShotConfig::default(),
            task_description: TaskDescriptionKind::Default,
            requirements_format: RequirementsFormat::Descriptive,
            generation: GenerationParams::default(),
            farewell_patterns: default_farewell_patterns(),
            empty_generation_retries: 1,
            record_timing: false,
            goals: GoalConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n_dialogs == 0 {
            return Err(HarnessError::Config("n_dialogs must be at least 1".into()));
        }
        if self.max_turns == 0 {
            return Err(HarnessError::Config("max_turns must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(HarnessError::Config("parallelism must be at least 1".into()));
        }
        self.goals.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    UserFarewell,
    SystemByeAcknowledged,
    MaxTurns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Continue,
    Stop(StopReason),
}

fn is_farewell(user_text: &str, patterns: &[String]) -> bool {
    let text = normalize_text(user_text);
    patterns
        .iter()
        .map(|p| normalize_text(p))
        .any(|p| !p.is_empty() && text.contains(&p))
}

/// Decides after each exchange. `turn` counts user turns so far and
/// `last_system_acts` are the acts of the system turn the user answered.
pub fn check_termination(
    last_user_acts: &[DialogActItem],
    last_system_acts: Option<&[DialogActItem]>,
    user_text: &str,
    turn: usize,
    cfg: &RunConfig,
) -> Termination {
    let farewell = is_farewell(user_text, &cfg.farewell_patterns) || last_user_acts.iter().any(|a| a.intent == Intent::Bye);
    if farewell {
        let system_bye = last_system_acts.is_some_and(|acts| acts.iter().any(|a| a.intent == Intent::Bye));
        return Termination::Stop(if system_bye {
            StopReason::SystemByeAcknowledged
        } else {
            StopReason::UserFarewell
        });
    }
    if turn >= cfg.max_turns {
        return Termination::Stop(StopReason::MaxTurns);
    }
    Termination::Continue
}

/// Everything recorded about one simulated conversation.
#[derive(Debug, Clone)]
pub struct SessionRecord {
    pub index: usize,
    pub dialog: Dialog,
    /// The prompt each user turn was generated from.
    pub prompt_trace: Vec<PromptState>,
    /// Backend output behind each user turn, before post-processing.
    pub raw_completions: Vec<String>,
    /// Prompt including the last exchange.
    pub final_prompt: PromptState,
    pub stop_reason: Option<StopReason>,
    pub failure: Option<String>,
    pub turn_ms: Option<Vec<f64>>,
}

impl SessionRecord {
    pub fn view(&self) -> SessionView<'_> {
        SessionView {
            index: self.index,
            dialog: &self.dialog,
            stop_reason: self.stop_reason,
            failure: self.failure.as_deref(),
            raw_completions: &self.raw_completions,
        }
    }

    pub fn prompt_hashes(&self) -> Vec<String> {
        self.prompt_trace.iter().map(|p| hex::encode(Sha256::digest(p.text().as_bytes()))).collect()
    }
}

/// Shared, read-only inputs for every dialog of a run.
pub struct RunContext<'a> {
    pub llm: &'a LlmProvider,
    pub system: &'a SystemProvider,
    pub annotator: &'a Annotator,
    pub shot_pool: &'a [(UserGoal, Dialog)],
    pub descriptions: &'a TaskDescriptions,
    pub phrases: &'a PhraseTable,
}

fn first_domain(acts: &[DialogActItem]) -> Option<String> {
    acts.iter().find(|a| a.domain != "general").map(|a| a.domain.clone())
}

fn generate_user_turn(
    llm: &dyn CompletionBackend,
    prompt: &PromptState,
    cfg: &RunConfig,
) -> Result<(String, String), LlmError> {
    let mut attempts = 0;
    loop {
        let raw = complete(llm, prompt.text(), &cfg.generation)?;
        match postprocess_completion(&raw) {
            Ok(text) => return Ok((raw, text)),
            Err(LlmError::EmptyGeneration) if attempts < cfg.empty_generation_retries => attempts += 1,
            Err(e) => return Err(e),
        }
    }
}

/// Runs one conversation for `goal`. `seed` drives random shot selection.
/// Backend and system failures end the dialog with a failure outcome; only
/// setup problems (shots, prompt) are errors.
pub fn run_dialog(
    index: usize,
    goal: &UserGoal,
    seed: u64,
    cfg: &RunConfig,
    ctx: &RunContext<'_>,
) -> Result<SessionRecord, HarnessError> {
    let strategy = ShotStrategy {
        kind: cfg.shots.kind,
        k: cfg.shots.k,
        seed,
    };
    let shots = select_shots(ctx.shot_pool, goal, &strategy)?;
    let description = ctx
        .descriptions
        .render(cfg.task_description, &shots)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let requirements = render_requirements(goal, cfg.requirements_format, ctx.phrases);
    let mut prompt = build_initial_prompt(&description, &shots, goal, &requirements, cfg.requirements_format, ctx.phrases)
        .map_err(|e| HarnessError::Config(e.to_string()))?;

    let llm: Arc<dyn CompletionBackend> = ctx.llm.session(index);
    let mut system: Box<dyn SystemSession> = ctx.system.session(&format!("session-{index:04}"));
    let mut dialog = Dialog::new(format!("dialog-{index:04}"), goal.clone().with_requirements(requirements.clone()));
    let mut prompt_trace = Vec::new();
    let mut raw_completions = Vec::new();
    let mut turn_ms = Vec::new();
    let mut context: Option<String> = None;
    let mut last_system_acts: Option<Vec<DialogActItem>> = None;
    let mut failure = None;
    let mut stop_reason = None;

    let outcome = loop {
        let started = Instant::now();
        let (raw, user_text) = match generate_user_turn(llm.as_ref(), &prompt, cfg) {
            Ok(pair) => pair,
            Err(e) => {
                failure = Some(e.to_string());
                break Outcome::GenerationFailure;
            }
        };
        prompt_trace.push(prompt.clone());
        raw_completions.push(raw);
        let user_acts = ctx.annotator.annotate(&user_text, Speaker::User, context.as_deref());
        if let Some(d) = first_domain(&user_acts) {
            context = Some(d);
        }
        dialog
            .push_turn(Speaker::User, user_text.clone(), Some(user_acts.clone()))
            .expect("user turn follows a system turn and is non-empty");

        let response = match system.respond(&user_text, Some(&user_acts)) {
            Ok(r) if !r.text.trim().is_empty() => r,
            Ok(_) => {
                failure = Some("system returned an empty utterance".into());
                break Outcome::SystemFailure;
            }
            Err(e) => {
                failure = Some(e.to_string());
                break Outcome::SystemFailure;
            }
        };
        if let Some(d) = first_domain(&response.acts) {
            context = Some(d);
        }
        dialog
            .push_turn(Speaker::System, response.text.clone(), Some(response.acts.clone()))
            .expect("system turn follows a user turn and is non-empty");
        prompt = prompt
            .extend(&user_text, &response.text)
            .expect("user text is non-empty after post-processing");
        turn_ms.push(started.elapsed().as_secs_f64() * 1000.0);

        let user_turns = prompt_trace.len();
        match check_termination(&user_acts, last_system_acts.as_deref(), &user_text, user_turns, cfg) {
            Termination::Continue => last_system_acts = Some(response.acts),
            Termination::Stop(reason) => {
                stop_reason = Some(reason);
                break match reason {
                    StopReason::MaxTurns => Outcome::MaxTurns,
                    _ => Outcome::Completed,
                };
            }
        }
    };
    system.close();
    dialog.finish(outcome).expect("outcome set once");
    if let Some(f) = &failure {
        log::warn!("{}: {outcome:?}: {f}", dialog.id);
    }
    Ok(SessionRecord {
        index,
        dialog,
        prompt_trace,
        raw_completions,
        final_prompt: prompt,
        stop_reason,
        failure,
        turn_ms: cfg.record_timing.then_some(turn_ms),
    })
}

/// Goal for dialog `i`, drawn with sub-seed `seed + i`.
pub fn goal_for_dialog(ontology: &Ontology, cfg: &RunConfig, i: usize) -> Result<UserGoal, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
    Ok(generate_goal(ontology, &cfg.goals, &mut rng)?)
}

pub struct ExperimentRun {
    pub sessions: Vec<SessionRecord>,
    pub scores: Scores,
    pub wall_clock_secs: Option<f64>,
}

/// Runs `cfg.n_dialogs` dialogs on up to `cfg.parallelism` threads and
/// scores them. Dialog `i` depends only on `cfg.seed + i`.
pub fn run_experiment(cfg: &RunConfig, ctx: &RunContext<'_>, ontology: &Ontology) -> Result<ExperimentRun, HarnessError> {
    cfg.validate()?;
    if ctx.shot_pool.len() < cfg.shots.k {
        return Err(HarnessError::Config(format!(
            "shot pool holds {} dialogs, {} shots requested",
            ctx.shot_pool.len(),
            cfg.shots.k
        )));
    }
    let started = Instant::now();
    let goals = (0..cfg.n_dialogs)
        .map(|i| goal_for_dialog(ontology, cfg, i))
        .collect::<Result<Vec<_>, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let sessions = pool.install(|| {
        goals
            .par_iter()
            .enumerate()
            .map(|(i, goal)| run_dialog(i, goal, cfg.seed.wrapping_add(i as u64), cfg, ctx))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let validity = match ctx.system.database() {
        Some(db) => Validity::Database(db),
        None => Validity::Ontology(ontology),
    };
    let views: Vec<SessionView<'_>> = sessions.iter().map(SessionRecord::view).collect();
    let scores = score_sessions(&views, validity, &cfg.diagnostics);
    Ok(ExperimentRun {
        sessions,
        scores,
        wall_clock_secs: cfg.record_timing.then(|| started.elapsed().as_secs_f64()),
    })
}

/// One JSONL line of a transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptRecord {
    pub index: usize,
    pub id: String,
    pub goal: UserGoal,
    pub turns: Vec<TurnRecord>,
    pub outcome: Outcome,
    pub stop_reason: Option<StopReason>,
    pub failure: Option<String>,
    pub raw_completions: Vec<String>,
    pub prompt_hashes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_ms: Option<Vec<f64>>,
    pub eval: Option<GoalEvalRecord>,
    pub eval_error: Option<String>,
    pub flags: BreakdownFlags,
}

impl TranscriptRecord {
    pub fn new(session: &SessionRecord, eval: Result<&GoalEvalRecord, &str>, flags: &BreakdownFlags) -> Self {
        let record = DialogRecord::from_dialog(&session.dialog);
        TranscriptRecord {
            index: session.index,
            id: record.id,
            goal: record.goal,
            turns: record.turns,
            outcome: session.dialog.outcome().expect("finished session"),
            stop_reason: session.stop_reason,
            failure: session.failure.clone(),
            raw_completions: session.raw_completions.clone(),
            prompt_hashes: session.prompt_hashes(),
            turn_ms: session.turn_ms.clone(),
            eval: eval.ok().cloned(),
            eval_error: eval.err().map(str::to_string),
            flags: flags.clone(),
        }
    }

    pub fn to_dialog(&self) -> Result<Dialog, CorpusError> {
        let mut dialog = DialogRecord {
            id: self.id.clone(),
            goal: self.goal.clone(),
            turns: self.turns.clone(),
        }
        .to_dialog()?;
        dialog.finish(self.outcome)?;
        Ok(dialog)
    }
}
