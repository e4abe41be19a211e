//! Breakdown detectors for finished conversations: giving up early,
//! repeating oneself, speaking as the assistant, and contradicting the goal.

use serde::{Deserialize, Serialize};

use crate::goal_metrics::GoalEvalRecord;
use crate::model::{normalize_text, values_match, Dialog, Outcome, UserGoal};
use crate::prompt::SYSTEM_CUE;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub repetition_k: usize,
    /// Phrases only an assistant would say.
    pub assistant_patterns: Vec<String>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            repetition_k: 3,
            assistant_patterns: ["reference number is", "booking was successful", "thank you for contacting"]
                .map(String::from)
                .to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalContradiction {
    pub turn: usize,
    pub domain: String,
    pub slot: String,
    pub goal_value: String,
    pub uttered_value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakdownFlags {
    pub premature_termination: bool,
    pub repetition: bool,
    pub repetition_turn: Option<usize>,
    pub role_confusion: bool,
    pub role_confusion_turn: Option<usize>,
    pub goal_contradictions: Vec<GoalContradiction>,
}

/// The user said goodbye while bookings were unfilled or requested
/// information was still missing.
pub fn detect_premature_termination(dialog: &Dialog, eval: &GoalEvalRecord) -> bool {
    dialog.outcome() == Some(Outcome::Completed) && (eval.complete == 0 || eval.inform_fn > 0)
}

/// Turn index at which `k` consecutive identical user utterances are first
/// reached.
pub fn detect_repetition(dialog: &Dialog, k: usize) -> Option<usize> {
    let k = k.max(1);
    let mut run = 0;
    let mut last: Option<String> = None;
    for turn in dialog.user_turns() {
        let norm = normalize_text(&turn.text);
        run = if last.as_ref() == Some(&norm) { run + 1 } else { 1 };
        if run >= k {
            return Some(turn.index);
        }
        last = Some(norm);
    }
    None
}

/// First turn where the simulator spoke for the assistant, either in the raw
/// completion or in the kept user text.
pub fn detect_role_confusion(dialog: &Dialog, raw_completions: &[String], patterns: &[String]) -> Option<usize> {
    let user_turns: Vec<_> = dialog.user_turns().collect();
    let last_index = dialog.turns().last().map_or(0, |t| t.index);
    let from_raw = raw_completions
        .iter()
        .position(|raw| raw.contains(SYSTEM_CUE))
        .map(|j| user_turns.get(j).map_or(last_index, |t| t.index));
    let patterns: Vec<String> = patterns.iter().map(|p| normalize_text(p)).filter(|p| !p.is_empty()).collect();
    let from_text = user_turns
        .iter()
        .find(|t| {
            let norm = normalize_text(&t.text);
            patterns.iter().any(|p| norm.contains(p.as_str()))
        })
        .map(|t| t.index);
    match (from_raw, from_text) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// User informs whose value differs from the goal's value for that slot.
pub fn detect_goal_contradiction(dialog: &Dialog, goal: &UserGoal) -> Vec<GoalContradiction> {
    let mut out = Vec::new();
    for turn in dialog.user_turns() {
        for act in turn.acts.iter().flatten().filter(|a| a.is_inform_like()) {
            if let Some(want) = goal.constraint_value(&act.domain, &act.slot) {
                if !values_match(want, &act.value) {
                    out.push(GoalContradiction {
                        turn: turn.index,
                        domain: act.domain.clone(),
                        slot: act.slot.clone(),
                        goal_value: want.to_string(),
                        uttered_value: act.value.clone(),
                    });
                }
            }
        }
    }
    out
}

/// Runs every detector. Premature termination needs a goal evaluation and
/// is false without one.
pub fn diagnose(
    dialog: &Dialog,
    raw_completions: &[String],
    eval: Option<&GoalEvalRecord>,
    cfg: &DiagnosticsConfig,
) -> BreakdownFlags {
    let repetition_turn = detect_repetition(dialog, cfg.repetition_k);
    let role_confusion_turn = detect_role_confusion(dialog, raw_completions, &cfg.assistant_patterns);
    BreakdownFlags {
        premature_termination: eval.is_some_and(|e| detect_premature_termination(dialog, e)),
        repetition: repetition_turn.is_some(),
        repetition_turn,
        role_confusion: role_confusion_turn.is_some(),
        role_confusion_turn,
        goal_contradictions: detect_goal_contradiction(dialog, &dialog.goal),
    }
}

/// Share of dialogs raising each flag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlagSummary {
    pub premature_termination: f64,
    pub repetition: f64,
    pub role_confusion: f64,
    pub goal_contradiction: f64,
}

impl FlagSummary {
    pub fn from_flags<'a>(flags: impl IntoIterator<Item = &'a BreakdownFlags>) -> FlagSummary {
        let mut n = 0usize;
        let mut counts = [0usize; 4];
        for f in flags {
            n += 1;
            counts[0] += usize::from(f.premature_termination);
            counts[1] += usize::from(f.repetition);
            counts[2] += usize::from(f.role_confusion);
            counts[3] += usize::from(!f.goal_contradictions.is_empty());
        }
        if n == 0 {
            return FlagSummary::default();
        }
        let share = |c: usize| c as f64 / n as f64;
        FlagSummary {
            premature_termination: share(counts[0]),
            repetition: share(counts[1]),
            role_confusion: share(counts[2]),
            goal_contradiction: share(counts[3]),
        }
    }
}
