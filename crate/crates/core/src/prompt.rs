//! Prompt construction for the in-context user simulator.
//!
//! A prompt is a task description, a numbered list of example dialogs each
//! preceded by its requirements, and finally the target requirements followed
//! by the open `CUSTOMER:` cue. Every simulated turn appends the generated
//! user text and the system reply; nothing before the end of the initial
//! prompt ever changes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CorpusError, PromptError};
use crate::goalgen::{format_requirements, render_requirements, PhraseTable, RequirementsFormat};
use crate::model::{Dialog, Speaker, UserGoal};

pub const USER_CUE: &str = "CUSTOMER:";
pub const SYSTEM_CUE: &str = "ASSISTANT:";
const DOMAIN_PLACEHOLDER: &str = "<domain names>";
const DEFAULT_DESCRIPTIONS: &str = include_str!("../data/task_descriptions.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskDescriptionKind {
    #[default]
    Default,
    DefaultDomains,
    ExtraPersonality,
    Minimal,
    None,
}

impl TaskDescriptionKind {
    pub const ALL: [TaskDescriptionKind; 5] = [
        TaskDescriptionKind::Default,
        TaskDescriptionKind::DefaultDomains,
        TaskDescriptionKind::ExtraPersonality,
        TaskDescriptionKind::Minimal,
        TaskDescriptionKind::None,
    ];
}

/// Task-description texts keyed by kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskDescriptions(BTreeMap<TaskDescriptionKind, String>);

impl Default for TaskDescriptions {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_DESCRIPTIONS).expect("bundled task descriptions are valid")
    }
}

impl TaskDescriptions {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        crate::corpus::read_json(path)
    }

    pub fn text(&self, kind: TaskDescriptionKind) -> &str {
        self.0.get(&kind).map(String::as_str).unwrap_or("")
    }

    /// Renders the description. `default_domains` splices the sorted unique
    /// domains of the shots' goals into the template.
    pub fn render(
        &self,
        kind: TaskDescriptionKind,
        shots: &[&(UserGoal, Dialog)],
    ) -> Result<String, PromptError> {
        match kind {
            TaskDescriptionKind::None => Ok(String::new()),
            TaskDescriptionKind::DefaultDomains => {
                if shots.is_empty() {
                    return Err(PromptError::MissingShotsForDomains);
                }
                let mut domains: Vec<&str> = shots.iter().flat_map(|(g, _)| g.domains()).collect();
                domains.sort_unstable();
                domains.dedup();
                Ok(self.text(kind).replace(DOMAIN_PLACEHOLDER, &domains.join(", ")))
            }
            _ => Ok(self.text(kind).to_string()),
        }
    }
}

pub fn render_task_description(
    kind: TaskDescriptionKind,
    shots: &[&(UserGoal, Dialog)],
) -> Result<String, PromptError> {
    TaskDescriptions::default().render(kind, shots)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptState {
    text: String,
    turn: usize,
    target_goal: UserGoal,
    frozen_prefix_len: usize,
}

impl PromptState {
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn turn(&self) -> usize {
        self.turn
    }

    pub fn target_goal(&self) -> &UserGoal {
        &self.target_goal
    }

    pub fn frozen_prefix(&self) -> &str {
        &self.text[..self.frozen_prefix_len]
    }

    /// Appends one exchange after the trailing cue.
    pub fn extend(&self, user_utt: &str, system_utt: &str) -> Result<PromptState, PromptError> {
        let user_utt = single_line(user_utt);
        if user_utt.is_empty() {
            return Err(PromptError::EmptyUserUtterance);
        }
        let system_utt = single_line(system_utt);
        let mut text = String::with_capacity(self.text.len() + user_utt.len() + system_utt.len() + 24);
        text.push_str(&self.text);
        write!(text, " {user_utt}\n{SYSTEM_CUE} {system_utt}\n{USER_CUE}").unwrap();
        Ok(PromptState {
            text,
            turn: self.turn + 1,
            target_goal: self.target_goal.clone(),
            frozen_prefix_len: self.frozen_prefix_len,
        })
    }
}

pub fn extend_prompt(state: &PromptState, user_utt: &str, system_utt: &str) -> Result<PromptState, PromptError> {
    state.extend(user_utt, system_utt)
}

fn single_line(text: &str) -> String {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ")
}

fn push_requirements(out: &mut String, text: &str, format: RequirementsFormat) {
    let block = format_requirements(text, format);
    match format {
        RequirementsFormat::Descriptive => writeln!(out, "REQUIREMENTS: {block}").unwrap(),
        RequirementsFormat::Bullets => writeln!(out, "REQUIREMENTS:\n{block}").unwrap(),
    }
}

/// Requirement text for an example: the goal's own text when present,
/// otherwise rendered from its items.
pub fn shot_requirements(goal: &UserGoal, phrases: &PhraseTable) -> String {
    match &goal.requirements_text {
        Some(text) if !text.trim().is_empty() => text.clone(),
        _ => render_requirements(goal, RequirementsFormat::Descriptive, phrases),
    }
}

pub fn build_initial_prompt(
    description: &str,
    shots: &[&(UserGoal, Dialog)],
    target_goal: &UserGoal,
    target_requirements: &str,
    req_format: RequirementsFormat,
    phrases: &PhraseTable,
) -> Result<PromptState, PromptError> {
    let mut text = String::new();
    if !description.is_empty() {
        text.push_str(description);
        text.push_str("\n\n");
    }
    for (i, (goal, dialog)) in shots.iter().enumerate() {
        if dialog.turns().is_empty() {
            return Err(PromptError::EmptyShotDialog(dialog.id.clone()));
        }
        writeln!(text, "Example {}:", i + 1).unwrap();
        push_requirements(&mut text, &shot_requirements(goal, phrases), req_format);
        for turn in dialog.turns() {
            let cue = match turn.speaker {
                Speaker::User => USER_CUE,
                Speaker::System => SYSTEM_CUE,
            };
            writeln!(text, "{cue} {}", single_line(&turn.text)).unwrap();
        }
        text.push('\n');
    }
    writeln!(text, "Example {}:", shots.len() + 1).unwrap();
    push_requirements(&mut text, target_requirements, req_format);
    text.push_str(USER_CUE);
    let frozen_prefix_len = text.len();
    Ok(PromptState {
        text,
        turn: 0,
        target_goal: target_goal.clone(),
        frozen_prefix_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DialogActItem;

    fn goal(domain: &str) -> UserGoal {
        UserGoal::new(vec![DialogActItem::request(domain, "phone")], Some(format!("Find a {domain}.")))
            .unwrap()
    }

    fn shot(id: &str, domain: &str) -> (UserGoal, Dialog) {
        let g = goal(domain);
        let d = Dialog::from_turns(id, g.clone(), [(Speaker::User, "hi".to_string(), None)]).unwrap();
        (g, d)
    }

    #[test]
    fn none_description_is_empty() {
        assert_eq!(render_task_description(TaskDescriptionKind::None, &[]).unwrap(), "");
    }

    #[test]
    fn default_domains_needs_shots() {
        assert_eq!(
            render_task_description(TaskDescriptionKind::DefaultDomains, &[]),
            Err(PromptError::MissingShotsForDomains)
        );
    }

    #[test]
    fn zero_shot_layout() {
        let target = goal("hotel");
        let p = build_initial_prompt("Desc.", &[], &target, "Find a hotel.", RequirementsFormat::Descriptive, &PhraseTable::default()).unwrap();
        assert_eq!(p.text(), "Desc.\n\nExample 1:\nREQUIREMENTS: Find a hotel.\nCUSTOMER:");
        let p = build_initial_prompt("", &[], &target, "Find a hotel.", RequirementsFormat::Descriptive, &PhraseTable::default()).unwrap();
        assert_eq!(p.text(), "Example 1:\nREQUIREMENTS: Find a hotel.\nCUSTOMER:");
    }

    #[test]
    fn bullets_layout() {
        let target = goal("hotel");
        let p = build_initial_prompt(
            "",
            &[],
            &target,
            "You are looking for a hotel. The hotel should be in the east.",
            RequirementsFormat::Bullets,
            &PhraseTable::default(),
        )
        .unwrap();
        assert_eq!(
            p.text(),
            "Example 1:\nREQUIREMENTS:\n- You are looking for a hotel.\n- The hotel should be in the east.\nCUSTOMER:"
        );
    }

    #[test]
    fn empty_shot_dialog_rejected() {
        let g = goal("hotel");
        let empty = (g.clone(), Dialog::new("x", g.clone()));
        let err = build_initial_prompt("", &[&empty], &g, "r", RequirementsFormat::Descriptive, &PhraseTable::default());
        assert_eq!(err, Err(PromptError::EmptyShotDialog("x".into())));
    }

    #[test]
    fn extension_is_append_only() {
        let (a, b) = (shot("a", "train"), shot("b", "restaurant"));
        let target = goal("hotel");
        let p0 = build_initial_prompt("D", &[&a, &b], &target, "Find a hotel.", RequirementsFormat::Descriptive, &PhraseTable::default()).unwrap();
        assert_eq!(p0.text().matches("Example ").count(), 3);
        let p1 = p0.extend("I need a hotel.", "Which area?").unwrap();
        assert!(p1.text().starts_with(p0.text()));
        assert!(p1.text().ends_with(USER_CUE));
        assert_eq!(p1.turn(), 1);
        assert_eq!(p1.frozen_prefix(), p0.text());
        let suffix = " I need a hotel.\nASSISTANT: Which area?\nCUSTOMER:";
        assert_eq!(p1.text().strip_suffix(suffix), Some(p0.text()));
        assert_eq!(p1.extend("  \n", "x"), Err(PromptError::EmptyUserUtterance));
    }
}
