//! Shared domain types: dialog acts, user goals, dialogs and the ontology.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ModelError;

/// Canonical text form used for matching and tokenization.
///
/// Lowercases, trims, collapses whitespace runs to a single space and detaches
/// every punctuation character into its own space-delimited token.
pub fn normalize_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len() + 8);
    let mut pending_space = false;
    for ch in raw.chars() {
        if ch.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if is_punct(ch) {
            if !out.is_empty() {
                out.push(' ');
            }
            out.extend(ch.to_lowercase());
            pending_space = true;
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.extend(ch.to_lowercase());
    }
    out
}

fn is_punct(ch: char) -> bool {
    ch.is_ascii_punctuation()
        || matches!(
            ch,
            '\u{2018}' | '\u{2019}' | '\u{201c}' | '\u{201d}' | '\u{2026}' | '\u{2013}' | '\u{2014}'
        )
}

/// Dialog act intent. The vocabulary is open: anything outside the four core
/// intents round-trips through `Other`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Intent {
    Inform,
    Request,
    Book,
    Bye,
    Other(String),
}

impl Intent {
    pub fn parse(token: &str) -> Intent {
        let token = token.trim().to_lowercase();
        match token.as_str() {
            "inform" => Intent::Inform,
            "request" => Intent::Request,
            "book" => Intent::Book,
            "bye" => Intent::Bye,
            _ => Intent::Other(token),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Intent::Inform => "inform",
            Intent::Request => "request",
            Intent::Book => "book",
            Intent::Bye => "bye",
            Intent::Other(s) => s,
        }
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Intent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Intent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Intent::parse(&s))
    }
}

/// One (intent, domain, slot, value) semantic action.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DialogActItem {
    pub intent: Intent,
    pub domain: String,
    pub slot: String,
    pub value: String,
}

impl DialogActItem {
    /// Builds a validated item. Intent, domain and slot are lowercased and
    /// trimmed; the value is trimmed but otherwise kept as given.
    pub fn new(
        intent: impl AsRef<str>,
        domain: impl AsRef<str>,
        slot: impl AsRef<str>,
        value: impl AsRef<str>,
    ) -> Result<Self, ModelError> {
        let intent = Intent::parse(intent.as_ref());
        let domain = domain.as_ref().trim().to_lowercase();
        let slot = slot.as_ref().trim().to_lowercase();
        let value = value.as_ref().trim().to_string();
        if intent.as_str().is_empty() {
            return Err(ModelError::InvalidAct("empty intent".into()));
        }
        if domain.is_empty() {
            return Err(ModelError::InvalidAct(format!("empty domain for {intent}")));
        }
        match intent {
            Intent::Request if !value.is_empty() => {
                return Err(ModelError::InvalidAct(format!(
                    "request {domain}.{slot} carries value {value:?}"
                )))
            }
            Intent::Inform | Intent::Book if slot.is_empty() => {
                return Err(ModelError::InvalidAct(format!("{intent} on {domain} without slot")))
            }
            _ => {}
        }
        Ok(DialogActItem {
            intent,
            domain,
            slot,
            value,
        })
    }

    pub fn inform(domain: &str, slot: &str, value: &str) -> Self {
        Self::new("inform", domain, slot, value).expect("valid inform")
    }

    pub fn request(domain: &str, slot: &str) -> Self {
        Self::new("request", domain, slot, "").expect("valid request")
    }

    pub fn book(domain: &str, slot: &str, value: &str) -> Self {
        Self::new("book", domain, slot, value).expect("valid book")
    }

    pub fn bye() -> Self {
        Self::new("bye", "general", "", "").expect("valid bye")
    }

    /// `[intent, domain, slot, value]`, the array form used on the wire.
    pub fn to_quad(&self) -> [String; 4] {
        [
            self.intent.as_str().to_string(),
            self.domain.clone(),
            self.slot.clone(),
            self.value.clone(),
        ]
    }

    pub fn from_quad(q: &[String; 4]) -> Result<Self, ModelError> {
        Self::new(&q[0], &q[1], &q[2], &q[3])
    }

    pub fn is_inform_like(&self) -> bool {
        matches!(self.intent, Intent::Inform | Intent::Book)
    }
}

impl<'de> Deserialize<'de> for DialogActItem {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            intent: String,
            domain: String,
            #[serde(default)]
            slot: String,
            #[serde(default)]
            value: String,
        }
        let raw = Raw::deserialize(d)?;
        DialogActItem::new(raw.intent, raw.domain, raw.slot, raw.value)
            .map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for DialogActItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.intent, self.domain, self.slot, self.value)
    }
}

/// True iff all four fields agree after `normalize_text`.
pub fn acts_match(a: &DialogActItem, b: &DialogActItem) -> bool {
    normalize_text(a.intent.as_str()) == normalize_text(b.intent.as_str())
        && normalize_text(&a.domain) == normalize_text(&b.domain)
        && normalize_text(&a.slot) == normalize_text(&b.slot)
        && normalize_text(&a.value) == normalize_text(&b.value)
}

/// Normalized value equality, the comparison used by metrics and diagnostics.
pub fn values_match(a: &str, b: &str) -> bool {
    normalize_text(a) == normalize_text(b)
}

/// Ordered list of act items the simulated user must fulfill.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UserGoal {
    items: Vec<DialogActItem>,
    pub requirements_text: Option<String>,
}

impl UserGoal {
    pub fn new(
        items: Vec<DialogActItem>,
        requirements_text: Option<String>,
    ) -> Result<Self, ModelError> {
        if items.is_empty() {
            return Err(ModelError::EmptyGoal);
        }
        let mut seen = BTreeSet::new();
        for item in items.iter().filter(|i| i.is_inform_like()) {
            if !seen.insert((item.domain.as_str(), item.slot.as_str())) {
                return Err(ModelError::DuplicateGoalSlot {
                    domain: item.domain.clone(),
                    slot: item.slot.clone(),
                });
            }
        }
        Ok(UserGoal {
            items,
            requirements_text,
        })
    }

    pub fn items(&self) -> &[DialogActItem] {
        &self.items
    }

    /// Domains in order of first appearance.
    pub fn domains(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for item in &self.items {
            if !out.contains(&item.domain.as_str()) {
                out.push(&item.domain);
            }
        }
        out
    }

    pub fn with_requirements(mut self, text: impl Into<String>) -> Self {
        self.requirements_text = Some(text.into());
        self
    }

    pub fn informs(&self) -> impl Iterator<Item = &DialogActItem> {
        self.items.iter().filter(|i| i.intent == Intent::Inform)
    }

    pub fn requests(&self) -> impl Iterator<Item = &DialogActItem> {
        self.items.iter().filter(|i| i.intent == Intent::Request)
    }

    pub fn bookings(&self) -> impl Iterator<Item = &DialogActItem> {
        self.items.iter().filter(|i| i.intent == Intent::Book)
    }

    /// Goal-specified value for a constraint or booking slot.
    pub fn constraint_value(&self, domain: &str, slot: &str) -> Option<&str> {
        self.items
            .iter()
            .find(|i| i.is_inform_like() && i.domain == domain && i.slot == slot)
            .map(|i| i.value.as_str())
    }
}

impl<'de> Deserialize<'de> for UserGoal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            items: Vec<DialogActItem>,
            #[serde(default)]
            requirements_text: Option<String>,
        }
        let raw = Raw::deserialize(d)?;
        UserGoal::new(raw.items, raw.requirements_text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    #[serde(rename = "USER")]
    User,
    #[serde(rename = "SYSTEM")]
    System,
}

impl Speaker {
    pub fn other(self) -> Speaker {
        match self {
            Speaker::User => Speaker::System,
            Speaker::System => Speaker::User,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    pub acts: Option<Vec<DialogActItem>>,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Completed,
    MaxTurns,
    GenerationFailure,
    SystemFailure,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialog {
    pub id: String,
    pub goal: UserGoal,
    turns: Vec<Turn>,
    outcome: Option<Outcome>,
}

impl Dialog {
    pub fn new(id: impl Into<String>, goal: UserGoal) -> Self {
        Dialog {
            id: id.into(),
            goal,
            turns: Vec::new(),
            outcome: None,
        }
    }

    /// Builds a dialog from `(speaker, text, acts)` triples, checking
    /// alternation and non-empty texts.
    pub fn from_turns(
        id: impl Into<String>,
        goal: UserGoal,
        turns: impl IntoIterator<Item = (Speaker, String, Option<Vec<DialogActItem>>)>,
    ) -> Result<Self, ModelError> {
        let mut dialog = Dialog::new(id, goal);
        for (speaker, text, acts) in turns {
            dialog.push_turn(speaker, text, acts)?;
        }
        Ok(dialog)
    }

    pub fn push_turn(
        &mut self,
        speaker: Speaker,
        text: impl Into<String>,
        acts: Option<Vec<DialogActItem>>,
    ) -> Result<&Turn, ModelError> {
        let text = text.into();
        let index = self.turns.len();
        let expected = match self.turns.last() {
            None => Speaker::User,
            Some(t) => t.speaker.other(),
        };
        if speaker != expected {
            return Err(ModelError::Alternation {
                dialog: self.id.clone(),
                index,
            });
        }
        if text.trim().is_empty() {
            return Err(ModelError::EmptyTurn {
                dialog: self.id.clone(),
                index,
            });
        }
        self.turns.push(Turn {
            speaker,
            text,
            acts,
            index,
        });
        Ok(&self.turns[index])
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn turns_mut(&mut self) -> impl Iterator<Item = &mut Turn> {
        self.turns.iter_mut()
    }

    pub fn user_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.speaker == Speaker::User)
    }

    pub fn system_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.speaker == Speaker::System)
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    /// Sets the terminal outcome. A second call is an error.
    pub fn finish(&mut self, outcome: Outcome) -> Result<(), ModelError> {
        if self.outcome.is_some() {
            return Err(ModelError::OutcomeAlreadySet(self.id.clone()));
        }
        self.outcome = Some(outcome);
        Ok(())
    }
}

/// Closed-world vocabulary: domain -> slot -> allowed values, plus the slots
/// that take part in bookings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ontology {
    pub domains: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    #[serde(default)]
    pub bookable_slots: BTreeMap<String, Vec<String>>,
}

impl Ontology {
    /// Lowercases every key; values are kept verbatim.
    pub fn canonicalize(mut self) -> Self {
        self.domains = self
            .domains
            .into_iter()
            .map(|(d, slots)| {
                let slots = slots
                    .into_iter()
                    .map(|(s, vals)| (s.trim().to_lowercase(), vals))
                    .collect();
                (d.trim().to_lowercase(), slots)
            })
            .collect();
        self.bookable_slots = self
            .bookable_slots
            .into_iter()
            .map(|(d, slots)| {
                (
                    d.trim().to_lowercase(),
                    slots.into_iter().map(|s| s.trim().to_lowercase()).collect(),
                )
            })
            .collect();
        self
    }

    pub fn is_empty(&self) -> bool {
        self.domains.values().all(|slots| slots.is_empty())
    }

    pub fn has_domain(&self, domain: &str) -> bool {
        self.domains.contains_key(domain)
    }

    pub fn has_slot(&self, domain: &str, slot: &str) -> bool {
        self.domains.get(domain).is_some_and(|s| s.contains_key(slot))
    }

    pub fn values(&self, domain: &str, slot: &str) -> &[String] {
        self.domains
            .get(domain)
            .and_then(|s| s.get(slot))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Normalized membership test for a value.
    pub fn contains_value(&self, domain: &str, slot: &str, value: &str) -> bool {
        let needle = normalize_text(value);
        self.values(domain, slot)
            .iter()
            .any(|v| normalize_text(v) == needle)
    }

    pub fn bookable(&self, domain: &str) -> &[String] {
        self.bookable_slots
            .get(domain)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_bookable(&self, domain: &str, slot: &str) -> bool {
        self.bookable(domain).iter().any(|s| s == slot)
    }

    /// Adds a value, keeping each slot's list free of normalized duplicates.
    pub fn insert_value(&mut self, domain: &str, slot: &str, value: &str) {
        let values = self
            .domains
            .entry(domain.to_string())
            .or_default()
            .entry(slot.to_string())
            .or_default();
        let norm = normalize_text(value);
        if !value.is_empty() && !values.iter().any(|v| normalize_text(v) == norm) {
            values.push(value.to_string());
        }
    }
}
