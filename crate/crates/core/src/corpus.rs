//! Corpus ingestion, serialization, MultiWOZ import and the human
//! lexical-diversity baseline.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CorpusError;
use crate::lexdiv::{LexParams, LexReport};
use crate::model::{Dialog, DialogActItem, Intent, Ontology, Speaker, UserGoal};

pub const DEFAULT_BASELINE_REPETITIONS: usize = 1000;
pub const DEFAULT_BASELINE_DIALOGS: usize = 200;

/// Reads and deserializes a JSON file; schema errors carry a JSON pointer.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_json_str(&text)
}

pub fn from_json_str<T: DeserializeOwned>(text: &str) -> Result<T, CorpusError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| CorpusError::Schema {
        pointer: json_pointer(err.path()),
        message: err.inner().to_string(),
    })
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    #[default]
    Unspecified,
}

/// Wire form of one turn: acts travel as `[intent, domain, slot, value]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnRecord {
    pub speaker: Speaker,
    pub text: String,
    pub acts: Option<Vec<[String; 4]>>,
}

/// Wire form of a dialog, shared by corpus files and transcripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogRecord {
    pub id: String,
    pub goal: UserGoal,
    pub turns: Vec<TurnRecord>,
}

impl DialogRecord {
    pub fn from_dialog(dialog: &Dialog) -> Self {
        DialogRecord {
            id: dialog.id.clone(),
            goal: dialog.goal.clone(),
            turns: dialog
                .turns()
                .iter()
                .map(|t| TurnRecord {
                    speaker: t.speaker,
                    text: t.text.clone(),
                    acts: t
                        .acts
                        .as_ref()
                        .map(|acts| acts.iter().map(DialogActItem::to_quad).collect()),
                })
                .collect(),
        }
    }

    pub fn to_dialog(&self) -> Result<Dialog, CorpusError> {
        let mut dialog = Dialog::new(self.id.clone(), self.goal.clone());
        for (i, turn) in self.turns.iter().enumerate() {
            let acts = match &turn.acts {
                None => None,
                Some(quads) => Some(
                    quads
                        .iter()
                        .map(DialogActItem::from_quad)
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| {
                            CorpusError::Validation(format!("dialog {} turn {i}: {e}", self.id))
                        })?,
                ),
            };
            dialog.push_turn(turn.speaker, turn.text.clone(), acts)?;
        }
        Ok(dialog)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusFile {
    split: Split,
    ontology: Ontology,
    dialogs: Vec<DialogRecord>,
}

/// An act or goal token that does not resolve against the ontology.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum UnknownToken {
    Domain(String),
    Slot { domain: String, slot: String },
    Value { domain: String, slot: String, value: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub split: Split,
    pub ontology: Ontology,
    pub dialogs: Vec<Dialog>,
    pub unknown_tokens: BTreeSet<UnknownToken>,
}

impl Corpus {
    /// Validates dialogs and builds the unknown-token report.
    pub fn new(split: Split, ontology: Ontology, dialogs: Vec<Dialog>) -> Result<Self, CorpusError> {
        let ontology = ontology.canonicalize();
        let mut ids = HashSet::new();
        for d in &dialogs {
            if !ids.insert(d.id.as_str()) {
                return Err(CorpusError::Validation(format!("duplicate dialog id {}", d.id)));
            }
        }
        let unknown_tokens = unknown_tokens(&ontology, &dialogs);
        Ok(Corpus {
            split,
            ontology,
            dialogs,
            unknown_tokens,
        })
    }

    pub fn to_json(&self) -> String {
        let file = CorpusFile {
            split: self.split,
            ontology: self.ontology.clone(),
            dialogs: self.dialogs.iter().map(DialogRecord::from_dialog).collect(),
        };
        serde_json::to_string_pretty(&file).expect("corpus serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let file: CorpusFile = from_json_str(text)?;
        let dialogs = file
            .dialogs
            .iter()
            .map(DialogRecord::to_dialog)
            .collect::<Result<Vec<_>, _>>()?;
        Corpus::new(file.split, file.ontology, dialogs)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_json() + "\n").map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// (goal, dialog) pairs used as in-context examples.
    pub fn shot_pool(&self) -> Vec<(UserGoal, Dialog)> {
        self.dialogs
            .iter()
            .filter(|d| !d.turns().is_empty())
            .map(|d| (d.goal.clone(), d.clone()))
            .collect()
    }
}

fn check_item(ontology: &Ontology, item: &DialogActItem, out: &mut BTreeSet<UnknownToken>) {
    if matches!(item.intent, Intent::Bye) || item.domain == "general" {
        return;
    }
    if !ontology.has_domain(&item.domain) {
        out.insert(UnknownToken::Domain(item.domain.clone()));
        return;
    }
    if item.slot.is_empty() {
        return;
    }
    if !ontology.has_slot(&item.domain, &item.slot) {
        out.insert(UnknownToken::Slot {
            domain: item.domain.clone(),
            slot: item.slot.clone(),
        });
        return;
    }
    if item.is_inform_like()
        && !item.value.is_empty()
        && !ontology.contains_value(&item.domain, &item.slot, &item.value)
    {
        out.insert(UnknownToken::Value {
            domain: item.domain.clone(),
            slot: item.slot.clone(),
            value: item.value.clone(),
        });
    }
}

fn unknown_tokens(ontology: &Ontology, dialogs: &[Dialog]) -> BTreeSet<UnknownToken> {
    let mut out = BTreeSet::new();
    for d in dialogs {
        for item in d.goal.items() {
            check_item(ontology, item, &mut out);
        }
        for turn in d.turns() {
            for item in turn.acts.iter().flatten() {
                check_item(ontology, item, &mut out);
            }
        }
    }
    out
}

pub fn parse_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Corpus::from_json(&text)
}

/// What the MultiWOZ importer left out.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ImportReport {
    pub skipped_dialogs: Vec<(String, String)>,
    pub skipped_constructs: Vec<String>,
}

impl ImportReport {
    /// Number of dialogs dropped; non-zero means the import was partial.
    pub fn partial_import_warning(&self) -> Option<usize> {
        (!self.skipped_dialogs.is_empty()).then_some(self.skipped_dialogs.len())
    }
}

const SLOT_ALIASES: &[(&str, &str)] = &[
    ("addr", "address"),
    ("post", "postcode"),
    ("price", "pricerange"),
    ("depart", "departure"),
    ("dest", "destination"),
    ("leave", "leaveat"),
    ("arrive", "arriveby"),
    ("fee", "entrancefee"),
    ("entrance fee", "entrancefee"),
    ("ticket", "price"),
    ("car", "type"),
    ("id", "trainid"),
];

fn canonical_slot(raw: &str) -> String {
    let slot = raw.trim().to_lowercase();
    if slot == "none" {
        return String::new();
    }
    SLOT_ALIASES
        .iter()
        .find(|(alias, _)| *alias == slot)
        .map(|(_, canon)| canon.to_string())
        .unwrap_or(slot)
}

fn canonical_value(raw: &str) -> String {
    match raw.trim() {
        "none" | "?" => String::new(),
        v => v.to_string(),
    }
}

fn strip_tags(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_tag = false;
    for c in text.chars() {
        match c {
            '<' => in_tag = true,
            '>' => in_tag = false,
            _ if !in_tag => out.push(c),
            _ => {}
        }
    }
    out
}

fn schema_err(pointer: String, message: impl Into<String>) -> CorpusError {
    CorpusError::Schema {
        pointer,
        message: message.into(),
    }
}

fn import_goal(id: &str, raw: &Value, report: &mut ImportReport) -> Result<Option<UserGoal>, CorpusError> {
    let obj = raw
        .as_object()
        .ok_or_else(|| schema_err(format!("/{id}/goal"), "goal is not an object"))?;
    let mut items: Vec<DialogActItem> = Vec::new();
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    let mut push = |item: DialogActItem, items: &mut Vec<DialogActItem>, report: &mut ImportReport| {
        if item.is_inform_like() && !seen.insert((item.domain.clone(), item.slot.clone())) {
            report
                .skipped_constructs
                .push(format!("{id}: duplicate goal slot {}.{}", item.domain, item.slot));
            return;
        }
        items.push(item);
    };
    for (domain, block) in obj {
        if domain == "message" || domain == "topic" {
            continue;
        }
        let Some(block) = block.as_object() else { continue };
        let domain = domain.to_lowercase();
        for key in ["fail_info", "fail_book"] {
            if block.get(key).and_then(Value::as_object).is_some_and(|m| !m.is_empty()) {
                report
                    .skipped_constructs
                    .push(format!("{id}: {domain}.{key} revision not imported"));
            }
        }
        if let Some(info) = block.get("info").and_then(Value::as_object) {
            for (slot, value) in info {
                let Some(value) = value.as_str() else { continue };
                match DialogActItem::new("inform", &domain, canonical_slot(slot), value) {
                    Ok(item) => push(item, &mut items, report),
                    Err(e) => report.skipped_constructs.push(format!("{id}: {e}")),
                }
            }
        }
        if let Some(reqt) = block.get("reqt").and_then(Value::as_array) {
            for slot in reqt.iter().filter_map(Value::as_str) {
                match DialogActItem::new("request", &domain, canonical_slot(slot), "") {
                    Ok(item) => push(item, &mut items, report),
                    Err(e) => report.skipped_constructs.push(format!("{id}: {e}")),
                }
            }
        }
        if let Some(book) = block.get("book").and_then(Value::as_object) {
            for (slot, value) in book {
                // flags such as "invalid" are booleans
                let Some(value) = value.as_str() else { continue };
                match DialogActItem::new("book", &domain, canonical_slot(slot), value) {
                    Ok(item) => push(item, &mut items, report),
                    Err(e) => report.skipped_constructs.push(format!("{id}: {e}")),
                }
            }
        }
    }
    if items.is_empty() {
        return Ok(None);
    }
    let message: Vec<String> = obj
        .get("message")
        .and_then(Value::as_array)
        .map(|m| {
            m.iter()
                .filter_map(Value::as_str)
                .map(|s| strip_tags(s).trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
        .unwrap_or_default();
    let text = (!message.is_empty()).then(|| message.join(" "));
    Ok(Some(UserGoal::new(items, text)?))
}

fn import_acts(
    id: &str,
    turn: usize,
    raw: Option<&Value>,
    report: &mut ImportReport,
) -> Vec<DialogActItem> {
    let Some(map) = raw.and_then(Value::as_object) else {
        report
            .skipped_constructs
            .push(format!("{id}: turn {turn} has no act annotation"));
        return Vec::new();
    };
    let mut acts = Vec::new();
    for (key, pairs) in map {
        let (domain, intent) = key.split_once('-').unwrap_or(("general", key.as_str()));
        for pair in pairs.as_array().into_iter().flatten() {
            let Some([slot, value]) = pair.as_array().and_then(|p| {
                Some([p.first()?.as_str()?, p.get(1)?.as_str()?])
            }) else {
                report
                    .skipped_constructs
                    .push(format!("{id}: turn {turn} malformed act pair under {key}"));
                continue;
            };
            let intent = intent.to_lowercase();
            let value = if intent == "request" { String::new() } else { canonical_value(value) };
            match DialogActItem::new(&intent, domain, canonical_slot(slot), value) {
                Ok(item) => acts.push(item),
                Err(e) => report
                    .skipped_constructs
                    .push(format!("{id}: turn {turn} act skipped ({e})")),
            }
        }
    }
    acts
}

/// Imports a MultiWOZ 2.1 data file (dialog id -> {goal, log}). The ontology
/// is collected from goal values and annotated act values.
pub fn import_multiwoz(raw_path: &Path) -> Result<(Corpus, ImportReport), CorpusError> {
    let raw: BTreeMap<String, Value> = read_json(raw_path)?;
    import_multiwoz_value(raw)
}

pub fn import_multiwoz_value(raw: BTreeMap<String, Value>) -> Result<(Corpus, ImportReport), CorpusError> {
    let mut report = ImportReport::default();
    let mut dialogs = Vec::new();
    for (file_id, entry) in &raw {
        let id = file_id.trim_end_matches(".json").to_string();
        let goal_raw = entry
            .get("goal")
            .ok_or_else(|| schema_err(format!("/{file_id}/goal"), "missing field `goal`"))?;
        let log = entry
            .get("log")
            .and_then(Value::as_array)
            .ok_or_else(|| schema_err(format!("/{file_id}/log"), "missing or non-array `log`"))?;
        if log.is_empty() {
            report.skipped_dialogs.push((id, "empty log".into()));
            continue;
        }
        let Some(goal) = import_goal(&id, goal_raw, &mut report)? else {
            report.skipped_dialogs.push((id, "goal has no items".into()));
            continue;
        };
        let mut dialog = Dialog::new(id.clone(), goal);
        let mut failed = None;
        for (i, entry) in log.iter().enumerate() {
            let text = entry
                .get("text")
                .and_then(Value::as_str)
                .ok_or_else(|| schema_err(format!("/{file_id}/log/{i}/text"), "missing text"))?;
            let speaker = if i % 2 == 0 { Speaker::User } else { Speaker::System };
            let acts = import_acts(&id, i, entry.get("dialog_act"), &mut report);
            if let Err(e) = dialog.push_turn(speaker, text.trim(), Some(acts)) {
                failed = Some(e.to_string());
                break;
            }
        }
        match failed {
            Some(reason) => report.skipped_dialogs.push((id, reason)),
            None => dialogs.push(dialog),
        }
    }

    let mut ontology = Ontology::default();
    for d in &dialogs {
        let acts = d.turns().iter().flat_map(|t| t.acts.iter().flatten());
        for item in d.goal.items().iter().chain(acts) {
            if item.is_inform_like() && !item.slot.is_empty() && item.domain != "general" {
                ontology.insert_value(&item.domain, &item.slot, &item.value);
            }
        }
        for item in d.goal.bookings() {
            let slots = ontology.bookable_slots.entry(item.domain.clone()).or_default();
            if !slots.contains(&item.slot) {
                slots.push(item.slot.clone());
            }
        }
    }
    if let Some(n) = report.partial_import_warning() {
        log::warn!("MultiWOZ import skipped {n} dialogs");
    }
    Ok((Corpus::new(Split::Unspecified, ontology, dialogs)?, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSample {
    pub n_repetitions: usize,
    pub dialogs_per_repetition: usize,
    pub metric_table: LexReport,
}

fn user_texts<'a>(dialogs: impl Iterator<Item = &'a Dialog>) -> Vec<&'a str> {
    dialogs
        .flat_map(|d| d.user_turns().map(|t| t.text.as_str()))
        .collect()
}

/// Human lexical-diversity reference: each repetition draws
/// `dialogs_per_rep` distinct dialogs with sub-seed `seed + rep`, computes the
/// metrics over their user turns, and the table is the metric-wise mean.
pub fn sample_human_baseline(
    corpus: &Corpus,
    n_reps: usize,
    dialogs_per_rep: usize,
    seed: u64,
    params: &LexParams,
) -> Result<BaselineSample, CorpusError> {
    if n_reps == 0 {
        return Err(CorpusError::NoRepetitions);
    }
    let available = corpus.dialogs.len();
    if available < dialogs_per_rep || dialogs_per_rep == 0 {
        return Err(CorpusError::InsufficientCorpus {
            available,
            required: dialogs_per_rep.max(1),
        });
    }
    let rows: Vec<LexReport> = (0..n_reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(rep));
            let mut picked = index::sample(&mut rng, available, dialogs_per_rep).into_vec();
            // kept in corpus order
            picked.sort_unstable();
            let texts = user_texts(picked.iter().map(|&i| &corpus.dialogs[i]));
            LexReport::from_utterances(&texts, params)
        })
        .collect();
    Ok(BaselineSample {
        n_repetitions: n_reps,
        dialogs_per_repetition: dialogs_per_rep,
        metric_table: LexReport::mean(&rows).expect("at least one repetition"),
    })
}
