//! Seeded user-goal generation and rendering of goals into requirement text.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CorpusError, GoalGenError};
use crate::model::{DialogActItem, Intent, Ontology, UserGoal};

const DEFAULT_PHRASES: &str = include_str!("../data/phrase_table.json");
const BOOKING_SECTION: &str = "_booking";
const DOMAIN_KEY: &str = "_domain";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GoalConfig {
    pub domains_min: usize,
    pub domains_max: usize,
    pub informs_per_domain_min: usize,
    pub informs_per_domain_max: usize,
    pub requests_per_domain_min: usize,
    pub requests_per_domain_max: usize,
    pub booking_probability: f64,
    /// Slots the simulated user asks for rather than constrains.
    pub requestable_slots: Vec<String>,
    /// Slots never used as generated constraints.
    pub excluded_inform_slots: Vec<String>,
    pub seed: u64,
}

impl Default for GoalConfig {
    fn default() -> Self {
        GoalConfig {
            domains_min: 1,
            domains_max: 3,
            informs_per_domain_min: 1,
            informs_per_domain_max: 3,
            requests_per_domain_min: 1,
            requests_per_domain_max: 2,
            booking_probability: 0.5,
            requestable_slots: vec!["address".into(), "phone".into(), "postcode".into()],
            excluded_inform_slots: vec!["name".into()],
            seed: 0,
        }
    }
}

impl GoalConfig {
    pub fn validate(&self) -> Result<(), GoalGenError> {
        let ranges = [
            ("domains", self.domains_min, self.domains_max),
            ("informs_per_domain", self.informs_per_domain_min, self.informs_per_domain_max),
            ("requests_per_domain", self.requests_per_domain_min, self.requests_per_domain_max),
        ];
        for (name, lo, hi) in ranges {
            if lo > hi {
                return Err(GoalGenError::InvalidConfig(format!("{name}_min {lo} > {name}_max {hi}")));
            }
        }
        if self.domains_max == 0 {
            return Err(GoalGenError::InvalidConfig("domains_max must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.booking_probability) {
            return Err(GoalGenError::InvalidConfig(format!(
                "booking_probability {} outside [0, 1]",
                self.booking_probability
            )));
        }
        Ok(())
    }

    fn informable_slots<'o>(&self, ontology: &'o Ontology, domain: &str) -> Vec<&'o str> {
        ontology.domains[domain]
            .iter()
            .filter(|(slot, values)| {
                !values.is_empty()
                    && !ontology.is_bookable(domain, slot)
                    && !self.requestable_slots.contains(slot)
                    && !self.excluded_inform_slots.contains(slot)
            })
            .map(|(slot, _)| slot.as_str())
            .collect()
    }

    fn requestable_in<'o>(&self, ontology: &'o Ontology, domain: &str) -> Vec<&'o str> {
        ontology.domains[domain]
            .keys()
            .filter(|slot| self.requestable_slots.contains(slot))
            .map(String::as_str)
            .collect()
    }
}

fn uniform_count<R: Rng + ?Sized>(rng: &mut R, lo: usize, hi: usize, cap: usize) -> usize {
    let hi = hi.min(cap);
    let lo = lo.min(hi);
    rng.gen_range(lo..=hi)
}

/// Picks `k` of `items` uniformly without replacement, keeping their
/// original relative order.
fn pick_ordered<'a, R: Rng + ?Sized>(rng: &mut R, items: &[&'a str], k: usize) -> Vec<&'a str> {
    let mut idx = index::sample(rng, items.len(), k).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i]).collect()
}

/// Draws a random goal. Items are grouped per domain as constraints, then
/// requests, then booking slots; every value comes from the ontology.
pub fn generate_goal<R: Rng + ?Sized>(
    ontology: &Ontology,
    cfg: &GoalConfig,
    rng: &mut R,
) -> Result<UserGoal, GoalGenError> {
    cfg.validate()?;
    let candidates: Vec<&str> = ontology
        .domains
        .keys()
        .filter(|d| !cfg.informable_slots(ontology, d).is_empty())
        .map(String::as_str)
        .collect();
    if candidates.is_empty() {
        return Err(GoalGenError::EmptyOntology);
    }
    let n_domains = uniform_count(rng, cfg.domains_min.max(1), cfg.domains_max, candidates.len());
    let chosen: Vec<&str> = index::sample(rng, candidates.len(), n_domains)
        .into_iter()
        .map(|i| candidates[i])
        .collect();

    let mut items = Vec::new();
    for domain in chosen {
        let informable = cfg.informable_slots(ontology, domain);
        let k = uniform_count(
            rng,
            cfg.informs_per_domain_min.max(1),
            cfg.informs_per_domain_max,
            informable.len(),
        );
        for slot in pick_ordered(rng, &informable, k) {
            let values = ontology.values(domain, slot);
            let value = &values[rng.gen_range(0..values.len())];
            items.push(DialogActItem::new("inform", domain, slot, value)?);
        }

        let requestable = cfg.requestable_in(ontology, domain);
        let k = uniform_count(
            rng,
            cfg.requests_per_domain_min,
            cfg.requests_per_domain_max,
            requestable.len(),
        );
        for slot in pick_ordered(rng, &requestable, k) {
            items.push(DialogActItem::new("request", domain, slot, "")?);
        }

        let bookable = ontology.bookable(domain);
        if !bookable.is_empty() && rng.gen_bool(cfg.booking_probability) {
            for slot in bookable {
                let values = ontology.values(domain, slot);
                if values.is_empty() {
                    continue;
                }
                let value = &values[rng.gen_range(0..values.len())];
                items.push(DialogActItem::new("book", domain, slot, value)?);
            }
        }
    }
    Ok(UserGoal::new(items, None)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequirementsFormat {
    #[default]
    Descriptive,
    Bullets,
}

/// Slot phrases per domain. Entries containing `{value}` are constraint
/// predicates ("serve {value} food"); the rest are noun phrases used in
/// request sentences. The `_domain` key names the domain in the opener and
/// the `_booking` section holds booking fragments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhraseTable(BTreeMap<String, BTreeMap<String, String>>);

impl Default for PhraseTable {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_PHRASES).expect("bundled phrase table is valid")
    }
}

impl PhraseTable {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        crate::corpus::read_json(path)
    }

    fn lookup(&self, domain: &str, slot: &str) -> Option<&str> {
        self.0.get(domain).and_then(|m| m.get(slot)).map(String::as_str)
    }

    fn domain_phrase<'a>(&'a self, domain: &'a str) -> &'a str {
        self.lookup(domain, DOMAIN_KEY).unwrap_or(domain)
    }
}

/// Rendered requirements plus the slots that had no phrase mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedRequirements {
    pub text: String,
    pub unknown_slots: Vec<(String, String)>,
}

fn article(phrase: &str) -> &'static str {
    match phrase.chars().next() {
        Some(c) if "aeiou".contains(c.to_ascii_lowercase()) => "an",
        _ => "a",
    }
}

/// Turns goal items into template sentences, in goal order.
pub fn requirement_sentences(goal: &UserGoal, phrases: &PhraseTable) -> RenderedRequirements {
    let mut sentences: Vec<String> = Vec::new();
    let mut unknown = Vec::new();
    let mut opened: Vec<&str> = Vec::new();
    let items = goal.items();
    let mut i = 0;
    while i < items.len() {
        let item = &items[i];
        let domain = item.domain.as_str();
        if matches!(item.intent, Intent::Bye | Intent::Other(_)) {
            i += 1;
            continue;
        }
        if !opened.contains(&domain) {
            let dp = phrases.domain_phrase(domain);
            sentences.push(format!("You are looking for {} {dp}.", article(dp)));
            opened.push(domain);
        }
        // consecutive requests or bookings of one domain share a sentence
        let run_end = items[i..]
            .iter()
            .position(|x| x.intent != item.intent || x.domain != item.domain)
            .map_or(items.len(), |p| i + p);
        match item.intent {
            Intent::Inform => {
                for it in &items[i..run_end] {
                    let predicate = match phrases.lookup(domain, &it.slot) {
                        Some(p) if p.contains("{value}") => p.replace("{value}", &it.value),
                        _ => {
                            unknown.push((domain.to_string(), it.slot.clone()));
                            format!("have {} {}", it.slot, it.value)
                        }
                    };
                    sentences.push(format!("The {domain} should {predicate}."));
                }
            }
            Intent::Request => {
                let slots: Vec<String> = items[i..run_end]
                    .iter()
                    .map(|it| match phrases.lookup(domain, &it.slot) {
                        Some(p) if !p.contains("{value}") => p.to_string(),
                        _ => {
                            unknown.push((domain.to_string(), it.slot.clone()));
                            it.slot.clone()
                        }
                    })
                    .collect();
                sentences.push(format!(
                    "Once you find the {domain}, make sure you get {}.",
                    slots.join(", ")
                ));
            }
            Intent::Book => {
                let parts: Vec<String> = items[i..run_end]
                    .iter()
                    .map(|it| match phrases.lookup(BOOKING_SECTION, &it.slot) {
                        Some(p) => p.replace("{value}", &it.value),
                        None => {
                            unknown.push((domain.to_string(), it.slot.clone()));
                            format!("with {} {}", it.slot, it.value)
                        }
                    })
                    .collect();
                sentences.push(format!(
                    "Once you find the {domain} you want to book it {}.",
                    parts.join(" ")
                ));
            }
            Intent::Bye | Intent::Other(_) => unreachable!(),
        }
        i = run_end;
    }
    for (d, s) in &unknown {
        log::warn!("no phrase for slot {d}.{s}; using the raw slot token");
    }
    RenderedRequirements {
        text: sentences.join(" "),
        unknown_slots: unknown,
    }
}

/// Splits descriptive text into sentences at `.`, `!` or `?` followed by
/// whitespace.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_some_and(|n| n.is_whitespace()) {
            out.push(current.trim().to_string());
            current.clear();
        }
    }
    if !current.trim().is_empty() {
        out.push(current.trim().to_string());
    }
    out
}

/// Lays requirement text out in the requested format. Bullet input is kept
/// as is, so applying this twice is harmless.
pub fn format_requirements(text: &str, format: RequirementsFormat) -> String {
    match format {
        RequirementsFormat::Descriptive => text.trim().to_string(),
        RequirementsFormat::Bullets => {
            if text.trim_start().starts_with("- ") {
                return text.trim().to_string();
            }
            split_sentences(text)
                .iter()
                .map(|s| format!("- {s}"))
                .collect::<Vec<_>>()
                .join("\n")
        }
    }
}

pub fn render_requirements(goal: &UserGoal, format: RequirementsFormat, phrases: &PhraseTable) -> String {
    let sentences = requirement_sentences(goal, phrases).text;
    format_requirements(&sentences, format)
}
