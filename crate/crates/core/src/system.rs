//! The dialog-system side of a simulated conversation: a scripted mock with
//! a small record database, an HTTP adapter for external systems, and a
//! gazetteer annotator that turns utterances into dialog acts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{CorpusError, SystemError};
use crate::model::{normalize_text, values_match, DialogActItem, Intent, Ontology, Speaker};

pub type Record = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemResponse {
    pub text: String,
    pub acts: Vec<DialogActItem>,
    pub session_id: String,
}

/// Per-domain entity records the mock system can offer.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockDatabase {
    domains: BTreeMap<String, Vec<Record>>,
}

impl MockDatabase {
    pub fn new(domains: BTreeMap<String, Vec<Record>>) -> Self {
        MockDatabase { domains }
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        crate::corpus::read_json(path)
    }

    pub fn records(&self, domain: &str) -> &[Record] {
        self.domains.get(domain).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn domains(&self) -> impl Iterator<Item = &str> {
        self.domains.keys().map(String::as_str)
    }

    pub fn find_by_name(&self, domain: &str, name: &str) -> Option<&Record> {
        self.records(domain)
            .iter()
            .find(|r| r.get("name").is_some_and(|n| values_match(n, name)))
    }

    /// True iff some record of the domain carries `value` for `slot`.
    pub fn has_value(&self, domain: &str, slot: &str, value: &str) -> bool {
        self.records(domain)
            .iter()
            .any(|r| r.get(slot).is_some_and(|v| values_match(v, value)))
    }

    /// Record values absent from the ontology, as `domain.slot=value` strings.
    pub fn check_against(&self, ontology: &Ontology) -> Vec<String> {
        let mut out = Vec::new();
        for (domain, records) in &self.domains {
            for record in records {
                for (slot, value) in record {
                    if !ontology.contains_value(domain, slot, value) {
                        out.push(format!("{domain}.{slot}={value}"));
                    }
                }
            }
        }
        out
    }
}

fn default_farewells() -> Vec<String> {
    ["bye", "goodbye", "that is all", "that's all", "have a good day"]
        .map(String::from)
        .to_vec()
}

fn default_request_patterns() -> BTreeMap<String, String> {
    [
        ("phone", "phone"),
        ("phone number", "phone"),
        ("telephone", "phone"),
        ("postcode", "postcode"),
        ("post code", "postcode"),
        ("postal code", "postcode"),
        ("address", "address"),
        ("entrance fee", "entrancefee"),
    ]
    .into_iter()
    .map(|(p, s)| (p.to_string(), s.to_string()))
    .collect()
}

fn default_domain_keywords() -> BTreeMap<String, Vec<String>> {
    let table: [(&str, &[&str]); 5] = [
        ("restaurant", &["restaurant", "food", "eat", "dine", "dinner", "lunch", "table"]),
        ("hotel", &["hotel", "guesthouse", "guest house", "room", "lodging"]),
        ("attraction", &["attraction", "museum", "college", "gallery", "visit"]),
        ("train", &["train"]),
        ("taxi", &["taxi", "cab"]),
    ];
    table
        .iter()
        .map(|(d, kws)| (d.to_string(), kws.iter().map(|k| k.to_string()).collect()))
        .collect()
}

fn default_slot_cues() -> BTreeMap<String, Vec<String>> {
    let table: [(&str, &[&str]); 3] = [
        ("people", &["people", "person", "persons", "guests", "of us"]),
        ("stay", &["night", "nights"]),
        ("stars", &["star", "stars"]),
    ];
    table
        .iter()
        .map(|(s, kws)| (s.to_string(), kws.iter().map(|k| k.to_string()).collect()))
        .collect()
}

/// Pattern lists used by the annotator. Every list can be replaced from a
/// config file; an empty list disables that rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotatorConfig {
    pub farewell_patterns: Vec<String>,
    /// Phrase -> requested slot.
    pub request_patterns: BTreeMap<String, String>,
    pub domain_keywords: BTreeMap<String, Vec<String>>,
    /// Slots whose values only count when one of these words is nearby.
    pub slot_cues: BTreeMap<String, Vec<String>>,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        AnnotatorConfig {
            farewell_patterns: default_farewells(),
            request_patterns: default_request_patterns(),
            domain_keywords: default_domain_keywords(),
            slot_cues: default_slot_cues(),
        }
    }
}

const NUMBER_WORDS: [(&str, &str); 10] = [
    ("one", "1"),
    ("two", "2"),
    ("three", "3"),
    ("four", "4"),
    ("five", "5"),
    ("six", "6"),
    ("seven", "7"),
    ("eight", "8"),
    ("nine", "9"),
    ("ten", "10"),
];

fn tokens(text: &str) -> Vec<String> {
    normalize_text(text)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(|t| {
            NUMBER_WORDS
                .iter()
                .find(|(w, _)| *w == t)
                .map_or_else(|| t.to_string(), |(_, d)| d.to_string())
        })
        .collect()
}

fn find_all(haystack: &[String], needle: &[String]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return Vec::new();
    }
    (0..=haystack.len() - needle.len())
        .filter(|&i| haystack[i..i + needle.len()] == *needle)
        .collect()
}

#[derive(Debug, Clone)]
struct GazetteerEntry {
    tokens: Vec<String>,
    domain: String,
    slot: String,
    value: String,
}

/// Shallow pattern-based NLU over an ontology. Misses yield empty act lists.
#[derive(Debug, Clone)]
pub struct Annotator {
    cfg: AnnotatorConfig,
    entries: Vec<GazetteerEntry>,
    farewells: Vec<Vec<String>>,
    requests: Vec<(Vec<String>, String)>,
    keywords: Vec<(Vec<String>, String)>,
    cues: BTreeMap<String, Vec<Vec<String>>>,
    slot_domains: BTreeMap<String, Vec<String>>,
}

impl Annotator {
    pub fn new(ontology: &Ontology, cfg: AnnotatorConfig) -> Self {
        let mut entries = Vec::new();
        let mut slot_domains: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (domain, slots) in &ontology.domains {
            for (slot, values) in slots {
                slot_domains.entry(slot.clone()).or_default().push(domain.clone());
                for value in values {
                    let toks = tokens(value);
                    if !toks.is_empty() {
                        entries.push(GazetteerEntry {
                            tokens: toks,
                            domain: domain.clone(),
                            slot: slot.clone(),
                            value: value.clone(),
                        });
                    }
                }
            }
        }
        let farewells = cfg.farewell_patterns.iter().map(|p| tokens(p)).filter(|t| !t.is_empty()).collect();
        let requests = cfg
            .request_patterns
            .iter()
            .map(|(p, s)| (tokens(p), s.clone()))
            .filter(|(t, _)| !t.is_empty())
            .collect();
        let keywords = cfg
            .domain_keywords
            .iter()
            .flat_map(|(d, kws)| kws.iter().map(move |k| (tokens(k), d.clone())))
            .filter(|(t, _)| !t.is_empty())
            .collect();
        let cues = cfg
            .slot_cues
            .iter()
            .map(|(s, kws)| (s.clone(), kws.iter().map(|k| tokens(k)).collect()))
            .collect();
        Annotator {
            cfg,
            entries,
            farewells,
            requests,
            keywords,
            cues,
            slot_domains,
        }
    }

    pub fn config(&self) -> &AnnotatorConfig {
        &self.cfg
    }

    /// Domains named by keyword in the utterance, in order of appearance.
    pub fn mentioned_domains(&self, utterance: &str) -> Vec<String> {
        self.mentioned(&tokens(utterance))
    }

    fn mentioned(&self, toks: &[String]) -> Vec<String> {
        let mut found: Vec<(usize, &String)> = self
            .keywords
            .iter()
            .filter_map(|(kw, d)| find_all(toks, kw).first().map(|&i| (i, d)))
            .collect();
        found.sort();
        let mut out: Vec<String> = Vec::new();
        for (_, d) in found {
            if !out.contains(d) {
                out.push(d.clone());
            }
        }
        out
    }

    /// Token gap to the nearest cue word for cue-gated slots; 0 for slots
    /// without cues, `None` when a required cue is missing.
    fn cue_distance(&self, toks: &[String], slot: &str, start: usize, end: usize) -> Option<usize> {
        let Some(cues) = self.cues.get(slot) else {
            return Some(0);
        };
        let lo = start.saturating_sub(3);
        let hi = (end + 3).min(toks.len());
        cues.iter()
            .flat_map(|cue| {
                find_all(&toks[lo..hi], cue).into_iter().filter_map(move |i| {
                    let i = lo + i;
                    if i + cue.len() <= start {
                        Some(start - (i + cue.len()))
                    } else if i >= end {
                        Some(i - end)
                    } else {
                        None
                    }
                })
            })
            .min()
    }

    fn pick_domain<'a>(
        &self,
        candidates: &[&'a str],
        mentioned: &[String],
        context: Option<&str>,
    ) -> Option<&'a str> {
        if let Some(d) = mentioned.iter().find_map(|m| candidates.iter().find(|c| **c == m.as_str())) {
            return Some(d);
        }
        if let Some(ctx) = context {
            if let Some(d) = candidates.iter().find(|c| **c == ctx) {
                return Some(d);
            }
        }
        candidates.first().copied()
    }

    /// Annotates one utterance. `context` is the domain currently under
    /// discussion and only breaks ties between domains.
    pub fn annotate(&self, utterance: &str, speaker: Speaker, context: Option<&str>) -> Vec<DialogActItem> {
        let toks = tokens(utterance);
        if toks.is_empty() {
            return Vec::new();
        }
        let mentioned = self.mentioned(&toks);
        let mut acts: Vec<DialogActItem> = Vec::new();

        // candidate spans: (start, len) -> entries
        let mut spans: BTreeMap<(usize, usize), Vec<(usize, &GazetteerEntry)>> = BTreeMap::new();
        for entry in &self.entries {
            for start in find_all(&toks, &entry.tokens) {
                let end = start + entry.tokens.len();
                if let Some(dist) = self.cue_distance(&toks, &entry.slot, start, end) {
                    spans.entry((start, entry.tokens.len())).or_default().push((dist, entry));
                }
            }
        }
        let mut order: Vec<(usize, usize)> = spans.keys().copied().collect();
        order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut taken = vec![false; toks.len()];
        let mut chosen: Vec<(usize, &GazetteerEntry)> = Vec::new();
        for (start, len) in order {
            if taken[start..start + len].iter().any(|t| *t) {
                continue;
            }
            let entries = &spans[&(start, len)];
            let mut domains: Vec<&str> = entries.iter().map(|(_, e)| e.domain.as_str()).collect();
            domains.dedup();
            let Some(domain) = self.pick_domain(&domains, &mentioned, context) else {
                continue;
            };
            let (_, entry) = entries
                .iter()
                .filter(|(_, e)| e.domain == domain)
                .min_by_key(|(dist, _)| *dist)
                .expect("domain came from entries");
            taken[start..start + len].iter_mut().for_each(|t| *t = true);
            chosen.push((start, entry));
        }
        chosen.sort_by_key(|(start, _)| *start);
        for (_, e) in chosen {
            let act = DialogActItem::inform(&e.domain, &e.slot, &e.value);
            if !acts.contains(&act) {
                acts.push(act);
            }
        }

        if speaker == Speaker::User {
            let mut hits: Vec<(usize, &str)> = self
                .requests
                .iter()
                .filter_map(|(p, slot)| find_all(&toks, p).first().map(|&i| (i, slot.as_str())))
                .collect();
            hits.sort();
            for (_, slot) in hits {
                let holders = self.slot_domains.get(slot).map(Vec::as_slice).unwrap_or(&[]);
                let candidates: Vec<&str> = holders.iter().map(String::as_str).collect();
                if let Some(domain) = self.pick_domain(&candidates, &mentioned, context) {
                    let act = DialogActItem::request(domain, slot);
                    if !acts.contains(&act) {
                        acts.push(act);
                    }
                }
            }
        }

        if self.farewells.iter().any(|f| !find_all(&toks, f).is_empty()) {
            acts.push(DialogActItem::bye());
        }
        acts
    }
}

/// Annotates with the default pattern lists.
pub fn annotate_acts(utterance: &str, ontology: &Ontology, speaker: Speaker) -> Vec<DialogActItem> {
    Annotator::new(ontology, AnnotatorConfig::default()).annotate(utterance, speaker, None)
}

pub trait SystemSession: Send {
    fn session_id(&self) -> &str;

    /// Replies to one user turn. `user_acts` are the user's annotated acts;
    /// adapters that do their own understanding may ignore them.
    fn respond(&mut self, user_text: &str, user_acts: Option<&[DialogActItem]>) -> Result<SystemResponse, SystemError>;

    fn close(&mut self);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    /// Reply with a farewell when the user turn carries no acts.
    pub empty_act_bye: bool,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig { empty_act_bye: true }
    }
}

pub const MOCK_BYE_TEXT: &str = "Okay , thank you . Have a good day .";

#[derive(Debug, Clone, Default)]
struct DomainState {
    constraints: BTreeMap<String, String>,
    booking: BTreeMap<String, String>,
    offered: Option<usize>,
    booked: bool,
}

/// Deterministic rule-based system over a [`MockDatabase`].
pub struct MockSession {
    id: String,
    db: Arc<MockDatabase>,
    ontology: Arc<Ontology>,
    annotator: Arc<Annotator>,
    cfg: MockConfig,
    state: BTreeMap<String, DomainState>,
    next_ref: u64,
    context: Option<String>,
    closed: bool,
}

impl MockSession {
    pub fn new(
        id: impl Into<String>,
        db: Arc<MockDatabase>,
        ontology: Arc<Ontology>,
        annotator: Arc<Annotator>,
        cfg: MockConfig,
    ) -> Self {
        MockSession {
            id: id.into(),
            db,
            ontology,
            annotator,
            cfg,
            state: BTreeMap::new(),
            next_ref: 0,
            context: None,
            closed: false,
        }
    }

    fn reply(&self, parts: Vec<String>, acts: Vec<DialogActItem>) -> SystemResponse {
        SystemResponse {
            text: parts.join(" "),
            acts,
            session_id: self.id.clone(),
        }
    }

    fn first_match(&self, domain: &str, constraints: &BTreeMap<String, String>) -> Option<usize> {
        self.db.records(domain).iter().position(|r| {
            constraints
                .iter()
                .all(|(slot, want)| r.get(slot).is_some_and(|have| values_match(have, want)))
        })
    }

    fn policy(&mut self, acts: &[DialogActItem]) -> SystemResponse {
        let mut touched: Vec<String> = Vec::new();
        let mut constraint_change: BTreeSet<String> = BTreeSet::new();
        let mut requests: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut farewell = false;
        for act in acts {
            if act.intent == Intent::Bye {
                farewell = true;
                continue;
            }
            if !self.ontology.has_domain(&act.domain) && self.db.records(&act.domain).is_empty() {
                continue;
            }
            let domain = act.domain.clone();
            let st = self.state.entry(domain.clone()).or_default();
            match act.intent {
                Intent::Book if !act.slot.is_empty() => {
                    st.booking.insert(act.slot.clone(), act.value.clone());
                }
                Intent::Inform if self.ontology.is_bookable(&domain, &act.slot) => {
                    st.booking.insert(act.slot.clone(), act.value.clone());
                }
                Intent::Inform => {
                    if st.constraints.get(&act.slot) != Some(&act.value) {
                        st.constraints.insert(act.slot.clone(), act.value.clone());
                        constraint_change.insert(domain.clone());
                    }
                }
                Intent::Request => requests.entry(domain.clone()).or_default().push(act.slot.clone()),
                _ => continue,
            }
            if !touched.contains(&domain) {
                touched.push(domain);
            }
        }

        let mut parts = Vec::new();
        let mut out = Vec::new();
        for domain in &touched {
            self.context = Some(domain.clone());
            let wants = requests.remove(domain).unwrap_or_default();
            let mut st = self.state.remove(domain).unwrap_or_default();
            let needs_offer = constraint_change.contains(domain)
                || (st.offered.is_none() && (!wants.is_empty() || !st.booking.is_empty()));
            if needs_offer {
                match self.first_match(domain, &st.constraints) {
                    None => {
                        st.offered = None;
                        parts.push(format!("I am sorry , there is no such {domain} ."));
                        out.push(DialogActItem::new("nooffer", domain, "", "").expect("valid nooffer"));
                        self.state.insert(domain.clone(), st);
                        continue;
                    }
                    Some(idx) if st.offered != Some(idx) => {
                        st.offered = Some(idx);
                        st.booked = false;
                        match self.db.records(domain)[idx].get("name") {
                            Some(name) => {
                                parts.push(format!("I would suggest {name} ."));
                                out.push(DialogActItem::inform(domain, "name", name));
                            }
                            None => parts.push(format!("I found a {domain} for you .")),
                        }
                    }
                    Some(_) => {}
                }
            }
            if let Some(idx) = st.offered {
                let record = &self.db.records(domain)[idx];
                let label = record.get("name").cloned().unwrap_or_else(|| format!("the {domain}"));
                for slot in &wants {
                    match record.get(slot) {
                        Some(value) => {
                            parts.push(format!("The {} of {label} is {value} .", slot_phrase(slot)));
                            out.push(DialogActItem::inform(domain, slot, value));
                        }
                        None => parts.push(format!("I do not have the {} .", slot_phrase(slot))),
                    }
                }
                let bookable = self.ontology.bookable(domain);
                if !st.booked && !st.booking.is_empty() && !bookable.is_empty() {
                    let missing: Vec<&String> = bookable.iter().filter(|s| !st.booking.contains_key(*s)).collect();
                    if missing.is_empty() {
                        let reference = format!("{:08}", self.next_ref);
                        self.next_ref += 1;
                        st.booked = true;
                        let details: Vec<String> =
                            bookable.iter().map(|s| format!("{} {}", slot_phrase(s), st.booking[s])).collect();
                        parts.push(format!(
                            "Booking was successful with {} . Reference number is : {reference} .",
                            details.join(" , ")
                        ));
                        for s in bookable {
                            out.push(DialogActItem::book(domain, s, &st.booking[s]));
                        }
                        out.push(DialogActItem::book(domain, "ref", &reference));
                    } else {
                        let names: Vec<&str> = missing.iter().map(|s| slot_phrase(s)).collect();
                        parts.push(format!("Could you tell me the {} for the booking ?", names.join(" and ")));
                        for s in missing {
                            out.push(DialogActItem::request(domain, s));
                        }
                    }
                }
            }
            self.state.insert(domain.clone(), st);
        }
        if farewell {
            parts.push("Thank you for using our service . Goodbye .".into());
            out.push(DialogActItem::bye());
        }
        if parts.is_empty() {
            parts.push("Is there anything else I can help you with ?".into());
            out.push(DialogActItem::new("reqmore", "general", "", "").expect("valid reqmore"));
        }
        self.reply(parts, out)
    }
}

fn slot_phrase(slot: &str) -> &str {
    match slot {
        "phone" => "phone number",
        "pricerange" => "price range",
        "entrancefee" => "entrance fee",
        "leaveat" => "departure time",
        "arriveby" => "arrival time",
        other => other,
    }
}

impl SystemSession for MockSession {
    fn session_id(&self) -> &str {
        &self.id
    }

    fn respond(&mut self, user_text: &str, user_acts: Option<&[DialogActItem]>) -> Result<SystemResponse, SystemError> {
        if self.closed {
            return Err(SystemError::SessionClosed(self.id.clone()));
        }
        let annotated;
        let acts = match user_acts {
            Some(acts) => acts,
            None => {
                annotated = self.annotator.annotate(user_text, Speaker::User, self.context.as_deref());
                &annotated
            }
        };
        if acts.is_empty() {
            return Ok(if self.cfg.empty_act_bye {
                self.reply(vec![MOCK_BYE_TEXT.into()], vec![DialogActItem::bye()])
            } else {
                self.reply(vec!["Sorry , I did not catch that . Could you say it again ?".into()], Vec::new())
            });
        }
        Ok(self.policy(acts))
    }

    fn close(&mut self) {
        self.closed = true;
    }
}

/// Adapter for an external system reachable over HTTP.
pub struct HttpSession {
    id: String,
    endpoint: String,
    agent: ureq::Agent,
    annotator: Arc<Annotator>,
    context: Option<String>,
    closed: bool,
}

impl HttpSession {
    pub fn new(id: impl Into<String>, endpoint: &str, timeout: Duration, annotator: Arc<Annotator>) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        HttpSession {
            id: id.into(),
            endpoint: endpoint.trim_end_matches('/').to_string(),
            agent: config.into(),
            annotator,
            context: None,
            closed: false,
        }
    }
}

fn map_system_transport(e: ureq::Error) -> SystemError {
    match e {
        ureq::Error::Timeout(_) => SystemError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => SystemError::Timeout,
        other => SystemError::Protocol(other.to_string()),
    }
}

/// Parses `{text, acts?}`; acts arrive as `[intent, domain, slot, value]`.
pub fn parse_system_reply(body: &str) -> Result<(String, Option<Vec<DialogActItem>>), SystemError> {
    #[derive(Deserialize)]
    struct Reply {
        text: String,
        #[serde(default)]
        acts: Option<Vec<[String; 4]>>,
    }
    let reply: Reply = serde_json::from_str(body).map_err(|e| SystemError::Protocol(format!("bad reply: {e}")))?;
    let acts = reply
        .acts
        .map(|quads| {
            quads
                .iter()
                .map(DialogActItem::from_quad)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| SystemError::Protocol(e.to_string()))
        })
        .transpose()?;
    Ok((reply.text, acts))
}

impl SystemSession for HttpSession {
    fn session_id(&self) -> &str {
        &self.id
    }

    fn respond(&mut self, user_text: &str, _user_acts: Option<&[DialogActItem]>) -> Result<SystemResponse, SystemError> {
        if self.closed {
            return Err(SystemError::SessionClosed(self.id.clone()));
        }
        let body = json!({ "session_id": self.id, "text": user_text }).to_string();
        let mut resp = self
            .agent
            .post(format!("{}/respond", self.endpoint))
            .header("Content-Type", "application/json")
            .send(body.as_str())
            .map_err(map_system_transport)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(map_system_transport)?;
        if !(200..300).contains(&status) {
            return Err(match status {
                408 | 504 => SystemError::Timeout,
                _ => SystemError::Protocol(format!("HTTP {status}: {text}")),
            });
        }
        let (reply, acts) = parse_system_reply(&text)?;
        let acts = acts.unwrap_or_else(|| self.annotator.annotate(&reply, Speaker::System, self.context.as_deref()));
        if let Some(d) = acts.iter().find(|a| a.domain != "general") {
            self.context = Some(d.domain.clone());
        }
        Ok(SystemResponse {
            text: reply,
            acts,
            session_id: self.id.clone(),
        })
    }

    fn close(&mut self) {
        self.closed = true;
    }
}

/// Opens one system session per dialog.
#[derive(Clone)]
pub enum SystemProvider {
    Mock {
        db: Arc<MockDatabase>,
        ontology: Arc<Ontology>,
        annotator: Arc<Annotator>,
        cfg: MockConfig,
    },
    Http {
        endpoint: String,
        timeout: Duration,
        annotator: Arc<Annotator>,
    },
    Custom(Arc<dyn Fn(&str) -> Box<dyn SystemSession> + Send + Sync>),
}

impl fmt::Debug for SystemProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemProvider::Mock { cfg, .. } => f.debug_struct("Mock").field("cfg", cfg).finish(),
            SystemProvider::Http { endpoint, .. } => f.debug_struct("Http").field("endpoint", endpoint).finish(),
            SystemProvider::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl SystemProvider {
    pub fn mock(db: MockDatabase, ontology: Ontology, annotator: AnnotatorConfig, cfg: MockConfig) -> Self {
        let annotator = Arc::new(Annotator::new(&ontology, annotator));
        SystemProvider::Mock {
            db: Arc::new(db),
            ontology: Arc::new(ontology),
            annotator,
            cfg,
        }
    }

    pub fn session(&self, id: &str) -> Box<dyn SystemSession> {
        match self {
            SystemProvider::Mock {
                db,
                ontology,
                annotator,
                cfg,
            } => Box::new(MockSession::new(id, db.clone(), ontology.clone(), annotator.clone(), *cfg)),
            SystemProvider::Http {
                endpoint,
                timeout,
                annotator,
            } => Box::new(HttpSession::new(id, endpoint, *timeout, annotator.clone())),
            SystemProvider::Custom(f) => f(id),
        }
    }

    pub fn database(&self) -> Option<&MockDatabase> {
        match self {
            SystemProvider::Mock { db, .. } => Some(db),
            _ => None,
        }
    }
}
