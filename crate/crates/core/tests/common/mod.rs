//! Shared checks for the integration tests and the acceptance runner. Each
//! check returns a short summary on success and a description of the first
//! mismatch otherwise.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use num_rational::Ratio;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use usersim_core::corpus::{import_multiwoz, parse_corpus, read_json, sample_human_baseline};
use usersim_core::diagnostics::DiagnosticsConfig;
use usersim_core::goal_metrics::Validity;
use usersim_core::goalgen::{generate_goal, GoalConfig, PhraseTable};
use usersim_core::lexdiv::{conditional_bigram_entropy, hdd, msttr, mtld, shannon_entropy, tokenize, LexParams};
use usersim_core::llm::{LlmProvider, ReplayFixture};
use usersim_core::orchestrator::{goal_for_dialog, run_dialog, run_experiment, RunConfig, RunContext, ShotConfig, StopReason, TranscriptRecord};
use usersim_core::prompt::{build_initial_prompt, TaskDescriptionKind, TaskDescriptions};
use usersim_core::report::{score_sessions, Scores};
use usersim_core::shots::{select_shots, ShotKind, ShotStrategy};
use usersim_core::system::{AnnotatorConfig, Annotator, MockConfig, MockDatabase, SystemProvider, MOCK_BYE_TEXT};
use usersim_core::{Dialog, DialogActItem, Intent, Ontology, Speaker, UserGoal};

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn ontology() -> Ontology {
    read_json(&fixtures().join("ontology.json")).expect("ontology fixture")
}

pub fn database() -> MockDatabase {
    MockDatabase::load(&fixtures().join("database.json")).expect("database fixture")
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn stream(words: &[&str]) -> usersim_core::lexdiv::TokenStream {
    tokenize(&[words.join(" ")])
}

/// Expected TTR of a `sample`-token draw without replacement, from the
/// hypergeometric probability that each type is missed entirely.
pub fn hdd_product_oracle(counts: &[usize], sample: usize) -> f64 {
    let n: usize = counts.iter().sum();
    counts
        .iter()
        .map(|&c| {
            let miss: f64 = (0..sample)
                .map(|i| if n - i <= c { 0.0 } else { (n - c - i) as f64 / (n - i) as f64 })
                .product();
            (1.0 - miss) / sample as f64
        })
        .sum()
}

/// Mean and standard error of the sample TTR over `draws` random draws.
pub fn hdd_monte_carlo(counts: &[usize], sample: usize, draws: usize, seed: u64) -> (f64, f64) {
    let types: Vec<usize> = counts.iter().enumerate().flat_map(|(t, &c)| std::iter::repeat(t).take(c)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = vec![0usize; counts.len()];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for draw in 1..=draws {
        let mut distinct = 0usize;
        for i in index::sample(&mut rng, types.len(), sample) {
            let t = types[i];
            if seen[t] != draw {
                seen[t] = draw;
                distinct += 1;
            }
        }
        let ttr = distinct as f64 / sample as f64;
        sum += ttr;
        sum_sq += ttr * ttr;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn stream_of_counts(counts: &[usize]) -> usersim_core::lexdiv::TokenStream {
    let words: Vec<String> = counts
        .iter()
        .enumerate()
        .flat_map(|(t, &c)| std::iter::repeat(format!("w{t}")).take(c))
        .collect();
    tokenize(&[words.join(" ")])
}

pub fn check_entropies() -> Check {
    let cases: [(&[&str], f64); 3] = [
        (&["a", "a", "b", "b"], 1.0),
        (&["a"; 10], 0.0),
        (&["a", "b", "c", "d", "e", "f", "g", "h"], 3.0),
    ];
    for (words, want) in cases {
        let got = shannon_entropy(&stream(words)).map_err(|e| e.to_string())?;
        ensure!(close(got, want, 1e-9), "SE of {words:?} = {got}, expected {want}");
    }
    // a b a c a b a c: bigrams ab ×2, ac ×2, ba ×2, ca ×1; only a has two successors
    let ce_cases: [(&str, f64); 2] = [("a b a b a b", 0.0), ("a b a c a b a c", 4.0 / 7.0)];
    for (text, want) in ce_cases {
        let got = conditional_bigram_entropy(&tokenize(&[text])).map_err(|e| e.to_string())?;
        ensure!(close(got, want, 1e-9), "CE of {text:?} = {got}, expected {want}");
    }
    let split = conditional_bigram_entropy(&tokenize(&["a b", "c d"])).map_err(|e| e.to_string())?;
    ensure!(close(split, 0.0, 1e-9), "CE crossed an utterance boundary: {split}");
    Ok("SE and CE match closed forms within 1e-9".into())
}

pub fn check_segment_metrics() -> Check {
    let distinct: Vec<String> = (0..100).map(|i| format!("t{i}")).collect();
    let distinct_refs: Vec<&str> = distinct.iter().map(String::as_str).collect();
    let got = msttr(&stream(&distinct_refs), 50).map_err(|e| e.to_string())?;
    ensure!(got == 1.0, "MSTTR of 100 distinct tokens = {got}");
    let got = msttr(&stream(&["x"; 100]), 50).map_err(|e| e.to_string())?;
    ensure!(close(got, 0.02, 1e-12), "MSTTR of 100 identical tokens = {got}");
    ensure!(msttr(&stream(&["x"; 49]), 50).is_err(), "MSTTR accepted a stream shorter than a segment");

    let got = mtld(&stream(&["a"; 10]), 0.72).map_err(|e| e.to_string())?;
    ensure!(got == 2.0, "MTLD of [a]x10 = {got}, expected exactly 2.0");
    ensure!(mtld(&stream(&distinct_refs[..20]), 0.72).is_err(), "MTLD of all-unique text should have no factors");
    Ok("MSTTR and MTLD match hand traces".into())
}

pub fn check_hdd(draws: usize) -> Check {
    let all_distinct = stream_of_counts(&[1; 42]);
    let got = hdd(&all_distinct, 42).map_err(|e| e.to_string())?;
    ensure!(close(got, 1.0, 1e-12), "HDD of 42 distinct tokens = {got}");

    let doubled = [2usize; 42];
    let got = hdd(&stream_of_counts(&doubled), 42).map_err(|e| e.to_string())?;
    let closed = 1.0 - (42.0 * 41.0) / (84.0 * 83.0);
    ensure!(close(got, closed, 1e-12), "HDD of 42 types x 2 = {got}, closed form {closed}");
    ensure!(close(got, 0.7530, 1e-4), "HDD of 42 types x 2 = {got}, expected 0.7530");

    let skewed: Vec<usize> = (1..=12).collect();
    let got = hdd(&stream_of_counts(&skewed), 42).map_err(|e| e.to_string())?;
    let oracle = hdd_product_oracle(&skewed, 42);
    ensure!(close(got, oracle, 1e-9), "HDD of skewed stream = {got}, product oracle {oracle}");

    let mut summary = Vec::new();
    for (name, counts, seed) in [("42x2", doubled.to_vec(), 11u64), ("skewed", skewed, 12)] {
        let got = hdd(&stream_of_counts(&counts), 42).map_err(|e| e.to_string())?;
        let (mean, se) = hdd_monte_carlo(&counts, 42, draws, seed);
        ensure!(
            (got - mean).abs() <= 3.0 * se,
            "HDD {name} = {got}, Monte-Carlo mean {mean} with standard error {se}"
        );
        summary.push(format!("{name} {:.2} SE", (got - mean).abs() / se));
    }
    Ok(format!("HDD exact cases hold; Monte-Carlo ({draws} draws) deviations: {}", summary.join(", ")))
}

/// Domain and slot sets as the similarity measure defines them.
fn sets(goal: &UserGoal) -> (BTreeSet<String>, BTreeSet<String>) {
    let domains = goal.items().iter().map(|i| i.domain.clone()).collect();
    let slots = goal.items().iter().filter(|i| !i.slot.is_empty()).map(|i| i.slot.clone()).collect();
    (domains, slots)
}

fn jaccard_ratio(a: &BTreeSet<String>, b: &BTreeSet<String>) -> Ratio<i64> {
    let union = a.union(b).count() as i64;
    if union == 0 {
        return Ratio::from_integer(1);
    }
    Ratio::new(a.intersection(b).count() as i64, union)
}

pub fn brute_force_ranking(pool: &[(UserGoal, Dialog)], target: &UserGoal) -> Vec<String> {
    let (td, ts) = sets(target);
    let mut scored: Vec<(Ratio<i64>, String)> = pool
        .iter()
        .map(|(g, d)| {
            let (gd, gs) = sets(g);
            (jaccard_ratio(&gd, &td) * jaccard_ratio(&gs, &ts), d.id.clone())
        })
        .collect();
    // score descending, then id ascending
    scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, id)| id).collect()
}

/// Fifty generated goals with ids assigned out of generation order.
pub fn goal_pool(size: usize) -> Vec<(UserGoal, Dialog)> {
    let ontology = ontology();
    let cfg = GoalConfig::default();
    (0..size)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + i as u64);
            let goal = generate_goal(&ontology, &cfg, &mut rng).expect("goal");
            let id = format!("pool-{:03}", (i * 37) % size);
            let dialog = Dialog::from_turns(id, goal.clone(), [(Speaker::User, "hello".to_string(), None)]).expect("dialog");
            (goal, dialog)
        })
        .collect()
}

pub fn check_shot_selection() -> Check {
    let pool = goal_pool(50);
    let ontology = ontology();
    let cfg = GoalConfig::default();
    let mut ties = 0usize;
    for t in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + t);
        let target = generate_goal(&ontology, &cfg, &mut rng).expect("target");
        let expected = brute_force_ranking(&pool, &target);
        for k in [1usize, 3, 50] {
            let got: Vec<String> = select_shots(&pool, &target, &ShotStrategy { kind: ShotKind::Jaccard, k, seed: t })
                .map_err(|e| e.to_string())?
                .iter()
                .map(|(_, d)| d.id.clone())
                .collect();
            ensure!(got == expected[..k], "target {t}, k={k}: got {got:?}, brute force {:?}", &expected[..k]);
        }
        let (td, ts) = sets(&target);
        let scores: Vec<Ratio<i64>> = pool
            .iter()
            .map(|(g, _)| {
                let (gd, gs) = sets(g);
                jaccard_ratio(&gd, &td) * jaccard_ratio(&gs, &ts)
            })
            .collect();
        let distinct: BTreeSet<&Ratio<i64>> = scores.iter().collect();
        ties += scores.len() - distinct.len();
    }
    ensure!(ties > 0, "no tied scores were exercised");
    Ok(format!("100 targets x k in {{1,3,50}} agree with brute force ({ties} tied scores exercised)"))
}

pub const REFERENCE_SHOT_REQUIREMENTS: &str =
    "You are looking for a train departing from Peterborough and arriving in Cambridge by 19:30 on Sunday.";
pub const REFERENCE_TARGET_REQUIREMENTS: &str =
    "You are looking for a restaurant that serves British food and is in the South. Make sure you get the phone number and postcode.";
pub const REFERENCE_SHOT_TURNS: [&str; 7] = [
    "I 'm looking for a train that departs from peterborough and arrives by 19:30",
    "Where would you like to go to ?",
    "I am going to Cambridge on Sunday .",
    "There's a train that arrives at 19:09. Would that do?",
    "Sure would. What time does it depart and how much does it cost?",
    "leaves at 5:19 13.2 GBP payable at the station your reference number is CLPW6OR9",
    "thanks for the service, that is all I need.",
];
pub const REFERENCE_EXCHANGES: [(&str, &str); 2] = [
    (
        "Hi, I'm looking for restaurants in the area that serve British cuisine.",
        "There are many British restaurants in the city. Could you tell me in what area you would like to eat?",
    ),
    (
        "In the south",
        "We have 7 such places. Restaurant one seven has some great reviews. The phone number is 01223337766.",
    ),
];

fn golden(name: &str) -> String {
    std::fs::read_to_string(fixtures().join("goldens").join(name)).expect("golden file")
}

fn first_difference(a: &str, b: &str) -> String {
    let at = a.bytes().zip(b.bytes()).position(|(x, y)| x != y).unwrap_or(a.len().min(b.len()));
    let snippet = |s: &str| s.get(at.saturating_sub(20)..(at + 20).min(s.len())).unwrap_or("").to_string();
    format!("byte {at}: {:?} vs {:?}", snippet(a), snippet(b))
}

pub fn reference_prompts() -> Vec<String> {
    let shot_goal = UserGoal::new(
        vec![
            DialogActItem::inform("train", "departure", "peterborough"),
            DialogActItem::inform("train", "destination", "cambridge"),
        ],
        Some(REFERENCE_SHOT_REQUIREMENTS.to_string()),
    )
    .expect("shot goal");
    let turns = REFERENCE_SHOT_TURNS.iter().enumerate().map(|(i, t)| {
        let speaker = if i % 2 == 0 { Speaker::User } else { Speaker::System };
        (speaker, t.to_string(), None)
    });
    let shot = (shot_goal.clone(), Dialog::from_turns("reference-shot", shot_goal, turns).expect("shot dialog"));
    let target = UserGoal::new(
        vec![
            DialogActItem::inform("restaurant", "food", "british"),
            DialogActItem::inform("restaurant", "area", "south"),
            DialogActItem::request("restaurant", "phone"),
            DialogActItem::request("restaurant", "postcode"),
        ],
        None,
    )
    .expect("target goal");
    let descriptions = TaskDescriptions::default();
    let description = descriptions.render(TaskDescriptionKind::Default, &[&shot]).expect("description");
    let p0 = build_initial_prompt(
        &description,
        &[&shot],
        &target,
        REFERENCE_TARGET_REQUIREMENTS,
        Default::default(),
        &PhraseTable::default(),
    )
    .expect("initial prompt");
    let p1 = p0.extend(REFERENCE_EXCHANGES[0].0, REFERENCE_EXCHANGES[0].1).expect("turn 1");
    let p2 = p1.extend(REFERENCE_EXCHANGES[1].0, REFERENCE_EXCHANGES[1].1).expect("turn 2");
    vec![p0.text().to_string(), p1.text().to_string(), p2.text().to_string()]
}

pub fn check_prompt_goldens() -> Check {
    let prompts = reference_prompts();
    for (got, name) in prompts.iter().zip(["reference_initial.txt", "reference_turn1.txt", "reference_turn2.txt"]) {
        let want = golden(name);
        ensure!(*got == want, "{name} differs at {}", first_difference(got, &want));
    }
    let descriptions = TaskDescriptions::default();
    let kinds = [
        (TaskDescriptionKind::Default, "task_default.txt"),
        (TaskDescriptionKind::DefaultDomains, "task_default_domains.txt"),
        (TaskDescriptionKind::ExtraPersonality, "task_extra_personality.txt"),
        (TaskDescriptionKind::Minimal, "task_minimal.txt"),
        (TaskDescriptionKind::None, "task_none.txt"),
    ];
    for (kind, name) in kinds {
        let want = golden(name);
        ensure!(descriptions.text(kind) == want, "{name} differs at {}", first_difference(descriptions.text(kind), &want));
    }
    let shot = |id: &str, domain: &str| {
        let g = UserGoal::new(vec![DialogActItem::request(domain, "phone")], None).expect("goal");
        (g.clone(), Dialog::from_turns(id, g, [(Speaker::User, "hi".to_string(), None)]).expect("dialog"))
    };
    let (a, b) = (shot("a", "train"), shot("b", "restaurant"));
    let spliced = descriptions.render(TaskDescriptionKind::DefaultDomains, &[&a, &b]).map_err(|e| e.to_string())?;
    let want = golden("task_default_domains_restaurant_train.txt");
    ensure!(spliced == want, "domain splice differs at {}", first_difference(&spliced, &want));
    Ok("3 reference prompts and 5 task descriptions are byte-identical".into())
}

/// Surface form the gazetteer maps back to `slot`.
fn value_phrase(slot: &str, value: &str) -> String {
    match slot {
        "stars" => format!("{value} stars"),
        "stay" => format!("{value} nights"),
        "people" => format!("{value} people"),
        "day" => format!("on {value}"),
        _ => value.to_string(),
    }
}

/// A cooperative user: per domain, state the constraints, ask for the
/// requested slots, book if needed; then say goodbye.
pub fn script_for_goal(goal: &UserGoal) -> Vec<String> {
    let mut lines = Vec::new();
    for domain in goal.domains() {
        let of = |intent: Intent| -> Vec<&DialogActItem> {
            goal.items().iter().filter(|i| i.intent == intent && i.domain == domain).collect()
        };
        let informs: Vec<String> = of(Intent::Inform).iter().map(|i| value_phrase(&i.slot, &i.value)).collect();
        if !informs.is_empty() {
            lines.push(format!("I am looking for a {domain} , {} .", informs.join(" , ")));
        }
        let requests: Vec<&str> = of(Intent::Request).iter().map(|i| i.slot.as_str()).collect();
        if !requests.is_empty() {
            lines.push(format!("Can you give me the {} of the {domain} ?", requests.join(" and ")));
        }
        let books: Vec<String> = of(Intent::Book).iter().map(|i| value_phrase(&i.slot, &i.value)).collect();
        if !books.is_empty() {
            lines.push(format!("Please book the {domain} for {} .", books.join(" ")));
        }
    }
    lines.push("Thank you , goodbye .".to_string());
    lines
}

pub fn replay_config(parallelism: usize) -> RunConfig {
    RunConfig {
        n_dialogs: 20,
        max_turns: 20,
        seed: 2024,
        parallelism,
        shots: ShotConfig { kind: ShotKind::Jaccard, k: 2 },
        ..RunConfig::default()
    }
}

pub struct ReplayOutcome {
    pub scores: Scores,
    pub transcripts: Vec<String>,
}

pub fn run_scripted(cfg: &RunConfig, scripts: Vec<Vec<String>>, mock: MockConfig) -> Result<ReplayOutcome, String> {
    let ontology = ontology();
    let pool = parse_corpus(&fixtures().join("shots_corpus.json")).map_err(|e| e.to_string())?.shot_pool();
    let llm = LlmProvider::Replay(ReplayFixture::PerDialog(scripts));
    let system = SystemProvider::mock(database(), ontology.clone(), AnnotatorConfig::default(), mock);
    let annotator = Annotator::new(&ontology, AnnotatorConfig::default());
    let descriptions = TaskDescriptions::default();
    let phrases = PhraseTable::default();
    let ctx = RunContext {
        llm: &llm,
        system: &system,
        annotator: &annotator,
        shot_pool: &pool,
        descriptions: &descriptions,
        phrases: &phrases,
    };
    let run = run_experiment(cfg, &ctx, &ontology).map_err(|e| e.to_string())?;
    let transcripts = run
        .sessions
        .iter()
        .zip(&run.scores.dialogs)
        .map(|(s, d)| {
            let eval = d.eval.as_ref().ok_or(d.eval_error.as_deref().unwrap_or(""));
            serde_json::to_string(&TranscriptRecord::new(s, eval, &d.flags)).expect("serializes")
        })
        .collect();
    Ok(ReplayOutcome { scores: run.scores, transcripts })
}

pub fn scripted_goals(cfg: &RunConfig) -> Vec<UserGoal> {
    let ontology = ontology();
    (0..cfg.n_dialogs).map(|i| goal_for_dialog(&ontology, cfg, i).expect("goal")).collect()
}

/// Index of the first goal whose only booking is two slots in one domain.
pub fn two_slot_booking(goals: &[UserGoal]) -> Option<usize> {
    goals.iter().position(|g| g.bookings().count() == 2)
}

pub fn mutate_booking_day(script: &mut [String]) -> bool {
    const DAYS: [&str; 7] = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"];
    for line in script.iter_mut().filter(|l| l.starts_with("Please book")) {
        for (i, day) in DAYS.iter().enumerate() {
            let needle = format!("on {day}");
            if line.contains(&needle) {
                *line = line.replace(&needle, &format!("on {}", DAYS[(i + 1) % 7]));
                return true;
            }
        }
    }
    false
}

pub fn check_end_to_end_replay() -> Check {
    let cfg = replay_config(1);
    let goals = scripted_goals(&cfg);
    let scripts: Vec<Vec<String>> = goals.iter().map(script_for_goal).collect();
    let clean = run_scripted(&cfg, scripts.clone(), MockConfig::default())?;
    let t = clean.scores.goal_table.as_ref().ok_or("no dialog could be scored")?;
    for (name, v) in [
        ("Compl Rate", t.compl_rate),
        ("Succ Rate", t.succ_rate),
        ("Book Rate", t.book_rate.unwrap_or(f64::NAN)),
        ("Inform F1", t.inform_f1),
    ] {
        ensure!(v == 1.0, "{name} = {v} on cooperative scripts; dialogs: {:?}", clean.scores.dialogs.iter().map(|d| (&d.id, &d.eval)).collect::<Vec<_>>());
    }
    ensure!(t.n_dialogs == 20, "{} dialogs scored", t.n_dialogs);

    let victim = two_slot_booking(&goals).ok_or("no goal with a two-slot booking among the 20")?;
    let mut mutated = scripts.clone();
    ensure!(mutate_booking_day(&mut mutated[victim]), "could not mutate booking in script {victim}");
    let broken = run_scripted(&cfg, mutated.clone(), MockConfig::default())?;
    let eval = broken.scores.dialogs[victim].eval.clone().ok_or("mutated dialog has no evaluation")?;
    ensure!(eval.success == 0, "mutated dialog success = {}", eval.success);
    ensure!(eval.book_rate == Some(0.5), "mutated dialog book_rate = {:?}", eval.book_rate);
    let succ = broken.scores.goal_table.as_ref().map_or(f64::NAN, |t| t.succ_rate);
    ensure!(close(succ, 0.95, 1e-12), "aggregate Succ Rate = {succ}");

    for parallelism in [1usize, 8] {
        for _ in 0..2 {
            let again = run_scripted(&replay_config(parallelism), mutated.clone(), MockConfig::default())?;
            ensure!(again.transcripts == broken.transcripts, "transcripts differ at parallelism {parallelism}");
            ensure!(
                serde_json::to_value(&again.scores).unwrap() == serde_json::to_value(&broken.scores).unwrap(),
                "scores differ at parallelism {parallelism}"
            );
        }
    }
    Ok(format!("20 scripted dialogs score 1.0; mutating dialog {victim} gives success 0, book rate 0.5, Succ Rate 0.95; identical at parallelism 1 and 8"))
}

pub fn failure_mode_goal() -> UserGoal {
    UserGoal::new(
        vec![
            DialogActItem::inform("restaurant", "food", "italian"),
            DialogActItem::inform("restaurant", "area", "centre"),
            DialogActItem::request("restaurant", "phone"),
            DialogActItem::book("restaurant", "people", "2"),
            DialogActItem::book("restaurant", "day", "monday"),
        ],
        None,
    )
    .expect("goal")
}

pub const GIVING_UP_SCRIPT: [&str; 4] = [
    "I am looking for a restaurant , italian , centre .",
    "Can you give me the phone of the restaurant ?",
    "Hmm , let me think about that for a moment .",
    "Thank you , I will end my search here . Goodbye .",
];

pub fn run_giving_up(empty_act_bye: bool) -> Result<(Dialog, Scores, Option<StopReason>), String> {
    let ontology = ontology();
    let script: Vec<String> = GIVING_UP_SCRIPT.iter().map(|s| s.to_string()).collect();
    let llm = LlmProvider::Replay(ReplayFixture::Single(script));
    let system = SystemProvider::mock(database(), ontology.clone(), AnnotatorConfig::default(), MockConfig { empty_act_bye });
    let annotator = Annotator::new(&ontology, AnnotatorConfig::default());
    let descriptions = TaskDescriptions::default();
    let phrases = PhraseTable::default();
    let ctx = RunContext {
        llm: &llm,
        system: &system,
        annotator: &annotator,
        shot_pool: &[],
        descriptions: &descriptions,
        phrases: &phrases,
    };
    let cfg = RunConfig {
        shots: ShotConfig { kind: ShotKind::Random, k: 0 },
        ..RunConfig::default()
    };
    let record = run_dialog(0, &failure_mode_goal(), 0, &cfg, &ctx).map_err(|e| e.to_string())?;
    let db = system.database().expect("mock");
    let scores = score_sessions(&[record.view()], Validity::Database(db), &DiagnosticsConfig::default());
    Ok((record.dialog, scores, record.stop_reason))
}

pub fn check_failure_mode() -> Check {
    let (dialog, scores, stop) = run_giving_up(true)?;
    let turns = dialog.turns();
    ensure!(turns.len() == 8, "expected 4 exchanges, got {} turns", turns.len());
    let reply = &turns[5];
    ensure!(reply.text == MOCK_BYE_TEXT, "reply to the unparseable turn was {:?}", reply.text);
    let acts = reply.acts.as_deref().unwrap_or(&[]);
    ensure!(acts.iter().any(|a| a.intent == Intent::Bye), "bye reply carries no bye act: {acts:?}");
    ensure!(stop == Some(StopReason::SystemByeAcknowledged), "stop reason {stop:?}");
    let flags = &scores.dialogs[0].flags;
    ensure!(flags.premature_termination, "premature_termination not flagged: {flags:?}");

    let (control, control_scores, _) = run_giving_up(false)?;
    let reply = &control.turns()[5];
    ensure!(reply.text != MOCK_BYE_TEXT, "bye emitted with the toggle off");
    ensure!(
        !reply.acts.as_deref().unwrap_or(&[]).iter().any(|a| a.intent == Intent::Bye),
        "bye act emitted with the toggle off"
    );
    ensure!(control_scores.dialogs[0].flags.premature_termination, "control run should still give up early");
    Ok("unparseable turn 3 draws the mock bye; the giving-up dialog is flagged premature".into())
}

pub const MULTIWOZ_ENV: &str = "USERSIM_MULTIWOZ";

/// `None` when no dataset is configured.
pub fn check_multiwoz_baseline() -> Option<Check> {
    let path = std::env::var_os(MULTIWOZ_ENV)?;
    Some((|| {
        let (corpus, report) = import_multiwoz(Path::new(&path)).map_err(|e| e.to_string())?;
        let sample = sample_human_baseline(&corpus, 1000, 200, 0, &LexParams::default()).map_err(|e| e.to_string())?;
        let m = sample.metric_table;
        let checks = [
            ("UUtt Length", m.utterance_length.unwrap_or(f64::NAN), 12.6, 0.5),
            ("Unigrams", m.unigrams, 919.0, 60.0),
            ("SE", m.shannon_entropy.unwrap_or(f64::NAN), 7.3, 0.1),
            ("CE", m.conditional_entropy.unwrap_or(f64::NAN), 3.0, 0.15),
            ("MSTTR", m.msttr.unwrap_or(f64::NAN), 0.76, 0.02),
            ("HDD", m.hdd.unwrap_or(f64::NAN), 0.78, 0.02),
            ("MTLD", m.mtld.unwrap_or(f64::NAN), 61.0, 3.0),
        ];
        let row: Vec<String> = checks.iter().map(|(n, v, _, _)| format!("{n} {v:.3}")).collect();
        for (name, got, want, tol) in checks {
            ensure!(close(got, want, tol), "{name} = {got:.3}, expected {want} ± {tol} (row: {})", row.join(", "));
        }
        Ok(format!(
            "{} dialogs imported ({} skipped): {}",
            corpus.dialogs.len(),
            report.skipped_dialogs.len(),
            row.join(", ")
        ))
    })())
}
