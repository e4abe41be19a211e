//! Goal-fulfillment scoring of act-annotated dialogs: inform precision and
//! recall, success, completion and booking rates.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::MetricError;
use crate::model::{values_match, Dialog, Intent, Ontology, Speaker, UserGoal};
use crate::system::MockDatabase;

/// Slots that identify an entity rather than answer a request; informing
/// them is never a false positive.
const ENTITY_SLOTS: [&str; 3] = ["name", "ref", "choice"];

/// How to decide whether a value the system informed is a real one.
#[derive(Debug, Clone, Copy)]
pub enum Validity<'a> {
    /// The value must belong to the record the system offered, or to some
    /// record of the domain before any offer.
    Database(&'a MockDatabase),
    /// The value must be listed in the ontology; slots the ontology lists no
    /// values for accept anything.
    Ontology(&'a Ontology),
    Any,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalEvalRecord {
    pub success: u8,
    pub complete: u8,
    pub book_rate: Option<f64>,
    pub inform_tp: usize,
    pub inform_fp: usize,
    pub inform_fn: usize,
    pub turns: usize,
    /// Completion was decided by requests because the goal has no bookings.
    pub completion_by_requests: bool,
}

impl GoalEvalRecord {
    pub fn inform_prf(&self) -> (f64, f64, f64) {
        prf(self.inform_tp, self.inform_fp, self.inform_fn)
    }

    pub fn inform_recall(&self) -> f64 {
        self.inform_prf().1
    }
}

/// Precision, recall and F1 with 0/0 read as 1 and F1 = 0 when P + R = 0.
pub fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

struct SystemInform {
    domain: String,
    slot: String,
    value: String,
    valid: bool,
}

fn check_acts(dialog: &Dialog) -> Result<(), MetricError> {
    match dialog.turns().iter().find(|t| t.acts.is_none()) {
        Some(t) => Err(MetricError::MissingActs {
            dialog: dialog.id.clone(),
            index: t.index,
        }),
        None => Ok(()),
    }
}

fn system_acts(dialog: &Dialog) -> impl Iterator<Item = &crate::model::DialogActItem> {
    dialog
        .turns()
        .iter()
        .filter(|t| t.speaker == Speaker::System)
        .flat_map(|t| t.acts.iter().flatten())
}

fn system_informs(dialog: &Dialog, validity: Validity<'_>) -> Vec<SystemInform> {
    let mut offered: BTreeMap<&str, &str> = BTreeMap::new();
    let mut out = Vec::new();
    for act in system_acts(dialog).filter(|a| a.intent == Intent::Inform) {
        if act.slot == "name" {
            offered.insert(&act.domain, &act.value);
        }
        let valid = match validity {
            Validity::Any => true,
            Validity::Ontology(o) => {
                o.values(&act.domain, &act.slot).is_empty() || o.contains_value(&act.domain, &act.slot, &act.value)
            }
            Validity::Database(db) => match offered.get(act.domain.as_str()).and_then(|n| db.find_by_name(&act.domain, n)) {
                Some(record) => record.get(&act.slot).is_some_and(|v| values_match(v, &act.value)),
                None => db.has_value(&act.domain, &act.slot, &act.value),
            },
        };
        out.push(SystemInform {
            domain: act.domain.clone(),
            slot: act.slot.clone(),
            value: act.value.clone(),
            valid,
        });
    }
    out
}

fn inform_counts(dialog: &Dialog, goal: &UserGoal, validity: Validity<'_>) -> (usize, usize, usize) {
    let requested: BTreeSet<(&str, &str)> = goal.requests().map(|i| (i.domain.as_str(), i.slot.as_str())).collect();
    let mut by_pair: BTreeMap<(String, String), Vec<SystemInform>> = BTreeMap::new();
    for inf in system_informs(dialog, validity) {
        by_pair.entry((inf.domain.clone(), inf.slot.clone())).or_default().push(inf);
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for &(d, s) in &requested {
        match by_pair.get(&(d.to_string(), s.to_string())) {
            Some(infs) if infs.iter().any(|i| i.valid) => tp += 1,
            Some(_) => {
                fn_ += 1;
                fp += 1;
            }
            None => fn_ += 1,
        }
    }
    for ((d, s), infs) in &by_pair {
        if requested.contains(&(d.as_str(), s.as_str())) || ENTITY_SLOTS.contains(&s.as_str()) {
            continue;
        }
        let spurious = match goal.constraint_value(d, s) {
            Some(want) => infs.iter().any(|i| !values_match(&i.value, want)),
            None => true,
        };
        if spurious {
            fp += 1;
        }
    }
    (tp, fp, fn_)
}

/// (matched, total) goal booking slots against system booking acts.
fn booking_counts(dialog: &Dialog, goal: &UserGoal) -> (usize, usize, usize) {
    let booked: Vec<_> = system_acts(dialog).filter(|a| a.intent == Intent::Book).collect();
    let (mut matched, mut filled, mut total) = (0, 0, 0);
    for item in goal.bookings() {
        total += 1;
        let same_slot = booked.iter().filter(|b| b.domain == item.domain && b.slot == item.slot);
        let mut any = false;
        let mut hit = false;
        for b in same_slot {
            any = true;
            hit |= values_match(&b.value, &item.value);
        }
        filled += usize::from(any);
        matched += usize::from(hit);
    }
    (matched, filled, total)
}

fn requests_all_informed(dialog: &Dialog, goal: &UserGoal) -> bool {
    goal.requests().all(|r| {
        system_acts(dialog).any(|a| a.intent == Intent::Inform && a.domain == r.domain && a.slot == r.slot)
    })
}

pub fn evaluate_dialog(dialog: &Dialog, goal: &UserGoal, validity: Validity<'_>) -> Result<GoalEvalRecord, MetricError> {
    check_acts(dialog)?;
    let (tp, fp, fn_) = inform_counts(dialog, goal, validity);
    let (matched, filled, total) = booking_counts(dialog, goal);
    let (complete, by_requests) = if total > 0 {
        (filled == total, false)
    } else {
        (requests_all_informed(dialog, goal), true)
    };
    let success = fn_ == 0 && matched == total;
    Ok(GoalEvalRecord {
        success: u8::from(success),
        complete: u8::from(complete),
        book_rate: (total > 0).then(|| matched as f64 / total as f64),
        inform_tp: tp,
        inform_fp: fp,
        inform_fn: fn_,
        turns: dialog.user_turns().count(),
        completion_by_requests: by_requests,
    })
}

pub fn inform_prf(dialog: &Dialog, goal: &UserGoal, validity: Validity<'_>) -> Result<(f64, f64, f64), MetricError> {
    check_acts(dialog)?;
    let (tp, fp, fn_) = inform_counts(dialog, goal, validity);
    Ok(prf(tp, fp, fn_))
}

pub fn success_flag(dialog: &Dialog, goal: &UserGoal, validity: Validity<'_>) -> Result<u8, MetricError> {
    evaluate_dialog(dialog, goal, validity).map(|r| r.success)
}

pub fn completion_flag(dialog: &Dialog, goal: &UserGoal) -> Result<u8, MetricError> {
    evaluate_dialog(dialog, goal, Validity::Any).map(|r| r.complete)
}

pub fn book_rate(dialog: &Dialog, goal: &UserGoal) -> Result<Option<f64>, MetricError> {
    check_acts(dialog)?;
    let (matched, _, total) = booking_counts(dialog, goal);
    Ok((total > 0).then(|| matched as f64 / total as f64))
}

/// One row of the goal-fulfillment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalAggregate {
    pub n_dialogs: usize,
    pub compl_rate: f64,
    pub succ_rate: f64,
    pub book_rate: Option<f64>,
    pub inform_precision: f64,
    pub inform_recall: f64,
    pub inform_f1: f64,
    pub succ_dt: Option<f64>,
    pub dt: f64,
    /// Dialogs whose completion was judged by requests alone.
    pub completion_by_requests: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Means of the flags, mean of the defined booking rates, inform scores
/// from pooled counts, and dialog lengths overall and over successes.
pub fn aggregate_metrics(records: &[GoalEvalRecord]) -> Result<GoalAggregate, MetricError> {
    if records.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let (tp, fp, fn_) = records
        .iter()
        .fold((0, 0, 0), |(a, b, c), r| (a + r.inform_tp, b + r.inform_fp, c + r.inform_fn));
    let (p, r, f1) = prf(tp, fp, fn_);
    Ok(GoalAggregate {
        n_dialogs: records.len(),
        compl_rate: mean(records.iter().map(|r| f64::from(r.complete))).unwrap_or(0.0),
        succ_rate: mean(records.iter().map(|r| f64::from(r.success))).unwrap_or(0.0),
        book_rate: mean(records.iter().filter_map(|r| r.book_rate)),
        inform_precision: p,
        inform_recall: r,
        inform_f1: f1,
        succ_dt: mean(records.iter().filter(|r| r.success == 1).map(|r| r.turns as f64)),
        dt: mean(records.iter().map(|r| r.turns as f64)).unwrap_or(0.0),
        completion_by_requests: records.iter().filter(|r| r.completion_by_requests).count(),
    })
}
