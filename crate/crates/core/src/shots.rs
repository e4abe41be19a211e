//! In-context example selection: random, or by goal similarity.
//!
//! The similarity of two goals is the product of the Jaccard coefficients of
//! their domain sets and their slot sets. Ranking compares the two factors as
//! exact fractions so ties are detected without floating-point noise.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ShotError;
use crate::model::{Dialog, UserGoal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotKind {
    Random,
    #[default]
    Jaccard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotStrategy {
    pub kind: ShotKind,
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
}

fn domain_set(goal: &UserGoal) -> BTreeSet<&str> {
    goal.items().iter().map(|i| i.domain.as_str()).collect()
}

fn slot_set(goal: &UserGoal) -> BTreeSet<&str> {
    goal.items()
        .iter()
        .filter(|i| !i.slot.is_empty())
        .map(|i| i.slot.as_str())
        .collect()
}

/// |A ∩ B| / |A ∪ B| as (numerator, denominator); two empty sets give 1/1.
fn jaccard_fraction(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> (u64, u64) {
    let union = a.union(b).count() as u64;
    if union == 0 {
        return (1, 1);
    }
    (a.intersection(b).count() as u64, union)
}

/// Similarity score kept as an exact fraction.
#[derive(Debug, Clone, Copy)]
pub struct Similarity {
    num: u64,
    den: u64,
}

impl Similarity {
    pub fn between(candidate: &UserGoal, target: &UserGoal) -> Self {
        let (dn, dd) = jaccard_fraction(&domain_set(candidate), &domain_set(target));
        let (sn, sd) = jaccard_fraction(&slot_set(candidate), &slot_set(target));
        Similarity {
            num: dn * sn,
            den: dd * sd,
        }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl PartialEq for Similarity {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Similarity {}

impl PartialOrd for Similarity {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Similarity {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

pub fn jaccard_similarity(g_k: &UserGoal, g_t: &UserGoal) -> f64 {
    Similarity::between(g_k, g_t).value()
}

/// Picks `strategy.k` examples from the pool. Similarity ranking is
/// descending by score with ties broken by ascending dialog id; random
/// selection samples without replacement under `strategy.seed`.
pub fn select_shots<'p>(
    pool: &'p [(UserGoal, Dialog)],
    target: &UserGoal,
    strategy: &ShotStrategy,
) -> Result<Vec<&'p (UserGoal, Dialog)>, ShotError> {
    let k = strategy.k;
    if k == 0 {
        return Ok(Vec::new());
    }
    if pool.len() < k {
        return Err(ShotError::PoolTooSmall { pool: pool.len(), k });
    }
    match strategy.kind {
        ShotKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(strategy.seed);
            Ok(index::sample(&mut rng, pool.len(), k)
                .into_iter()
                .map(|i| &pool[i])
                .collect())
        }
        ShotKind::Jaccard => {
            let mut scored: Vec<(Similarity, &'p (UserGoal, Dialog))> = pool
                .iter()
                .map(|entry| (Similarity::between(&entry.0, target), entry))
                .collect();
            scored.sort_by(|(sa, a), (sb, b)| sb.cmp(sa).then_with(|| a.1.id.cmp(&b.1.id)));
            Ok(scored.into_iter().take(k).map(|(_, e)| e).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DialogActItem;
    use proptest::prelude::*;

    fn goal(items: &[(&str, &str)]) -> UserGoal {
        UserGoal::new(
            items
                .iter()
                .map(|(d, s)| DialogActItem::request(d, s))
                .collect(),
            None,
        )
        .unwrap()
    }

    fn entry(id: &str, g: UserGoal) -> (UserGoal, Dialog) {
        (g.clone(), Dialog::new(id, g))
    }

    #[test]
    fn identical_goals_score_one() {
        let g = goal(&[("restaurant", "food"), ("hotel", "area")]);
        assert_eq!(jaccard_similarity(&g, &g), 1.0);
    }

    #[test]
    fn disjoint_domains_score_zero() {
        let a = goal(&[("restaurant", "area")]);
        let b = goal(&[("hotel", "area")]);
        assert_eq!(jaccard_similarity(&a, &b), 0.0);
    }

    #[test]
    fn worked_example() {
        let target = goal(&[("restaurant", "food"), ("restaurant", "people"), ("restaurant", "day")]);
        let cand = goal(&[("restaurant", "food"), ("hotel", "area")]);
        assert_eq!(jaccard_similarity(&cand, &target), 0.125);
    }

    #[test]
    fn empty_slot_sets_count_as_agreement() {
        let a = UserGoal::new(vec![DialogActItem::bye()], None).unwrap();
        assert_eq!(jaccard_similarity(&a, &a), 1.0);
    }

    #[test]
    fn zero_shot_is_empty() {
        let pool = vec![entry("a", goal(&[("hotel", "area")]))];
        let s = ShotStrategy { kind: ShotKind::Jaccard, k: 0, seed: 0 };
        assert!(select_shots(&pool, &goal(&[("hotel", "area")]), &s).unwrap().is_empty());
        let s = ShotStrategy { kind: ShotKind::Random, k: 2, seed: 0 };
        assert_eq!(
            select_shots(&pool, &goal(&[("hotel", "area")]), &s).unwrap_err(),
            ShotError::PoolTooSmall { pool: 1, k: 2 }
        );
    }

    #[test]
    fn shared_domain_ranks_first() {
        let pool = vec![
            entry("a", goal(&[("hotel", "area")])),
            entry("b", goal(&[("train", "day")])),
            entry("c", goal(&[("restaurant", "area"), ("restaurant", "food")])),
        ];
        let target = goal(&[("restaurant", "area")]);
        let s = ShotStrategy { kind: ShotKind::Jaccard, k: 3, seed: 0 };
        let ids: Vec<&str> = select_shots(&pool, &target, &s).unwrap().iter().map(|e| e.1.id.as_str()).collect();
        // a and b both score 0 and tie-break by id
        assert_eq!(ids, ["c", "a", "b"]);
    }

    #[test]
    fn equal_fractions_tie_exactly() {
        // 1/2 * 2/3 and 1/3 * 1/1 are both 1/3
        let a = Similarity { num: 2, den: 6 };
        let b = Similarity { num: 1, den: 3 };
        assert_eq!(a, b);
    }

    #[test]
    fn random_is_seeded() {
        let pool: Vec<_> = (0..10).map(|i| entry(&format!("d{i}"), goal(&[("hotel", "area")]))).collect();
        let s = ShotStrategy { kind: ShotKind::Random, k: 3, seed: 9 };
        let t = goal(&[("hotel", "area")]);
        let a: Vec<_> = select_shots(&pool, &t, &s).unwrap().iter().map(|e| e.1.id.clone()).collect();
        let b: Vec<_> = select_shots(&pool, &t, &s).unwrap().iter().map(|e| e.1.id.clone()).collect();
        assert_eq!(a, b);
        let unique: BTreeSet<_> = a.iter().collect();
        assert_eq!(unique.len(), 3);
    }

    fn goal_strategy() -> impl Strategy<Value = UserGoal> {
        let d = prop::sample::select(vec!["restaurant", "hotel", "train", "taxi"]);
        let s = prop::sample::select(vec!["area", "food", "day", "people", "phone"]);
        prop::collection::vec((d, s), 1..6).prop_map(|pairs| goal(&pairs))
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in goal_strategy(), b in goal_strategy()) {
            let ab = jaccard_similarity(&a, &b);
            prop_assert_eq!(ab, jaccard_similarity(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            let same = domain_set(&a) == domain_set(&b) && slot_set(&a) == slot_set(&b);
            prop_assert_eq!(ab == 1.0, same);
        }

        #[test]
        fn duplicate_items_do_not_change_score(a in goal_strategy(), b in goal_strategy()) {
            let mut items = a.items().to_vec();
            items.push(items[0].clone());
            let dup = UserGoal::new(items, None).unwrap();
            prop_assert_eq!(jaccard_similarity(&dup, &b), jaccard_similarity(&a, &b));
        }
    }
}
