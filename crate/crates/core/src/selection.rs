//! Query strategies: random query, top-k uncertainty, greedy representative
//! max cover, and non-similar selection against already annotated items.
//!
//! Every strategy is a pure function of its inputs and seed. Inputs are first
//! put in ascending identifier order, the seeded starting pick indexes into
//! that order, and every argmax/argmin resolves ties to the smallest
//! identifier.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::seed;
use crate::similarity::{FeatureVector, SimilarityMatrix};
use crate::uncertainty::{ranked, UncertaintyScore};
use crate::ItemId;

/// Default shortlist size (the k most uncertain items).
pub const DEFAULT_SHORTLIST_K: usize = 100;
/// Default number of items annotated per round.
pub const DEFAULT_BATCH_M: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    #[serde(rename = "topk")]
    TopK,
    Representative,
    #[serde(rename = "nonsimilar")]
    NonSimilar,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::TopK => "topk",
            Strategy::Representative => "representative",
            Strategy::NonSimilar => "nonsimilar",
        }
    }

    /// Whether the strategy consumes a shortlist of feature vectors.
    pub fn uses_features(self) -> bool {
        matches!(self, Strategy::Representative | Strategy::NonSimilar)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Universe over which the representative objective is summed at each step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Universe {
    /// The shortlist minus everything already chosen and minus the candidate.
    #[default]
    Shrinking,
    /// The whole shortlist.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionRequest {
    pub strategy: Strategy,
    pub pool_size_k: usize,
    pub batch_size_m: usize,
    pub seed: u64,
}

impl SelectionRequest {
    /// Check `m <= k <= unannotated`.
    pub fn validate(&self, unannotated: usize) -> Result<()> {
        if self.batch_size_m == 0 {
            return Err(Error::invalid("m must be positive"));
        }
        if self.batch_size_m > self.pool_size_k {
            return Err(Error::invalid(format!(
                "m = {} exceeds k = {}",
                self.batch_size_m, self.pool_size_k
            )));
        }
        if self.pool_size_k > unannotated {
            return Err(Error::invalid(format!(
                "k = {} exceeds the {unannotated} unannotated items",
                self.pool_size_k
            )));
        }
        Ok(())
    }
}

/// Chosen identifiers in selection order plus a per-item diagnostic value.
///
/// The diagnostic is the uncertainty score (top-k), the objective value at the
/// moment of selection (representative), the similarity sum at selection
/// (non-similar) or the min-distance at selection (diverse initialization).
/// Random query records no scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub strategy: String,
    pub seed: u64,
    pub chosen: Vec<ItemId>,
    pub scores: BTreeMap<ItemId, f64>,
}

impl SelectionResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("selection result serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for id in &self.chosen {
            out.push_str(id.as_str());
            out.push('\n');
        }
        out
    }
}

fn check_m(m: usize, available: usize, what: &str) -> Result<()> {
    if m == 0 {
        return Err(Error::invalid("m must be positive"));
    }
    if m > available {
        return Err(Error::invalid(format!(
            "cannot select {m} items from {available} {what}"
        )));
    }
    Ok(())
}

fn check_unique<'a>(ids: impl IntoIterator<Item = &'a ItemId>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::invalid(format!("duplicate item id {id}")));
        }
    }
    Ok(())
}

/// Uniform sample of `m` items without replacement.
pub fn select_random(pool: &[ItemId], m: usize, seed: u64) -> Result<SelectionResult> {
    check_m(m, pool.len(), "pool items")?;
    check_unique(pool)?;
    let mut sorted = pool.to_vec();
    sorted.sort();
    let mut rng = seed::rng(seed);
    let (chosen, _) = sorted.partial_shuffle(&mut rng, m);
    Ok(SelectionResult {
        strategy: Strategy::Random.name().to_owned(),
        seed,
        chosen: chosen.to_vec(),
        scores: BTreeMap::new(),
    })
}

/// The `m` most uncertain items.
pub fn select_topk_uncertain(scores: &[UncertaintyScore], m: usize) -> Result<SelectionResult> {
    check_m(m, scores.len(), "scored items")?;
    check_unique(scores.iter().map(|s| &s.item_id))?;
    let top: Vec<_> = ranked(scores)?.into_iter().take(m).collect();
    Ok(SelectionResult {
        strategy: Strategy::TopK.name().to_owned(),
        seed: 0,
        chosen: top.iter().map(|s| s.item_id.clone()).collect(),
        scores: top.into_iter().map(|s| (s.item_id, s.score)).collect(),
    })
}

/// Sort vectors by identifier, rejecting duplicates.
fn sorted_refs(vs: &[FeatureVector]) -> Result<Vec<&FeatureVector>> {
    let mut refs: Vec<&FeatureVector> = vs.iter().collect();
    refs.sort_by(|a, b| a.item_id().cmp(b.item_id()));
    check_unique(refs.iter().map(|v| v.item_id()))?;
    Ok(refs)
}

/// First index holding the maximum (`better(a, b)` is a strict comparison).
fn first_best(values: &[(usize, f64)], better: impl Fn(f64, f64) -> bool) -> (usize, f64) {
    let mut best = values[0];
    for &(i, v) in &values[1..] {
        if better(v, best.1) {
            best = (i, v);
        }
    }
    best
}

/// Greedy representative subset of an uncertain shortlist.
pub fn select_representative(
    shortlist: &[FeatureVector],
    m: usize,
    seed: u64,
) -> Result<SelectionResult> {
    select_representative_with(shortlist, m, seed, Universe::Shrinking)
}

/// Greedy max cover: start from a seeded random member, then repeatedly add
/// the candidate `x` maximizing `F(S ∪ {x}, U)`, where
/// `F(S, U) = Σ_{y ∈ U} max_{s ∈ S} cos(s, y)`.
pub fn select_representative_with(
    shortlist: &[FeatureVector],
    m: usize,
    seed: u64,
    universe: Universe,
) -> Result<SelectionResult> {
    check_m(m, shortlist.len(), "shortlisted items")?;
    let items = sorted_refs(shortlist)?;
    let sim = SimilarityMatrix::square(&items)?;
    let n = items.len();

    let start = seed::start_index(seed, n);
    let mut chosen = vec![start];
    let mut taken = vec![false; n];
    taken[start] = true;
    let mut cover: Vec<f64> = sim.row(start).to_vec();

    let objective = |x: usize, cover: &[f64], taken: &[bool]| -> f64 {
        let row = sim.row(x);
        let mut total = 0.0;
        for y in 0..n {
            if universe == Universe::Shrinking && (taken[y] || y == x) {
                continue;
            }
            total += cover[y].max(row[y]);
        }
        total
    };

    let mut scores = BTreeMap::new();
    scores.insert(items[start].item_id().clone(), {
        let mut t = vec![false; n];
        t[start] = true;
        objective(start, sim.row(start), &t)
    });

    while chosen.len() < m {
        let candidates: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
        let values = par::map(&candidates, |&x| (x, objective(x, &cover, &taken)));
        let (best, value) = first_best(&values, |a, b| a > b);
        chosen.push(best);
        taken[best] = true;
        for (c, &s) in cover.iter_mut().zip(sim.row(best)) {
            *c = c.max(s);
        }
        scores.insert(items[best].item_id().clone(), value);
    }

    Ok(SelectionResult {
        strategy: Strategy::Representative.name().to_owned(),
        seed,
        chosen: chosen.into_iter().map(|i| items[i].item_id().clone()).collect(),
        scores,
    })
}

/// Greedy subset least similar to the annotated set: start from a seeded
/// random member, then repeatedly add the candidate minimizing the sum of its
/// similarities to every annotated item and every item already chosen.
///
/// Sums accumulate annotated items in ascending identifier order, then chosen
/// items in selection order.
pub fn select_nonsimilar(
    shortlist: &[FeatureVector],
    annotated: &[FeatureVector],
    m: usize,
    seed: u64,
) -> Result<SelectionResult> {
    check_m(m, shortlist.len(), "shortlisted items")?;
    let items = sorted_refs(shortlist)?;
    let known = sorted_refs(annotated)?;
    let known_ids: BTreeSet<&ItemId> = known.iter().map(|v| v.item_id()).collect();
    if let Some(dup) = items.iter().find(|v| known_ids.contains(v.item_id())) {
        return Err(Error::invalid(format!(
            "item {} is both shortlisted and already annotated",
            dup.item_id()
        )));
    }
    let n = items.len();
    let cross = SimilarityMatrix::between(&items, &known)?;
    let sim = SimilarityMatrix::square(&items)?;

    let mut sums: Vec<f64> = (0..n)
        .map(|i| {
            let mut s = 0.0;
            for &v in cross.row(i) {
                s += v;
            }
            s
        })
        .collect();

    let start = seed::start_index(seed, n);
    let mut scores = BTreeMap::new();
    scores.insert(items[start].item_id().clone(), sums[start]);
    let mut chosen = vec![start];
    let mut taken = vec![false; n];
    taken[start] = true;
    for (i, s) in sums.iter_mut().enumerate() {
        *s += sim.get(i, start);
    }

    while chosen.len() < m {
        let values: Vec<(usize, f64)> = (0..n).filter(|&i| !taken[i]).map(|i| (i, sums[i])).collect();
        let (best, value) = first_best(&values, |a, b| a < b);
        chosen.push(best);
        taken[best] = true;
        scores.insert(items[best].item_id().clone(), value);
        for (i, s) in sums.iter_mut().enumerate() {
            *s += sim.get(i, best);
        }
    }

    Ok(SelectionResult {
        strategy: Strategy::NonSimilar.name().to_owned(),
        seed,
        chosen: chosen.into_iter().map(|i| items[i].item_id().clone()).collect(),
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::Method;

    fn fv(id: &str, v: &[f64]) -> FeatureVector {
        FeatureVector::new(id, v.to_vec()).unwrap()
    }

    fn ids(v: &[&str]) -> Vec<ItemId> {
        v.iter().map(|&s| ItemId::from(s)).collect()
    }

    fn seed_starting_at(n: usize, index: usize) -> u64 {
        (0..).find(|&s| seed::start_index(s, n) == index).unwrap()
    }

    #[test]
    fn random_whole_pool_and_determinism() {
        let pool = ids(&["c", "a", "b"]);
        let r = select_random(&pool, 3, 11).unwrap();
        let mut got = r.chosen.clone();
        got.sort();
        assert_eq!(got, ids(&["a", "b", "c"]));
        assert_eq!(select_random(&pool, 2, 5).unwrap(), select_random(&pool, 2, 5).unwrap());
        assert!(select_random(&pool, 4, 5).is_err());
        assert!(select_random(&ids(&["a", "a"]), 1, 5).is_err());
    }

    #[test]
    fn random_is_input_order_independent() {
        let a = ids(&["a", "b", "c", "d", "e"]);
        let b = ids(&["e", "c", "a", "d", "b"]);
        assert_eq!(select_random(&a, 3, 9).unwrap(), select_random(&b, 3, 9).unwrap());
    }

    #[test]
    fn topk_prefix() {
        let s = |id: &str, v| UncertaintyScore {
            item_id: id.into(),
            score: v,
            method: Method::Bootstrap,
            n_predictions: 3,
        };
        let scores = vec![s("a", 0.1), s("b", 0.3), s("c", 0.2)];
        let r = select_topk_uncertain(&scores, 2).unwrap();
        assert_eq!(r.chosen, ids(&["b", "c"]));
        assert_eq!(r.scores[&ItemId::from("b")], 0.3);
        assert_eq!(select_topk_uncertain(&scores, 3).unwrap().chosen, ids(&["b", "c", "a"]));
        assert!(select_topk_uncertain(&scores, 4).is_err());
    }

    #[test]
    fn representative_identical_vectors_tie_to_lowest_id() {
        let short: Vec<_> = ["a", "b", "c", "d"].iter().map(|id| fv(id, &[1.0, 2.0])).collect();
        for start in 0..4 {
            let seed = seed_starting_at(4, start);
            let r = select_representative(&short, 2, seed).unwrap();
            let expected_second = if start == 0 { "b" } else { "a" };
            assert_eq!(r.chosen[0], short[start].item_id().clone());
            assert_eq!(r.chosen[1], ItemId::from(expected_second));
        }
    }

    #[test]
    fn representative_exhausts_shortlist() {
        let short = vec![fv("a", &[1.0, 0.0]), fv("b", &[0.0, 1.0]), fv("c", &[1.0, 1.0])];
        let r = select_representative(&short, 3, 4).unwrap();
        let mut got = r.chosen.clone();
        got.sort();
        assert_eq!(got, ids(&["a", "b", "c"]));
        assert_eq!(r.scores.len(), 3);
        assert!(select_representative(&short, 4, 4).is_err());
    }

    #[test]
    fn shrinking_and_fixed_universe_agree_on_choices() {
        // F over the fixed universe is F over the shrinking one plus |S|, so
        // choices agree wherever the margin exceeds rounding.
        let short: Vec<_> = (0..7)
            .map(|i| {
                let t = i as f64;
                fv(&format!("v{i}"), &[t.sin() + 1.5, (2.0 * t).cos(), 0.3 * t])
            })
            .collect();
        let a = select_representative_with(&short, 4, 3, Universe::Shrinking).unwrap();
        let b = select_representative_with(&short, 4, 3, Universe::Fixed).unwrap();
        assert_eq!(a.chosen, b.chosen);
    }

    #[test]
    fn nonsimilar_hand_example() {
        let short = vec![fv("a", &[1.0, 0.0]), fv("b", &[0.0, 1.0]), fv("c", &[1.0, 1.0])];
        let seed = seed_starting_at(3, 2);
        let r = select_nonsimilar(&short, &[], 2, seed).unwrap();
        // Both remaining sums are 1/sqrt(2); the smaller id wins.
        assert_eq!(r.chosen, ids(&["c", "a"]));
        let s = r.scores[&ItemId::from("a")];
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn nonsimilar_fully_represented_still_selects() {
        let short = vec![fv("a", &[1.0, 0.0]), fv("b", &[0.0, 1.0]), fv("c", &[1.0, 1.0])];
        let annotated: Vec<_> = short.iter().map(|v| v.relabel(format!("ann-{}", v.item_id()))).collect();
        let r = select_nonsimilar(&short, &annotated, 2, 1).unwrap();
        assert_eq!(r.chosen.len(), 2);
        assert!(select_nonsimilar(&short, &short, 2, 1).is_err());
    }

    #[test]
    fn request_validation() {
        let req = SelectionRequest {
            strategy: Strategy::Representative,
            pool_size_k: 100,
            batch_size_m: 50,
            seed: 0,
        };
        assert!(req.validate(120).is_ok());
        assert!(req.validate(99).is_err());
        assert!(SelectionRequest { batch_size_m: 101, ..req }.validate(200).is_err());
    }

    #[test]
    fn json_and_text_outputs() {
        let r = SelectionResult {
            strategy: "topk".into(),
            seed: 3,
            chosen: ids(&["b", "a"]),
            scores: [(ItemId::from("a"), 0.5), (ItemId::from("b"), 0.25)].into_iter().collect(),
        };
        assert_eq!(
            r.to_json(),
            r#"{"strategy":"topk","seed":3,"chosen":["b","a"],"scores":{"a":0.5,"b":0.25}}"#
        );
        assert_eq!(r.to_text(), "b\na\n");
    }
}
