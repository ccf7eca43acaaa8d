//! Uncertainty scores over probability maps.
//!
//! Three scores are provided: margins (one prediction, closeness of voxel
//! probabilities to 0.5), bootstrap (mean of the voxelwise variance across an
//! ensemble), and dropout top-fraction (mean of the highest voxel variances
//! across repeated stochastic predictions). Higher is always more uncertain.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::tabular::{csv_string, fmt_real};
use crate::volume::{variance_values, ProbabilityMap};
use crate::ItemId;

/// Default share of voxels kept by the dropout score.
pub const DEFAULT_TOP_FRACTION: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bootstrap,
    Margins,
    #[serde(rename = "dropout")]
    DropoutTopFraction,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Bootstrap => "bootstrap",
            Method::Margins => "margins",
            Method::DropoutTopFraction => "dropout",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bootstrap" => Some(Method::Bootstrap),
            "margins" => Some(Method::Margins),
            "dropout" => Some(Method::DropoutTopFraction),
            _ => None,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScore {
    pub item_id: ItemId,
    pub score: f64,
    pub method: Method,
    pub n_predictions: usize,
}

/// `-(mean |p - 0.5|)` over every voxel of a single prediction.
///
/// Lies in `[-0.5, 0]`; 0 means every voxel sits at 0.5.
pub fn margins_score(item_id: impl Into<ItemId>, map: &ProbabilityMap) -> Result<UncertaintyScore> {
    let values = map.values();
    if values.is_empty() {
        return Err(Error::invalid("margins score of an empty grid"));
    }
    let mean = compensated_sum(values.iter().map(|&p| (f64::from(p) - 0.5).abs()))
        / values.len() as f64;
    Ok(UncertaintyScore {
        item_id: item_id.into(),
        score: 0.0 - mean,
        method: Method::Margins,
        n_predictions: 1,
    })
}

/// Mean of the voxelwise variance map across one prediction per
/// bootstrapped model.
pub fn bootstrap_score(
    item_id: impl Into<ItemId>,
    maps: &[ProbabilityMap],
) -> Result<UncertaintyScore> {
    let var = variance_values(maps)?;
    Ok(UncertaintyScore {
        item_id: item_id.into(),
        score: mean_in_index_order(&var),
        method: Method::Bootstrap,
        n_predictions: maps.len(),
    })
}

/// Bootstrap score restricted to the highest `top_fraction` of voxel
/// variances. Not used by default; the plain whole-grid mean is the standard
/// bootstrap score.
pub fn bootstrap_score_focused(
    item_id: impl Into<ItemId>,
    maps: &[ProbabilityMap],
    top_fraction: f64,
) -> Result<UncertaintyScore> {
    let mut s = dropout_topfraction_score(item_id, maps, top_fraction)?;
    s.method = Method::Bootstrap;
    Ok(s)
}

/// Mean of the `k = max(1, ceil(top_fraction * voxels))` largest voxel
/// variances across `n >= 2` stochastic predictions.
pub fn dropout_topfraction_score(
    item_id: impl Into<ItemId>,
    maps: &[ProbabilityMap],
    top_fraction: f64,
) -> Result<UncertaintyScore> {
    let var = variance_values(maps)?;
    let k = top_count(top_fraction, var.len())?;
    Ok(UncertaintyScore {
        item_id: item_id.into(),
        score: top_mean(&var, k),
        method: Method::DropoutTopFraction,
        n_predictions: maps.len(),
    })
}

/// Number of voxels kept for a top fraction.
pub fn top_count(top_fraction: f64, voxels: usize) -> Result<usize> {
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "top fraction must lie in (0, 1], got {top_fraction}"
        )));
    }
    let raw = top_fraction * voxels as f64;
    // 0.001 * 1000 must give 1, not 2, despite representation error.
    let k = if (raw - raw.round()).abs() <= 1e-9 * raw.max(1.0) {
        raw.round()
    } else {
        raw.ceil()
    };
    Ok((k as usize).clamp(1, voxels.max(1)))
}

fn mean_in_index_order(values: &[f64]) -> f64 {
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// Mean of the `k` largest values. The chosen set is resolved by
/// (value desc, index asc) and summed in index order, so `k == len` gives
/// exactly the whole-grid mean.
fn top_mean(values: &[f64], k: usize) -> f64 {
    if k >= values.len() {
        return mean_in_index_order(values);
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let by_rank = |a: &usize, b: &usize| values[*b].total_cmp(&values[*a]).then(a.cmp(b));
    idx.select_nth_unstable_by(k - 1, by_rank);
    let top = &mut idx[..k];
    top.sort_unstable();
    compensated_sum(top.iter().map(|&i| values[i])) / k as f64
}

fn rank_order(a: &UncertaintyScore, b: &UncertaintyScore) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.item_id.cmp(&b.item_id))
}

/// Scores sorted by descending score, ties by ascending identifier.
pub fn ranked(scores: &[UncertaintyScore]) -> Result<Vec<UncertaintyScore>> {
    if let Some(first) = scores.first() {
        if let Some(other) = scores.iter().find(|s| s.method != first.method) {
            return Err(Error::invalid(format!(
                "cannot rank mixed methods ({} and {})",
                first.method, other.method
            )));
        }
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(rank_order);
    Ok(sorted)
}

/// Identifiers from most to least uncertain.
pub fn rank_by_uncertainty(scores: &[UncertaintyScore]) -> Result<Vec<ItemId>> {
    Ok(ranked(scores)?.into_iter().map(|s| s.item_id).collect())
}

const CSV_HEADER: [&str; 4] = ["item_id", "method", "score", "n_predictions"];

/// Ranked score CSV.
pub fn scores_to_csv(scores: &[UncertaintyScore]) -> Result<String> {
    let rows = ranked(scores)?.into_iter().map(|s| {
        vec![
            s.item_id.to_string(),
            s.method.name().to_owned(),
            fmt_real(s.score),
            s.n_predictions.to_string(),
        ]
    });
    csv_string(&CSV_HEADER, rows)
}

pub fn scores_from_csv(text: &str, origin: &str) -> Result<Vec<UncertaintyScore>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::parse(origin, e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::parse(
            origin,
            format!("expected header {}", CSV_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(origin, e.to_string()))?;
        let at = |what: &str| Error::parse(origin, format!("line {}: bad {what}", line + 2));
        let method = Method::parse(&rec[1]).ok_or_else(|| at("method"))?;
        let score: f64 = rec[2].parse().map_err(|_| at("score"))?;
        let n: usize = rec[3].parse().map_err(|_| at("n_predictions"))?;
        if !score.is_finite() || n == 0 {
            return Err(at("score row"));
        }
        out.push(UncertaintyScore {
            item_id: ItemId::new(&rec[0]),
            score,
            method,
            n_predictions: n,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Dims, VoxelGrid};

    fn pmap(values: Vec<f32>) -> ProbabilityMap {
        let d = Dims::new(1, 1, values.len()).unwrap();
        ProbabilityMap::new(VoxelGrid::new(d, values).unwrap()).unwrap()
    }

    fn score(id: &str, s: f64) -> UncertaintyScore {
        UncertaintyScore {
            item_id: id.into(),
            score: s,
            method: Method::DropoutTopFraction,
            n_predictions: 5,
        }
    }

    #[test]
    fn margins_extremes() {
        assert_eq!(margins_score("a", &pmap(vec![0.5; 8])).unwrap().score, 0.0);
        assert!(margins_score("a", &pmap(vec![0.5; 8])).unwrap().score.is_sign_positive());
        assert_eq!(margins_score("a", &pmap(vec![0.0; 8])).unwrap().score, -0.5);
        assert_eq!(margins_score("a", &pmap(vec![1.0; 8])).unwrap().score, -0.5);
    }

    #[test]
    fn margins_half_and_half() {
        let values = vec![0.0, 0.4, 0.0, 0.4];
        let oracle = {
            let mut acc = 0.0;
            for &v in &values {
                acc += (f64::from(v) - 0.5).abs();
            }
            -acc / values.len() as f64
        };
        let got = margins_score("a", &pmap(values)).unwrap().score;
        assert!((got - oracle).abs() < 1e-15);
        assert!((got + 0.3).abs() < 1e-8);
    }

    #[test]
    fn bootstrap_single_disagreement() {
        let a = vec![0.2f32; 1000];
        let mut b = a.clone();
        let mut a2 = a.clone();
        a2[17] = 0.0;
        b[17] = 1.0;
        let s = bootstrap_score("x", &[pmap(a2), pmap(b)]).unwrap();
        assert!((s.score - 0.00025).abs() < 1e-15);
        assert_eq!(s.n_predictions, 2);
        assert!(bootstrap_score("x", &[pmap(a.clone()), pmap(a.clone())]).unwrap().score == 0.0);
        assert!(bootstrap_score("x", &[pmap(a)]).is_err());
    }

    #[test]
    fn top_count_rounding() {
        assert_eq!(top_count(0.001, 1000).unwrap(), 1);
        assert_eq!(top_count(0.001, 1001).unwrap(), 2);
        assert_eq!(top_count(0.001, 10).unwrap(), 1);
        assert_eq!(top_count(0.2, 10).unwrap(), 2);
        assert_eq!(top_count(1.0, 37).unwrap(), 37);
        assert!(top_count(0.0, 10).is_err());
        assert!(top_count(1.5, 10).is_err());
        assert!(top_count(f64::NAN, 10).is_err());
    }

    #[test]
    fn dropout_top_two_of_ten() {
        // Pairs {0.5 +- d}: variance d^2, so d = 0.5, 0.4, 0.3 give 0.25, 0.16, 0.09.
        let mut lo = vec![0.5f32; 10];
        let mut hi = vec![0.5f32; 10];
        for (i, d) in [0.5f32, 0.4, 0.3].iter().enumerate() {
            lo[i] = 0.5 - d;
            hi[i] = 0.5 + d;
        }
        let maps = [pmap(lo), pmap(hi)];
        let var = variance_values(&maps).unwrap();
        let mut sorted = var.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let oracle = (sorted[0] + sorted[1]) / 2.0;
        let s = dropout_topfraction_score("x", &maps, 0.2).unwrap();
        assert!((s.score - oracle).abs() < 1e-15);
        assert!((s.score - 0.205).abs() < 1e-7);
    }

    #[test]
    fn dropout_thousandth_is_max() {
        let mut a = vec![0.3f32; 1000];
        let b = a.clone();
        a[400] = 0.9;
        let maps = [pmap(a), pmap(b)];
        let var = variance_values(&maps).unwrap();
        let max = var.iter().cloned().fold(0.0, f64::max);
        let s = dropout_topfraction_score("x", &maps, DEFAULT_TOP_FRACTION).unwrap();
        assert_eq!(s.score, max);
    }

    #[test]
    fn full_fraction_equals_bootstrap_bitwise() {
        let a: Vec<f32> = (0..50).map(|i| (i as f32 / 50.0).sin().abs()).collect();
        let b: Vec<f32> = (0..50).map(|i| (i as f32 / 7.0).cos().abs()).collect();
        let maps = [pmap(a), pmap(b)];
        let d = dropout_topfraction_score("x", &maps, 1.0).unwrap().score;
        let bs = bootstrap_score("x", &maps).unwrap().score;
        assert_eq!(d.to_bits(), bs.to_bits());
    }

    #[test]
    fn ranking_and_ties() {
        let ids = rank_by_uncertainty(&[score("a", 0.1), score("b", 0.3), score("c", 0.2)]).unwrap();
        assert_eq!(ids, vec![ItemId::from("b"), "c".into(), "a".into()]);
        let ids = rank_by_uncertainty(&[score("b", 0.2), score("a", 0.2)]).unwrap();
        assert_eq!(ids, vec![ItemId::from("a"), "b".into()]);
        let mut mixed = score("z", 0.0);
        mixed.method = Method::Margins;
        assert!(rank_by_uncertainty(&[score("a", 0.1), mixed]).is_err());
    }

    #[test]
    fn csv_round_trip_is_ranked() {
        let scores = vec![score("a", 0.1), score("b", 1.0 / 3.0)];
        let csv = scores_to_csv(&scores).unwrap();
        assert!(csv.starts_with("item_id,method,score,n_predictions\nb,dropout,"));
        let back = scores_from_csv(&csv, "mem").unwrap();
        assert_eq!(back, ranked(&scores).unwrap());
    }
}
