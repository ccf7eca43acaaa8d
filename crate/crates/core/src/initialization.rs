//! Initial training-set selection from first-order intensity features.
//!
//! Mean, median, histogram entropy and energy are extracted inside a mask,
//! z-scored per column across the dataset, and a max-min (farthest point)
//! greedy picks a spread-out initial set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, mean, median, population_std};
use crate::par;
use crate::seed;
use crate::selection::SelectionResult;
use crate::tabular::{csv_string, fmt_real, NumericTable};
use crate::volume::{SegmentationMask, VoxelGrid};
use crate::ItemId;

/// Histogram bin count used for entropy.
pub const DEFAULT_BINS: usize = 32;
/// Initial training-set sizes used in the initialization experiments.
pub const INITIAL_SIZE_PRESETS: [usize; 3] = [20, 40, 80];
/// Column order of feature tables.
pub const FEATURE_COLUMNS: [&str; 4] = ["mean", "median", "entropy", "energy"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderFeatures {
    pub item_id: ItemId,
    pub mean: f64,
    pub median: f64,
    /// Shannon entropy of the intensity histogram, in bits.
    pub entropy: f64,
    /// Sum of squared intensities.
    pub energy: f64,
}

impl FirstOrderFeatures {
    pub fn as_row(&self) -> [f64; 4] {
        [self.mean, self.median, self.entropy, self.energy]
    }
}

/// First-order features of `volume` over voxels where `mask` is 1.
pub fn extract_first_order(
    item_id: impl Into<ItemId>,
    volume: &VoxelGrid,
    mask: &SegmentationMask,
    bins: usize,
) -> Result<FirstOrderFeatures> {
    let item_id = item_id.into();
    if volume.dims() != mask.dims() {
        return Err(Error::DimMismatch(format!(
            "volume {} vs mask {} for {item_id}",
            volume.dims(),
            mask.dims()
        )));
    }
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let values: Vec<f64> = volume
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| mask.is_set(*i))
        .map(|(_, &v)| f64::from(v))
        .collect();
    if values.is_empty() {
        return Err(Error::invalid(format!("mask for {item_id} has no active voxels")));
    }
    Ok(FirstOrderFeatures {
        mean: mean(&values),
        median: median(&values),
        entropy: histogram_entropy(&values, bins),
        energy: compensated_sum(values.iter().map(|v| v * v)),
        item_id,
    })
}

/// Entropy (bits) of a `bins`-bin histogram spanning `[min, max]`.
fn histogram_entropy(values: &[f64], bins: usize) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo == hi {
        return 0.0;
    }
    let width = hi - lo;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) * bins as f64).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let n = values.len() as f64;
    let h = compensated_sum(counts.iter().filter(|&&c| c > 0).map(|&c| {
        let p = c as f64 / n;
        -p * p.log2()
    }));
    h.max(0.0)
}

/// Per-column z-scored feature table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedFeatureMatrix {
    pub columns: Vec<String>,
    pub item_ids: Vec<ItemId>,
    pub rows: Vec<Vec<f64>>,
}

impl NormalizedFeatureMatrix {
    pub fn to_csv(&self) -> Result<String> {
        let mut header = vec!["item_id"];
        header.extend(self.columns.iter().map(String::as_str));
        let rows = self.item_ids.iter().zip(&self.rows).map(|(id, row)| {
            std::iter::once(id.to_string())
                .chain(row.iter().map(|&v| fmt_real(v)))
                .collect::<Vec<_>>()
        });
        csv_string(&header, rows)
    }
}

/// Z-score every column of `rows` (population standard deviation). Columns
/// whose values are all equal become zeros.
pub fn zscore_columns(rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if rows.len() < 2 {
        return Err(Error::invalid(format!(
            "normalization needs at least 2 items, got {}",
            rows.len()
        )));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::DimMismatch("feature rows have different lengths".into()));
    }
    let mut out = vec![vec![0.0; width]; rows.len()];
    for c in 0..width {
        let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        if col.iter().all(|&v| v == col[0]) {
            continue;
        }
        let (m, s) = (mean(&col), population_std(&col));
        for (r, &v) in out.iter_mut().zip(&col) {
            r[c] = (v - m) / s;
        }
    }
    Ok(out)
}

pub fn normalize_features(raw: &[FirstOrderFeatures]) -> Result<NormalizedFeatureMatrix> {
    let rows: Vec<Vec<f64>> = raw.iter().map(|f| f.as_row().to_vec()).collect();
    Ok(NormalizedFeatureMatrix {
        columns: FEATURE_COLUMNS.iter().map(|s| s.to_string()).collect(),
        item_ids: raw.iter().map(|f| f.item_id.clone()).collect(),
        rows: zscore_columns(&rows)?,
    })
}

/// Normalize an arbitrary numeric table column by column.
pub fn normalize_table(table: &NumericTable) -> Result<NormalizedFeatureMatrix> {
    Ok(NormalizedFeatureMatrix {
        columns: table.columns.clone(),
        item_ids: table.ids.clone(),
        rows: zscore_columns(&table.rows)?,
    })
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Farthest-point selection of `n` items.
///
/// Starts from a seeded random item (in ascending identifier order), then
/// repeatedly adds the item whose minimum Euclidean distance to the chosen
/// set is largest. The starting item's recorded score is 0.
pub fn select_diverse_initial(
    matrix: &NormalizedFeatureMatrix,
    n: usize,
    seed: u64,
) -> Result<SelectionResult> {
    let count = matrix.item_ids.len();
    if n == 0 || n > count {
        return Err(Error::invalid(format!(
            "cannot select {n} initial items from {count}"
        )));
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&a, &b| matrix.item_ids[a].cmp(&matrix.item_ids[b]));
    if order
        .windows(2)
        .any(|w| matrix.item_ids[w[0]] == matrix.item_ids[w[1]])
    {
        return Err(Error::invalid("duplicate item ids in feature matrix"));
    }
    let rows: Vec<&[f64]> = order.iter().map(|&i| matrix.rows[i].as_slice()).collect();
    let id = |i: usize| matrix.item_ids[order[i]].clone();

    let start = seed::start_index(seed, count);
    let mut chosen = vec![start];
    let mut taken = vec![false; count];
    taken[start] = true;
    let mut min_dist = par::map_range(count, |i| euclidean(rows[i], rows[start]));
    let mut scores = BTreeMap::new();
    scores.insert(id(start), 0.0);

    while chosen.len() < n {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..count).filter(|&i| !taken[i]) {
            if best.is_none_or(|(_, d)| min_dist[i] > d) {
                best = Some((i, min_dist[i]));
            }
        }
        let (b, d) = best.expect("n <= count leaves a candidate");
        chosen.push(b);
        taken[b] = true;
        scores.insert(id(b), d);
        let fresh = par::map_range(count, |i| euclidean(rows[i], rows[b]));
        for (m, f) in min_dist.iter_mut().zip(fresh) {
            *m = m.min(f);
        }
    }

    Ok(SelectionResult {
        strategy: "diverse".to_owned(),
        seed,
        chosen: chosen.into_iter().map(id).collect(),
        scores,
    })
}

pub fn features_to_csv(features: &[FirstOrderFeatures]) -> Result<String> {
    let mut header = vec!["item_id"];
    header.extend(FEATURE_COLUMNS);
    let rows = features.iter().map(|f| {
        std::iter::once(f.item_id.to_string())
            .chain(f.as_row().iter().map(|&v| fmt_real(v)))
            .collect::<Vec<_>>()
    });
    csv_string(&header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;

    fn line(values: &[f32]) -> (VoxelGrid, SegmentationMask) {
        let d = Dims::new(1, 1, values.len()).unwrap();
        let g = VoxelGrid::new(d, values.to_vec()).unwrap();
        let m = SegmentationMask::from_bools(d, &vec![true; values.len()]).unwrap();
        (g, m)
    }

    #[test]
    fn constant_region() {
        let d = Dims::new(2, 2, 4).unwrap();
        let g = VoxelGrid::filled(d, 2.0).unwrap();
        let bits: Vec<bool> = (0..16).map(|i| i < 10).collect();
        let m = SegmentationMask::from_bools(d, &bits).unwrap();
        let f = extract_first_order("c", &g, &m, DEFAULT_BINS).unwrap();
        assert_eq!((f.mean, f.median, f.energy, f.entropy), (2.0, 2.0, 40.0, 0.0));
    }

    #[test]
    fn two_level_uniform() {
        let (g, m) = line(&[0.0, 0.0, 1.0, 1.0]);
        let f = extract_first_order("t", &g, &m, 2).unwrap();
        assert_eq!((f.mean, f.median, f.energy, f.entropy), (0.5, 0.5, 2.0, 1.0));
    }

    #[test]
    fn mask_restricts_voxels() {
        let d = Dims::new(1, 1, 4).unwrap();
        let g = VoxelGrid::new(d, vec![1.0, 100.0, 3.0, 100.0]).unwrap();
        let m = SegmentationMask::from_bools(d, &[true, false, true, false]).unwrap();
        let f = extract_first_order("m", &g, &m, 4).unwrap();
        assert_eq!((f.mean, f.median, f.energy), (2.0, 2.0, 10.0));
        let empty = SegmentationMask::from_bools(d, &[false; 4]).unwrap();
        assert!(extract_first_order("m", &g, &empty, 4).is_err());
        let other = SegmentationMask::from_bools(Dims::cube(1).unwrap(), &[true]).unwrap();
        assert!(extract_first_order("m", &g, &other, 4).is_err());
    }

    #[test]
    fn two_item_zscore() {
        let raw = vec![
            FirstOrderFeatures { item_id: "a".into(), mean: 1.0, median: 5.0, entropy: 2.0, energy: 3.0 },
            FirstOrderFeatures { item_id: "b".into(), mean: 3.0, median: 5.0, entropy: 1.0, energy: 9.0 },
        ];
        let n = normalize_features(&raw).unwrap();
        assert_eq!(n.rows[0], vec![-1.0, 0.0, 1.0, -1.0]);
        assert_eq!(n.rows[1], vec![1.0, 0.0, -1.0, 1.0]);
        assert!(normalize_features(&raw[..1]).is_err());
    }

    #[test]
    fn identical_items_normalize_to_zero() {
        let f = FirstOrderFeatures { item_id: "a".into(), mean: 0.1, median: 0.1, entropy: 0.1, energy: 0.1 };
        let raw: Vec<_> = (0..3).map(|i| FirstOrderFeatures { item_id: format!("i{i}").into(), ..f.clone() }).collect();
        let n = normalize_features(&raw).unwrap();
        assert!(n.rows.iter().flatten().all(|&v| v == 0.0));
    }

    fn one_d(values: &[f64]) -> NormalizedFeatureMatrix {
        NormalizedFeatureMatrix {
            columns: vec!["x".into()],
            item_ids: (0..values.len()).map(|i| ItemId::new(format!("i{i}"))).collect(),
            rows: values.iter().map(|&v| vec![v]).collect(),
        }
    }

    #[test]
    fn farthest_point_line() {
        let m = one_d(&[0.0, 1.0, 10.0]);
        let seed = (0..).find(|&s| seed::start_index(s, 3) == 0).unwrap();
        let r = select_diverse_initial(&m, 2, seed).unwrap();
        assert_eq!(r.chosen, vec![ItemId::from("i0"), "i2".into()]);
        assert_eq!(r.scores[&ItemId::from("i2")], 10.0);
        let all = select_diverse_initial(&m, 3, seed).unwrap();
        assert_eq!(all.chosen.len(), 3);
        assert!(select_diverse_initial(&m, 4, seed).is_err());
    }
}
