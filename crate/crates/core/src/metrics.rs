//! Dice overlap and learning-curve summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{mean, median, population_std};
use crate::tabular::{csv_string, fmt_real};
use crate::volume::SegmentationMask;
use crate::ItemId;

/// Training-set fractions at which the reference learning curves were reported.
pub const FRACTION_PRESETS: [f64; 7] = [0.078, 0.175, 0.273, 0.370, 0.468, 0.565, 0.663];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiceScore {
    pub item_id: ItemId,
    pub value: f64,
}

/// `2|A ∩ B| / (|A| + |B|)`; two empty masks score 1.
pub fn dice(pred: &SegmentationMask, truth: &SegmentationMask) -> Result<f64> {
    if pred.dims() != truth.dims() {
        return Err(Error::DimMismatch(format!(
            "prediction {} vs truth {}",
            pred.dims(),
            truth.dims()
        )));
    }
    let (mut both, mut a, mut b) = (0u64, 0u64, 0u64);
    for i in 0..pred.dims().len() {
        let (p, t) = (pred.is_set(i), truth.is_set(i));
        a += u64::from(p);
        b += u64::from(t);
        both += u64::from(p && t);
    }
    if a + b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (a + b) as f64)
}

pub fn dice_score(
    item_id: impl Into<ItemId>,
    pred: &SegmentationMask,
    truth: &SegmentationMask,
) -> Result<DiceScore> {
    Ok(DiceScore {
        item_id: item_id.into(),
        value: dice(pred, truth)?,
    })
}

/// One learning-curve point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub annotated_count: usize,
    pub fraction_of_pool: f64,
    pub mean_dice: f64,
    pub median_dice: f64,
    pub std_dice: f64,
}

pub fn summarize(
    dices: &[DiceScore],
    iteration: usize,
    annotated_count: usize,
    pool_total: usize,
) -> Result<CurvePoint> {
    if dices.is_empty() {
        return Err(Error::invalid("cannot summarize an empty list of Dice scores"));
    }
    if pool_total == 0 || annotated_count == 0 || annotated_count > pool_total {
        return Err(Error::invalid(format!(
            "annotated count {annotated_count} must lie in 1..={pool_total}"
        )));
    }
    let values: Vec<f64> = dices.iter().map(|d| d.value).collect();
    Ok(CurvePoint {
        iteration,
        annotated_count,
        fraction_of_pool: annotated_count as f64 / pool_total as f64,
        mean_dice: mean(&values),
        median_dice: median(&values),
        std_dice: population_std(&values),
    })
}

/// One JSON object per line.
pub fn curve_to_jsonl(points: &[CurvePoint]) -> String {
    let mut out = String::new();
    for p in points {
        out.push_str(&serde_json::to_string(p).expect("curve point serializes"));
        out.push('\n');
    }
    out
}

pub fn curve_to_csv(points: &[CurvePoint]) -> Result<String> {
    let header = [
        "iteration",
        "annotated_count",
        "fraction",
        "mean_dice",
        "median_dice",
        "std_dice",
    ];
    let rows = points.iter().map(|p| {
        vec![
            p.iteration.to_string(),
            p.annotated_count.to_string(),
            fmt_real(p.fraction_of_pool),
            fmt_real(p.mean_dice),
            fmt_real(p.median_dice),
            fmt_real(p.std_dice),
        ]
    });
    csv_string(&header, rows)
}
