//! Feature flattening and cosine-similarity set functions.
//!
//! `represented_by(x, S)` is the best similarity between `x` and any member of
//! `S`; `set_representativeness(S, U)` sums that over a universe `U`. Both are
//! monotone in `S`, which is what makes greedy max-cover selection well posed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::par;
use crate::tabular::{csv_string, fmt_real, NumericTable};
use crate::ItemId;

/// Channel count of the encoder output the selectors were designed around.
pub const DEFAULT_CHANNELS: usize = 512;

/// Dense `(x, y, z, c)` array, channel fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    dims: [usize; 4],
    values: Vec<f64>,
}

impl FeatureBlock {
    pub fn new(dims: [usize; 4], values: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::invalid(format!("feature block dims must be positive: {dims:?}")));
        }
        let len = dims.iter().product::<usize>();
        if values.len() != len {
            return Err(Error::DimMismatch(format!(
                "feature block {dims:?} needs {len} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature block has non-finite values"));
        }
        Ok(FeatureBlock { dims, values })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.dims[3]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A finite, non-zero feature vector attached to a pool item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVector", into = "RawVector")]
pub struct FeatureVector {
    item_id: ItemId,
    values: Vec<f64>,
    norm: f64,
}

#[derive(Serialize, Deserialize)]
struct RawVector {
    item_id: ItemId,
    values: Vec<f64>,
}

impl TryFrom<RawVector> for FeatureVector {
    type Error = Error;
    fn try_from(r: RawVector) -> Result<Self> {
        FeatureVector::new(r.item_id, r.values)
    }
}

impl From<FeatureVector> for RawVector {
    fn from(v: FeatureVector) -> Self {
        RawVector {
            item_id: v.item_id,
            values: v.values,
        }
    }
}

impl FeatureVector {
    pub fn new(item_id: impl Into<ItemId>, values: Vec<f64>) -> Result<Self> {
        let item_id = item_id.into();
        if values.is_empty() {
            return Err(Error::invalid(format!("feature vector {item_id} is empty")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("feature vector {item_id} has non-finite values")));
        }
        let norm = dot(&values, &values).sqrt();
        if norm == 0.0 {
            return Err(Error::invalid(format!(
                "feature vector {item_id} is all zero; cosine similarity is undefined"
            )));
        }
        Ok(FeatureVector {
            item_id,
            values,
            norm,
        })
    }

    pub fn item_id(&self) -> &ItemId {
        &self.item_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Same values under another identifier.
    pub fn relabel(&self, item_id: impl Into<ItemId>) -> Self {
        FeatureVector {
            item_id: item_id.into(),
            ..self.clone()
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Average a feature block over its spatial axes, one value per channel.
pub fn flatten_features(item_id: impl Into<ItemId>, block: &FeatureBlock) -> Result<FeatureVector> {
    let c = block.channels();
    let cells = block.values.len() / c;
    let out = (0..c)
        .map(|k| compensated_sum((0..cells).map(|s| block.values[s * c + k])) / cells as f64)
        .collect();
    FeatureVector::new(item_id, out)
}

pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch(format!(
            "feature lengths differ: {} has {}, {} has {}",
            a.item_id,
            a.len(),
            b.item_id,
            b.len()
        )));
    }
    Ok(cosine_unchecked(a, b))
}

#[inline]
fn cosine_unchecked(a: &FeatureVector, b: &FeatureVector) -> f64 {
    (dot(&a.values, &b.values) / (a.norm * b.norm)).clamp(-1.0, 1.0)
}

/// Best similarity between `candidate` and any member of `set`.
pub fn represented_by(candidate: &FeatureVector, set: &[FeatureVector]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::invalid("represented_by needs a non-empty set"));
    }
    let mut best = f64::NEG_INFINITY;
    for member in set {
        best = best.max(cosine_similarity(member, candidate)?);
    }
    Ok(best)
}

/// Sum over `universe` of each element's best similarity to `cover`.
pub fn set_representativeness(cover: &[FeatureVector], universe: &[FeatureVector]) -> Result<f64> {
    if cover.is_empty() {
        return Err(Error::invalid("set_representativeness needs a non-empty cover"));
    }
    let mut total = 0.0;
    for x in universe {
        total += represented_by(x, cover)?;
    }
    Ok(total)
}

/// Dense matrix of pairwise cosine similarities, `rows x cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn between(rows: &[&FeatureVector], cols: &[&FeatureVector]) -> Result<Self> {
        let width = rows.first().or(cols.first()).map(|v| v.len());
        if let Some(w) = width {
            if let Some(bad) = rows.iter().chain(cols).find(|v| v.len() != w) {
                return Err(Error::DimMismatch(format!(
                    "feature {} has length {}, expected {w}",
                    bad.item_id,
                    bad.len()
                )));
            }
        }
        let per_row = par::map(rows, |r| {
            cols.iter().map(|c| cosine_unchecked(r, c)).collect::<Vec<_>>()
        });
        Ok(SimilarityMatrix {
            rows: rows.len(),
            cols: cols.len(),
            values: per_row.into_iter().flatten().collect(),
        })
    }

    pub fn square(items: &[&FeatureVector]) -> Result<Self> {
        Self::between(items, items)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// Feature CSV with header `item_id,f0,...,f{c-1}`.
pub fn features_to_csv(vectors: &[FeatureVector]) -> Result<String> {
    let c = vectors.first().map_or(0, |v| v.len());
    if vectors.iter().any(|v| v.len() != c) {
        return Err(Error::DimMismatch("feature vectors have different lengths".into()));
    }
    let mut header = vec!["item_id".to_owned()];
    header.extend((0..c).map(|k| format!("f{k}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = vectors.iter().map(|v| {
        std::iter::once(v.item_id.to_string())
            .chain(v.values.iter().map(|&x| fmt_real(x)))
            .collect::<Vec<_>>()
    });
    csv_string(&header_refs, rows)
}

pub fn features_from_table(table: &NumericTable) -> Result<Vec<FeatureVector>> {
    table
        .ids
        .iter()
        .zip(&table.rows)
        .map(|(id, row)| FeatureVector::new(id.clone(), row.clone()))
        .collect()
}

pub fn features_from_csv(text: &str, origin: &str) -> Result<Vec<FeatureVector>> {
    features_from_table(&NumericTable::parse(text, origin)?)
}
