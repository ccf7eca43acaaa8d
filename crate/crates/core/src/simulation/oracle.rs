use rand::Rng;
use rand_distr::StandardNormal;

use super::config::OracleParams;
use super::phantom::PoolItem;
use crate::error::{Error, Result};
use crate::seed::{self, tag};
use crate::similarity::{cosine_similarity, FeatureVector};
use crate::volume::{Dims, ProbabilityMap, VoxelGrid};

/// Stand-in for a trained segmentation model.
///
/// `predict` must be a pure function of `(item, n, snapshot, seed)`: the
/// snapshot is the training portion of the annotated set, and repeated calls
/// with the same arguments must return identical maps.
pub trait Predictor: Sync {
    fn predict(
        &self,
        item: &PoolItem,
        n: usize,
        snapshot: &[&PoolItem],
        seed: u64,
    ) -> Result<Vec<ProbabilityMap>>;

    /// Flattened high-level features of `item`.
    fn features(&self, item: &PoolItem) -> FeatureVector;
}

/// How the oracle produces `n > 1` predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleKind {
    /// One model, `n` stochastic forward passes.
    Dropout,
    /// `n` models, each fit to a with-replacement resample of the snapshot.
    Bootstrap,
}

/// Reference predictor whose confidence grows with familiarity.
///
/// Familiarity is the best cosine similarity between the item's features and
/// the snapshot's (clamped to `[0, 1]`, 0 for an empty snapshot). Each map is
/// the box-blurred truth plus Gaussian noise of amplitude
/// `sigma_max * (1 - familiarity) + sigma_min`, clamped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    params: OracleParams,
    kind: EnsembleKind,
}

impl OraclePredictor {
    pub fn new(params: OracleParams, kind: EnsembleKind) -> Self {
        OraclePredictor { params, kind }
    }

    pub fn params(&self) -> &OracleParams {
        &self.params
    }

    pub fn noise_amplitude(&self, familiarity: f64) -> f64 {
        self.params.sigma_max * (1.0 - familiarity) + self.params.sigma_min
    }

    /// One noisy map at a given familiarity.
    pub fn sample_map(
        &self,
        item: &PoolItem,
        base: &[f32],
        familiarity: f64,
        stream: u64,
    ) -> Result<ProbabilityMap> {
        let sigma = self.noise_amplitude(familiarity);
        let mut rng = seed::rng(stream);
        let values: Vec<f32> = base
            .iter()
            .map(|&b| {
                let z: f64 = rng.sample(StandardNormal);
                (f64::from(b) + sigma * z).clamp(0.0, 1.0) as f32
            })
            .collect();
        ProbabilityMap::new(VoxelGrid::new(item.truth.dims(), values)?)
    }
}

/// Best clamped cosine similarity between `item` and any snapshot member.
pub fn familiarity<'a>(item: &FeatureVector, snapshot: impl IntoIterator<Item = &'a FeatureVector>) -> f64 {
    snapshot
        .into_iter()
        .map(|s| cosine_similarity(item, s).unwrap_or(0.0))
        .fold(0.0f64, f64::max)
        .clamp(0.0, 1.0)
}

/// Separable box blur of a 0/1 mask, zero-padded at the borders.
pub fn box_blur(dims: Dims, values: &[f32], radius: usize) -> Vec<f32> {
    if radius == 0 {
        return values.to_vec();
    }
    let mut cur: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
    let width = (2 * radius + 1) as f64;
    let extents = [dims.nx, dims.ny, dims.nz];
    let strides = [dims.ny * dims.nz, dims.nz, 1];
    let mut line = Vec::new();
    for axis in 0..3 {
        let (len, stride) = (extents[axis], strides[axis]);
        let mut next = vec![0.0f64; cur.len()];
        // Every line along `axis` starts at an index whose `axis` coordinate is 0.
        for startpoint in (0..cur.len()).filter(|&i| (i / stride) % len == 0) {
            line.clear();
            line.extend((0..len).map(|q| cur[startpoint + q * stride]));
            for pos in 0..len {
                let lo = pos.saturating_sub(radius);
                let hi = (pos + radius).min(len - 1);
                let s: f64 = line[lo..=hi].iter().sum();
                next[startpoint + pos * stride] = s / width;
            }
        }
        cur = next;
    }
    cur.into_iter().map(|v| v as f32).collect()
}

impl Predictor for OraclePredictor {
    fn predict(
        &self,
        item: &PoolItem,
        n: usize,
        snapshot: &[&PoolItem],
        seed: u64,
    ) -> Result<Vec<ProbabilityMap>> {
        if n < 1 {
            return Err(Error::invalid("predict needs n >= 1"));
        }
        let base = box_blur(item.truth.dims(), item.truth.grid().values(), self.params.blur_radius);
        let key = seed::hash_str(item.item_id.as_str());
        let stream = |j: usize| seed::derive(seed, &[tag::PREDICT, key, j as u64]);
        let full = || familiarity(&item.features, snapshot.iter().map(|s| &s.features));

        if n == 1 || self.kind == EnsembleKind::Dropout || snapshot.is_empty() {
            let phi = full();
            return (0..n).map(|j| self.sample_map(item, &base, phi, stream(j))).collect();
        }
        (0..n)
            .map(|j| {
                let mut rng = seed::rng(seed::derive(seed, &[tag::BOOTSTRAP, j as u64]));
                let phi = (0..snapshot.len())
                    .map(|_| &snapshot[rng.random_range(0..snapshot.len())].features)
                    .map(|s| cosine_similarity(&item.features, s).unwrap_or(0.0))
                    .fold(0.0f64, f64::max)
                    .clamp(0.0, 1.0);
                self.sample_map(item, &base, phi, stream(j))
            })
            .collect()
    }

    fn features(&self, item: &PoolItem) -> FeatureVector {
        item.features.clone()
    }
}
