use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::SimulationConfig;
use crate::error::{Error, Result};
use crate::initialization::{extract_first_order, zscore_columns};
use crate::par;
use crate::seed::{self, tag};
use crate::similarity::FeatureVector;
use crate::volume::{Dims, SegmentationMask, VoxelGrid};
use crate::ItemId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemState {
    Unannotated,
    Annotated,
    Test,
}

/// One image of the pool with its held-back ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolItem {
    pub item_id: ItemId,
    /// Skull-stripped intensities: zero outside the brain.
    pub volume: VoxelGrid,
    pub truth: SegmentationMask,
    pub features: FeatureVector,
    pub state: ItemState,
}

impl PoolItem {
    /// Brain region, i.e. every voxel with non-zero intensity.
    pub fn brain_mask(&self) -> SegmentationMask {
        let bits: Vec<bool> = self.volume.values().iter().map(|&v| v != 0.0).collect();
        SegmentationMask::from_bools(self.volume.dims(), &bits).expect("dims match")
    }

    /// Move an unannotated item into the annotated set.
    pub fn annotate(&mut self) -> Result<()> {
        match self.state {
            ItemState::Unannotated => {
                self.state = ItemState::Annotated;
                Ok(())
            }
            s => Err(Error::invalid(format!(
                "item {} cannot be annotated from state {s:?}",
                self.item_id
            ))),
        }
    }
}

/// Ellipsoidal lesion parameters, in voxel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lesion {
    pub center: [f64; 3],
    pub radii: [f64; 3],
    pub contrast: f64,
}

fn inside(p: [f64; 3], center: [f64; 3], radii: [f64; 3]) -> bool {
    (0..3)
        .map(|k| ((p[k] - center[k]) / radii[k]).powi(2))
        .sum::<f64>()
        <= 1.0
}

struct Raw {
    volume: VoxelGrid,
    truth: SegmentationMask,
    lesion: Lesion,
}

/// Lesion and intensity parameters on the unit cube: scale, three radii,
/// three center coordinates, contrast.
type Unit = [f64; 8];

/// Unit-cube archetype of every subtype, with its prevalence weight.
fn subtypes(config: &SimulationConfig) -> Vec<(Unit, f64)> {
    let p = &config.phantom;
    (0..p.subtypes)
        .map(|r| {
            let mut rng = seed::rng(seed::derive(config.seed, &[tag::PHANTOM, u64::MAX, r as u64]));
            let at: Unit = std::array::from_fn(|_| rng.random_range(0.0..=1.0));
            (at, ((r + 1) as f64).powf(-p.subtype_skew))
        })
        .collect()
}

fn draw_unit(rng: &mut impl Rng, spread: f64, kinds: &[(Unit, f64)], weights: Option<&WeightedIndex<f64>>) -> Unit {
    match weights {
        None => std::array::from_fn(|_| rng.random_range(0.0..=1.0)),
        Some(w) => {
            let at = kinds[w.sample(rng)].0;
            at.map(|a| (a + spread * rng.random_range(-1.0..=1.0)).clamp(0.0, 1.0))
        }
    }
}

fn lerp(lo: f64, hi: f64, t: f64) -> f64 {
    lo + (hi - lo) * t
}

fn phantom(
    config: &SimulationConfig,
    dims: Dims,
    index: usize,
    kinds: &[(Unit, f64)],
    weights: Option<&WeightedIndex<f64>>,
) -> Result<Raw> {
    let p = &config.phantom;
    let mut rng = seed::rng(seed::derive(config.seed, &[tag::PHANTOM, index as u64]));
    let n = [dims.nx as f64, dims.ny as f64, dims.nz as f64];
    let brain_center = n.map(|v| (v - 1.0) / 2.0);
    let brain_radii = n.map(|v| 0.45 * v);

    let t = draw_unit(&mut rng, p.subtype_spread, kinds, weights);
    let scale = p.brain_intensity * lerp(1.0 - p.intensity_jitter, 1.0 + p.intensity_jitter, t[0]);
    let radii: [f64; 3] = std::array::from_fn(|k| lerp(p.lesion_radius_min, p.lesion_radius_max, t[1 + k]));
    let center: [f64; 3] = std::array::from_fn(|k| {
        let lo = p.lesion_radius_max;
        let hi = (n[k] - 1.0 - p.lesion_radius_max).max(lo);
        lerp(lo, hi, t[4 + k])
    });
    let contrast = lerp(p.contrast_min, p.contrast_max, t[7]);
    let lesion = Lesion { center, radii, contrast };

    let mut values = Vec::with_capacity(dims.len());
    let mut bits = Vec::with_capacity(dims.len());
    for i in 0..dims.len() {
        let (x, y, z) = dims.coords(i);
        let q = [x as f64, y as f64, z as f64];
        let in_lesion = inside(q, center, radii);
        let in_brain = inside(q, brain_center, brain_radii);
        bits.push(in_lesion);
        if in_brain || in_lesion {
            let noise: f64 = rng.sample(StandardNormal);
            let v = scale + p.tissue_noise * noise + if in_lesion { contrast } else { 0.0 };
            values.push(v.max(1.0));
        } else {
            values.push(0.0);
        }
    }
    if !bits.iter().any(|&b| b) {
        return Err(Error::invalid(format!("phantom {index} has an empty lesion")));
    }
    Ok(Raw {
        volume: VoxelGrid::from_f64(dims, &values)?,
        truth: SegmentationMask::from_bools(dims, &bits)?,
        lesion,
    })
}

/// Identifier of the `i`-th phantom.
pub fn phantom_id(i: usize, pool_size: usize) -> ItemId {
    let width = pool_size.saturating_sub(1).max(1).to_string().len().max(4);
    ItemId::new(format!("p{i:0width$}"))
}

/// Seeded pool of phantoms, each holding one ellipsoidal lesion.
///
/// With `subtypes > 0` every item belongs to one of a few lesion subtypes of
/// skewed prevalence and varies around its subtype's archetype, so the pool
/// has dense common regions and sparse rare ones.
///
/// Feature vectors concatenate first-order brain intensity features with the
/// lesion's center, semi-axes and contrast, z-scored per column over the pool.
pub fn generate_phantom_pool(config: &SimulationConfig) -> Result<Vec<PoolItem>> {
    config.validate()?;
    let [nx, ny, nz] = config.grid;
    let dims = Dims::new(nx, ny, nz)?;
    let kinds = subtypes(config);
    let weights = if kinds.is_empty() {
        None
    } else {
        Some(WeightedIndex::new(kinds.iter().map(|k| k.1)).map_err(|e| Error::invalid(format!("subtype weights: {e}")))?)
    };
    let raws: Vec<Raw> = par::map_range(config.pool_size, |i| phantom(config, dims, i, &kinds, weights.as_ref()))
        .into_iter()
        .collect::<Result<_>>()?;

    let ids: Vec<ItemId> = (0..config.pool_size).map(|i| phantom_id(i, config.pool_size)).collect();
    let descriptors: Vec<Vec<f64>> = par::map_range(raws.len(), |i| -> Result<Vec<f64>> {
        let r = &raws[i];
        let bits: Vec<bool> = r.volume.values().iter().map(|&v| v != 0.0).collect();
        let brain = SegmentationMask::from_bools(dims, &bits)?;
        let f = extract_first_order(ids[i].clone(), &r.volume, &brain, config.entropy_bins)?;
        let mut row = Vec::with_capacity(11);
        row.extend(r.lesion.center);
        row.extend(r.lesion.radii);
        row.push(r.lesion.contrast);
        row.extend(f.as_row());
        Ok(row)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let normalized = zscore_columns(&descriptors)?;

    raws.into_iter()
        .zip(normalized)
        .zip(ids)
        .map(|((r, feats), id)| {
            Ok(PoolItem {
                features: FeatureVector::new(id.clone(), feats)?,
                item_id: id,
                volume: r.volume,
                truth: r.truth,
                state: ItemState::Unannotated,
            })
        })
        .collect()
}
