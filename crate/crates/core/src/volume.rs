//! Dense 3D grids and the VOL1 binary format.
//!
//! Grids hold single-precision values (the on-disk precision) so that a
//! save/load round trip is bit-exact; every reduction accumulates in `f64`.
//! Layout is row-major with `x` slowest and `z` fastest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Grid extent along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::invalid(format!(
                "grid dimensions must be positive, got {nx}x{ny}x{nz}"
            )));
        }
        nx.checked_mul(ny)
            .and_then(|v| v.checked_mul(nz))
            .ok_or_else(|| Error::invalid("grid dimensions overflow"))?;
        Ok(Dims { nx, ny, nz })
    }

    pub fn cube(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.ny + y) * self.nz + z
    }

    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize, usize) {
        let z = i % self.nz;
        let y = (i / self.nz) % self.ny;
        let x = i / (self.nz * self.ny);
        (x, y, z)
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// Dense 3D scalar field; every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: Dims,
    values: Vec<f32>,
}

impl VoxelGrid {
    pub fn new(dims: Dims, values: Vec<f32>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::DimMismatch(format!(
                "grid {dims} needs {} values, got {}",
                dims.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value {} at voxel {i}",
                values[i]
            )));
        }
        Ok(VoxelGrid { dims, values })
    }

    /// Build from double-precision values, rounding each to single precision.
    pub fn from_f64(dims: Dims, values: &[f64]) -> Result<Self> {
        Self::new(dims, values.iter().map(|&v| v as f32).collect())
    }

    pub fn filled(dims: Dims, value: f32) -> Result<Self> {
        Self::new(dims, vec![value; dims.len()])
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        let mut values = Vec::with_capacity(dims.len());
        for x in 0..dims.nx {
            for y in 0..dims.ny {
                for z in 0..dims.nz {
                    values.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, values)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.values[self.dims.index(x, y, z)]
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

/// A grid whose values are all in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap(VoxelGrid);

impl ProbabilityMap {
    pub fn new(grid: VoxelGrid) -> Result<Self> {
        if let Some(i) = grid.values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "probability {} at voxel {i} is outside [0, 1]",
                grid.values[i]
            )));
        }
        Ok(ProbabilityMap(grid))
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.0
    }

    pub fn dims(&self) -> Dims {
        self.0.dims
    }

    pub fn values(&self) -> &[f32] {
        &self.0.values
    }

    pub fn into_grid(self) -> VoxelGrid {
        self.0
    }
}

/// A grid whose values are exactly 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMask(VoxelGrid);

impl SegmentationMask {
    pub fn new(grid: VoxelGrid) -> Result<Self> {
        if let Some(i) = grid.values.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid(format!(
                "mask value {} at voxel {i} is not 0 or 1",
                grid.values[i]
            )));
        }
        Ok(SegmentationMask(grid))
    }

    pub fn from_bools(dims: Dims, bits: &[bool]) -> Result<Self> {
        let values = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Ok(SegmentationMask(VoxelGrid::new(dims, values)?))
    }

    /// Voxels of `map` strictly above `threshold`.
    pub fn threshold(map: &ProbabilityMap, threshold: f32) -> Self {
        let values = map
            .values()
            .iter()
            .map(|&p| if p > threshold { 1.0 } else { 0.0 })
            .collect();
        SegmentationMask(VoxelGrid {
            dims: map.dims(),
            values,
        })
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.0
    }

    pub fn dims(&self) -> Dims {
        self.0.dims
    }

    #[inline]
    pub fn is_set(&self, i: usize) -> bool {
        self.0.values[i] == 1.0
    }

    pub fn count(&self) -> usize {
        self.0.values.iter().filter(|&&v| v == 1.0).count()
    }
}

const MAGIC: &[u8; 4] = b"VOL1";
const HEADER_LEN: usize = 16;

/// Serialize a grid as VOL1 bytes.
pub fn encode_vol1(grid: &VoxelGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * grid.len());
    out.extend_from_slice(MAGIC);
    for d in [grid.dims.nx, grid.dims.ny, grid.dims.nz] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in &grid.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parse VOL1 bytes. Errors carry the byte offset of the first problem.
pub fn decode_vol1(bytes: &[u8]) -> Result<VoxelGrid> {
    let fail = |offset: usize, reason: String| Error::Format {
        offset: offset as u64,
        reason,
    };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(fail(0, "missing VOL1 magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(fail(
            bytes.len(),
            format!("header truncated: {} of {HEADER_LEN} bytes", bytes.len()),
        ));
    }
    let mut dims = [0usize; 3];
    for (axis, d) in dims.iter_mut().enumerate() {
        let at = 4 + 4 * axis;
        let raw = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        if raw == 0 {
            return Err(fail(at, "zero dimension".into()));
        }
        *d = raw as usize;
    }
    let count = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| fail(4, "dimensions overflow".into()))?;
    let expected = count
        .checked_mul(4)
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(|| fail(4, "dimensions overflow".into()))?;
    if bytes.len() < expected {
        let whole = (bytes.len() - HEADER_LEN) / 4;
        return Err(fail(
            bytes.len(),
            format!("payload truncated: {whole} of {count} values present"),
        ));
    }
    if bytes.len() > expected {
        return Err(fail(
            expected,
            format!("{} trailing bytes after payload", bytes.len() - expected),
        ));
    }
    let mut values = Vec::with_capacity(count);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(fail(HEADER_LEN + 4 * i, format!("non-finite value {v}")));
        }
        values.push(v);
    }
    let dims = Dims {
        nx: dims[0],
        ny: dims[1],
        nz: dims[2],
    };
    Ok(VoxelGrid { dims, values })
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<VoxelGrid> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_vol1(&bytes)
}

pub fn save_volume(grid: &VoxelGrid, path: impl AsRef<Path>) -> Result<()> {
    crate::tabular::write_atomic(path.as_ref(), &encode_vol1(grid))
}

fn check_ensemble(maps: &[ProbabilityMap]) -> Result<Dims> {
    if maps.len() < 2 {
        return Err(Error::invalid(format!(
            "variance needs at least 2 maps, got {}",
            maps.len()
        )));
    }
    let dims = maps[0].dims();
    if let Some((j, m)) = maps.iter().enumerate().find(|(_, m)| m.dims() != dims) {
        return Err(Error::DimMismatch(format!(
            "map {j} is {} but map 0 is {dims}",
            m.dims()
        )));
    }
    Ok(dims)
}

/// Per-voxel population variance in double precision.
///
/// Each voxel's values are sorted before summation, which makes the result
/// exactly invariant to the order of `maps`.
pub(crate) fn variance_values(maps: &[ProbabilityMap]) -> Result<Vec<f64>> {
    let dims = check_ensemble(maps)?;
    let n = maps.len();
    let mut out = vec![0.0f64; dims.len()];
    par::fill_chunks(&mut out, 4096, |start, chunk| {
        let mut buf = vec![0.0f64; n];
        for (offset, slot) in chunk.iter_mut().enumerate() {
            let v = start + offset;
            for (b, m) in buf.iter_mut().zip(maps) {
                *b = f64::from(m.values()[v]);
            }
            *slot = population_variance(&mut buf);
        }
    });
    Ok(out)
}

fn population_variance(buf: &mut [f64]) -> f64 {
    buf.sort_unstable_by(f64::total_cmp);
    if buf[0] == buf[buf.len() - 1] {
        return 0.0;
    }
    let n = buf.len() as f64;
    let mean = buf.iter().sum::<f64>() / n;
    let ss: f64 = buf.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / n).min(0.25)
}

/// Per-voxel population variance of an ensemble of probability maps.
pub fn voxelwise_variance(maps: &[ProbabilityMap]) -> Result<VoxelGrid> {
    let dims = check_ensemble(maps)?;
    VoxelGrid::from_f64(dims, &variance_values(maps)?)
}
