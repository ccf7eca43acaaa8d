//! Independent reference implementations used by the integration tests.
//!
//! Everything here works on plain `(String, Vec<f64>)` rows and recomputes
//! from scratch at every step (no caches, no incremental sums), so agreement
//! with the engine is evidence rather than tautology. Only the seeded start
//! index is shared, since it is part of the selection contract.

#![allow(dead_code)]

use alcore::seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Row = (String, Vec<f64>);

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn by_id(rows: &[Row]) -> Vec<Row> {
    let mut v = rows.to_vec();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v
}

pub fn norm(a: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in a {
        s += x * x;
    }
    s.sqrt()
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let mut d = 0.0;
    for i in 0..a.len() {
        d += a[i] * b[i];
    }
    (d / (norm(a) * norm(b))).clamp(-1.0, 1.0)
}

/// `Σ_{y ∈ universe} max_{s ∈ cover} cos(s, y)`, summed in the given order.
pub fn coverage(cover: &[&[f64]], universe: &[&[f64]]) -> f64 {
    let mut total = 0.0;
    for y in universe {
        let mut best = f64::NEG_INFINITY;
        for s in cover {
            best = best.max(cos(s, y));
        }
        total += best;
    }
    total
}

/// Greedy representative subset with the universe shrinking to the items
/// not yet chosen and not under evaluation.
pub fn naive_representative(rows: &[Row], m: usize, seed: u64) -> (Vec<String>, Vec<f64>) {
    let rows = by_id(rows);
    let n = rows.len();
    let start = seed::start_index(seed, n);
    let mut chosen = vec![start];
    let objective = |chosen: &[usize], x: usize| {
        let mut cover: Vec<&[f64]> = chosen.iter().map(|&c| rows[c].1.as_slice()).collect();
        cover.push(&rows[x].1);
        let universe: Vec<&[f64]> = (0..n)
            .filter(|y| !chosen.contains(y) && *y != x)
            .map(|y| rows[y].1.as_slice())
            .collect();
        coverage(&cover, &universe)
    };
    let mut scores = vec![objective(&[], start)];
    while chosen.len() < m {
        let mut best: Option<(usize, f64)> = None;
        for x in 0..n {
            if chosen.contains(&x) {
                continue;
            }
            let f = objective(&chosen, x);
            if best.is_none_or(|(_, b)| f > b) {
                best = Some((x, f));
            }
        }
        let (x, f) = best.unwrap();
        chosen.push(x);
        scores.push(f);
    }
    (chosen.into_iter().map(|i| rows[i].0.clone()).collect(), scores)
}

/// Greedy least-similar subset against `annotated ∪ chosen`.
pub fn naive_nonsimilar(shortlist: &[Row], annotated: &[Row], m: usize, seed: u64) -> (Vec<String>, Vec<f64>) {
    let rows = by_id(shortlist);
    let known = by_id(annotated);
    let n = rows.len();
    let start = seed::start_index(seed, n);
    let sum = |chosen: &[usize], x: usize| {
        let mut s = 0.0;
        for k in &known {
            s += cos(&rows[x].1, &k.1);
        }
        for &c in chosen {
            s += cos(&rows[x].1, &rows[c].1);
        }
        s
    };
    let mut chosen = vec![start];
    let mut scores = vec![sum(&[], start)];
    while chosen.len() < m {
        let mut best: Option<(usize, f64)> = None;
        for x in 0..n {
            if chosen.contains(&x) {
                continue;
            }
            let s = sum(&chosen, x);
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((x, s));
            }
        }
        let (x, s) = best.unwrap();
        chosen.push(x);
        scores.push(s);
    }
    (chosen.into_iter().map(|i| rows[i].0.clone()).collect(), scores)
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s.sqrt()
}

/// Max-min farthest-point selection over already normalized rows.
pub fn naive_farthest(rows: &[Row], n: usize, seed: u64) -> Vec<String> {
    let rows = by_id(rows);
    let start = seed::start_index(seed, rows.len());
    let mut chosen = vec![start];
    while chosen.len() < n {
        let mut best: Option<(usize, f64)> = None;
        for x in 0..rows.len() {
            if chosen.contains(&x) {
                continue;
            }
            let mut d = f64::INFINITY;
            for &c in &chosen {
                d = d.min(euclid(&rows[x].1, &rows[c].1));
            }
            if best.is_none_or(|(_, b)| d > b) {
                best = Some((x, d));
            }
        }
        chosen.push(best.unwrap().0);
    }
    chosen.into_iter().map(|i| rows[i].0.clone()).collect()
}

pub fn min_pairwise(points: &[&[f64]]) -> f64 {
    let mut d = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d = d.min(euclid(points[i], points[j]));
        }
    }
    d
}

/// Two-pass population variance.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mut mean = 0.0;
    for v in values {
        mean += v;
    }
    mean /= n;
    let mut ss = 0.0;
    for v in values {
        ss += (v - mean) * (v - mean);
    }
    ss / n
}

/// Per-voxel variance of equally long maps.
pub fn variance_map(maps: &[Vec<f64>]) -> Vec<f64> {
    (0..maps[0].len())
        .map(|i| variance(&maps.iter().map(|m| m[i]).collect::<Vec<_>>()))
        .collect()
}

/// Mean of the `k` largest values, by full descending sort.
pub fn top_mean(values: &[f64], k: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut s = 0.0;
    for x in &v[..k] {
        s += x;
    }
    s / k as f64
}

/// Histogram entropy in bits over `bins` equal-width bins on `[min, max]`.
pub fn entropy(values: &[f64], bins: usize) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return 0.0;
    }
    let mut counts = vec![0usize; bins];
    for &v in values {
        let mut b = ((v - lo) / (hi - lo) * bins as f64).floor() as usize;
        if b >= bins {
            b = bins - 1;
        }
        counts[b] += 1;
    }
    let n = values.len() as f64;
    let mut h = 0.0;
    for c in counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    h
}

pub fn dice(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for i in 0..a.len() {
        na += a[i] as usize;
        nb += b[i] as usize;
        inter += (a[i] && b[i]) as usize;
    }
    if na + nb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (na + nb) as f64
    }
}

/// Rows of `len` uniform values in `[0, 1)`: nonnegative, like rectified
/// encoder activations.
pub fn nonneg_rows(r: &mut impl Rng, count: usize, len: usize, prefix: &str) -> Vec<Row> {
    (0..count)
        .map(|i| {
            let mut v: Vec<f64> = (0..len).map(|_| r.random::<f64>()).collect();
            if v.iter().all(|&x| x == 0.0) {
                v[0] = 1.0;
            }
            (format!("{prefix}{i:02}"), v)
        })
        .collect()
}

pub fn gaussian_rows(r: &mut impl Rng, count: usize, len: usize, prefix: &str) -> Vec<Row> {
    (0..count)
        .map(|i| {
            (
                format!("{prefix}{i:02}"),
                (0..len).map(|_| r.sample::<f64, _>(rand_distr::StandardNormal)).collect(),
            )
        })
        .collect()
}

pub fn to_vectors(rows: &[Row]) -> Vec<alcore::similarity::FeatureVector> {
    rows.iter()
        .map(|(id, v)| alcore::similarity::FeatureVector::new(id.as_str(), v.clone()).unwrap())
        .collect()
}

/// Seed whose start index over `n` sorted items equals `want`.
pub fn seed_starting_at(want: usize, n: usize) -> u64 {
    (0..).find(|&s| seed::start_index(s, n) == want).unwrap()
}
