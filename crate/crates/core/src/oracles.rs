//! Exact reference computations: frequency moments, least squares, matrix
//! products and optimal clusterings of tiny instances. These hold the full
//! input in memory and share no code path with the streaming estimators.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::clustering::{ClusteringResult, Objective, WeightedPoint};
use crate::error::{Error, Result};

/// Largest stream length for which the harness computes oracle columns.
pub const ORACLE_CAP: u64 = 1 << 17;

pub const TINY_MAX_POINTS: usize = 14;
pub const TINY_MAX_K: usize = 3;

/// Exact item multiplicities.
#[derive(Debug, Clone, Default)]
pub struct ExactCounter {
    counts: BTreeMap<u64, u64>,
    total: u64,
}

impl ExactCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, item: u64) {
        *self.counts.entry(item).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &BTreeMap<u64, u64> {
        &self.counts
    }

    pub fn f2(&self) -> u128 {
        self.counts.values().map(|&c| u128::from(c) * u128::from(c)).sum()
    }
}

pub fn exact_f2(stream: &[u64]) -> u128 {
    let mut c = ExactCounter::new();
    for &x in stream {
        c.insert(x);
    }
    c.f2()
}

/// Minimum-norm least squares through the SVD, with its residual `||A x - b||`.
pub fn exact_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    if a.nrows() == 0 {
        return Err(Error::Input("least squares on zero rows".into()));
    }
    if b.len() != a.nrows() {
        return Err(Error::Dimension { expected: a.nrows(), got: b.len() });
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = smax * a.nrows().max(a.ncols()) as f64 * f64::EPSILON;
    let x = svd.solve(b, tol).map_err(|e| Error::Contract(e.to_string()))?;
    let residual = (a * &x - b).norm();
    Ok((x, residual))
}

/// `A^T B` by explicit summation over rows.
pub fn exact_matmul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension { expected: a.nrows(), got: b.nrows() });
    }
    let mut out = DMatrix::zeros(a.ncols(), b.ncols());
    for i in 0..a.ncols() {
        for j in 0..b.ncols() {
            let mut acc = 0.0;
            for r in 0..a.nrows() {
                acc += a[(r, i)] * b[(r, j)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

fn part_cost(points: &[WeightedPoint], mask: u32, objective: Objective) -> (f64, Vec<f64>) {
    let members: Vec<&WeightedPoint> = points.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, p)| p).collect();
    let center = match objective {
        Objective::Means => centroid(&members),
        Objective::Median if members[0].coords.len() == 1 => weighted_median_1d(&members),
        Objective::Median => grid_median(&members),
    };
    (cost_to(&members, &center, objective), center)
}

fn cost_to(members: &[&WeightedPoint], center: &[f64], objective: Objective) -> f64 {
    members
        .iter()
        .map(|p| {
            let d2: f64 = p.coords.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            p.weight * objective.from_sq(d2)
        })
        .sum()
}

fn centroid(members: &[&WeightedPoint]) -> Vec<f64> {
    let dim = members[0].coords.len();
    let mass: f64 = members.iter().map(|p| p.weight).sum();
    (0..dim).map(|j| members.iter().map(|p| p.weight * p.coords[j]).sum::<f64>() / mass).collect()
}

fn weighted_median_1d(members: &[&WeightedPoint]) -> Vec<f64> {
    let mut sorted: Vec<(f64, f64)> = members.iter().map(|p| (p.coords[0], p.weight)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let half = sorted.iter().map(|s| s.1).sum::<f64>() / 2.0;
    let mut acc = 0.0;
    for (x, w) in &sorted {
        acc += w;
        if acc >= half {
            return vec![*x];
        }
    }
    vec![sorted.last().expect("nonempty").0]
}

/// Coarse-to-fine grid search for the geometric median, refined until the
/// grid pitch is 1e-3 of the bounding box; data points are candidates too.
fn grid_median(members: &[&WeightedPoint]) -> Vec<f64> {
    const STEPS: usize = 20;
    let dim = members[0].coords.len();
    let lo: Vec<f64> = (0..dim).map(|j| members.iter().map(|p| p.coords[j]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..dim).map(|j| members.iter().map(|p| p.coords[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let extent = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let mut best = members[0].coords.clone();
    let mut best_cost = cost_to(members, &best, Objective::Median);
    for p in members {
        let c = cost_to(members, &p.coords, Objective::Median);
        if c < best_cost {
            best_cost = c;
            best = p.coords.clone();
        }
    }
    if extent == 0.0 {
        return best;
    }
    let target = 1e-3 * extent;
    let mut lo = lo;
    let mut hi = hi;
    loop {
        let pitch: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| (b - a) / STEPS as f64).collect();
        let cells = (STEPS + 1).pow(dim as u32);
        let mut probe = vec![0.0; dim];
        for cell in 0..cells {
            let mut rest = cell;
            for j in 0..dim {
                probe[j] = lo[j] + (rest % (STEPS + 1)) as f64 * pitch[j];
                rest /= STEPS + 1;
            }
            let c = cost_to(members, &probe, Objective::Median);
            if c < best_cost {
                best_cost = c;
                best.copy_from_slice(&probe);
            }
        }
        if pitch.iter().all(|&p| p <= target) {
            break;
        }
        for j in 0..dim {
            lo[j] = best[j] - 2.0 * pitch[j];
            hi[j] = best[j] + 2.0 * pitch[j];
        }
    }
    best
}

/// Optimal k-clustering of at most 14 points by enumerating every partition.
pub fn optimal_clustering_tiny(points: &[WeightedPoint], k: usize, objective: Objective) -> Result<ClusteringResult> {
    let n = points.len();
    if n == 0 || n > TINY_MAX_POINTS || k == 0 || k > TINY_MAX_K {
        return Err(Error::Contract(format!("tiny oracle needs 1..={TINY_MAX_POINTS} points and k in 1..={TINY_MAX_K}")));
    }
    if n <= k {
        let mut centers: Vec<Vec<f64>> = points.iter().map(|p| p.coords.clone()).collect();
        while centers.len() < k {
            centers.push(points[0].coords.clone());
        }
        return Ok(ClusteringResult { centers, cost: 0.0, min_cluster_size: 0 });
    }
    let full = (1u32 << n) - 1;
    let mut cost = vec![0.0; full as usize + 1];
    let mut center = vec![Vec::new(); full as usize + 1];
    for mask in 1..=full {
        let (c, ctr) = part_cost(points, mask, objective);
        cost[mask as usize] = c;
        center[mask as usize] = ctr;
    }
    let (total, parts) = best_partition(full, k, &cost);
    let centers: Vec<Vec<f64>> = parts.iter().map(|&m| center[m as usize].clone()).collect();
    let min_cluster_size = parts
        .iter()
        .map(|&m| points.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).map(|(_, p)| p.weight).sum::<f64>().floor() as u64)
        .min()
        .unwrap_or(0);
    Ok(ClusteringResult { centers, cost: total, min_cluster_size })
}

fn best_partition(mask: u32, k: usize, cost: &[f64]) -> (f64, Vec<u32>) {
    if k == 1 {
        return (cost[mask as usize], vec![mask]);
    }
    let low = mask & mask.wrapping_neg();
    let rest = mask ^ low;
    let mut best = (f64::INFINITY, Vec::new());
    // every part containing the lowest point, leaving at least k - 1 points
    let mut sub = rest;
    loop {
        let part = sub | low;
        let remaining = mask ^ part;
        if remaining.count_ones() as usize >= k - 1 {
            let (c, mut parts) = best_partition(remaining, k - 1, cost);
            let total = cost[part as usize] + c;
            if total < best.0 {
                parts.push(part);
                best = (total, parts);
            }
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & rest;
    }
    best
}
