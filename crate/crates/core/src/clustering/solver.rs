//! Weighted k-means++ seeding followed by Lloyd (means) or Weiszfeld
//! (median) refinement, best of several restarts.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cost::{clustering_cost, dist_sq, min_cluster_size, nearest_center, Objective, WeightedPoint};
use super::coreset::CoresetSummary;
use crate::error::{Error, Result};
use crate::hash::mix_seed;

/// Added to Weiszfeld denominators so an iterate on a data point stays finite.
const WEISZFELD_SMOOTHING: f64 = 1e-12;
/// Clusters up to this size are polished by trying every member as center.
const POLISH_LIMIT: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub centers: Vec<Vec<f64>>,
    pub cost: f64,
    pub min_cluster_size: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { restarts: 10, max_iter: 300, seed: 0 }
    }
}

/// k-means++ style seeding: the first center is drawn by weight, the rest
/// by weight times distance (median) or squared distance (means).
pub fn seed_centers<R: Rng>(points: &[WeightedPoint], k: usize, objective: Objective, rng: &mut R) -> Vec<Vec<f64>> {
    let weights: Vec<f64> = points.iter().map(|p| p.weight).collect();
    let first = WeightedIndex::new(&weights).expect("positive weights").sample(rng);
    let mut centers = vec![points[first].coords.clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| dist_sq(&p.coords, &centers[0])).collect();
    while centers.len() < k {
        let scores: Vec<f64> = points
            .iter()
            .zip(&nearest)
            .map(|(p, &d2)| p.weight * objective.from_sq(d2))
            .collect();
        let pick = match WeightedIndex::new(&scores) {
            Ok(dist) => dist.sample(rng),
            // every point already sits on a center
            Err(_) => WeightedIndex::new(&weights).expect("positive weights").sample(rng),
        };
        let c = points[pick].coords.clone();
        for (n, p) in nearest.iter_mut().zip(points) {
            *n = n.min(dist_sq(&p.coords, &c));
        }
        centers.push(c);
    }
    centers
}

fn assign(points: &[WeightedPoint], centers: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    points.iter().map(|p| nearest_center(&p.coords, centers)).unzip()
}

/// Moves each empty center onto the point farthest from its own center.
fn repair_empty(points: &[WeightedPoint], centers: &mut [Vec<f64>], labels: &mut [usize], d2: &mut [f64]) -> bool {
    let mut counts = vec![0usize; centers.len()];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    let mut repaired = false;
    for j in 0..centers.len() {
        if counts[j] > 0 {
            continue;
        }
        let far = (0..points.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| d2[a].total_cmp(&d2[b]));
        let Some(i) = far else { continue };
        if d2[i] == 0.0 {
            continue;
        }
        counts[labels[i]] -= 1;
        counts[j] = 1;
        labels[i] = j;
        d2[i] = 0.0;
        centers[j] = points[i].coords.clone();
        repaired = true;
    }
    repaired
}

pub(crate) fn lloyd(points: &[WeightedPoint], mut centers: Vec<Vec<f64>>, max_iter: usize) -> Vec<Vec<f64>> {
    let dim = points[0].coords.len();
    let mut prev: Option<Vec<usize>> = None;
    for _ in 0..max_iter {
        let (mut labels, mut d2) = assign(points, &centers);
        let repaired = repair_empty(points, &mut centers, &mut labels, &mut d2);
        if !repaired && prev.as_ref() == Some(&labels) {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; centers.len()];
        let mut mass = vec![0.0; centers.len()];
        for (p, &l) in points.iter().zip(&labels) {
            mass[l] += p.weight;
            for (s, &x) in sums[l].iter_mut().zip(&p.coords) {
                *s += p.weight * x;
            }
        }
        for ((c, s), &m) in centers.iter_mut().zip(&sums).zip(&mass) {
            if m > 0.0 {
                *c = s.iter().map(|v| v / m).collect();
            }
        }
        prev = Some(labels);
    }
    centers
}

fn median_cost(members: &[&WeightedPoint], y: &[f64]) -> f64 {
    members.iter().map(|p| p.weight * dist_sq(&p.coords, y).sqrt()).sum()
}

/// Weiszfeld iterations with the Vardi-Zhang correction at data points.
fn weiszfeld(members: &[&WeightedPoint], start: &[f64], max_iter: usize) -> Vec<f64> {
    let dim = start.len();
    let mut y = start.to_vec();
    for _ in 0..max_iter {
        let mut num = vec![0.0; dim];
        let mut den = 0.0;
        let mut pull = vec![0.0; dim];
        let mut coincident = 0.0;
        for p in members {
            let d = dist_sq(&p.coords, &y).sqrt();
            if d <= WEISZFELD_SMOOTHING {
                coincident += p.weight;
                continue;
            }
            let w = p.weight / (d + WEISZFELD_SMOOTHING);
            den += w;
            for j in 0..dim {
                num[j] += w * p.coords[j];
                pull[j] += w * (p.coords[j] - y[j]);
            }
        }
        if den == 0.0 {
            break;
        }
        let target: Vec<f64> = num.iter().map(|v| v / den).collect();
        let next = if coincident > 0.0 {
            let r = pull.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r <= coincident {
                break;
            }
            let keep = coincident / r;
            target.iter().zip(&y).map(|(t, yv)| (1.0 - keep) * t + keep * yv).collect()
        } else {
            target
        };
        let step = dist_sq(&next, &y).sqrt();
        let scale = 1.0 + y.iter().map(|v| v * v).sum::<f64>().sqrt();
        y = next;
        if step <= 1e-13 * scale {
            break;
        }
    }
    if members.len() <= POLISH_LIMIT {
        let mut best = median_cost(members, &y);
        for p in members {
            let c = median_cost(members, &p.coords);
            if c < best {
                best = c;
                y = p.coords.clone();
            }
        }
    }
    y
}

pub(crate) fn weiszfeld_refine(points: &[WeightedPoint], mut centers: Vec<Vec<f64>>, max_iter: usize) -> Vec<Vec<f64>> {
    let mut best_cost = f64::INFINITY;
    for _ in 0..max_iter {
        let (mut labels, mut d2) = assign(points, &centers);
        repair_empty(points, &mut centers, &mut labels, &mut d2);
        for (j, center) in centers.iter_mut().enumerate() {
            let members: Vec<&WeightedPoint> = points.iter().zip(&labels).filter(|(_, &l)| l == j).map(|(p, _)| p).collect();
            if !members.is_empty() {
                *center = weiszfeld(&members, center, 200);
            }
        }
        let cost = clustering_cost(points, &centers, Objective::Median).expect("nonempty centers");
        if cost >= best_cost * (1.0 - 1e-12) {
            break;
        }
        best_cost = cost;
    }
    centers
}

/// Best-of-restarts clustering of a weighted point set.
pub fn solve(points: &[WeightedPoint], k: usize, objective: Objective, opts: &SolverOptions) -> Result<ClusteringResult> {
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if points.len() < k {
        return Err(Error::NotReady(format!("{} points for k = {k}", points.len())));
    }
    let restarts = opts.restarts.max(1);
    let mut best: Option<(Vec<Vec<f64>>, f64)> = None;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(opts.seed, r as u64, 0xC1));
        let init = seed_centers(points, k, objective, &mut rng);
        let centers = match objective {
            Objective::Means => lloyd(points, init, opts.max_iter),
            Objective::Median => weiszfeld_refine(points, init, opts.max_iter),
        };
        let cost = clustering_cost(points, &centers, objective)?;
        if best.as_ref().is_none_or(|(_, c)| cost < *c) {
            best = Some((centers, cost));
        }
    }
    let (centers, cost) = best.expect("at least one restart");
    let min_cluster_size = min_cluster_size(points, &centers)?;
    Ok(ClusteringResult { centers, cost, min_cluster_size })
}

/// k-means on the sealed part of a summary; cost is reported on the summary.
pub fn solve_kmeans(summary: &CoresetSummary, k: usize, restarts: usize, seed: u64) -> Result<ClusteringResult> {
    solve(&summary.points(), k, Objective::Means, &SolverOptions { restarts, seed, ..SolverOptions::default() })
}

/// k-median counterpart of [`solve_kmeans`].
pub fn solve_kmedian(summary: &CoresetSummary, k: usize, restarts: usize, seed: u64) -> Result<ClusteringResult> {
    solve(&summary.points(), k, Objective::Median, &SolverOptions { restarts, seed, ..SolverOptions::default() })
}
