use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cost::{nearest_center, Objective, WeightedPoint};
use super::solver::{lloyd, seed_centers, weiszfeld_refine};
use crate::error::{Error, Result};
use crate::hash::mix_seed;

/// Coreset size `ceil(C_g k d ln(2/delta) / eps^2)`, capped at `n` and at least 1.
pub fn coreset_size_g(eps: f64, n: usize, k: usize, d: usize, delta: f64, size_constant: f64) -> usize {
    let raw = (size_constant * (k * d) as f64 * (2.0 / delta).ln() / (eps * eps)).ceil();
    let g = if raw >= n as f64 { n } else { raw as usize };
    g.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoresetParams {
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub size_constant: f64,
    pub objective: Objective,
    pub seed: u64,
}

/// Weighted summary of one stream block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCoreset {
    pub points: Vec<WeightedPoint>,
    pub block_index: u32,
    pub block_size: usize,
    pub precision: f64,
    pub failure_budget: f64,
}

impl BlockCoreset {
    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }
}

/// Refinement passes applied to the seeding before sensitivities are read off.
const BICRITERIA_ROUNDS: usize = 10;

fn merge_duplicates(points: &[Vec<f64>]) -> Vec<WeightedPoint> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out: Vec<WeightedPoint> = Vec::new();
    for i in order {
        match out.last_mut() {
            Some(last) if last.coords == points[i] => last.weight += 1.0,
            _ => out.push(WeightedPoint::unit(points[i].clone())),
        }
    }
    out
}

/// Rescales weights to sum to `total`, pushing the rounding residue onto the heaviest point.
fn normalize_weights(points: &mut [WeightedPoint], total: f64) {
    let sum: f64 = points.iter().map(|p| p.weight).sum();
    let factor = total / sum;
    for p in points.iter_mut() {
        p.weight *= factor;
    }
    let sum: f64 = points.iter().map(|p| p.weight).sum();
    if let Some(heaviest) = points.iter_mut().max_by(|a, b| a.weight.total_cmp(&b.weight)) {
        heaviest.weight += total - sum;
    }
}

/// Sensitivity-sampling coreset of `points`.
///
/// A k-means++ bicriteria solution bounds each point's sensitivity by
/// `cost(x) / cost(P) + 1 / |cluster(x)|`; `g` points are drawn with
/// probability proportional to that bound and weighted by the inverse
/// probability, then rescaled so every sampled cluster carries its exact
/// mass. Exact duplicates are merged first, and when `g` covers every
/// distinct point the (merged) input is returned unchanged.
pub fn build_coreset(points: &[Vec<f64>], params: &CoresetParams) -> Result<BlockCoreset> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Input("coreset of an empty block".into()));
    }
    if !(params.epsilon > 0.0 && params.epsilon <= 0.5) || !(params.delta > 0.0 && params.delta < 1.0) {
        return Err(Error::Config(format!("epsilon {} / delta {} out of range", params.epsilon, params.delta)));
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::Dimension { expected: dim, got: bad.len() });
    }
    let block = |pts: Vec<WeightedPoint>| BlockCoreset {
        points: pts,
        block_index: 0,
        block_size: n,
        precision: params.epsilon,
        failure_budget: params.delta,
    };
    if params.k > n {
        return Ok(block(points.iter().cloned().map(WeightedPoint::unit).collect()));
    }
    let distinct = merge_duplicates(points);
    let g = coreset_size_g(params.epsilon, n, params.k, dim, params.delta, params.size_constant);
    if g >= distinct.len() {
        return Ok(block(distinct));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let seeds = seed_centers(&distinct, params.k, params.objective, &mut rng);
    let centers = match params.objective {
        Objective::Means => lloyd(&distinct, seeds, BICRITERIA_ROUNDS),
        Objective::Median => weiszfeld_refine(&distinct, seeds, BICRITERIA_ROUNDS),
    };
    let mut labels = Vec::with_capacity(distinct.len());
    let mut costs = Vec::with_capacity(distinct.len());
    let mut cluster_mass = vec![0.0; centers.len()];
    for p in &distinct {
        let (j, d2) = nearest_center(&p.coords, &centers);
        labels.push(j);
        costs.push(params.objective.from_sq(d2));
        cluster_mass[j] += p.weight;
    }
    let total_cost: f64 = distinct.iter().zip(&costs).map(|(p, c)| p.weight * c).sum();
    let sensitivity: Vec<f64> = costs
        .iter()
        .zip(&labels)
        .map(|(&c, &j)| {
            let spread = if total_cost > 0.0 { c / total_cost } else { 0.0 };
            spread + 1.0 / cluster_mass[j]
        })
        .collect();
    // Each distinct point stands for `weight` originals sharing its sensitivity.
    let mass: Vec<f64> = distinct.iter().zip(&sensitivity).map(|(p, s)| p.weight * s).collect();
    let total_mass: f64 = mass.iter().sum();
    let sampler = WeightedIndex::new(&mass).map_err(|e| Error::Contract(format!("sampling weights: {e}")))?;
    let mut drawn = vec![0.0; distinct.len()];
    for _ in 0..g {
        let i = sampler.sample(&mut rng);
        drawn[i] += total_mass / (g as f64 * sensitivity[i]);
    }
    // Each bicriteria cluster keeps its exact mass whenever it was sampled.
    let mut sampled_mass = vec![0.0; centers.len()];
    for (&j, &w) in labels.iter().zip(&drawn) {
        sampled_mass[j] += w;
    }
    let mut sample: Vec<WeightedPoint> = distinct
        .into_iter()
        .zip(drawn)
        .zip(&labels)
        .filter(|((_, w), _)| *w > 0.0)
        .map(|((p, w), &j)| WeightedPoint { coords: p.coords, weight: w * cluster_mass[j] / sampled_mass[j] })
        .collect();
    normalize_weights(&mut sample, n as f64);
    Ok(block(sample))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryConfig {
    pub k: usize,
    pub dim: usize,
    pub objective: Objective,
    pub epsilon0: f64,
    pub delta: f64,
    /// `C_g` in the coreset size formula.
    pub size_constant: f64,
    /// `c` in `delta_i = delta / (c i^2)`.
    pub budget_constant: f64,
    pub seed: u64,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        Self {
            k: 3,
            dim: 2,
            objective: Objective::Means,
            epsilon0: 0.5,
            delta: 0.05,
            size_constant: 0.5,
            budget_constant: 2.0,
            seed: 0,
        }
    }
}

impl SummaryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.dim == 0 {
            return Err(Error::Config("k and dimension must be positive".into()));
        }
        if !(self.epsilon0 > 0.0 && self.epsilon0 <= 0.5) {
            return Err(Error::Config(format!("epsilon0 {} outside (0, 1/2]", self.epsilon0)));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::Config(format!("delta {} outside (0, 1/2)", self.delta)));
        }
        if !(self.size_constant > 0.0) || !(self.budget_constant >= 1.0) {
            return Err(Error::Config("constants must be positive".into()));
        }
        Ok(())
    }

    pub fn precision(&self, block: u32) -> f64 {
        self.epsilon0 / f64::from(block.max(1))
    }

    pub fn failure_budget(&self, block: u32) -> f64 {
        let i = f64::from(block.max(1));
        self.delta / (self.budget_constant * i * i)
    }

    /// Coreset size used for block `block` of `2^block` points.
    pub fn block_size_g(&self, block: u32) -> usize {
        coreset_size_g(
            self.precision(block),
            1usize << block,
            self.k,
            self.dim,
            self.failure_budget(block),
            self.size_constant,
        )
    }

    /// Size ceiling for the whole summary after `n` points: `log2 n` times a
    /// coreset at precision `1 / log2 n` and budget `delta_{log2 n}`.
    pub fn summary_size_limit(&self, n: u64) -> usize {
        if n <= 1 {
            return n as usize;
        }
        let levels = n.ilog2().max(1);
        let g = coreset_size_g(
            1.0 / f64::from(levels),
            n as usize,
            self.k,
            self.dim,
            self.failure_budget(levels),
            self.size_constant,
        );
        g * levels as usize
    }
}

/// Union of per-block coresets over a point stream.
#[derive(Debug, Clone)]
pub struct CoresetSummary {
    config: SummaryConfig,
    blocks: Vec<BlockCoreset>,
    buffer: Vec<Vec<f64>>,
    points_total: u64,
}

impl CoresetSummary {
    pub fn new(config: SummaryConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, blocks: Vec::new(), buffer: Vec::with_capacity(1), points_total: 0 })
    }

    pub fn config(&self) -> &SummaryConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[BlockCoreset] {
        &self.blocks
    }

    pub fn buffer(&self) -> &[Vec<f64>] {
        &self.buffer
    }

    pub fn points_total(&self) -> u64 {
        self.points_total
    }

    fn open_block(&self) -> u32 {
        self.blocks.len() as u32
    }

    /// Buffers a point and seals the open block once it holds `2^i` points.
    pub fn insert(&mut self, point: &[f64]) -> Result<()> {
        if point.len() != self.config.dim {
            return Err(Error::Dimension { expected: self.config.dim, got: point.len() });
        }
        if point.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite coordinate".into()));
        }
        self.buffer.push(point.to_vec());
        self.points_total += 1;
        let i = self.open_block();
        if self.buffer.len() == 1usize << i {
            let params = CoresetParams {
                k: self.config.k,
                epsilon: self.config.precision(i),
                delta: self.config.failure_budget(i),
                size_constant: self.config.size_constant,
                objective: self.config.objective,
                seed: mix_seed(self.config.seed, u64::from(i), 0xC0),
            };
            let mut sealed = build_coreset(&self.buffer, &params)?;
            sealed.block_index = i;
            self.blocks.push(sealed);
            self.buffer = Vec::with_capacity(1usize << (i + 1).min(20));
        }
        Ok(())
    }

    /// All weighted points of the sealed blocks.
    pub fn points(&self) -> Vec<WeightedPoint> {
        self.blocks.iter().flat_map(|b| b.points.iter().cloned()).collect()
    }

    pub fn summary_len(&self) -> usize {
        self.blocks.iter().map(|b| b.points.len()).sum()
    }

    pub fn sealed_points(&self) -> u64 {
        self.blocks.iter().map(|b| b.block_size as u64).sum()
    }

    /// Words held: summary coordinates and weights plus the open buffer.
    pub fn memory_words(&self) -> u64 {
        let d = self.config.dim as u64;
        self.summary_len() as u64 * (d + 1) + self.buffer.len() as u64 * d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::cost::clustering_cost;

    fn params(k: usize, epsilon: f64, size_constant: f64) -> CoresetParams {
        CoresetParams { k, epsilon, delta: 0.05, size_constant, objective: Objective::Means, seed: 1 }
    }

    #[test]
    fn size_formula() {
        assert!(coreset_size_g(0.5, 1, 1, 1, 0.4, 1e-9) >= 1);
        assert_eq!(coreset_size_g(0.01, 500, 3, 2, 0.05, 1.0), 500);
        // 40 * 3 * 2 * ln(40) / 0.04 = 22133.27
        assert_eq!(coreset_size_g(0.2, 1 << 20, 3, 2, 0.05, 40.0), 22134);
        assert_eq!(coreset_size_g(0.2, 1000, 3, 2, 0.05, 40.0), 1000);
    }

    #[test]
    fn repeated_point_collapses() {
        let pts = vec![vec![1.5, -2.0]; 100];
        let cs = build_coreset(&pts, &params(1, 0.2, 0.25)).unwrap();
        assert_eq!(cs.points.len(), 1);
        assert_eq!(cs.points[0].weight, 100.0);
        let wp: Vec<WeightedPoint> = pts.iter().cloned().map(WeightedPoint::unit).collect();
        for c in [vec![0.0, 0.0], vec![7.0, 3.0]] {
            let full = clustering_cost(&wp, std::slice::from_ref(&c), Objective::Means).unwrap();
            let core = clustering_cost(&cs.points, &[c], Objective::Means).unwrap();
            assert_eq!(full, core);
        }
    }

    #[test]
    fn identity_when_budget_covers_input() {
        let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let cs = build_coreset(&pts, &params(2, 0.2, 10.0)).unwrap();
        assert_eq!(cs.points.len(), 30);
        assert!(cs.points.iter().all(|p| p.weight == 1.0));
    }

    #[test]
    fn more_centers_than_points() {
        let pts = vec![vec![1.0], vec![1.0]];
        let cs = build_coreset(&pts, &params(3, 0.2, 1.0)).unwrap();
        assert_eq!(cs.points.len(), 2);
    }

    #[test]
    fn sampled_weights_sum_to_block_size() {
        let pts: Vec<Vec<f64>> = (0..1000).map(|i| vec![(i % 37) as f64 * 0.37, (i % 11) as f64 + (i as f64) * 1e-3]).collect();
        let cs = build_coreset(&pts, &params(3, 0.5, 0.05)).unwrap();
        assert!(cs.points.len() < 1000);
        assert!((cs.total_weight() - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn stream_blocks_seal_on_powers_of_two() {
        let mut s = CoresetSummary::new(SummaryConfig { dim: 1, k: 1, ..SummaryConfig::default() }).unwrap();
        s.insert(&[0.0]).unwrap();
        assert_eq!(s.blocks().len(), 1);
        assert_eq!(s.blocks()[0].block_size, 1);
        for i in 1..(1 << 6) - 1 {
            s.insert(&[i as f64]).unwrap();
        }
        assert_eq!(s.blocks().len(), 6);
        assert!(s.buffer().is_empty());
        assert_eq!(s.sealed_points() + s.buffer().len() as u64, s.points_total());
        assert!(matches!(s.insert(&[1.0, 2.0]), Err(Error::Dimension { .. })));
    }
}
