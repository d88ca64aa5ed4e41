//! Second frequency moment estimation whose error bound shrinks as the
//! stream grows.
//!
//! Sketches are started on a doubling schedule with ever finer precision.
//! A sketch that started after `s` items ignores that prefix; once
//! `s <= sqrt(n)` its estimate is within `precision + 3 s / sqrt(n)` of the
//! full F2, and the estimator reports whichever live sketch has the smallest
//! such bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::{mix_seed, MERSENNE_31};
use crate::sketch::{MemoryLedger, SignSketch};

/// Distinct items a sketch may hold back before it must apply them.
pub const PENDING_CAPACITY: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// At most two sketches: the reporting one and a finer candidate.
    TwoSketch,
    /// One sketch per schedule step, pruned once dominated.
    Parallel,
}

impl std::str::FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_sketch" | "two-sketch" => Ok(Policy::TwoSketch),
            "parallel" => Ok(Policy::Parallel),
            other => Err(Error::Config(format!("unknown policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct F2Config {
    pub policy: Policy,
    /// Items are drawn from `1..=universe`.
    pub universe: u64,
    pub base_block: u64,
    pub epsilon0: f64,
    pub delta: f64,
    /// Constant in `m = C / eps^2 * ln(2 / delta_i)`.
    pub rows_constant: f64,
    /// Budget split `delta_i = delta / (c i^2)`.
    pub budget_constant: f64,
    pub seed: u64,
}

impl Default for F2Config {
    fn default() -> Self {
        Self {
            policy: Policy::Parallel,
            universe: 1 << 20,
            base_block: 64,
            epsilon0: 0.5,
            delta: 0.1,
            rows_constant: 8.0,
            budget_constant: 2.0,
            seed: 0,
        }
    }
}

impl F2Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon0 > 0.0 && self.epsilon0 <= 0.5) {
            return Err(Error::Config(format!("epsilon0 {} outside (0, 1/2]", self.epsilon0)));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::Config(format!("delta {} outside (0, 1/2)", self.delta)));
        }
        if self.universe == 0 || self.universe >= MERSENNE_31 {
            return Err(Error::Config(format!("universe {} must be in [1, 2^31 - 1)", self.universe)));
        }
        if self.base_block == 0 {
            return Err(Error::Config("base block must be positive".into()));
        }
        if !(self.rows_constant > 0.0) || !(self.budget_constant >= 1.0) {
            return Err(Error::Config("constants must be positive".into()));
        }
        Ok(())
    }

    pub fn precision(&self, step: u32) -> f64 {
        self.epsilon0 / f64::from(step.max(1))
    }

    pub fn failure_budget(&self, step: u32) -> f64 {
        let i = f64::from(step.max(1));
        self.delta / (self.budget_constant * i * i)
    }

    /// `ceil(C / eps_i^2 * ln(2 / delta_i))`.
    pub fn rows(&self, step: u32) -> usize {
        let eps = self.precision(step);
        (self.rows_constant / (eps * eps) * (2.0 / self.failure_budget(step)).ln()).ceil() as usize
    }
}

/// `2^i * n0`, the number of items processed during schedule step `i`.
pub fn spawn_threshold(i: u32, n0: u64) -> Result<u64> {
    1u64.checked_shl(i)
        .filter(|_| i < 64)
        .and_then(|p| p.checked_mul(n0))
        .ok_or_else(|| Error::Range(format!("2^{i} * {n0} overflows")))
}

/// Items consumed before step `i` starts: `n0 (2^i - 1)`.
pub fn step_start(i: u32, n0: u64) -> Result<u64> {
    Ok(spawn_threshold(i, n0)? - n0)
}

/// A sketch together with the stream prefix it skipped.
#[derive(Debug, Clone)]
pub struct ManagedSketch {
    pub sketch: SignSketch,
    pub start_offset: u64,
    pub precision: f64,
    pub spawn_step: u32,
    pending: Vec<(u64, u64)>,
}

impl ManagedSketch {
    pub fn new(sketch: SignSketch, start_offset: u64, precision: f64, spawn_step: u32) -> Self {
        Self { sketch, start_offset, precision, spawn_step, pending: Vec::with_capacity(PENDING_CAPACITY) }
    }

    fn push(&mut self, item: u64) -> Result<()> {
        if let Some(slot) = self.pending.iter_mut().find(|(i, _)| *i == item) {
            slot.1 += 1;
            return Ok(());
        }
        if self.pending.len() == PENDING_CAPACITY {
            self.flush()?;
        }
        self.pending.push((item, 1));
        Ok(())
    }

    /// Applies held-back items to the image.
    pub fn flush(&mut self) -> Result<()> {
        for (item, count) in self.pending.drain(..) {
            self.sketch.update_count(item, count)?;
        }
        Ok(())
    }

    /// Sketched squared norm of everything this sketch has seen.
    pub fn norm_sq(&self) -> Result<f64> {
        let pending: Vec<(u64, f64)> = self.pending.iter().map(|&(i, c)| (i, c as f64)).collect();
        self.sketch.norm_sq_with(&pending)
    }

    pub fn memory_words(&self) -> u64 {
        self.sketch.memory_words() + 2 * PENDING_CAPACITY as u64
    }
}

/// Relative error bound of `ms` after `n` items: `precision + 3 s / sqrt(n)`,
/// or infinity while the skipped prefix `s` exceeds `sqrt(n)`.
pub fn error_bound(ms: &ManagedSketch, n: u64) -> Result<f64> {
    bound_for(ms.precision, ms.start_offset, n)
}

fn bound_for(precision: f64, start_offset: u64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Contract("error bound needs n >= 1".into()));
    }
    let root = (n as f64).sqrt();
    let s = start_offset as f64;
    if s > root {
        return Ok(f64::INFINITY);
    }
    Ok(precision + 3.0 * s / root)
}

/// Answer of [`F2Estimator::estimate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum F2Estimate {
    Ready { value: f64, bound: f64 },
    /// No live sketch has a finite bound yet.
    NotReady { best_bound: f64 },
}

impl F2Estimate {
    pub fn value(&self) -> Option<f64> {
        match *self {
            F2Estimate::Ready { value, .. } => Some(value),
            F2Estimate::NotReady { .. } => None,
        }
    }

    pub fn bound(&self) -> f64 {
        match *self {
            F2Estimate::Ready { bound, .. } => bound,
            F2Estimate::NotReady { best_bound } => best_bound,
        }
    }
}

#[derive(Debug, Clone)]
pub struct F2Estimator {
    config: F2Config,
    active: Vec<ManagedSketch>,
    items_total: u64,
    next_step: u32,
    next_boundary: u64,
    ledger: MemoryLedger,
}

impl F2Estimator {
    pub fn new(config: F2Config) -> Result<Self> {
        config.validate()?;
        let mut est = Self {
            next_boundary: config.base_block,
            config,
            active: Vec::new(),
            items_total: 0,
            next_step: 1,
            ledger: MemoryLedger::new(),
        };
        est.spawn(0)?;
        Ok(est)
    }

    pub fn config(&self) -> &F2Config {
        &self.config
    }

    pub fn active(&self) -> &[ManagedSketch] {
        &self.active
    }

    pub fn items_total(&self) -> u64 {
        self.items_total
    }

    pub fn ledger(&self) -> &MemoryLedger {
        &self.ledger
    }

    fn spawn(&mut self, step: u32) -> Result<()> {
        let precision = self.config.precision(step);
        if self.config.policy == Policy::TwoSketch {
            if self.active.len() >= 2 {
                return Ok(());
            }
            if self.active.iter().any(|ms| ms.precision <= precision) {
                return Ok(());
            }
        }
        let sketch = SignSketch::vector(self.config.rows(step), mix_seed(self.config.seed, u64::from(step), 0xF2))?;
        let ms = ManagedSketch::new(sketch, self.items_total, precision, step);
        self.ledger.allocate(ms.memory_words());
        self.active.push(ms);
        Ok(())
    }

    /// Routes one item to every live sketch and advances the schedule.
    pub fn insert(&mut self, item: u64) -> Result<()> {
        if item == 0 || item > self.config.universe {
            return Err(Error::Range(format!("item {item} outside [1, {}]", self.config.universe)));
        }
        for ms in &mut self.active {
            ms.push(item)?;
        }
        self.items_total += 1;
        while self.items_total == self.next_boundary {
            let step = self.next_step;
            self.spawn(step)?;
            self.next_step += 1;
            self.next_boundary = step_start(self.next_step, self.config.base_block)?;
        }
        self.prune()
    }

    /// Drops every sketch whose bound exceeds that of a younger one.
    pub fn prune(&mut self) -> Result<()> {
        if self.items_total == 0 || self.active.len() < 2 {
            return Ok(());
        }
        let n = self.items_total;
        let bounds = self.active.iter().map(|ms| error_bound(ms, n)).collect::<Result<Vec<_>>>()?;
        let mut keep = vec![true; bounds.len()];
        let mut best_younger = f64::INFINITY;
        for idx in (0..bounds.len()).rev() {
            if bounds[idx] > best_younger {
                keep[idx] = false;
            }
            best_younger = best_younger.min(bounds[idx]);
        }
        if keep.iter().all(|&k| k) {
            return Ok(());
        }
        let mut idx = 0;
        let ledger = &mut self.ledger;
        self.active.retain(|ms| {
            let k = keep[idx];
            idx += 1;
            if !k {
                ledger.release(ms.memory_words());
            }
            k
        });
        Ok(())
    }

    /// Estimate from the live sketch with the smallest bound. Ties go to
    /// the sketch covering more of the stream.
    pub fn estimate(&self) -> Result<F2Estimate> {
        let n = self.items_total;
        if n == 0 {
            return Ok(F2Estimate::NotReady { best_bound: f64::INFINITY });
        }
        let mut best: Option<(usize, f64)> = None;
        for (idx, ms) in self.active.iter().enumerate() {
            let b = error_bound(ms, n)?;
            if best.is_none_or(|(_, cur)| b < cur) {
                best = Some((idx, b));
            }
        }
        match best {
            Some((idx, bound)) if bound.is_finite() => Ok(F2Estimate::Ready { value: self.active[idx].norm_sq()?, bound }),
            Some((_, bound)) => Ok(F2Estimate::NotReady { best_bound: bound }),
            None => Ok(F2Estimate::NotReady { best_bound: f64::INFINITY }),
        }
    }

    /// Total words of live sketch state.
    pub fn memory_words(&self) -> u64 {
        self.ledger.live()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(policy: Policy) -> F2Config {
        F2Config { policy, universe: 1000, base_block: 16, seed: 5, ..F2Config::default() }
    }

    #[test]
    fn thresholds() {
        assert_eq!(spawn_threshold(0, 16).unwrap(), 16);
        assert_eq!(spawn_threshold(10, 16).unwrap(), 16384);
        assert!(matches!(spawn_threshold(63, 4), Err(Error::Range(_))));
        assert!(matches!(spawn_threshold(64, 1), Err(Error::Range(_))));
        for i in 0..20 {
            let cumulative: u64 = (0..i).map(|j| spawn_threshold(j, 16).unwrap()).sum();
            assert_eq!(cumulative, step_start(i, 16).unwrap());
            assert_eq!(cumulative, 16 * ((1 << i) - 1));
        }
    }

    fn managed(start_offset: u64, precision: f64, step: u32) -> ManagedSketch {
        ManagedSketch::new(SignSketch::vector(1, 0).unwrap(), start_offset, precision, step)
    }

    #[test]
    fn bound_formula() {
        assert_eq!(error_bound(&managed(0, 0.25, 1), 77).unwrap(), 0.25);
        let b = error_bound(&managed(10, 0.1, 3), 1_000_000).unwrap();
        assert!((b - 0.13).abs() < 1e-12);
        assert_eq!(error_bound(&managed(200, 0.1, 3), 10_000).unwrap(), f64::INFINITY);
        assert!(matches!(error_bound(&managed(0, 0.1, 0), 0), Err(Error::Contract(_))));
    }

    #[test]
    fn schedule_spawns_at_first_boundary() {
        let mut est = F2Estimator::new(config(Policy::Parallel)).unwrap();
        for _ in 0..15 {
            est.insert(3).unwrap();
        }
        assert_eq!(est.active().len(), 1);
        est.insert(3).unwrap();
        assert_eq!(est.active().len(), 2);
        assert_eq!(est.active()[1].start_offset, 16);
    }

    #[test]
    fn out_of_universe() {
        let mut est = F2Estimator::new(config(Policy::Parallel)).unwrap();
        assert!(matches!(est.insert(1001), Err(Error::Range(_))));
        assert!(matches!(est.insert(0), Err(Error::Range(_))));
    }

    #[test]
    fn counts_items() {
        let mut est = F2Estimator::new(config(Policy::TwoSketch)).unwrap();
        for i in 0..1000 {
            est.insert(1 + i % 7).unwrap();
        }
        assert_eq!(est.items_total(), 1000);
        assert!(est.active().len() <= 2);
    }

    #[test]
    fn empty_stream_not_ready() {
        let est = F2Estimator::new(config(Policy::Parallel)).unwrap();
        assert!(matches!(est.estimate().unwrap(), F2Estimate::NotReady { .. }));
    }

    #[test]
    fn prune_drops_dominated_older_sketch() {
        let mut est = F2Estimator::new(config(Policy::Parallel)).unwrap();
        est.items_total = 100_000_000;
        est.active.clear();
        est.ledger = MemoryLedger::new();
        // bounds 0.5 (older) and 0.2 (younger)
        for ms in [managed(0, 0.5, 0), managed(20, 0.194, 2)] {
            est.ledger.allocate(ms.memory_words());
            est.active.push(ms);
        }
        assert_eq!(error_bound(&est.active[0], est.items_total).unwrap(), 0.5);
        assert!((error_bound(&est.active[1], est.items_total).unwrap() - 0.2).abs() < 1e-12);
        est.prune().unwrap();
        assert_eq!(est.active().len(), 1);
        assert_eq!(est.active()[0].spawn_step, 2);
        assert_eq!(est.ledger().live(), est.active()[0].memory_words());
    }

    #[test]
    fn single_sketch_untouched_by_prune() {
        let mut est = F2Estimator::new(config(Policy::Parallel)).unwrap();
        est.insert(1).unwrap();
        est.prune().unwrap();
        assert_eq!(est.active().len(), 1);
    }

    #[test]
    fn pending_flush_matches_direct_updates() {
        let mut ms = managed(0, 0.5, 0);
        ms.sketch = SignSketch::vector(50, 9).unwrap();
        let mut direct = ms.sketch.clone();
        for i in 0..500u64 {
            let item = 1 + (i * 7919) % 97;
            ms.push(item).unwrap();
            direct.update(item, 1.0).unwrap();
        }
        let virtual_norm = ms.norm_sq().unwrap();
        ms.flush().unwrap();
        let flushed = ms.norm_sq().unwrap();
        let exact = direct.norm_sq().unwrap();
        assert!((virtual_norm - exact).abs() < 1e-9 * exact);
        assert!((flushed - exact).abs() < 1e-9 * exact);
        assert_eq!(ms.sketch.items_seen(), 500);
    }
}
