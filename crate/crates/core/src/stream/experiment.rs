use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::generators::{Generator, GeneratorSpec, StreamItem};
use super::input::{parse_input, ItemShape};
use crate::clustering::{solve, CoresetSummary, Objective, SolverOptions, SummaryConfig, WeightedPoint};
use crate::error::{Error, Result};
use crate::f2::{F2Config, F2Estimator, Policy};
use crate::hash::MERSENNE_31;
use crate::linalg::{sketched_matmul, BlockDiagonalSketch, RegressionSketch, ScheduleMode, SketchSchedule};
use crate::oracles::{exact_least_squares, exact_matmul, ExactCounter, ORACLE_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    F2,
    Cluster,
    Regress,
    Matmul,
    /// Exact values only, for the stream shape chosen by `mode`.
    Oracle,
    /// Write a generated stream instead of running an estimator.
    Gen,
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "f2" => Task::F2,
            "cluster" => Task::Cluster,
            "regress" => Task::Regress,
            "matmul" => Task::Matmul,
            "oracle" => Task::Oracle,
            "gen" => Task::Gen,
            other => return Err(Error::Config(format!("unknown task {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointSchedule {
    Pow2,
    Pow8,
}

impl std::str::FromStr for CheckpointSchedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pow2" => Ok(CheckpointSchedule::Pow2),
            "pow8" => Ok(CheckpointSchedule::Pow8),
            other => Err(Error::Config(format!("unknown checkpoint schedule {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    File(PathBuf),
    Generator(GeneratorSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub epsilon0: f64,
    pub delta: f64,
    pub n0: u64,
    pub k: usize,
    pub d: usize,
    pub d_prime: usize,
    pub policy: Policy,
    /// Task-specific variant: clustering objective (`means`, `median`),
    /// regression schedule (`regression`, `subspace`), matmul precision
    /// (`improving`, `fixed`) or the oracle's stream shape
    /// (`f2`, `cluster`, `regress`, `matmul`).
    pub mode: Option<String>,
    pub alpha: f64,
    pub checkpoints: CheckpointSchedule,
    pub source: Source,
    /// Items consumed; a generator source requires it.
    pub n: Option<u64>,
    pub oracle: bool,
    pub timing: bool,
    pub universe: u64,
    pub restarts: usize,
}

impl RunConfig {
    pub fn new(task: Task, source: Source) -> Self {
        Self {
            task,
            seed: 0,
            epsilon0: 0.5,
            delta: 0.1,
            n0: 64,
            k: 3,
            d: 2,
            d_prime: 2,
            policy: Policy::Parallel,
            mode: None,
            alpha: 0.5,
            checkpoints: CheckpointSchedule::Pow2,
            source,
            n: None,
            oracle: true,
            timing: false,
            universe: 1 << 20,
            restarts: 10,
        }
    }

    /// Estimator variant; the oracle task spends `mode` on the stream shape.
    fn mode_or<'a>(&'a self, default: &'a str) -> &'a str {
        match self.task {
            Task::Oracle => default,
            _ => self.mode.as_deref().unwrap_or(default),
        }
    }

    /// Task whose stream shape the run consumes.
    fn shape_task(&self) -> Result<Task> {
        match self.task {
            Task::Oracle => self.mode.as_deref().unwrap_or("f2").parse::<Task>().and_then(|t| match t {
                Task::Oracle | Task::Gen => Err(Error::Config("oracle mode must name an estimator task".into())),
                t => Ok(t),
            }),
            t => Ok(t),
        }
    }

    pub fn shape(&self) -> Result<ItemShape> {
        Ok(match self.shape_task()? {
            Task::F2 => ItemShape::Item,
            Task::Cluster => ItemShape::Point(self.d),
            Task::Regress => ItemShape::Row(self.d),
            Task::Matmul => ItemShape::RowPair(self.d, self.d_prime),
            Task::Oracle | Task::Gen => unreachable!("resolved by shape_task"),
        })
    }

    fn objective(&self) -> Result<Objective> {
        self.mode_or("means").parse()
    }

    fn f2_config(&self) -> F2Config {
        let mut universe = self.universe;
        if let Source::Generator(spec) = &self.source {
            universe = universe.max(match *spec {
                GeneratorSpec::UniformInt { universe } | GeneratorSpec::ZipfInt { universe, .. } => universe,
                GeneratorSpec::ConstantItem { item } => item,
                _ => 0,
            });
        }
        F2Config {
            policy: self.policy,
            universe: universe.min(MERSENNE_31 - 1),
            base_block: self.n0,
            epsilon0: self.epsilon0,
            delta: self.delta,
            seed: self.seed,
            ..F2Config::default()
        }
    }

    fn summary_config(&self) -> Result<SummaryConfig> {
        Ok(SummaryConfig {
            k: self.k,
            dim: self.d,
            objective: self.objective()?,
            epsilon0: self.epsilon0,
            delta: self.delta,
            seed: self.seed,
            ..SummaryConfig::default()
        })
    }

    fn schedule(&self) -> Result<SketchSchedule> {
        let mode = match self.shape_task()? {
            Task::Regress => self.mode_or("regression").parse()?,
            _ => ScheduleMode::Matmul,
        };
        let mut s = SketchSchedule::new(mode, self.d);
        s.epsilon0 = self.epsilon0;
        s.delta = self.delta;
        s.alpha = self.alpha;
        s.d_prime = self.d_prime;
        s.base_block = self.n0;
        if mode == ScheduleMode::Matmul {
            match self.mode_or("improving") {
                "improving" => {}
                "fixed" => s.fixed_precision = Some(self.epsilon0),
                other => return Err(Error::Config(format!("unknown matmul mode {other:?}"))),
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n0 == 0 {
            return Err(Error::Config("n0 must be positive".into()));
        }
        if self.d == 0 || self.d_prime == 0 || self.k == 0 {
            return Err(Error::Config("k, d and d' must be positive".into()));
        }
        if matches!(self.source, Source::Generator(_)) && self.n.is_none() {
            return Err(Error::Config("a generated stream needs a length".into()));
        }
        match self.shape_task()? {
            Task::F2 => self.f2_config().validate(),
            Task::Cluster => self.summary_config()?.validate(),
            _ => self.schedule().map(|_| ()),
        }
    }
}

/// One checkpoint of a run. Unavailable quantities serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub n: u64,
    pub value: Option<f64>,
    pub bound: Option<f64>,
    pub oracle: Option<f64>,
    pub rel_err: Option<f64>,
    pub mem_words: u64,
    pub elapsed_ns: Option<u64>,
}

/// `n0 r^j` for `j = 0, 1, ...` up to `n_max`, with `r` 2 or 8.
pub fn checkpoints(schedule: CheckpointSchedule, n0: u64, n_max: u64) -> Vec<u64> {
    let r = match schedule {
        CheckpointSchedule::Pow2 => 2,
        CheckpointSchedule::Pow8 => 8,
    };
    let mut out = Vec::new();
    let mut c = n0.max(1);
    while c <= n_max {
        out.push(c);
        match c.checked_mul(r) {
            Some(next) => c = next,
            None => break,
        }
    }
    out
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn rel_err(value: Option<f64>, oracle: Option<f64>) -> Option<f64> {
    match (value, oracle) {
        (Some(v), Some(o)) if o != 0.0 => Some((v - o).abs() / o.abs()),
        _ => None,
    }
}

fn rows_matrix(rows: &[Vec<f64>], width: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j])
}

fn not_ready<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::NotReady(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Estimator state plus the exact prefix kept for the oracle column.
enum Runner {
    F2 { est: F2Estimator, exact: Option<ExactCounter> },
    Cluster { summary: CoresetSummary, objective: Objective, prefix: Option<Vec<WeightedPoint>> },
    Regress { sketch: RegressionSketch, prefix: Option<(Vec<Vec<f64>>, Vec<f64>)> },
    Matmul { a: BlockDiagonalSketch, b: BlockDiagonalSketch, prefix: Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)> },
}

fn mismatch(item: &StreamItem) -> Error {
    Error::Input(format!("stream item {item:?} does not fit the task"))
}

impl Runner {
    fn new(cfg: &RunConfig) -> Result<Self> {
        let keep = cfg.oracle;
        Ok(match cfg.shape_task()? {
            Task::F2 => Runner::F2 { est: F2Estimator::new(cfg.f2_config())?, exact: keep.then(ExactCounter::new) },
            Task::Cluster => Runner::Cluster {
                summary: CoresetSummary::new(cfg.summary_config()?)?,
                objective: cfg.objective()?,
                prefix: keep.then(Vec::new),
            },
            Task::Regress => Runner::Regress {
                sketch: RegressionSketch::new(cfg.schedule()?, cfg.seed)?,
                prefix: keep.then(|| (Vec::new(), Vec::new())),
            },
            Task::Matmul => {
                let s = cfg.schedule()?;
                Runner::Matmul {
                    a: BlockDiagonalSketch::new(s, cfg.d, cfg.seed)?,
                    b: BlockDiagonalSketch::new(s, cfg.d_prime, cfg.seed)?,
                    prefix: keep.then(|| (Vec::new(), Vec::new())),
                }
            }
            Task::Oracle | Task::Gen => unreachable!("resolved by shape_task"),
        })
    }

    /// Drops the exact prefix once the stream outgrows the oracle cap.
    fn cap_prefix(&mut self, n: u64) {
        if n <= ORACLE_CAP {
            return;
        }
        match self {
            Runner::F2 { exact, .. } => *exact = None,
            Runner::Cluster { prefix, .. } => *prefix = None,
            Runner::Regress { prefix, .. } => *prefix = None,
            Runner::Matmul { prefix, .. } => *prefix = None,
        }
    }

    fn push(&mut self, item: StreamItem, sketching: bool) -> Result<()> {
        match (self, item) {
            (Runner::F2 { est, exact }, StreamItem::Item(x)) => {
                if sketching {
                    est.insert(x)?;
                }
                if let Some(c) = exact {
                    c.insert(x);
                }
            }
            (Runner::Cluster { summary, prefix, .. }, StreamItem::Point(p)) => {
                if sketching {
                    summary.insert(&p)?;
                } else if p.len() != summary.config().dim {
                    return Err(Error::Dimension { expected: summary.config().dim, got: p.len() });
                }
                if let Some(pre) = prefix {
                    pre.push(WeightedPoint::unit(p));
                }
            }
            (Runner::Regress { sketch, prefix }, StreamItem::Row(a, b)) => {
                if sketching {
                    sketch.ingest_row(&a, b)?;
                } else if a.len() != sketch.dim() {
                    return Err(Error::Dimension { expected: sketch.dim(), got: a.len() });
                }
                if let Some((rows, targets)) = prefix {
                    rows.push(a);
                    targets.push(b);
                }
            }
            (Runner::Matmul { a, b, prefix }, StreamItem::RowPair(ra, rb)) => {
                if sketching {
                    a.push_row(&ra)?;
                    b.push_row(&rb)?;
                } else if ra.len() != a.width() || rb.len() != b.width() {
                    return Err(Error::Dimension { expected: a.width() + b.width(), got: ra.len() + rb.len() });
                }
                if let Some((pa, pb)) = prefix {
                    pa.push(ra);
                    pb.push(rb);
                }
            }
            (_, item) => return Err(mismatch(&item)),
        }
        Ok(())
    }

    fn oracle_value(&self, cfg: &RunConfig) -> Result<Option<f64>> {
        Ok(match self {
            Runner::F2 { exact, .. } => exact.as_ref().map(|c| c.f2() as f64),
            Runner::Cluster { objective, prefix, .. } => match prefix {
                Some(p) => {
                    let opts = SolverOptions { restarts: cfg.restarts, seed: cfg.seed, ..SolverOptions::default() };
                    not_ready(solve(p, cfg.k, *objective, &opts))?.map(|r| r.cost)
                }
                None => None,
            },
            Runner::Regress { prefix, .. } => match prefix {
                Some((rows, targets)) => {
                    let a = rows_matrix(rows, cfg.d);
                    Some(exact_least_squares(&a, &DVector::from_column_slice(targets))?.1)
                }
                None => None,
            },
            Runner::Matmul { prefix, .. } => match prefix {
                Some((pa, pb)) => {
                    let a = rows_matrix(pa, cfg.d);
                    let b = rows_matrix(pb, cfg.d_prime);
                    Some(exact_matmul(&a, &b)?.norm())
                }
                None => None,
            },
        })
    }

    /// `(value, bound, mem_words)` reported by the streaming estimator.
    fn estimate(&self, cfg: &RunConfig) -> Result<(Option<f64>, Option<f64>, u64)> {
        Ok(match self {
            Runner::F2 { est, .. } => {
                let e = est.estimate()?;
                (e.value(), finite(e.bound()), est.memory_words())
            }
            Runner::Cluster { summary, objective, .. } => {
                let mut pts = summary.points();
                pts.extend(summary.buffer().iter().cloned().map(WeightedPoint::unit));
                let opts = SolverOptions { restarts: cfg.restarts, seed: cfg.seed, ..SolverOptions::default() };
                let cost = not_ready(solve(&pts, cfg.k, *objective, &opts))?.map(|r| r.cost);
                (cost, None, summary.memory_words())
            }
            Runner::Regress { sketch, .. } => {
                let sol = not_ready(sketch.solve())?;
                (sol.map(|s| s.sketched_residual), None, sketch.sketch().memory_words())
            }
            Runner::Matmul { a, b, .. } => {
                let prod = sketched_matmul(a, b)?;
                (Some(prod.norm()), None, a.memory_words() + b.memory_words())
            }
        })
    }

    /// Words an exact method would hold for the current prefix.
    fn exact_words(&self, n: u64, cfg: &RunConfig) -> u64 {
        match self {
            Runner::F2 { exact, .. } => exact.as_ref().map_or(n, |c| 2 * c.counts().len() as u64),
            Runner::Cluster { .. } => n * cfg.d as u64,
            Runner::Regress { .. } => n * (cfg.d as u64 + 1),
            Runner::Matmul { .. } => n * (cfg.d + cfg.d_prime) as u64,
        }
    }
}

/// Streams the configured source through the task's estimator and records
/// one trajectory point at every checkpoint.
pub fn run_experiment(cfg: &RunConfig) -> Result<Vec<TrajectoryRecord>> {
    if cfg.task == Task::Gen {
        return Err(Error::Config("the gen task writes a stream, not a trajectory".into()));
    }
    cfg.validate()?;
    let start = Instant::now();
    let items: Box<dyn Iterator<Item = StreamItem>> = match &cfg.source {
        Source::File(path) => Box::new(parse_input(path, cfg.shape()?)?.into_iter()),
        Source::Generator(spec) => Box::new(Generator::new(spec.clone(), cfg.seed)?),
    };
    let limit = cfg.n.unwrap_or(u64::MAX);
    let oracle_only = cfg.task == Task::Oracle;
    let mut runner = Runner::new(&RunConfig { oracle: cfg.oracle || oracle_only, ..cfg.clone() })?;
    let mut schedule = checkpoints(cfg.checkpoints, cfg.n0, limit).into_iter().peekable();
    let mut records = Vec::new();
    let mut n = 0u64;
    for item in items {
        if n >= limit || schedule.peek().is_none() {
            break;
        }
        n += 1;
        runner.push(item, !oracle_only)?;
        runner.cap_prefix(n);
        if schedule.peek() == Some(&n) {
            schedule.next();
            let oracle = runner.oracle_value(cfg)?;
            let (value, bound, mem_words) = if oracle_only {
                (oracle, None, runner.exact_words(n, cfg))
            } else {
                runner.estimate(cfg)?
            };
            records.push(TrajectoryRecord {
                n,
                value,
                bound,
                oracle,
                rel_err: rel_err(value, oracle),
                mem_words,
                elapsed_ns: cfg.timing.then(|| start.elapsed().as_nanos() as u64),
            });
        }
    }
    Ok(records)
}

/// JSON lines, one record per line.
pub fn write_records<W: Write>(mut w: W, records: &[TrajectoryRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
