//! Block-diagonal sign sketching of row-streamed matrices.
//!
//! Rows arrive in blocks of `n0 * 2^i`; block `i` gets its own sign sketch
//! with `m_i` rows, so the streamed image equals `diag(S_0, S_1, ...) A`.
//! The schedule makes later blocks more accurate, which drives the error of
//! sketched regression and products towards zero as rows accumulate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::mix_seed;
use crate::sketch::SignSketch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    Regression,
    Subspace,
    Matmul,
}

impl std::str::FromStr for ScheduleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(ScheduleMode::Regression),
            "subspace" => Ok(ScheduleMode::Subspace),
            "matmul" => Ok(ScheduleMode::Matmul),
            other => Err(Error::Config(format!("unknown schedule mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchSchedule {
    pub mode: ScheduleMode,
    pub epsilon0: f64,
    pub delta: f64,
    /// Matmul exponent: rows scale as `eps_i^(-2 alpha)`.
    pub alpha: f64,
    pub d: usize,
    pub d_prime: usize,
    pub constant: f64,
    pub base_block: u64,
    pub budget_constant: f64,
    /// Pins every block to this precision instead of `eps0 / i`.
    pub fixed_precision: Option<f64>,
}

impl SketchSchedule {
    pub fn new(mode: ScheduleMode, d: usize) -> Self {
        let constant = match mode {
            ScheduleMode::Regression => 2.0,
            ScheduleMode::Subspace | ScheduleMode::Matmul => 8.0,
        };
        Self {
            mode,
            epsilon0: 0.5,
            delta: 0.1,
            alpha: 0.5,
            d,
            d_prime: d,
            constant,
            base_block: 64,
            budget_constant: 2.0,
            fixed_precision: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon0 > 0.0 && self.epsilon0 <= 0.5) {
            return Err(Error::Config(format!("epsilon0 {} outside (0, 1/2]", self.epsilon0)));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::Config(format!("delta {} outside (0, 1/2)", self.delta)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if self.d == 0 || self.d_prime == 0 || self.base_block == 0 {
            return Err(Error::Config("dimensions and base block must be positive".into()));
        }
        if !(self.constant > 0.0) || !(self.budget_constant >= 1.0) {
            return Err(Error::Config("constants must be positive".into()));
        }
        if let Some(e) = self.fixed_precision {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::Config(format!("fixed precision {e} outside (0, 1)")));
            }
        }
        Ok(())
    }

    pub fn precision(&self, i: u32) -> f64 {
        self.fixed_precision.unwrap_or(self.epsilon0 / f64::from(i.max(1)))
    }

    pub fn failure_budget(&self, i: u32) -> f64 {
        let i = f64::from(i.max(1));
        self.delta / (self.budget_constant * i * i)
    }

    /// Rows of the sign sketch applied to block `i` (block 0 uses the `i = 1` sizes).
    pub fn block_rows(&self, i: u32) -> usize {
        let eps = self.precision(i);
        let delta_i = self.failure_budget(i);
        let d = self.d as f64;
        let m = match self.mode {
            ScheduleMode::Regression => self.constant * d / eps * (1.0 / delta_i).ln(),
            ScheduleMode::Subspace => self.constant * d / (eps * eps) * (1.0 / self.delta).ln(),
            ScheduleMode::Matmul => {
                // A pinned precision needs the squared exponent for a fixed error.
                let exponent = if self.fixed_precision.is_some() { 2.0 } else { 2.0 * self.alpha };
                self.constant / eps.powf(exponent) * ((self.d * self.d_prime) as f64 / delta_i).ln()
            }
        };
        (m.ceil() as usize).max(1)
    }

    /// Rows of stream block `i`: `n0 * 2^i`.
    pub fn block_len(&self, i: u32) -> u64 {
        self.base_block << i
    }
}

/// Flags entries larger than `scale * n^exponent`, the magnitude the
/// analysis assumes for an `n`-row stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeGuard {
    pub scale: f64,
    pub exponent: f64,
}

impl Default for MagnitudeGuard {
    fn default() -> Self {
        Self { scale: 1e6, exponent: 1.0 }
    }
}

/// Streamed image of `diag(S_0, ..., S_l) A`.
#[derive(Debug, Clone)]
pub struct BlockDiagonalSketch {
    schedule: SketchSchedule,
    width: usize,
    seed: u64,
    blocks: Vec<SignSketch>,
    rows_in_block: u64,
    rows_total: u64,
    guard: MagnitudeGuard,
    guard_violations: u64,
}

impl BlockDiagonalSketch {
    pub fn new(schedule: SketchSchedule, width: usize, seed: u64) -> Result<Self> {
        schedule.validate()?;
        let mut s = Self {
            schedule,
            width,
            seed,
            blocks: Vec::new(),
            rows_in_block: 0,
            rows_total: 0,
            guard: MagnitudeGuard::default(),
            guard_violations: 0,
        };
        s.open_block()?;
        Ok(s)
    }

    pub fn with_guard(mut self, guard: MagnitudeGuard) -> Self {
        self.guard = guard;
        self
    }

    fn open_block(&mut self) -> Result<()> {
        let i = self.blocks.len() as u32;
        let rows = self.schedule.block_rows(i);
        self.blocks.push(SignSketch::matrix(rows, self.width, mix_seed(self.seed, u64::from(i), 0xB10C))?);
        self.rows_in_block = 0;
        Ok(())
    }

    pub fn schedule(&self) -> &SketchSchedule {
        &self.schedule
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn blocks(&self) -> &[SignSketch] {
        &self.blocks
    }

    pub fn current_block(&self) -> u32 {
        self.blocks.len() as u32 - 1
    }

    pub fn rows_total(&self) -> u64 {
        self.rows_total
    }

    pub fn rows_in_block(&self) -> u64 {
        self.rows_in_block
    }

    pub fn sealed_blocks(&self) -> usize {
        self.blocks.len() - 1
    }

    /// Total rows of the stacked image, `sum m_i`.
    pub fn image_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.rows()).sum()
    }

    pub fn guard_violations(&self) -> u64 {
        self.guard_violations
    }

    pub fn memory_words(&self) -> u64 {
        self.blocks.iter().map(|b| b.memory_words()).sum()
    }

    /// Sketches one row into the open block, sealing it when full.
    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.width {
            return Err(Error::Dimension { expected: self.width, got: row.len() });
        }
        let limit = self.guard.scale * ((self.rows_total + 1) as f64).powf(self.guard.exponent);
        if row.iter().any(|v| v.abs() > limit) {
            self.guard_violations += 1;
        }
        let local = self.rows_in_block;
        self.blocks.last_mut().expect("open block").row_update(local, row)?;
        self.rows_in_block += 1;
        self.rows_total += 1;
        if self.rows_in_block == self.schedule.block_len(self.current_block()) {
            self.open_block()?;
        }
        Ok(())
    }

    /// Stacked image, block 0 on top.
    pub fn image(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.image_rows(), self.width);
        let mut r0 = 0;
        for b in &self.blocks {
            for (r, row) in b.image().chunks_exact(self.width).enumerate() {
                for (c, &v) in row.iter().enumerate() {
                    out[(r0 + r, c)] = v;
                }
            }
            r0 += b.rows();
        }
        out
    }

    fn same_sketch(&self, other: &Self) -> bool {
        self.schedule == other.schedule && self.seed == other.seed && self.rows_total == other.rows_total
    }
}

/// Regression stream: rows `[a | b]` share one block-diagonal sketch.
#[derive(Debug, Clone)]
pub struct RegressionSketch {
    sketch: BlockDiagonalSketch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSolution {
    pub coefficients: Vec<f64>,
    pub sketched_residual: f64,
    pub rank: usize,
    pub rank_deficient: bool,
}

impl RegressionSketch {
    pub fn new(schedule: SketchSchedule, seed: u64) -> Result<Self> {
        Ok(Self { sketch: BlockDiagonalSketch::new(schedule, schedule.d + 1, seed)? })
    }

    pub fn with_guard(self, guard: MagnitudeGuard) -> Self {
        Self { sketch: self.sketch.with_guard(guard) }
    }

    pub fn sketch(&self) -> &BlockDiagonalSketch {
        &self.sketch
    }

    pub fn dim(&self) -> usize {
        self.sketch.schedule.d
    }

    pub fn rows_total(&self) -> u64 {
        self.sketch.rows_total
    }

    pub fn ingest_row(&mut self, a_row: &[f64], b_val: f64) -> Result<()> {
        let d = self.dim();
        if a_row.len() != d {
            return Err(Error::Dimension { expected: d, got: a_row.len() });
        }
        let mut row = Vec::with_capacity(d + 1);
        row.extend_from_slice(a_row);
        row.push(b_val);
        self.sketch.push_row(&row)
    }

    /// Sketched operands `(SA, Sb)`.
    pub fn sketched_system(&self) -> (DMatrix<f64>, DVector<f64>) {
        let img = self.sketch.image();
        let d = self.dim();
        let sa = img.columns(0, d).into_owned();
        let sb = img.column(d).into_owned();
        (sa, sb)
    }

    /// Minimizer of `||SA x - Sb||`.
    pub fn solve(&self) -> Result<RegressionSolution> {
        let d = self.dim();
        if self.sketch.sealed_blocks() == 0 {
            return Err(Error::NotReady("no sealed block yet".into()));
        }
        if self.sketch.image_rows() < d {
            return Err(Error::NotReady(format!("{} sketch rows for {d} unknowns", self.sketch.image_rows())));
        }
        let (sa, sb) = self.sketched_system();
        let (x, rank) = least_squares_qr(&sa, &sb)?;
        let sketched_residual = (&sa * &x - &sb).norm();
        Ok(RegressionSolution { coefficients: x.iter().copied().collect(), sketched_residual, rank, rank_deficient: rank < d })
    }
}

/// Least squares via Householder QR when the system has full column rank
/// (checked through its singular values); otherwise the minimum-norm
/// solution from the SVD. Returns the solution and the numerical rank.
pub fn least_squares_qr(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
    let (rows, cols) = a.shape();
    if b.len() != rows {
        return Err(Error::Dimension { expected: rows, got: b.len() });
    }
    let sv = a.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let tol = smax * rows.max(cols) as f64 * f64::EPSILON;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    if rank == cols && rows >= cols {
        let qr = a.clone().qr();
        let qtb = qr.q().transpose() * b;
        let x = qr
            .r()
            .solve_upper_triangular(&qtb)
            .ok_or_else(|| Error::Contract("singular triangular factor".into()))?;
        return Ok((x, rank));
    }
    let svd = a.clone().svd(true, true);
    let x = svd.solve(b, tol).map_err(|e| Error::Contract(e.to_string()))?;
    Ok((x, rank))
}

/// `(SA)^T (SB)` for two matrices streamed through the same sketch.
pub fn sketched_matmul(a: &BlockDiagonalSketch, b: &BlockDiagonalSketch) -> Result<DMatrix<f64>> {
    if !a.same_sketch(b) {
        return Err(Error::Contract("operands were not sketched with the same schedule, seed and length".into()));
    }
    Ok(a.image().transpose() * b.image())
}

/// Largest `| ||SAx||^2 / ||Ax||^2 - 1 |` over the row space of `a_full`.
pub fn subspace_distortion(state: &BlockDiagonalSketch, a_full: &DMatrix<f64>) -> Result<f64> {
    if a_full.nrows() as u64 != state.rows_total() || a_full.ncols() != state.width() {
        return Err(Error::Contract("matrix does not match the streamed rows".into()));
    }
    distortion_between(&state.image(), a_full)
}

/// Distortion of an arbitrary image `sa` of `a` (for instance `sa = a`, which gives 0).
pub fn distortion_between(sa: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<f64> {
    if sa.ncols() != a.ncols() {
        return Err(Error::Dimension { expected: a.ncols(), got: sa.ncols() });
    }
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = smax * a.nrows().max(a.ncols()) as f64 * f64::EPSILON;
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > tol).collect();
    if keep.is_empty() {
        return Ok(0.0);
    }
    // S U_r = S A V_r diag(1 / sigma_r)
    let mut basis = DMatrix::zeros(a.ncols(), keep.len());
    for (j, &i) in keep.iter().enumerate() {
        let sigma = svd.singular_values[i];
        for r in 0..a.ncols() {
            basis[(r, j)] = v_t[(i, r)] / sigma;
        }
    }
    let su = sa * basis;
    Ok(su.singular_values().iter().map(|s| (s * s - 1.0).abs()).fold(0.0, f64::max))
}

/// Smallest squared singular value of `a` (`sigma_d^2`).
pub fn min_singular_value_sq(a: &DMatrix<f64>) -> Result<f64> {
    if a.ncols() > a.nrows() {
        return Err(Error::Contract(format!("{} columns exceed {} rows", a.ncols(), a.nrows())));
    }
    let sv = a.singular_values();
    Ok(sv.iter().copied().fold(f64::INFINITY, f64::min).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_rows_formula() {
        let mut s = SketchSchedule::new(ScheduleMode::Regression, 3);
        s.constant = 2.0;
        assert_eq!(s.block_rows(1), 36);
        assert_eq!(s.block_rows(0), 36);
    }

    #[test]
    fn matmul_half_alpha_drops_square() {
        let mut s = SketchSchedule::new(ScheduleMode::Matmul, 3);
        s.d_prime = 2;
        s.alpha = 0.5;
        let i = 4;
        let expect = s.constant * (f64::from(i) / s.epsilon0) * (6.0 / s.failure_budget(i)).ln();
        assert_eq!(s.block_rows(i), expect.ceil() as usize);
    }

    #[test]
    fn rows_nondecreasing() {
        for mode in [ScheduleMode::Regression, ScheduleMode::Subspace, ScheduleMode::Matmul] {
            let s = SketchSchedule::new(mode, 4);
            for i in 0..30 {
                assert!(s.block_rows(i + 1) >= s.block_rows(i), "{mode:?} at {i}");
            }
        }
    }

    #[test]
    fn blocks_open_on_schedule() {
        let mut s = SketchSchedule::new(ScheduleMode::Regression, 2);
        s.base_block = 4;
        let mut st = BlockDiagonalSketch::new(s, 2, 1).unwrap();
        for _ in 0..3 {
            st.push_row(&[1.0, 1.0]).unwrap();
        }
        assert_eq!(st.current_block(), 0);
        st.push_row(&[1.0, 1.0]).unwrap();
        assert_eq!(st.current_block(), 1);
        for _ in 0..8 {
            st.push_row(&[1.0, 1.0]).unwrap();
        }
        assert_eq!(st.current_block(), 2);
        assert_eq!(st.image_rows(), (0..3).map(|i| s.block_rows(i)).sum::<usize>());
        assert!(matches!(st.push_row(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn zero_rows_leave_image() {
        let mut st = BlockDiagonalSketch::new(SketchSchedule::new(ScheduleMode::Subspace, 2), 2, 3).unwrap();
        st.push_row(&[1.0, -2.0]).unwrap();
        let before = st.image();
        st.push_row(&[0.0, 0.0]).unwrap();
        assert_eq!(st.image(), before);
    }

    #[test]
    fn identity_image_has_no_distortion() {
        let a = DMatrix::from_fn(20, 3, |r, c| ((r * 7 + c * 3) % 11) as f64 - 5.0);
        assert!(distortion_between(&a, &a).unwrap() < 1e-12);
    }

    #[test]
    fn singular_values() {
        let mut q = DMatrix::zeros(6, 2);
        q[(0, 0)] = 1.0;
        q[(3, 1)] = 1.0;
        assert!((min_singular_value_sq(&q).unwrap() - 1.0).abs() < 1e-12);
        let dup = DMatrix::from_fn(5, 2, |r, _| r as f64 + 1.0);
        assert!(min_singular_value_sq(&dup).unwrap() < 1e-20);
        assert!(min_singular_value_sq(&DMatrix::<f64>::zeros(1, 2)).is_err());
    }

    #[test]
    fn guard_counts_large_entries() {
        let mut st = BlockDiagonalSketch::new(SketchSchedule::new(ScheduleMode::Subspace, 1), 1, 0)
            .unwrap()
            .with_guard(MagnitudeGuard { scale: 10.0, exponent: 1.0 });
        st.push_row(&[5.0]).unwrap();
        st.push_row(&[25.0]).unwrap();
        assert_eq!(st.guard_violations(), 1);
    }

    #[test]
    fn rank_deficient_gets_min_norm() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let b = DVector::from_row_slice(&[2.0, 4.0, 6.0]);
        let (x, rank) = least_squares_qr(&a, &b).unwrap();
        assert_eq!(rank, 1);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_matmul_rejected() {
        let s = SketchSchedule::new(ScheduleMode::Matmul, 2);
        let a = BlockDiagonalSketch::new(s, 2, 1).unwrap();
        let b = BlockDiagonalSketch::new(s, 2, 2).unwrap();
        assert!(matches!(sketched_matmul(&a, &b), Err(Error::Contract(_))));
    }
}
