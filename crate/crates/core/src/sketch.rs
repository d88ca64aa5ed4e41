//! Implicit random-sign projections and their memory accounting.

use crate::error::{Error, Result};
use crate::hash::{mix_seed, FourWiseHash, MERSENNE_31};

/// Words charged per row for its hash descriptor (four coefficients plus the modulus).
pub const HASH_WORDS: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageKind {
    Vector,
    Matrix,
}

/// A sign sketch `S = R / sqrt(m)` applied to a vector or to a row-streamed
/// matrix. Only the per-row hash descriptors and the image `S x` (or `S A`)
/// are stored; `R` itself is never materialized.
#[derive(Debug, Clone)]
pub struct SignSketch {
    hashes: Vec<FourWiseHash>,
    kind: ImageKind,
    width: usize,
    scale: f64,
    image: Vec<f64>,
    items_seen: u64,
}

impl SignSketch {
    /// Sketch of a vector indexed by `[0, prime)`.
    pub fn vector(rows: usize, seed: u64) -> Result<Self> {
        Self::build(rows, 1, ImageKind::Vector, seed, MERSENNE_31)
    }

    /// Sketch of a matrix with `width` columns whose rows arrive one by one.
    pub fn matrix(rows: usize, width: usize, seed: u64) -> Result<Self> {
        if width == 0 {
            return Err(Error::Config("matrix sketch needs width >= 1".into()));
        }
        Self::build(rows, width, ImageKind::Matrix, seed, MERSENNE_31)
    }

    pub fn with_prime(rows: usize, width: usize, kind: ImageKind, seed: u64, prime: u64) -> Result<Self> {
        Self::build(rows, width, kind, seed, prime)
    }

    fn build(rows: usize, width: usize, kind: ImageKind, seed: u64, prime: u64) -> Result<Self> {
        if rows == 0 {
            return Err(Error::Config("sketch needs at least one row".into()));
        }
        FourWiseHash::check_prime(prime)?;
        let hashes = (0..rows as u64).map(|r| FourWiseHash::draw(mix_seed(seed, r, 0x5157), prime)).collect();
        Ok(Self {
            hashes,
            kind,
            width,
            scale: 1.0 / (rows as f64).sqrt(),
            image: vec![0.0; rows * width],
            items_seen: 0,
        })
    }

    pub fn rows(&self) -> usize {
        self.hashes.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn kind(&self) -> ImageKind {
        self.kind
    }

    pub fn items_seen(&self) -> u64 {
        self.items_seen
    }

    pub fn hashes(&self) -> &[FourWiseHash] {
        &self.hashes
    }

    /// Row-major image, `rows * width` entries.
    pub fn image(&self) -> &[f64] {
        &self.image
    }

    /// Largest index the row hashes accept, exclusive.
    pub fn index_limit(&self) -> u64 {
        self.hashes[0].prime()
    }

    /// Entry `S[row][index]` of the explicit sketching matrix.
    pub fn entry(&self, row: usize, index: u64) -> Result<f64> {
        let h = self.hashes.get(row).ok_or_else(|| Error::Range(format!("row {row}")))?;
        Ok(f64::from(h.sign_at(index)?) * self.scale)
    }

    fn check_index(&self, index: u64) -> Result<()> {
        if index >= self.index_limit() {
            return Err(Error::Range(format!(
                "index {index} outside hash range {}",
                self.index_limit()
            )));
        }
        Ok(())
    }

    /// Adds `weight * e_index` to the sketched vector.
    pub fn update(&mut self, index: u64, weight: f64) -> Result<()> {
        self.apply_weight(index, weight)?;
        if weight == 1.0 {
            self.items_seen += 1;
        }
        Ok(())
    }

    /// Adds `count` copies of `e_index` in one pass.
    pub fn update_count(&mut self, index: u64, count: u64) -> Result<()> {
        self.apply_weight(index, count as f64)?;
        self.items_seen += count;
        Ok(())
    }

    fn apply_weight(&mut self, index: u64, weight: f64) -> Result<()> {
        if self.kind != ImageKind::Vector {
            return Err(Error::Contract("vector update on a matrix sketch".into()));
        }
        if !weight.is_finite() {
            return Err(Error::Input(format!("non-finite weight {weight}")));
        }
        self.check_index(index)?;
        if weight == 0.0 {
            return Ok(());
        }
        for (h, slot) in self.hashes.iter().zip(self.image.iter_mut()) {
            let coef = h.sign_unchecked(index) * self.scale;
            *slot += coef * weight;
        }
        Ok(())
    }

    /// Adds `s(row_index) * row / sqrt(m)` to every image row.
    pub fn row_update(&mut self, row_index: u64, row: &[f64]) -> Result<()> {
        if self.kind != ImageKind::Matrix {
            return Err(Error::Contract("row update on a vector sketch".into()));
        }
        if row.len() != self.width {
            return Err(Error::Dimension { expected: self.width, got: row.len() });
        }
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite row entry {bad}")));
        }
        self.check_index(row_index)?;
        self.items_seen += 1;
        if row.iter().all(|&v| v == 0.0) {
            return Ok(());
        }
        for (h, out) in self.hashes.iter().zip(self.image.chunks_exact_mut(self.width)) {
            let coef = h.sign_unchecked(row_index) * self.scale;
            for (o, &a) in out.iter_mut().zip(row) {
                *o += coef * a;
            }
        }
        Ok(())
    }

    /// Squared Euclidean length of a vector image.
    pub fn norm_sq(&self) -> Result<f64> {
        if self.kind != ImageKind::Vector {
            return Err(Error::Contract("norm of a matrix image".into()));
        }
        Ok(self.image.iter().map(|v| v * v).sum())
    }

    /// Squared norm of the image after virtually adding `weight * e_index`
    /// for every pending pair; the sketch itself is left untouched.
    pub fn norm_sq_with(&self, pending: &[(u64, f64)]) -> Result<f64> {
        if self.kind != ImageKind::Vector {
            return Err(Error::Contract("norm of a matrix image".into()));
        }
        for &(index, _) in pending {
            self.check_index(index)?;
        }
        Ok(self
            .hashes
            .iter()
            .zip(&self.image)
            .map(|(h, &v)| {
                let extra: f64 = pending
                    .iter()
                    .map(|&(i, w)| h.sign_unchecked(i) * self.scale * w)
                    .sum();
                let t = v + extra;
                t * t
            })
            .sum())
    }

    /// `m * width + 5m` words: the image plus one descriptor per row.
    pub fn memory_words(&self) -> u64 {
        let m = self.rows() as u64;
        m * self.width as u64 + HASH_WORDS * m
    }
}

/// Tracks live and peak machine words held by sketch state.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemoryLedger {
    words_live: u64,
    words_peak: u64,
}

impl MemoryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn allocate(&mut self, words: u64) {
        self.words_live += words;
        self.words_peak = self.words_peak.max(self.words_live);
    }

    pub fn release(&mut self, words: u64) {
        debug_assert!(words <= self.words_live, "ledger underflow");
        self.words_live = self.words_live.saturating_sub(words);
    }

    pub fn live(&self) -> u64 {
        self.words_live
    }

    pub fn peak(&self) -> u64 {
        self.words_peak
    }
}
