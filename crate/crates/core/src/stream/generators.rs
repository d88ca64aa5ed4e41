use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Zipf};

use crate::error::{Error, Result};
use crate::hash::mix_seed;

/// One element of a stream, shaped by the task that consumes it.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamItem {
    Item(u64),
    Point(Vec<f64>),
    /// Regression row: features and target.
    Row(Vec<f64>, f64),
    /// Matching rows of two matrices.
    RowPair(Vec<f64>, Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorSpec {
    UniformInt { universe: u64 },
    ZipfInt { universe: u64, exponent: f64 },
    /// Balanced isotropic unit-variance clusters whose means are `separation` apart.
    GaussianMixture { k: usize, d: usize, separation: f64 },
    /// Gaussian rows with a planted coefficient vector and Gaussian noise.
    RegressionRows { d: usize, noise: f64 },
    MatmulRows { d: usize, d_prime: usize },
    ConstantItem { item: u64 },
}

impl std::str::FromStr for GeneratorSpec {
    type Err = Error;

    /// `name:arg:arg`, e.g. `uniform-int:16` or `gaussian-mixture:3:2:10`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let name = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let bad = || Error::Config(format!("bad generator spec {s:?}"));
        let int = |i: usize| -> Result<u64> { args.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
        let real = |i: usize| -> Result<f64> { args.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
        let expect = |n: usize| if args.len() == n { Ok(()) } else { Err(bad()) };
        let spec = match name {
            "uniform-int" => {
                expect(1)?;
                GeneratorSpec::UniformInt { universe: int(0)? }
            }
            "zipf-int" => {
                expect(2)?;
                GeneratorSpec::ZipfInt { universe: int(0)?, exponent: real(1)? }
            }
            "gaussian-mixture" => {
                expect(3)?;
                GeneratorSpec::GaussianMixture { k: int(0)? as usize, d: int(1)? as usize, separation: real(2)? }
            }
            "regression-rows" => {
                expect(2)?;
                GeneratorSpec::RegressionRows { d: int(0)? as usize, noise: real(1)? }
            }
            "matmul-rows" => {
                expect(2)?;
                GeneratorSpec::MatmulRows { d: int(0)? as usize, d_prime: int(1)? as usize }
            }
            "constant-item" => {
                expect(1)?;
                GeneratorSpec::ConstantItem { item: int(0)? }
            }
            _ => return Err(Error::Config(format!("unknown generator {name:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl GeneratorSpec {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            GeneratorSpec::UniformInt { universe } => universe >= 1,
            GeneratorSpec::ZipfInt { universe, exponent } => universe >= 1 && exponent >= 0.0,
            GeneratorSpec::GaussianMixture { k, d, separation } => k >= 1 && d >= 1 && separation >= 0.0,
            GeneratorSpec::RegressionRows { d, noise } => d >= 1 && noise >= 0.0,
            GeneratorSpec::MatmulRows { d, d_prime } => d >= 1 && d_prime >= 1,
            GeneratorSpec::ConstantItem { item } => item >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid generator parameters {self:?}")))
        }
    }
}

/// Deterministic source of stream items for a `(spec, seed)` pair.
#[derive(Debug, Clone)]
pub struct Generator {
    spec: GeneratorSpec,
    rng: ChaCha8Rng,
    planted: Vec<f64>,
    zipf: Option<Zipf<f64>>,
}

impl Generator {
    pub fn new(spec: GeneratorSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let planted = match spec {
            GeneratorSpec::RegressionRows { d, .. } => {
                let mut prng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x9A, 0));
                (0..d).map(|_| prng.sample(StandardNormal)).collect()
            }
            GeneratorSpec::GaussianMixture { k, separation, .. } => (0..k).map(|j| j as f64 * separation).collect(),
            _ => Vec::new(),
        };
        let zipf = match spec {
            GeneratorSpec::ZipfInt { universe, exponent } => {
                Some(Zipf::new(universe as f64, exponent).map_err(|e| Error::Config(e.to_string()))?)
            }
            _ => None,
        };
        Ok(Self { spec, rng: ChaCha8Rng::seed_from_u64(seed), planted, zipf })
    }

    /// Planted regression coefficients, or the mixture means along the first axis.
    pub fn planted(&self) -> &[f64] {
        &self.planted
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    fn normals(&mut self, d: usize) -> Vec<f64> {
        (0..d).map(|_| self.rng.sample(StandardNormal)).collect()
    }

    /// Mixture point together with its planted cluster label.
    pub fn next_labeled_point(&mut self) -> Option<(Vec<f64>, usize)> {
        let GeneratorSpec::GaussianMixture { k, d, .. } = self.spec else { return None };
        let label = self.rng.random_range(0..k);
        let mut p = self.normals(d);
        p[0] += self.planted[label];
        Some((p, label))
    }

    pub fn next_item(&mut self) -> StreamItem {
        match self.spec.clone() {
            GeneratorSpec::UniformInt { universe } => StreamItem::Item(self.rng.random_range(1..=universe)),
            GeneratorSpec::ZipfInt { .. } => {
                let z = self.zipf.expect("zipf sampler");
                StreamItem::Item(z.sample(&mut self.rng) as u64)
            }
            GeneratorSpec::ConstantItem { item } => StreamItem::Item(item),
            GeneratorSpec::GaussianMixture { .. } => StreamItem::Point(self.next_labeled_point().expect("mixture").0),
            GeneratorSpec::RegressionRows { d, noise } => {
                let a = self.normals(d);
                let eps: f64 = self.rng.sample(StandardNormal);
                let b = a.iter().zip(&self.planted).map(|(x, w)| x * w).sum::<f64>() + noise * eps;
                StreamItem::Row(a, b)
            }
            GeneratorSpec::MatmulRows { d, d_prime } => {
                let a = self.normals(d);
                let b = self.normals(d_prime);
                StreamItem::RowPair(a, b)
            }
        }
    }
}

impl Iterator for Generator {
    type Item = StreamItem;
    fn next(&mut self) -> Option<StreamItem> {
        Some(self.next_item())
    }
}

/// First `n` items of the generator for `(spec, seed)`.
pub fn generate_stream(spec: &GeneratorSpec, seed: u64, n: usize) -> Result<Vec<StreamItem>> {
    Ok(Generator::new(spec.clone(), seed)?.take(n).collect())
}
