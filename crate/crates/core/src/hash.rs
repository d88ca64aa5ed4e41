//! Degree-3 polynomial hashing over a prime field, mapped to random signs.
//!
//! Evaluating `c0 + c1 x + c2 x^2 + c3 x^3 mod p` with uniformly drawn
//! coefficients gives field values that are exactly uniform on any four
//! distinct indices, so the derived signs are 4-wise independent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// The Mersenne prime 2^31 - 1, the default field size.
pub const MERSENNE_31: u64 = (1 << 31) - 1;

/// Deterministic primality test for moduli below 2^32.
pub fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    if p < 4 {
        return true;
    }
    if p.is_multiple_of(2) || p.is_multiple_of(3) {
        return false;
    }
    let mut f = 5u64;
    while f * f <= p {
        if p.is_multiple_of(f) || p.is_multiple_of(f + 2) {
            return false;
        }
        f += 6;
    }
    true
}

/// 64-bit finalizer used to derive independent seeds from a master seed.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FourWiseHash {
    prime: u64,
    coeffs: [u64; 4],
    seed: u64,
}

impl FourWiseHash {
    /// Draws four field coefficients from `seed`. The modulus must be a
    /// prime below 2^32 so that products fit in 64 bits.
    pub fn new(seed: u64, prime: u64) -> Result<Self> {
        Self::check_prime(prime)?;
        Ok(Self::draw(seed, prime))
    }

    /// `new` for a modulus the caller has already validated.
    pub(crate) fn draw(seed: u64, prime: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = [
            rng.random_range(0..prime),
            rng.random_range(0..prime),
            rng.random_range(0..prime),
            rng.random_range(0..prime),
        ];
        Self { prime, coeffs, seed }
    }

    /// Builds a hash from explicit coefficients (reduced mod `prime`).
    pub fn from_coefficients(prime: u64, coeffs: [u64; 4]) -> Result<Self> {
        Self::check_prime(prime)?;
        let coeffs = coeffs.map(|c| c % prime);
        Ok(Self { prime, coeffs, seed: 0 })
    }

    pub(crate) fn check_prime(prime: u64) -> Result<()> {
        if prime >= 1 << 32 {
            return Err(Error::Config(format!("modulus {prime} exceeds 2^32")));
        }
        if !is_prime(prime) {
            return Err(Error::Config(format!("modulus {prime} is not prime")));
        }
        Ok(())
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn coefficients(&self) -> [u64; 4] {
        self.coeffs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    fn reduce(&self, x: u64) -> u64 {
        if self.prime == MERSENNE_31 {
            let y = (x & MERSENNE_31) + (x >> 31);
            let y = (y & MERSENNE_31) + (y >> 31);
            if y >= MERSENNE_31 {
                y - MERSENNE_31
            } else {
                y
            }
        } else {
            x % self.prime
        }
    }

    /// Polynomial value in `[0, p)`. The caller guarantees `index < p`.
    #[inline]
    pub fn value_unchecked(&self, index: u64) -> u64 {
        let [c0, c1, c2, c3] = self.coeffs;
        let mut acc = c3;
        acc = self.reduce(acc * index + c2);
        acc = self.reduce(acc * index + c1);
        self.reduce(acc * index + c0)
    }

    pub fn value(&self, index: u64) -> Result<u64> {
        self.check_index(index)?;
        Ok(self.value_unchecked(index))
    }

    /// `+1` when the polynomial lands in the lower half of the field.
    #[inline]
    pub fn sign_unchecked(&self, index: u64) -> f64 {
        if 2 * self.value_unchecked(index) < self.prime {
            1.0
        } else {
            -1.0
        }
    }

    pub fn sign_at(&self, index: u64) -> Result<i8> {
        self.check_index(index)?;
        Ok(if self.sign_unchecked(index) > 0.0 { 1 } else { -1 })
    }

    fn check_index(&self, index: u64) -> Result<()> {
        if index >= self.prime {
            return Err(Error::Range(format!(
                "index {index} not below modulus {}",
                self.prime
            )));
        }
        Ok(())
    }
}

/// Outcome of exhaustively enumerating all `p^4` coefficient tuples.
#[derive(Debug, Clone)]
pub struct EnumerationReport {
    /// Count of each sign pattern; bit `j` set means index `j` got `-1`.
    pub sign_counts: [u64; 16],
    /// Every tuple of field values appears exactly once.
    pub values_uniform: bool,
    /// Each sign pattern count equals the product of marginal counts.
    pub signs_independent: bool,
    /// Number of coefficient tuples yielding `+1` for a single index.
    pub plus_per_index: u64,
}

/// Brute-force check of the family's independence at `indices`.
pub fn enumerate_four_wise(prime: u64, indices: [u64; 4]) -> Result<EnumerationReport> {
    if prime > 97 {
        return Err(Error::Config("enumeration limited to p <= 97".into()));
    }
    for i in 0..4 {
        for j in 0..i {
            if indices[i] == indices[j] {
                return Err(Error::Input("indices must be distinct".into()));
            }
        }
    }
    let p = prime as usize;
    let mut value_hits = vec![0u32; p * p * p * p];
    let mut sign_counts = [0u64; 16];
    for c0 in 0..prime {
        for c1 in 0..prime {
            for c2 in 0..prime {
                for c3 in 0..prime {
                    let h = FourWiseHash::from_coefficients(prime, [c0, c1, c2, c3])?;
                    let mut cell = 0usize;
                    let mut pattern = 0usize;
                    for (j, &x) in indices.iter().enumerate() {
                        let v = h.value(x)?;
                        cell = cell * p + v as usize;
                        if h.sign_at(x)? < 0 {
                            pattern |= 1 << j;
                        }
                    }
                    value_hits[cell] += 1;
                    sign_counts[pattern] += 1;
                }
            }
        }
    }
    let plus_per_index = prime.div_ceil(2);
    let minus_per_index = prime - plus_per_index;
    let signs_independent = (0..16usize).all(|pattern| {
        let minus = pattern.count_ones();
        sign_counts[pattern] == plus_per_index.pow(4 - minus) * minus_per_index.pow(minus)
    });
    Ok(EnumerationReport {
        sign_counts,
        values_uniform: value_hits.iter().all(|&h| h == 1),
        signs_independent,
        plus_per_index,
    })
}
