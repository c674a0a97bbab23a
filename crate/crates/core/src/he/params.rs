use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ring and modulus-chain description shared by every backend.
///
/// `prime_bits` lists the base prime first, then one prime per rescale level,
/// and the special key-switching prime last. A fresh ciphertext sits at level
/// [`HeParams::levels`] and every multiplication lowers it by one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeParams {
    pub ring_degree: usize,
    pub prime_bits: Vec<u32>,
    pub scale_bits: u32,
}

impl HeParams {
    pub fn new(ring_degree: usize, prime_bits: Vec<u32>, scale_bits: u32) -> Result<Self> {
        let p = HeParams {
            ring_degree,
            prime_bits,
            scale_bits,
        };
        p.validate()?;
        Ok(p)
    }

    /// Desk-scale preset: N = 2^13, 60-bit base and special primes, 40-bit
    /// rescale primes and scale 2^40, with `levels` rescale primes.
    pub fn desk(levels: usize) -> Self {
        Self::with_chain(1 << 13, levels, 40)
    }

    /// The large-ring regime (N = 2^15) used for timing studies.
    pub fn large(levels: usize) -> Self {
        Self::with_chain(1 << 15, levels, 40)
    }

    /// Small ring for fast unit tests. Not secure, not meant to be.
    pub fn toy(ring_degree: usize, levels: usize) -> Self {
        Self::with_chain(ring_degree, levels, 40)
    }

    pub fn with_chain(ring_degree: usize, levels: usize, scale_bits: u32) -> Self {
        let mut prime_bits = Vec::with_capacity(levels + 2);
        prime_bits.push(60);
        prime_bits.extend(std::iter::repeat(scale_bits).take(levels));
        prime_bits.push(60);
        HeParams {
            ring_degree,
            prime_bits,
            scale_bits,
        }
    }

    /// Same ring and scale, chain resized to `levels` rescale primes.
    pub fn resized(&self, levels: usize) -> Self {
        let data_bits = self.prime_bits.get(1).copied().unwrap_or(self.scale_bits);
        let mut prime_bits = vec![self.prime_bits[0]];
        prime_bits.extend(std::iter::repeat(data_bits).take(levels));
        prime_bits.push(*self.prime_bits.last().unwrap_or(&60));
        HeParams {
            ring_degree: self.ring_degree,
            prime_bits,
            scale_bits: self.scale_bits,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.ring_degree;
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::Params(format!(
                "ring_degree {n} must be a power of two >= 8"
            )));
        }
        if self.prime_bits.len() < 3 {
            return Err(Error::Params(format!(
                "modulus chain needs a base prime, at least one rescale prime and a special prime (got {} primes)",
                self.prime_bits.len()
            )));
        }
        if let Some(b) = self.prime_bits.iter().find(|b| !(20..=61).contains(*b)) {
            return Err(Error::Params(format!(
                "prime bit-size {b} outside [20, 61]"
            )));
        }
        let min_data = self.data_prime_bits().iter().copied().min().unwrap_or(0);
        if self.scale_bits == 0 || self.scale_bits > min_data + 1 {
            return Err(Error::Params(format!(
                "scale_bits {} must be in [1, {}]",
                self.scale_bits,
                min_data + 1
            )));
        }
        Ok(())
    }

    /// Number of rescale primes; the level of a fresh ciphertext.
    pub fn levels(&self) -> usize {
        self.prime_bits.len().saturating_sub(2)
    }

    pub fn slots(&self) -> usize {
        self.ring_degree / 2
    }

    pub fn scale(&self) -> f64 {
        (self.scale_bits as f64).exp2()
    }

    /// Base prime plus rescale primes (everything but the special prime).
    pub fn data_prime_bits(&self) -> &[u32] {
        &self.prime_bits[..self.prime_bits.len().saturating_sub(1)]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let p: HeParams = serde_json::from_str(&text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }
}
