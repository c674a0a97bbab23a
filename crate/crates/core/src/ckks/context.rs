//! Modulus chain, NTT tables and RNS polynomial operations.
//!
//! Polynomials are stored residue-major in NTT form: `poly[i]` holds the
//! evaluations modulo prime `i`. A polynomial at level `l` carries residues
//! for primes `0..=l`; key-switching temporaries additionally carry the
//! special prime as their last residue.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::arith::Modulus;
use super::encoder::Encoder;
use super::ntt::NttTable;
use super::primes::{largest_ntt_prime, nearest_ntt_prime};
use crate::error::{Error, Result};
use crate::he::HeParams;

pub type RnsPoly = Vec<Vec<u64>>;

pub const NOISE_STDDEV: f64 = 3.2;

#[derive(Debug)]
pub struct Context {
    pub params: HeParams,
    pub n: usize,
    /// Data primes `q_0..=q_L` followed by the special prime.
    pub primes: Vec<u64>,
    pub tables: Vec<NttTable>,
    /// Expected scale at each level.
    pub canonical: Vec<f64>,
    pub encoder: Encoder,
    /// `inv_q[l][i] = q_l^-1 mod q_i` for `i < l`.
    inv_q: Vec<Vec<u64>>,
    /// `P^-1 mod q_i`.
    p_inv: Vec<u64>,
}

impl Context {
    pub fn new(params: &HeParams) -> Result<Self> {
        params.validate()?;
        let n = params.ring_degree;
        let two_n = 2 * n as u64;
        let levels = params.levels();
        let bits = &params.prime_bits;
        let missing =
            |what: &str| Error::Params(format!("no NTT-friendly {what} prime for N = {n}"));

        let q0 = largest_ntt_prime(bits[0], two_n, &[]).ok_or_else(|| missing("base"))?;
        let special =
            largest_ntt_prime(bits[levels + 1], two_n, &[q0]).ok_or_else(|| missing("special"))?;
        let mut used = vec![q0, special];
        let mut data = vec![0u64; levels + 1];
        data[0] = q0;
        let mut canonical = vec![0.0; levels + 1];
        let base_scale = params.scale();
        let mut c = base_scale;
        // Greedy from the top: each prime is chosen so the next canonical
        // scale stays as close to the base scale as the prime gaps allow.
        for l in (1..=levels).rev() {
            canonical[l] = c;
            let b = bits[l];
            let target = if b == params.scale_bits {
                c * c / base_scale
            } else {
                (b as f64).exp2()
            };
            let lo = 1u64 << (b - 1);
            let hi = if b >= 60 {
                (1u64 << 61) - 1
            } else {
                (1u64 << (b + 1)) - 1
            };
            let q = nearest_ntt_prime(target, lo, hi, two_n, &used)
                .ok_or_else(|| missing("rescale"))?;
            used.push(q);
            data[l] = q;
            c = c * c / q as f64;
        }
        canonical[0] = c;

        let mut primes = data;
        primes.push(special);
        let tables: Vec<NttTable> = primes.iter().map(|&q| NttTable::new(q, n)).collect();
        let inv_q = (0..=levels)
            .map(|l| {
                (0..l)
                    .map(|i| {
                        let m = tables[i].modulus;
                        m.inv(m.reduce(primes[l]))
                    })
                    .collect()
            })
            .collect();
        let p_inv = (0..=levels)
            .map(|i| {
                let m = tables[i].modulus;
                m.inv(m.reduce(special))
            })
            .collect();
        Ok(Context {
            params: params.clone(),
            n,
            primes,
            tables,
            canonical,
            encoder: Encoder::new(n),
            inv_q,
            p_inv,
        })
    }

    pub fn levels(&self) -> usize {
        self.params.levels()
    }

    /// Index of the special prime in [`Context::primes`].
    pub fn special(&self) -> usize {
        self.primes.len() - 1
    }

    pub fn modulus(&self, i: usize) -> &Modulus {
        &self.tables[i].modulus
    }

    /// log2 of `q_0 * ... * q_level`.
    pub fn log_q(&self, level: usize) -> f64 {
        self.primes[..=level]
            .iter()
            .map(|&q| (q as f64).log2())
            .sum()
    }

    pub fn zero(&self, residues: usize) -> RnsPoly {
        vec![vec![0u64; self.n]; residues]
    }

    /// Residue indices of a polynomial at `level`, optionally with the special prime.
    pub fn basis(&self, level: usize, with_special: bool) -> Vec<usize> {
        let mut b: Vec<usize> = (0..=level).collect();
        if with_special {
            b.push(self.special());
        }
        b
    }

    /// Signed integer coefficients lifted into the given basis, in NTT form.
    pub fn from_signed(&self, coeffs: &[i64], basis: &[usize]) -> RnsPoly {
        basis
            .iter()
            .map(|&i| {
                let t = &self.tables[i];
                let mut r: Vec<u64> = coeffs.iter().map(|&c| t.modulus.from_i64(c)).collect();
                t.forward(&mut r);
                r
            })
            .collect()
    }

    /// Encodes slot values at `scale` into a level-`level` polynomial.
    pub fn encode(&self, values: &[f64], level: usize, scale: f64) -> Result<RnsPoly> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Encoding(format!("invalid scale {scale}")));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Encoding(format!("non-finite value {v}")));
        }
        let real = self.encoder.encode(values, scale);
        let limit = (self.log_q(level) - 1.0).min(126.0).exp2();
        if let Some(c) = real.iter().find(|c| c.abs() >= limit) {
            return Err(Error::Encoding(format!(
                "coefficient {c:.3e} does not fit modulus at level {level}"
            )));
        }
        let ints: Vec<i128> = real.iter().map(|c| c.round() as i128).collect();
        Ok((0..=level)
            .map(|i| {
                let t = &self.tables[i];
                let mut r: Vec<u64> = ints.iter().map(|&c| t.modulus.from_i128(c)).collect();
                t.forward(&mut r);
                r
            })
            .collect())
    }

    /// Decodes using residue 0 only; valid while `|m| < q_0 / 2`.
    pub fn decode_base(&self, residue0_ntt: &[u64], scale: f64) -> Vec<f64> {
        let t = &self.tables[0];
        let mut r = residue0_ntt.to_vec();
        t.inverse(&mut r);
        let coeffs: Vec<f64> = r.iter().map(|&x| t.modulus.center(x) as f64).collect();
        self.encoder.decode(&coeffs, scale)
    }

    pub fn add_assign(&self, a: &mut RnsPoly, b: &RnsPoly, basis: &[usize]) {
        for ((ra, rb), &i) in a.iter_mut().zip(b).zip(basis) {
            let m = self.modulus(i);
            for (x, y) in ra.iter_mut().zip(rb) {
                *x = m.add(*x, *y);
            }
        }
    }

    pub fn sub_assign(&self, a: &mut RnsPoly, b: &RnsPoly, basis: &[usize]) {
        for ((ra, rb), &i) in a.iter_mut().zip(b).zip(basis) {
            let m = self.modulus(i);
            for (x, y) in ra.iter_mut().zip(rb) {
                *x = m.sub(*x, *y);
            }
        }
    }

    pub fn neg(&self, a: &RnsPoly, basis: &[usize]) -> RnsPoly {
        a.iter()
            .zip(basis)
            .map(|(r, &i)| {
                let m = self.modulus(i);
                r.iter().map(|&x| m.neg(x)).collect()
            })
            .collect()
    }

    pub fn mul(&self, a: &RnsPoly, b: &RnsPoly, basis: &[usize]) -> RnsPoly {
        a.iter()
            .zip(b)
            .zip(basis)
            .map(|((ra, rb), &i)| {
                let m = self.modulus(i);
                ra.iter().zip(rb).map(|(&x, &y)| m.mul(x, y)).collect()
            })
            .collect()
    }

    /// `acc += a * b` residue-wise.
    pub fn mul_acc(&self, acc: &mut RnsPoly, a: &RnsPoly, b: &RnsPoly, basis: &[usize]) {
        for (((racc, ra), rb), &i) in acc.iter_mut().zip(a).zip(b).zip(basis) {
            let m = self.modulus(i);
            for ((z, &x), &y) in racc.iter_mut().zip(ra).zip(rb) {
                *z = m.add(*z, m.mul(x, y));
            }
        }
    }

    /// Divides a level-`level` polynomial by `q_level`, rounding, and drops
    /// that residue.
    pub fn rescale(&self, a: &RnsPoly, level: usize) -> RnsPoly {
        let top = self.modulus(level);
        let mut last = a[level].clone();
        self.tables[level].inverse(&mut last);
        let centered: Vec<i64> = last.iter().map(|&x| top.center(x)).collect();
        (0..level)
            .map(|i| {
                let t = &self.tables[i];
                let m = &t.modulus;
                let mut r: Vec<u64> = centered.iter().map(|&c| m.from_i64(c)).collect();
                t.forward(&mut r);
                let inv = self.inv_q[level][i];
                let inv_s = m.shoup(inv);
                a[i].iter()
                    .zip(&r)
                    .map(|(&x, &y)| m.mul_shoup(m.sub(x, y), inv, inv_s))
                    .collect()
            })
            .collect()
    }

    /// Divides an extended polynomial (residues `0..=level` plus the special
    /// prime) by the special prime, rounding.
    pub fn mod_down(&self, a: &RnsPoly, level: usize) -> RnsPoly {
        let sp = self.special();
        let pm = self.modulus(sp);
        let mut last = a[level + 1].clone();
        self.tables[sp].inverse(&mut last);
        let centered: Vec<i64> = last.iter().map(|&x| pm.center(x)).collect();
        (0..=level)
            .map(|i| {
                let t = &self.tables[i];
                let m = &t.modulus;
                let mut r: Vec<u64> = centered.iter().map(|&c| m.from_i64(c)).collect();
                t.forward(&mut r);
                let inv = self.p_inv[i];
                let inv_s = m.shoup(inv);
                a[i].iter()
                    .zip(&r)
                    .map(|(&x, &y)| m.mul_shoup(m.sub(x, y), inv, inv_s))
                    .collect()
            })
            .collect()
    }

    /// Applies `X -> X^galois` to every residue of an NTT-form polynomial.
    pub fn automorphism(&self, a: &RnsPoly, basis: &[usize], galois: usize) -> RnsPoly {
        let n = self.n;
        let two_n = 2 * n;
        a.iter()
            .zip(basis)
            .map(|(r, &i)| {
                let t = &self.tables[i];
                let m = &t.modulus;
                let mut c = r.clone();
                t.inverse(&mut c);
                let mut out = vec![0u64; n];
                for (j, &v) in c.iter().enumerate() {
                    let k = j * galois % two_n;
                    if k < n {
                        out[k] = v;
                    } else {
                        out[k - n] = m.neg(v);
                    }
                }
                t.forward(&mut out);
                out
            })
            .collect()
    }

    /// Hybrid key switching: returns `(k0, k1)` with `k0 + k1 s ≈ d s'`
    /// for the key `(b_j, a_j)` built from `s'`.
    pub fn key_switch(&self, d: &RnsPoly, level: usize, key: &SwitchKey) -> (RnsPoly, RnsPoly) {
        let basis = self.basis(level, true);
        // Products are below 2^122, so up to 64 digits accumulate in u128
        // before a single reduction.
        debug_assert!(level < 64);
        let mut acc0 = vec![vec![0u128; self.n]; basis.len()];
        let mut acc1 = vec![vec![0u128; self.n]; basis.len()];
        let mut lifted = vec![0u64; self.n];
        for j in 0..=level {
            let tj = &self.tables[j];
            let mut coeffs = d[j].clone();
            tj.inverse(&mut coeffs);
            let centered: Vec<i64> = coeffs.iter().map(|&x| tj.modulus.center(x)).collect();
            for (pos, &i) in basis.iter().enumerate() {
                if i == j {
                    lifted.copy_from_slice(&d[j]);
                } else {
                    let t = &self.tables[i];
                    for (l, &c) in lifted.iter_mut().zip(&centered) {
                        *l = t.modulus.from_i64(c);
                    }
                    t.forward(&mut lifted);
                }
                // key residues: data primes by index, special prime last
                let kpos = if i == self.special() {
                    key.b[j].len() - 1
                } else {
                    i
                };
                let (kb, ka) = (&key.b[j][kpos], &key.a[j][kpos]);
                for (((z0, z1), &x), (&vb, &va)) in acc0[pos]
                    .iter_mut()
                    .zip(acc1[pos].iter_mut())
                    .zip(&lifted)
                    .zip(kb.iter().zip(ka))
                {
                    *z0 += x as u128 * vb as u128;
                    *z1 += x as u128 * va as u128;
                }
            }
        }
        let reduce = |acc: Vec<Vec<u128>>| -> RnsPoly {
            acc.into_iter()
                .zip(&basis)
                .map(|(r, &i)| {
                    let m = self.modulus(i);
                    r.into_iter().map(|v| m.reduce_u128(v)).collect()
                })
                .collect()
        };
        let (k0, k1) = (reduce(acc0), reduce(acc1));
        (self.mod_down(&k0, level), self.mod_down(&k1, level))
    }

    pub fn sample_ternary<R: Rng>(&self, rng: &mut R) -> Vec<i64> {
        (0..self.n).map(|_| rng.gen_range(-1i64..=1)).collect()
    }

    pub fn sample_gaussian<R: Rng>(&self, rng: &mut R) -> Vec<i64> {
        let normal = Normal::new(0.0, NOISE_STDDEV).expect("valid stddev");
        let bound = 6.0 * NOISE_STDDEV;
        (0..self.n)
            .map(|_| normal.sample(rng).clamp(-bound, bound).round() as i64)
            .collect()
    }

    /// Uniform polynomial over `basis`, sampled directly in NTT form.
    pub fn sample_uniform<R: Rng>(&self, rng: &mut R, basis: &[usize]) -> RnsPoly {
        basis
            .iter()
            .map(|&i| {
                let q = self.primes[i];
                (0..self.n).map(|_| rng.gen_range(0..q)).collect()
            })
            .collect()
    }
}

/// Key-switching key: one `(b_j, a_j)` pair per data prime, each over all
/// data primes plus the special prime.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwitchKey {
    pub b: Vec<RnsPoly>,
    pub a: Vec<RnsPoly>,
}
