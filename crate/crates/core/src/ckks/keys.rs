//! Key generation and key serialization.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::context::{Context, RnsPoly, SwitchKey};
use crate::error::{Error, Result};
use crate::he::container::{Reader, Writer};
use crate::he::HeParams;

const MAGIC: &[u8; 4] = b"CKKY";

/// Galois element `5^step mod 2N` realizing a left rotation by `step` slots.
pub fn galois_element(n: usize, step: i64) -> usize {
    let slots = (n / 2) as i64;
    let two_n = 2 * n as u64;
    let mut e = step.rem_euclid(slots) as u64;
    let mut base = 5u64;
    let mut g = 1u64;
    while e > 0 {
        if e & 1 == 1 {
            g = g * base % two_n;
        }
        base = base * base % two_n;
        e >>= 1;
    }
    g as usize
}

#[derive(Clone, Debug)]
pub struct KeySet {
    pub params: HeParams,
    /// Ternary secret coefficients.
    pub secret: Vec<i64>,
    /// `(b, a)` with `b = -a s + e` over the data primes.
    pub public: (RnsPoly, RnsPoly),
    pub relin: SwitchKey,
    pub rotations: BTreeMap<i64, SwitchKey>,
}

impl KeySet {
    /// Deterministic key generation from `seed`.
    pub fn generate(ctx: &Context, seed: u64, rotation_steps: &BTreeSet<i64>) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let secret = ctx.sample_ternary(&mut rng);
        let full = ctx.basis(ctx.levels(), true);
        let s = ctx.from_signed(&secret, &full);

        let data = ctx.basis(ctx.levels(), false);
        let s_data: RnsPoly = s[..data.len()].to_vec();
        let a = ctx.sample_uniform(&mut rng, &data);
        let e = ctx.from_signed(&ctx.sample_gaussian(&mut rng), &data);
        let mut b = ctx.neg(&ctx.mul(&a, &s_data, &data), &data);
        ctx.add_assign(&mut b, &e, &data);

        let s2 = ctx.mul(&s, &s, &full);
        let relin = switch_key(ctx, &s, &s2, &mut rng);
        let rotations = rotation_steps
            .iter()
            .map(|&step| {
                let g = galois_element(ctx.n, step);
                let rotated = ctx.automorphism(&s, &full, g);
                (step, switch_key(ctx, &s, &rotated, &mut rng))
            })
            .collect();
        KeySet {
            params: ctx.params.clone(),
            secret,
            public: (b, a),
            relin,
            rotations,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC);
        w.bytes(self.params.to_json().as_bytes());
        let secret: Vec<u8> = self.secret.iter().map(|&c| c as i8 as u8).collect();
        w.bytes(&secret);
        write_poly(&mut w, &self.public.0);
        write_poly(&mut w, &self.public.1);
        write_switch(&mut w, &self.relin);
        w.len(self.rotations.len());
        for (step, key) in &self.rotations {
            w.i64(*step);
            write_switch(&mut w, key);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, MAGIC)?;
        let params: HeParams = serde_json::from_slice(r.bytes()?)?;
        params.validate()?;
        let secret: Vec<i64> = r.bytes()?.iter().map(|&b| b as i8 as i64).collect();
        if secret.len() != params.ring_degree {
            return Err(Error::Format(format!(
                "secret has {} coefficients, ring degree is {}",
                secret.len(),
                params.ring_degree
            )));
        }
        let public = (read_poly(&mut r)?, read_poly(&mut r)?);
        let relin = read_switch(&mut r)?;
        let count = r.len()?;
        let mut rotations = BTreeMap::new();
        for _ in 0..count {
            let step = r.i64()?;
            rotations.insert(step, read_switch(&mut r)?);
        }
        r.finish()?;
        Ok(KeySet {
            params,
            secret,
            public,
            relin,
            rotations,
        })
    }
}

/// Key for switching from `target` (under `s`) back to `s`; digit `j`
/// carries `P * target` in residue `j` only.
fn switch_key(ctx: &Context, s: &RnsPoly, target: &RnsPoly, rng: &mut ChaCha20Rng) -> SwitchKey {
    let full = ctx.basis(ctx.levels(), true);
    let special = ctx.primes[ctx.special()];
    let mut bs = Vec::with_capacity(ctx.levels() + 1);
    let mut as_ = Vec::with_capacity(ctx.levels() + 1);
    for j in 0..=ctx.levels() {
        let a = ctx.sample_uniform(rng, &full);
        let e = ctx.from_signed(&ctx.sample_gaussian(rng), &full);
        let mut b = ctx.neg(&ctx.mul(&a, s, &full), &full);
        ctx.add_assign(&mut b, &e, &full);
        let m = ctx.modulus(j);
        let p = m.reduce(special);
        for (x, &t) in b[j].iter_mut().zip(&target[j]) {
            *x = m.add(*x, m.mul(p, t));
        }
        bs.push(b);
        as_.push(a);
    }
    SwitchKey { b: bs, a: as_ }
}

pub(crate) fn write_poly(w: &mut Writer, p: &RnsPoly) {
    w.len(p.len());
    for r in p {
        w.u64s(r);
    }
}

pub(crate) fn read_poly(r: &mut Reader<'_>) -> Result<RnsPoly> {
    let n = r.len()?;
    (0..n).map(|_| r.u64s()).collect()
}

fn write_switch(w: &mut Writer, k: &SwitchKey) {
    w.len(k.b.len());
    for (b, a) in k.b.iter().zip(&k.a) {
        write_poly(w, b);
        write_poly(w, a);
    }
}

fn read_switch(r: &mut Reader<'_>) -> Result<SwitchKey> {
    let n = r.len()?;
    let mut b = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    for _ in 0..n {
        b.push(read_poly(r)?);
        a.push(read_poly(r)?);
    }
    Ok(SwitchKey { b, a })
}
