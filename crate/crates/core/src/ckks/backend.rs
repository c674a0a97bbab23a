use std::collections::BTreeSet;
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::context::{Context, RnsPoly};
use super::keys::{galois_element, read_poly, write_poly, KeySet};
use crate::error::{Error, Result};
use crate::he::container::{Reader, Writer};
use crate::he::{default_rotation_steps, Ciphertext, Ct, HeBackend, HeParams, Profiler, Pt};

const MAGIC: &[u8; 4] = b"CKCT";

/// Two-component RLWE ciphertext in NTT form.
#[derive(Clone, Debug)]
pub struct CkksCt {
    pub c0: RnsPoly,
    pub c1: RnsPoly,
}

/// RNS-CKKS with hybrid key switching over a single special prime.
pub struct CkksBackend {
    ctx: Context,
    keys: KeySet,
    s_data: RnsPoly,
    rotations: BTreeSet<i64>,
    profiler: Profiler,
    rng: Mutex<ChaCha20Rng>,
}

impl std::fmt::Debug for CkksBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CkksBackend")
            .field("params", &self.ctx.params)
            .field("rotations", &self.rotations)
            .finish_non_exhaustive()
    }
}

impl CkksBackend {
    /// Generates fresh keys from `seed` with the default rotation set.
    pub fn new(params: HeParams, seed: u64) -> Result<Self> {
        let steps = default_rotation_steps(params.slots());
        Self::with_rotations(params, seed, &steps)
    }

    pub fn with_rotations(
        params: HeParams,
        seed: u64,
        rotation_steps: &BTreeSet<i64>,
    ) -> Result<Self> {
        let ctx = Context::new(&params)?;
        let keys = KeySet::generate(&ctx, seed, rotation_steps);
        Self::assemble(ctx, keys, seed)
    }

    /// Backend around previously generated keys; `seed` drives encryption noise.
    pub fn from_keys(keys: KeySet, seed: u64) -> Result<Self> {
        let ctx = Context::new(&keys.params)?;
        Self::assemble(ctx, keys, seed)
    }

    fn assemble(ctx: Context, keys: KeySet, seed: u64) -> Result<Self> {
        let data = ctx.basis(ctx.levels(), false);
        if keys.public.0.len() != data.len() || keys.relin.b.len() != data.len() {
            return Err(Error::Format(
                "key set does not match the modulus chain".into(),
            ));
        }
        let s_data = ctx.from_signed(&keys.secret, &data);
        let rotations = keys.rotations.keys().copied().collect();
        Ok(CkksBackend {
            ctx,
            keys,
            s_data,
            rotations,
            profiler: Profiler::new(),
            rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15)),
        })
    }

    pub fn keys(&self) -> &KeySet {
        &self.keys
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    fn truncate(p: &RnsPoly, level: usize) -> RnsPoly {
        p[..=level].to_vec()
    }
}

impl HeBackend for CkksBackend {
    type CtData = CkksCt;
    type PtData = RnsPoly;

    fn name(&self) -> &'static str {
        "ckks"
    }

    fn params(&self) -> &HeParams {
        &self.ctx.params
    }

    fn profiler(&self) -> &Profiler {
        &self.profiler
    }

    fn rotation_steps(&self) -> &BTreeSet<i64> {
        &self.rotations
    }

    fn canonical_scale(&self, level: usize) -> f64 {
        self.ctx.canonical[level]
    }

    fn rescale_divisor(&self, level: usize) -> f64 {
        self.ctx.primes[level] as f64
    }

    fn encrypt_raw(&self, values: &[f64], level: usize) -> Result<CkksCt> {
        let ctx = &self.ctx;
        let basis = ctx.basis(level, false);
        let m = ctx.encode(values, level, ctx.canonical[level])?;
        let mut rng = self.rng.lock().expect("rng lock");
        let u = ctx.from_signed(&ctx.sample_ternary(&mut *rng), &basis);
        let e0 = ctx.from_signed(&ctx.sample_gaussian(&mut *rng), &basis);
        let e1 = ctx.from_signed(&ctx.sample_gaussian(&mut *rng), &basis);
        drop(rng);
        let pb = Self::truncate(&self.keys.public.0, level);
        let pa = Self::truncate(&self.keys.public.1, level);
        let mut c0 = ctx.mul(&pb, &u, &basis);
        ctx.add_assign(&mut c0, &e0, &basis);
        ctx.add_assign(&mut c0, &m, &basis);
        let mut c1 = ctx.mul(&pa, &u, &basis);
        ctx.add_assign(&mut c1, &e1, &basis);
        Ok(CkksCt { c0, c1 })
    }

    fn decrypt_raw(&self, ct: &Ct<Self>) -> Result<Vec<f64>> {
        let m = self.ctx.modulus(0);
        let r: Vec<u64> = ct.payload.c0[0]
            .iter()
            .zip(&ct.payload.c1[0])
            .zip(&self.s_data[0])
            .map(|((&a, &b), &s)| m.add(a, m.mul(b, s)))
            .collect();
        Ok(self.ctx.decode_base(&r, ct.scale))
    }

    fn encode_raw(&self, values: &[f64], level: usize, scale: f64) -> Result<RnsPoly> {
        self.ctx.encode(values, level, scale)
    }

    fn decode_raw(&self, pt: &Pt<Self>) -> Result<Vec<f64>> {
        Ok(self.ctx.decode_base(&pt.payload[0], pt.scale))
    }

    fn trivial_raw(&self, values: &[f64], level: usize, scale: f64) -> Result<CkksCt> {
        Ok(CkksCt {
            c0: self.ctx.encode(values, level, scale)?,
            c1: self.ctx.zero(level + 1),
        })
    }

    fn add_raw(&self, a: &CkksCt, b: &CkksCt) -> CkksCt {
        let basis = self.ctx.basis(a.c0.len() - 1, false);
        let mut out = a.clone();
        self.ctx.add_assign(&mut out.c0, &b.c0, &basis);
        self.ctx.add_assign(&mut out.c1, &b.c1, &basis);
        out
    }

    fn sub_raw(&self, a: &CkksCt, b: &CkksCt) -> CkksCt {
        let basis = self.ctx.basis(a.c0.len() - 1, false);
        let mut out = a.clone();
        self.ctx.sub_assign(&mut out.c0, &b.c0, &basis);
        self.ctx.sub_assign(&mut out.c1, &b.c1, &basis);
        out
    }

    fn negate_raw(&self, a: &CkksCt) -> CkksCt {
        let basis = self.ctx.basis(a.c0.len() - 1, false);
        CkksCt {
            c0: self.ctx.neg(&a.c0, &basis),
            c1: self.ctx.neg(&a.c1, &basis),
        }
    }

    fn add_plain_raw(&self, a: &CkksCt, p: &RnsPoly) -> CkksCt {
        let basis = self.ctx.basis(a.c0.len() - 1, false);
        let mut out = a.clone();
        self.ctx.add_assign(&mut out.c0, p, &basis);
        out
    }

    fn mult_relin_raw(&self, a: &CkksCt, b: &CkksCt, level: usize) -> CkksCt {
        let ctx = &self.ctx;
        let basis = ctx.basis(level, false);
        let mut d0 = ctx.mul(&a.c0, &b.c0, &basis);
        let mut d1 = ctx.mul(&a.c0, &b.c1, &basis);
        ctx.mul_acc(&mut d1, &a.c1, &b.c0, &basis);
        let d2 = ctx.mul(&a.c1, &b.c1, &basis);
        let (k0, k1) = ctx.key_switch(&d2, level, &self.keys.relin);
        ctx.add_assign(&mut d0, &k0, &basis);
        ctx.add_assign(&mut d1, &k1, &basis);
        CkksCt { c0: d0, c1: d1 }
    }

    fn mult_plain_raw(&self, a: &CkksCt, p: &RnsPoly) -> CkksCt {
        let basis = self.ctx.basis(a.c0.len() - 1, false);
        CkksCt {
            c0: self.ctx.mul(&a.c0, p, &basis),
            c1: self.ctx.mul(&a.c1, p, &basis),
        }
    }

    fn rescale_raw(&self, a: &CkksCt, level: usize) -> CkksCt {
        CkksCt {
            c0: self.ctx.rescale(&a.c0, level),
            c1: self.ctx.rescale(&a.c1, level),
        }
    }

    fn rotate_raw(&self, a: &CkksCt, level: usize, step: i64) -> Result<CkksCt> {
        let key = self
            .keys
            .rotations
            .get(&step)
            .ok_or(Error::MissingKey(step))?;
        let ctx = &self.ctx;
        let basis = ctx.basis(level, false);
        let g = galois_element(ctx.n, step);
        let mut c0 = ctx.automorphism(&a.c0, &basis, g);
        let c1 = ctx.automorphism(&a.c1, &basis, g);
        let (k0, k1) = ctx.key_switch(&c1, level, key);
        ctx.add_assign(&mut c0, &k0, &basis);
        Ok(CkksCt { c0, c1: k1 })
    }

    fn mod_switch_raw(&self, a: &CkksCt, _from: usize, to: usize) -> CkksCt {
        CkksCt {
            c0: Self::truncate(&a.c0, to),
            c1: Self::truncate(&a.c1, to),
        }
    }

    fn serialize_ct(&self, ct: &Ct<Self>) -> Vec<u8> {
        let mut w = Writer::new(MAGIC);
        w.u32(ct.level as u32)
            .f64(ct.scale)
            .u32(ct.slot_count as u32);
        write_poly(&mut w, &ct.payload.c0);
        write_poly(&mut w, &ct.payload.c1);
        w.finish()
    }

    fn deserialize_ct(&self, bytes: &[u8]) -> Result<Ct<Self>> {
        let mut r = Reader::new(bytes, MAGIC)?;
        let level = r.u32()? as usize;
        let scale = r.f64()?;
        let slot_count = r.u32()? as usize;
        let c0 = read_poly(&mut r)?;
        let c1 = read_poly(&mut r)?;
        r.finish()?;
        self.check_level(level)?;
        self.check_slots(slot_count)?;
        let n = self.ctx.n;
        for p in [&c0, &c1] {
            if p.len() != level + 1 || p.iter().any(|res| res.len() != n) {
                return Err(Error::Format(format!(
                    "ciphertext polynomial shape does not match level {level}"
                )));
            }
        }
        Ok(Ciphertext {
            payload: CkksCt { c0, c1 },
            level,
            scale,
            slot_count,
        })
    }
}
