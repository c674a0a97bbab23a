//! Homomorphic backend contract.
//!
//! Both backends (the CKKS implementation in [`crate::ckks`] and the exact
//! [`sim::SimBackend`]) implement a small set of raw, unchecked primitives.
//! The provided methods of [`HeBackend`] layer the shared contract on top:
//! level and scale alignment, depth accounting, rotation-key closure and
//! operation counting. Engine code only ever calls the provided methods.

use std::collections::BTreeSet;
use std::fmt::Debug;

use crate::error::{Error, Result};

pub mod circuit;
pub mod container;
mod params;
pub mod poly;
mod profile;
pub mod sim;

pub use circuit::{estimate_depth, Circuit, DepthEstimate, NodeId};
pub use params::HeParams;
pub use poly::{aprx_cmp, poly_eval, sign_step_coeffs, PolyStrategy, Threshold, P_CMP};
pub use profile::{OpKind, OpProfile, ProfileScope, Profiler};

/// Relative scale mismatch tolerated by additions.
pub const SCALE_TOLERANCE: f64 = 1.0 / (1u64 << 20) as f64;

/// An encrypted slot vector.
#[derive(Clone, Debug)]
pub struct Ciphertext<P> {
    pub(crate) payload: P,
    pub(crate) level: usize,
    pub(crate) scale: f64,
    pub(crate) slot_count: usize,
}

impl<P> Ciphertext<P> {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn slot_count(&self) -> usize {
        self.slot_count
    }

    pub fn payload(&self) -> &P {
        &self.payload
    }

    pub(crate) fn with_payload(&self, payload: P) -> Self {
        Ciphertext {
            payload,
            level: self.level,
            scale: self.scale,
            slot_count: self.slot_count,
        }
    }
}

/// An encoded, unencrypted slot vector.
#[derive(Clone, Debug)]
pub struct Plaintext<P> {
    pub(crate) payload: P,
    pub(crate) level: usize,
    pub(crate) scale: f64,
}

impl<P> Plaintext<P> {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

pub type Ct<B> = Ciphertext<<B as HeBackend>::CtData>;
pub type Pt<B> = Plaintext<<B as HeBackend>::PtData>;

pub trait HeBackend: Send + Sync {
    type CtData: Clone + Debug + Send + Sync;
    type PtData: Clone + Debug + Send + Sync;

    fn name(&self) -> &'static str;
    fn params(&self) -> &HeParams;
    fn profiler(&self) -> &Profiler;
    /// Rotation steps that have a key, as declared at key generation.
    fn rotation_steps(&self) -> &BTreeSet<i64>;

    /// Scale every ciphertext at `level` is expected to carry.
    fn canonical_scale(&self, level: usize) -> f64;
    /// Modulus divided out when rescaling from `level` to `level - 1`.
    fn rescale_divisor(&self, level: usize) -> f64;

    fn encrypt_raw(&self, values: &[f64], level: usize) -> Result<Self::CtData>;
    fn decrypt_raw(&self, ct: &Ct<Self>) -> Result<Vec<f64>>;
    fn encode_raw(&self, values: &[f64], level: usize, scale: f64) -> Result<Self::PtData>;
    fn decode_raw(&self, pt: &Pt<Self>) -> Result<Vec<f64>>;
    /// Noiseless encryption of a public vector.
    fn trivial_raw(&self, values: &[f64], level: usize, scale: f64) -> Result<Self::CtData>;

    fn add_raw(&self, a: &Self::CtData, b: &Self::CtData) -> Self::CtData;
    fn sub_raw(&self, a: &Self::CtData, b: &Self::CtData) -> Self::CtData;
    fn negate_raw(&self, a: &Self::CtData) -> Self::CtData;
    fn add_plain_raw(&self, a: &Self::CtData, p: &Self::PtData) -> Self::CtData;
    /// Tensor product followed by relinearization; no rescale.
    fn mult_relin_raw(&self, a: &Self::CtData, b: &Self::CtData, level: usize) -> Self::CtData;
    fn mult_plain_raw(&self, a: &Self::CtData, p: &Self::PtData) -> Self::CtData;
    /// Drops the prime at `level`, dividing the payload by it.
    fn rescale_raw(&self, a: &Self::CtData, level: usize) -> Self::CtData;
    /// Applies one key-backed rotation by `step` slots (left).
    fn rotate_raw(&self, a: &Self::CtData, level: usize, step: i64) -> Result<Self::CtData>;
    /// Drops primes without dividing.
    fn mod_switch_raw(&self, a: &Self::CtData, from: usize, to: usize) -> Self::CtData;

    fn serialize_ct(&self, ct: &Ct<Self>) -> Vec<u8>;
    fn deserialize_ct(&self, bytes: &[u8]) -> Result<Ct<Self>>;

    // ---- provided, contract-checked operations ----

    fn slots(&self) -> usize {
        self.params().slots()
    }

    fn top_level(&self) -> usize {
        self.params().levels()
    }

    fn encrypt(&self, values: &[f64]) -> Result<Ct<Self>> {
        self.encrypt_at(values, self.top_level())
    }

    fn encrypt_at(&self, values: &[f64], level: usize) -> Result<Ct<Self>> {
        self.check_capacity(values.len())?;
        self.check_level(level)?;
        Ok(Ciphertext {
            payload: self.encrypt_raw(values, level)?,
            level,
            scale: self.canonical_scale(level),
            slot_count: self.slots(),
        })
    }

    fn decrypt(&self, ct: &Ct<Self>) -> Result<Vec<f64>> {
        self.check_slots(ct.slot_count)?;
        self.decrypt_raw(ct)
    }

    fn encode(&self, values: &[f64], level: usize, scale: f64) -> Result<Pt<Self>> {
        self.check_capacity(values.len())?;
        self.check_level(level)?;
        Ok(Plaintext {
            payload: self.encode_raw(values, level, scale)?,
            level,
            scale,
        })
    }

    fn decode(&self, pt: &Pt<Self>) -> Result<Vec<f64>> {
        self.decode_raw(pt)
    }

    /// Public constant vector lifted to a ciphertext at `level`.
    fn trivial(&self, values: &[f64], level: usize) -> Result<Ct<Self>> {
        self.trivial_scaled(values, level, self.canonical_scale(level))
    }

    fn trivial_scaled(&self, values: &[f64], level: usize, scale: f64) -> Result<Ct<Self>> {
        self.check_capacity(values.len())?;
        self.check_level(level)?;
        Ok(Ciphertext {
            payload: self.trivial_raw(values, level, scale)?,
            level,
            scale,
            slot_count: self.slots(),
        })
    }

    fn add(&self, a: &Ct<Self>, b: &Ct<Self>) -> Result<Ct<Self>> {
        self.check_same(a, b)?;
        self.check_scales(a.scale, b.scale)?;
        self.profiler().count(OpKind::Add);
        self.profiler().levels(a.level, a.level);
        Ok(a.with_payload(self.add_raw(&a.payload, &b.payload)))
    }

    fn sub(&self, a: &Ct<Self>, b: &Ct<Self>) -> Result<Ct<Self>> {
        self.check_same(a, b)?;
        self.check_scales(a.scale, b.scale)?;
        self.profiler().count(OpKind::Add);
        self.profiler().levels(a.level, a.level);
        Ok(a.with_payload(self.sub_raw(&a.payload, &b.payload)))
    }

    fn negate(&self, a: &Ct<Self>) -> Ct<Self> {
        a.with_payload(self.negate_raw(&a.payload))
    }

    fn add_plain(&self, a: &Ct<Self>, p: &Pt<Self>) -> Result<Ct<Self>> {
        if a.level != p.level {
            return Err(Error::Alignment(format!(
                "ciphertext level {} vs plaintext level {}",
                a.level, p.level
            )));
        }
        self.check_scales(a.scale, p.scale)?;
        self.profiler().count(OpKind::AddPlain);
        self.profiler().levels(a.level, a.level);
        Ok(a.with_payload(self.add_plain_raw(&a.payload, &p.payload)))
    }

    /// Adds the same constant to every slot.
    fn add_const(&self, a: &Ct<Self>, c: f64) -> Result<Ct<Self>> {
        let p = self.encode(&vec![c; self.slots()], a.level, a.scale)?;
        self.add_plain(a, &p)
    }

    fn add_vec(&self, a: &Ct<Self>, values: &[f64]) -> Result<Ct<Self>> {
        let p = self.encode(values, a.level, a.scale)?;
        self.add_plain(a, &p)
    }

    /// `c - a` slotwise.
    fn const_sub(&self, c: f64, a: &Ct<Self>) -> Result<Ct<Self>> {
        self.add_const(&self.negate(a), c)
    }

    /// Ciphertext product, relinearized and rescaled; consumes one level.
    fn mult(&self, a: &Ct<Self>, b: &Ct<Self>) -> Result<Ct<Self>> {
        self.check_same(a, b)?;
        self.check_depth(a.level, "ciphertext multiplication")?;
        let prof = self.profiler();
        prof.count(OpKind::MultCt);
        prof.count(OpKind::Relinearize);
        prof.count(OpKind::Rescale);
        prof.levels(a.level, a.level - 1);
        let prod = self.mult_relin_raw(&a.payload, &b.payload, a.level);
        Ok(Ciphertext {
            payload: self.rescale_raw(&prod, a.level),
            level: a.level - 1,
            scale: a.scale * b.scale / self.rescale_divisor(a.level),
            slot_count: a.slot_count,
        })
    }

    /// Ciphertext-plaintext product, rescaled; consumes one level.
    fn mult_plain(&self, a: &Ct<Self>, p: &Pt<Self>) -> Result<Ct<Self>> {
        if a.level != p.level {
            return Err(Error::Alignment(format!(
                "ciphertext level {} vs plaintext level {}",
                a.level, p.level
            )));
        }
        self.check_depth(a.level, "plaintext multiplication")?;
        let prof = self.profiler();
        prof.count(OpKind::MultPlain);
        prof.count(OpKind::Rescale);
        prof.levels(a.level, a.level - 1);
        let prod = self.mult_plain_raw(&a.payload, &p.payload);
        Ok(Ciphertext {
            payload: self.rescale_raw(&prod, a.level),
            level: a.level - 1,
            scale: a.scale * p.scale / self.rescale_divisor(a.level),
            slot_count: a.slot_count,
        })
    }

    /// Plaintext scale that makes a product with `a` land exactly on the
    /// canonical scale of the next level.
    fn product_plain_scale(&self, a: &Ct<Self>) -> f64 {
        self.canonical_scale(a.level.saturating_sub(1)) * self.rescale_divisor(a.level) / a.scale
    }

    fn mult_const(&self, a: &Ct<Self>, c: f64) -> Result<Ct<Self>> {
        self.check_depth(a.level, "plaintext multiplication")?;
        let p = self.encode(&vec![c; self.slots()], a.level, self.product_plain_scale(a))?;
        self.mult_plain(a, &p)
    }

    fn mult_vec(&self, a: &Ct<Self>, values: &[f64]) -> Result<Ct<Self>> {
        self.check_depth(a.level, "plaintext multiplication")?;
        let p = self.encode(values, a.level, self.product_plain_scale(a))?;
        self.mult_plain(a, &p)
    }

    /// Cyclic left rotation by `steps`, composed from the available keys.
    fn rotate(&self, a: &Ct<Self>, steps: i64) -> Result<Ct<Self>> {
        self.check_slots(a.slot_count)?;
        let plan = rotation_plan(self.rotation_steps(), a.slot_count, steps)?;
        let mut payload = a.payload.clone();
        for step in plan {
            payload = self.rotate_raw(&payload, a.level, step)?;
            self.profiler().count(OpKind::Rotate);
            self.profiler().levels(a.level, a.level);
        }
        Ok(a.with_payload(payload))
    }

    /// Lowers `a` to `level` without touching its scale.
    fn mod_switch(&self, a: &Ct<Self>, level: usize) -> Result<Ct<Self>> {
        if level > a.level {
            return Err(Error::Alignment(format!(
                "cannot raise level {} to {}",
                a.level, level
            )));
        }
        if level == a.level {
            return Ok(a.clone());
        }
        Ok(Ciphertext {
            payload: self.mod_switch_raw(&a.payload, a.level, level),
            level,
            scale: a.scale,
            slot_count: a.slot_count,
        })
    }

    /// Mod-switches the higher operand down so both share a level.
    fn align(&self, a: &Ct<Self>, b: &Ct<Self>) -> Result<(Ct<Self>, Ct<Self>)> {
        let l = a.level.min(b.level);
        Ok((self.mod_switch(a, l)?, self.mod_switch(b, l)?))
    }

    fn mult_aligned(&self, a: &Ct<Self>, b: &Ct<Self>) -> Result<Ct<Self>> {
        let (a, b) = self.align(a, b)?;
        self.mult(&a, &b)
    }

    fn add_aligned(&self, a: &Ct<Self>, b: &Ct<Self>) -> Result<Ct<Self>> {
        let (a, b) = self.align(a, b)?;
        self.add(&a, &b)
    }

    // ---- contract checks ----

    fn check_capacity(&self, len: usize) -> Result<()> {
        if len > self.slots() {
            return Err(Error::Capacity {
                len,
                capacity: self.slots(),
            });
        }
        Ok(())
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level > self.top_level() {
            return Err(Error::Params(format!(
                "level {level} above the top of the chain ({})",
                self.top_level()
            )));
        }
        Ok(())
    }

    fn check_slots(&self, slot_count: usize) -> Result<()> {
        if slot_count != self.slots() {
            return Err(Error::Alignment(format!(
                "slot count {slot_count} does not match backend slot count {}",
                self.slots()
            )));
        }
        Ok(())
    }

    fn check_same(&self, a: &Ct<Self>, b: &Ct<Self>) -> Result<()> {
        if a.slot_count != b.slot_count {
            return Err(Error::Alignment(format!(
                "slot counts {} and {}",
                a.slot_count, b.slot_count
            )));
        }
        self.check_slots(a.slot_count)?;
        if a.level != b.level {
            return Err(Error::Alignment(format!(
                "operand levels {} and {}",
                a.level, b.level
            )));
        }
        Ok(())
    }

    fn check_scales(&self, a: f64, b: f64) -> Result<()> {
        if (a - b).abs() > SCALE_TOLERANCE * a.abs().max(b.abs()) {
            return Err(Error::Alignment(format!(
                "scales {a:.6e} and {b:.6e} differ by more than 2^-20 relative"
            )));
        }
        Ok(())
    }

    fn check_depth(&self, level: usize, what: &str) -> Result<()> {
        if level == 0 {
            return Err(Error::DepthExhausted(format!("{what} at level 0")));
        }
        Ok(())
    }
}

/// Default rotation-key set: every signed power of two below the slot count.
pub fn default_rotation_steps(slots: usize) -> BTreeSet<i64> {
    let mut steps = BTreeSet::new();
    let mut k = 1usize;
    while k < slots {
        steps.insert(k as i64);
        steps.insert(-(k as i64));
        k <<= 1;
    }
    steps
}

/// Splits a rotation by `steps` into a sequence of key-backed rotations.
///
/// A direct key is used when present; otherwise the shift is decomposed into
/// powers of two (left shifts first, then the equivalent right shifts).
pub fn rotation_plan(keys: &BTreeSet<i64>, slots: usize, steps: i64) -> Result<Vec<i64>> {
    let s = slots as i64;
    let r = steps.rem_euclid(s);
    if r == 0 {
        return Ok(Vec::new());
    }
    let has = |step: i64| keys.iter().any(|k| k.rem_euclid(s) == step.rem_euclid(s));
    let key_for = |step: i64| {
        *keys
            .iter()
            .find(|k| k.rem_euclid(s) == step.rem_euclid(s))
            .expect("checked by has")
    };
    if has(r) {
        return Ok(vec![key_for(r)]);
    }
    let decompose = |amount: i64, sign: i64| -> Option<Vec<i64>> {
        let mut out = Vec::new();
        let mut bit = 0;
        while (amount >> bit) > 0 {
            if (amount >> bit) & 1 == 1 {
                let step = sign * (1i64 << bit);
                if !has(step) {
                    return None;
                }
                out.push(key_for(step));
            }
            bit += 1;
        }
        Some(out)
    };
    decompose(r, 1)
        .or_else(|| decompose(s - r, -1))
        .ok_or(Error::MissingKey(steps))
}
