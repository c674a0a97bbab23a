//! Exact plaintext stand-in for the CKKS backend.
//!
//! Ciphertexts hold their slot values as `f64` and every operation is the
//! plain floating-point one, so results are bit-for-bit reproducible.
//! Levels, slot counts, rotation keys and operation counts follow the same
//! contract as the real backend; the scale is always `2^scale_bits`.

use std::collections::BTreeSet;

use super::container::{Reader, Writer};
use super::{default_rotation_steps, Ciphertext, Ct, HeBackend, HeParams, Profiler, Pt};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SMCT";

#[derive(Debug)]
pub struct SimBackend {
    params: HeParams,
    rotations: BTreeSet<i64>,
    profiler: Profiler,
}

impl SimBackend {
    /// Simulator with the default power-of-two rotation keys.
    pub fn new(params: HeParams) -> Result<Self> {
        let steps = default_rotation_steps(params.slots());
        Self::with_rotations(params, steps)
    }

    pub fn with_rotations(params: HeParams, rotations: BTreeSet<i64>) -> Result<Self> {
        params.validate()?;
        Ok(SimBackend {
            params,
            rotations,
            profiler: Profiler::new(),
        })
    }

    fn padded(&self, values: &[f64]) -> Vec<f64> {
        let mut v = values.to_vec();
        v.resize(self.slots(), 0.0);
        v
    }
}

impl HeBackend for SimBackend {
    type CtData = Vec<f64>;
    type PtData = Vec<f64>;

    fn name(&self) -> &'static str {
        "sim"
    }

    fn params(&self) -> &HeParams {
        &self.params
    }

    fn profiler(&self) -> &Profiler {
        &self.profiler
    }

    fn rotation_steps(&self) -> &BTreeSet<i64> {
        &self.rotations
    }

    fn canonical_scale(&self, _level: usize) -> f64 {
        self.params.scale()
    }

    fn rescale_divisor(&self, _level: usize) -> f64 {
        self.params.scale()
    }

    fn encrypt_raw(&self, values: &[f64], _level: usize) -> Result<Vec<f64>> {
        Ok(self.padded(values))
    }

    fn decrypt_raw(&self, ct: &Ct<Self>) -> Result<Vec<f64>> {
        Ok(ct.payload.clone())
    }

    fn encode_raw(&self, values: &[f64], _level: usize, _scale: f64) -> Result<Vec<f64>> {
        Ok(self.padded(values))
    }

    fn decode_raw(&self, pt: &Pt<Self>) -> Result<Vec<f64>> {
        Ok(pt.payload.clone())
    }

    fn trivial_raw(&self, values: &[f64], _level: usize, _scale: f64) -> Result<Vec<f64>> {
        Ok(self.padded(values))
    }

    fn add_raw(&self, a: &Vec<f64>, b: &Vec<f64>) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + y).collect()
    }

    fn sub_raw(&self, a: &Vec<f64>, b: &Vec<f64>) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x - y).collect()
    }

    fn negate_raw(&self, a: &Vec<f64>) -> Vec<f64> {
        a.iter().map(|x| -x).collect()
    }

    fn add_plain_raw(&self, a: &Vec<f64>, p: &Vec<f64>) -> Vec<f64> {
        self.add_raw(a, p)
    }

    fn mult_relin_raw(&self, a: &Vec<f64>, b: &Vec<f64>, _level: usize) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x * y).collect()
    }

    fn mult_plain_raw(&self, a: &Vec<f64>, p: &Vec<f64>) -> Vec<f64> {
        self.mult_relin_raw(a, p, 0)
    }

    fn rescale_raw(&self, a: &Vec<f64>, _level: usize) -> Vec<f64> {
        a.clone()
    }

    fn rotate_raw(&self, a: &Vec<f64>, _level: usize, step: i64) -> Result<Vec<f64>> {
        if !self.rotations.contains(&step) {
            return Err(Error::MissingKey(step));
        }
        let mut out = a.clone();
        out.rotate_left(step.rem_euclid(a.len() as i64) as usize);
        Ok(out)
    }

    fn mod_switch_raw(&self, a: &Vec<f64>, _from: usize, _to: usize) -> Vec<f64> {
        a.clone()
    }

    fn serialize_ct(&self, ct: &Ct<Self>) -> Vec<u8> {
        Writer::new(MAGIC)
            .u32(ct.level as u32)
            .f64(ct.scale)
            .u32(ct.slot_count as u32)
            .f64s(&ct.payload)
            .finish()
    }

    fn deserialize_ct(&self, bytes: &[u8]) -> Result<Ct<Self>> {
        let mut r = Reader::new(bytes, MAGIC)?;
        let level = r.u32()? as usize;
        let scale = r.f64()?;
        let slot_count = r.u32()? as usize;
        let payload = r.f64s()?;
        r.finish()?;
        self.check_level(level)?;
        self.check_slots(slot_count)?;
        if payload.len() != slot_count {
            return Err(Error::Format(format!(
                "{} values for {slot_count} slots",
                payload.len()
            )));
        }
        Ok(Ciphertext {
            payload,
            level,
            scale,
            slot_count,
        })
    }
}
