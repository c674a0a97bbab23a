use serde::{Deserialize, Serialize};

use super::{Ct, HeBackend};
use crate::error::{Error, Result};

/// Soft step on [-1, 1]: `-0.25 x^3 + 0.75 x + 0.5`, low-to-high degree.
pub const P_CMP: [f64; 4] = [0.5, 0.75, 0.0, -0.25];

/// `2 * P_CMP(x) - 1`, the odd sign-form of the same cubic. Composing it
/// sharpens the step while keeping the fixed points at -1, 0 and 1.
pub fn sign_step_coeffs() -> [f64; 4] {
    [0.0, 1.5, 0.0, -0.5]
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolyStrategy {
    #[default]
    Horner,
    PatersonStockmeyer,
}

/// Comparison threshold, either public or encrypted.
pub enum Threshold<'a, C> {
    Plain(f64),
    Enc(&'a C),
}

/// Degree after dropping trailing zero coefficients.
pub fn effective_degree(coeffs: &[f64]) -> usize {
    coeffs.iter().rposition(|c| *c != 0.0).unwrap_or(0)
}

/// Levels consumed by evaluating a degree-`degree` polynomial.
pub fn poly_depth(degree: usize, strategy: PolyStrategy) -> usize {
    match strategy {
        PolyStrategy::Horner => degree,
        PolyStrategy::PatersonStockmeyer => {
            if degree < 3 {
                return degree;
            }
            let (baby, giants) = ps_split(degree);
            let q_depth = ceil_log2(baby - 1) + 1;
            let y_depth = ceil_log2(baby);
            let mut acc = q_depth;
            for _ in 1..giants {
                acc = acc.max(y_depth) + 1;
            }
            acc
        }
    }
}

/// Levels consumed by one `aprx_cmp` call.
pub fn cmp_depth(sharpen: usize, strategy: PolyStrategy) -> usize {
    1 + sharpen * poly_depth(3, strategy)
}

fn ceil_log2(x: usize) -> usize {
    if x <= 1 {
        0
    } else {
        (usize::BITS - (x - 1).leading_zeros()) as usize
    }
}

fn ps_split(degree: usize) -> (usize, usize) {
    let terms = degree + 1;
    let mut baby = (terms as f64).sqrt().ceil() as usize;
    baby = baby.max(2);
    (baby, terms.div_ceil(baby))
}

/// Evaluates `sum_j coeffs[j] * x^j` slotwise.
pub fn poly_eval<B: HeBackend>(
    be: &B,
    coeffs: &[f64],
    x: &Ct<B>,
    strategy: PolyStrategy,
) -> Result<Ct<B>> {
    let degree = effective_degree(coeffs);
    let needed = poly_depth(degree, strategy);
    if x.level() < needed {
        return Err(Error::DepthExhausted(format!(
            "degree-{degree} polynomial needs {needed} levels, input is at level {}",
            x.level()
        )));
    }
    let c0 = coeffs.first().copied().unwrap_or(0.0);
    if degree == 0 {
        return be.trivial(&vec![c0; be.slots()], x.level());
    }
    match strategy {
        PolyStrategy::PatersonStockmeyer if degree >= 3 => {
            paterson_stockmeyer(be, coeffs, degree, x)
        }
        _ => horner(be, &coeffs[..=degree], x),
    }
}

fn horner<B: HeBackend>(be: &B, coeffs: &[f64], x: &Ct<B>) -> Result<Ct<B>> {
    let k = coeffs.len() - 1;
    let top = x.level();
    // x at each level the accumulator will visit
    let mut xs = Vec::with_capacity(k);
    xs.push(x.clone());
    for j in 1..k {
        xs.push(be.mod_switch(x, top - j)?);
    }
    // Pick the leading coefficient's scale so the result lands exactly on
    // the canonical scale of its final level.
    let mut lead_scale = be.canonical_scale(top - k);
    for (j, xj) in xs.iter().enumerate() {
        lead_scale *= be.rescale_divisor(top - j) / xj.scale();
    }
    let mut acc = be.trivial_scaled(&vec![coeffs[k]; be.slots()], top, lead_scale)?;
    for (j, xj) in xs.iter().enumerate() {
        acc = be.mult(&acc, xj)?;
        let c = coeffs[k - 1 - j];
        if c != 0.0 {
            acc = be.add_const(&acc, c)?;
        }
    }
    Ok(acc)
}

fn paterson_stockmeyer<B: HeBackend>(
    be: &B,
    coeffs: &[f64],
    degree: usize,
    x: &Ct<B>,
) -> Result<Ct<B>> {
    let (baby, giants) = ps_split(degree);
    // powers[j] = x^j for j in 1..=baby, each by a balanced product
    let mut powers: Vec<Option<Ct<B>>> = vec![None; baby + 1];
    powers[1] = Some(x.clone());
    for j in 2..=baby {
        let lo = j / 2;
        let hi = j - lo;
        let a = powers[lo].clone().expect("lower power computed");
        let b = powers[hi].clone().expect("lower power computed");
        powers[j] = Some(be.mult_aligned(&a, &b)?);
    }
    let q_level = x.level() - (ceil_log2(baby - 1) + 1);
    let block = |i: usize| -> Result<Ct<B>> {
        let base = i * baby;
        let c0 = coeffs.get(base).copied().unwrap_or(0.0);
        let mut acc: Option<Ct<B>> = None;
        for j in 1..baby {
            let c = coeffs.get(base + j).copied().unwrap_or(0.0);
            if c == 0.0 || base + j > degree {
                continue;
            }
            let p = powers[j].as_ref().expect("power computed");
            let p = be.mod_switch(p, q_level + 1)?;
            let term = be.mult_const(&p, c)?;
            acc = Some(match acc {
                None => term,
                Some(a) => be.add(&a, &term)?,
            });
        }
        match acc {
            None => be.trivial(&vec![c0; be.slots()], q_level),
            Some(a) if c0 != 0.0 => be.add_const(&a, c0),
            Some(a) => Ok(a),
        }
    };
    let y = powers[baby].clone().expect("giant power computed");
    let mut acc = block(giants - 1)?;
    for i in (0..giants - 1).rev() {
        acc = be.mult_aligned(&acc, &y)?;
        let q = be.mod_switch(&block(i)?, acc.level())?;
        acc = be.add(&acc, &q)?;
    }
    Ok(acc)
}

/// Approximate `s >= tau` slotwise: ~1 above, ~0 below, 0.5 at equality.
///
/// The difference is normalized by one plaintext multiplication with
/// `1 / delta`; `sharpen - 1` sign-step compositions precede the final
/// soft step.
pub fn aprx_cmp<B: HeBackend>(
    be: &B,
    s: &Ct<B>,
    tau: Threshold<'_, Ct<B>>,
    delta: f64,
    sharpen: usize,
    strategy: PolyStrategy,
) -> Result<Ct<B>> {
    if sharpen == 0 {
        return Err(Error::Params("sharpen must be >= 1".into()));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Params(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let needed = cmp_depth(sharpen, strategy);
    if s.level() < needed {
        return Err(Error::DepthExhausted(format!(
            "comparison with sharpen={sharpen} needs {needed} levels, scores are at level {}",
            s.level()
        )));
    }
    let diff = match tau {
        Threshold::Plain(t) => be.add_const(s, -t)?,
        Threshold::Enc(t) => {
            let (a, b) = be.align(s, t)?;
            be.sub(&a, &b)?
        }
    };
    let mut x = be.mult_const(&diff, 1.0 / delta)?;
    for _ in 1..sharpen {
        x = poly_eval(be, &sign_step_coeffs(), &x, strategy)?;
    }
    poly_eval(be, &P_CMP, &x, strategy)
}

/// Plaintext mirror of [`aprx_cmp`] on one value, same operation order.
pub fn cmp_plain(s: f64, tau: f64, delta: f64, sharpen: usize) -> f64 {
    let mut x = (s + (-tau)) * (1.0 / delta);
    for _ in 1..sharpen {
        x = horner_plain(&sign_step_coeffs(), x);
    }
    horner_plain(&P_CMP, x)
}

/// Plaintext Horner in the exact operation order of the homomorphic one.
pub fn horner_plain(coeffs: &[f64], x: f64) -> f64 {
    let degree = effective_degree(coeffs);
    if degree == 0 {
        return coeffs.first().copied().unwrap_or(0.0);
    }
    let mut acc = coeffs[degree];
    for j in (0..degree).rev() {
        acc *= x;
        if coeffs[j] != 0.0 {
            acc += coeffs[j];
        }
    }
    acc
}
