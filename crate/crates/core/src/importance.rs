//! Encrypted degree scoring and partitioning of nodes into importance bands.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EncGraph, PlainGraph};
use crate::he::poly::cmp_plain;
use crate::he::{aprx_cmp, Ct, HeBackend, PolyStrategy, Threshold};

/// Strictly decreasing degree thresholds `tau_1 > ... > tau_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Thresholds(Vec<f64>);

impl Thresholds {
    pub fn new(tau: Vec<f64>) -> Result<Self> {
        if tau.is_empty() {
            return Err(Error::Params("at least one threshold is required".into()));
        }
        if tau.iter().any(|t| !t.is_finite()) {
            return Err(Error::Params("thresholds must be finite".into()));
        }
        if let Some(w) = tau.windows(2).find(|w| w[0] <= w[1]) {
            return Err(Error::Params(format!(
                "thresholds must be strictly decreasing, got {} then {}",
                w[0], w[1]
            )));
        }
        Ok(Thresholds(tau))
    }

    pub fn m(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `tau_i` for `i` in `1..=m`.
    pub fn tau(&self, i: usize) -> f64 {
        self.0[i - 1]
    }

    pub fn lowest(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    /// Thresholds that prune about `ratio` of the nodes by degree quantile and
    /// split the retained nodes into `m` bands of roughly equal size.
    ///
    /// Each threshold sits halfway between the two sorted degrees around the
    /// cut, so tied degrees stay on the same side.
    pub fn from_ratio(degrees: &[f64], ratio: f64, m: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::Params(format!(
                "pruning ratio {ratio} is not in [0, 1]"
            )));
        }
        if m == 0 || degrees.is_empty() {
            return Err(Error::Params("need m >= 1 and a nonempty graph".into()));
        }
        let mut sorted = degrees.to_vec();
        sorted.sort_by(f64::total_cmp);
        let cut = |s: &[f64], k: usize| -> f64 {
            if k == 0 {
                s[0] - 0.5
            } else if k >= s.len() {
                s[s.len() - 1] + 0.5
            } else {
                0.5 * (s[k - 1] + s[k])
            }
        };
        let n = sorted.len();
        let k = ((ratio * n as f64).round() as usize).min(n);
        let lowest = cut(&sorted, k);
        let retained: Vec<f64> = sorted.iter().copied().filter(|&d| d >= lowest).collect();
        let mut tau = vec![0.0; m];
        tau[m - 1] = lowest;
        for j in 1..m {
            let idx = (j as f64 * retained.len() as f64 / m as f64).round() as usize;
            let t = if retained.is_empty() {
                lowest
            } else {
                cut(&retained, idx)
            };
            tau[m - 1 - j] = t.max(lowest);
        }
        for i in (0..m - 1).rev() {
            if tau[i] <= tau[i + 1] {
                tau[i] = tau[i + 1] + 0.5;
            }
        }
        Self::new(tau)
    }
}

impl TryFrom<Vec<f64>> for Thresholds {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Thresholds> for Vec<f64> {
    fn from(t: Thresholds) -> Self {
        t.0
    }
}

/// Which comparisons and masks to derive from the scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskPlan {
    /// `M0` and `M1..Mm`.
    Full,
    /// `M0` only; one comparison against `tau_m`.
    PruneOnly,
    /// No prune mask: nodes below `tau_{m-1}` all fall into band `m`.
    Merged,
}

/// Encrypted masks, one ciphertext per layout block.
pub struct MaskSet<B: HeBackend> {
    pub m0: Option<Vec<Ct<B>>>,
    /// `levels[i - 1][b]` is `M_i` of block `b`.
    pub levels: Vec<Vec<Ct<B>>>,
}

impl<B: HeBackend> Clone for MaskSet<B> {
    fn clone(&self) -> Self {
        MaskSet {
            m0: self.m0.clone(),
            levels: self.levels.clone(),
        }
    }
}

impl<B: HeBackend> MaskSet<B> {
    pub fn m(&self) -> usize {
        self.levels.len()
    }

    pub fn ciphertext_count(&self) -> usize {
        self.m0.iter().chain(&self.levels).map(Vec::len).sum()
    }
}

/// Plaintext masks, one value per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlainMasks {
    pub m0: Vec<f64>,
    pub levels: Vec<Vec<f64>>,
}

impl PlainMasks {
    pub fn m(&self) -> usize {
        self.levels.len()
    }

    pub fn n(&self) -> usize {
        self.m0.len()
    }

    /// Band of node `v` under hard masks: `0` for pruned, else `1..=m`.
    pub fn band(&self, v: usize) -> usize {
        self.levels
            .iter()
            .position(|l| l[v] >= 0.5)
            .map_or(0, |i| i + 1)
    }

    pub fn retained(&self) -> Vec<usize> {
        (0..self.n()).filter(|&v| self.m0[v] < 0.5).collect()
    }

    pub fn pruned(&self) -> Vec<usize> {
        (0..self.n()).filter(|&v| self.m0[v] >= 0.5).collect()
    }

    /// Band sizes `|level_1|, ..., |level_m|`.
    pub fn band_sizes(&self) -> Vec<usize> {
        self.levels
            .iter()
            .map(|l| l.iter().filter(|&&x| x >= 0.5).count())
            .collect()
    }

    /// Same partition with the pruned band folded into band `m`.
    pub fn merged(&self) -> PlainMasks {
        let mut levels = self.levels.clone();
        let m = levels.len();
        for (v, &p) in self.m0.iter().enumerate() {
            levels[m - 1][v] += p;
        }
        PlainMasks {
            m0: vec![0.0; self.n()],
            levels,
        }
    }
}

/// `s_v = sum_u A[v, u]` as `sum_d diag_d(A) * rot(1, d)`, one ciphertext per block.
pub fn encrypted_degree<B: HeBackend>(be: &B, g: &EncGraph<B>) -> Result<Vec<Ct<B>>> {
    let layout = g.layout;
    let mut rotated_ones = Vec::with_capacity(layout.blocks);
    for c in 0..layout.blocks {
        let shifts = match &g.ones {
            Some(ones) => OnesShifts::Enc(rotations(be, &ones[c], layout.width)?),
            None => OnesShifts::Plain(plain_rotations(&g.ones_values(c), layout.width)),
        };
        rotated_ones.push(shifts);
    }
    let mut scores = Vec::with_capacity(layout.blocks);
    for r in 0..layout.blocks {
        let mut acc: Option<Ct<B>> = None;
        for (c, shifts) in rotated_ones.iter().enumerate() {
            for d in 0..layout.width {
                let diag = &g.adj[r][c][d];
                let term = match shifts {
                    OnesShifts::Enc(cts) => be.mult_aligned(diag, &cts[d])?,
                    OnesShifts::Plain(vals) => be.mult_vec(diag, &vals[d])?,
                };
                acc = Some(match acc {
                    None => term,
                    Some(a) => be.add(&a, &term)?,
                });
            }
        }
        scores.push(acc.expect("at least one diagonal"));
    }
    Ok(scores)
}

enum OnesShifts<C> {
    Enc(Vec<C>),
    Plain(Vec<Vec<f64>>),
}

/// `[x, rot(x, 1), ..., rot(x, count - 1)]` by repeated single-step rotations.
pub fn rotations<B: HeBackend>(be: &B, x: &Ct<B>, count: usize) -> Result<Vec<Ct<B>>> {
    let mut out = Vec::with_capacity(count);
    out.push(x.clone());
    for d in 1..count {
        let next = be.rotate(&out[d - 1], 1)?;
        out.push(next);
    }
    Ok(out)
}

fn plain_rotations(x: &[f64], count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|d| {
            let mut v = x.to_vec();
            v.rotate_left(d % x.len().max(1));
            v
        })
        .collect()
}

/// Masks from encrypted scores under `plan`; every comparison runs once.
#[allow(clippy::too_many_arguments)]
pub fn masks_with_plan<B: HeBackend>(
    be: &B,
    scores: &[Ct<B>],
    tau: &Thresholds,
    delta: f64,
    sharpen: usize,
    strategy: PolyStrategy,
    plan: MaskPlan,
) -> Result<MaskSet<B>> {
    let m = tau.m();
    let compared: Vec<usize> = match plan {
        MaskPlan::Full => (1..=m).collect(),
        MaskPlan::PruneOnly => vec![m],
        MaskPlan::Merged => (1..m).collect(),
    };
    // cmp[i] = AprxCmp(s, tau_i) per block
    let mut cmp: Vec<Option<Vec<Ct<B>>>> = vec![None; m + 1];
    for &i in &compared {
        cmp[i] = Some(
            scores
                .iter()
                .map(|s| {
                    aprx_cmp(
                        be,
                        s,
                        Threshold::Plain(tau.tau(i)),
                        delta,
                        sharpen,
                        strategy,
                    )
                })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let complement =
        |c: &[Ct<B>]| -> Result<Vec<Ct<B>>> { c.iter().map(|x| be.const_sub(1.0, x)).collect() };
    let m0 = match plan {
        MaskPlan::Merged => None,
        _ => Some(complement(cmp[m].as_ref().expect("lowest comparison"))?),
    };
    let band = |i: usize| -> Result<Vec<Ct<B>>> {
        let ci = cmp[i].as_ref().expect("comparison computed");
        if i == 1 {
            return Ok(ci.clone());
        }
        let above = complement(cmp[i - 1].as_ref().expect("comparison computed"))?;
        ci.iter()
            .zip(&above)
            .map(|(c, a)| be.mult_aligned(c, a))
            .collect()
    };
    let levels = match plan {
        MaskPlan::Full => (1..=m).map(band).collect::<Result<Vec<_>>>()?,
        MaskPlan::PruneOnly => Vec::new(),
        MaskPlan::Merged => {
            let mut l = (1..m).map(band).collect::<Result<Vec<_>>>()?;
            if m > 1 {
                l.push(complement(
                    cmp[m - 1].as_ref().expect("comparison computed"),
                )?);
            }
            l
        }
    };
    Ok(MaskSet { m0, levels })
}

/// `M0 = 1 - c_m`, `M1 = c_1`, `M_i = c_i * (1 - c_{i-1})`.
pub fn generate_masks<B: HeBackend>(
    be: &B,
    scores: &[Ct<B>],
    tau: &Thresholds,
    delta: f64,
    sharpen: usize,
    strategy: PolyStrategy,
) -> Result<MaskSet<B>> {
    masks_with_plan(be, scores, tau, delta, sharpen, strategy, MaskPlan::Full)
}

/// Hard masks: band `i` iff `tau_i <= s < tau_{i-1}`, pruned iff `s < tau_m`.
pub fn oracle_masks_from_scores(scores: &[f64], tau: &Thresholds) -> PlainMasks {
    let m = tau.m();
    let mut m0 = vec![0.0; scores.len()];
    let mut levels = vec![vec![0.0; scores.len()]; m];
    for (v, &s) in scores.iter().enumerate() {
        match (1..=m).find(|&i| s >= tau.tau(i)) {
            Some(i) => levels[i - 1][v] = 1.0,
            None => m0[v] = 1.0,
        }
    }
    PlainMasks { m0, levels }
}

pub fn oracle_masks(g: &PlainGraph, tau: &Thresholds) -> PlainMasks {
    oracle_masks_from_scores(&g.degrees(), tau)
}

/// Plaintext mirror of [`masks_with_plan`] with the soft comparison, in the
/// same floating-point operation order.
pub fn soft_masks(
    scores: &[f64],
    tau: &Thresholds,
    delta: f64,
    sharpen: usize,
    plan: MaskPlan,
) -> PlainMasks {
    let m = tau.m();
    let n = scores.len();
    let cmp = |i: usize| -> Vec<f64> {
        scores
            .iter()
            .map(|&s| cmp_plain(s, tau.tau(i), delta, sharpen))
            .collect()
    };
    let complement = |c: &[f64]| -> Vec<f64> { c.iter().map(|&x| -x + 1.0).collect() };
    let c: Vec<Option<Vec<f64>>> = (0..=m)
        .map(|i| {
            let used = match plan {
                MaskPlan::Full => i >= 1,
                MaskPlan::PruneOnly => i == m,
                MaskPlan::Merged => i >= 1 && i < m,
            };
            used.then(|| cmp(i))
        })
        .collect();
    let band = |i: usize| -> Vec<f64> {
        let ci = c[i].as_ref().expect("comparison");
        if i == 1 {
            return ci.clone();
        }
        let above = complement(c[i - 1].as_ref().expect("comparison"));
        ci.iter().zip(&above).map(|(x, a)| x * a).collect()
    };
    let m0 = match plan {
        MaskPlan::Merged => vec![0.0; n],
        _ => complement(c[m].as_ref().expect("comparison")),
    };
    let levels = match plan {
        MaskPlan::Full => (1..=m).map(band).collect(),
        MaskPlan::PruneOnly => Vec::new(),
        MaskPlan::Merged => {
            let mut l: Vec<Vec<f64>> = (1..m).map(band).collect();
            l.push(if m > 1 {
                complement(c[m - 1].as_ref().expect("comparison"))
            } else {
                vec![1.0; n]
            });
            l
        }
    };
    PlainMasks { m0, levels }
}
