//! Encrypted GCN inference with pruning and adaptive activations.
//!
//! Protocol mode keeps the server oblivious: pruning multiplies by the
//! encrypted keep mask and every band polynomial runs on every slot.
//! Compaction mode is an experiment harness: given the plaintext partition it
//! drops pruned nodes physically and evaluates only each node's own band
//! polynomial, so op counts track the work the pruning saves.

mod plan;
mod polys;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EncGraph, LayerWeights, Layout, ModelWeights};
use crate::he::{poly_eval, Ct, DepthEstimate, HeBackend, OpProfile, PolyStrategy};
use crate::importance::{
    encrypted_degree, masks_with_plan, rotations, MaskPlan, MaskSet, PlainMasks, Thresholds,
};

pub use plan::{plan_circuit, PlanInput};
pub use polys::{Poly, PolyActivationSet, PolyPreset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Masks, pruning and adaptive activation.
    Ff,
    /// Pruning with one uniform activation.
    Po,
    /// Adaptive activation without pruning.
    Aao,
    /// Uniform activation, no masks.
    Bfg,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Bfg, Variant::Po, Variant::Aao, Variant::Ff];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ff => "FF",
            Variant::Po => "PO",
            Variant::Aao => "AAO",
            Variant::Bfg => "BFG",
        }
    }

    pub fn prunes(self) -> bool {
        matches!(self, Variant::Ff | Variant::Po)
    }

    pub fn adaptive(self) -> bool {
        matches!(self, Variant::Ff | Variant::Aao)
    }

    pub fn mask_plan(self) -> Option<MaskPlan> {
        match self {
            Variant::Ff => Some(MaskPlan::Full),
            Variant::Po => Some(MaskPlan::PruneOnly),
            Variant::Aao => Some(MaskPlan::Merged),
            Variant::Bfg => None,
        }
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ff" => Ok(Variant::Ff),
            "po" => Ok(Variant::Po),
            "aao" => Ok(Variant::Aao),
            "bfg" => Ok(Variant::Bfg),
            other => Err(Error::Params(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Protocol,
    Compaction,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskSource {
    /// Encrypted degree scoring and approximate comparisons.
    #[default]
    Computed,
    /// Freshly encrypted hard masks supplied by the experiment harness.
    Oracle,
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub variant: Variant,
    pub thresholds: Thresholds,
    /// Comparison normalization; defaults to the node count.
    pub delta: Option<f64>,
    pub sharpen: usize,
    pub strategy: PolyStrategy,
    pub polys: PolyActivationSet,
    /// Activation for PO and BFG; defaults to the highest-degree band polynomial.
    pub uniform: Option<Poly>,
    pub mode: Mode,
    pub mask_source: MaskSource,
}

impl EngineConfig {
    pub fn new(variant: Variant, thresholds: Thresholds, polys: PolyActivationSet) -> Self {
        EngineConfig {
            variant,
            thresholds,
            delta: None,
            sharpen: 1,
            strategy: PolyStrategy::Horner,
            polys,
            uniform: None,
            mode: Mode::Protocol,
            mask_source: MaskSource::Computed,
        }
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        EngineConfig {
            variant,
            ..self.clone()
        }
    }

    pub fn uniform_poly(&self) -> &Poly {
        self.uniform.as_ref().unwrap_or_else(|| self.polys.level(1))
    }

    pub fn delta_for(&self, n: usize) -> f64 {
        self.delta.unwrap_or(n as f64)
    }

    fn validate(&self) -> Result<()> {
        if self.sharpen == 0 {
            return Err(Error::Params("sharpen must be >= 1".into()));
        }
        if self.variant.adaptive() && self.polys.m() != self.thresholds.m() {
            return Err(Error::Params(format!(
                "{} thresholds but {} activation polynomials",
                self.thresholds.m(),
                self.polys.m()
            )));
        }
        Ok(())
    }
}

/// Where a node's logits live in the output.
#[derive(Clone, Debug, PartialEq)]
pub enum NodeSlot {
    Block {
        block: usize,
        offset: usize,
    },
    /// Removed by compaction; the logits are the last-layer bias.
    Constant(Vec<f64>),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageProfile {
    pub name: String,
    pub profile: OpProfile,
}

pub struct InferenceOutput<B: HeBackend> {
    pub layout: Layout,
    /// `logits[k][b]`: class `k` of block `b`.
    pub logits: Vec<Vec<Ct<B>>>,
    pub nodes: Vec<NodeSlot>,
    pub profile: OpProfile,
    pub stages: Vec<StageProfile>,
    pub depth: DepthEstimate,
}

impl<B: HeBackend> InferenceOutput<B> {
    /// Decrypted `n x classes` logits.
    pub fn decrypt_logits(&self, be: &B) -> Result<Vec<Vec<f64>>> {
        let plain = self
            .logits
            .iter()
            .map(|col| {
                col.iter()
                    .map(|ct| be.decrypt(ct))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self
            .nodes
            .iter()
            .map(|slot| match slot {
                NodeSlot::Block { block, offset } => {
                    plain.iter().map(|col| col[*block][*offset]).collect()
                }
                NodeSlot::Constant(v) => v.clone(),
            })
            .collect())
    }

    /// Counts summed over every stage whose name ends with `suffix`.
    pub fn stage_total(&self, suffix: &str) -> OpProfile {
        let mut acc = OpProfile::default();
        for s in self.stages.iter().filter(|s| s.name.ends_with(suffix)) {
            add_profile(&mut acc, &s.profile);
        }
        acc
    }

    pub fn activation_profile(&self) -> OpProfile {
        self.stage_total(".activation")
    }
}

fn add_profile(acc: &mut OpProfile, p: &OpProfile) {
    acc.add += p.add;
    acc.add_plain += p.add_plain;
    acc.mult_ct += p.mult_ct;
    acc.mult_plain += p.mult_plain;
    acc.rotate += p.rotate;
    acc.rescale += p.rescale;
    acc.relinearize += p.relinearize;
    acc.wall_time_ms += p.wall_time_ms;
}

/// Column-major activations: `cols[j][b]`.
pub type EncActivations<B> = Vec<Vec<Ct<B>>>;

/// `X' = keep * X` per column and `A'_d = (diag_d * keep) * rot(keep, d)` with
/// `keep = 1 - M0`.
pub fn apply_prune<B: HeBackend>(be: &B, g: &EncGraph<B>, m0: &[Ct<B>]) -> Result<EncGraph<B>> {
    let keep = m0
        .iter()
        .map(|m| be.const_sub(1.0, m))
        .collect::<Result<Vec<_>>>()?;
    apply_keep(be, g, &keep)
}

pub fn apply_keep<B: HeBackend>(be: &B, g: &EncGraph<B>, keep: &[Ct<B>]) -> Result<EncGraph<B>> {
    let layout = g.layout;
    check_blocks(keep.len(), layout.blocks, "keep mask")?;
    let features = g
        .features
        .iter()
        .map(|col| {
            col.iter()
                .zip(keep)
                .map(|(x, k)| be.mult_aligned(k, x))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let keep_rot = keep
        .iter()
        .map(|k| rotations(be, k, layout.width))
        .collect::<Result<Vec<_>>>()?;
    let mut adj = Vec::with_capacity(layout.blocks);
    for (r, row) in g.adj.iter().enumerate() {
        let mut new_row = Vec::with_capacity(layout.blocks);
        for (c, diags) in row.iter().enumerate() {
            let mut new_diags = Vec::with_capacity(diags.len());
            for (d, diag) in diags.iter().enumerate() {
                let rows_kept = be.mult_aligned(diag, &keep[r])?;
                new_diags.push(be.mult_aligned(&rows_kept, &keep_rot[c][d])?);
            }
            new_row.push(new_diags);
        }
        adj.push(new_row);
    }
    Ok(EncGraph {
        layout,
        d0: g.d0,
        adj,
        features,
        ones: g.ones.clone(),
    })
}

fn check_blocks(got: usize, want: usize, what: &str) -> Result<()> {
    if got != want {
        return Err(Error::Alignment(format!(
            "{what} has {got} blocks, layout has {want}"
        )));
    }
    Ok(())
}

/// Neighbor aggregation `sum_d diag_d(A) * rot(h, d)` per column and block.
pub fn aggregate<B: HeBackend>(
    be: &B,
    adj: &[Vec<Vec<Ct<B>>>],
    layout: &Layout,
    h: &EncActivations<B>,
) -> Result<EncActivations<B>> {
    let mut out = Vec::with_capacity(h.len());
    for col in h {
        check_blocks(col.len(), layout.blocks, "activation column")?;
        let shifted = col
            .iter()
            .map(|x| rotations(be, x, layout.width))
            .collect::<Result<Vec<_>>>()?;
        let mut blocks = Vec::with_capacity(layout.blocks);
        for row in adj {
            let mut acc: Option<Ct<B>> = None;
            for (diags, rots) in row.iter().zip(&shifted) {
                for (diag, x) in diags.iter().zip(rots) {
                    let term = be.mult_aligned(diag, x)?;
                    acc = Some(match acc {
                        None => term,
                        Some(a) => be.add_aligned(&a, &term)?,
                    });
                }
            }
            blocks.push(acc.expect("nonempty adjacency"));
        }
        out.push(blocks);
    }
    Ok(out)
}

/// `Z = agg W1 + h W2 + b`, weights applied as scalar plaintext products.
pub fn combine<B: HeBackend>(
    be: &B,
    agg: &EncActivations<B>,
    h: &EncActivations<B>,
    w: &LayerWeights,
) -> Result<EncActivations<B>> {
    if h.len() != w.in_dim() || agg.len() != w.in_dim() {
        return Err(Error::Model(format!(
            "layer expects {} input columns, got {}",
            w.in_dim(),
            h.len()
        )));
    }
    let blocks = h[0].len();
    let mut z = vec![Vec::with_capacity(blocks); w.out_dim()];
    for b in 0..blocks {
        let level = agg.iter().map(|c| c[b].level()).min().expect("columns");
        let agg_b = agg
            .iter()
            .map(|c| be.mod_switch(&c[b], level))
            .collect::<Result<Vec<_>>>()?;
        let h_b = h
            .iter()
            .map(|c| be.mod_switch(&c[b], level))
            .collect::<Result<Vec<_>>>()?;
        for (k, zk) in z.iter_mut().enumerate() {
            let neigh = weighted_sum(be, &agg_b, w.w1.iter().map(|row| row[k]))?;
            let own = weighted_sum(be, &h_b, w.w2.iter().map(|row| row[k]))?;
            let sum = be.add_aligned(&neigh, &own)?;
            zk.push(be.add_const(&sum, w.b[k])?);
        }
    }
    Ok(z)
}

fn weighted_sum<B: HeBackend>(
    be: &B,
    xs: &[Ct<B>],
    weights: impl Iterator<Item = f64>,
) -> Result<Ct<B>> {
    let mut acc: Option<Ct<B>> = None;
    for (x, w) in xs.iter().zip(weights) {
        let term = be.mult_const(x, w)?;
        acc = Some(match acc {
            None => term,
            Some(a) => be.add(&a, &term)?,
        });
    }
    acc.ok_or_else(|| Error::Model("layer has no input columns".into()))
}

/// One GCN layer before its activation.
pub fn layer_preactivation<B: HeBackend>(
    be: &B,
    adj: &[Vec<Vec<Ct<B>>>],
    layout: &Layout,
    h: &EncActivations<B>,
    w: &LayerWeights,
) -> Result<EncActivations<B>> {
    let agg = aggregate(be, adj, layout, h)?;
    combine(be, &agg, h, w)
}

/// Levels the deepest band polynomial consumes.
fn top_depth(polys: &PolyActivationSet, strategy: PolyStrategy) -> usize {
    polys
        .polys()
        .iter()
        .map(|p| crate::he::poly::poly_depth(p.degree, strategy))
        .max()
        .unwrap_or(0)
}

/// `H = sum_i M_i * P_{d_i}(Z)` per column and block.
///
/// Each branch starts from `Z` mod-switched so that every branch finishes at
/// the level of the deepest one.
pub fn adaptive_activation<B: HeBackend>(
    be: &B,
    z: &EncActivations<B>,
    masks: &[Vec<Ct<B>>],
    polys: &PolyActivationSet,
    strategy: PolyStrategy,
) -> Result<EncActivations<B>> {
    if masks.len() != polys.m() {
        return Err(Error::Params(format!(
            "{} masks for {} activation polynomials",
            masks.len(),
            polys.m()
        )));
    }
    let top = top_depth(polys, strategy);
    let mut out = Vec::with_capacity(z.len());
    for col in z {
        let mut blocks = Vec::with_capacity(col.len());
        for (b, zb) in col.iter().enumerate() {
            if zb.level() < top {
                return Err(Error::DepthExhausted(format!(
                    "activation needs {top} levels, pre-activation is at level {}",
                    zb.level()
                )));
            }
            let mut acc: Option<Ct<B>> = None;
            for (i, p) in polys.polys().iter().enumerate() {
                let start = zb.level() - top + crate::he::poly::poly_depth(p.degree, strategy);
                let zi = be.mod_switch(zb, start)?;
                let y = poly_eval(be, &p.coeffs, &zi, strategy)?;
                let term = be.mult_aligned(&y, &masks[i][b])?;
                acc = Some(match acc {
                    None => term,
                    Some(a) => be.add_aligned(&a, &term)?,
                });
            }
            blocks.push(acc.expect("at least one band"));
        }
        out.push(blocks);
    }
    Ok(out)
}

pub fn uniform_activation<B: HeBackend>(
    be: &B,
    z: &EncActivations<B>,
    poly: &Poly,
    strategy: PolyStrategy,
) -> Result<EncActivations<B>> {
    z.iter()
        .map(|col| {
            col.iter()
                .map(|x| poly_eval(be, &poly.coeffs, x, strategy))
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

struct StageRecorder<'a, B: HeBackend> {
    be: &'a B,
    last: OpProfile,
    stages: Vec<StageProfile>,
}

impl<'a, B: HeBackend> StageRecorder<'a, B> {
    fn new(be: &'a B) -> Self {
        StageRecorder {
            be,
            last: be.profiler().snapshot(),
            stages: Vec::new(),
        }
    }

    fn close(&mut self, name: impl Into<String>) {
        let now = self.be.profiler().snapshot();
        let mut delta = now.since(&self.last);
        delta.wall_time_ms = now.wall_time_ms - self.last.wall_time_ms;
        delta.max_depth_consumed = 0;
        self.stages.push(StageProfile {
            name: name.into(),
            profile: delta,
        });
        self.last = now;
    }
}

/// Runs one variant end to end and returns the encrypted logits.
///
/// `oracle` is the plaintext hard partition; it is required in compaction
/// mode and with [`MaskSource::Oracle`], and ignored otherwise.
pub fn run_inference<B: HeBackend>(
    be: &B,
    g: &EncGraph<B>,
    weights: &ModelWeights,
    cfg: &EngineConfig,
    oracle: Option<&PlainMasks>,
) -> Result<InferenceOutput<B>> {
    cfg.validate()?;
    weights.validate()?;
    weights.check_input(g.d0)?;
    let needs_oracle = cfg.mode == Mode::Compaction || cfg.mask_source == MaskSource::Oracle;
    let oracle = match (needs_oracle, oracle) {
        (true, None) => {
            return Err(Error::Params(
                "compaction and oracle masks need the plaintext partition".into(),
            ))
        }
        (true, Some(o)) => {
            if o.n() != g.n() || o.m() != cfg.thresholds.m() {
                return Err(Error::Params(
                    "plaintext partition does not match the graph".into(),
                ));
            }
            Some(o)
        }
        (false, _) => None,
    };
    if cfg.mode == Mode::Compaction && g.layout.width != 1 {
        return Err(Error::Params(
            "compaction mode needs a per-node layout".into(),
        ));
    }
    let circuit = plan_circuit(&PlanInput {
        cfg,
        layers: weights.num_layers(),
        ones_encrypted: g.ones.is_some(),
        oracle,
    });
    let depth = crate::he::estimate_depth(&circuit);
    let available = g
        .features
        .iter()
        .flatten()
        .chain(g.adj.iter().flatten().flatten())
        .map(|c| c.level())
        .min()
        .unwrap_or(0);
    depth.check(available)?;
    if cfg.mode == Mode::Protocol && g.layout.rotation_budget() < weights.num_layers() + 2 {
        return Err(Error::Params(format!(
            "block width {} leaves {} replicas in {} slots, too few for {} layers",
            g.layout.width,
            g.layout.replicas,
            g.layout.slots,
            weights.num_layers()
        )));
    }

    let scope = be.profiler().scope();
    let mut rec = StageRecorder::new(be);
    let (logits, nodes, layout) = match cfg.mode {
        Mode::Protocol => run_protocol(be, g, weights, cfg, oracle, &mut rec)?,
        Mode::Compaction => {
            run_compaction(be, g, weights, cfg, oracle.expect("checked"), &mut rec)?
        }
    };
    let profile = scope.finish();
    Ok(InferenceOutput {
        layout,
        logits,
        nodes,
        profile,
        stages: rec.stages,
        depth,
    })
}

type RunResult<B> = (EncActivations<B>, Vec<NodeSlot>, Layout);

fn encrypt_masks<B: HeBackend>(
    be: &B,
    layout: &Layout,
    oracle: &PlainMasks,
    plan: MaskPlan,
) -> Result<MaskSet<B>> {
    let enc = |values: &[f64]| -> Result<Vec<Ct<B>>> {
        (0..layout.blocks)
            .map(|b| be.encrypt(&layout.pack(values, b)))
            .collect()
    };
    Ok(match plan {
        MaskPlan::Full => MaskSet {
            m0: Some(enc(&oracle.m0)?),
            levels: oracle
                .levels
                .iter()
                .map(|l| enc(l))
                .collect::<Result<_>>()?,
        },
        MaskPlan::PruneOnly => MaskSet {
            m0: Some(enc(&oracle.m0)?),
            levels: Vec::new(),
        },
        MaskPlan::Merged => {
            let merged = oracle.merged();
            let levels = if merged.m() > 1 {
                merged
                    .levels
                    .iter()
                    .map(|l| enc(l))
                    .collect::<Result<_>>()?
            } else {
                Vec::new()
            };
            MaskSet { m0: None, levels }
        }
    })
}

/// Importance masks under the variant's mask plan, `None` for BFG.
fn importance_masks<B: HeBackend>(
    be: &B,
    g: &EncGraph<B>,
    cfg: &EngineConfig,
    oracle: Option<&PlainMasks>,
    rec: &mut StageRecorder<'_, B>,
) -> Result<Option<MaskSet<B>>> {
    let Some(plan) = cfg.variant.mask_plan() else {
        return Ok(None);
    };
    if cfg.mask_source == MaskSource::Oracle {
        let masks = encrypt_masks(be, &g.layout, oracle.expect("checked"), plan)?;
        rec.close("masks");
        return Ok(Some(masks));
    }
    if plan == MaskPlan::Merged && cfg.thresholds.m() == 1 {
        return Ok(Some(MaskSet {
            m0: None,
            levels: Vec::new(),
        }));
    }
    let scores = encrypted_degree(be, g)?;
    rec.close("degree");
    let delta = cfg.delta_for(g.n());
    let masks = masks_with_plan(
        be,
        &scores,
        &cfg.thresholds,
        delta,
        cfg.sharpen,
        cfg.strategy,
        plan,
    )?;
    rec.close("masks");
    Ok(Some(masks))
}

fn run_protocol<B: HeBackend>(
    be: &B,
    g: &EncGraph<B>,
    weights: &ModelWeights,
    cfg: &EngineConfig,
    oracle: Option<&PlainMasks>,
    rec: &mut StageRecorder<'_, B>,
) -> Result<RunResult<B>> {
    let masks = importance_masks(be, g, cfg, oracle, rec)?;
    let pruned;
    let graph = if cfg.variant.prunes() {
        let m0 = masks
            .as_ref()
            .and_then(|m| m.m0.as_ref())
            .expect("prune mask");
        pruned = apply_prune(be, g, m0)?;
        rec.close("prune");
        &pruned
    } else {
        g
    };
    let mut h = graph.features.clone();
    let last = weights.num_layers() - 1;
    for (l, w) in weights.layers.iter().enumerate() {
        let agg = aggregate(be, &graph.adj, &graph.layout, &h)?;
        rec.close(format!("layer{l}.aggregate"));
        let z = combine(be, &agg, &h, w)?;
        rec.close(format!("layer{l}.combine"));
        if l == last {
            h = z;
            break;
        }
        h = match (cfg.variant.adaptive(), &masks) {
            (true, Some(m)) if !m.levels.is_empty() => {
                adaptive_activation(be, &z, &m.levels, &cfg.polys, cfg.strategy)?
            }
            (true, _) => uniform_activation(be, &z, cfg.polys.level(1), cfg.strategy)?,
            (false, _) => uniform_activation(be, &z, cfg.uniform_poly(), cfg.strategy)?,
        };
        rec.close(format!("layer{l}.activation"));
    }
    let nodes = (0..g.n())
        .map(|v| {
            let (block, offset) = g.layout.locate(v);
            NodeSlot::Block { block, offset }
        })
        .collect();
    Ok((h, nodes, g.layout))
}

/// Band polynomial each node uses in compaction mode, `None` if dropped.
pub fn compaction_assignment(cfg: &EngineConfig, oracle: &PlainMasks) -> Vec<Option<Poly>> {
    let merged = oracle.merged();
    (0..oracle.n())
        .map(|v| match cfg.variant {
            Variant::Bfg => Some(cfg.uniform_poly().clone()),
            Variant::Po => (oracle.band(v) != 0).then(|| cfg.uniform_poly().clone()),
            Variant::Aao => Some(cfg.polys.level(merged.band(v)).clone()),
            Variant::Ff => match oracle.band(v) {
                0 => None,
                i => Some(cfg.polys.level(i).clone()),
            },
        })
        .collect()
}

fn run_compaction<B: HeBackend>(
    be: &B,
    g: &EncGraph<B>,
    weights: &ModelWeights,
    cfg: &EngineConfig,
    oracle: &PlainMasks,
    rec: &mut StageRecorder<'_, B>,
) -> Result<RunResult<B>> {
    // Importance masks still run on the full encrypted graph so its cost is counted.
    importance_masks(be, g, cfg, Some(oracle), rec)?;
    let assignment = compaction_assignment(cfg, oracle);
    let kept: Vec<usize> = (0..g.n()).filter(|&v| assignment[v].is_some()).collect();
    let bias = weights.layers.last().expect("layers").b.clone();
    let mut nodes = vec![NodeSlot::Constant(bias); g.n()];
    for (i, &v) in kept.iter().enumerate() {
        nodes[v] = NodeSlot::Block {
            block: i,
            offset: 0,
        };
    }
    if kept.is_empty() {
        let layout = Layout::per_node(1, g.layout.slots)?;
        return Ok((vec![Vec::new(); weights.output_dim()], nodes, layout));
    }
    let sub = g.select(&kept)?;
    let polys: Vec<&Poly> = kept
        .iter()
        .map(|&v| assignment[v].as_ref().expect("kept"))
        .collect();
    let mut h = sub.features.clone();
    let last = weights.num_layers() - 1;
    for (l, w) in weights.layers.iter().enumerate() {
        let agg = aggregate(be, &sub.adj, &sub.layout, &h)?;
        rec.close(format!("layer{l}.aggregate"));
        let z = combine(be, &agg, &h, w)?;
        rec.close(format!("layer{l}.combine"));
        if l == last {
            h = z;
            break;
        }
        let mut next = Vec::with_capacity(z.len());
        for col in &z {
            let ys = col
                .iter()
                .zip(&polys)
                .map(|(x, p)| poly_eval(be, &p.coeffs, x, cfg.strategy))
                .collect::<Result<Vec<_>>>()?;
            let floor = ys.iter().map(|y| y.level()).min().expect("kept nodes");
            next.push(
                ys.iter()
                    .map(|y| be.mod_switch(y, floor))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        h = next;
        rec.close(format!("layer{l}.activation"));
    }
    Ok((h, nodes, sub.layout))
}
