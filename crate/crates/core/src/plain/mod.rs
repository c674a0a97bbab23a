//! Plaintext reference pipelines and the toy trainer.

mod train;

use serde::{Deserialize, Serialize};

use crate::engine::{compaction_assignment, EngineConfig, Poly, Variant};
use crate::error::{Error, Result};
use crate::graph::{LayerWeights, Layout, ModelWeights, PlainGraph};
use crate::importance::{oracle_masks_from_scores, soft_masks, MaskPlan, PlainMasks};

pub use train::{
    loss_and_grad, loss_and_grad_with, train_toy, two_clique, TrainActivation, TrainConfig,
    TrainReport,
};

/// Dense `n x d` matrix, row per node.
pub type Matrix = Vec<Vec<f64>>;

fn check_dims(g: &PlainGraph, w: &ModelWeights) -> Result<()> {
    g.validate()?;
    w.validate()?;
    w.check_input(g.d0())
}

/// Straightforward GCN forward pass.
///
/// `activations[l]` follows hidden layer `l`; the last layer has none.
pub fn forward_plain(g: &PlainGraph, w: &ModelWeights, activations: &[Poly]) -> Result<Matrix> {
    check_dims(g, w)?;
    if activations.len() + 1 != w.num_layers() {
        return Err(Error::Model(format!(
            "{} layers need {} activations, got {}",
            w.num_layers(),
            w.num_layers() - 1,
            activations.len()
        )));
    }
    let mut h = g.features.clone();
    for (l, layer) in w.layers.iter().enumerate() {
        h = gcn_layer(g, &h, layer, activations.get(l).map(|p| move |x| p.eval(x)));
    }
    Ok(h)
}

/// GCN forward pass with the same scalar activation after every hidden layer.
pub fn forward_plain_with(
    g: &PlainGraph,
    w: &ModelWeights,
    act: impl Fn(f64) -> f64,
) -> Result<Matrix> {
    check_dims(g, w)?;
    let last = w.num_layers() - 1;
    let mut h = g.features.clone();
    for (l, layer) in w.layers.iter().enumerate() {
        h = gcn_layer(g, &h, layer, (l < last).then_some(&act));
    }
    Ok(h)
}

fn gcn_layer(
    g: &PlainGraph,
    h: &[Vec<f64>],
    layer: &LayerWeights,
    act: Option<impl Fn(f64) -> f64>,
) -> Matrix {
    let agg = matmul(&g.adjacency, h);
    let neigh = matmul(&agg, &layer.w1);
    let own = matmul(h, &layer.w2);
    neigh
        .iter()
        .zip(&own)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .zip(&layer.b)
                .map(|((x, y), c)| {
                    let z = x + y + c;
                    act.as_ref().map_or(z, |f| f(z))
                })
                .collect()
        })
        .collect()
}

/// Forward pass with `x^2` after every hidden layer.
pub fn forward_plain_square(g: &PlainGraph, w: &ModelWeights) -> Result<Matrix> {
    let acts = vec![Poly::square(); w.num_layers().saturating_sub(1)];
    forward_plain(g, w, &acts)
}

pub(crate) fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Matrix {
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            let mut out = vec![0.0; cols];
            for (x, brow) in row.iter().zip(b) {
                if *x != 0.0 {
                    for (o, y) in out.iter_mut().zip(brow) {
                        *o += x * y;
                    }
                }
            }
            out
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// Step comparisons.
    #[default]
    Hard,
    /// The soft comparison polynomial in exact arithmetic.
    Soft,
}

/// Per-slot values for one block-layout column, `n` real nodes plus padding.
struct Blocked<'a> {
    layout: &'a Layout,
}

impl Blocked<'_> {
    fn padded(&self, values: &[f64]) -> Vec<f64> {
        let mut v = values.to_vec();
        v.resize(self.layout.blocks * self.layout.width, 0.0);
        v
    }

    /// Global column index read by slot `o` of diagonal `d` in block column `c`.
    fn col(&self, c: usize, o: usize, d: usize) -> usize {
        c * self.layout.width + (o + d) % self.layout.width
    }

    fn adj(&self, g: &PlainGraph, v: usize, u: usize) -> f64 {
        if v < g.n && u < g.n {
            g.adjacency[v][u]
        } else {
            0.0
        }
    }
}

/// Degree scores summed in the same order as the encrypted diagonal method.
pub fn layout_degrees(g: &PlainGraph, layout: &Layout) -> Vec<f64> {
    let bl = Blocked { layout };
    let ones = bl.padded(&vec![1.0; g.n]);
    (0..g.n)
        .map(|v| {
            let o = v % layout.width;
            let mut acc: Option<f64> = None;
            for c in 0..layout.blocks {
                for d in 0..layout.width {
                    let u = bl.col(c, o, d);
                    let term = bl.adj(g, v, u) * ones[u];
                    acc = Some(acc.map_or(term, |a| a + term));
                }
            }
            acc.expect("nonempty layout")
        })
        .collect()
}

/// Masks the engine would use for `cfg.variant`, as plaintext values.
///
/// Soft mode follows the comparison polynomial; hard mode is the exact
/// partition. `None` for BFG.
pub fn design_masks(
    g: &PlainGraph,
    cfg: &EngineConfig,
    layout: &Layout,
    mode: MaskMode,
) -> Option<PlainMasks> {
    let plan = cfg.variant.mask_plan()?;
    let scores = layout_degrees(g, layout);
    Some(match mode {
        MaskMode::Soft => soft_masks(
            &scores,
            &cfg.thresholds,
            cfg.delta_for(g.n),
            cfg.sharpen,
            plan,
        ),
        MaskMode::Hard => {
            let hard = oracle_masks_from_scores(&scores, &cfg.thresholds);
            if plan == MaskPlan::Merged {
                hard.merged()
            } else {
                hard
            }
        }
    })
}

/// Plaintext mirror of protocol-mode inference under `layout`.
///
/// Every slot value is produced by the same floating-point operations in the
/// same order as the encrypted engine, so with soft masks the result equals a
/// simulator run bit for bit.
pub fn forward_design_plain(
    g: &PlainGraph,
    w: &ModelWeights,
    cfg: &EngineConfig,
    layout: &Layout,
    mode: MaskMode,
) -> Result<Matrix> {
    check_dims(g, w)?;
    let masks = design_masks(g, cfg, layout, mode);
    forward_with_masks(g, w, cfg, layout, masks.as_ref())
}

/// Mirror of protocol-mode inference with caller-supplied mask values.
pub fn forward_with_masks(
    g: &PlainGraph,
    w: &ModelWeights,
    cfg: &EngineConfig,
    layout: &Layout,
    masks: Option<&PlainMasks>,
) -> Result<Matrix> {
    check_dims(g, w)?;
    let n = g.n;
    let bl = Blocked { layout };
    let m = cfg.thresholds.m();

    let keep: Option<Vec<f64>> = match (cfg.variant.prunes(), masks) {
        (true, Some(mk)) => Some(bl.padded(&mk.m0.iter().map(|&x| -x + 1.0).collect::<Vec<_>>())),
        (true, None) => return Err(Error::Params("pruning variant without masks".into())),
        _ => None,
    };
    // adjacency entry as seen by slot v reading column u
    let edge = |v: usize, u: usize| -> f64 {
        let a = bl.adj(g, v, u);
        match &keep {
            Some(k) => (a * k[v]) * k[u],
            None => a,
        }
    };
    let mut h: Vec<Vec<f64>> = (0..g.d0())
        .map(|j| {
            let col: Vec<f64> = g.features.iter().map(|r| r[j]).collect();
            let col = bl.padded(&col);
            match &keep {
                Some(k) => col.iter().zip(k).map(|(x, k)| k * x).collect(),
                None => col,
            }
        })
        .collect();

    let adaptive_levels = match (cfg.variant, masks) {
        (Variant::Ff, Some(mk)) => Some(&mk.levels),
        (Variant::Aao, Some(mk)) if m > 1 && mk.levels.len() == m => Some(&mk.levels),
        _ => None,
    };
    let uniform = match cfg.variant {
        Variant::Ff | Variant::Aao => cfg.polys.level(1),
        Variant::Po | Variant::Bfg => cfg.uniform_poly(),
    };

    let slots = layout.blocks * layout.width;
    let last = w.num_layers() - 1;
    for (l, layer) in w.layers.iter().enumerate() {
        let agg: Vec<Vec<f64>> = h
            .iter()
            .map(|col| {
                (0..slots)
                    .map(|v| {
                        let o = v % layout.width;
                        let mut acc: Option<f64> = None;
                        for c in 0..layout.blocks {
                            for d in 0..layout.width {
                                let u = bl.col(c, o, d);
                                let term = edge(v, u) * col[u];
                                acc = Some(acc.map_or(term, |a| a + term));
                            }
                        }
                        acc.expect("nonempty layout")
                    })
                    .collect()
            })
            .collect();
        let z: Vec<Vec<f64>> = (0..layer.out_dim())
            .map(|k| {
                (0..slots)
                    .map(|v| {
                        let neigh =
                            weighted(agg.iter().map(|c| c[v]), layer.w1.iter().map(|r| r[k]));
                        let own = weighted(h.iter().map(|c| c[v]), layer.w2.iter().map(|r| r[k]));
                        (neigh + own) + layer.b[k]
                    })
                    .collect()
            })
            .collect();
        if l == last {
            h = z;
            break;
        }
        h = match adaptive_levels {
            Some(levels) => z
                .iter()
                .map(|col| {
                    (0..slots)
                        .map(|v| {
                            let mut acc: Option<f64> = None;
                            for (i, p) in cfg.polys.polys().iter().enumerate() {
                                let mask = levels[i].get(v).copied().unwrap_or(0.0);
                                let term = p.eval(col[v]) * mask;
                                acc = Some(acc.map_or(term, |a| a + term));
                            }
                            acc.expect("at least one band")
                        })
                        .collect()
                })
                .collect(),
            None => z
                .iter()
                .map(|col| col.iter().map(|&x| uniform.eval(x)).collect())
                .collect(),
        };
    }
    Ok((0..n)
        .map(|v| h.iter().map(|col| col[v]).collect())
        .collect())
}

fn weighted(xs: impl Iterator<Item = f64>, ws: impl Iterator<Item = f64>) -> f64 {
    let mut acc: Option<f64> = None;
    for (x, w) in xs.zip(ws) {
        let term = x * w;
        acc = Some(acc.map_or(term, |a| a + term));
    }
    acc.unwrap_or(0.0)
}

/// Plaintext counterpart of compaction-mode inference: dropped nodes report
/// the last-layer bias, kept nodes run on the induced subgraph with their own
/// band polynomial.
pub fn forward_compaction_plain(
    g: &PlainGraph,
    w: &ModelWeights,
    cfg: &EngineConfig,
    partition: &PlainMasks,
) -> Result<Matrix> {
    check_dims(g, w)?;
    let assignment = compaction_assignment(cfg, partition);
    let kept: Vec<usize> = (0..g.n).filter(|&v| assignment[v].is_some()).collect();
    let bias = w.layers.last().expect("layers").b.clone();
    let mut out = vec![bias; g.n];
    if kept.is_empty() {
        return Ok(out);
    }
    let sub = g.induced(&kept);
    let mut h = sub.features.clone();
    let last = w.num_layers() - 1;
    for (l, layer) in w.layers.iter().enumerate() {
        let agg = matmul(&sub.adjacency, &h);
        let neigh = matmul(&agg, &layer.w1);
        let own = matmul(&h, &layer.w2);
        let mut z: Matrix = neigh
            .iter()
            .zip(&own)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .zip(&layer.b)
                    .map(|((x, y), c)| x + y + c)
                    .collect()
            })
            .collect();
        if l != last {
            for (i, row) in z.iter_mut().enumerate() {
                let p = assignment[kept[i]].as_ref().expect("kept");
                for x in row.iter_mut() {
                    *x = p.eval(*x);
                }
            }
        }
        h = z;
    }
    for (i, &v) in kept.iter().enumerate() {
        out[v] = h[i].clone();
    }
    Ok(out)
}

pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bx), (i, &x)| {
            if x > bx {
                (i, x)
            } else {
                (bi, bx)
            }
        })
        .0
}

/// Fraction of `nodes` whose argmax matches `labels`; `nodes` empty gives 0.
pub fn accuracy(logits: &[Vec<f64>], labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let hits = nodes
        .iter()
        .filter(|&&v| argmax(&logits[v]) == labels[v])
        .count();
    hits as f64 / nodes.len() as f64
}

/// Fraction of `nodes` on which two logit matrices pick the same class.
pub fn argmax_agreement(a: &[Vec<f64>], b: &[Vec<f64>], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 1.0;
    }
    let hits = nodes
        .iter()
        .filter(|&&v| argmax(&a[v]) == argmax(&b[v]))
        .count();
    hits as f64 / nodes.len() as f64
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{PolyActivationSet, PolyPreset};
    use crate::graph::LayerWeights;
    use crate::importance::Thresholds;

    fn path3() -> PlainGraph {
        PlainGraph::from_edges(
            3,
            &[(0, 1, 1.0), (1, 2, 1.0)],
            false,
            vec![vec![1.0], vec![2.0], vec![-1.0]],
        )
        .unwrap()
    }

    fn identity_layer(d: usize) -> LayerWeights {
        let mut l = LayerWeights::zeros(d, d);
        for i in 0..d {
            l.w2[i][i] = 1.0;
        }
        l
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let g = path3();
        let w =
            ModelWeights::new(vec![LayerWeights::zeros(1, 2), LayerWeights::zeros(2, 2)]).unwrap();
        let out = forward_plain_square(&g, &w).unwrap();
        assert!(out.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn self_path_identity() {
        let mut g = path3();
        g.adjacency = vec![vec![0.0; 3]; 3];
        let w = ModelWeights::new(vec![identity_layer(1)]).unwrap();
        assert_eq!(forward_plain(&g, &w, &[]).unwrap(), g.features);
    }

    #[test]
    fn bfg_mirror_equals_plain_forward() {
        let g = path3();
        let mut l1 = LayerWeights::zeros(1, 2);
        l1.w1 = vec![vec![0.5, -0.25]];
        l1.w2 = vec![vec![1.0, 0.75]];
        l1.b = vec![0.1, -0.2];
        let mut l2 = LayerWeights::zeros(2, 2);
        l2.w1 = vec![vec![0.3, 0.2], vec![-0.4, 0.1]];
        l2.w2 = vec![vec![1.0, 0.0], vec![0.5, -1.0]];
        let w = ModelWeights::new(vec![l1, l2]).unwrap();
        let mut cfg = EngineConfig::new(
            Variant::Bfg,
            Thresholds::new(vec![1.5]).unwrap(),
            PolyActivationSet::from_degrees(&[2]).unwrap(),
        );
        cfg.uniform = Some(Poly::square());
        let layout = Layout::single_block(3, 8).unwrap();
        let mirror = forward_design_plain(&g, &w, &cfg, &layout, MaskMode::Soft).unwrap();
        let plain = forward_plain_square(&g, &w).unwrap();
        assert!(max_abs_diff(&mirror, &plain) < 1e-12);
    }

    #[test]
    fn hard_prune_leaves_bias() {
        let g = path3();
        let w = ModelWeights::new(vec![identity_layer(1), identity_layer(1)]).unwrap();
        let cfg = EngineConfig::new(
            Variant::Ff,
            Thresholds::new(vec![1.5]).unwrap(),
            PolyActivationSet::from_degrees(&[2]).unwrap(),
        );
        let layout = Layout::single_block(3, 8).unwrap();
        let out = forward_design_plain(&g, &w, &cfg, &layout, MaskMode::Hard).unwrap();
        // nodes 0 and 2 have degree 1 and are pruned; node 1 keeps only itself
        assert_eq!(out, vec![vec![0.0], vec![4.0], vec![0.0]]);
        let partition = design_masks(&g, &cfg, &layout, MaskMode::Hard).unwrap();
        let compact = forward_compaction_plain(&g, &w, &cfg, &partition).unwrap();
        assert_eq!(compact, out);
    }

    #[test]
    fn layout_degrees_match_row_sums() {
        let g = path3();
        for layout in [
            Layout::single_block(3, 8).unwrap(),
            Layout::new(3, 2, 8).unwrap(),
            Layout::per_node(3, 8).unwrap(),
        ] {
            assert_eq!(layout_degrees(&g, &layout), g.degrees());
        }
    }

    #[test]
    fn presets_change_only_activation() {
        let g = path3();
        let w = ModelWeights::new(vec![identity_layer(1), identity_layer(1)]).unwrap();
        let cfg = EngineConfig::new(
            Variant::Aao,
            Thresholds::new(vec![1.5, 0.5, 0.25]).unwrap(),
            PolyActivationSet::preset(PolyPreset::Pset3),
        );
        let layout = Layout::single_block(3, 8).unwrap();
        let out = forward_design_plain(&g, &w, &cfg, &layout, MaskMode::Hard).unwrap();
        // node 1 is band 1 (cubic fit), the leaves are band 2 (square)
        assert_eq!(out[0][0], 1.0);
        assert_eq!(out[2][0], 1.0);
        assert_eq!(out[1][0], cfg.polys.level(1).eval(2.0));
    }
}
