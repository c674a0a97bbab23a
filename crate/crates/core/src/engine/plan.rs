use super::{compaction_assignment, EngineConfig, MaskSource, Mode};
use crate::he::poly::poly_depth;
use crate::he::{Circuit, NodeId, PolyStrategy};
use crate::importance::{MaskPlan, PlainMasks};

pub struct PlanInput<'a> {
    pub cfg: &'a EngineConfig,
    pub layers: usize,
    pub ones_encrypted: bool,
    /// Plaintext partition; needed to size compaction-mode activations.
    pub oracle: Option<&'a PlainMasks>,
}

/// Degree whose evaluation is deepest among `degrees`.
fn deepest(degrees: impl Iterator<Item = usize>, strategy: PolyStrategy) -> Option<usize> {
    degrees.max_by_key(|&d| (poly_depth(d, strategy), d))
}

/// Symbolic circuit with the same dependency structure as the engine, one
/// representative slot per value kind.
pub fn plan_circuit(input: &PlanInput<'_>) -> Circuit {
    let cfg = input.cfg;
    let strategy = cfg.strategy;
    let mut c = Circuit::new();
    let diag = c.input();
    let x = c.input();
    let ones = c.input();
    let one = c.constant();

    let plan = cfg.variant.mask_plan();
    let m = cfg.thresholds.m();
    let mut m0: Option<NodeId> = None;
    let mut levels: Vec<NodeId> = Vec::new();
    if let Some(plan) = plan {
        if cfg.mask_source == MaskSource::Oracle {
            c.stage("masks");
            let mask = c.input();
            match plan {
                MaskPlan::Full => {
                    m0 = Some(mask);
                    levels = vec![mask; m];
                }
                MaskPlan::PruneOnly => m0 = Some(mask),
                MaskPlan::Merged if m > 1 => levels = vec![mask; m],
                MaskPlan::Merged => {}
            }
        } else if !(plan == MaskPlan::Merged && m == 1) {
            c.stage("degree");
            let s = if input.ones_encrypted {
                c.mul(diag, ones)
            } else {
                c.mul_plain(diag)
            };
            c.stage("masks");
            let cmp = c.cmp(s, cfg.sharpen, strategy);
            let complement = c.add(cmp, one);
            let band = c.mul(cmp, complement);
            match plan {
                MaskPlan::Full => {
                    m0 = Some(complement);
                    levels = (1..=m).map(|i| if i == 1 { cmp } else { band }).collect();
                }
                MaskPlan::PruneOnly => m0 = Some(complement),
                MaskPlan::Merged => {
                    levels = (1..m).map(|i| if i == 1 { cmp } else { band }).collect();
                    levels.push(complement);
                }
            }
        }
    }

    let compaction = cfg.mode == Mode::Compaction;
    let (mut adj, mut h) = (diag, x);
    if cfg.variant.prunes() && !compaction {
        if let Some(m0) = m0 {
            c.stage("prune");
            let keep = c.add(m0, one);
            let keep_rot = c.rotate(keep);
            h = c.mul(keep, x);
            let rows = c.mul(diag, keep);
            adj = c.mul(rows, keep_rot);
        }
    }

    let compaction_degree = match (compaction, input.oracle) {
        (true, Some(oracle)) => deepest(
            compaction_assignment(cfg, oracle)
                .into_iter()
                .flatten()
                .map(|p| p.degree),
            strategy,
        ),
        _ => None,
    };

    for l in 0..input.layers {
        c.stage(format!("layer{l}.aggregate"));
        let shifted = c.rotate(h);
        let agg = c.mul(adj, shifted);
        c.stage(format!("layer{l}.combine"));
        let own = c.add(h, agg);
        let neigh = c.mul_plain(agg);
        let own = c.mul_plain(own);
        let z = c.add(neigh, own);
        let z = c.add(z, one);
        if l + 1 == input.layers {
            break;
        }
        c.stage(format!("layer{l}.activation"));
        h = if compaction {
            match compaction_degree {
                Some(d) => c.poly(z, d, strategy),
                None => z,
            }
        } else if cfg.variant.adaptive() && !levels.is_empty() {
            let top = deepest(cfg.polys.degrees().into_iter(), strategy).expect("nonempty set");
            let y = c.poly(z, top, strategy);
            let mut acc: Option<NodeId> = None;
            for &mask in &levels {
                let term = c.mul(y, mask);
                acc = Some(match acc {
                    None => term,
                    Some(a) => c.add(a, term),
                });
            }
            acc.expect("at least one band")
        } else if cfg.variant.adaptive() {
            c.poly(z, cfg.polys.level(1).degree, strategy)
        } else {
            c.poly(z, cfg.uniform_poly().degree, strategy)
        };
    }
    c
}
