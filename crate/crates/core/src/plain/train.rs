use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{accuracy, forward_plain_with, matmul, Matrix};
use crate::error::{Error, Result};
use crate::graph::{LayerWeights, ModelWeights, PlainGraph, Splits};

/// Hidden activation used while training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainActivation {
    #[default]
    Square,
    Relu,
}

impl TrainActivation {
    pub fn eval(self, z: f64) -> f64 {
        match self {
            TrainActivation::Square => z * z,
            TrainActivation::Relu => z.max(0.0),
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            TrainActivation::Square => 2.0 * z,
            TrainActivation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub dropout: f64,
    pub hidden_dim: usize,
    pub seed: u64,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub activation: TrainActivation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            weight_decay: 5e-4,
            epochs: 200,
            dropout: 0.5,
            hidden_dim: 2,
            seed: 0,
            patience: 20,
            activation: TrainActivation::Square,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Params("epochs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Params(format!(
                "dropout {} is not in [0, 1)",
                self.dropout
            )));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Params("hidden_dim must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Params("learning_rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Params("weight_decay must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub train_accuracy: f64,
    pub final_loss: f64,
}

/// Mean cross-entropy over `nodes` plus `0.5 * weight_decay * |theta|^2`, and
/// its gradient with respect to every parameter.
///
/// The model is two GCN layers with `x^2` after the first. `dropout` holds the
/// already-scaled keep multipliers for the hidden activations.
pub fn loss_and_grad(
    g: &PlainGraph,
    w: &ModelWeights,
    labels: &[usize],
    nodes: &[usize],
    weight_decay: f64,
    dropout: Option<&Matrix>,
) -> Result<(f64, ModelWeights)> {
    loss_and_grad_with(
        g,
        w,
        labels,
        nodes,
        weight_decay,
        dropout,
        TrainActivation::Square,
    )
}

/// [`loss_and_grad`] with a chosen hidden activation.
pub fn loss_and_grad_with(
    g: &PlainGraph,
    w: &ModelWeights,
    labels: &[usize],
    nodes: &[usize],
    weight_decay: f64,
    dropout: Option<&Matrix>,
    act: TrainActivation,
) -> Result<(f64, ModelWeights)> {
    if w.num_layers() != 2 {
        return Err(Error::Model("the trainer handles two-layer models".into()));
    }
    if nodes.is_empty() {
        return Err(Error::Data("no training nodes".into()));
    }
    let (l1, l2) = (&w.layers[0], &w.layers[1]);
    let x = &g.features;
    let a = &g.adjacency;

    let ax = matmul(a, x);
    let z1 = add3(&matmul(&ax, &l1.w1), &matmul(x, &l1.w2), &l1.b);
    let mut h = z1
        .iter()
        .map(|r| r.iter().map(|&v| act.eval(v)).collect())
        .collect::<Matrix>();
    if let Some(mask) = dropout {
        mul_in_place(&mut h, mask);
    }
    let ah = matmul(a, &h);
    let z2 = add3(&matmul(&ah, &l2.w1), &matmul(&h, &l2.w2), &l2.b);

    let classes = l2.out_dim();
    let scale = 1.0 / nodes.len() as f64;
    let mut loss = 0.0;
    let mut dz2 = vec![vec![0.0; classes]; g.n];
    for &v in nodes {
        let p = softmax(&z2[v]);
        let y = labels[v];
        if y >= classes {
            return Err(Error::Data(format!(
                "label {y} of node {v} exceeds {classes} classes"
            )));
        }
        loss -= p[y].max(f64::MIN_POSITIVE).ln() * scale;
        for k in 0..classes {
            dz2[v][k] = (p[k] - if k == y { 1.0 } else { 0.0 }) * scale;
        }
    }

    let g2 = LayerWeights {
        w1: matmul(&transpose(&ah), &dz2),
        w2: matmul(&transpose(&h), &dz2),
        b: col_sums(&dz2),
    };
    let dh = add(
        &matmul(&matmul(&transpose(a), &dz2), &transpose(&l2.w1)),
        &matmul(&dz2, &transpose(&l2.w2)),
    );
    let mut dz1 = dh;
    if let Some(mask) = dropout {
        mul_in_place(&mut dz1, mask);
    }
    for (row, zrow) in dz1.iter_mut().zip(&z1) {
        for (d, z) in row.iter_mut().zip(zrow) {
            *d *= act.derivative(*z);
        }
    }
    let g1 = LayerWeights {
        w1: matmul(&transpose(&ax), &dz1),
        w2: matmul(&transpose(x), &dz1),
        b: col_sums(&dz1),
    };
    let mut grad = ModelWeights {
        layers: vec![g1, g2],
    };
    if weight_decay > 0.0 {
        let mut reg = 0.0;
        for (gl, wl) in grad.layers.iter_mut().zip(&w.layers) {
            for_each_param(gl, wl, |gp, p| {
                *gp += weight_decay * p;
                reg += p * p;
            });
        }
        loss += 0.5 * weight_decay * reg;
    }
    Ok((loss, grad))
}

fn for_each_param(g: &mut LayerWeights, w: &LayerWeights, mut f: impl FnMut(&mut f64, f64)) {
    for (gm, wm) in [(&mut g.w1, &w.w1), (&mut g.w2, &w.w2)] {
        for (gr, wr) in gm.iter_mut().zip(wm) {
            for (gp, p) in gr.iter_mut().zip(wr) {
                f(gp, *p);
            }
        }
    }
    for (gp, p) in g.b.iter_mut().zip(&w.b) {
        f(gp, *p);
    }
}

fn params_mut(w: &mut ModelWeights) -> Vec<&mut f64> {
    let mut out = Vec::new();
    for l in &mut w.layers {
        out.extend(l.w1.iter_mut().flatten());
        out.extend(l.w2.iter_mut().flatten());
        out.extend(l.b.iter_mut());
    }
    out
}

fn params(w: &ModelWeights) -> Vec<f64> {
    let mut out = Vec::new();
    for l in &w.layers {
        out.extend(l.w1.iter().flatten());
        out.extend(l.w2.iter().flatten());
        out.extend(&l.b);
    }
    out
}

fn cross_entropy(logits: &[Vec<f64>], labels: &[usize], nodes: &[usize]) -> f64 {
    let total: f64 = nodes
        .iter()
        .map(|&v| -softmax(&logits[v])[labels[v]].max(f64::MIN_POSITIVE).ln())
        .sum();
    total / nodes.len().max(1) as f64
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn transpose(m: &[Vec<f64>]) -> Matrix {
    let cols = m.first().map_or(0, Vec::len);
    (0..cols)
        .map(|j| m.iter().map(|r| r[j]).collect())
        .collect()
}

fn add(a: &[Vec<f64>], b: &[Vec<f64>]) -> Matrix {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

fn add3(a: &[Vec<f64>], b: &[Vec<f64>], bias: &[f64]) -> Matrix {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .zip(bias)
                .map(|((p, q), c)| p + q + c)
                .collect()
        })
        .collect()
}

fn mul_in_place(a: &mut [Vec<f64>], b: &[Vec<f64>]) {
    for (x, y) in a.iter_mut().zip(b) {
        for (p, q) in x.iter_mut().zip(y) {
            *p *= q;
        }
    }
}

fn col_sums(m: &[Vec<f64>]) -> Vec<f64> {
    let cols = m.first().map_or(0, Vec::len);
    (0..cols).map(|j| m.iter().map(|r| r[j]).sum()).collect()
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(-limit..limit)).collect())
        .collect()
}

/// Trains a two-layer GCN (`d0 -> hidden_dim -> classes`) with `x^2`
/// activation, dropout on the hidden layer, Adam and early stopping on
/// validation accuracy, ties broken by validation loss. The best validation
/// checkpoint is returned.
pub fn train_toy(g: &PlainGraph, cfg: &TrainConfig) -> Result<(ModelWeights, TrainReport)> {
    cfg.validate()?;
    g.validate()?;
    let labels = g
        .labels
        .as_ref()
        .ok_or_else(|| Error::Data("training needs node labels".into()))?;
    let splits = g
        .splits
        .as_ref()
        .ok_or_else(|| Error::Data("training needs train/val/test splits".into()))?;
    if splits.train.is_empty() {
        return Err(Error::Data("train split is empty".into()));
    }
    let classes = g.num_classes().expect("labels present");
    let val = if splits.val.is_empty() {
        &splits.train
    } else {
        &splits.val
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (d0, hd) = (g.d0(), cfg.hidden_dim);
    let mut w = ModelWeights::new(vec![
        LayerWeights {
            w1: glorot(&mut rng, d0, hd),
            w2: glorot(&mut rng, d0, hd),
            b: vec![0.0; hd],
        },
        LayerWeights {
            w1: glorot(&mut rng, hd, classes),
            w2: glorot(&mut rng, hd, classes),
            b: vec![0.0; classes],
        },
    ])?;

    let (beta1, beta2, eps) = (0.9, 0.999, 1e-8);
    let count = params(&w).len();
    let (mut m1, mut m2) = (vec![0.0; count], vec![0.0; count]);
    let mut best = (w.clone(), f64::NEG_INFINITY, f64::INFINITY, 0usize);
    let mut since_best = 0;
    let mut epochs_run = 0;
    let mut final_loss = f64::NAN;
    let keep = 1.0 - cfg.dropout;
    for epoch in 1..=cfg.epochs {
        epochs_run = epoch;
        let mask: Matrix = (0..g.n)
            .map(|_| {
                (0..hd)
                    .map(|_| {
                        if rng.gen::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let (loss, grad) = loss_and_grad_with(
            g,
            &w,
            labels,
            &splits.train,
            cfg.weight_decay,
            Some(&mask),
            cfg.activation,
        )?;
        final_loss = loss;
        let t = epoch as i32;
        for (i, (p, gp)) in params_mut(&mut w)
            .into_iter()
            .zip(params(&grad))
            .enumerate()
        {
            m1[i] = beta1 * m1[i] + (1.0 - beta1) * gp;
            m2[i] = beta2 * m2[i] + (1.0 - beta2) * gp * gp;
            let mh = m1[i] / (1.0 - beta1.powi(t));
            let vh = m2[i] / (1.0 - beta2.powi(t));
            *p -= cfg.learning_rate * mh / (vh.sqrt() + eps);
        }
        let logits = forward_plain_with(g, &w, |z| cfg.activation.eval(z))?;
        let val_acc = accuracy(&logits, labels, val);
        let val_loss = cross_entropy(&logits, labels, val);
        if val_acc > best.1 || (val_acc == best.1 && val_loss < best.2) {
            best = (w.clone(), val_acc, val_loss, epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (w, best_val_accuracy, _, best_epoch) = best;
    let train_accuracy = accuracy(
        &forward_plain_with(g, &w, |z| cfg.activation.eval(z))?,
        labels,
        &splits.train,
    );
    Ok((
        w,
        TrainReport {
            epochs_run,
            best_epoch,
            best_val_accuracy,
            train_accuracy,
            final_loss,
        },
    ))
}

/// Two cliques of `half` nodes joined by one edge. Clique members share a
/// constant one-hot feature and label; even ids train, ids `1 mod 4`
/// validate, the rest test.
pub fn two_clique(half: usize) -> Result<PlainGraph> {
    if half < 2 {
        return Err(Error::Params("each clique needs at least two nodes".into()));
    }
    let n = 2 * half;
    let mut edges = Vec::new();
    for side in 0..2 {
        let base = side * half;
        for i in 0..half {
            for j in i + 1..half {
                edges.push((base + i, base + j, 1.0));
            }
        }
    }
    edges.push((half - 1, half, 1.0));
    let features = (0..n)
        .map(|v| {
            if v < half {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            }
        })
        .collect();
    let labels = (0..n).map(|v| usize::from(v >= half)).collect();
    let splits = Splits {
        train: (0..n).filter(|v| v % 2 == 0).collect(),
        val: (0..n).filter(|v| v % 4 == 1).collect(),
        test: (0..n).filter(|v| v % 4 == 3).collect(),
    };
    PlainGraph::from_edges(n, &edges, false, features)?
        .with_labels(labels)?
        .with_splits(splits)
}
