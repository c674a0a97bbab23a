#![allow(dead_code)]

use hegnn::graph::{LayerWeights, ModelWeights, PlainGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_graph(n: usize, d0: usize, p: f64, seed: u64) -> PlainGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v, 1.0));
            }
        }
    }
    let features = (0..n)
        .map(|_| (0..d0).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    PlainGraph::from_edges(n, &edges, false, features).unwrap()
}

pub fn random_layer(rng: &mut ChaCha8Rng, d_in: usize, d_out: usize, scale: f64) -> LayerWeights {
    let mut m = || -> Vec<Vec<f64>> {
        (0..d_in)
            .map(|_| (0..d_out).map(|_| rng.gen_range(-scale..scale)).collect())
            .collect()
    };
    let (w1, w2) = (m(), m());
    LayerWeights {
        w1,
        w2,
        b: (0..d_out).map(|_| rng.gen_range(-scale..scale)).collect(),
    }
}

/// `dims = [d0, d1, ..., dL]`.
pub fn random_weights(dims: &[usize], scale: f64, seed: u64) -> ModelWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelWeights::new(
        dims.windows(2)
            .map(|w| random_layer(&mut rng, w[0], w[1], scale))
            .collect(),
    )
    .unwrap()
}

pub fn max_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
