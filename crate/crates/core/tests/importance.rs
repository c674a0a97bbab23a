mod common;

use common::random_graph;
use hegnn::ckks::CkksBackend;
use hegnn::graph::{decrypt_column, encrypt_graph, Layout, OnesMode, PlainGraph};
use hegnn::he::sim::SimBackend;
use hegnn::he::{HeBackend, HeParams, PolyStrategy};
use hegnn::importance::{
    encrypted_degree, generate_masks, oracle_masks, oracle_masks_from_scores, soft_masks, MaskPlan,
    PlainMasks, Thresholds,
};
use hegnn::Error;
use proptest::prelude::*;

fn ckks(levels: usize) -> CkksBackend {
    CkksBackend::new(HeParams::toy(1 << 10, levels), 1).unwrap()
}

fn unit_sum(m: &PlainMasks, v: usize) -> f64 {
    m.m0[v] + m.levels.iter().map(|l| l[v]).sum::<f64>()
}

fn complete(n: usize) -> PlainGraph {
    let edges: Vec<_> = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v, 1.0)))
        .collect();
    PlainGraph::from_edges(n, &edges, false, vec![vec![0.0]; n]).unwrap()
}

#[test]
fn degree_examples_under_ckks() {
    let be = ckks(2);
    let path =
        PlainGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)], false, vec![vec![0.0]; 3]).unwrap();
    let empty = PlainGraph::from_edges(4, &[], false, vec![vec![0.0]; 4]).unwrap();
    for (g, want) in [
        (path, vec![1.0, 2.0, 1.0]),
        (empty, vec![0.0; 4]),
        (complete(4), vec![3.0; 4]),
    ] {
        for ones in [OnesMode::Encrypted, OnesMode::Plaintext] {
            let layout = Layout::single_block(g.n, be.slots()).unwrap();
            let eg = encrypt_graph(&be, &g, layout, ones).unwrap();
            be.profiler().reset();
            let s = encrypted_degree(&be, &eg).unwrap();
            assert!(be.profiler().snapshot().max_depth_consumed <= 1);
            let got = decrypt_column(&be, &layout, &s).unwrap();
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 0.01, "{got:?} vs {want:?}");
            }
        }
    }
}

#[test]
fn mask_examples() {
    let tau = Thresholds::new(vec![5.0, 2.0]).unwrap();
    let p = oracle_masks_from_scores(&[1.0, 3.0, 6.0], &tau);
    assert_eq!(p.m0, vec![1.0, 0.0, 0.0]);
    assert_eq!(p.levels, vec![vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]);

    let one = Thresholds::new(vec![1.0]).unwrap();
    let p = oracle_masks_from_scores(&[1.0, 4.0], &one);
    assert_eq!(
        (p.m0.clone(), p.levels.clone()),
        (vec![0.0; 2], vec![vec![1.0; 2]])
    );

    let g =
        PlainGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)], false, vec![vec![0.0]; 3]).unwrap();
    let p = oracle_masks(&g, &tau);
    assert_eq!(p.pruned(), vec![0, 2]);
    assert_eq!(p.band_sizes(), vec![0, 1]);
    assert_eq!(p.band(1), 2);

    let low = Thresholds::new(vec![0.5]).unwrap();
    assert!(oracle_masks(&complete(5), &low).pruned().is_empty());

    assert!(matches!(
        Thresholds::new(vec![2.0, 5.0]),
        Err(Error::Params(_))
    ));
}

#[test]
fn encrypted_masks_match_soft_mirror_and_equal_half_at_threshold() {
    let be = ckks(12);
    let g = PlainGraph::from_edges(
        4,
        &[(0, 1, 1.0), (1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)],
        false,
        vec![vec![0.0]; 4],
    )
    .unwrap();
    let tau = Thresholds::new(vec![3.0, 2.0]).unwrap();
    let layout = Layout::single_block(4, be.slots()).unwrap();
    let eg = encrypt_graph(&be, &g, layout, OnesMode::Encrypted).unwrap();
    let s = encrypted_degree(&be, &eg).unwrap();
    let masks = generate_masks(&be, &s, &tau, 4.0, 1, PolyStrategy::Horner).unwrap();
    assert_eq!(masks.ciphertext_count(), 3);
    let want = soft_masks(&g.degrees(), &tau, 4.0, 1, MaskPlan::Full);
    let m0 = decrypt_column(&be, &layout, masks.m0.as_ref().unwrap()).unwrap();
    for v in 0..4 {
        assert!((m0[v] - want.m0[v]).abs() < 1e-3);
        for i in 0..2 {
            let got = decrypt_column(&be, &layout, &masks.levels[i]).unwrap();
            assert!((got[v] - want.levels[i][v]).abs() < 1e-3);
            assert!((-0.05..=1.05).contains(&got[v]));
        }
    }
    // nodes 2 and 3 have degree exactly tau_2
    assert!((m0[2] - 0.5).abs() < 5e-3);
    assert!((m0[3] - 0.5).abs() < 5e-3);
}

#[test]
fn oracle_partition_of_unity_exhaustive() {
    // every small graph
    for n in 1..=5usize {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .collect();
        for bits in 0u32..(1 << pairs.len()) {
            let edges: Vec<_> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| bits >> i & 1 == 1)
                .map(|(_, &(u, v))| (u, v, 1.0))
                .collect();
            let g = PlainGraph::from_edges(n, &edges, false, vec![vec![0.0]; n]).unwrap();
            for tau in [vec![1.5], vec![2.5, 0.5], vec![3.5, 2.0, 1.0]] {
                let p = oracle_masks(&g, &Thresholds::new(tau).unwrap());
                for v in 0..n {
                    assert_eq!(unit_sum(&p, v), 1.0);
                }
            }
        }
    }
    // every degree a node of a 0/1 graph with n <= 16 can have, every threshold grid point
    let degrees: Vec<f64> = (0..16).map(f64::from).collect();
    let grid: Vec<f64> = (0..33).map(|k| f64::from(k) * 0.5 - 0.25).collect();
    for m in 1..=3usize {
        let mut idx: Vec<usize> = (0..m).collect();
        loop {
            let tau: Vec<f64> = idx.iter().rev().map(|&i| grid[i]).collect();
            let p = oracle_masks_from_scores(&degrees, &Thresholds::new(tau).unwrap());
            for v in 0..degrees.len() {
                let ones = std::iter::once(p.m0[v]).chain(p.levels.iter().map(|l| l[v]));
                assert_eq!(ones.clone().filter(|&x| x == 1.0).count(), 1);
                assert!(ones.into_iter().all(|x| x == 0.0 || x == 1.0));
            }
            // next strictly increasing index tuple
            let mut k = m;
            while k > 0 && idx[k - 1] == grid.len() - (m - k + 1) {
                k -= 1;
            }
            if k == 0 {
                break;
            }
            idx[k - 1] += 1;
            for j in k..m {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
}

/// Degrees and thresholds inside `[0, delta)`, thresholds separated by at
/// least `0.3 * delta`, degrees kept at least `0.3 * delta` from every threshold.
fn saturated_instance(seed: u64) -> (Vec<f64>, Thresholds, f64) {
    let delta = 30.0;
    let mut rng_state = seed;
    let mut next = || {
        rng_state = rng_state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (rng_state >> 33) as f64 / (1u64 << 31) as f64
    };
    let m = 1 + (next() * 3.0) as usize;
    let mut tau = Vec::new();
    let mut t = 0.5 + next() * 3.0;
    for _ in 0..m {
        tau.push(t);
        t += 0.3 * delta + next() * 1.0;
    }
    tau.reverse();
    let degrees: Vec<f64> = (0..30)
        .map(f64::from)
        .filter(|d| tau.iter().all(|t| (d - t).abs() >= 0.3 * delta))
        .collect();
    (degrees, Thresholds::new(tau).unwrap(), delta)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn soft_masks_saturate_with_margin(seed in 0u64..100_000) {
        let (degrees, tau, delta) = saturated_instance(seed);
        let soft = soft_masks(&degrees, &tau, delta, 3, MaskPlan::Full);
        let hard = oracle_masks_from_scores(&degrees, &tau);
        for v in 0..degrees.len() {
            let sum = unit_sum(&soft, v);
            prop_assert!((0.9..=1.1).contains(&sum), "sum {} at degree {}", sum, degrees[v]);
            prop_assert_eq!(soft.m0[v].round(), hard.m0[v]);
            for i in 0..tau.m() {
                prop_assert_eq!(soft.levels[i][v].round(), hard.levels[i][v]);
            }
        }
    }

    #[test]
    fn simulator_degrees_are_exact(seed in 0u64..100_000, n in 1usize..30) {
        let be = SimBackend::new(HeParams::toy(128, 2)).unwrap();
        let g = random_graph(n, 1, 0.3, seed);
        let layout = Layout::single_block(n, be.slots()).unwrap();
        let eg = encrypt_graph(&be, &g, layout, OnesMode::Encrypted).unwrap();
        let s = encrypted_degree(&be, &eg).unwrap();
        prop_assert_eq!(decrypt_column(&be, &layout, &s).unwrap(), g.degrees());
    }

    #[test]
    fn ratio_thresholds_prune_about_the_ratio(seed in 0u64..100_000, ratio in 0.0f64..1.0, m in 1usize..4) {
        let g = random_graph(20, 1, 0.3, seed);
        let tau = Thresholds::from_ratio(&g.degrees(), ratio, m).unwrap();
        prop_assert_eq!(tau.m(), m);
        let pruned = oracle_masks(&g, &tau).pruned().len();
        // ties can only keep nodes together, never prune fewer than the strict quantile
        let strictly_below = g.degrees().iter().filter(|&&d| d < tau.lowest()).count();
        prop_assert_eq!(pruned, strictly_below);
    }
}

#[test]
fn encrypted_masks_saturate_under_ckks() {
    let be = ckks(16);
    // one edge (degree 1) next to a 6-clique (degree 5), threshold 3
    let mut edges = vec![(0, 1, 1.0)];
    edges.extend((2..8).flat_map(|u| (u + 1..8).map(move |v| (u, v, 1.0))));
    let g = PlainGraph::from_edges(8, &edges, false, vec![vec![0.0]; 8]).unwrap();
    let tau = Thresholds::new(vec![3.0]).unwrap();
    let layout = Layout::single_block(8, be.slots()).unwrap();
    let eg = encrypt_graph(&be, &g, layout, OnesMode::Encrypted).unwrap();
    let s = encrypted_degree(&be, &eg).unwrap();
    let masks = generate_masks(&be, &s, &tau, 6.0, 3, PolyStrategy::Horner).unwrap();
    let hard = oracle_masks(&g, &tau);
    let m0 = decrypt_column(&be, &layout, masks.m0.as_ref().unwrap()).unwrap();
    let m1 = decrypt_column(&be, &layout, &masks.levels[0]).unwrap();
    for v in 0..8 {
        assert_eq!(m0[v].round(), hard.m0[v]);
        assert_eq!(m1[v].round(), hard.levels[0][v]);
        assert!((0.9..=1.1).contains(&(m0[v] + m1[v])));
    }
}
