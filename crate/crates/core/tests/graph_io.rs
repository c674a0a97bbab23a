mod common;

use std::fs;

use common::{random_graph, random_weights};
use hegnn::ckks::CkksBackend;
use hegnn::engine::aggregate;
use hegnn::graph::{encrypt_graph, load_graph, Layout, ModelWeights, OnesMode, PlainGraph};
use hegnn::he::sim::SimBackend;
use hegnn::he::{HeBackend, HeParams};
use hegnn::Error;
use proptest::prelude::*;

fn sim() -> SimBackend {
    SimBackend::new(HeParams::toy(64, 3)).unwrap()
}

#[test]
fn edge_list_mirrors_undirected_edges() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("p3.edges");
    fs::write(&edges, "# path\n0 1\n1 2\n").unwrap();
    fs::write(dir.path().join("p3.csv"), "f0,label\n1.0,0\n2.0,1\n3.0,0\n").unwrap();
    let g = load_graph(&edges).unwrap();
    assert_eq!(g.n, 3);
    assert_eq!(
        g.adjacency.iter().flatten().filter(|&&x| x != 0.0).count(),
        4
    );
    assert_eq!(g.labels, Some(vec![0, 1, 0]));
    assert_eq!(g.features, vec![vec![1.0], vec![2.0], vec![3.0]]);
}

#[test]
fn json_graph_formats() {
    let empty =
        PlainGraph::from_json_str(r#"{"n": 2, "edges": [], "features": [[1], [2]]}"#, "mem")
            .unwrap();
    assert!(empty.adjacency.iter().flatten().all(|&x| x == 0.0));

    let text = r#"{"n": 3, "edges": [[0, 1], [1, 9]], "features": [[1], [2], [3]]}"#;
    match PlainGraph::from_json_str(text, "g.json") {
        Err(Error::Parse { location, .. }) => assert!(location.contains("edges[1]"), "{location}"),
        other => panic!("expected a parse error, got {other:?}"),
    }

    let directed = r#"{"n": 2, "edges": [[0, 1, 0.5]], "directed": true, "features": [[1], [2]],
        "labels": [0, 1], "splits": {"train": [0], "val": [1], "test": []}}"#;
    let g = PlainGraph::from_json_str(directed, "mem").unwrap();
    assert_eq!(g.adjacency, vec![vec![0.0, 0.5], vec![0.0, 0.0]]);
    assert_eq!(g.splits.unwrap().val, vec![1]);
}

#[test]
fn malformed_edge_list_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("bad.edges");
    fs::write(&edges, "0 1\n1 x\n").unwrap();
    fs::write(dir.path().join("bad.csv"), "1\n2\n").unwrap();
    match load_graph(&edges) {
        Err(Error::Parse { location, .. }) => assert!(location.ends_with(":2"), "{location}"),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn diagonal_packing_examples() {
    let be = sim();
    let swap = PlainGraph::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![vec![0.0]; 2]).unwrap();
    let layout = Layout::single_block(2, be.slots()).unwrap();
    let eg = encrypt_graph(&be, &swap, layout, OnesMode::Encrypted).unwrap();
    assert_eq!(be.decrypt(&eg.adj[0][0][0]).unwrap()[..2], [0.0, 0.0]);
    assert_eq!(be.decrypt(&eg.adj[0][0][1]).unwrap()[..2], [1.0, 1.0]);

    let eye = PlainGraph::new(
        (0..3)
            .map(|i| (0..3).map(|j| f64::from(u8::from(i == j))).collect())
            .collect(),
        vec![vec![0.0]; 3],
    )
    .unwrap();
    let layout = Layout::single_block(3, be.slots()).unwrap();
    let eg = encrypt_graph(&be, &eye, layout, OnesMode::Encrypted).unwrap();
    assert_eq!(be.decrypt(&eg.adj[0][0][0]).unwrap()[..3], [1.0, 1.0, 1.0]);
    for d in 1..3 {
        assert!(be.decrypt(&eg.adj[0][0][d]).unwrap()[..3]
            .iter()
            .all(|&x| x == 0.0));
    }
}

#[test]
fn ckks_roundtrip_of_a_random_graph() {
    let be = CkksBackend::new(HeParams::toy(1 << 10, 2), 3).unwrap();
    let g = random_graph(8, 3, 0.5, 8);
    let layout = Layout::single_block(8, be.slots()).unwrap();
    let eg = encrypt_graph(&be, &g, layout, OnesMode::Encrypted).unwrap();
    let a = eg.decrypt_adjacency(&be).unwrap();
    let x = eg.decrypt_features(&be).unwrap();
    for (p, q) in a.iter().flatten().zip(g.adjacency.iter().flatten()) {
        assert!((p - q).abs() < 1e-3);
    }
    for (p, q) in x.iter().flatten().zip(g.features.iter().flatten()) {
        assert!((p - q).abs() < 1e-3);
    }
}

#[test]
fn capacity_is_enforced() {
    let be = sim();
    let g = random_graph(40, 1, 0.1, 1);
    assert!(matches!(
        Layout::single_block(40, be.slots()),
        Err(Error::Capacity { .. })
    ));
    let wrong = Layout::single_block(40, 64).unwrap();
    assert!(matches!(
        encrypt_graph(&be, &g, wrong, OnesMode::Encrypted),
        Err(Error::Capacity { .. })
    ));
}

#[test]
fn weights_roundtrip_and_validation() {
    let w = random_weights(&[4, 2, 3], 1.0, 3);
    assert_eq!(w.num_layers(), 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.json");
    w.save(&path).unwrap();
    assert_eq!(ModelWeights::load(&path).unwrap(), w);

    let mut bad = w.clone();
    bad.layers[1].w2.pop();
    assert!(matches!(bad.validate(), Err(Error::Model(_))));
    let text = bad.to_json_string();
    assert!(matches!(
        ModelWeights::from_json_str(&text),
        Err(Error::Model(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pack_unpack_is_a_bijection(seed in 0u64..10_000, n in 1usize..17, width in 1usize..9) {
        let be = sim();
        let g = random_graph(n, 2, 0.5, seed);
        let layout = Layout::new(n, width.min(n), be.slots()).unwrap();
        let eg = encrypt_graph(&be, &g, layout, OnesMode::Plaintext).unwrap();
        prop_assert_eq!(eg.decrypt_adjacency(&be).unwrap(), g.adjacency.clone());
        prop_assert_eq!(eg.decrypt_features(&be).unwrap(), g.features.clone());
    }

    #[test]
    fn diagonal_matvec_is_exact(n in 1usize..9, weights in proptest::collection::vec(-4i32..5, 64), v in proptest::collection::vec(-8i32..9, 8)) {
        let be = sim();
        let a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(weights[i * 8 + j])).collect()).collect();
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![f64::from(v[i])]).collect();
        let g = PlainGraph::new(a.clone(), x.clone()).unwrap();
        let layout = Layout::single_block(n, be.slots()).unwrap();
        let eg = encrypt_graph(&be, &g, layout, OnesMode::Plaintext).unwrap();
        let agg = aggregate(&be, &eg.adj, &layout, &eg.features).unwrap();
        let got = hegnn::graph::decrypt_column(&be, &layout, &agg[0]).unwrap();
        let want: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[i][j] * x[j][0]).sum()).collect();
        prop_assert_eq!(got, want);
    }
}
