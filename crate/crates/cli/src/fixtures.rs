//! Graphs bundled with the binary.

use hegnn::graph::PlainGraph;

pub const NAMES: [&str; 2] = ["demo16", "karate34"];

const DEMO16: &str = include_str!("../fixtures/demo16.json");
const KARATE34: &str = include_str!("../fixtures/karate34.json");

/// Two 5-cliques with pendant chains, joined by one edge; one-hot
/// community features.
pub fn demo16() -> PlainGraph {
    PlainGraph::from_json_str(DEMO16, "builtin:demo16").expect("bundled graph parses")
}

/// Zachary's karate club: 34 nodes, 78 edges, labels by club, synthetic
/// 4-dimensional features.
pub fn karate34() -> PlainGraph {
    PlainGraph::from_json_str(KARATE34, "builtin:karate34").expect("bundled graph parses")
}

pub fn builtin(name: &str) -> Option<hegnn::Result<PlainGraph>> {
    match name {
        "demo16" => Some(Ok(demo16())),
        "karate34" => Some(Ok(karate34())),
        _ => None,
    }
}
