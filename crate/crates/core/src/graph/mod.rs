//! Plaintext graphs, model weights and the encrypted packing the engine consumes.

mod pack;
mod weights;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use pack::{decrypt_column, encrypt_graph, EncGraph, Layout, OnesMode};
pub use weights::{LayerWeights, ModelWeights};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Attributed graph held in the clear by the client.
#[derive(Clone, Debug, PartialEq)]
pub struct PlainGraph {
    pub n: usize,
    /// Row-major `n x n`; entry `[v][u]` is the weight of edge `v -> u`.
    pub adjacency: Vec<Vec<f64>>,
    /// Row-major `n x d0`.
    pub features: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
    pub splits: Option<Splits>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    n: usize,
    #[serde(default)]
    edges: Vec<Vec<f64>>,
    #[serde(default)]
    directed: bool,
    features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    splits: Option<Splits>,
}

impl PlainGraph {
    pub fn new(adjacency: Vec<Vec<f64>>, features: Vec<Vec<f64>>) -> Result<Self> {
        let g = PlainGraph {
            n: adjacency.len(),
            adjacency,
            features,
            labels: None,
            splits: None,
        };
        g.validate()?;
        Ok(g)
    }

    /// Builds a graph from `(u, v, weight)` triples, mirroring them unless `directed`.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize, f64)],
        directed: bool,
        features: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mut adjacency = vec![vec![0.0; n]; n];
        for (i, &(u, v, w)) in edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(Error::parse(
                    format!("edge {i}"),
                    format!("node id out of range for {n} nodes: ({u}, {v})"),
                ));
            }
            adjacency[u][v] = w;
            if !directed {
                adjacency[v][u] = w;
            }
        }
        Self::new(adjacency, features)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        self.labels = Some(labels);
        self.validate()?;
        Ok(self)
    }

    pub fn with_splits(mut self, splits: Splits) -> Result<Self> {
        self.splits = Some(splits);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(Error::Data("graph has no nodes".into()));
        }
        if self.adjacency.len() != n || self.adjacency.iter().any(|r| r.len() != n) {
            return Err(Error::Data(format!("adjacency must be {n} x {n}")));
        }
        if self.adjacency.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Data("adjacency has non-finite entries".into()));
        }
        if self.features.len() != n {
            return Err(Error::Data(format!(
                "{} feature rows for {n} nodes",
                self.features.len()
            )));
        }
        let d0 = self.features[0].len();
        if let Some(v) = self.features.iter().position(|r| r.len() != d0) {
            return Err(Error::Data(format!(
                "feature row {v} has {} entries, expected {d0}",
                self.features[v].len()
            )));
        }
        if self.features.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Data("features have non-finite entries".into()));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(Error::Data(format!(
                    "{} labels for {n} nodes",
                    labels.len()
                )));
            }
        }
        if let Some(s) = &self.splits {
            for (name, idx) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
                if let Some(&v) = idx.iter().find(|&&v| v >= n) {
                    return Err(Error::Data(format!("{name} split references node {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn d0(&self) -> usize {
        self.features[0].len()
    }

    /// Row sums of the adjacency, i.e. (weighted) out-degrees.
    pub fn degrees(&self) -> Vec<f64> {
        self.adjacency.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|v| (0..v).all(|u| self.adjacency[v][u] == self.adjacency[u][v]))
    }

    /// Subgraph induced by `nodes`, in the given order.
    pub fn induced(&self, nodes: &[usize]) -> PlainGraph {
        PlainGraph {
            n: nodes.len(),
            adjacency: nodes
                .iter()
                .map(|&v| nodes.iter().map(|&u| self.adjacency[v][u]).collect())
                .collect(),
            features: nodes.iter().map(|&v| self.features[v].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| nodes.iter().map(|&v| l[v]).collect()),
            splits: None,
        }
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text).map_err(|e| {
            Error::parse(
                format!("{origin}:{}:{}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        let mut edges = Vec::with_capacity(file.edges.len());
        for (i, e) in file.edges.iter().enumerate() {
            let loc = || format!("{origin}: edges[{i}]");
            if e.len() != 2 && e.len() != 3 {
                return Err(Error::parse(loc(), "expected [u, v] or [u, v, weight]"));
            }
            let id = |x: f64| -> Result<usize> {
                if x >= 0.0 && x.fract() == 0.0 && x < file.n as f64 {
                    Ok(x as usize)
                } else {
                    Err(Error::parse(
                        loc(),
                        format!("node id {x} is not in 0..{}", file.n),
                    ))
                }
            };
            edges.push((id(e[0])?, id(e[1])?, e.get(2).copied().unwrap_or(1.0)));
        }
        if file.features.len() != file.n {
            return Err(Error::parse(
                format!("{origin}: features"),
                format!("{} rows for n = {}", file.features.len(), file.n),
            ));
        }
        let mut g = Self::from_edges(file.n, &edges, file.directed, file.features)?;
        g.labels = file.labels;
        g.splits = file.splits;
        g.validate()?;
        Ok(g)
    }

    pub fn to_json_string(&self) -> String {
        let directed = !self.is_symmetric();
        let mut edges = Vec::new();
        for v in 0..self.n {
            let start = if directed { 0 } else { v };
            for u in start..self.n {
                let w = self.adjacency[v][u];
                if w != 0.0 {
                    let mut e = vec![v as f64, u as f64];
                    if w != 1.0 {
                        e.push(w);
                    }
                    edges.push(e);
                }
            }
        }
        let file = GraphFile {
            n: self.n,
            edges,
            directed,
            features: self.features.clone(),
            labels: self.labels.clone(),
            splits: self.splits.clone(),
        };
        serde_json::to_string_pretty(&file).expect("graph serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

/// Loads a graph. `.json` files use the JSON format; anything else is read as
/// a whitespace edge list with the features in a sidecar `.csv` of the same stem.
pub fn load_graph(path: impl AsRef<Path>) -> Result<PlainGraph> {
    let path = path.as_ref();
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
    {
        let text = fs::read_to_string(path)?;
        PlainGraph::from_json_str(&text, &path.display().to_string())
    } else {
        load_edge_list(path, path.with_extension("csv"), false)
    }
}

/// Edge list `u v [weight]` per line (`#` starts a comment) plus a feature CSV
/// with one row per node. A header row is optional; a header column named
/// `label` is read as the class id.
pub fn load_edge_list(
    edges: impl AsRef<Path>,
    features: impl AsRef<Path>,
    directed: bool,
) -> Result<PlainGraph> {
    let (features, labels) = read_feature_csv(features.as_ref())?;
    let n = features.len();
    let edges_path = edges.as_ref();
    let origin = edges_path.display().to_string();
    let text = fs::read_to_string(edges_path)?;
    let mut list = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let loc = || format!("{origin}:{}", i + 1);
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(Error::parse(
                loc(),
                format!("expected `u v [weight]`, got `{line}`"),
            ));
        }
        let id = |s: &str| -> Result<usize> {
            let v: usize = s
                .parse()
                .map_err(|_| Error::parse(loc(), format!("invalid node id `{s}`")))?;
            if v >= n {
                return Err(Error::parse(
                    loc(),
                    format!("node id {v} out of range for {n} nodes"),
                ));
            }
            Ok(v)
        };
        let w = match fields.get(2) {
            Some(s) => s
                .parse::<f64>()
                .ok()
                .filter(|w| w.is_finite())
                .ok_or_else(|| Error::parse(loc(), format!("invalid weight `{s}`")))?,
            None => 1.0,
        };
        list.push((id(fields[0])?, id(fields[1])?, w));
    }
    let g = PlainGraph::from_edges(n, &list, directed, features)?;
    match labels {
        Some(l) => g.with_labels(l),
        None => Ok(g),
    }
}

type FeatureTable = (Vec<Vec<f64>>, Option<Vec<usize>>);

fn read_feature_csv(path: &Path) -> Result<FeatureTable> {
    let origin = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(&origin, e.to_string()))?;
    let mut rows = Vec::new();
    let mut label_col = None;
    let mut labels = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let loc = || format!("{origin}:{}", i + 1);
        let rec = rec.map_err(|e| Error::parse(loc(), e.to_string()))?;
        if i == 0 && rec.iter().any(|f| f.parse::<f64>().is_err()) {
            label_col = rec.iter().position(|f| f.eq_ignore_ascii_case("label"));
            continue;
        }
        let mut row = Vec::with_capacity(rec.len());
        for (j, field) in rec.iter().enumerate() {
            if Some(j) == label_col {
                let l = field
                    .parse::<usize>()
                    .map_err(|_| Error::parse(loc(), format!("invalid label `{field}`")))?;
                labels.push(l);
                continue;
            }
            let x = field
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(loc(), format!("invalid feature `{field}`")))?;
            row.push(x);
        }
        if let Some(first) = rows.first() {
            let first: &Vec<f64> = first;
            if first.len() != row.len() {
                return Err(Error::parse(
                    loc(),
                    format!("{} features, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(origin, "no feature rows"));
    }
    Ok((rows, label_col.map(|_| labels)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_mirrors_edges() {
        let g = PlainGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)], false, vec![vec![0.0]; 3])
            .unwrap();
        let nnz = g.adjacency.iter().flatten().filter(|&&x| x != 0.0).count();
        assert_eq!(nnz, 4);
        assert_eq!(g.degrees(), vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"n": 3, "edges": [[0, 1], [1, 2, 2.5]], "directed": false,
            "features": [[1, 2], [3, 4], [5, 6]], "labels": [0, 1, 0],
            "splits": {"train": [0], "val": [1], "test": [2]}}"#;
        let g = PlainGraph::from_json_str(text, "inline").unwrap();
        assert_eq!(g.adjacency[2][1], 2.5);
        assert_eq!(g.num_classes(), Some(2));
        let back = PlainGraph::from_json_str(&g.to_json_string(), "again").unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn dangling_ids_are_rejected() {
        let text = r#"{"n": 3, "edges": [[0, 9]], "features": [[0], [0], [0]]}"#;
        match PlainGraph::from_json_str(text, "g.json") {
            Err(Error::Parse { location, .. }) => assert!(location.contains("edges[0]")),
            other => panic!("{other:?}"),
        }
        let broken = "{\"n\": 2,\n \"edges\": [[0 1]]}";
        match PlainGraph::from_json_str(broken, "g.json") {
            Err(Error::Parse { location, .. }) => assert!(location.starts_with("g.json:2:")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn induced_keeps_order() {
        let g = PlainGraph::from_edges(
            4,
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)],
            false,
            (0..4).map(|i| vec![i as f64]).collect(),
        )
        .unwrap();
        let h = g.induced(&[2, 1]);
        assert_eq!(h.adjacency, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(h.features, vec![vec![2.0], vec![1.0]]);
    }
}
