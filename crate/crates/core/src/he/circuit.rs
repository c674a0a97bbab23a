//! Symbolic circuits for static depth planning.

use serde::Serialize;

use super::poly::{cmp_depth, poly_depth, PolyStrategy};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Gate {
    Input,
    Const,
    Add(NodeId, NodeId),
    MulCt(NodeId, NodeId),
    MulPlain(NodeId),
    Rotate(NodeId),
    Poly(NodeId, usize, PolyStrategy),
    Cmp(NodeId, usize, PolyStrategy),
}

/// A DAG of homomorphic operations grouped into named stages.
#[derive(Clone, Debug, Default)]
pub struct Circuit {
    gates: Vec<(Gate, usize)>,
    stages: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StageDepth {
    pub name: String,
    /// Levels consumed from the circuit inputs to the end of this stage.
    pub cumulative: usize,
    /// Levels this stage adds on top of everything before it.
    pub added: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DepthEstimate {
    pub total: usize,
    pub stages: Vec<StageDepth>,
}

impl DepthEstimate {
    /// Fails with the first stage whose cumulative depth exceeds `available`.
    pub fn check(&self, available: usize) -> Result<()> {
        if let Some(s) = self.stages.iter().find(|s| s.cumulative > available) {
            return Err(Error::DepthBudget {
                stage: s.name.clone(),
                needed: s.cumulative,
                available,
            });
        }
        Ok(())
    }
}

impl Circuit {
    pub fn new() -> Self {
        Circuit {
            gates: Vec::new(),
            stages: vec!["input".to_string()],
        }
    }

    /// Starts a new stage; subsequent gates belong to it.
    pub fn stage(&mut self, name: impl Into<String>) -> &mut Self {
        self.stages.push(name.into());
        self
    }

    fn push(&mut self, gate: Gate) -> NodeId {
        if self.stages.is_empty() {
            self.stages.push("input".to_string());
        }
        self.gates.push((gate, self.stages.len() - 1));
        NodeId(self.gates.len() - 1)
    }

    pub fn input(&mut self) -> NodeId {
        self.push(Gate::Input)
    }

    /// A public value, available at any level.
    pub fn constant(&mut self) -> NodeId {
        self.push(Gate::Const)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Gate::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Gate::MulCt(a, b))
    }

    pub fn mul_plain(&mut self, a: NodeId) -> NodeId {
        self.push(Gate::MulPlain(a))
    }

    pub fn rotate(&mut self, a: NodeId) -> NodeId {
        self.push(Gate::Rotate(a))
    }

    pub fn poly(&mut self, a: NodeId, degree: usize, strategy: PolyStrategy) -> NodeId {
        self.push(Gate::Poly(a, degree, strategy))
    }

    pub fn cmp(&mut self, a: NodeId, sharpen: usize, strategy: PolyStrategy) -> NodeId {
        self.push(Gate::Cmp(a, sharpen, strategy))
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    fn depths(&self) -> Vec<usize> {
        let mut d = vec![0usize; self.gates.len()];
        for (i, (gate, _)) in self.gates.iter().enumerate() {
            d[i] = match *gate {
                Gate::Input | Gate::Const => 0,
                Gate::Add(a, b) => d[a.0].max(d[b.0]),
                Gate::MulCt(a, b) => d[a.0].max(d[b.0]) + 1,
                Gate::MulPlain(a) => d[a.0] + 1,
                Gate::Rotate(a) => d[a.0],
                Gate::Poly(a, deg, s) => d[a.0] + poly_depth(deg, s),
                Gate::Cmp(a, sharpen, s) => d[a.0] + cmp_depth(sharpen, s),
            };
        }
        d
    }

    /// Levels consumed on the path from the inputs to `node`.
    pub fn depth_of(&self, node: NodeId) -> usize {
        self.depths()[node.0]
    }
}

/// Per-stage and total multiplicative depth of `circuit`.
pub fn estimate_depth(circuit: &Circuit) -> DepthEstimate {
    let d = circuit.depths();
    let mut per_stage = vec![0usize; circuit.stages.len()];
    for (i, (_, stage)) in circuit.gates.iter().enumerate() {
        per_stage[*stage] = per_stage[*stage].max(d[i]);
    }
    let mut stages = Vec::new();
    let mut so_far = 0;
    for (name, depth) in circuit.stages.iter().zip(per_stage) {
        let cumulative = so_far.max(depth);
        if name == "input" && cumulative == 0 {
            continue;
        }
        stages.push(StageDepth {
            name: name.clone(),
            cumulative,
            added: cumulative - so_far,
        });
        so_far = cumulative;
    }
    DepthEstimate {
        total: so_far,
        stages,
    }
}
