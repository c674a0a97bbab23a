use serde::{Deserialize, Serialize};

use super::PlainGraph;
use crate::error::{Error, Result};
use crate::he::{Ct, HeBackend};

/// Slot layout shared by every ciphertext of an encrypted graph.
///
/// Nodes are split into blocks of `width` consecutive ids. Each block
/// ciphertext holds its `width` values repeated `replicas` times, so a left
/// rotation by `d < width` reads the cyclic shift within the block from the
/// first copy. When `width` divides the slot count the shift is exact
/// everywhere; otherwise every rotation stage invalidates one trailing copy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub n: usize,
    pub width: usize,
    pub blocks: usize,
    pub replicas: usize,
    pub slots: usize,
}

impl Layout {
    pub fn new(n: usize, width: usize, slots: usize) -> Result<Self> {
        if n == 0 || width == 0 {
            return Err(Error::Params("layout needs at least one node".into()));
        }
        if width > slots {
            return Err(Error::Capacity {
                len: width,
                capacity: slots,
            });
        }
        Ok(Layout {
            n,
            width,
            blocks: n.div_ceil(width),
            replicas: slots / width,
            slots,
        })
    }

    /// All nodes in one block.
    pub fn single_block(n: usize, slots: usize) -> Result<Self> {
        Self::new(n, n, slots)
    }

    /// One ciphertext per node.
    pub fn per_node(n: usize, slots: usize) -> Result<Self> {
        Self::new(n, 1, slots)
    }

    /// Rotations inside a block are exact cyclic shifts for any depth.
    pub fn exact_rotation(&self) -> bool {
        self.width * self.replicas == self.slots
    }

    /// Sequential rotation stages the layout tolerates before the first copy
    /// of a block stops being a faithful cyclic shift.
    pub fn rotation_budget(&self) -> usize {
        if self.exact_rotation() || self.width == 1 {
            usize::MAX
        } else {
            self.replicas - 1
        }
    }

    pub fn locate(&self, v: usize) -> (usize, usize) {
        (v / self.width, v % self.width)
    }

    /// Replicates one block's `width` values across the slots.
    pub fn replicate(&self, block: &[f64]) -> Vec<f64> {
        debug_assert_eq!(block.len(), self.width);
        let mut out = Vec::with_capacity(self.replicas * self.width);
        for _ in 0..self.replicas {
            out.extend_from_slice(block);
        }
        out
    }

    /// Node values of block `b`, zero-padded past `n`.
    pub fn block_values(&self, values: &[f64], b: usize) -> Vec<f64> {
        (0..self.width)
            .map(|o| values.get(b * self.width + o).copied().unwrap_or(0.0))
            .collect()
    }

    pub fn pack(&self, values: &[f64], b: usize) -> Vec<f64> {
        self.replicate(&self.block_values(values, b))
    }

    /// Diagonal `d` of block `(r, c)`: offset `v` holds `A[rW + v][cW + (v + d) mod W]`.
    pub fn diagonal(&self, a: &[Vec<f64>], r: usize, c: usize, d: usize) -> Vec<f64> {
        let w = self.width;
        (0..w)
            .map(|v| {
                let (row, col) = (r * w + v, c * w + (v + d) % w);
                if row < self.n && col < self.n {
                    a[row][col]
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Reassembles `n` node values from decrypted block slot vectors.
    pub fn unpack(&self, blocks: &[Vec<f64>]) -> Vec<f64> {
        (0..self.n)
            .map(|v| {
                let (b, o) = self.locate(v);
                blocks[b][o]
            })
            .collect()
    }
}

/// How the all-ones vector enters degree aggregation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnesMode {
    #[default]
    Encrypted,
    Plaintext,
}

/// Encrypted adjacency diagonals and feature columns.
pub struct EncGraph<B: HeBackend> {
    pub layout: Layout,
    pub d0: usize,
    /// `adj[r][c][d]`: diagonal `d` of block `(r, c)`.
    pub adj: Vec<Vec<Vec<Ct<B>>>>,
    /// `features[j][b]`: feature column `j` of block `b`.
    pub features: Vec<Vec<Ct<B>>>,
    /// Encrypted ones per block, `None` when the ones vector is public.
    pub ones: Option<Vec<Ct<B>>>,
}

impl<B: HeBackend> Clone for EncGraph<B> {
    fn clone(&self) -> Self {
        EncGraph {
            layout: self.layout,
            d0: self.d0,
            adj: self.adj.clone(),
            features: self.features.clone(),
            ones: self.ones.clone(),
        }
    }
}

impl<B: HeBackend> EncGraph<B> {
    pub fn n(&self) -> usize {
        self.layout.n
    }

    pub fn ciphertext_count(&self) -> usize {
        self.adj.iter().flatten().map(Vec::len).sum::<usize>()
            + self.features.iter().map(Vec::len).sum::<usize>()
            + self.ones.as_ref().map_or(0, Vec::len)
    }

    /// Ones vector of block `b` as plaintext slot values.
    pub fn ones_values(&self, b: usize) -> Vec<f64> {
        self.layout.pack(&vec![1.0; self.layout.n], b)
    }

    /// Keeps only `nodes` of a per-node graph; no homomorphic work involved.
    pub fn select(&self, nodes: &[usize]) -> Result<EncGraph<B>> {
        if self.layout.width != 1 {
            return Err(Error::Params(
                "node selection needs a per-node layout".into(),
            ));
        }
        let layout = Layout::per_node(nodes.len(), self.layout.slots)?;
        Ok(EncGraph {
            layout,
            d0: self.d0,
            adj: nodes
                .iter()
                .map(|&r| nodes.iter().map(|&c| self.adj[r][c].clone()).collect())
                .collect(),
            features: self
                .features
                .iter()
                .map(|col| nodes.iter().map(|&v| col[v].clone()).collect())
                .collect(),
            ones: self
                .ones
                .as_ref()
                .map(|o| nodes.iter().map(|&v| o[v].clone()).collect()),
        })
    }

    pub fn decrypt_adjacency(&self, be: &B) -> Result<Vec<Vec<f64>>> {
        let l = self.layout;
        let mut a = vec![vec![0.0; l.n]; l.n];
        for (r, row) in self.adj.iter().enumerate() {
            for (c, diags) in row.iter().enumerate() {
                for (d, ct) in diags.iter().enumerate() {
                    let slots = be.decrypt(ct)?;
                    for (v, value) in slots.iter().take(l.width).enumerate() {
                        let (i, j) = (r * l.width + v, c * l.width + (v + d) % l.width);
                        if i < l.n && j < l.n {
                            a[i][j] = *value;
                        }
                    }
                }
            }
        }
        Ok(a)
    }

    pub fn decrypt_features(&self, be: &B) -> Result<Vec<Vec<f64>>> {
        let cols = self
            .features
            .iter()
            .map(|col| decrypt_column(be, &self.layout, col))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..self.layout.n)
            .map(|v| cols.iter().map(|c| c[v]).collect())
            .collect())
    }
}

/// Decrypts one column given as block ciphertexts and unpacks node values.
pub fn decrypt_column<B: HeBackend>(be: &B, layout: &Layout, blocks: &[Ct<B>]) -> Result<Vec<f64>> {
    let plain = blocks
        .iter()
        .map(|ct| be.decrypt(ct))
        .collect::<Result<Vec<_>>>()?;
    Ok(layout.unpack(&plain))
}

/// Encrypts `g` under `layout`: every block diagonal, every feature column
/// block and, in encrypted mode, the ones vector.
pub fn encrypt_graph<B: HeBackend>(
    be: &B,
    g: &PlainGraph,
    layout: Layout,
    ones: OnesMode,
) -> Result<EncGraph<B>> {
    if layout.n != g.n {
        return Err(Error::Params(format!(
            "layout is for {} nodes, graph has {}",
            layout.n, g.n
        )));
    }
    if layout.width > be.slots() || layout.slots != be.slots() {
        return Err(Error::Capacity {
            len: layout.width,
            capacity: be.slots(),
        });
    }
    let mut adj = Vec::with_capacity(layout.blocks);
    for r in 0..layout.blocks {
        let mut row = Vec::with_capacity(layout.blocks);
        for c in 0..layout.blocks {
            let diags = (0..layout.width)
                .map(|d| be.encrypt(&layout.replicate(&layout.diagonal(&g.adjacency, r, c, d))))
                .collect::<Result<Vec<_>>>()?;
            row.push(diags);
        }
        adj.push(row);
    }
    let d0 = g.d0();
    let mut features = Vec::with_capacity(d0);
    for j in 0..d0 {
        let col: Vec<f64> = g.features.iter().map(|r| r[j]).collect();
        features.push(
            (0..layout.blocks)
                .map(|b| be.encrypt(&layout.pack(&col, b)))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let ones = match ones {
        OnesMode::Encrypted => Some(
            (0..layout.blocks)
                .map(|b| be.encrypt(&layout.pack(&vec![1.0; g.n], b)))
                .collect::<Result<Vec<_>>>()?,
        ),
        OnesMode::Plaintext => None,
    };
    Ok(EncGraph {
        layout,
        d0,
        adj,
        features,
        ones,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_definition() {
        let l = Layout::single_block(2, 8).unwrap();
        let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(l.diagonal(&a, 0, 0, 0), vec![0.0, 0.0]);
        assert_eq!(l.diagonal(&a, 0, 0, 1), vec![1.0, 1.0]);
        assert_eq!(
            l.replicate(&[1.0, 2.0]),
            vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]
        );
    }

    #[test]
    fn replication_budget() {
        let l = Layout::single_block(3, 8).unwrap();
        assert_eq!((l.replicas, l.rotation_budget()), (2, 1));
        assert!(Layout::single_block(4, 8).unwrap().exact_rotation());
        let p = Layout::per_node(5, 8).unwrap();
        assert_eq!((p.blocks, p.width), (5, 1));
        assert_eq!(p.locate(3), (3, 0));
        assert!(Layout::single_block(9, 8).is_err());
    }
}
