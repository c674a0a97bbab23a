use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One GCN layer: `Z = A H W1 + H W2 + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    #[serde(rename = "W1")]
    pub w1: Vec<Vec<f64>>,
    #[serde(rename = "W2")]
    pub w2: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl LayerWeights {
    pub fn zeros(input: usize, output: usize) -> Self {
        LayerWeights {
            w1: vec![vec![0.0; output]; input],
            w2: vec![vec![0.0; output]; input],
            b: vec![0.0; output],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w1.len()
    }

    pub fn out_dim(&self) -> usize {
        self.b.len()
    }

    fn validate(&self, layer: usize) -> Result<()> {
        let (d_in, d_out) = (self.in_dim(), self.out_dim());
        if d_in == 0 || d_out == 0 {
            return Err(Error::Model(format!("layer {layer}: empty weight matrix")));
        }
        for (name, m) in [("W1", &self.w1), ("W2", &self.w2)] {
            if m.len() != d_in {
                return Err(Error::Model(format!(
                    "layer {layer}: {name} has {} rows, expected input dim {d_in}",
                    m.len()
                )));
            }
            if let Some(r) = m.iter().position(|row| row.len() != d_out) {
                return Err(Error::Model(format!(
                    "layer {layer}: {name} row {r} has {} columns, expected {d_out}",
                    m[r].len()
                )));
            }
        }
        let finite = self
            .w1
            .iter()
            .chain(&self.w2)
            .flatten()
            .chain(&self.b)
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Model(format!("layer {layer}: non-finite weight")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    pub layers: Vec<LayerWeights>,
}

impl ModelWeights {
    pub fn new(layers: Vec<LayerWeights>) -> Result<Self> {
        let w = ModelWeights { layers };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Model("model has no layers".into()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            layer.validate(l)?;
            if l > 0 && layer.in_dim() != self.layers[l - 1].out_dim() {
                return Err(Error::Model(format!(
                    "layer {l} expects input dim {}, previous layer outputs {}",
                    layer.in_dim(),
                    self.layers[l - 1].out_dim()
                )));
            }
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// `[d0, d1, ..., dL]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].in_dim()];
        d.extend(self.layers.iter().map(|l| l.out_dim()));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim())
    }

    pub fn check_input(&self, d0: usize) -> Result<()> {
        if self.input_dim() != d0 {
            return Err(Error::Model(format!(
                "model expects {} input features, graph has {d0}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let w: ModelWeights = serde_json::from_str(text)?;
        w.validate()?;
        Ok(w)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("weights serialize")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ModelWeights {
        let mut a = LayerWeights::zeros(4, 2);
        a.w1[3][1] = 0.1 + 0.2;
        a.b[0] = -1.0 / 3.0;
        ModelWeights::new(vec![a, LayerWeights::zeros(2, 3)]).unwrap()
    }

    #[test]
    fn dims_and_round_trip() {
        let w = model();
        assert_eq!(w.num_layers(), 2);
        assert_eq!(w.dims(), vec![4, 2, 3]);
        assert_eq!(ModelWeights::from_json_str(&w.to_json_string()).unwrap(), w);
    }

    #[test]
    fn chain_violation() {
        let mut w = model();
        w.layers[1].w2.pop();
        assert!(matches!(w.validate(), Err(Error::Model(_))));
        let mut w = model();
        w.layers[1] = LayerWeights::zeros(3, 3);
        assert!(matches!(w.validate(), Err(Error::Model(_))));
    }
}
