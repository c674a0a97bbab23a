use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::he::poly::horner_plain;

/// Activation polynomial, coefficients low-to-high.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoly")]
pub struct Poly {
    pub degree: usize,
    pub coeffs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawPoly {
    degree: usize,
    coeffs: Vec<f64>,
}

impl TryFrom<RawPoly> for Poly {
    type Error = Error;
    fn try_from(r: RawPoly) -> Result<Self> {
        let p = Poly::new(r.coeffs)?;
        if p.degree != r.degree {
            return Err(Error::Params(format!(
                "polynomial declared degree {} but has {} coefficients",
                r.degree,
                p.coeffs.len()
            )));
        }
        Ok(p)
    }
}

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Params("polynomial needs finite coefficients".into()));
        }
        if coeffs.len() > 1 && coeffs[coeffs.len() - 1] == 0.0 {
            return Err(Error::Params("leading coefficient is zero".into()));
        }
        Ok(Poly {
            degree: coeffs.len() - 1,
            coeffs,
        })
    }

    pub fn identity() -> Self {
        Poly::new(vec![0.0, 1.0]).expect("valid")
    }

    pub fn square() -> Self {
        Poly::new(vec![0.0, 0.0, 1.0]).expect("valid")
    }

    /// Default activation of a given degree: `x` for 1, `x^2` for 2, and a
    /// ReLU least-squares fit on [-6, 6] otherwise.
    ///
    /// On a symmetric interval every least-squares fit of ReLU is `x/2` plus
    /// an even polynomial, so odd degrees would lose their top term. The fit
    /// uses the weight `1 + x/12` to keep every degree genuine.
    pub fn default_for_degree(degree: usize) -> Result<Self> {
        match degree {
            0 => Err(Error::Params("activation degree must be >= 1".into())),
            1 => Ok(Self::identity()),
            2 => Ok(Self::square()),
            d => Poly::new(relu_fit(d, 6.0)),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        horner_plain(&self.coeffs, x)
    }
}

fn relu_fit(degree: usize, half_width: f64) -> Vec<f64> {
    const SAMPLES: usize = 2401;
    let k = degree + 1;
    let mut gram = vec![vec![0.0; k]; k];
    let mut rhs = vec![0.0; k];
    for i in 0..SAMPLES {
        // fit in t = x / half_width to keep the normal equations well conditioned
        let t = -1.0 + 2.0 * i as f64 / (SAMPLES - 1) as f64;
        let x = t * half_width;
        let w = 1.0 + x / (2.0 * half_width);
        let y = x.max(0.0);
        let powers: Vec<f64> = (0..k).map(|j| t.powi(j as i32)).collect();
        for a in 0..k {
            rhs[a] += w * y * powers[a];
            for b in 0..k {
                gram[a][b] += w * powers[a] * powers[b];
            }
        }
    }
    let sol = solve(gram, rhs);
    sol.iter()
        .enumerate()
        .map(|(j, c)| c / half_width.powi(j as i32))
        .collect()
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty");
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolyPreset {
    Pset1,
    Pset2,
    Pset3,
}

impl PolyPreset {
    pub const ALL: [PolyPreset; 3] = [PolyPreset::Pset1, PolyPreset::Pset2, PolyPreset::Pset3];

    pub fn degrees(self) -> [usize; 3] {
        match self {
            PolyPreset::Pset1 => [7, 5, 3],
            PolyPreset::Pset2 => [5, 3, 2],
            PolyPreset::Pset3 => [3, 2, 1],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PolyPreset::Pset1 => "pset1",
            PolyPreset::Pset2 => "pset2",
            PolyPreset::Pset3 => "pset3",
        }
    }
}

impl FromStr for PolyPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pset1" => Ok(PolyPreset::Pset1),
            "pset2" => Ok(PolyPreset::Pset2),
            "pset3" => Ok(PolyPreset::Pset3),
            other => Err(Error::Params(format!(
                "unknown polynomial preset `{other}`"
            ))),
        }
    }
}

/// One activation polynomial per importance band, degrees strictly decreasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Poly>", into = "Vec<Poly>")]
pub struct PolyActivationSet {
    polys: Vec<Poly>,
}

impl TryFrom<Vec<Poly>> for PolyActivationSet {
    type Error = Error;
    fn try_from(polys: Vec<Poly>) -> Result<Self> {
        Self::new(polys)
    }
}

impl From<PolyActivationSet> for Vec<Poly> {
    fn from(s: PolyActivationSet) -> Self {
        s.polys
    }
}

impl PolyActivationSet {
    pub fn new(polys: Vec<Poly>) -> Result<Self> {
        if polys.is_empty() {
            return Err(Error::Params("activation set is empty".into()));
        }
        if let Some(w) = polys.windows(2).find(|w| w[0].degree <= w[1].degree) {
            return Err(Error::Params(format!(
                "activation degrees must be strictly decreasing, got {} then {}",
                w[0].degree, w[1].degree
            )));
        }
        Ok(PolyActivationSet { polys })
    }

    pub fn from_degrees(degrees: &[usize]) -> Result<Self> {
        Self::new(
            degrees
                .iter()
                .map(|&d| Poly::default_for_degree(d))
                .collect::<Result<_>>()?,
        )
    }

    pub fn preset(p: PolyPreset) -> Self {
        Self::from_degrees(&p.degrees()).expect("presets are valid")
    }

    pub fn m(&self) -> usize {
        self.polys.len()
    }

    pub fn polys(&self) -> &[Poly] {
        &self.polys
    }

    /// `P_{d_i}` for `i` in `1..=m`.
    pub fn level(&self, i: usize) -> &Poly {
        &self.polys[i - 1]
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.polys.iter().map(|p| p.degree).collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
