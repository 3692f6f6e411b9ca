use std::fs;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, min_eigenvalue, psd_repair};

const SYMMETRY_TOL: f64 = 1e-10;
const EIGEN_TOL: f64 = 1e-8;

/// Parameters of the trace model: `z̄ ~ N(mu, sigma)`, `z = z̄ + ε`,
/// `ε ~ N(0, v_noise)`, reward `r = weightsᵀ z`, and element `k` of a trace
/// revealed `delays[k]` rounds after the action.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorModel {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    v_noise: DMatrix<f64>,
    weights: DVector<f64>,
    delays: Vec<u32>,
}

impl PriorModel {
    /// Validates dimensions, symmetry and positive semidefiniteness, then
    /// clips any tiny negative eigenvalues of `sigma` and `v_noise`.
    pub fn new(
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
        v_noise: DMatrix<f64>,
        weights: DVector<f64>,
        delays: Vec<u32>,
    ) -> Result<Self> {
        let k = mu.len();
        if k == 0 {
            return Err(Error::InvalidPrior("trace length must be positive".into()));
        }
        for (name, m) in [("sigma", &sigma), ("v_noise", &v_noise)] {
            if m.nrows() != k || m.ncols() != k {
                return Err(Error::InvalidPrior(format!(
                    "{name} is {}x{}, expected {k}x{k}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            let asym = asymmetry(m);
            if asym > SYMMETRY_TOL {
                return Err(Error::InvalidPrior(format!(
                    "{name} is not symmetric (max deviation {asym:e})"
                )));
            }
            let low = min_eigenvalue(m);
            if low < -EIGEN_TOL {
                return Err(Error::InvalidPrior(format!(
                    "{name} has eigenvalue {low:e} < -{EIGEN_TOL:e}"
                )));
            }
        }
        if weights.len() != k {
            return Err(Error::InvalidPrior(format!(
                "weights has length {}, expected {k}",
                weights.len()
            )));
        }
        if delays.len() != k {
            return Err(Error::InvalidPrior(format!(
                "delays has length {}, expected {k}",
                delays.len()
            )));
        }
        if delays.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidPrior("delays must be nondecreasing".into()));
        }
        Ok(Self {
            mu,
            sigma: psd_repair(&sigma),
            v_noise: psd_repair(&v_noise),
            weights,
            delays,
        })
    }

    /// Trace length K.
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn v_noise(&self) -> &DMatrix<f64> {
        &self.v_noise
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn delays(&self) -> &[u32] {
        &self.delays
    }

    /// Delay after which the full trace is known.
    pub fn horizon(&self) -> u32 {
        *self.delays.last().expect("prior has at least one coordinate")
    }

    /// Same model with a different delay schedule.
    pub fn with_delays(&self, delays: Vec<u32>) -> Result<Self> {
        Self::new(
            self.mu.clone(),
            self.sigma.clone(),
            self.v_noise.clone(),
            self.weights.clone(),
            delays,
        )
    }

    /// Same model with different reward weights.
    pub fn with_weights(&self, weights: DVector<f64>) -> Result<Self> {
        Self::new(
            self.mu.clone(),
            self.sigma.clone(),
            self.v_noise.clone(),
            weights,
            self.delays.clone(),
        )
    }

    /// Writes the model as JSON with every real in 17 significant digits.
    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        let file = PriorFile::from(self);
        let mut ser = serde_json::Serializer::with_formatter(writer, PreciseFormatter);
        file.serialize(&mut ser)?;
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_json(&mut buf)?;
        Ok(String::from_utf8(buf).expect("serde_json emits utf-8"))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: PriorFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }
}

/// On-disk layout of a [`PriorModel`]: matrices as row-major arrays of arrays.
#[derive(Debug, Serialize, Deserialize)]
struct PriorFile {
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    v_noise: Vec<Vec<f64>>,
    weights: Vec<f64>,
    delays: Vec<u32>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::InvalidPrior(format!(
            "{name} row has length {}, expected {n}",
            bad.len()
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl From<&PriorModel> for PriorFile {
    fn from(p: &PriorModel) -> Self {
        Self {
            mu: p.mu.iter().copied().collect(),
            sigma: rows_of(&p.sigma),
            v_noise: rows_of(&p.v_noise),
            weights: p.weights.iter().copied().collect(),
            delays: p.delays.clone(),
        }
    }
}

impl TryFrom<PriorFile> for PriorModel {
    type Error = Error;

    fn try_from(f: PriorFile) -> Result<Self> {
        PriorModel::new(
            DVector::from_vec(f.mu),
            matrix_from_rows("sigma", &f.sigma)?,
            matrix_from_rows("v_noise", &f.v_noise)?,
            DVector::from_vec(f.weights),
            f.delays,
        )
    }
}

/// Formats a real with 17 significant digits, enough for an exact round trip.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON formatter that writes floats in fixed 17-significant-digit
/// scientific notation instead of the shortest representation.
#[derive(Default)]
struct PreciseFormatter;

impl serde_json::ser::Formatter for PreciseFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_real(value).as_bytes())
    }
}
