//! JSON model files.
//!
//! ```json
//! {
//!   "schema_version": "1",
//!   "label": "two_qubit_site1",
//!   "dim": 4,
//!   "hamiltonian": [[[0, 0], ...], ...],
//!   "hamiltonian_terms": [{"param": "omega", "matrix": [[[0, 0], ...], ...]}],
//!   "jump_ops": [[[[0, 0], ...], ...]],
//!   "p0_basis": [0],
//!   "params": {"omega": 1.0}
//! }
//! ```
//!
//! Complex entries are `[re, im]` pairs, matrices are row-major. The
//! Hamiltonian is the constant part plus `Σ params[p] · matrix` over the
//! terms. `p0_basis` is either a list of basis indices or a projection
//! matrix. A `classical` block `{"rate_matrix": [[...]], "absorbing_set": [...]}`
//! may stand in for the quantum fields, which are then the embedding.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classical::{embed, RateMatrix};
use crate::error::{QssError, Result};
use crate::linalg::{c, CMatrix, DensityMatrix, OperatorMatrix, OrthProjection, Tolerances};
use crate::model::ModelSpec;

pub const SCHEMA_VERSION: &str = "1";

pub type PairMatrix = Vec<Vec<[f64; 2]>>;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianTerm {
    pub param: String,
    pub matrix: PairMatrix,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum P0Basis {
    Indices(Vec<usize>),
    Matrix(PairMatrix),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalBlock {
    pub rate_matrix: Vec<Vec<f64>>,
    pub absorbing_set: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: String,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub hamiltonian: Option<PairMatrix>,
    #[serde(default)]
    pub hamiltonian_terms: Vec<HamiltonianTerm>,
    #[serde(default)]
    pub jump_ops: Vec<PairMatrix>,
    #[serde(default)]
    pub p0_basis: Option<P0Basis>,
    #[serde(default)]
    pub classical: Option<ClassicalBlock>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(QssError::field(
                "schema_version",
                format!(
                    "unsupported version {:?}, expected {SCHEMA_VERSION:?}",
                    file.schema_version
                ),
            ));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn has_quantum_part(&self) -> bool {
        self.hamiltonian.is_some() || !self.hamiltonian_terms.is_empty() || !self.jump_ops.is_empty()
    }

    /// Parameter names that enter the model.
    pub fn parameters(&self) -> Vec<String> {
        let mut names: Vec<String> = self.params.keys().cloned().collect();
        for t in &self.hamiltonian_terms {
            if !names.contains(&t.param) {
                names.push(t.param.clone());
            }
        }
        names.sort();
        names
    }

    pub fn with_param(&self, name: &str, value: f64) -> Result<ModelFile> {
        if !self.parameters().iter().any(|p| p == name) {
            return Err(QssError::field(
                "params",
                format!("model has no parameter {name:?}"),
            ));
        }
        let mut out = self.clone();
        out.params.insert(name.to_string(), value);
        Ok(out)
    }

    pub fn rate_matrix(&self) -> Result<RateMatrix> {
        let block = self
            .classical
            .as_ref()
            .ok_or_else(|| QssError::field("classical", "missing classical block"))?;
        RateMatrix::new(block.rate_matrix.clone(), block.absorbing_set.clone())
            .map_err(|e| QssError::field("classical", e.to_string()))
    }

    pub fn to_spec(&self, tol: &Tolerances) -> Result<ModelSpec> {
        if !self.has_quantum_part() {
            if self.classical.is_some() {
                let mut spec = embed(&self.rate_matrix()?)?;
                if !self.label.is_empty() {
                    spec.label = self.label.clone();
                }
                return Ok(spec);
            }
            return Err(QssError::field(
                "hamiltonian",
                "model defines neither quantum operators nor a classical block",
            ));
        }
        let dim = self
            .dim
            .ok_or_else(|| QssError::field("dim", "missing"))?;
        if dim == 0 {
            return Err(QssError::field("dim", "must be positive"));
        }
        let mut h = match &self.hamiltonian {
            Some(m) => parse_matrix(m, dim, "hamiltonian")?,
            None => CMatrix::zeros(dim, dim),
        };
        for (i, term) in self.hamiltonian_terms.iter().enumerate() {
            let field = format!("hamiltonian_terms[{i}]");
            let value = *self.params.get(&term.param).ok_or_else(|| {
                QssError::field(
                    format!("{field}.param"),
                    format!("no value for parameter {:?} in params", term.param),
                )
            })?;
            if !value.is_finite() {
                return Err(QssError::field(
                    format!("params.{}", term.param),
                    "value is not finite",
                ));
            }
            h += parse_matrix(&term.matrix, dim, &format!("{field}.matrix"))? * c(value, 0.0);
        }
        let dev = crate::linalg::hermiticity_defect(&h);
        if dev > tol.herm {
            return Err(QssError::field(
                "hamiltonian",
                format!("not Hermitian (max |H − H†| = {dev:.3e})"),
            ));
        }
        let h = OperatorMatrix::new(h).map_err(|e| QssError::field("hamiltonian", e.to_string()))?;
        let mut jumps = Vec::with_capacity(self.jump_ops.len());
        for (i, m) in self.jump_ops.iter().enumerate() {
            let field = format!("jump_ops[{i}]");
            jumps.push(
                OperatorMatrix::new(parse_matrix(m, dim, &field)?)
                    .map_err(|e| QssError::field(field, e.to_string()))?,
            );
        }
        let p0 = match &self.p0_basis {
            None => return Err(QssError::field("p0_basis", "missing")),
            Some(P0Basis::Indices(idx)) => OrthProjection::from_basis_indices(dim, idx)
                .map_err(|e| QssError::field("p0_basis", e.to_string()))?,
            Some(P0Basis::Matrix(m)) => {
                let op = OperatorMatrix::new(parse_matrix(m, dim, "p0_basis")?)
                    .map_err(|e| QssError::field("p0_basis", e.to_string()))?;
                OrthProjection::new(op, tol).map_err(|e| QssError::field("p0_basis", e.to_string()))?
            }
        };
        let label = if self.label.is_empty() {
            "model".to_string()
        } else {
            self.label.clone()
        };
        ModelSpec::new(label, h, jumps, p0, tol)
    }
}

fn parse_matrix(m: &PairMatrix, dim: usize, field: &str) -> Result<CMatrix> {
    if m.len() != dim {
        return Err(QssError::field(
            field,
            format!("has {} rows, expected {dim}", m.len()),
        ));
    }
    let mut out = CMatrix::zeros(dim, dim);
    for (i, row) in m.iter().enumerate() {
        if row.len() != dim {
            return Err(QssError::field(
                format!("{field}[{i}]"),
                format!("has {} entries, expected {dim}", row.len()),
            ));
        }
        for (j, z) in row.iter().enumerate() {
            if !z[0].is_finite() || !z[1].is_finite() {
                return Err(QssError::field(format!("{field}[{i}][{j}]"), "not finite"));
            }
            out[(i, j)] = c(z[0], z[1]);
        }
    }
    Ok(out)
}

pub fn to_pairs(m: &CMatrix) -> PairMatrix {
    crate::linalg::matrix_to_pairs(m)
}

/// A start state: either a bare matrix or `{"matrix": ...}`.
pub fn load_density(path: &Path, dim: usize, tol: &Tolerances) -> Result<DensityMatrix> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum StateFile {
        Bare(PairMatrix),
        Wrapped { matrix: PairMatrix },
    }
    let text = std::fs::read_to_string(path)?;
    let m = match serde_json::from_str::<StateFile>(&text)? {
        StateFile::Bare(m) | StateFile::Wrapped { matrix: m } => m,
    };
    let op = OperatorMatrix::new(parse_matrix(&m, dim, "start")?)?;
    DensityMatrix::new(op, tol).map_err(|e| QssError::field("start", e.to_string()))
}
