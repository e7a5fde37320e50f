//! GKLS generators as explicit superoperator matrices.
//!
//! Vectorization is column-stacking throughout the crate, so that
//! `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QssError, Result};
use crate::linalg::{
    expm, kron, CMatrix, CVector, OperatorMatrix, OrthProjection,
    Tolerances, I,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Picture {
    /// Observables: `𝓛(x) = i[H,x] + Σ (L† x L − ½{L†L, x})`.
    Heisenberg,
    /// States: `𝓛*(ρ) = −i[H,ρ] + Σ (L ρ L† − ½{L†L, ρ})`.
    Schrodinger,
}

/// A `d² × d²` matrix acting on column-stacked `d × d` operators.
#[derive(Clone, Debug)]
pub struct SuperopMatrix {
    matrix: CMatrix,
    picture: Picture,
    op_dim: usize,
}

impl SuperopMatrix {
    pub fn new(matrix: CMatrix, picture: Picture) -> Result<Self> {
        let n = matrix.nrows();
        let d = exact_sqrt(n).ok_or(QssError::NotPerfectSquare(n))?;
        if matrix.ncols() != n {
            return Err(QssError::Shape("superoperator must be square".into()));
        }
        Ok(SuperopMatrix {
            matrix,
            picture,
            op_dim: d,
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn picture(&self) -> Picture {
        self.picture
    }

    /// Dimension of the operators it acts on.
    pub fn op_dim(&self) -> usize {
        self.op_dim
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        unvec(&(&self.matrix * vectorize(x)), self.op_dim)
    }

    /// The pairing-adjoint: the matrix of the other picture.
    pub fn dual(&self) -> SuperopMatrix {
        SuperopMatrix {
            matrix: self.matrix.adjoint(),
            picture: match self.picture {
                Picture::Heisenberg => Picture::Schrodinger,
                Picture::Schrodinger => Picture::Heisenberg,
            },
            op_dim: self.op_dim,
        }
    }

    /// `‖vec(1)† M‖` for Schrödinger, `‖M vec(1)‖` for Heisenberg.
    pub fn unitality_defect(&self) -> f64 {
        let id = vectorize(&CMatrix::identity(self.op_dim, self.op_dim));
        match self.picture {
            Picture::Schrodinger => (id.adjoint() * &self.matrix).norm(),
            Picture::Heisenberg => (&self.matrix * id).norm(),
        }
    }
}

fn exact_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

pub fn vectorize(x: &CMatrix) -> CVector {
    CVector::from_column_slice(x.as_slice())
}

pub fn devectorize(v: &CVector) -> Result<CMatrix> {
    let d = exact_sqrt(v.len()).ok_or(QssError::NotPerfectSquare(v.len()))?;
    Ok(unvec(v, d))
}

fn unvec(v: &CVector, d: usize) -> CMatrix {
    CMatrix::from_column_slice(d, d, v.as_slice())
}

/// Matrix of `X ↦ A X B`.
pub fn sandwich(a: &CMatrix, b: &CMatrix) -> CMatrix {
    kron(&b.transpose(), a)
}

/// Matrix of `X ↦ A X + X B`.
pub fn left_right(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let d = a.nrows();
    let id = CMatrix::identity(d, d);
    kron(&id, a) + kron(&b.transpose(), &id)
}

/// Hamiltonian, jump operators and the distinguished projection `p0`.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub label: String,
    hamiltonian: OperatorMatrix,
    jump_ops: Vec<OperatorMatrix>,
    p0: OrthProjection,
}

impl ModelSpec {
    pub fn new(
        label: impl Into<String>,
        hamiltonian: OperatorMatrix,
        jump_ops: Vec<OperatorMatrix>,
        p0: OrthProjection,
        tol: &Tolerances,
    ) -> Result<Self> {
        let d = hamiltonian.dim();
        let defect = hamiltonian.hermiticity_defect();
        if defect > tol.herm {
            return Err(QssError::NotHermitian { deviation: defect });
        }
        for (k, l) in jump_ops.iter().enumerate() {
            if l.dim() != d {
                return Err(QssError::InvalidModel(format!(
                    "jump operator {k} has dimension {}, expected {d}",
                    l.dim()
                )));
            }
        }
        if p0.dim() != d {
            return Err(QssError::InvalidModel(format!(
                "p0 has dimension {}, expected {d}",
                p0.dim()
            )));
        }
        if p0.rank() == 0 || p0.rank() == d {
            return Err(QssError::InvalidModel(format!(
                "p0 must have rank strictly between 0 and {d}, got {}",
                p0.rank()
            )));
        }
        Ok(ModelSpec {
            label: label.into(),
            hamiltonian,
            jump_ops,
            p0,
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &OperatorMatrix {
        &self.hamiltonian
    }

    pub fn jump_ops(&self) -> &[OperatorMatrix] {
        &self.jump_ops
    }

    pub fn p0(&self) -> &OrthProjection {
        &self.p0
    }

    pub fn p0_perp(&self) -> OrthProjection {
        self.p0.complement()
    }

    /// `G = −iH − ½ Σ L†L`, so that `𝓛*(ρ) = Gρ + ρG† + Σ LρL†`.
    pub fn g_operator(&self) -> CMatrix {
        let mut g = self.hamiltonian.matrix() * (-I);
        for l in &self.jump_ops {
            let l = l.matrix();
            g -= (l.adjoint() * l).unscale(2.0);
        }
        g
    }

    /// Same dynamics run `c` times faster: `H → cH`, `L → √c L`.
    pub fn time_rescaled(&self, c: f64) -> ModelSpec {
        let h = OperatorMatrix::new(self.hamiltonian.matrix().scale(c)).expect("finite");
        let jumps = self
            .jump_ops
            .iter()
            .map(|l| OperatorMatrix::new(l.matrix().scale(c.sqrt())).expect("finite"))
            .collect();
        ModelSpec {
            label: self.label.clone(),
            hamiltonian: h,
            jump_ops: jumps,
            p0: self.p0.clone(),
        }
    }

    pub fn with_p0(&self, p0: OrthProjection, tol: &Tolerances) -> Result<ModelSpec> {
        ModelSpec::new(
            self.label.clone(),
            self.hamiltonian.clone(),
            self.jump_ops.clone(),
            p0,
            tol,
        )
    }
}

/// Schrödinger-picture GKLS matrix from `G` and the jump operators.
pub fn gkls_schrodinger(g: &CMatrix, jumps: &[&CMatrix]) -> CMatrix {
    let mut m = left_right(g, &g.adjoint());
    for l in jumps {
        m += sandwich(l, &l.adjoint());
    }
    m
}

/// The generator in the requested picture. The Schrödinger matrix is built
/// directly; the Heisenberg matrix is its adjoint under `⟨a, b⟩ = tr(a† b)`.
pub fn build_generator(spec: &ModelSpec, picture: Picture) -> SuperopMatrix {
    let g = spec.g_operator();
    let jumps: Vec<&CMatrix> = spec.jump_ops.iter().map(|l| l.matrix()).collect();
    let schr = SuperopMatrix {
        matrix: gkls_schrodinger(&g, &jumps),
        picture: Picture::Schrodinger,
        op_dim: spec.dim(),
    };
    match picture {
        Picture::Schrodinger => schr,
        Picture::Heisenberg => schr.dual(),
    }
}

/// `devec(e^{t M} vec(x))`.
pub fn apply_semigroup(gen: &SuperopMatrix, t: f64, x: &CMatrix) -> Result<CMatrix> {
    if t < 0.0 {
        return Err(QssError::NegativeTime(t));
    }
    if x.nrows() != gen.op_dim || x.ncols() != gen.op_dim {
        return Err(QssError::Shape(format!(
            "operator is {}x{}, generator acts on {}x{}",
            x.nrows(),
            x.ncols(),
            gen.op_dim,
            gen.op_dim
        )));
    }
    if t == 0.0 {
        return Ok(x.clone());
    }
    let e = expm(&gen.matrix, t)?;
    Ok(unvec(&(e * vectorize(x)), gen.op_dim))
}

/// `|tr(x 𝒯_t(y)) − tr(𝒯_{t*}(x) y)|`.
pub fn duality_check(spec: &ModelSpec, t: f64, x: &CMatrix, y: &CMatrix) -> Result<f64> {
    let heis = build_generator(spec, Picture::Heisenberg);
    let schr = build_generator(spec, Picture::Schrodinger);
    let ty = apply_semigroup(&heis, t, y)?;
    let tx = apply_semigroup(&schr, t, x)?;
    let lhs: Complex64 = (x * ty).trace();
    let rhs: Complex64 = (tx * y).trace();
    Ok((lhs - rhs).norm())
}

/// Choi matrix `Σ_{ij} E_ij ⊗ Φ(E_ij)` of a superoperator matrix.
pub fn choi_matrix(map: &CMatrix, d: usize) -> CMatrix {
    let mut choi = CMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            let mut e = CMatrix::zeros(d, d);
            e[(i, j)] = crate::linalg::ONE;
            let image = unvec(&(map * vectorize(&e)), d);
            choi += kron(&e, &image);
        }
    }
    choi
}

/// `max |Φ(x†) − Φ(x)†|`; zero for Hermiticity-preserving maps.
pub fn hermiticity_preservation_defect(gen: &SuperopMatrix, x: &CMatrix) -> f64 {
    let a = gen.apply(&x.adjoint());
    let b = gen.apply(x).adjoint();
    crate::linalg::max_abs(&(a - b))
}
