//! Dense complex operator algebra.
//!
//! Everything downstream works with small dense matrices (Hilbert dimension
//! up to ~16, superoperators up to 256×256), so the routines here favour
//! robustness over speed: Hermitian problems go through a Hermitian
//! eigensolver, general spectra through a complex Schur form, and null
//! spaces through an SVD.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QssError, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Numerical tolerances shared by every stage of the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub herm: f64,
    pub trace: f64,
    pub psd: f64,
    pub eig: f64,
    pub cluster: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            herm: 1e-10,
            trace: 1e-10,
            psd: 1e-9,
            eig: 1e-9,
            cluster: 1e-8,
        }
    }
}

/// A square complex matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix(CMatrix);

impl OperatorMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(QssError::Shape(format!(
                "operator must be a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                let z = m[(r, c)];
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(QssError::NonFinite { row: r, col: c });
                }
            }
        }
        Ok(OperatorMatrix(m))
    }

    /// Row-major construction.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(QssError::Shape("rows of unequal length".into()));
        }
        Self::new(CMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(QssError::Shape("rows of unequal length".into()));
        }
        Self::new(CMatrix::from_fn(d, d, |i, j| Complex64::new(rows[i][j], 0.0)))
    }

    pub fn identity(d: usize) -> Self {
        OperatorMatrix(CMatrix::identity(d, d))
    }

    pub fn zeros(d: usize) -> Self {
        OperatorMatrix(CMatrix::zeros(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        OperatorMatrix(self.0.adjoint())
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.0)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Row-major nested `[re, im]` pairs, the wire format for matrices.
    pub fn to_pairs(&self) -> Vec<Vec<[f64; 2]>> {
        matrix_to_pairs(&self.0)
    }
}

impl From<OperatorMatrix> for CMatrix {
    fn from(m: OperatorMatrix) -> Self {
        m.0
    }
}

pub fn matrix_to_pairs(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// A state: Hermitian, positive semidefinite, unit trace.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(OperatorMatrix);

impl DensityMatrix {
    pub fn new(op: OperatorMatrix, tol: &Tolerances) -> Result<Self> {
        let defect = op.hermiticity_defect();
        if defect > tol.herm {
            return Err(QssError::NotDensity(format!(
                "not Hermitian (deviation {defect:.3e})"
            )));
        }
        let tr = op.trace();
        if (tr - ONE).norm() > tol.trace {
            return Err(QssError::NotDensity(format!(
                "trace {} differs from 1",
                tr.re
            )));
        }
        let min = min_eigenvalue_hermitian(op.matrix());
        if min < -tol.psd {
            return Err(QssError::NotDensity(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(DensityMatrix(op))
    }

    /// Symmetrizes and renormalizes a matrix that is a density up to round-off.
    pub fn from_unnormalized(m: &CMatrix, tol: &Tolerances) -> Result<Self> {
        let h = hermitian_part(m);
        let tr = h.trace().re;
        if tr.abs() <= f64::MIN_POSITIVE {
            return Err(QssError::NotDensity("zero trace".into()));
        }
        Self::new(OperatorMatrix::new(h.unscale(tr))?, tol)
    }

    pub fn maximally_mixed(d: usize) -> Self {
        DensityMatrix(OperatorMatrix(CMatrix::identity(d, d).unscale(d as f64)))
    }

    pub fn pure(psi: &CVector) -> Result<Self> {
        let n = psi.norm();
        if n == 0.0 {
            return Err(QssError::NotDensity("zero vector".into()));
        }
        let v = psi.unscale(n);
        Ok(DensityMatrix(OperatorMatrix::new(&v * v.adjoint())?))
    }

    pub fn op(&self) -> &OperatorMatrix {
        &self.0
    }

    pub fn matrix(&self) -> &CMatrix {
        self.0.matrix()
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn purity(&self) -> f64 {
        (self.matrix() * self.matrix()).trace().re
    }
}

/// An orthogonal projection together with its rank.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthProjection {
    op: OperatorMatrix,
    rank: usize,
}

impl OrthProjection {
    pub fn new(op: OperatorMatrix, tol: &Tolerances) -> Result<Self> {
        let m = op.matrix();
        let defect = hermiticity_defect(m);
        if defect > tol.herm {
            return Err(QssError::NotProjection(format!(
                "not self-adjoint (deviation {defect:.3e})"
            )));
        }
        let idem = max_abs(&(m * m - m));
        if idem > tol.herm {
            return Err(QssError::NotProjection(format!(
                "not idempotent (deviation {idem:.3e})"
            )));
        }
        let (evals, _) = hermitian_eigen(m);
        let mut rank = 0;
        for e in evals {
            if (e - 1.0).abs() <= tol.psd {
                rank += 1;
            } else if e.abs() > tol.psd {
                return Err(QssError::NotProjection(format!("eigenvalue {e} not in {{0, 1}}")));
            }
        }
        Ok(OrthProjection { op, rank })
    }

    /// Projection onto the span of the given canonical basis vectors.
    pub fn from_basis_indices(dim: usize, indices: &[usize]) -> Result<Self> {
        let mut m = CMatrix::zeros(dim, dim);
        for &i in indices {
            if i >= dim {
                return Err(QssError::NotProjection(format!(
                    "basis index {i} out of range for dimension {dim}"
                )));
            }
            m[(i, i)] = ONE;
        }
        let rank = (0..dim).filter(|&i| m[(i, i)] == ONE).count();
        Ok(OrthProjection {
            op: OperatorMatrix(m),
            rank,
        })
    }

    pub fn complement(&self) -> OrthProjection {
        let d = self.dim();
        OrthProjection {
            op: OperatorMatrix(CMatrix::identity(d, d) - self.op.matrix()),
            rank: d - self.rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn op(&self) -> &OperatorMatrix {
        &self.op
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    /// Orthonormal basis of the range as the columns of a `dim × rank`
    /// isometry. Diagonal projections use canonical basis vectors in order.
    pub fn range_isometry(&self) -> CMatrix {
        let m = self.matrix();
        let d = self.dim();
        let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || m[(i, j)].norm() < 1e-14));
        if diagonal {
            let cols: Vec<usize> = (0..d).filter(|&i| m[(i, i)].re > 0.5).collect();
            let mut v = CMatrix::zeros(d, cols.len());
            for (k, &i) in cols.iter().enumerate() {
                v[(i, k)] = ONE;
            }
            return v;
        }
        let (evals, vecs) = hermitian_eigen(m);
        let cols: Vec<usize> = (0..d).filter(|&k| evals[k] > 0.5).collect();
        let mut v = CMatrix::zeros(d, cols.len());
        for (k, &c) in cols.iter().enumerate() {
            v.set_column(k, &vecs.column(c));
        }
        v
    }
}

/// Result of a positive-semidefiniteness test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsdReport {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
}

pub fn psd_check(a: &CMatrix, tol: f64) -> Result<PsdReport> {
    let defect = hermiticity_defect(a);
    if defect > tol {
        return Err(QssError::NotHermitian { deviation: defect });
    }
    let min = min_eigenvalue_hermitian(a);
    Ok(PsdReport {
        is_psd: min >= -tol,
        min_eigenvalue: min,
    })
}

pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    max_abs(&(a - a.adjoint()))
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).unscale(2.0)
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigenvalues (ascending) and eigenvectors (columns) of the Hermitian part of `a`.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitian_part(a));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vecs)
}

pub fn min_eigenvalue_hermitian(a: &CMatrix) -> f64 {
    hermitian_eigen(a).0[0]
}

/// `e^{t a}` by Padé scaling and squaring.
pub fn expm(a: &CMatrix, t: f64) -> Result<CMatrix> {
    if a.nrows() != a.ncols() {
        return Err(QssError::Shape(format!(
            "expm needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !t.is_finite() {
        return Err(QssError::Shape(format!("non-finite time {t}")));
    }
    let n = a.nrows();
    if t == 0.0 || a.iter().all(|z| *z == ZERO) {
        return Ok(CMatrix::identity(n, n));
    }
    Ok(a.scale(t).exp())
}

/// One eigenvalue with a unit-norm right eigenvector.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: Complex64,
    pub vector: CVector,
    /// `‖a v − λ v‖`.
    pub residual: f64,
}

/// All eigenvalues of a square matrix, sorted by descending real part
/// (ties broken by descending imaginary part).
pub fn eigenvalues(a: &CMatrix) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(QssError::Shape("eigenvalues of a non-square matrix".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 100 * n.max(10))
        .ok_or(QssError::EigenNonConvergence { partial: Vec::new() })?;
    let (_, t) = schur.unpack();
    let mut values: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    sort_spectrum(&mut values);
    Ok(values)
}

pub fn sort_spectrum(values: &mut [Complex64]) {
    values.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
}

/// Groups sorted eigenvalues whose mutual distance is within `tol`
/// (single linkage) and returns `(mean, members)` per group.
pub fn cluster_eigenvalues(values: &[Complex64], tol: f64) -> Vec<(Complex64, Vec<usize>)> {
    let n = values.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (values[i] - values[j]).norm() <= tol {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                if a != b {
                    label[b.max(a)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<(Complex64, Vec<usize>)> = Vec::new();
    let mut root_of: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let r = find(&mut label, i);
        match root_of[r] {
            Some(g) => groups[g].1.push(i),
            None => {
                root_of[r] = Some(groups.len());
                groups.push((ZERO, vec![i]));
            }
        }
    }
    for g in &mut groups {
        let s: Complex64 = g.1.iter().map(|&i| values[i]).sum();
        g.0 = s.unscale(g.1.len() as f64);
    }
    groups
}

/// Eigenpairs of a general complex matrix.
///
/// Eigenvalues come from the Schur form. Each cluster of (numerically)
/// coincident eigenvalues gets the right singular vectors of `a − λ̄` with
/// the smallest singular values, which spans the eigenspace whenever the
/// eigenvalue is semisimple.
pub fn eig_general(a: &CMatrix, tol: &Tolerances) -> Result<Vec<EigenPair>> {
    let values = eigenvalues(a)?;
    let n = values.len();
    let mut pairs = Vec::with_capacity(n);
    for (mean, members) in cluster_eigenvalues(&values, tol.cluster) {
        let shifted = a - CMatrix::identity(n, n) * mean;
        let basis = smallest_right_singular_vectors(&shifted, members.len());
        for (k, &i) in members.iter().enumerate() {
            let v = basis[k].clone();
            let residual = (a * &v - &v * values[i]).norm();
            pairs.push(EigenPair {
                value: values[i],
                vector: v,
                residual,
            });
        }
    }
    pairs.sort_by(|p, q| {
        q.value
            .re
            .total_cmp(&p.value.re)
            .then(q.value.im.total_cmp(&p.value.im))
    });
    Ok(pairs)
}

/// Right singular vectors for the `k` smallest singular values, ordered
/// from smallest upwards.
pub fn smallest_right_singular_vectors(a: &CMatrix, k: usize) -> Vec<CVector> {
    let (sv, v) = right_singular_system(a);
    let n = sv.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    order
        .into_iter()
        .take(k)
        .map(|i| v.column(i).into_owned())
        .collect()
}

/// Orthonormal basis of `{v : ‖a v‖ ≤ tol}` from the SVD.
pub fn null_space(a: &CMatrix, tol: f64) -> Vec<CVector> {
    let (sv, v) = right_singular_system(a);
    let mut idx: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= tol).collect();
    idx.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    idx.into_iter().map(|i| v.column(i).into_owned()).collect()
}

/// Singular values of a square matrix and the matching right singular
/// vectors as columns.
fn right_singular_system(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.ncols();
    // Pad to square so the SVD returns a full set of right vectors.
    let padded = if a.nrows() < n {
        let mut p = CMatrix::zeros(n, n);
        p.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = SVD::new(padded, false, true);
    let vt = svd.v_t.expect("v_t requested");
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    // Rows of V† are conjugated right singular vectors.
    let v = vt.adjoint();
    let cols = sv.len();
    (sv, v.columns(0, cols).into_owned())
}

/// Modified Gram–Schmidt over complex vectors; drops vectors whose residual
/// norm falls below `tol`.
pub fn orthonormalize(vectors: &[CVector], tol: f64) -> Vec<CVector> {
    let mut basis: Vec<CVector> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dotc(&w);
                w -= b * c;
            }
        }
        let n = w.norm();
        if n > tol {
            basis.push(w.unscale(n));
        }
    }
    basis
}

/// Real inner product `Re tr(a† b)` on Hermitian matrices.
pub fn hs_real_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Gram–Schmidt for Hermitian matrices viewed as a real vector space.
pub fn orthonormalize_hermitian(mats: &[CMatrix], tol: f64) -> Vec<CMatrix> {
    let mut basis: Vec<CMatrix> = Vec::new();
    for m in mats {
        let mut w = m.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = hs_real_inner(b, &w);
                w -= b * Complex64::new(c, 0.0);
            }
        }
        let n = w.norm();
        if n > tol {
            basis.push(w.unscale(n));
        }
    }
    basis
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Entrywise conjugate (no transpose).
pub fn conj(a: &CMatrix) -> CMatrix {
    a.map(|z| z.conj())
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}
