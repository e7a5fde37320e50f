//! Subharmonicity, the restricted semigroup on `range(p0⊥)`, the absorption
//! operator `A(p0)` and irreducibility of the restriction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{QssError, Result};
use crate::linalg::{
    c, eig_general, expm, hermitian_part, max_abs, min_eigenvalue_hermitian, null_space,
    orthonormalize, CMatrix, CVector, OperatorMatrix, Tolerances,
};
use crate::model::{
    build_generator, gkls_schrodinger, sandwich, vectorize, ModelSpec, Picture, SuperopMatrix,
};

/// Times at which `𝒯_t(p0) ≥ p0` is sampled.
pub const SUBHARMONIC_TIMES: [f64; 4] = [0.1, 0.5, 1.0, 5.0];

#[derive(Clone, Debug)]
pub struct SubharmonicReport {
    /// `max(‖p0⊥ L_l p0‖, ‖p0⊥ G p0‖)`.
    pub algebraic_residual: f64,
    /// Smallest eigenvalue of `𝒯_t(p0) − p0` over the sampled times.
    pub semigroup_residual: f64,
    pub verdict: bool,
}

pub fn check_subharmonic(spec: &ModelSpec, tol: &Tolerances) -> SubharmonicReport {
    let p0 = spec.p0().matrix();
    let perp = spec.p0_perp().matrix().clone();
    let mut algebraic = (&perp * spec.g_operator() * p0).norm();
    for l in spec.jump_ops() {
        algebraic = algebraic.max((&perp * l.matrix() * p0).norm());
    }
    let heis = build_generator(spec, Picture::Heisenberg);
    let mut semigroup = f64::INFINITY;
    for t in SUBHARMONIC_TIMES {
        let e = expm(heis.matrix(), t).expect("square generator");
        let tp = heis_apply(&e, p0, spec.dim());
        semigroup = semigroup.min(min_eigenvalue_hermitian(&(tp - p0)));
    }
    let scale = 1.0 + spec.g_operator().norm();
    SubharmonicReport {
        algebraic_residual: algebraic,
        semigroup_residual: semigroup,
        verdict: algebraic <= tol.eig * scale && semigroup >= -tol.psd,
    }
}

fn heis_apply(e: &CMatrix, x: &CMatrix, d: usize) -> CMatrix {
    CMatrix::from_column_slice(d, d, (e * vectorize(x)).as_slice())
}

/// The compression of the generator to `range(p0⊥)` in an orthonormal basis
/// of that range.
#[derive(Clone, Debug)]
pub struct RestrictedGenerator {
    /// `rank(p0⊥)`.
    pub m: usize,
    /// `d × m`, columns are an orthonormal basis of `range(p0⊥)`.
    pub isometry: CMatrix,
    /// Matrix of `𝓛̂*` acting on `m × m` operators.
    pub gen_schr: SuperopMatrix,
    /// Matrix of `𝓛̂`.
    pub gen_heis: SuperopMatrix,
    /// `V† G V`.
    pub g_hat: CMatrix,
    /// `V† L_l V`.
    pub jumps_hat: Vec<CMatrix>,
}

impl RestrictedGenerator {
    /// `ρ ↦ V ρ V†`.
    pub fn embed(&self, rho: &CMatrix) -> CMatrix {
        &self.isometry * rho * self.isometry.adjoint()
    }

    /// `σ ↦ V† σ V`.
    pub fn compress(&self, sigma: &CMatrix) -> CMatrix {
        self.isometry.adjoint() * sigma * &self.isometry
    }

    /// `𝒯̂_{t*}(ρ)` for an `m × m` operator.
    pub fn evolve_schr(&self, t: f64, rho: &CMatrix) -> Result<CMatrix> {
        crate::model::apply_semigroup(&self.gen_schr, t, rho)
    }

    /// `𝒯̂_t(x)` for an `m × m` operator.
    pub fn evolve_heis(&self, t: f64, x: &CMatrix) -> Result<CMatrix> {
        crate::model::apply_semigroup(&self.gen_heis, t, x)
    }

    /// `‖𝓛̂*` built from `ĝ` and `L̂_l` minus the compressed matrix`‖`.
    pub fn gkls_consistency(&self) -> f64 {
        let jumps: Vec<&CMatrix> = self.jumps_hat.iter().collect();
        let direct = gkls_schrodinger(&self.g_hat, &jumps);
        max_abs(&(direct - self.gen_schr.matrix()))
    }

    /// Smallest eigenvalue of `1 − 𝒯̂_t(1)`; non-negative for a sub-unital
    /// restriction.
    pub fn subunitality_margin(&self, t: f64) -> Result<f64> {
        let id = CMatrix::identity(self.m, self.m);
        let img = self.evolve_heis(t, &id)?;
        Ok(min_eigenvalue_hermitian(&(id - img)))
    }
}

pub fn restrict(spec: &ModelSpec, tol: &Tolerances) -> Result<RestrictedGenerator> {
    let report = check_subharmonic(spec, tol);
    if !report.verdict {
        return Err(QssError::NotSubharmonic {
            algebraic: report.algebraic_residual,
            semigroup: report.semigroup_residual,
        });
    }
    Ok(restrict_unchecked(spec))
}

/// Compression without the subharmonicity precondition.
pub fn restrict_unchecked(spec: &ModelSpec) -> RestrictedGenerator {
    let v = spec.p0_perp().range_isometry();
    let m = v.ncols();
    let full = build_generator(spec, Picture::Schrodinger);
    let embed = sandwich(&v, &v.adjoint());
    let compress = sandwich(&v.adjoint(), &v);
    let gen = compress * full.matrix() * embed;
    let gen_schr = SuperopMatrix::new(gen, Picture::Schrodinger).expect("m² × m²");
    let gen_heis = gen_schr.dual();
    let g_hat = v.adjoint() * spec.g_operator() * &v;
    let jumps_hat = spec
        .jump_ops()
        .iter()
        .map(|l| v.adjoint() * l.matrix() * &v)
        .collect();
    RestrictedGenerator {
        m,
        isometry: v,
        gen_schr,
        gen_heis,
        g_hat,
        jumps_hat,
    }
}

#[derive(Clone, Debug)]
pub struct AbsorptionReport {
    /// `A(p0) = lim 𝒯_t(p0)`.
    pub a_op: OperatorMatrix,
    pub is_absorbing: bool,
    /// `‖𝓛(A(p0))‖`.
    pub residual_harmonic: f64,
    /// Max-entry distance between the spectral limit and `𝒯_T(p0)` at the
    /// doubling horizon.
    pub convergence_gap: f64,
    /// Horizon `T` at which `‖𝒯_{2T}(p0) − 𝒯_T(p0)‖ ≤ 1e-8`.
    pub doubling_horizon: f64,
}

const ABSORPTION_STEP_TOL: f64 = 1e-8;
const ABSORPTION_MAX_HORIZON: f64 = 65536.0;
const ABSORBING_TOL: f64 = 1e-6;

/// `A(p0)` as the kernel spectral projection of the Heisenberg generator
/// applied to `p0`, cross-validated by doubling the time horizon.
///
/// The kernel projection equals the Cesàro mean of `𝒯_t`, which discards
/// any rotation on purely imaginary peripheral eigenvalues.
pub fn absorption_operator(spec: &ModelSpec, tol: &Tolerances) -> Result<AbsorptionReport> {
    let sub = check_subharmonic(spec, tol);
    if !sub.verdict {
        return Err(QssError::NotSubharmonic {
            algebraic: sub.algebraic_residual,
            semigroup: sub.semigroup_residual,
        });
    }
    let d = spec.dim();
    let heis = build_generator(spec, Picture::Heisenberg);
    let m = heis.matrix();
    let p0 = spec.p0().matrix();

    let null_tol = 1e-7 * (1.0 + m.norm());
    let right = null_space(m, null_tol);
    let left = null_space(&m.adjoint(), null_tol);
    let spectral = if right.is_empty() || right.len() != left.len() {
        None
    } else {
        let k = right.len();
        let r = CMatrix::from_columns(&right);
        let l = CMatrix::from_columns(&left);
        let gram = l.adjoint() * &r;
        gram.try_inverse().map(|inv| {
            let coeff = inv * l.adjoint() * vectorize(p0);
            debug_assert_eq!(coeff.len(), k);
            let v = r * coeff;
            hermitian_part(&CMatrix::from_column_slice(d, d, v.as_slice()))
        })
    };

    let mut horizon = 1.0;
    let mut e = expm(m, horizon)?;
    let mut current = heis_apply(&e, p0, d);
    let limit = loop {
        let e2 = &e * &e;
        let next = heis_apply(&e2, p0, d);
        let gap = max_abs(&(&next - &current));
        if gap <= ABSORPTION_STEP_TOL {
            break next;
        }
        if 2.0 * horizon >= ABSORPTION_MAX_HORIZON {
            return Err(QssError::AbsorptionNonConvergence {
                horizon: 2.0 * horizon,
                gap,
            });
        }
        horizon *= 2.0;
        e = e2;
        current = next;
    };
    let limit = hermitian_part(&limit);
    let a = spectral.unwrap_or_else(|| limit.clone());
    let convergence_gap = max_abs(&(&a - &limit));
    let residual_harmonic = heis.apply(&a).norm();
    let is_absorbing = max_abs(&(&a - CMatrix::identity(d, d))) <= ABSORBING_TOL;
    Ok(AbsorptionReport {
        a_op: OperatorMatrix::new(a)?,
        is_absorbing,
        residual_harmonic,
        convergence_gap,
        doubling_horizon: 2.0 * horizon,
    })
}

#[derive(Clone, Debug)]
pub struct IrreducibilityReport {
    pub verdict: bool,
    /// Orthonormal basis (restricted coordinates) of the smallest proper
    /// common invariant subspace that was found.
    pub witness: Option<Vec<CVector>>,
    pub note: String,
}

const IRREDUCIBILITY_SEED: u64 = 0x5153_5321;
const RANDOM_SEED_ROUNDS: usize = 8;

/// Searches for a common invariant subspace of `ĝ` and the `L̂_l`.
///
/// Any common invariant subspace contains an eigenvector of every linear
/// combination of the operators, so seeds are the eigenvectors of `ĝ` and of
/// eight random combinations; each seed is grown to the smallest invariant
/// subspace containing it.
pub fn check_irreducible(restr: &RestrictedGenerator) -> IrreducibilityReport {
    let m = restr.m;
    let mut ops = vec![restr.g_hat.clone()];
    ops.extend(restr.jumps_hat.iter().cloned());
    if m == 1 {
        return IrreducibilityReport {
            verdict: true,
            witness: None,
            note: "one-dimensional restriction".into(),
        };
    }
    let tol = Tolerances::default();
    let mut seeds: Vec<CVector> = Vec::new();
    let push_eigvecs = |a: &CMatrix, seeds: &mut Vec<CVector>| {
        if let Ok(pairs) = eig_general(a, &tol) {
            seeds.extend(pairs.into_iter().map(|p| p.vector));
        }
    };
    push_eigvecs(&restr.g_hat, &mut seeds);
    let mut rng = ChaCha8Rng::seed_from_u64(IRREDUCIBILITY_SEED);
    for _ in 0..RANDOM_SEED_ROUNDS {
        let mut comb = CMatrix::zeros(m, m);
        for op in &ops {
            let w = c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            comb += op * w;
        }
        push_eigvecs(&comb, &mut seeds);
    }

    let scale = 1.0 + ops.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let mut best: Option<Vec<CVector>> = None;
    for seed in &seeds {
        let span = invariant_closure(seed, &ops, 1e-8 * scale);
        if span.len() < m && best.as_ref().is_none_or(|b| span.len() < b.len()) {
            best = Some(span);
        }
    }
    match best {
        Some(w) => IrreducibilityReport {
            verdict: false,
            note: format!("reducible: invariant subspace of dimension {}", w.len()),
            witness: Some(w),
        },
        None => IrreducibilityReport {
            verdict: true,
            witness: None,
            note: "irreducible (no witness found)".into(),
        },
    }
}

/// Smallest subspace containing `seed` and invariant under every operator.
pub fn invariant_closure(seed: &CVector, ops: &[CMatrix], tol: f64) -> Vec<CVector> {
    let mut basis = orthonormalize(std::slice::from_ref(seed), tol);
    loop {
        let mut candidates = basis.clone();
        for a in ops {
            for b in &basis {
                candidates.push(a * b);
            }
        }
        let next = orthonormalize(&candidates, tol);
        if next.len() == basis.len() {
            return basis;
        }
        basis = next;
    }
}
