//! Quasi-stationary states from the spectrum of the restricted predual
//! generator.
//!
//! A state `ν` supported on `range(p0⊥)` is quasi-stationary iff
//! `𝓛̂*(ν) = −αν` for some `α ≥ 0`, so the search runs over real
//! non-positive eigenvalues of `𝓛̂*`: each one contributes the trace-one
//! positive part of its (Hermitian) eigenspace.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{QssError, Result};
use crate::linalg::{
    c, cluster_eigenvalues, eigenvalues, hermitian_eigen, min_eigenvalue_hermitian, null_space,
    orthonormalize_hermitian, CMatrix, DensityMatrix, OperatorMatrix, Tolerances,
};
use crate::model::{apply_semigroup, build_generator, vectorize, ModelSpec, Picture};
use crate::structure::{restrict_unchecked, IrreducibilityReport, RestrictedGenerator};

/// Real eigenvalue of `𝓛̂*` with a Hermitian basis of its eigenspace.
#[derive(Clone, Debug)]
pub struct EigenCandidate {
    pub alpha: f64,
    /// Cluster mean of the eigenvalue (≈ −α).
    pub eigenvalue: Complex64,
    pub algebraic_multiplicity: usize,
    /// Orthonormal (Hilbert–Schmidt) Hermitian `m × m` eigenvectors.
    pub herm_basis: Vec<CMatrix>,
    pub defective: bool,
    pub warnings: Vec<String>,
}

/// Radius within which numerically split eigenvalues of a defective cluster
/// are recombined. A Jordan block of size `k` splits by roughly `ε^{1/k}`.
const DEFECT_MERGE_RADIUS: f64 = 1e-4;

pub fn real_eigen_candidates(
    restr: &RestrictedGenerator,
    tol: &Tolerances,
) -> Result<Vec<EigenCandidate>> {
    let m = restr.gen_schr.matrix();
    let n = m.nrows();
    let scale = 1.0 + m.norm();
    let spectrum = eigenvalues(m)?;
    let clusters = merge_defective_clusters(m, &spectrum, tol, scale);

    let mut out = Vec::new();
    for (mean, members) in clusters {
        if mean.im.abs() > tol.eig || mean.re > tol.eig {
            continue;
        }
        let lambda = mean.re;
        let k = members.len();
        let shifted = m - CMatrix::identity(n, n) * c(lambda, 0.0);
        let mut kernel = null_space(&shifted, null_tolerance(tol, scale, k));
        kernel.truncate(k);
        let op_dim = restr.m;
        let mut herm = Vec::with_capacity(2 * kernel.len());
        for v in &kernel {
            let x = CMatrix::from_column_slice(op_dim, op_dim, v.as_slice());
            herm.push(&x + x.adjoint());
            herm.push((&x - x.adjoint()) * c(0.0, 1.0));
        }
        let mut basis = orthonormalize_hermitian(&herm, 1e-6);
        basis.truncate(kernel.len());
        let mut warnings = Vec::new();
        let defective = kernel.len() < k;
        if defective {
            warnings.push(format!(
                "eigenvalue {lambda:.12} is defective (algebraic {k}, geometric {}); generalized eigenvectors excluded",
                kernel.len()
            ));
        }
        for b in &basis {
            let r = (&shifted * vectorize(b)).norm();
            if r > 1e-8 {
                warnings.push(format!("Hermitian eigenvector residual {r:.3e}"));
            }
        }
        out.push(EigenCandidate {
            alpha: (-lambda).max(0.0),
            eigenvalue: c(lambda, mean.im),
            algebraic_multiplicity: k,
            herm_basis: basis,
            defective,
            warnings,
        });
    }
    out.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    Ok(out)
}

fn null_tolerance(tol: &Tolerances, scale: f64, multiplicity: usize) -> f64 {
    // Multiple eigenvalues are only resolved to ~ε^{1/k}.
    let base = if multiplicity > 1 { 1e-7 } else { tol.cluster };
    base * scale
}

/// Clusters the spectrum at `tol.cluster`, then joins neighbouring clusters
/// within [`DEFECT_MERGE_RADIUS`] when the joined mean has a smaller
/// eigenspace than the joined count (a perturbed Jordan block).
fn merge_defective_clusters(
    m: &CMatrix,
    spectrum: &[Complex64],
    tol: &Tolerances,
    scale: f64,
) -> Vec<(Complex64, Vec<usize>)> {
    let fine = cluster_eigenvalues(spectrum, tol.cluster);
    let coarse = cluster_eigenvalues(spectrum, DEFECT_MERGE_RADIUS * scale);
    let n = m.nrows();
    let mut out = Vec::new();
    for (mean, members) in coarse {
        let inner: Vec<_> = fine
            .iter()
            .filter(|(_, f)| members.contains(&f[0]))
            .cloned()
            .collect();
        if inner.len() == 1 {
            out.push((mean, members));
            continue;
        }
        let shifted = m - CMatrix::identity(n, n) * mean;
        let geometric = null_space(&shifted, 1e-7 * scale).len();
        if geometric < members.len() {
            out.push((mean, members));
        } else {
            out.extend(inner);
        }
    }
    out
}

/// Largest real part over eigenvalue clusters, with perturbed Jordan blocks
/// recombined first.
pub fn spectral_abscissa(
    restr: &RestrictedGenerator,
    spectrum: &[Complex64],
    tol: &Tolerances,
) -> f64 {
    if spectrum.is_empty() {
        return 0.0;
    }
    let m = restr.gen_schr.matrix();
    merge_defective_clusters(m, spectrum, tol, 1.0 + m.norm())
        .iter()
        .map(|(mean, _)| mean.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// A verified quasi-stationary state.
#[derive(Clone, Debug)]
pub struct QssCertificate {
    pub alpha: f64,
    /// `d × d`, supported on `range(p0⊥)`.
    pub nu: DensityMatrix,
    /// The same state in restricted coordinates.
    pub nu_restricted: CMatrix,
    /// `‖𝓛̂*(ν) + αν‖`.
    pub residual_eigen: f64,
    /// Max over sampled `t` of the normalized-compression residual.
    pub residual_defn: f64,
    pub is_perron: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyKind {
    Singleton,
    /// Segment `anchor + x·direction`, `x ∈ [lo, hi]`.
    Segment,
    /// Eigenspace of dimension ≥ 3: line-endpoint scan only.
    PartialScan,
}

#[derive(Clone, Debug)]
pub struct ParamInterval {
    /// Traceless Hermitian direction (restricted coordinates), scaled so its
    /// largest-modulus entry has modulus one.
    pub direction: CMatrix,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug)]
pub struct QssFamily {
    pub alpha: f64,
    pub herm_basis: Vec<CMatrix>,
    /// Singleton state, or the midpoint of the admissible segment.
    pub anchor: QssCertificate,
    pub kind: FamilyKind,
    pub param_interval: Option<ParamInterval>,
    /// Extremal states: segment endpoints, or scan endpoints.
    pub extremal: Vec<QssCertificate>,
    pub defective: bool,
    pub notes: Vec<String>,
}

impl QssFamily {
    pub fn is_perron(&self) -> bool {
        self.anchor.is_perron
    }

    /// Member of a segment family at parameter `x` (restricted coordinates).
    pub fn member(&self, x: f64) -> Option<CMatrix> {
        self.param_interval
            .as_ref()
            .map(|p| &self.anchor.nu_restricted + &p.direction * c(x, 0.0))
    }
}

#[derive(Clone, Debug)]
pub struct Rejection {
    pub alpha: f64,
    pub eigenspace_dim: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct QssExtraction {
    pub families: Vec<QssFamily>,
    pub rejected: Vec<Rejection>,
}

/// Sample times for the normalized-compression residual.
pub const DEFINITION_TIMES: [f64; 4] = [0.1, 0.5, 1.0, 2.0];
/// Sample times for `𝒯̂_{t*}(ν) = e^{−αt}ν`.
pub const EXPONENTIAL_LAW_TIMES: [f64; 3] = [0.25, 1.0, 4.0];
/// Grid for `f(t+s) = f(t)f(s)`.
pub const MULTIPLICATIVITY_GRID: [f64; 3] = [0.2, 0.7, 1.5];
/// Measurement times for the repeated-measurement identity.
pub const REPEATED_TIMES: [f64; 3] = [0.3, 0.7, 1.1];
const SCAN_DIRECTIONS: usize = 64;
const SCAN_SEED: u64 = 0x5153_5364;

pub fn extract_qss(
    spec: &ModelSpec,
    restr: &RestrictedGenerator,
    candidates: &[EigenCandidate],
    tol: &Tolerances,
) -> Result<QssExtraction> {
    let mut out = QssExtraction::default();
    for cand in candidates {
        let dim = cand.herm_basis.len();
        let reject = |reason: String| Rejection {
            alpha: cand.alpha,
            eigenspace_dim: dim,
            reason,
        };
        let traces: Vec<f64> = cand.herm_basis.iter().map(|b| b.trace().re).collect();
        let tnorm2: f64 = traces.iter().map(|t| t * t).sum();
        if dim == 0 {
            out.rejected.push(reject("empty eigenspace".into()));
            continue;
        }
        if tnorm2.sqrt() < 1e-9 {
            out.rejected
                .push(reject("eigenspace is traceless: no state representative".into()));
            continue;
        }
        // Trace-one base point: least-norm element of the affine slice.
        let mut base = CMatrix::zeros(restr.m, restr.m);
        for (b, t) in cand.herm_basis.iter().zip(&traces) {
            base += b * c(t / tnorm2, 0.0);
        }
        let base = sym(&base);
        let directions = traceless_directions(&cand.herm_basis, &traces);
        let make = |nu: &CMatrix| certificate(spec, restr, cand.alpha, nu, tol);
        let mut notes = cand.warnings.clone();

        match directions.len() {
            0 => {
                let min = min_eigenvalue_hermitian(&base);
                if min < -tol.psd {
                    out.rejected.push(reject(format!(
                        "normalized eigenvector is not positive (min eigenvalue {min:.6e})"
                    )));
                    continue;
                }
                match make(&base) {
                    Ok(anchor) => out.families.push(QssFamily {
                        alpha: cand.alpha,
                        herm_basis: cand.herm_basis.clone(),
                        anchor,
                        kind: FamilyKind::Singleton,
                        param_interval: None,
                        extremal: Vec::new(),
                        defective: cand.defective,
                        notes,
                    }),
                    Err(e) => out.rejected.push(reject(format!("certificate failed: {e}"))),
                }
            }
            1 => {
                let dir = canonical_direction(&directions[0]);
                let seg = match psd_segment(&base, &dir, tol) {
                    Some(s) => s,
                    None => {
                        out.rejected.push(reject(
                            "empty PSD slice: no positive trace-one element".into(),
                        ));
                        continue;
                    }
                };
                let mid = 0.5 * (seg.0 + seg.1);
                let anchor_nu = sym(&(&base + &dir * c(mid, 0.0)));
                let half = 0.5 * (seg.1 - seg.0);
                let (kind, interval, extremal_pts) = if half <= 0.0 {
                    notes.push("PSD slice degenerates to a single state".into());
                    (FamilyKind::Singleton, None, Vec::new())
                } else {
                    let lo = sym(&(&anchor_nu - &dir * c(half, 0.0)));
                    let hi = sym(&(&anchor_nu + &dir * c(half, 0.0)));
                    (
                        FamilyKind::Segment,
                        Some(ParamInterval {
                            direction: dir.clone(),
                            lo: -half,
                            hi: half,
                        }),
                        vec![lo, hi],
                    )
                };
                let anchor = match make(&anchor_nu) {
                    Ok(a) => a,
                    Err(e) => {
                        out.rejected.push(reject(format!("certificate failed: {e}")));
                        continue;
                    }
                };
                let extremal = extremal_pts.iter().filter_map(|p| make(p).ok()).collect();
                out.families.push(QssFamily {
                    alpha: cand.alpha,
                    herm_basis: cand.herm_basis.clone(),
                    anchor,
                    kind,
                    param_interval: interval,
                    extremal,
                    defective: cand.defective,
                    notes,
                });
            }
            _ => {
                let scan = partial_scan(&base, &directions, tol);
                let Some((feasible, ends)) = scan else {
                    out.rejected.push(reject(
                        "empty PSD slice: no positive trace-one element found by scan".into(),
                    ));
                    continue;
                };
                notes.push(format!(
                    "partial extremal scan over {SCAN_DIRECTIONS} fixed random directions; extremal set not claimed complete"
                ));
                let anchor = match make(&feasible) {
                    Ok(a) => a,
                    Err(e) => {
                        out.rejected.push(reject(format!("certificate failed: {e}")));
                        continue;
                    }
                };
                let extremal = ends.iter().filter_map(|p| make(p).ok()).collect();
                out.families.push(QssFamily {
                    alpha: cand.alpha,
                    herm_basis: cand.herm_basis.clone(),
                    anchor,
                    kind: FamilyKind::PartialScan,
                    param_interval: None,
                    extremal,
                    defective: cand.defective,
                    notes,
                });
            }
        }
    }
    Ok(out)
}

fn sym(a: &CMatrix) -> CMatrix {
    crate::linalg::hermitian_part(a)
}

/// Orthonormal traceless directions spanning the eigenspace's trace-zero part.
fn traceless_directions(basis: &[CMatrix], traces: &[f64]) -> Vec<CMatrix> {
    let tn = traces.iter().map(|t| t * t).sum::<f64>().sqrt();
    let mut dirs = Vec::new();
    for (i, b) in basis.iter().enumerate() {
        // Remove the component along the trace direction in coefficient space.
        let mut w = b.clone();
        for (bj, tj) in basis.iter().zip(traces) {
            w -= bj * c(traces[i] * tj / (tn * tn), 0.0);
        }
        dirs.push(w);
    }
    orthonormalize_hermitian(&dirs, 1e-9)
}

/// Scales by a real factor so that the first largest-modulus entry (row-major,
/// upper triangle first) has modulus one and non-negative leading component.
fn canonical_direction(d: &CMatrix) -> CMatrix {
    let n = d.nrows();
    let mut best = (0usize, 0usize, 0.0f64);
    for i in 0..n {
        for j in i..n {
            let a = d[(i, j)].norm();
            if a > best.2 * (1.0 + 1e-9) {
                best = (i, j, a);
            }
        }
    }
    let z = d[(best.0, best.1)];
    let lead = if z.re.abs() >= 1e-12 * best.2 { z.re } else { z.im };
    let s = lead.signum() / best.2;
    sym(&(d * c(s, 0.0)))
}

/// Orthonormal basis of the joint range of Hermitian matrices.
fn joint_support(mats: &[&CMatrix]) -> CMatrix {
    let n = mats[0].nrows();
    let mut acc = CMatrix::zeros(n, n);
    for m in mats {
        acc += *m * *m;
    }
    let (vals, vecs) = hermitian_eigen(&acc);
    let top = vals.last().copied().unwrap_or(0.0).max(1e-300);
    let cols: Vec<usize> = (0..n).filter(|&k| vals[k] > 1e-14 * top).collect();
    let mut u = CMatrix::zeros(n, cols.len());
    for (k, &col) in cols.iter().enumerate() {
        u.set_column(k, &vecs.column(col));
    }
    u
}

/// Admissible `[lo, hi]` with `base + x·dir ⪰ 0`, or `None` when empty.
fn psd_segment(base: &CMatrix, dir: &CMatrix, tol: &Tolerances) -> Option<(f64, f64)> {
    let u = joint_support(&[base, dir]);
    let f = |x: f64| {
        let m = u.adjoint() * (base + dir * c(x, 0.0)) * &u;
        min_eigenvalue_hermitian(&m)
    };
    let bound = (base.norm() + 1.0) / dir.norm() + 1.0;
    let x_star = golden_max(&f, -bound, bound);
    let f_star = f(x_star);
    if f_star < -tol.psd {
        return None;
    }
    if f_star <= 0.0 {
        return Some((x_star, x_star));
    }
    let lo = bisect_root(&f, -bound, x_star);
    let hi = bisect_root(&f, x_star, bound);
    Some((lo, hi))
}

/// Maximizer of a concave function on `[a, b]`.
fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > 1e-13 * (1.0 + a.abs().max(b.abs())) {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    0.5 * (a + b)
}

/// Root of `f` on `[a, b]` where exactly one endpoint has `f ≥ 0`.
fn bisect_root(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (mut inside, mut outside) = if f(a) >= 0.0 { (a, b) } else { (b, a) };
    while (outside - inside).abs() > 1e-13 {
        let mid = 0.5 * (inside + outside);
        if f(mid) >= 0.0 {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    inside
}

/// Finds a positive point of the slice `base + span(dirs)` by coordinate
/// ascent of the (concave) minimum eigenvalue, then records both
/// PSD-boundary endpoints along fixed random directions through it.
fn partial_scan(
    base: &CMatrix,
    dirs: &[CMatrix],
    tol: &Tolerances,
) -> Option<(CMatrix, Vec<CMatrix>)> {
    let mut refs: Vec<&CMatrix> = vec![base];
    refs.extend(dirs.iter());
    let u = joint_support(&refs);
    let lam = |x: &CMatrix| min_eigenvalue_hermitian(&(u.adjoint() * x * &u));
    let bound = |d: &CMatrix| (base.norm() + 1.0) / d.norm() + 1.0;
    let mut point = base.clone();
    for _ in 0..30 {
        for d in dirs {
            let b = bound(d);
            let f = |s: f64| lam(&(&point + d * c(s, 0.0)));
            let s = golden_max(&f, -b, b);
            if f(s) > lam(&point) {
                point = sym(&(&point + d * c(s, 0.0)));
            }
        }
    }
    let f0 = lam(&point);
    if f0 < -tol.psd {
        return None;
    }
    let mut ends = Vec::new();
    if f0 <= 0.0 {
        return Some((point, ends));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SCAN_SEED);
    for _ in 0..SCAN_DIRECTIONS {
        let mut d = CMatrix::zeros(base.nrows(), base.ncols());
        for di in dirs {
            d += di * c(rng.random::<f64>() - 0.5, 0.0);
        }
        let b = bound(&d);
        let f = |s: f64| lam(&(&point + &d * c(s, 0.0)));
        for end in [-b, b] {
            let s = bisect_root(&f, 0.0, end);
            ends.push(sym(&(&point + &d * c(s, 0.0))));
        }
    }
    Some((point, ends))
}

fn certificate(
    spec: &ModelSpec,
    restr: &RestrictedGenerator,
    alpha: f64,
    nu_restricted: &CMatrix,
    tol: &Tolerances,
) -> Result<QssCertificate> {
    let full = restr.embed(nu_restricted);
    let nu = DensityMatrix::from_unnormalized(&full, tol)?;
    let nu_r = restr.compress(nu.matrix());
    let residual_eigen = eigen_residual(restr, &nu_r, alpha);
    let schr = build_generator(spec, Picture::Schrodinger);
    let mut residual_defn: f64 = 0.0;
    for t in DEFINITION_TIMES {
        residual_defn = residual_defn.max(definition_residual_with(&schr, spec, nu.matrix(), t)?);
    }
    Ok(QssCertificate {
        alpha,
        nu,
        nu_restricted: nu_r,
        residual_eigen,
        residual_defn,
        is_perron: false,
    })
}

/// `‖𝓛̂*(ν) + αν‖` for a restricted-coordinate `ν`.
pub fn eigen_residual(restr: &RestrictedGenerator, nu_r: &CMatrix, alpha: f64) -> f64 {
    (restr.gen_schr.apply(nu_r) + nu_r * c(alpha, 0.0)).norm()
}

/// `‖p0⊥𝒯_{t*}(ν)p0⊥ / tr(𝒯_{t*}(ν)p0⊥) − ν‖`.
pub fn definition_residual(spec: &ModelSpec, nu: &CMatrix, t: f64) -> Result<f64> {
    let schr = build_generator(spec, Picture::Schrodinger);
    definition_residual_with(&schr, spec, nu, t)
}

fn definition_residual_with(
    schr: &crate::model::SuperopMatrix,
    spec: &ModelSpec,
    nu: &CMatrix,
    t: f64,
) -> Result<f64> {
    let perp = spec.p0_perp().matrix().clone();
    let evolved = apply_semigroup(schr, t, nu)?;
    let compressed = &perp * evolved * &perp;
    let f = compressed.trace().re;
    if f <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((compressed.unscale(f) - nu).norm())
}

/// Survival function `f(t) = tr(𝒯_{t*}(ν) p0⊥)`.
pub fn survival(spec: &ModelSpec, nu: &CMatrix, t: f64) -> Result<f64> {
    let schr = build_generator(spec, Picture::Schrodinger);
    let perp = spec.p0_perp().matrix().clone();
    Ok((apply_semigroup(&schr, t, nu)? * perp).trace().re)
}

#[derive(Clone, Debug)]
pub struct PerronReport {
    /// Largest real part in the spectrum of `𝓛̂*`.
    pub spectral_abscissa: f64,
    pub perron_alpha: f64,
    pub perron_family: Option<usize>,
    pub irreducible: Option<bool>,
    pub notes: Vec<String>,
}

/// Marks the family at `α = −(spectral abscissa)` and checks the existence
/// and (under irreducibility) uniqueness statements of Perron–Frobenius
/// theory.
pub fn perron_structure(
    restr: &RestrictedGenerator,
    families: &mut [QssFamily],
    irreducibility: Option<&IrreducibilityReport>,
    tol: &Tolerances,
) -> Result<PerronReport> {
    let spectrum = eigenvalues(restr.gen_schr.matrix())?;
    let abscissa = spectral_abscissa(restr, &spectrum, tol);
    let perron_alpha = (-abscissa).max(0.0);
    let mut notes = Vec::new();
    let mut perron_family = None;
    let mut best = f64::INFINITY;
    for (i, f) in families.iter().enumerate() {
        let gap = (f.alpha - perron_alpha).abs();
        if gap <= 1e2 * tol.cluster && gap < best {
            best = gap;
            perron_family = Some(i);
        }
    }
    if families.is_empty() || perron_family.is_none() {
        return Err(QssError::PerronExistence {
            abscissa,
            spectrum,
        });
    }
    for (i, f) in families.iter_mut().enumerate() {
        let p = Some(i) == perron_family;
        f.anchor.is_perron = p;
        for e in &mut f.extremal {
            e.is_perron = p;
        }
    }
    let irreducible = irreducibility.map(|r| r.verdict);
    if irreducible == Some(true) {
        let pf = &families[perron_family.unwrap()];
        if pf.kind != FamilyKind::Singleton {
            return Err(QssError::PerronUniqueness(format!(
                "Perron family at alpha = {} is not a single state",
                pf.alpha
            )));
        }
        let min = min_eigenvalue_hermitian(&pf.anchor.nu_restricted);
        if min <= tol.psd {
            return Err(QssError::PerronUniqueness(format!(
                "Perron state is not strictly positive (min eigenvalue {min:.3e})"
            )));
        }
        if families.len() > 1 {
            return Err(QssError::PerronUniqueness(format!(
                "{} positive eigenvector families found",
                families.len()
            )));
        }
        notes.push("irreducible: unique strictly positive QSS".into());
    }
    Ok(PerronReport {
        spectral_abscissa: abscissa,
        perron_alpha,
        perron_family,
        irreducible,
        notes,
    })
}

#[derive(Clone, Debug)]
pub struct VerificationReport {
    pub alpha: f64,
    /// Normalized-compression residual, max over [`DEFINITION_TIMES`].
    pub definition: f64,
    /// `|f(t) − e^{−αt}|`, max over [`DEFINITION_TIMES`].
    pub survival: f64,
    /// `‖𝒯̂_{t*}(ν) − e^{−αt}ν‖`, max over [`EXPONENTIAL_LAW_TIMES`].
    pub exponential_law: f64,
    /// `‖𝓛̂*(ν) + αν‖`.
    pub eigen: f64,
    /// `|f(t+s) − f(t)f(s)|` over the grid.
    pub multiplicativity: f64,
    /// Repeated-measurement residual at [`REPEATED_TIMES`].
    pub repeated_measurement: f64,
    /// `|α + log f(1)|`.
    pub alpha_log_gap: f64,
    pub passed: bool,
}

pub const VERIFY_TOL: f64 = 1e-8;
pub const ALPHA_LOG_TOL: f64 = 1e-7;

impl VerificationReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.definition,
            self.survival,
            self.exponential_law,
            self.eigen,
            self.multiplicativity,
            self.repeated_measurement,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Checks a certificate against every equivalent form of the definition.
pub fn verify_qss(spec: &ModelSpec, cert: &QssCertificate) -> Result<VerificationReport> {
    verify_state(spec, cert.nu.matrix(), cert.alpha)
}

pub fn verify_state(spec: &ModelSpec, nu: &CMatrix, alpha: f64) -> Result<VerificationReport> {
    let schr = build_generator(spec, Picture::Schrodinger);
    let perp = spec.p0_perp().matrix().clone();
    let restr = restrict_unchecked(spec);
    let evolve = |t: f64, x: &CMatrix| apply_semigroup(&schr, t, x);
    let f = |t: f64| -> Result<f64> { Ok((evolve(t, nu)? * &perp).trace().re) };

    let mut definition: f64 = 0.0;
    let mut surv: f64 = 0.0;
    for t in DEFINITION_TIMES {
        definition = definition.max(definition_residual_with(&schr, spec, nu, t)?);
        surv = surv.max((f(t)? - (-alpha * t).exp()).abs());
    }
    let mut exponential_law: f64 = 0.0;
    for t in EXPONENTIAL_LAW_TIMES {
        let compressed = &perp * evolve(t, nu)? * &perp;
        exponential_law = exponential_law.max((compressed - nu * c((-alpha * t).exp(), 0.0)).norm());
    }
    let eigen = eigen_residual(&restr, &restr.compress(nu), alpha);
    let mut multiplicativity: f64 = 0.0;
    for &t in &MULTIPLICATIVITY_GRID {
        for &s in &MULTIPLICATIVITY_GRID {
            multiplicativity = multiplicativity.max((f(t + s)? - f(t)? * f(s)?).abs());
        }
    }
    let mut x = nu.clone();
    for &t in &REPEATED_TIMES {
        x = &perp * evolve(t, &x)? * &perp;
    }
    let tr = x.trace().re;
    let repeated_measurement = if tr > 0.0 {
        (x.unscale(tr) - nu).norm()
    } else {
        f64::INFINITY
    };
    let f1 = f(1.0)?;
    let alpha_log_gap = if f1 > 0.0 {
        (alpha + f1.ln()).abs()
    } else {
        f64::INFINITY
    };
    let mut report = VerificationReport {
        alpha,
        definition,
        survival: surv,
        exponential_law,
        eigen,
        multiplicativity,
        repeated_measurement,
        alpha_log_gap,
        passed: false,
    };
    report.passed = report.max_residual() <= VERIFY_TOL && alpha_log_gap <= ALPHA_LOG_TOL;
    Ok(report)
}

/// `false` signals a violation: an absorbing `p0` with a QSS of rate zero.
pub fn absorbing_implies_positive_rate(is_absorbing: bool, alpha: f64) -> bool {
    !is_absorbing || alpha > 1e-9
}

/// Spectrum of the restricted predual generator, descending real part.
pub fn restricted_spectrum(restr: &RestrictedGenerator) -> Result<Vec<Complex64>> {
    eigenvalues(restr.gen_schr.matrix())
}

/// An operator on `range(p0⊥)` as a full `d × d` operator matrix.
pub fn embedded_operator(restr: &RestrictedGenerator, x: &CMatrix) -> OperatorMatrix {
    OperatorMatrix::new(restr.embed(x)).unwrap_or_else(|_| OperatorMatrix::zeros(restr.isometry.nrows()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{two_qubit, DecaySites};
    use crate::structure::restrict;

    fn pipeline(omega: f64, sites: DecaySites) -> (ModelSpec, RestrictedGenerator, Vec<EigenCandidate>, QssExtraction) {
        let tol = Tolerances::default();
        let spec = two_qubit(omega, sites);
        let r = restrict(&spec, &tol).unwrap();
        let cands = real_eigen_candidates(&r, &tol).unwrap();
        let ex = extract_qss(&spec, &r, &cands, &tol).unwrap();
        (spec, r, cands, ex)
    }

    #[test]
    fn site1_omega1_has_two_dim_half_eigenspace() {
        let (_, _, cands, ex) = pipeline(1.0, DecaySites::Site1);
        let half = cands.iter().find(|c| (c.alpha - 0.5).abs() < 1e-9).unwrap();
        assert_eq!(half.herm_basis.len(), 2);
        assert_eq!(ex.families.len(), 1);
        let fam = &ex.families[0];
        assert_eq!(fam.kind, FamilyKind::Segment);
        let iv = fam.param_interval.as_ref().unwrap();
        let x_star = (3.0f64).sqrt() / 4.0;
        assert!((iv.hi - x_star).abs() < 1e-9, "{}", iv.hi);
        assert!((iv.lo + x_star).abs() < 1e-9);
    }

    #[test]
    fn site1_omega03_has_two_singletons() {
        let (_, _, cands, ex) = pipeline(0.3, DecaySites::Site1);
        for a in [0.1, 0.9] {
            let cand = cands.iter().find(|c| (c.alpha - a).abs() < 1e-9).unwrap();
            assert_eq!(cand.herm_basis.len(), 1);
        }
        let alphas: Vec<f64> = ex.families.iter().map(|f| f.alpha).collect();
        assert_eq!(alphas.len(), 2, "{alphas:?} {:?}", ex.rejected);
    }

    #[test]
    fn both_sites_rejects_rate_two() {
        let (_, _, _, ex) = pipeline(1.0, DecaySites::Both);
        assert!(ex.rejected.iter().any(|r| (r.alpha - 2.0).abs() < 1e-9));
        assert!(ex.families.iter().all(|f| (f.alpha - 1.0).abs() < 1e-9));
    }

    #[test]
    fn absorbing_rate_contract() {
        assert!(absorbing_implies_positive_rate(true, 1.0));
        assert!(absorbing_implies_positive_rate(false, 0.0));
        assert!(!absorbing_implies_positive_rate(true, 0.0));
    }
}
