//! Property checks on random subharmonic models. Each returns `Err` with a
//! description of the first violation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qsslab::linalg::{c, hermiticity_defect, min_eigenvalue_hermitian, CMatrix, Tolerances};
use qsslab::model::{apply_semigroup, build_generator, duality_check, Picture};
use qsslab::pipeline::analyze;
use qsslab::qss::{FamilyKind, QssFamily};
use qsslab::structure::restrict;
use qsslab::trajectory::build_kernel;

use super::{block_model, random_density, random_density_on, random_hermitian, random_model};

pub type Check = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn duality(seed: u64) -> Check {
    let m = random_model(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = m.spec.dim();
    for t in [0.3, 1.7] {
        let x = random_hermitian(&mut rng, d);
        let y = random_hermitian(&mut rng, d);
        let r = duality_check(&m.spec, t, &x, &y).map_err(|e| e.to_string())?;
        let scale = 1.0 + x.norm() * y.norm();
        ensure(r <= 1e-10 * scale, || format!("duality residual {r:.3e} at t={t}"))?;
    }
    Ok(())
}

pub fn density_preservation(seed: u64) -> Check {
    let m = random_model(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gen = build_generator(&m.spec, Picture::Schrodinger);
    let rho = random_density(&mut rng, m.spec.dim());
    for t in [0.1, 1.0, 5.0] {
        let out = apply_semigroup(&gen, t, &rho).map_err(|e| e.to_string())?;
        let tr = out.trace();
        ensure((tr.re - 1.0).abs() <= 1e-10 && tr.im.abs() <= 1e-10, || {
            format!("trace {tr} at t={t}")
        })?;
        let h = hermiticity_defect(&out);
        ensure(h <= 1e-10, || format!("hermiticity defect {h:.3e} at t={t}"))?;
        let min = min_eigenvalue_hermitian(&qsslab::linalg::hermitian_part(&out));
        ensure(min >= -1e-9, || format!("min eigenvalue {min:.3e} at t={t}"))?;
    }
    Ok(())
}

pub fn tilde_trace(seed: u64) -> Check {
    let m = random_model(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = build_kernel(&m.spec, &Tolerances::default()).map_err(|e| e.to_string())?;
    let rho = random_density(&mut rng, m.spec.dim());
    for t in [0.2, 1.0, 3.0] {
        let tr = k.evolve_tilde(t, &rho).map_err(|e| e.to_string())?.trace().re;
        ensure((tr - 1.0).abs() <= 1e-10, || format!("tr S~ = {tr} at t={t}"))?;
    }
    Ok(())
}

pub fn restrict_embed(seed: u64) -> Check {
    let m = random_model(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = Tolerances::default();
    let r = restrict(&m.spec, &tol).map_err(|e| e.to_string())?;
    let gen = build_generator(&m.spec, Picture::Schrodinger);
    let perp = m.spec.p0_perp().matrix().clone();
    let full = random_density_on(&mut rng, &perp);
    let small = r.compress(&full);
    let back = r.embed(&small);
    let e = (&back - &full).norm();
    ensure(e <= 1e-10, || format!("embed(compress(rho)) error {e:.3e}"))?;
    for t in [0.4, 2.0] {
        let lhs = r.compress(&apply_semigroup(&gen, t, &full).map_err(|e| e.to_string())?);
        let rhs = r.evolve_schr(t, &small).map_err(|e| e.to_string())?;
        let e = (&lhs - &rhs).norm();
        ensure(e <= 1e-10, || format!("restricted evolution mismatch {e:.3e} at t={t}"))?;
    }
    Ok(())
}

/// `(α, anchor)` for every family, sorted by `α`.
fn family_points(fams: &[QssFamily]) -> Vec<(f64, CMatrix, FamilyKind)> {
    let mut v: Vec<_> = fams
        .iter()
        .map(|f| (f.alpha, f.anchor.nu.matrix().clone(), f.kind))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

pub fn rate_scaling(seed: u64, factor: f64) -> Check {
    let m = random_model(seed);
    let tol = Tolerances::default();
    let a = analyze(&m.spec, &tol).map_err(|e| e.to_string())?;
    let b = analyze(&m.spec.time_rescaled(factor), &tol).map_err(|e| e.to_string())?;
    let (pa, pb) = (
        family_points(&a.extraction.families),
        family_points(&b.extraction.families),
    );
    ensure(pa.len() == pb.len(), || {
        format!("{} families before scaling, {} after", pa.len(), pb.len())
    })?;
    for ((aa, na, _), (ab, nb, _)) in pa.iter().zip(&pb) {
        ensure((ab - factor * aa).abs() <= 1e-8 * (1.0 + ab.abs()), || {
            format!("alpha {aa} scaled by {factor} gave {ab}")
        })?;
        let e = (na - nb).norm();
        ensure(e <= 1e-8, || format!("state moved by {e:.3e} under scaling"))?;
    }
    Ok(())
}

/// Restricted predual generator computed by compressing the full one
/// operator by operator (not through the restriction's Kronecker formula).
fn compressed_generator(spec: &qsslab::model::ModelSpec, v: &CMatrix) -> impl Fn(&CMatrix) -> CMatrix {
    let gen = build_generator(spec, Picture::Schrodinger);
    let v = v.clone();
    move |x: &CMatrix| v.adjoint() * gen.apply(&(&v * x * v.adjoint())) * &v
}

fn bloch(r: [f64; 3]) -> CMatrix {
    let mut m = CMatrix::zeros(2, 2);
    m[(0, 0)] = c(0.5 * (1.0 + r[2]), 0.0);
    m[(1, 1)] = c(0.5 * (1.0 - r[2]), 0.0);
    m[(0, 1)] = c(0.5 * r[0], -0.5 * r[1]);
    m[(1, 0)] = c(0.5 * r[0], 0.5 * r[1]);
    m
}

fn project_ball(mut r: [f64; 3]) -> [f64; 3] {
    let n = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if n > 1.0 {
        for x in &mut r {
            *x /= n;
        }
    }
    r
}

/// Minimal `‖𝓛̂*(ν) + αν‖` over `α ≥ 0`.
fn residual(l: &dyn Fn(&CMatrix) -> CMatrix, r: [f64; 3]) -> f64 {
    let nu = bloch(r);
    let ln = l(&nu);
    let alpha = (-qsslab::linalg::hs_real_inner(&nu, &ln) / nu.norm_squared()).max(0.0);
    (ln + &nu * c(alpha, 0.0)).norm()
}

/// Compass search on the Bloch ball.
fn descend(l: &dyn Fn(&CMatrix) -> CMatrix, mut r: [f64; 3]) -> ([f64; 3], f64) {
    let mut f = residual(l, r);
    let mut step = 0.05;
    while step > 1e-13 {
        let mut improved = false;
        for axis in 0..3 {
            for sign in [-1.0, 1.0] {
                let mut q = r;
                q[axis] += sign * step;
                let q = project_ball(q);
                let fq = residual(l, q);
                if fq < f {
                    r = q;
                    f = fq;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (r, f)
}

/// QSS set of a random `d = 3`, rank-one `p0` model from a dense scan of
/// the Bloch ball, compared with the spectral extraction.
pub fn grid_oracle(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_jumps = rng.random_range(1..=2);
    let m = block_model(seed, 3, 1, n_jumps, true);
    let tol = Tolerances::default();
    let r = restrict(&m.spec, &tol).map_err(|e| e.to_string())?;
    let l = compressed_generator(&m.spec, &r.isometry);

    let n = 20;
    let h = 2.0 / n as f64;
    let idx = |i: usize| -1.0 + i as f64 * h;
    let mut grid = vec![f64::INFINITY; (n + 1) * (n + 1) * (n + 1)];
    let at = |i: usize, j: usize, k: usize| (i * (n + 1) + j) * (n + 1) + k;
    for i in 0..=n {
        for j in 0..=n {
            for k in 0..=n {
                let p = [idx(i), idx(j), idx(k)];
                if p.iter().map(|x| x * x).sum::<f64>() <= 1.0 + 1e-12 {
                    grid[at(i, j, k)] = residual(&l, p);
                }
            }
        }
    }
    let mut oracle: Vec<CMatrix> = Vec::new();
    for i in 0..=n {
        for j in 0..=n {
            for k in 0..=n {
                let g = grid[at(i, j, k)];
                if !g.is_finite() {
                    continue;
                }
                let mut is_min = true;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        for dk in -1i64..=1 {
                            let (a, b, cc) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                            if (di, dj, dk) == (0, 0, 0)
                                || a < 0
                                || b < 0
                                || cc < 0
                                || a > n as i64
                                || b > n as i64
                                || cc > n as i64
                            {
                                continue;
                            }
                            if grid[at(a as usize, b as usize, cc as usize)] < g {
                                is_min = false;
                            }
                        }
                    }
                }
                if !is_min {
                    continue;
                }
                let (p, f) = descend(&l, [idx(i), idx(j), idx(k)]);
                if f <= 1e-8 {
                    let nu = bloch(p);
                    if oracle.iter().all(|o| (o - &nu).norm() > 1e-5) {
                        oracle.push(nu);
                    }
                }
            }
        }
    }

    let a = analyze(&m.spec, &tol).map_err(|e| e.to_string())?;
    let fams = &a.extraction.families;
    let dist = |f: &QssFamily, x: &CMatrix| -> f64 {
        let anchor = &f.anchor.nu_restricted;
        match &f.param_interval {
            None => (anchor - x).norm(),
            Some(p) => {
                let s = qsslab::linalg::hs_real_inner(&p.direction, &(x - anchor))
                    / p.direction.norm_squared();
                let s = s.clamp(p.lo, p.hi);
                (anchor + &p.direction * c(s, 0.0) - x).norm()
            }
        }
    };
    for o in &oracle {
        let best = fams.iter().map(|f| dist(f, o)).fold(f64::INFINITY, f64::min);
        ensure(best <= 1e-6, || {
            format!("grid optimum not among {} extracted families (distance {best:.3e})", fams.len())
        })?;
    }
    for f in fams.iter().filter(|f| f.kind == FamilyKind::Singleton) {
        let best = oracle
            .iter()
            .map(|o| (&f.anchor.nu_restricted - o).norm())
            .fold(f64::INFINITY, f64::min);
        ensure(best <= 1e-6, || {
            format!("extracted QSS at alpha={} missed by the grid scan ({best:.3e})", f.alpha)
        })?;
    }
    ensure(!oracle.is_empty(), || "grid scan found no QSS".into())
}
