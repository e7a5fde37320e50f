#![allow(dead_code)]

pub mod props;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use qsslab::fixtures::{ket_index, two_qubit, DecaySites};
use qsslab::linalg::{c, CMatrix, DensityMatrix, OperatorMatrix, OrthProjection, Tolerances};
use qsslab::model::ModelSpec;

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    DMatrix::from_fn(rows, cols, |_, _| c(gaussian(rng), gaussian(rng)))
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
    let a = random_matrix(rng, d, d);
    (&a + a.adjoint()) * c(0.5, 0.0)
}

pub fn random_unitary(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
    random_matrix(rng, d, d).qr().q()
}

pub fn random_density(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
    let a = random_matrix(rng, d, d);
    let p = &a * a.adjoint();
    let t = p.trace().re;
    p.unscale(t)
}

/// Density supported on `range(q)`.
pub fn random_density_on(rng: &mut ChaCha8Rng, q: &CMatrix) -> CMatrix {
    let d = q.nrows();
    let a = q * random_matrix(rng, d, d) * q;
    let p = &a * a.adjoint();
    let t = p.trace().re;
    p.unscale(t)
}

#[derive(Clone, Debug)]
pub struct RandomModel {
    pub spec: ModelSpec,
    pub rank_p0: usize,
    pub seed: u64,
}

/// A model with `p0` subharmonic by construction: in a basis whose first
/// `k` vectors span `range(p0)`, every jump operator is block upper
/// triangular and `H₂₁ = (i/2) Σ B_l† A_l`, which makes `p0⊥ G p0 = 0`.
/// With `rotate`, everything is conjugated by a random unitary.
pub fn block_model(seed: u64, d: usize, k: usize, n_jumps: usize, rotate: bool) -> RandomModel {
    assert!(k >= 1 && k < d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = random_hermitian(&mut rng, d);
    let mut jumps = Vec::with_capacity(n_jumps);
    let mut h21 = CMatrix::zeros(d - k, k);
    for _ in 0..n_jumps {
        let mut l = random_matrix(&mut rng, d, d).scale(0.7);
        l.view_mut((k, 0), (d - k, k)).fill(c(0.0, 0.0));
        let a = l.view((0, 0), (k, k)).into_owned();
        let b = l.view((0, k), (k, d - k)).into_owned();
        h21 += b.adjoint() * a * c(0.0, 0.5);
        jumps.push(l);
    }
    h.view_mut((k, 0), (d - k, k)).copy_from(&h21);
    h.view_mut((0, k), (k, d - k)).copy_from(&h21.adjoint());
    let mut p0 = CMatrix::zeros(d, d);
    for i in 0..k {
        p0[(i, i)] = c(1.0, 0.0);
    }
    if rotate {
        let u = random_unitary(&mut rng, d);
        let conj = |x: &CMatrix| &u * x * u.adjoint();
        h = conj(&h);
        jumps = jumps.iter().map(conj).collect();
        p0 = conj(&p0);
    }
    let tol = Tolerances::default();
    let h = OperatorMatrix::new(qsslab::linalg::hermitian_part(&h)).unwrap();
    let jumps = jumps.into_iter().map(|l| OperatorMatrix::new(l).unwrap()).collect();
    let p0 = OrthProjection::new(
        OperatorMatrix::new(qsslab::linalg::hermitian_part(&p0)).unwrap(),
        &tol,
    )
    .unwrap();
    let spec = ModelSpec::new(format!("random(seed={seed})"), h, jumps, p0, &tol).unwrap();
    RandomModel {
        spec,
        rank_p0: k,
        seed,
    }
}

/// Random dimensions `2 ≤ d ≤ 4`, `1 ≤ rank p0 < d`, 1–3 jumps, rotated.
pub fn random_model(seed: u64) -> RandomModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    let d = rng.random_range(2..=4);
    let k = rng.random_range(1..d);
    let n = rng.random_range(1..=3);
    block_model(seed, d, k, n, true)
}

pub fn both_sites_nu() -> CMatrix {
    let mut nu = CMatrix::zeros(4, 4);
    nu[(ket_index(0, 1), ket_index(0, 1))] = c(0.5, 0.0);
    nu[(ket_index(1, 0), ket_index(1, 0))] = c(0.5, 0.0);
    nu
}

pub fn both_sites() -> ModelSpec {
    two_qubit(1.0, DecaySites::Both)
}

pub fn site1(omega: f64) -> ModelSpec {
    two_qubit(omega, DecaySites::Site1)
}

pub fn density(m: &CMatrix) -> DensityMatrix {
    DensityMatrix::from_unnormalized(m, &Tolerances::default()).unwrap()
}

pub fn entry(m: &CMatrix, i: usize, j: usize) -> Complex64 {
    m[(i, j)]
}

pub fn fixtures_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn schemas_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

/// Uniformization `P = I + Q/λ` of a (sub-)rate matrix.
fn uniformize(q: &[Vec<f64>]) -> (DMatrix<f64>, f64) {
    let n = q.len();
    let lambda = 1.0 + (0..n).map(|i| q[i][i].abs()).fold(0.0, f64::max);
    let p = DMatrix::from_fn(n, n, |i, j| q[i][j] / lambda + if i == j { 1.0 } else { 0.0 });
    (p, lambda)
}

/// Classical QSD of the transient block `q_t` by power iteration on the
/// uniformized chain: the dominant left eigenvector of `P`.
pub fn power_qsd(q_t: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let n = q_t.len();
    let (p, lambda) = uniformize(q_t);
    let mut mu = DMatrix::from_element(1, n, 1.0 / n as f64);
    let mut mass = 1.0;
    for _ in 0..200_000 {
        let next = &mu * &p;
        mass = next.sum();
        let next = next / mass;
        let done = (&next - &mu).abs().max() < 1e-15;
        mu = next;
        if done {
            break;
        }
    }
    (mu.iter().copied().collect(), lambda * (1.0 - mass))
}

/// `e^{tQ}` by the uniformization series.
pub fn uniformized_expm(q: &[Vec<f64>], t: f64) -> DMatrix<f64> {
    let n = q.len();
    let (p, lambda) = uniformize(q);
    let lt = lambda * t;
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut weight = (-lt).exp();
    let mut out = &term * weight;
    for k in 1..2000 {
        term = &term * &p;
        weight *= lt / k as f64;
        out += &term * weight;
        if weight < 1e-300 && k as f64 > lt {
            break;
        }
    }
    out
}
