//! Counting-process unraveling with detector `p0⊥`.
//!
//! Between jumps the unnormalized branch evolves under
//! `𝓛₀* = 𝓛* − ½{p0⊥, ·}`; a jump fires when `tr(σ_t)` first drops to a
//! uniform draw `u` and applies `ρ ↦ p0⊥ρp0⊥ / tr(·)`. The companion
//! `𝓛̃* = 𝓛₀* + p0⊥·p0⊥` is trace preserving and sums over all jump
//! sectors at once.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{QssError, Result};
use crate::linalg::{expm, CMatrix, DensityMatrix, Tolerances};
use crate::model::{
    build_generator, left_right, sandwich, vectorize, ModelSpec, Picture, SuperopMatrix,
};
use crate::structure::check_subharmonic;

/// Step of the cached propagator.
pub const STEP: f64 = 0.01;
/// Resolution of the firing time.
pub const TIME_TOL: f64 = 1e-10;
/// Environment variable capping the sampler's worker threads.
pub const THREADS_ENV: &str = "QSSLAB_THREADS";

#[derive(Clone, Debug)]
pub struct UnravelingKernel {
    pub gen_nojump: SuperopMatrix,
    pub gen_tilde: SuperopMatrix,
    /// Matrix of `ρ ↦ p0⊥ρp0⊥`.
    pub jump_map: CMatrix,
    perp: CMatrix,
    d: usize,
    /// `e^{h 𝓛₀*}` followed by `e^{(h/2^k) 𝓛₀*}` for `k = 1..`.
    dyadic: Vec<CMatrix>,
}

pub fn build_kernel(spec: &ModelSpec, tol: &Tolerances) -> Result<UnravelingKernel> {
    let sub = check_subharmonic(spec, tol);
    if !sub.verdict {
        return Err(QssError::NotSubharmonic {
            algebraic: sub.algebraic_residual,
            semigroup: sub.semigroup_residual,
        });
    }
    let d = spec.dim();
    let perp = spec.p0_perp().matrix().clone();
    let full = build_generator(spec, Picture::Schrodinger);
    let anti = left_right(&perp, &perp);
    let nojump = full.matrix() - anti * crate::linalg::c(0.5, 0.0);
    let jump_map = sandwich(&perp, &perp);
    let tilde = &nojump + &jump_map;
    let id = vectorize(&CMatrix::identity(d, d));
    let defect = (id.adjoint() * &tilde).norm();
    if defect > tol.eig * (1.0 + tilde.norm()) {
        return Err(QssError::Kernel(format!(
            "trace-preserving companion generator has trace defect {defect:.3e}"
        )));
    }
    let levels = (STEP / TIME_TOL).log2().ceil() as i32;
    let mut dyadic = Vec::with_capacity(levels as usize + 1);
    for k in 0..=levels {
        dyadic.push(expm(&nojump, STEP / 2f64.powi(k))?);
    }
    Ok(UnravelingKernel {
        gen_nojump: SuperopMatrix::new(nojump, Picture::Schrodinger)?,
        gen_tilde: SuperopMatrix::new(tilde, Picture::Schrodinger)?,
        jump_map,
        perp,
        d,
        dyadic,
    })
}

impl UnravelingKernel {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn perp(&self) -> &CMatrix {
        &self.perp
    }

    fn trace(&self, v: &crate::linalg::CVector) -> f64 {
        (0..self.d).map(|i| v[i * self.d + i].re).sum()
    }

    fn trace_perp(&self, v: &crate::linalg::CVector) -> f64 {
        let x = CMatrix::from_column_slice(self.d, self.d, v.as_slice());
        (x * &self.perp).trace().re
    }

    /// `S_{t*}(ρ)`.
    pub fn evolve_nojump(&self, t: f64, rho: &CMatrix) -> Result<CMatrix> {
        crate::model::apply_semigroup(&self.gen_nojump, t, rho)
    }

    /// `S̃_{t*}(ρ)`.
    pub fn evolve_tilde(&self, t: f64, rho: &CMatrix) -> Result<CMatrix> {
        crate::model::apply_semigroup(&self.gen_tilde, t, rho)
    }

    /// `p0⊥ρp0⊥`, unnormalized.
    pub fn jump(&self, rho: &CMatrix) -> CMatrix {
        &self.perp * rho * &self.perp
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Survival {
    /// `tr(S_{t*}(ρ))`.
    pub trace_total: f64,
    /// `tr(S_{t*}(ρ) p0⊥)`.
    pub trace_perp: f64,
}

pub fn nojump_survival(kernel: &UnravelingKernel, rho0: &CMatrix, t: f64) -> Result<Survival> {
    let s = kernel.evolve_nojump(t, rho0)?;
    Ok(Survival {
        trace_total: s.trace().re,
        trace_perp: (&s * &kernel.perp).trace().re,
    })
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub seed: u64,
    /// Stream index of this trajectory under `seed`.
    pub stream: u64,
    pub horizon: f64,
    pub jump_times: Vec<f64>,
    pub post_jump_states: Vec<DensityMatrix>,
    /// Normalized no-jump branch at the horizon.
    pub final_state: DensityMatrix,
    /// `tr` of the unnormalized branch since the last jump, at the horizon.
    pub final_weight: f64,
    /// No jump occurred in `[0, horizon]`.
    pub censored: bool,
}

/// Trajectory `stream` of the ensemble seeded by `seed`.
pub fn sample_trajectory(
    kernel: &UnravelingKernel,
    rho0: &DensityMatrix,
    horizon: f64,
    seed: u64,
    stream: u64,
) -> Result<TrajectoryRecord> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(QssError::InvalidModel(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let d = kernel.d;
    let step = &kernel.dyadic[0];
    let mut t_now = 0.0;
    let mut rho = vectorize(rho0.matrix());
    let mut jump_times = Vec::new();
    let mut post = Vec::new();

    loop {
        let u: f64 = rng.random();
        let remaining = horizon - t_now;
        let mut sigma = rho.clone();
        let mut s = 0.0;
        let fired = loop {
            let total = kernel.trace(&sigma);
            // Mass on range(p0) never decreases, so the trace cannot reach u.
            if total - kernel.trace_perp(&sigma) > u {
                break None;
            }
            if s + STEP > remaining {
                break bisect_partial(kernel, &sigma, s, remaining - s, u)?;
            }
            let next = step * &sigma;
            if kernel.trace(&next) <= u {
                break Some(bisect_firing(kernel, sigma.clone(), s, u));
            }
            sigma = next;
            s += STEP;
        };
        match fired {
            Some((dt, at)) if t_now + dt <= horizon => {
                let x = kernel.jump(&CMatrix::from_column_slice(d, d, at.as_slice()));
                let tr = x.trace().re;
                if tr <= f64::MIN_POSITIVE {
                    return finish(kernel, seed, stream, horizon, t_now, &sigma, s, jump_times, post);
                }
                let state = x.unscale(tr);
                t_now += dt;
                jump_times.push(t_now);
                rho = vectorize(&state);
                post.push(DensityMatrix::from_unnormalized(&state, &Tolerances::default())?);
            }
            _ => return finish(kernel, seed, stream, horizon, t_now, &sigma, s, jump_times, post),
        }
    }
}

/// Refines a crossing inside `[s, s + h]` with the cached dyadic steps.
/// Returns the offset since the last jump and the branch at that time.
fn bisect_firing(
    kernel: &UnravelingKernel,
    mut left: crate::linalg::CVector,
    mut s: f64,
    u: f64,
) -> (f64, crate::linalg::CVector) {
    let mut width = STEP;
    for e in &kernel.dyadic[1..] {
        width *= 0.5;
        let mid = e * &left;
        if kernel.trace(&mid) > u {
            left = mid;
            s += width;
        }
    }
    let right = kernel.dyadic.last().expect("non-empty") * &left;
    (s + width, right)
}

/// Crossing inside the final sliver `[s, s + rest]`, `rest < h`.
fn bisect_partial(
    kernel: &UnravelingKernel,
    sigma: &crate::linalg::CVector,
    mut s: f64,
    rest: f64,
    u: f64,
) -> Result<Option<(f64, crate::linalg::CVector)>> {
    let m = kernel.gen_nojump.matrix();
    if rest <= 0.0 || kernel.trace(&(expm(m, rest)? * sigma)) > u {
        return Ok(None);
    }
    let mut left = sigma.clone();
    let mut width = rest;
    while width > TIME_TOL {
        width *= 0.5;
        let mid = expm(m, width)? * &left;
        if kernel.trace(&mid) > u {
            left = mid;
            s += width;
        }
    }
    Ok(Some((s + width, expm(m, width)? * &left)))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    kernel: &UnravelingKernel,
    seed: u64,
    stream: u64,
    horizon: f64,
    t_now: f64,
    sigma: &crate::linalg::CVector,
    s: f64,
    jump_times: Vec<f64>,
    post: Vec<DensityMatrix>,
) -> Result<TrajectoryRecord> {
    let d = kernel.d;
    let rest = (horizon - t_now - s).max(0.0);
    let at = CMatrix::from_column_slice(d, d, sigma.as_slice());
    let end = kernel.evolve_nojump(rest, &at)?;
    let weight = end.trace().re;
    let final_state = if weight > f64::MIN_POSITIVE {
        DensityMatrix::from_unnormalized(&end, &Tolerances::default())?
    } else {
        DensityMatrix::from_unnormalized(&at, &Tolerances::default())?
    };
    Ok(TrajectoryRecord {
        seed,
        stream,
        horizon,
        censored: jump_times.is_empty(),
        jump_times,
        post_jump_states: post,
        final_state,
        final_weight: weight,
    })
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// `n` independent trajectories, stream `i` for record `i`. The output does
/// not depend on the number of workers.
pub fn sample_ensemble(
    kernel: &UnravelingKernel,
    rho0: &DensityMatrix,
    horizon: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<TrajectoryRecord>> {
    let run = || {
        (0..n as u64)
            .into_par_iter()
            .map(|i| sample_trajectory(kernel, rho0, horizon, seed, i))
            .collect::<Result<Vec<_>>>()
    };
    match thread_cap() {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| QssError::Kernel(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

#[derive(Clone, Debug)]
pub struct JumpStatistics {
    pub n_trajectories: usize,
    pub n_observed_jumps: usize,
    /// Rate `1 + α` of the exponential law under test.
    pub rate: f64,
    pub interjump_samples: Vec<f64>,
    pub empirical_mean: f64,
    /// Mean of the truncated exponential, averaged over each gap's window.
    pub expected_mean: f64,
    pub mean_std_error: f64,
    pub mean_z: f64,
    /// Kolmogorov–Smirnov distance of the probability-integral transforms
    /// from the uniform law.
    pub ks_statistic: f64,
    pub ks_critical_1pct: f64,
    pub post_jump_max_deviation: f64,
    /// Fraction of trajectories without any jump.
    pub censoring_fraction: f64,
}

/// Large-sample 1% critical value of the KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// Mean and variance of `Exp(rate)` conditioned on `[0, w]`.
pub fn truncated_exp_moments(rate: f64, w: f64) -> (f64, f64) {
    if !w.is_finite() {
        return (1.0 / rate, 1.0 / (rate * rate));
    }
    let e = (-rate * w).exp();
    let z = -(-rate * w).exp_m1();
    let mean = 1.0 / rate - w * e / z;
    let second = (2.0 / (rate * rate) - e * (w * w + 2.0 * w / rate + 2.0 / (rate * rate))) / z;
    (mean, (second - mean * mean).max(0.0))
}

/// CDF of `Exp(rate)` conditioned on `[0, w]`.
pub fn truncated_exp_cdf(rate: f64, w: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= w {
        return 1.0;
    }
    (-rate * x).exp_m1() / (-rate * w).exp_m1()
}

/// One-sample KS distance from the uniform law on `[0, 1]`.
pub fn ks_uniform(samples: &[f64]) -> f64 {
    let mut u = samples.to_vec();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}

/// Pools inter-jump gaps and tests them against `Exp(1 + α)` truncated to
/// the part of the horizon left after the previous jump.
pub fn jump_statistics(
    records: &[TrajectoryRecord],
    nu: &CMatrix,
    alpha: f64,
) -> Result<JumpStatistics> {
    let rate = 1.0 + alpha;
    let mut gaps = Vec::new();
    let mut pits = Vec::new();
    let (mut expected, mut var) = (0.0, 0.0);
    let mut deviation: f64 = 0.0;
    let mut censored = 0usize;
    for r in records {
        if r.censored {
            censored += 1;
        }
        let mut prev = 0.0;
        for (&t, state) in r.jump_times.iter().zip(&r.post_jump_states) {
            let (g, w) = (t - prev, r.horizon - prev);
            let (m, v) = truncated_exp_moments(rate, w);
            expected += m;
            var += v;
            gaps.push(g);
            pits.push(truncated_exp_cdf(rate, w, g));
            deviation = deviation.max((state.matrix() - nu).norm());
            prev = t;
        }
    }
    if gaps.is_empty() {
        return Err(QssError::NoSamples);
    }
    let n = gaps.len() as f64;
    let empirical_mean = gaps.iter().sum::<f64>() / n;
    let expected_mean = expected / n;
    let mean_std_error = var.sqrt() / n;
    Ok(JumpStatistics {
        n_trajectories: records.len(),
        n_observed_jumps: gaps.len(),
        rate,
        empirical_mean,
        expected_mean,
        mean_std_error,
        mean_z: (empirical_mean - expected_mean) / mean_std_error,
        ks_statistic: ks_uniform(&pits),
        ks_critical_1pct: ks_critical_1pct(gaps.len()),
        interjump_samples: gaps,
        post_jump_max_deviation: deviation,
        censoring_fraction: censored as f64 / records.len() as f64,
    })
}

/// `tr(S_{T−t_k} ∘ J ∘ … ∘ J ∘ S_{t_1}(ρ0))`: the density of the outcome
/// "jumps exactly at `jump_times`" on `[0, horizon]`.
pub fn measure_weight(
    kernel: &UnravelingKernel,
    jump_times: &[f64],
    horizon: f64,
    rho0: &CMatrix,
) -> Result<f64> {
    let mut prev = 0.0;
    let mut x = rho0.clone();
    for &t in jump_times {
        if !(t > prev || (t == 0.0 && prev == 0.0)) || t > horizon {
            return Err(QssError::UnorderedTimes);
        }
        x = kernel.jump(&kernel.evolve_nojump(t - prev, &x)?);
        prev = t;
    }
    Ok(kernel.evolve_nojump(horizon - prev, &x)?.trace().re)
}

/// Density of "first jump at `t`, anything afterwards" on `[0, horizon]`.
pub fn first_jump_density(
    kernel: &UnravelingKernel,
    t: f64,
    horizon: f64,
    rho0: &CMatrix,
) -> Result<f64> {
    let after = kernel.jump(&kernel.evolve_nojump(t, rho0)?);
    Ok(kernel.evolve_tilde(horizon - t, &after)?.trace().re)
}

#[derive(Clone, Copy, Debug)]
pub struct SectorSum {
    pub zero_jump: f64,
    pub one_jump: f64,
    /// Two or more jumps.
    pub higher: f64,
    pub total: f64,
}

/// Total probability split by jump count, by composite Simpson quadrature
/// over the first jump time with `intervals` (even) subintervals.
pub fn sector_sum(
    kernel: &UnravelingKernel,
    rho0: &CMatrix,
    horizon: f64,
    intervals: usize,
) -> Result<SectorSum> {
    let n = intervals.max(2) + intervals % 2;
    let h = horizon / n as f64;
    let e_nojump = expm(kernel.gen_nojump.matrix(), h)?;
    let d = kernel.d;
    // Forward branch S_t(ρ0) on the grid, backward functionals via the
    // adjoint flows: tr(S_{T−t}(y)) = ⟨S^†_{T−t}(1), y⟩.
    let mut fwd = Vec::with_capacity(n + 1);
    let mut v = vectorize(rho0);
    for _ in 0..=n {
        fwd.push(v.clone());
        v = &e_nojump * v;
    }
    let id = vectorize(&CMatrix::identity(d, d));
    let back = |m: &CMatrix| -> Vec<crate::linalg::CVector> {
        let step = m.adjoint();
        let mut out = Vec::with_capacity(n + 1);
        let mut w = id.clone();
        for _ in 0..=n {
            out.push(w.clone());
            w = &step * w;
        }
        out
    };
    let back_nojump = back(&e_nojump);
    let back_tilde = back(&expm(kernel.gen_tilde.matrix(), h)?);
    let mut one = 0.0;
    let mut any = 0.0;
    for k in 0..=n {
        let coeff = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let jumped = &kernel.jump_map * &fwd[k];
        one += coeff * back_nojump[n - k].dotc(&jumped).re;
        any += coeff * back_tilde[n - k].dotc(&jumped).re;
    }
    one *= h / 3.0;
    any *= h / 3.0;
    let zero = kernel.trace(&fwd[n]);
    Ok(SectorSum {
        zero_jump: zero,
        one_jump: one,
        higher: any - one,
        total: zero + any,
    })
}
