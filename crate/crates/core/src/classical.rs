//! Absorbing continuous-time Markov chains and their diagonal embedding.

use serde::{Deserialize, Serialize};

use crate::error::{QssError, Result};
use crate::linalg::{c, eig_general, null_space, CMatrix, OperatorMatrix, OrthProjection, Tolerances};
use crate::model::ModelSpec;
use crate::pipeline::{analyze, Analysis};

const ROW_SUM_TOL: f64 = 1e-12;

/// Generator `Q` of a chain with absorbing set `A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateMatrix {
    q: Vec<Vec<f64>>,
    absorbing: Vec<usize>,
}

impl RateMatrix {
    pub fn new(q: Vec<Vec<f64>>, absorbing: Vec<usize>) -> Result<Self> {
        let n = q.len();
        let bad = |msg: String| Err(QssError::InvalidRateMatrix(msg));
        if n == 0 {
            return bad("empty rate matrix".into());
        }
        for (x, row) in q.iter().enumerate() {
            if row.len() != n {
                return bad(format!("row {x} has {} entries, expected {n}", row.len()));
            }
            let mut sum = 0.0;
            let mut scale: f64 = 1.0;
            for (y, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return bad(format!("q[{x}][{y}] is not finite"));
                }
                if x != y && v < 0.0 {
                    return bad(format!("off-diagonal rate q[{x}][{y}] = {v} is negative"));
                }
                sum += v;
                scale = scale.max(v.abs());
            }
            if sum.abs() > ROW_SUM_TOL * scale {
                return bad(format!("row {x} sums to {sum:e}, expected 0"));
            }
        }
        let mut a = absorbing;
        a.sort_unstable();
        a.dedup();
        if let Some(&x) = a.iter().find(|&&x| x >= n) {
            return bad(format!("absorbing state {x} out of range 0..{n}"));
        }
        if a.is_empty() {
            return bad("absorbing set is empty".into());
        }
        if a.len() == n {
            return bad("absorbing set covers every state".into());
        }
        for &x in &a {
            for (y, &rate) in q[x].iter().enumerate() {
                if !a.contains(&y) && rate != 0.0 {
                    return bad(format!(
                        "absorbing set is not closed: q[{x}][{y}] = {rate} leaves A"
                    ));
                }
            }
        }
        Ok(RateMatrix { q, absorbing: a })
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[Vec<f64>] {
        &self.q
    }

    pub fn absorbing_set(&self) -> &[usize] {
        &self.absorbing
    }

    /// States outside `A`, ascending.
    pub fn transient_states(&self) -> Vec<usize> {
        (0..self.n()).filter(|x| !self.absorbing.contains(x)).collect()
    }

    /// `Q` restricted to `states × states`.
    pub fn sub_rate(&self, states: &[usize]) -> CMatrix {
        CMatrix::from_fn(states.len(), states.len(), |i, j| {
            c(self.q[states[i]][states[j]], 0.0)
        })
    }
}

/// A quasi-stationary distribution on the transient states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalQsd {
    /// Probability per entry of [`RateMatrix::transient_states`].
    pub density: Vec<f64>,
    pub alpha: f64,
}

#[derive(Clone, Debug)]
pub struct ClassicalQsdReport {
    /// One density, or every extremal maximal-eigenvalue density when the
    /// sub-chain is reducible.
    pub densities: Vec<ClassicalQsd>,
    pub non_unique: bool,
    pub states: Vec<usize>,
}

impl ClassicalQsdReport {
    pub fn primary(&self) -> &ClassicalQsd {
        &self.densities[0]
    }
}

/// Left Perron eigenvector of the sub-rate matrix on `A^C`.
pub fn classical_qsd(rm: &RateMatrix) -> Result<ClassicalQsdReport> {
    let states = rm.transient_states();
    let sub = rm.sub_rate(&states);
    let tol = Tolerances::default();
    let top = perron_value(&sub, &tol)?;
    let k = states.len();
    let shifted = sub.transpose() - CMatrix::identity(k, k) * c(top, 0.0);
    let kernel = null_space(&shifted, 1e-9 * (1.0 + sub.norm()));
    let mut densities = Vec::new();
    if kernel.len() <= 1 {
        let v = match kernel.first() {
            Some(v) => v.clone(),
            None => eig_general(&sub.transpose(), &tol)?
                .into_iter()
                .next()
                .map(|p| p.vector)
                .ok_or(QssError::EigenNonConvergence { partial: Vec::new() })?,
        };
        densities.push(ClassicalQsd {
            density: to_density(v.iter().map(|z| z.re).collect())?,
            alpha: -top,
        });
    } else {
        // Reducible: each communicating class at the top eigenvalue carries
        // its own density on the states it can reach.
        for class in communicating_classes(&sub) {
            let cs = rm.sub_rate(&class.iter().map(|&i| states[i]).collect::<Vec<_>>());
            if (perron_value(&cs, &tol)? - top).abs() > 1e-9 * (1.0 + top.abs()) {
                continue;
            }
            let reach = reachable(&sub, &class);
            let rs = rm.sub_rate(&reach.iter().map(|&i| states[i]).collect::<Vec<_>>());
            let rk = reach.len();
            let sh = rs.transpose() - CMatrix::identity(rk, rk) * c(top, 0.0);
            let ker = null_space(&sh, 1e-9 * (1.0 + rs.norm()));
            if ker.len() != 1 {
                continue;
            }
            let mut full = vec![0.0; k];
            for (i, &s) in reach.iter().enumerate() {
                full[s] = ker[0][i].re;
            }
            if let Ok(d) = to_density(full) {
                densities.push(ClassicalQsd {
                    density: d,
                    alpha: -top,
                });
            }
        }
        if densities.is_empty() {
            return Err(QssError::InvalidRateMatrix(
                "no non-negative Perron density found".into(),
            ));
        }
    }
    Ok(ClassicalQsdReport {
        non_unique: densities.len() > 1 || kernel.len() > 1,
        densities,
        states,
    })
}

fn perron_value(sub: &CMatrix, tol: &Tolerances) -> Result<f64> {
    let pairs = eig_general(&sub.transpose(), tol)?;
    Ok(pairs.first().map(|p| p.value.re).unwrap_or(0.0))
}

fn to_density(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let s: f64 = v.iter().sum();
    if s.abs() < 1e-300 {
        return Err(QssError::InvalidRateMatrix("Perron vector sums to zero".into()));
    }
    for x in &mut v {
        *x /= s;
    }
    if v.iter().any(|&x| x < -1e-10) {
        return Err(QssError::InvalidRateMatrix(
            "Perron vector has mixed signs".into(),
        ));
    }
    for x in &mut v {
        *x = x.max(0.0);
    }
    Ok(v)
}

fn edge(sub: &CMatrix, i: usize, j: usize) -> bool {
    i != j && sub[(i, j)].re > 0.0
}

fn reachable(sub: &CMatrix, from: &[usize]) -> Vec<usize> {
    let k = sub.nrows();
    let mut seen = vec![false; k];
    let mut stack: Vec<usize> = from.to_vec();
    while let Some(i) = stack.pop() {
        if std::mem::replace(&mut seen[i], true) {
            continue;
        }
        stack.extend((0..k).filter(|&j| edge(sub, i, j) && !seen[j]));
    }
    (0..k).filter(|&i| seen[i]).collect()
}

fn communicating_classes(sub: &CMatrix) -> Vec<Vec<usize>> {
    let k = sub.nrows();
    let reach: Vec<Vec<usize>> = (0..k).map(|i| reachable(sub, &[i])).collect();
    let mut assigned = vec![false; k];
    let mut classes = Vec::new();
    for i in 0..k {
        if assigned[i] {
            continue;
        }
        let class: Vec<usize> = (0..k)
            .filter(|&j| reach[i].contains(&j) && reach[j].contains(&i))
            .collect();
        for &j in &class {
            assigned[j] = true;
        }
        classes.push(class);
    }
    classes
}

/// Diagonal quantum model: `H = 0`, `L_xy = √q_xy |y⟩⟨x|`, `p0 = Σ_{a∈A} |a⟩⟨a|`.
pub fn embed(rm: &RateMatrix) -> Result<ModelSpec> {
    let n = rm.n();
    let mut jumps = Vec::new();
    for x in 0..n {
        for y in 0..n {
            let q = rm.q[x][y];
            if x != y && q > 0.0 {
                let mut l = CMatrix::zeros(n, n);
                l[(y, x)] = c(q.sqrt(), 0.0);
                jumps.push(OperatorMatrix::new(l)?);
            }
        }
    }
    let p0 = OrthProjection::from_basis_indices(n, &rm.absorbing)?;
    ModelSpec::new(
        format!("classical({n} states)"),
        OperatorMatrix::zeros(n),
        jumps,
        p0,
        &Tolerances::default(),
    )
}

/// `ν̂ = Σ_x ν(x) |x⟩⟨x|` on the full space.
pub fn embed_density(rm: &RateMatrix, qsd: &ClassicalQsd) -> CMatrix {
    let mut m = CMatrix::zeros(rm.n(), rm.n());
    for (i, &x) in rm.transient_states().iter().enumerate() {
        m[(x, x)] = c(qsd.density[i], 0.0);
    }
    m
}

pub const CROSSCHECK_TOL: f64 = 1e-9;

#[derive(Debug)]
pub struct CrosscheckReport {
    pub qsd: ClassicalQsdReport,
    pub analysis: Analysis,
    /// `|α_classical − α_quantum|` for the best-matching quantum QSS.
    pub alpha_gap: f64,
    /// `‖ν̂ − ν‖` for the same QSS.
    pub state_gap: f64,
    pub matched: bool,
    /// Quantum QSS families with no classical counterpart (reported only).
    pub extra_families: Vec<usize>,
}

/// Compares the classical QSD with the quantum pipeline on the embedding.
pub fn crosscheck(rm: &RateMatrix, tol: &Tolerances) -> Result<CrosscheckReport> {
    let qsd = classical_qsd(rm)?;
    let spec = embed(rm)?;
    let analysis = analyze(&spec, tol)?;
    let target = embed_density(rm, qsd.primary());
    let alpha = qsd.primary().alpha;
    let mut best = (f64::INFINITY, f64::INFINITY, None);
    for (i, fam) in analysis.extraction.families.iter().enumerate() {
        let ag = (fam.alpha - alpha).abs();
        if ag > 1e3 * CROSSCHECK_TOL {
            continue;
        }
        let sg = family_distance(&analysis, fam, &target);
        if sg.max(ag) < best.0.max(best.1) {
            best = (ag, sg, Some(i));
        }
    }
    let matched = best.2.is_some() && best.0 <= CROSSCHECK_TOL && best.1 <= CROSSCHECK_TOL;
    let extra_families = (0..analysis.extraction.families.len())
        .filter(|&i| Some(i) != best.2)
        .collect();
    Ok(CrosscheckReport {
        qsd,
        analysis,
        alpha_gap: best.0,
        state_gap: best.1,
        matched,
        extra_families,
    })
}

/// Distance from `target` to the family: the anchor for singletons, the
/// closest segment point otherwise.
fn family_distance(analysis: &Analysis, fam: &crate::qss::QssFamily, target: &CMatrix) -> f64 {
    let restr = &analysis.restriction;
    let t = restr.compress(target);
    let anchor = &fam.anchor.nu_restricted;
    match &fam.param_interval {
        None => (anchor - &t).norm(),
        Some(p) => {
            let d2 = p.direction.norm_squared();
            let x = crate::linalg::hs_real_inner(&p.direction, &(&t - anchor)) / d2;
            let x = x.clamp(p.lo, p.hi);
            (anchor + &p.direction * c(x, 0.0) - &t).norm()
        }
    }
}
