//! Machine-readable reports.
//!
//! Reports are `serde_json::Value` trees (object keys sorted) written with
//! every float in `{:.16e}` form, i.e. 17 significant digits, so that equal
//! inputs give byte-identical files and every float round-trips exactly.

use std::io::{self, Write};

use num_complex::Complex64;
use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::{json, Map, Value};

use crate::classical::CrosscheckReport;
use crate::linalg::{matrix_to_pairs, min_eigenvalue_hermitian, CMatrix, DensityMatrix, Tolerances};
use crate::pipeline::Analysis;
use crate::qss::{FamilyKind, QssCertificate, QssFamily, VerificationReport};
use crate::structure::RestrictedGenerator;
use crate::trajectory::{JumpStatistics, SectorSum, TrajectoryRecord};

pub const ARTIFACT: &str = "qsslab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

struct FixedFormatter;

impl Formatter for FixedFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", format_float(value))
    }
}

/// `{:.16e}` with a finite guard.
pub fn format_float(value: f64) -> String {
    if value.is_finite() {
        format!("{value:.16e}")
    } else {
        "null".into()
    }
}

/// Compact canonical JSON of any serializable value.
pub fn to_canonical_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let v = serde_json::to_value(value)?;
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFormatter);
    v.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

fn pair(z: Complex64) -> Value {
    json!([num(z.re), num(z.im)])
}

fn matrix(m: &CMatrix) -> Value {
    Value::Array(
        matrix_to_pairs(m)
            .into_iter()
            .map(|row| {
                Value::Array(row.into_iter().map(|[re, im]| json!([num(re), num(im)])).collect())
            })
            .collect(),
    )
}

pub fn provenance(tol: &Tolerances, seed: Option<u64>, extra: Map<String, Value>) -> Value {
    let mut p = Map::new();
    p.insert("artifact".into(), json!(ARTIFACT));
    p.insert("version".into(), json!(VERSION));
    p.insert("seed".into(), seed.map_or(Value::Null, |s| json!(s)));
    p.insert(
        "tolerances".into(),
        json!({
            "herm": num(tol.herm),
            "trace": num(tol.trace),
            "psd": num(tol.psd),
            "eig": num(tol.eig),
            "cluster": num(tol.cluster),
        }),
    );
    p.extend(extra);
    Value::Object(p)
}

fn certificate(cert: &QssCertificate) -> Value {
    let nu: &DensityMatrix = &cert.nu;
    let (vals, _) = crate::linalg::hermitian_eigen(nu.matrix());
    let support_rank = vals.iter().filter(|&&v| v > 1e-9).count();
    json!({
        "alpha": num(cert.alpha),
        "nu": matrix(nu.matrix()),
        "residual_eigen": num(cert.residual_eigen),
        "residual_defn": num(cert.residual_defn),
        "is_perron": cert.is_perron,
        "purity": num(nu.purity()),
        "support_rank": support_rank,
        "min_eigenvalue_restricted": num(min_eigenvalue_hermitian(&cert.nu_restricted)),
    })
}

pub fn verification(v: &VerificationReport) -> Value {
    json!({
        "alpha": num(v.alpha),
        "definition": num(v.definition),
        "survival": num(v.survival),
        "exponential_law": num(v.exponential_law),
        "eigen": num(v.eigen),
        "multiplicativity": num(v.multiplicativity),
        "repeated_measurement": num(v.repeated_measurement),
        "alpha_log_gap": num(v.alpha_log_gap),
        "passed": v.passed,
    })
}

fn family(restr: &RestrictedGenerator, f: &QssFamily, v: Option<&VerificationReport>) -> Value {
    let kind = match f.kind {
        FamilyKind::Singleton => "singleton",
        FamilyKind::Segment => "segment",
        FamilyKind::PartialScan => "partial_scan",
    };
    let interval = f.param_interval.as_ref().map_or(Value::Null, |p| {
        json!({
            "direction": matrix(&restr.embed(&p.direction)),
            "lo": num(p.lo),
            "hi": num(p.hi),
        })
    });
    json!({
        "alpha": num(f.alpha),
        "kind": kind,
        "is_perron": f.is_perron(),
        "defective": f.defective,
        "eigenspace_dim": f.herm_basis.len(),
        "anchor": certificate(&f.anchor),
        "param_interval": interval,
        "extremal": f.extremal.iter().map(certificate).collect::<Vec<_>>(),
        "notes": f.notes,
        "verification": v.map_or(Value::Null, verification),
    })
}

/// Report body of `analyze`.
pub fn analysis(a: &Analysis) -> Value {
    let r = &a.restriction;
    let absorption = match &a.absorption {
        Ok(x) => json!({
            "is_absorbing": x.is_absorbing,
            "a_op": matrix(x.a_op.matrix()),
            "residual_harmonic": num(x.residual_harmonic),
            "convergence_gap": num(x.convergence_gap),
            "doubling_horizon": num(x.doubling_horizon),
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let perron = match &a.perron {
        Ok(p) => json!({
            "spectral_abscissa": num(p.spectral_abscissa),
            "perron_alpha": num(p.perron_alpha),
            "perron_family": p.perron_family,
            "irreducible": p.irreducible,
            "notes": p.notes,
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let families: Vec<Value> = a
        .extraction
        .families
        .iter()
        .enumerate()
        .map(|(i, f)| family(r, f, a.verifications.get(i)))
        .collect();
    let mut overlaps = Vec::new();
    let fams = &a.extraction.families;
    for i in 0..fams.len() {
        for j in (i + 1)..fams.len() {
            let ov = (fams[i].anchor.nu.matrix() * fams[j].anchor.nu.matrix()).trace().re;
            overlaps.push(json!({ "a": i, "b": j, "hs_overlap": num(ov) }));
        }
    }
    json!({
        "structure": {
            "subharmonic": {
                "algebraic_residual": num(a.subharmonic.algebraic_residual),
                "semigroup_residual": num(a.subharmonic.semigroup_residual),
                "verdict": a.subharmonic.verdict,
            },
            "restricted_dim": r.m,
            "gkls_consistency": num(r.gkls_consistency()),
            "absorption": absorption,
            "irreducibility": {
                "verdict": a.irreducibility.verdict,
                "note": a.irreducibility.note,
                "witness_dim": a.irreducibility.witness.as_ref().map(|w| w.len()),
            },
        },
        "spectrum": a.spectrum.iter().map(|z| json!({"re": num(z.re), "im": num(z.im)})).collect::<Vec<_>>(),
        "candidates": a.candidates.iter().map(|c| json!({
            "alpha": num(c.alpha),
            "eigenvalue": pair(c.eigenvalue),
            "algebraic_multiplicity": c.algebraic_multiplicity,
            "eigenspace_dim": c.herm_basis.len(),
            "defective": c.defective,
            "warnings": c.warnings,
        })).collect::<Vec<_>>(),
        "qss": {
            "families": families,
            "rejected": a.extraction.rejected.iter().map(|x| json!({
                "alpha": num(x.alpha),
                "eigenspace_dim": x.eigenspace_dim,
                "reason": x.reason,
            })).collect::<Vec<_>>(),
            "overlaps": overlaps,
        },
        "perron": perron,
        "theory": {
            "consistent": a.is_consistent(),
            "failures": a.theory_failures,
        },
    })
}

pub fn jump_statistics(s: &JumpStatistics) -> Value {
    json!({
        "n_trajectories": s.n_trajectories,
        "n_observed_jumps": s.n_observed_jumps,
        "rate": num(s.rate),
        "empirical_mean": num(s.empirical_mean),
        "expected_mean": num(s.expected_mean),
        "mean_std_error": num(s.mean_std_error),
        "mean_z": num(s.mean_z),
        "ks_statistic": num(s.ks_statistic),
        "ks_critical_1pct": num(s.ks_critical_1pct),
        "post_jump_max_deviation": num(s.post_jump_max_deviation),
        "censoring_fraction": num(s.censoring_fraction),
        "occurrence_fraction": num(1.0 - s.censoring_fraction),
        "interjump_samples": s.interjump_samples.iter().map(|&x| num(x)).collect::<Vec<_>>(),
    })
}

pub fn sector_sum(s: &SectorSum) -> Value {
    json!({
        "zero_jump": num(s.zero_jump),
        "one_jump": num(s.one_jump),
        "higher": num(s.higher),
        "total": num(s.total),
    })
}

/// One JSON-lines record.
pub fn trajectory_record(r: &TrajectoryRecord) -> Value {
    json!({
        "seed": r.seed,
        "stream": r.stream,
        "horizon": num(r.horizon),
        "jump_times": r.jump_times.iter().map(|&t| num(t)).collect::<Vec<_>>(),
        "post_jump_states": r.post_jump_states.iter().map(|s| matrix(s.matrix())).collect::<Vec<_>>(),
        "final_state": matrix(r.final_state.matrix()),
        "final_weight": num(r.final_weight),
        "censored": r.censored,
    })
}

pub fn crosscheck(x: &CrosscheckReport) -> Value {
    json!({
        "states": x.qsd.states,
        "qsd": x.qsd.densities.iter().map(|d| json!({
            "density": d.density.iter().map(|&p| num(p)).collect::<Vec<_>>(),
            "alpha": num(d.alpha),
        })).collect::<Vec<_>>(),
        "non_unique": x.qsd.non_unique,
        "alpha_gap": num(x.alpha_gap),
        "state_gap": num(x.state_gap),
        "matched": x.matched,
        "extra_families": x.extra_families,
        "quantum": analysis(&x.analysis),
    })
}

pub fn density(m: &CMatrix) -> Value {
    matrix(m)
}
