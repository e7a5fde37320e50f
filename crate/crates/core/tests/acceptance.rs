//! Acceptance run: every criterion at its stated tolerance, one PASS/FAIL
//! line each.

mod common;

use common::{both_sites, both_sites_nu, entry, fixtures_dir, power_qsd, props, site1};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRng, TestRunner};

use qsslab::classical::{crosscheck, embed_density};
use qsslab::cli::{cmd_sweep, CommonArgs, SweepArgs, SURVIVAL_TIMES};
use qsslab::io::ModelFile;
use qsslab::linalg::{CMatrix, Tolerances};
use qsslab::pipeline::{analyze, Analysis};
use qsslab::qss::{verify_qss, FamilyKind, QssCertificate};
use qsslab::trajectory::{build_kernel, jump_statistics, nojump_survival, sample_ensemble, sector_sum};

const A: usize = 1; // |01⟩
const B: usize = 2; // |10⟩

struct Outcome {
    id: u32,
    pass: bool,
    checks: Vec<(bool, String)>,
}

impl Outcome {
    fn new(id: u32) -> Self {
        Outcome {
            id,
            pass: true,
            checks: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) -> bool {
        self.pass &= ok;
        self.checks.push((ok, what.into()));
        ok
    }

    fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.0).map(|c| c.1.as_str()).collect()
    }

    fn print(&self) {
        let summary: Vec<String> = self
            .checks
            .iter()
            .map(|(ok, s)| if *ok { s.clone() } else { format!("FAILED[{s}]") })
            .collect();
        println!(
            "{} criterion {}: {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            summary.join("; ")
        );
    }
}

fn run(spec: &qsslab::model::ModelSpec) -> Analysis {
    analyze(spec, &Tolerances::default()).expect("analysis")
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn criterion_1() -> Outcome {
    let mut o = Outcome::new(1);
    let a = run(&site1(1.0));
    let d = a.restriction.gen_schr.matrix().nrows();
    o.check(d == 9, format!("restricted generator {d}x{d}"));
    let cand = a.candidates.iter().find(|c| close(c.alpha, 0.5, 1e-9));
    o.check(cand.is_some(), "real eigenvalue -1/2 present");
    if let Some(c) = cand {
        o.check(c.herm_basis.len() == 2, format!("Hermitian eigenspace dim {}", c.herm_basis.len()));
    }
    let fam = a.extraction.families.iter().find(|f| close(f.alpha, 0.5, 1e-9));
    if !o.check(fam.is_some(), "QSS family at alpha=1/2") {
        return o;
    }
    let fam = fam.unwrap();
    o.check(fam.kind == FamilyKind::Segment, format!("{:?} family", fam.kind));
    let form = |nu: &CMatrix| -> Option<f64> {
        let ok = close(entry(nu, A, A).re, 0.5, 1e-9)
            && close(entry(nu, B, B).re, 0.5, 1e-9)
            && close(entry(nu, A, B).im, 0.25, 1e-9);
        ok.then(|| entry(nu, A, B).re)
    };
    let mut xs: Vec<Option<f64>> = fam.extremal.iter().map(|e| form(e.nu.matrix())).collect();
    xs.push(form(fam.anchor.nu.matrix()));
    o.check(xs.iter().all(Option::is_some), "nu11 = nu22 = 1/2, Im nu12 = 1/4");
    let mut ends: Vec<f64> = fam.extremal.iter().filter_map(|e| form(e.nu.matrix())).collect();
    ends.sort_by(f64::total_cmp);
    let x_star = 3f64.sqrt() / 4.0;
    let ok = ends.len() == 2 && close(ends[0], -x_star, 1e-9) && close(ends[1], x_star, 1e-9);
    o.check(ok, format!("endpoints {ends:.10?} vs +-{x_star:.10}"));
    o
}

fn criterion_2() -> Outcome {
    let mut o = Outcome::new(2);
    let omega: f64 = 0.3;
    let s = (1.0 - 4.0 * omega * omega).sqrt();
    let (ap, am) = ((1.0 + s) / 2.0, (1.0 - s) / 2.0);
    let a = run(&site1(omega));
    let mut fams: Vec<_> = a.extraction.families.iter().collect();
    fams.sort_by(|x, y| x.alpha.total_cmp(&y.alpha));
    let alphas: Vec<f64> = fams.iter().map(|f| f.alpha).collect();
    let two = fams.len() == 2 && close(alphas[0], am, 1e-9) && close(alphas[1], ap, 1e-9);
    if !o.check(two, format!("QSS rates {alphas:.12?} vs [{am}, {ap}]")) {
        return o;
    }
    for (fam, name, d_a, d_b) in [(fams[1], "nu+", am, ap), (fams[0], "nu-", ap, am)] {
        let nu = fam.anchor.nu.matrix();
        let ok = fam.kind == FamilyKind::Singleton
            && close(entry(nu, A, A).re, d_a, 1e-9)
            && close(entry(nu, B, B).re, d_b, 1e-9)
            && close(entry(nu, A, B).re, 0.0, 1e-9)
            && close(entry(nu, A, B).im, omega, 1e-9);
        o.check(ok, format!("{name} = [[{d_a:.3}, {omega}i], [-{omega}i, {d_b:.3}]]"));
        let purity = fam.anchor.nu.purity();
        o.check(close(purity, 1.0, 1e-9), format!("{name} purity {purity:.12}"));
    }
    o
}

fn criterion_3() -> Outcome {
    let mut o = Outcome::new(3);
    let a = run(&both_sites());
    let fams = &a.extraction.families;
    let at_one: Vec<_> = fams.iter().filter(|f| close(f.alpha, 1.0, 1e-9)).collect();
    o.check(
        fams.len() == at_one.len() && !fams.is_empty(),
        format!("every QSS at alpha=1 ({} families)", fams.len()),
    );
    let target = both_sites_nu();
    let gap = at_one
        .iter()
        .map(|f| (f.anchor.nu.matrix() - &target).norm())
        .fold(f64::INFINITY, f64::min);
    o.check(gap <= 1e-9, format!("(|01><01|+|10><10|)/2 found (gap {gap:.1e})"));
    let rej = a.extraction.rejected.iter().find(|r| close(r.alpha, 2.0, 1e-9));
    o.check(
        rej.is_some_and(|r| r.reason.contains("not positive")),
        format!("alpha=2 rejected: {}", rej.map_or("missing", |r| r.reason.as_str())),
    );
    let unique = fams.len() == 1 && fams[0].kind == FamilyKind::Singleton;
    let detail = match fams.first().and_then(|f| f.param_interval.as_ref()) {
        Some(p) => format!(
            "uniqueness: segment of QSSs, Re nu12 in [{:.6}, {:.6}]",
            p.lo, p.hi
        ),
        None => "uniqueness".into(),
    };
    o.check(unique, detail);
    o
}

fn emitted(a: &Analysis) -> Vec<&QssCertificate> {
    a.extraction
        .families
        .iter()
        .flat_map(|f| std::iter::once(&f.anchor).chain(f.extremal.iter()))
        .collect()
}

fn criterion_4() -> Outcome {
    let mut o = Outcome::new(4);
    for (name, spec) in [("site1 w=1", site1(1.0)), ("site1 w=0.3", site1(0.3)), ("both", both_sites())] {
        let a = run(&spec);
        let mut worst: f64 = 0.0;
        let certs = emitted(&a);
        for cert in &certs {
            let v = verify_qss(&spec, cert).expect("verification");
            for r in [v.definition, v.exponential_law, v.eigen, v.multiplicativity, v.repeated_measurement] {
                worst = worst.max(r);
            }
        }
        o.check(
            !certs.is_empty() && worst <= 1e-8,
            format!("{name}: {} states, max residual {worst:.1e}", certs.len()),
        );
    }
    o
}

fn criterion_5() -> Outcome {
    let mut o = Outcome::new(5);
    let a = run(&both_sites());
    let absorbing = a.absorption.as_ref().is_ok_and(|r| r.is_absorbing);
    o.check(absorbing, "both-sites p0 absorbing");
    let alpha = a.perron.as_ref().map_or(f64::NAN, |p| p.perron_alpha);
    o.check(close(alpha, 1.0, 1e-9) && alpha > 0.0, format!("Perron alpha {alpha:.12}"));
    let b = run(&site1(0.0));
    let absorbing = b.absorption.as_ref().map_or(true, |r| r.is_absorbing);
    o.check(!absorbing, "site1 w=0 not absorbing");
    let zero = b.candidates.iter().any(|c| c.alpha.abs() <= 1e-9);
    o.check(zero, "site1 w=0 carries alpha=0");
    o
}

fn criterion_6() -> Outcome {
    let mut o = Outcome::new(6);
    let tol = Tolerances::default();
    let spec = both_sites();
    let nu = common::density(&both_sites_nu());
    let kernel = build_kernel(&spec, &tol).expect("kernel");
    let (n, horizon, seed) = (10_000, 6.0, 42);

    let mut ident: f64 = 0.0;
    for t in SURVIVAL_TIMES {
        let s = nojump_survival(&kernel, nu.matrix(), t).expect("survival");
        ident = ident.max((s.trace_perp - (-2.0 * t).exp()).abs());
    }
    o.check(ident <= 1e-8, format!("(a) survival identity residual {ident:.1e}"));

    let records = sample_ensemble(&kernel, &nu, horizon, n, seed).expect("sampling");
    let stats = jump_statistics(&records, nu.matrix(), 1.0).expect("statistics");
    o.check(
        stats.post_jump_max_deviation <= 1e-7,
        format!("(b) post-jump deviation {:.1e}", stats.post_jump_max_deviation),
    );
    o.check(
        stats.mean_z.abs() <= 3.0,
        format!(
            "(c) mean {:.5} vs {:.5}, z = {:.2}",
            stats.empirical_mean, stats.expected_mean, stats.mean_z
        ),
    );
    let occurred = records.iter().filter(|r| !r.jump_times.is_empty()).count() as f64 / n as f64;
    let p = (1.0 - (-2.0f64 * horizon).exp()) / 2.0;
    let sd = (p * (1.0 - p) / n as f64).sqrt();
    o.check(
        (occurred - p).abs() <= 3.0 * sd,
        format!("(d) jump fraction {occurred:.4} vs {p:.6} (sd {sd:.4})"),
    );
    let sector = sector_sum(&kernel, nu.matrix(), horizon, 2000).expect("sector sum");
    o.check(
        (sector.total - 1.0).abs() <= 1e-6,
        format!("(e) sector sum {:.12}", sector.total),
    );
    o
}

fn criterion_7() -> Outcome {
    let mut o = Outcome::new(7);
    for name in ["classical_two_state.json", "classical_three_state.json"] {
        let file = ModelFile::load(&fixtures_dir().join(name)).expect("fixture");
        let rm = file.rate_matrix().expect("rate matrix");
        let t = rm.transient_states();
        let q_t: Vec<Vec<f64>> = t.iter().map(|&i| t.iter().map(|&j| rm.q()[i][j]).collect()).collect();
        let (mu, alpha) = power_qsd(&q_t);
        let x = crosscheck(&rm, &Tolerances::default()).expect("crosscheck");
        let qsd = x.qsd.primary();
        let mut oracle = qsd.clone();
        oracle.density = mu;
        oracle.alpha = alpha;
        let want = embed_density(&rm, &oracle);
        let Some(fam) = x.analysis.perron_family() else {
            o.check(false, format!("{name}: no QSS"));
            continue;
        };
        let state_gap = (fam.anchor.nu.matrix() - &want).norm();
        let ok = x.matched
            && (fam.alpha - alpha).abs() <= 1e-9
            && (qsd.alpha - alpha).abs() <= 1e-9
            && state_gap <= 1e-9;
        o.check(
            ok,
            format!("{name}: alpha {:.12} vs oracle {alpha:.12}, state gap {state_gap:.1e}", fam.alpha),
        );
    }
    o
}

fn criterion_8() -> Outcome {
    let mut o = Outcome::new(8);
    let cases = 200;
    type Property = fn(u64) -> props::Check;
    let suite: [(&str, Property); 5] = [
        ("duality", props::duality),
        ("density preservation", props::density_preservation),
        ("S~ trace", props::tilde_trace),
        ("restrict/embed", props::restrict_embed),
        ("grid oracle d=3", props::grid_oracle),
    ];
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let runner = || TestRunner::new_with_rng(config.clone(), TestRng::deterministic_rng(config.rng_algorithm));
    for (name, f) in suite {
        let r = runner().run(&any::<u64>(), |seed| f(seed).map_err(TestCaseError::fail));
        o.check(r.is_ok(), format!("{name} x{cases}{}", r.err().map_or(String::new(), |e| format!(": {e}"))));
    }
    let r = runner().run(&(any::<u64>(), 0.3f64..3.0), |(seed, c)| {
        props::rate_scaling(seed, c).map_err(TestCaseError::fail)
    });
    o.check(r.is_ok(), format!("rate scaling x{cases}{}", r.err().map_or(String::new(), |e| format!(": {e}"))));
    o
}

fn criterion_9() -> Outcome {
    let mut o = Outcome::new(9);
    let dir = tempfile::tempdir().expect("tempdir");
    let out = dir.path().join("sweep.csv");
    let tol = Tolerances::default();
    let args = SweepArgs {
        common: CommonArgs {
            model: fixtures_dir().join("two_qubit_site1.json"),
            tol_eig: tol.eig,
            tol_psd: tol.psd,
            out: Some(out.clone()),
        },
        param: "omega".into(),
        range: "0.1:1.0:10".into(),
    };
    let code = cmd_sweep(&args).expect("sweep");
    o.check(code == 0, format!("exit code {code}"));
    let mut rdr = csv::Reader::from_path(&out).expect("csv");
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.expect("row");
        let omega: f64 = rec[0].parse().unwrap();
        let n: usize = rec[1].parse().unwrap();
        let disc: f64 = rec[4].parse().unwrap();
        rows.push((omega, n, disc));
    }
    let below: Vec<_> = rows.iter().filter(|r| r.0 < 0.5 - 1e-12).collect();
    let at = rows.iter().find(|r| close(r.0, 0.5, 1e-12));
    let above: Vec<_> = rows.iter().filter(|r| r.0 > 0.5 + 1e-12).collect();
    o.check(
        !below.is_empty() && below.iter().all(|r| r.1 == 2 && close(r.2, 1.0 - 4.0 * r.0 * r.0, 1e-9)),
        format!("{} points below 1/2 with two branches, gap^2 = 1-4w^2", below.len()),
    );
    o.check(
        below.windows(2).all(|w| w[1].2 < w[0].2),
        "branches approach each other",
    );
    o.check(
        at.is_some_and(|r| r.1 == 1 && r.2.abs() <= 1e-9),
        format!("w=1/2: discriminant {:?}", at.map(|r| r.2)),
    );
    o.check(
        above.iter().all(|r| r.1 == 1),
        format!("{} points above 1/2 with a single rate", above.len()),
    );
    o
}

fn main() {
    let outcomes = [
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
    ];
    for o in &outcomes {
        o.print();
    }
    // Criterion 3 asks for a unique QSS, but the α = 1 eigenspace is two
    // dimensional and every Re ν₁₂ ∈ [−½, ½] gives a QSS. That sub-check
    // fails on the model itself; every other check must pass.
    for o in &outcomes {
        if o.id == 3 {
            let failed = o.failed();
            assert!(
                failed.len() == 1 && failed[0].starts_with("uniqueness"),
                "criterion 3: unexpected failures {failed:?}"
            );
        } else {
            assert!(o.pass, "criterion {} failed: {:?}", o.id, o.failed());
        }
    }
}
