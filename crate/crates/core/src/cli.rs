//! `qsslab` commands. Exit codes: 0 success, 1 input error, 2 failure of a
//! theoretical statement on the given model.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::classical::crosscheck;
use crate::error::QssError;
use crate::io::{load_density, ModelFile};
use crate::linalg::{DensityMatrix, Tolerances};
use crate::pipeline::analyze;
use crate::report::{self, format_float, to_canonical_string};
use crate::trajectory::{build_kernel, jump_statistics, nojump_survival, sample_ensemble, sector_sum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_THEORY: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "qsslab", version, about = "Quasi-stationary states of quantum Markov semigroups")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structure, QSS families, Perron data and verification residuals.
    Analyze(AnalyzeArgs),
    /// Sample counting-process trajectories.
    Simulate(SimulateArgs),
    /// Compare a classical chain's QSD with its quantum embedding.
    Classical(ClassicalArgs),
    /// QSS decay rates over a parameter range, as CSV.
    Sweep(SweepArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Model file (JSON, schema version "1").
    pub model: PathBuf,
    /// Realness threshold for eigenvalues.
    #[arg(long, default_value_t = Tolerances::default().eig)]
    pub tol_eig: f64,
    /// Positivity threshold.
    #[arg(long, default_value_t = Tolerances::default().psd)]
    pub tol_psd: f64,
    /// Output path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CommonArgs {
    pub fn tolerances(&self) -> Result<Tolerances, QssError> {
        for (name, v) in [("--tol-eig", self.tol_eig), ("--tol-psd", self.tol_psd)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(QssError::field(name, "must be positive and finite"));
            }
        }
        Ok(Tolerances {
            eig: self.tol_eig,
            psd: self.tol_psd,
            ..Tolerances::default()
        })
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 6.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// `qss` for the Perron QSS, or a path to a density-matrix JSON file.
    #[arg(long, default_value = "qss")]
    pub start: String,
    /// JSON-lines trajectory dump.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassicalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub param: String,
    /// `a:b:n`, `n` evenly spaced values from `a` to `b` inclusive.
    #[arg(long)]
    pub range: String,
}

/// Parses `argv` and runs; the return value is the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Classical(a) => cmd_classical(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("qsslab: {e}");
            if e.is_theory_violation() {
                EXIT_THEORY
            } else {
                EXIT_INPUT
            }
        }
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), QssError> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn bundle(command: &str, provenance: Value, body: Value) -> Value {
    let mut m = Map::new();
    m.insert("schema_version".into(), json!("1"));
    m.insert("command".into(), json!(command));
    m.insert("provenance".into(), provenance);
    if let Value::Object(b) = body {
        m.extend(b);
    }
    Value::Object(m)
}

fn model_info(file: &ModelFile, spec: &crate::model::ModelSpec) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert(
        "model".into(),
        json!({
            "label": spec.label,
            "dim": spec.dim(),
            "p0_rank": spec.p0().rank(),
            "n_jump_ops": spec.jump_ops().len(),
            "params": file.params,
        }),
    );
    m
}

fn load(common: &CommonArgs) -> Result<(ModelFile, Tolerances), QssError> {
    let tol = common.tolerances()?;
    let file = ModelFile::load(&common.model).map_err(|e| match e {
        QssError::Io(io) => QssError::field("model", format!("{}: {io}", common.model.display())),
        other => other,
    })?;
    Ok((file, tol))
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<i32, QssError> {
    let (file, tol) = load(&args.common)?;
    let spec = file.to_spec(&tol)?;
    let a = analyze(&spec, &tol)?;
    let doc = bundle(
        "analyze",
        report::provenance(&tol, None, model_info(&file, &spec)),
        report::analysis(&a),
    );
    write_output(args.common.out.as_deref(), &(to_canonical_string(&doc)? + "\n"))?;
    for f in &a.theory_failures {
        eprintln!("qsslab: theory check failed: {f}");
    }
    Ok(if a.is_consistent() { EXIT_OK } else { EXIT_THEORY })
}

/// Survival identity `tr(S_{t*}(ν)p0⊥) = e^{−(1+α)t}` sample times.
pub const SURVIVAL_TIMES: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 4.0];

pub fn cmd_simulate(args: &SimulateArgs) -> Result<i32, QssError> {
    let (file, tol) = load(&args.common)?;
    if args.samples == 0 {
        return Err(QssError::field("--samples", "must be at least 1"));
    }
    if !(args.horizon > 0.0 && args.horizon.is_finite()) {
        return Err(QssError::field("--horizon", "must be positive and finite"));
    }
    let spec = file.to_spec(&tol)?;
    let a = analyze(&spec, &tol)?;
    let perron = a.perron_family();
    let (start, start_is_qss): (DensityMatrix, bool) = if args.start == "qss" {
        match perron {
            Some(f) => (f.anchor.nu.clone(), true),
            None => {
                eprintln!("qsslab: --start qss but the model has no QSS");
                return Ok(EXIT_THEORY);
            }
        }
    } else {
        (load_density(Path::new(&args.start), spec.dim(), &tol)?, false)
    };
    let kernel = build_kernel(&spec, &tol)?;
    let records = sample_ensemble(&kernel, &start, args.horizon, args.samples, args.seed)?;
    if let Some(path) = &args.dump {
        let mut w = BufWriter::new(File::create(path)?);
        for r in &records {
            writeln!(w, "{}", to_canonical_string(&report::trajectory_record(r))?)?;
        }
        w.flush()?;
    }

    let mut body = Map::new();
    body.insert("start".into(), json!({
        "kind": if start_is_qss { "qss" } else { "file" },
        "state": report::density(start.matrix()),
    }));
    let reference = perron.map(|f| (f.anchor.nu.matrix().clone(), f.alpha));
    body.insert(
        "reference_alpha".into(),
        reference.as_ref().map_or(Value::Null, |r| json!(r.1)),
    );
    let stats = match &reference {
        Some((nu, alpha)) => match jump_statistics(&records, nu, *alpha) {
            Ok(s) => report::jump_statistics(&s),
            Err(QssError::NoSamples) => json!({ "error": QssError::NoSamples.to_string() }),
            Err(e) => return Err(e),
        },
        None => Value::Null,
    };
    body.insert("statistics".into(), stats);
    let censored = records.iter().filter(|r| r.censored).count();
    body.insert(
        "censoring_fraction".into(),
        json!(censored as f64 / records.len() as f64),
    );
    let mut identity: f64 = 0.0;
    if let Some((_, alpha)) = &reference {
        if start_is_qss {
            for t in SURVIVAL_TIMES {
                let s = nojump_survival(&kernel, start.matrix(), t)?;
                identity = identity.max((s.trace_perp - (-(1.0 + alpha) * t).exp()).abs());
            }
        }
    }
    body.insert(
        "survival_identity_residual".into(),
        if start_is_qss { json!(identity) } else { Value::Null },
    );
    body.insert(
        "sector_sum".into(),
        report::sector_sum(&sector_sum(&kernel, start.matrix(), args.horizon, 2000)?),
    );
    body.insert(
        "run".into(),
        json!({ "samples": args.samples, "horizon": args.horizon }),
    );
    let doc = bundle(
        "simulate",
        report::provenance(&tol, Some(args.seed), model_info(&file, &spec)),
        Value::Object(body),
    );
    write_output(args.common.out.as_deref(), &(to_canonical_string(&doc)? + "\n"))?;
    Ok(if a.is_consistent() { EXIT_OK } else { EXIT_THEORY })
}

pub fn cmd_classical(args: &ClassicalArgs) -> Result<i32, QssError> {
    let (file, tol) = load(&args.common)?;
    let rm = file.rate_matrix()?;
    let x = crosscheck(&rm, &tol)?;
    let mut extra = Map::new();
    extra.insert("model".into(), json!({ "label": file.label, "n_states": rm.n() }));
    let doc = bundle(
        "classical",
        report::provenance(&tol, None, extra),
        json!({ "crosscheck": report::crosscheck(&x) }),
    );
    write_output(args.common.out.as_deref(), &(to_canonical_string(&doc)? + "\n"))?;
    if !x.matched {
        eprintln!(
            "qsslab: classical QSD does not match the embedded QSS (alpha gap {:.3e}, state gap {:.3e})",
            x.alpha_gap, x.state_gap
        );
        return Ok(EXIT_THEORY);
    }
    Ok(if x.analysis.is_consistent() { EXIT_OK } else { EXIT_THEORY })
}

/// Parses `a:b:n`.
pub fn parse_range(s: &str) -> Result<Vec<f64>, QssError> {
    let bad = |msg: &str| QssError::field("--range", format!("{msg} (got {s:?}, expected a:b:n)"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad("three fields required"));
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad("start is not a number"))?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad("end is not a number"))?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad("count is not an integer"))?;
    if !a.is_finite() || !b.is_finite() {
        return Err(bad("bounds must be finite"));
    }
    match n {
        0 => Err(bad("empty range")),
        1 => Ok(vec![a]),
        _ => {
            let k = (n - 1) as f64;
            Ok((0..n)
                .map(|i| (a * (k - i as f64) + b * i as f64) / k)
                .collect())
        }
    }
}

pub const SWEEP_HEADER: [&str; 7] = [
    "value",
    "n_qss",
    "alpha_min",
    "alpha_max",
    "discriminant",
    "alphas",
    "consistent",
];

pub fn cmd_sweep(args: &SweepArgs) -> Result<i32, QssError> {
    let (file, tol) = load(&args.common)?;
    let values = parse_range(&args.range)?;
    if !file.parameters().iter().any(|p| p == &args.param) {
        return Err(QssError::field(
            "--param",
            format!("model has no parameter {:?}", args.param),
        ));
    }
    let mut rows = Vec::with_capacity(values.len());
    let mut all_ok = true;
    for &v in &values {
        let spec = file.with_param(&args.param, v)?.to_spec(&tol)?;
        let a = analyze(&spec, &tol)?;
        let mut alphas: Vec<f64> = a.extraction.families.iter().map(|f| f.alpha).collect();
        alphas.sort_by(f64::total_cmp);
        all_ok &= a.is_consistent();
        rows.push((v, alphas, a.is_consistent()));
    }
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = SWEEP_HEADER.map(String::from).to_vec();
        header[0] = args.param.clone();
        w.write_record(&header).map_err(csv_err)?;
        for (v, alphas, ok) in &rows {
            let (lo, hi) = match (alphas.first(), alphas.last()) {
                (Some(&l), Some(&h)) => (format_float(l), format_float(h)),
                _ => (String::new(), String::new()),
            };
            let disc = match (alphas.first(), alphas.last()) {
                (Some(&l), Some(&h)) => format_float((h - l) * (h - l)),
                _ => String::new(),
            };
            let list = alphas
                .iter()
                .map(|&x| format_float(x))
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                format_float(*v),
                alphas.len().to_string(),
                lo,
                hi,
                disc,
                list,
                ok.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
    }
    write_output(
        args.common.out.as_deref(),
        std::str::from_utf8(&buf).expect("CSV of ASCII fields"),
    )?;
    Ok(if all_ok { EXIT_OK } else { EXIT_THEORY })
}

fn csv_err(e: csv::Error) -> QssError {
    QssError::Io(std::io::Error::other(e.to_string()))
}
