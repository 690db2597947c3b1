use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use clap::ValueEnum;

use hashdiv::bench::{run_experiment, summarize, write_outputs};
use hashdiv::ensemble::estimate_ehb;
use hashdiv::{
    default_epsilon, estimate, oracle_divergence, sample_truncated_gaussian, DivergenceKind, DivergenceSpec,
    EnsembleConfig, HashConfig, OnlineState, OracleMethod, SampleSet, SupportBox, TruncatedGaussianSpec,
};

use crate::args::*;
use crate::config::PlanConfig;
use crate::number::sig9;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; exit code 2.
    Usage(String),
    /// Failure while running; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<hashdiv::Error> for CliError {
    fn from(e: hashdiv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(msg.into()))
}

impl DivergenceArg {
    pub fn from_str_loose(s: &str) -> Result<Self> {
        <Self as ValueEnum>::from_str(s, true).map_err(|_| CliError::Usage(format!("unknown divergence '{s}'")))
    }
}

pub fn divergence_spec(kind: DivergenceArg, alpha: Option<f64>, clip_floor: Option<f64>) -> Result<DivergenceSpec> {
    let need_alpha = || alpha.ok_or_else(|| CliError::Usage("--alpha is required for this divergence".into()));
    let kind = match kind {
        DivergenceArg::Kl => DivergenceKind::Kl,
        DivergenceArg::Hellinger => DivergenceKind::Hellinger,
        DivergenceArg::Tv => DivergenceKind::TotalVariation,
        DivergenceArg::Alpha => DivergenceKind::Alpha(need_alpha()?),
        DivergenceArg::Renyi => DivergenceKind::Renyi(need_alpha()?),
    };
    let spec = DivergenceSpec::new(kind).map_err(|e| CliError::Usage(e.to_string()))?;
    match clip_floor {
        Some(f) => spec.with_clip_floor(f).map_err(|e| CliError::Usage(e.to_string())),
        None => Ok(spec),
    }
}

fn spec_from(args: &DivergenceArgs) -> Result<DivergenceSpec> {
    divergence_spec(args.divergence, args.alpha, args.clip_floor)
}

/// Checks the box flags up front; broadcasting waits until `d` is known.
fn check_box(b: &BoxArgs) -> Result<()> {
    match (&b.box_lo, &b.box_hi) {
        (None, None) => Ok(()),
        (Some(lo), Some(hi)) => {
            if lo.is_empty() || hi.is_empty() {
                return usage("--box-lo and --box-hi need at least one value");
            }
            if lo.len() == hi.len() && lo.iter().zip(hi).any(|(l, h)| !(l < h)) {
                return usage("--box-lo must be below --box-hi on every axis");
            }
            Ok(())
        }
        _ => usage("--box-lo and --box-hi must be given together"),
    }
}

fn resolve_box(b: &BoxArgs, dim: usize) -> Result<Option<SupportBox>> {
    let (Some(lo), Some(hi)) = (&b.box_lo, &b.box_hi) else {
        return Ok(None);
    };
    let widen = |v: &Vec<f64>| -> Result<Vec<f64>> {
        match v.len() {
            1 => Ok(vec![v[0]; dim]),
            n if n == dim => Ok(v.clone()),
            n => usage(format!("box has {n} values, expected 1 or {dim}")),
        }
    };
    SupportBox::new(widen(lo)?, widen(hi)?).map(Some).map_err(|e| CliError::Usage(e.to_string()))
}

fn vector_or(v: &Option<Vec<f64>>, dim: usize, fill: f64, what: &str) -> Result<Vec<f64>> {
    match v {
        None => Ok(vec![fill; dim]),
        Some(v) if v.len() == dim => Ok(v.clone()),
        Some(v) => usage(format!("--{what} has {} values, expected {dim}", v.len())),
    }
}

fn check_positive(v: f64, what: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        usage(format!("{what} must be positive, got {v}"))
    }
}

fn check_gamma(g: f64) -> Result<()> {
    if g > 0.0 && g <= 1.0 {
        Ok(())
    } else {
        usage(format!("--gamma must lie in (0, 1], got {g}"))
    }
}

fn read_samples(path: &Path) -> Result<SampleSet> {
    let file = File::open(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    SampleSet::read_csv(file).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn read_pair(x: &Path, y: &Path, support: &BoxArgs) -> Result<(SampleSet, SampleSet)> {
    let (x, y) = (read_samples(x)?, read_samples(y)?);
    if x.dim() != y.dim() {
        return Err(CliError::Runtime(format!("dimension mismatch: {} vs {}", x.dim(), y.dim())));
    }
    match resolve_box(support, x.dim())? {
        Some(b) => Ok((x.to_unit_box(&b)?, y.to_unit_box(&b)?)),
        None => Ok((x, y)),
    }
}

fn output(path: &Option<std::path::PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Ensemble(a) => ensemble_cmd(a),
        Command::Online(a) => online_cmd(a),
        Command::Oracle(a) => oracle_cmd(a),
        Command::Benchmark(a) => benchmark_cmd(a),
    }
}

fn gen(a: GenArgs) -> Result<()> {
    if a.n == 0 || a.dim == 0 {
        return usage("--n and --dim must be positive");
    }
    check_box(&a.support)?;
    let support = resolve_box(&a.support, a.dim)?.unwrap_or(SupportBox::cube(a.dim, -3.0, 3.0)?);
    let mean = vector_or(&a.mean, a.dim, 0.0, "mean")?;
    let variance = vector_or(&a.variance, a.dim, 1.0, "variance")?;
    let spec = TruncatedGaussianSpec::new(mean, variance, support, a.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let sample = sample_truncated_gaussian(&spec, a.n)?;
    let mut out = output(&a.out)?;
    sample.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn estimate_cmd(a: EstimateArgs) -> Result<()> {
    let spec = spec_from(&a.divergence)?;
    if let Some(e) = a.hash.epsilon {
        check_positive(e, "--epsilon")?;
    }
    check_gamma(a.hash.gamma)?;
    check_positive(a.hash.c_h, "--c-h")?;
    check_box(&a.support)?;

    let (x, y) = read_pair(&a.x, &a.y, &a.support)?;
    if x.is_empty() {
        return Err(CliError::Runtime("X sample is empty".into()));
    }
    let eps = a.hash.epsilon.unwrap_or_else(|| default_epsilon(x.len(), x.dim(), a.hash.gamma));
    let cfg = HashConfig::for_sample_size(x.len(), eps, a.hash.c_h, a.hash.seed)?;
    let r = estimate(&x, &y, &cfg, &spec)?;
    println!("divergence={}", sig9(r.value));
    Ok(())
}

fn ensemble_cmd(a: EnsembleArgs) -> Result<()> {
    let spec = spec_from(&a.divergence)?;
    check_positive(a.c_h, "--c-h")?;
    check_positive(a.t_min, "--t-min")?;
    if !(a.t_max > a.t_min) {
        return usage("--t-max must exceed --t-min");
    }
    check_box(&a.support)?;

    let (x, y) = read_pair(&a.x, &a.y, &a.support)?;
    let d = x.dim();
    let count = a.t_count.unwrap_or(d + 3);
    let cfg = EnsembleConfig::uniform(count, a.t_min, a.t_max, d)
        .map_err(|e| CliError::Usage(e.to_string()))?
        .with_c_h(a.c_h);
    let r = estimate_ehb(&x, &y, &spec, &cfg, a.seed)?;
    println!("divergence={}", sig9(r.value));
    Ok(())
}

fn online_cmd(a: OnlineArgs) -> Result<()> {
    let spec = spec_from(&a.divergence)?;
    check_gamma(a.gamma)?;
    check_positive(a.c_h, "--c-h")?;
    check_box(&a.support)?;

    let file = File::open(&a.input).map_err(|e| CliError::Runtime(format!("{}: {e}", a.input.display())))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers().map_err(|e| CliError::Runtime(e.to_string()))?.clone();
    if header.get(0) != Some("stream") || header.len() < 2 {
        return Err(CliError::Runtime("stream CSV needs a header 'stream,x1,...,xd'".into()));
    }
    let dim = header.len() - 1;
    let support = resolve_box(&a.support, dim)?;
    let mut xs: std::collections::VecDeque<Vec<f64>> = Default::default();
    let mut ys: std::collections::VecDeque<Vec<f64>> = Default::default();
    let mut state = OnlineState::new(spec, dim, a.gamma, a.seed)?.with_c_h(a.c_h)?;

    let mut out = csv::Writer::from_writer(output(&a.out)?);
    let csv_err = |e: csv::Error| CliError::Runtime(e.to_string());
    out.write_record(["step", "estimate", "epsilon", "bucket_count", "rehash_count"]).map_err(csv_err)?;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let bad = |m: String| CliError::Runtime(format!("row {}: {m}", line + 2));
        let mut point = record
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>().map_err(|e| bad(format!("'{v}': {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(b) = &support {
            for (v, (l, h)) in point.iter_mut().zip(b.lo.iter().zip(&b.hi)) {
                *v = (*v - l) / (h - l);
            }
        }
        match record.get(0).map(str::trim) {
            Some("x") => xs.push_back(point),
            Some("y") => ys.push_back(point),
            other => return Err(bad(format!("stream must be 'x' or 'y', got {other:?}"))),
        }
        if let (Some(_), Some(_)) = (xs.front(), ys.front()) {
            let (x, y) = (xs.pop_front().unwrap(), ys.pop_front().unwrap());
            state.update(&x, &y)?;
            let cfg = state.hash_config().expect("set after the first pair");
            out.write_record([
                state.n_seen().to_string(),
                format!("{:?}", state.estimate().value),
                format!("{:?}", cfg.epsilon),
                cfg.bucket_count.to_string(),
                state.rehash_count().to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    out.flush()?;
    if !xs.is_empty() || !ys.is_empty() {
        eprintln!("warning: {} unpaired trailing samples ignored", xs.len() + ys.len());
    }
    let e = state.estimate();
    if e.insufficient_data {
        eprintln!("warning: no complete (x, y) pair in the input");
    }
    eprintln!("divergence={}", sig9(e.value));
    Ok(())
}

fn oracle_cmd(a: OracleArgs) -> Result<()> {
    let spec = spec_from(&a.divergence)?;
    if a.dim == 0 {
        return usage("--dim must be positive");
    }
    check_box(&a.support)?;
    let support = resolve_box(&a.support, a.dim)?.unwrap_or(SupportBox::cube(a.dim, -3.0, 3.0)?);
    let make = |mean: &Option<Vec<f64>>, var: &Option<Vec<f64>>, tag: &str| -> Result<TruncatedGaussianSpec> {
        TruncatedGaussianSpec::new(
            vector_or(mean, a.dim, 0.0, &format!("mean{tag}"))?,
            vector_or(var, a.dim, 1.0, &format!("variance{tag}"))?,
            support.clone(),
            0,
        )
        .map_err(|e| CliError::Usage(e.to_string()))
    };
    let p = make(&a.mean1, &a.variance1, "1")?;
    let q = make(&a.mean2, &a.variance2, "2")?;
    let method = match a.method {
        MethodArg::Auto if a.dim <= 2 => OracleMethod::GridQuadrature,
        MethodArg::Grid => OracleMethod::GridQuadrature,
        MethodArg::Auto | MethodArg::Mc => OracleMethod::MonteCarlo { samples: a.samples, seed: a.seed },
    };
    let r = oracle_divergence(&p, &q, &spec, method)?;
    println!("divergence={} ± {}", sig9(r.value), sig9(r.standard_error));
    Ok(())
}

fn benchmark_cmd(a: BenchmarkArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| CliError::Usage(format!("{}: {e}", a.config.display())))?;
    let mut plan = PlanConfig::parse(&text)?.into_plan()?;
    if let Some(t) = a.trials {
        plan.trials = t;
    }
    if let Some(s) = a.seed {
        plan.master_seed = s;
    }
    plan.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let records = run_experiment(&plan)?;
    let rows = summarize(&records)?;
    write_outputs(&a.out, &records, &rows)?;
    for r in &rows {
        println!(
            "{} N={} mean={} mse={} band=[{}, {}]",
            r.estimator,
            r.n,
            sig9(r.mean_estimate),
            sig9(r.mse),
            sig9(r.q025),
            sig9(r.q975)
        );
    }
    Ok(())
}
