//! Experiment harness: MSE and runtime against sample size.
//!
//! Every `(N, trial)` cell draws fresh X and Y samples from seeds derived
//! from the master seed, so all estimators in a cell see the same data and a
//! rerun reproduces every estimate. Timings cover the estimator only.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use statrs::statistics::{Data, OrderStatistics};

use crate::divergence::{default_epsilon, estimate, renyi_known_support, DivergenceKind, DivergenceSpec};
use crate::ensemble::{estimate_ehb, EnsembleConfig};
use crate::error::{invalid, Error, Result};
use crate::hashing::{derive_seed, HashConfig};
use crate::online::OnlineState;
use crate::plot::{LinePlot, Series};
use crate::sample::{SampleSet, SupportBox};
use crate::synthetic::{oracle_divergence, sample_truncated_gaussian, OracleMethod, TruncatedGaussianSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EstimatorKind {
    HashBase,
    Ehb,
    Online,
    KnownSupportRenyi,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [Self::HashBase, Self::Ehb, Self::Online, Self::KnownSupportRenyi];

    pub fn name(self) -> &'static str {
        match self {
            Self::HashBase => "HashBase",
            Self::Ehb => "EHB",
            Self::Online => "Online",
            Self::KnownSupportRenyi => "KnownSupportRenyi",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown estimator '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub estimators: Vec<EstimatorKind>,
    pub divergence: DivergenceSpec,
    /// `(f1, f2)`: X is drawn from the first, Y from the second.
    pub data: (TruncatedGaussianSpec, TruncatedGaussianSpec),
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    pub gamma: f64,
    pub c_h: f64,
    pub ensemble: EnsembleConfig,
    pub oracle: OracleMethod,
    /// Map both samples onto `[0, 1]^d` through the data support box before
    /// estimating, so the default bandwidth sees unit-scale data.
    pub unit_box: bool,
    /// Run cells on the rayon pool. Turn off for cleaner timings.
    pub parallel: bool,
}

impl ExperimentPlan {
    pub const DEFAULT_TRIALS: usize = 50;

    /// Plan with the library defaults for everything but the data and grid.
    pub fn new(
        estimators: Vec<EstimatorKind>,
        divergence: DivergenceSpec,
        data: (TruncatedGaussianSpec, TruncatedGaussianSpec),
        n_grid: Vec<usize>,
    ) -> Result<Self> {
        let dim = data.0.dim();
        let plan = Self {
            estimators,
            divergence,
            n_grid,
            trials: Self::DEFAULT_TRIALS,
            master_seed: 0,
            gamma: 1.0,
            c_h: HashConfig::DEFAULT_C_H,
            ensemble: EnsembleConfig::default_for(dim)?,
            oracle: OracleMethod::auto(dim, derive_seed(0, u64::MAX)),
            unit_box: true,
            parallel: true,
            data,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.estimators.is_empty() {
            return invalid("plan lists no estimators");
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("N grid must be non-empty, positive and strictly increasing");
        }
        if self.trials < 2 {
            return invalid("need at least two trials");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return invalid(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.c_h > 0.0 && self.c_h.is_finite()) {
            return invalid(format!("c_H must be positive, got {}", self.c_h));
        }
        self.divergence.validate()?;
        self.data.0.validate()?;
        self.data.1.validate()?;
        let dim = self.data.0.dim();
        if self.data.1.dim() != dim || self.ensemble.dim != dim {
            return invalid("data specs and ensemble must share one dimension");
        }
        if self.estimators.contains(&EstimatorKind::KnownSupportRenyi)
            && !matches!(self.divergence.kind, DivergenceKind::Renyi(_))
        {
            return invalid("KnownSupportRenyi needs a Rényi divergence");
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.data.0.dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub estimator: EstimatorKind,
    pub n: usize,
    pub trial: usize,
    pub estimate: f64,
    pub true_value: f64,
    pub squared_error: f64,
    pub runtime_ns: u64,
}

/// Seeds for one cell: X data, Y data, hashing.
fn cell_seeds(master: u64, n: usize, trial: usize) -> [u64; 3] {
    let cell = derive_seed(derive_seed(master, n as u64), trial as u64);
    [derive_seed(cell, 0), derive_seed(cell, 1), derive_seed(cell, 2)]
}

fn run_one(plan: &ExperimentPlan, kind: EstimatorKind, x: &SampleSet, y: &SampleSet, seed: u64) -> Result<f64> {
    let n = x.len();
    let dim = plan.dim();
    match kind {
        EstimatorKind::HashBase => {
            let cfg = HashConfig::for_sample_size(n, default_epsilon(n, dim, plan.gamma), plan.c_h, seed)?;
            Ok(estimate(x, y, &cfg, &plan.divergence)?.value)
        }
        EstimatorKind::Ehb => Ok(estimate_ehb(x, y, &plan.divergence, &plan.ensemble, seed)?.value),
        EstimatorKind::Online => {
            let mut state = OnlineState::new(plan.divergence, dim, plan.gamma, seed)?.with_c_h(plan.c_h)?;
            for (a, b) in x.iter().zip(y.iter()) {
                state.update(a, b)?;
            }
            Ok(state.estimate().value)
        }
        EstimatorKind::KnownSupportRenyi => {
            let DivergenceKind::Renyi(alpha) = plan.divergence.kind else {
                return invalid("KnownSupportRenyi needs a Rényi divergence");
            };
            let unit = SupportBox::cube(dim, 0.0, 1.0)?;
            let support = if plan.unit_box { &unit } else { &plan.data.0.support };
            let width = support.hi.iter().zip(&support.lo).map(|(h, l)| h - l).fold(0.0, f64::max);
            let cells = (width / default_epsilon(n, dim, plan.gamma)).ceil() as usize;
            renyi_known_support(x, y, support, cells.max(1), alpha)
        }
    }
}

/// Ground truth for the plan's divergence and data.
pub fn true_value(plan: &ExperimentPlan) -> Result<f64> {
    if plan.data.0 == plan.data.1.with_seed(plan.data.0.seed) {
        return Ok(0.0);
    }
    oracle_divergence(&plan.data.0, &plan.data.1, &plan.divergence, plan.oracle).map(|r| r.value)
}

fn run_cell(plan: &ExperimentPlan, truth: f64, n: usize, trial: usize) -> Result<Vec<BenchRecord>> {
    let [sx, sy, sh] = cell_seeds(plan.master_seed, n, trial);
    let x = sample_truncated_gaussian(&plan.data.0.with_seed(sx), n)?;
    let y = sample_truncated_gaussian(&plan.data.1.with_seed(sy), n)?;
    let (x, y) = if plan.unit_box {
        let support = &plan.data.0.support;
        (x.to_unit_box(support)?, y.to_unit_box(support)?)
    } else {
        (x, y)
    };
    plan.estimators
        .iter()
        .map(|&kind| {
            let start = Instant::now();
            let value = run_one(plan, kind, &x, &y, sh)?;
            let runtime_ns = start.elapsed().as_nanos() as u64;
            Ok(BenchRecord {
                estimator: kind,
                n,
                trial,
                estimate: value,
                true_value: truth,
                squared_error: (value - truth).powi(2),
                runtime_ns,
            })
        })
        .collect()
}

/// Runs every `(estimator, N, trial)` cell. Records come back sorted by
/// estimator, then N, then trial.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<BenchRecord>> {
    plan.validate()?;
    let truth = true_value(plan)?;
    let cells: Vec<(usize, usize)> =
        plan.n_grid.iter().flat_map(|&n| (0..plan.trials).map(move |t| (n, t))).collect();
    let nested: Vec<Vec<BenchRecord>> = if plan.parallel {
        cells.par_iter().map(|&(n, t)| run_cell(plan, truth, n, t)).collect::<Result<_>>()?
    } else {
        cells.iter().map(|&(n, t)| run_cell(plan, truth, n, t)).collect::<Result<_>>()?
    };
    let mut records: Vec<BenchRecord> = nested.into_iter().flatten().collect();
    records.sort_by_key(|r| (r.estimator, r.n, r.trial));
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub estimator: EstimatorKind,
    pub n: usize,
    pub trials: usize,
    pub mean_estimate: f64,
    pub mse: f64,
    pub bias: f64,
    /// Population variance of the estimates, so `mse = bias^2 + variance`.
    pub variance: f64,
    pub q025: f64,
    pub q975: f64,
    pub mean_runtime_ns: f64,
    pub median_runtime_ns: f64,
}

/// Per-`(estimator, N)` statistics, in record order.
pub fn summarize(records: &[BenchRecord]) -> Result<Vec<SummaryRow>> {
    let mut sorted: Vec<&BenchRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.estimator, r.n, r.trial));
    let mut rows = Vec::new();
    for group in sorted.chunk_by(|a, b| a.estimator == b.estimator && a.n == b.n) {
        if group.len() < 2 {
            return invalid(format!("cell ({}, {}) has fewer than two trials", group[0].estimator, group[0].n));
        }
        let k = group.len() as f64;
        let estimates: Vec<f64> = group.iter().map(|r| r.estimate).collect();
        let mean = estimates.iter().sum::<f64>() / k;
        let truth = group[0].true_value;
        let variance = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / k;
        let mut est = Data::new(estimates);
        let mut times = Data::new(group.iter().map(|r| r.runtime_ns as f64).collect::<Vec<_>>());
        rows.push(SummaryRow {
            estimator: group[0].estimator,
            n: group[0].n,
            trials: group.len(),
            mean_estimate: mean,
            mse: group.iter().map(|r| r.squared_error).sum::<f64>() / k,
            bias: mean - truth,
            variance,
            q025: est.quantile(0.025),
            q975: est.quantile(0.975),
            mean_runtime_ns: group.iter().map(|r| r.runtime_ns as f64).sum::<f64>() / k,
            median_runtime_ns: times.median(),
        });
    }
    Ok(rows)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return invalid("need at least two paired points");
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return invalid("log-log fit needs positive values");
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

pub const RECORD_HEADER: [&str; 7] = ["estimator", "N", "trial", "estimate", "true_value", "squared_error", "runtime_ns"];
pub const SUMMARY_HEADER: [&str; 7] = ["estimator", "N", "mean_estimate", "mse", "q025", "q975", "mean_runtime_ns"];

pub fn write_records_csv<W: Write>(records: &[BenchRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record([
            r.estimator.name().to_string(),
            r.n.to_string(),
            r.trial.to_string(),
            format!("{:?}", r.estimate),
            format!("{:?}", r.true_value),
            format!("{:?}", r.squared_error),
            r.runtime_ns.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.estimator.name().to_string(),
            r.n.to_string(),
            format!("{:?}", r.mean_estimate),
            format!("{:?}", r.mse),
            format!("{:?}", r.q025),
            format!("{:?}", r.q975),
            format!("{:?}", r.mean_runtime_ns),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `records.csv`, `summary.csv` and three SVG plots into `dir`.
pub fn write_outputs(dir: &Path, records: &[BenchRecord], rows: &[SummaryRow]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_records_csv(records, std::fs::File::create(dir.join("records.csv"))?)?;
    write_summary_csv(rows, std::fs::File::create(dir.join("summary.csv"))?)?;

    let mut kinds: Vec<EstimatorKind> = rows.iter().map(|r| r.estimator).collect();
    kinds.dedup();
    let series = |f: &dyn Fn(&SummaryRow) -> f64, suffix: &str| -> Vec<Series> {
        kinds
            .iter()
            .map(|k| Series {
                label: format!("{k}{suffix}"),
                points: rows.iter().filter(|r| r.estimator == *k).map(|r| (r.n as f64, f(r))).collect(),
                dashed: !suffix.is_empty(),
            })
            .collect()
    };
    let mse = LinePlot { title: "MSE vs N".into(), x_label: "N".into(), y_label: "MSE".into(), log_x: true, log_y: true };
    mse.write_svg(&dir.join("mse.svg"), &series(&|r| r.mse, ""))?;
    let rt = LinePlot {
        title: "Runtime vs N".into(),
        x_label: "N".into(),
        y_label: "mean runtime (ns)".into(),
        log_x: true,
        log_y: true,
    };
    rt.write_svg(&dir.join("runtime.svg"), &series(&|r| r.mean_runtime_ns, ""))?;
    let band = LinePlot {
        title: "Mean estimate with 95% band".into(),
        x_label: "N".into(),
        y_label: "estimate".into(),
        log_x: true,
        log_y: false,
    };
    let mut lines = series(&|r| r.mean_estimate, "");
    lines.extend(series(&|r| r.q025, " q0.025"));
    lines.extend(series(&|r| r.q975, " q0.975"));
    band.write_svg(&dir.join("band.svg"), &lines)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_plan(same: bool) -> ExperimentPlan {
        let p = TruncatedGaussianSpec::standard(vec![0.0, 0.0], 0).unwrap();
        let q = TruncatedGaussianSpec::standard(vec![0.0, if same { 0.0 } else { 1.0 }], 0).unwrap();
        let mut plan = ExperimentPlan::new(
            vec![EstimatorKind::HashBase, EstimatorKind::Ehb, EstimatorKind::Online],
            DivergenceSpec::kl(),
            (p, q),
            vec![200, 800, 3200],
        )
        .unwrap();
        plan.trials = 12;
        plan.master_seed = 9;
        plan
    }

    fn record(estimate: f64, trial: usize) -> BenchRecord {
        BenchRecord {
            estimator: EstimatorKind::HashBase,
            n: 10,
            trial,
            estimate,
            true_value: 1.0,
            squared_error: (estimate - 1.0).powi(2),
            runtime_ns: 5,
        }
    }

    #[test]
    fn plan_validation() {
        let mut plan = small_plan(true);
        plan.n_grid = vec![100, 100];
        assert!(plan.validate().is_err());
        let mut plan = small_plan(true);
        plan.trials = 1;
        assert!(plan.validate().is_err());
        let mut plan = small_plan(true);
        plan.estimators.push(EstimatorKind::KnownSupportRenyi);
        assert!(plan.validate().is_err());
    }

    #[test]
    fn estimator_names_round_trip() {
        for k in EstimatorKind::ALL {
            assert_eq!(k.name().parse::<EstimatorKind>().unwrap(), k);
        }
        assert!("knn".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn records_are_sorted_complete_and_reproducible() {
        let plan = small_plan(false);
        let a = run_experiment(&plan).unwrap();
        assert_eq!(a.len(), 3 * 3 * 12);
        assert!(a.windows(2).all(|w| (w[0].estimator, w[0].n, w[0].trial) < (w[1].estimator, w[1].n, w[1].trial)));
        let mut serial = plan.clone();
        serial.parallel = false;
        let b = run_experiment(&serial).unwrap();
        let est = |rs: &[BenchRecord]| rs.iter().map(|r| r.estimate.to_bits()).collect::<Vec<_>>();
        assert_eq!(est(&a), est(&b));
        for r in &a {
            assert_eq!(r.squared_error, (r.estimate - r.true_value).powi(2));
        }
    }

    #[test]
    fn identical_data_has_zero_truth_and_shrinking_error() {
        let records = run_experiment(&small_plan(true)).unwrap();
        assert!(records.iter().all(|r| r.true_value == 0.0));
        let rows = summarize(&records).unwrap();
        for k in [EstimatorKind::HashBase, EstimatorKind::Online] {
            let mse: Vec<f64> = rows.iter().filter(|r| r.estimator == k).map(|r| r.mse).collect();
            assert!(mse.windows(2).all(|w| w[1] < w[0]), "{k}: {mse:?}");
        }
    }

    #[test]
    fn summary_statistics() {
        let constant: Vec<BenchRecord> = (0..5).map(|t| record(0.5, t)).collect();
        let row = &summarize(&constant).unwrap()[0];
        assert_eq!((row.q025, row.q975, row.mean_estimate), (0.5, 0.5, 0.5));
        assert_eq!(row.variance, 0.0);

        let mixed: Vec<BenchRecord> = [0.2, 1.7, 0.9, 1.1, 3.0].iter().enumerate().map(|(t, &e)| record(e, t)).collect();
        let row = &summarize(&mixed).unwrap()[0];
        let mean_sq = mixed.iter().map(|r| r.squared_error).sum::<f64>() / 5.0;
        assert_eq!(row.mse, mean_sq);
        assert!((row.mse - (row.bias.powi(2) + row.variance)).abs() <= 1e-9 * row.mse);
        assert!(row.q025 <= row.mean_estimate && row.mean_estimate <= row.q975);
        assert!(summarize(&mixed[..1]).is_err());
    }

    #[test]
    fn slope_of_a_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.75)).collect();
        assert!((loglog_slope(&x, &y).unwrap() + 0.75).abs() < 1e-12);
        assert!(loglog_slope(&x, &[1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn csv_columns_follow_the_contract() {
        let records: Vec<BenchRecord> = (0..3).map(|t| record(0.25 * t as f64, t)).collect();
        let mut buf = Vec::new();
        write_records_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "estimator,N,trial,estimate,true_value,squared_error,runtime_ns");
        assert_eq!(text.lines().nth(2).unwrap(), "HashBase,10,1,0.25,1.0,0.5625,5");

        let mut buf = Vec::new();
        write_summary_csv(&summarize(&records).unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "estimator,N,mean_estimate,mse,q025,q975,mean_runtime_ns");
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn outputs_land_in_the_directory() {
        let dir = tempfile::tempdir().unwrap();
        let records: Vec<BenchRecord> = (0..3).map(|t| record(0.25 * t as f64, t)).collect();
        write_outputs(dir.path(), &records, &summarize(&records).unwrap()).unwrap();
        for f in ["records.csv", "summary.csv", "mse.svg", "runtime.svg", "band.svg"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }
}
