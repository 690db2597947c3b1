//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line with the
//! measured quantities; the process exits non-zero if any criterion fails.
//! Tolerances are pinned in the constants next to each check.

use std::io::Write;
use std::time::{Duration, Instant};

use hashdiv::bench::{loglog_slope, run_experiment, summarize, EstimatorKind, ExperimentPlan, SummaryRow};
use hashdiv::ensemble::constraint_matrix;
use hashdiv::hashing::build_cell_counts;
use hashdiv::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = std::result::Result<String, String>;

fn shifted_pair() -> (TruncatedGaussianSpec, TruncatedGaussianSpec) {
    (
        TruncatedGaussianSpec::standard(vec![0.0, 0.0], 0).unwrap(),
        TruncatedGaussianSpec::standard(vec![0.0, 1.0], 0).unwrap(),
    )
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> SampleSet {
    let flat = (0..n * d).map(|_| rng.random::<f64>() * scale - scale / 2.0).collect();
    SampleSet::from_flat(d, flat).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rows_for(rows: &[SummaryRow], kind: EstimatorKind) -> Vec<&SummaryRow> {
    rows.iter().filter(|r| r.estimator == kind).collect()
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// 1. X = Y gives exactly zero for KL, Hellinger and total variation.
fn exact_zero_identity() -> Outcome {
    const DATASETS: usize = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let specs = [
        DivergenceSpec::kl(),
        DivergenceSpec::new(DivergenceKind::Hellinger).unwrap(),
        DivergenceSpec::new(DivergenceKind::TotalVariation).unwrap(),
    ];
    let mut nonzero = 0;
    for _ in 0..DATASETS {
        let n = rng.random_range(1..2000);
        let d = rng.random_range(1..=5);
        let scale = rng.random_range(0.1..20.0);
        let x = random_set(&mut rng, n, d, scale);
        let cfg = HashConfig::for_sample_size(n, rng.random_range(0.01..2.0), rng.random_range(0.1..4.0), rng.random())
            .unwrap()
            .with_offset(rng.random_range(-1.0..1.0));
        for spec in &specs {
            if estimate(&x, &x, &cfg, spec).unwrap().value != 0.0 {
                nonzero += 1;
            }
        }
    }
    check(nonzero == 0, format!("{DATASETS} datasets x 3 divergences, {nonzero} non-zero"))
}

/// 2 and 3. Online vs batch at powers of two, and cumulative rehash work.
fn online_run() -> (Outcome, Outcome) {
    const K_MAX: u32 = 13;
    let (p, q) = shifted_pair();
    let x = sample_truncated_gaussian(&p.with_seed(21), 1 << K_MAX).unwrap().to_unit_box(&p.support).unwrap();
    let y = sample_truncated_gaussian(&q.with_seed(22), 1 << K_MAX).unwrap().to_unit_box(&p.support).unwrap();
    let spec = DivergenceSpec::alpha(0.5).unwrap();
    let seed = 0xfeed;
    let mut state = OnlineState::new(spec, 2, 1.0, seed).unwrap();
    let (mut mismatches, mut bad_work) = (Vec::new(), Vec::new());
    for (i, (a, b)) in x.iter().zip(y.iter()).enumerate() {
        state.update(a, b).unwrap();
        let n = i + 1;
        if !n.is_power_of_two() {
            continue;
        }
        let k = n.trailing_zeros();
        let want_work = (1u64 << (k + 1)) - 1;
        if state.cumulative_rehash_work() != want_work {
            bad_work.push((k, state.cumulative_rehash_work()));
        }
        if k >= 1 {
            let cfg = HashConfig::for_sample_size(n, default_epsilon(n, 2, 1.0), 1.0, seed).unwrap();
            let xs = SampleSet::from_flat(2, x.as_flat()[..2 * n].to_vec()).unwrap();
            let ys = SampleSet::from_flat(2, y.as_flat()[..2 * n].to_vec()).unwrap();
            let batch = estimate(&xs, &ys, &cfg, &spec).unwrap().value;
            if batch.to_bits() != state.estimate().value.to_bits() {
                mismatches.push(k);
            }
        }
    }
    let c2 = check(
        mismatches.is_empty(),
        format!("k = 1..{K_MAX}, bit-exact mismatches at k = {mismatches:?}; final estimate {:.6}", state.estimate().value),
    );
    let c3 = check(
        bad_work.is_empty(),
        format!(
            "k = 0..{K_MAX}, work == 2^(k+1) - 1 violated at {bad_work:?}; final work {}",
            state.cumulative_rehash_work()
        ),
    );
    (c2, c3)
}

/// Orthonormal null-space basis of `a` via SVD of `a` padded to square.
fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    let mut padded = DMatrix::zeros(n, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let max = svd.singular_values.max();
    let cols: Vec<_> =
        (0..n).filter(|&i| svd.singular_values[i] <= 1e-12 * max).map(|i| v_t.row(i).transpose()).collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// 4. Ensemble weights: worked examples, feasibility and minimal norm.
fn ensemble_weight_checks() -> Outcome {
    const RESIDUAL_TOL: f64 = 1e-10;
    const EXAMPLE_TOL: f64 = 1e-10;
    const INSTANCES: usize = 200;
    const PERTURBATIONS: usize = 1000;

    let w2 = ensemble_weights(&[1.0, 2.0], 1).unwrap();
    let exact_two = w2 == [2.0, -1.0];
    let w3 = ensemble_weights(&[1.0, 2.0, 3.0], 1).unwrap();
    let three_err =
        w3.iter().zip([4.0 / 3.0, 1.0 / 3.0, -2.0 / 3.0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_residual, mut norm_violations) = (0.0f64, 0usize);
    for _ in 0..INSTANCES {
        let d = rng.random_range(1..=4);
        let size = d + rng.random_range(1..=5);
        let mut t: Vec<f64> = Vec::new();
        while t.len() < size {
            // Log-uniform on [0.1, 10], neighbours at least 20% apart.
            let v: f64 = rng.random_range(0.1f64.ln()..10f64.ln()).exp();
            if t.iter().all(|u| (u / v).ln().abs() > 0.2) {
                t.push(v);
            }
        }
        let w = ensemble_weights(&t, d).unwrap();
        let a = constraint_matrix(&t, d);
        let wv = DMatrix::from_column_slice(w.len(), 1, &w);
        let mut e1 = DMatrix::zeros(d + 1, 1);
        e1[0] = 1.0;
        worst_residual = worst_residual.max((&a * &wv - e1).amax());
        let basis = null_space(&a);
        if basis.ncols() == 0 {
            continue;
        }
        let base = wv.norm();
        for _ in 0..PERTURBATIONS {
            let scale = 10f64.powf(rng.random_range(-6.0..1.0)) * base;
            let r = DMatrix::from_fn(basis.ncols(), 1, |_, _| rng.sample::<f64, _>(StandardNormal));
            let z = &basis * r * scale;
            if (&wv + z).norm() < base * (1.0 - 1e-12) {
                norm_violations += 1;
            }
        }
    }
    check(
        exact_two && three_err <= EXAMPLE_TOL && worst_residual <= RESIDUAL_TOL && norm_violations == 0,
        format!(
            "T={{1,2}} -> {w2:?} (exact: {exact_two}); T={{1,2,3}} max err {three_err:.1e}; \
             {INSTANCES} random (T, d<=4): max residual {worst_residual:.1e}, \
             {norm_violations} of {PERTURBATIONS} null-space perturbations per instance shorter"
        ),
    )
}

/// 5. Quadrature and Monte Carlo agree within 3 standard errors.
fn oracle_consistency() -> Outcome {
    const SIGMAS: f64 = 3.0;
    let (p, q) = shifted_pair();
    let mut details = Vec::new();
    let mut ok = true;
    let specs = [("KL", DivergenceSpec::kl()), ("alpha 0.5", DivergenceSpec::alpha(0.5).unwrap()), (
        "alpha 2",
        DivergenceSpec::alpha(2.0).unwrap(),
    )];
    for (i, (name, spec)) in specs.iter().enumerate() {
        let grid = oracle_divergence(&p, &q, spec, OracleMethod::GridQuadrature).unwrap();
        let mc = oracle_divergence(&p, &q, spec, OracleMethod::MonteCarlo { samples: 1_000_000, seed: 50 + i as u64 })
            .unwrap();
        let z = (grid.value - mc.value).abs() / mc.standard_error;
        ok &= z <= SIGMAS;
        details.push(format!("{name}: grid {:.7} mc {:.7} ({z:.2} se)", grid.value, mc.value));
    }
    check(ok, details.join("; "))
}

fn shifted_plan(estimators: Vec<EstimatorKind>, grid: Vec<usize>, seed: u64) -> ExperimentPlan {
    let mut plan = ExperimentPlan::new(estimators, DivergenceSpec::alpha(0.5).unwrap(), shifted_pair(), grid).unwrap();
    plan.master_seed = seed;
    plan
}

/// 6. shifted-pair MSE trend for the ensemble and base estimators.
fn mse_trend() -> Outcome {
    const SLOPE_BAND: (f64, f64) = (-1.4, -0.5);
    let grid = vec![500, 1000, 2000, 4000, 8000];
    let plan = shifted_plan(vec![EstimatorKind::HashBase, EstimatorKind::Ehb], grid.clone(), 6);
    let rows = summarize(&run_experiment(&plan).unwrap()).unwrap();
    let ns: Vec<f64> = grid.iter().map(|&n| n as f64).collect();
    let ehb: Vec<f64> = rows_for(&rows, EstimatorKind::Ehb).iter().map(|r| r.mse).collect();
    let base: Vec<f64> = rows_for(&rows, EstimatorKind::HashBase).iter().map(|r| r.mse).collect();
    let (se, sb) = (loglog_slope(&ns, &ehb).unwrap(), loglog_slope(&ns, &base).unwrap());
    check(
        strictly_decreasing(&ehb)
            && (SLOPE_BAND.0..=SLOPE_BAND.1).contains(&se)
            && strictly_decreasing(&base)
            && sb >= se,
        format!("EHB mse {} slope {se:.3}; base mse {} slope {sb:.3}", sci(&ehb), sci(&base)),
    )
}

/// 7. Base estimator runtime doubles at most 2.5x per doubling of N.
fn runtime_linearity() -> Outcome {
    const MAX_RATIO: f64 = 2.5;
    const REPEATS: usize = 31;
    let (p, q) = shifted_pair();
    let spec = DivergenceSpec::alpha(0.5).unwrap();
    let inputs: Vec<(SampleSet, SampleSet, HashConfig)> = [10_000usize, 20_000, 40_000, 80_000]
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            let x = sample_truncated_gaussian(&p.with_seed(70 + i as u64), n).unwrap().to_unit_box(&p.support).unwrap();
            let y = sample_truncated_gaussian(&q.with_seed(80 + i as u64), n).unwrap().to_unit_box(&p.support).unwrap();
            (x, y, HashConfig::for_sample_size(n, default_epsilon(n, 2, 1.0), 1.0, 7).unwrap())
        })
        .collect();
    // Round-robin over the sizes so drift in machine speed hits all of them alike.
    let mut times: Vec<Vec<Duration>> = vec![Vec::new(); inputs.len()];
    for _ in 0..REPEATS {
        for (slot, (x, y, cfg)) in times.iter_mut().zip(&inputs) {
            let start = Instant::now();
            std::hint::black_box(estimate(x, y, cfg, &spec).unwrap());
            slot.push(start.elapsed());
        }
    }
    let medians: Vec<f64> = times
        .iter_mut()
        .map(|t| {
            t.sort();
            t[REPEATS / 2].as_secs_f64()
        })
        .collect();
    let ratios: Vec<f64> = medians.windows(2).map(|w| w[1] / w[0]).collect();
    check(
        ratios.iter().all(|&r| r <= MAX_RATIO),
        format!(
            "median ms {:?}, ratios {:?}",
            medians.iter().map(|m| (m * 1e4).round() / 10.0).collect::<Vec<_>>(),
            ratios.iter().map(|r| (r * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
    )
}

/// 8. Base estimator variance ratio between N and 4N.
fn variance_rate() -> Outcome {
    const BAND: (f64, f64) = (2.0, 8.0);
    let plan = shifted_plan(vec![EstimatorKind::HashBase], vec![1000, 4000], 8);
    let records = run_experiment(&plan).unwrap();
    let var = |n: usize| {
        let v: Vec<f64> = records.iter().filter(|r| r.n == n).map(|r| r.estimate).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let ratio = var(1000) / var(4000);
    check(
        (BAND.0..=BAND.1).contains(&ratio),
        format!("var(1000) {:.3e}, var(4000) {:.3e}, ratio {ratio:.2}", var(1000), var(4000)),
    )
}

/// 9. Hashing conservation and determinism on random instances.
fn hashing_properties() -> Outcome {
    const INSTANCES: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = 0;
    for _ in 0..INSTANCES {
        let d = rng.random_range(1..=4);
        let (n, m) = (rng.random_range(1..300), rng.random_range(1..300));
        let scale = rng.random_range(0.5..50.0);
        let x = random_set(&mut rng, n, d, scale);
        let y = random_set(&mut rng, m, d, scale);
        let cfg = HashConfig::for_sample_size(n, rng.random_range(0.05..3.0), rng.random_range(0.1..3.0), rng.random())
            .unwrap()
            .with_offset(rng.random_range(-2.0..2.0));
        let counts = build_counts(&x, &y, &cfg).unwrap();
        let cells = build_cell_counts(&x, &y, &cfg).unwrap();
        let mut ok = counts.total_n() == n as u64
            && counts.total_m() == m as u64
            && counts.bins().map(|b| b.n).sum::<u64>() == n as u64
            && counts.bins().map(|b| b.m).sum::<u64>() == m as u64
            && counts.occupied() <= (cfg.bucket_count as usize).min(n + m)
            && counts.occupied() <= cells.occupied()
            && counts.iter().all(|(k, _)| (1..=cfg.bucket_count).contains(k))
            && counts == build_counts(&x, &y, &cfg).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.reverse();
        let shuffled = SampleSet::from_points(&order.iter().map(|&i| x.point(i).to_vec()).collect::<Vec<_>>()).unwrap();
        ok &= counts == build_counts(&shuffled, &y, &cfg).unwrap();
        ok &= x.iter().all(|pt| cfg.bucket_of(pt).unwrap() == hash_h2(&hash_h1(pt, &cfg).unwrap(), &cfg).unwrap());
        if !ok {
            failures += 1;
        }
    }
    check(failures == 0, format!("{INSTANCES} random instances, {failures} failures"))
}

/// 10. Equal-mean 4-d setting: ensemble MSE for Rényi order 2 falls with N.
fn equal_means_trend() -> Outcome {
    let p = TruncatedGaussianSpec::standard(vec![0.0; 4], 0).unwrap();
    let grid = vec![1000, 4000, 16000];
    let mut plan = ExperimentPlan::new(
        vec![EstimatorKind::HashBase, EstimatorKind::Ehb],
        DivergenceSpec::renyi(2.0).unwrap(),
        (p.clone(), p),
        grid,
    )
    .unwrap();
    plan.master_seed = 10;
    let rows = summarize(&run_experiment(&plan).unwrap()).unwrap();
    let ehb: Vec<f64> = rows_for(&rows, EstimatorKind::Ehb).iter().map(|r| r.mse).collect();
    let base: Vec<f64> = rows_for(&rows, EstimatorKind::HashBase).iter().map(|r| r.mse).collect();
    let truth = rows[0].mean_estimate - rows[0].bias;
    check(
        truth == 0.0 && strictly_decreasing(&ehb),
        format!("true value {truth}; EHB mse {}; base mse {} (reference)", sci(&ehb), sci(&base)),
    )
}

fn main() {
    let mut out = std::io::stdout().lock();
    let mut failed = 0;
    let mut report = |id: usize, name: &str, started: Instant, outcome: Outcome| {
        let secs = started.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        let _ = writeln!(out, "[{tag}] criterion {id:>2}: {name} ({secs:.1}s) - {detail}");
    };

    let t = Instant::now();
    report(1, "exact zero for X = Y", t, exact_zero_identity());
    let t = Instant::now();
    let (c2, c3) = online_run();
    report(2, "online equals batch at powers of two", t, c2);
    report(3, "amortized rehash work 2N - 1", t, c3);
    let t = Instant::now();
    report(4, "ensemble weights", t, ensemble_weight_checks());
    let t = Instant::now();
    report(5, "oracle quadrature vs Monte Carlo", t, oracle_consistency());
    let t = Instant::now();
    report(6, "shifted-pair MSE trend", t, mse_trend());
    let t = Instant::now();
    report(7, "runtime linearity", t, runtime_linearity());
    let t = Instant::now();
    report(8, "variance rate N vs 4N", t, variance_rate());
    let t = Instant::now();
    report(9, "hashing conservation and determinism", t, hashing_properties());
    let t = Instant::now();
    report(10, "equal-mean d = 4 Renyi MSE trend", t, equal_means_trend());

    if failed > 0 {
        let _ = writeln!(std::io::stdout(), "{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    let _ = writeln!(std::io::stdout(), "all 10 acceptance criteria passed");
}
