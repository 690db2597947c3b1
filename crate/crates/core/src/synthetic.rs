//! Truncated-Gaussian test data and a ground-truth divergence oracle.
//!
//! Densities are products of independent 1-d Gaussians restricted to a box,
//! each renormalized by its own CDF difference. The oracle integrates
//! `f2 * g(f1 / f2)` over the box either on a tensor Simpson grid (refined
//! until two successive grids agree to 1e-6) or by Monte Carlo under `f2`.
//! The oracle uses the unclipped `g`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::divergence::{DivergenceKind, DivergenceSpec, PostTransform};
use crate::error::{invalid, Error, Result};
use crate::hashing::derive_seed;
use crate::sample::{SampleSet, SupportBox};

const MIN_ACCEPTANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedGaussianSpec {
    pub mean: Vec<f64>,
    /// Diagonal of the covariance matrix.
    pub variance: Vec<f64>,
    pub support: SupportBox,
    pub seed: u64,
}

impl TruncatedGaussianSpec {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>, support: SupportBox, seed: u64) -> Result<Self> {
        let spec = Self { mean, variance, support, seed };
        spec.validate()?;
        Ok(spec)
    }

    /// Identity covariance on `[-3, 3]^d`.
    pub fn standard(mean: Vec<f64>, seed: u64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, vec![1.0; d], SupportBox::cube(d, -3.0, 3.0)?, seed)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.mean.len();
        if d == 0 || self.variance.len() != d || self.support.dim() != d {
            return invalid("mean, variance and support box must share a nonzero dimension");
        }
        if self.variance.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return invalid("variances must be positive and finite");
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return invalid("means must be finite");
        }
        Ok(())
    }

    fn axes(&self) -> impl Iterator<Item = Axis> + '_ {
        (0..self.dim()).map(move |i| Axis::new(self.mean[i], self.variance[i].sqrt(), self.support.lo[i], self.support.hi[i]))
    }

    /// Probability that an untruncated draw lands in the box.
    pub fn acceptance_probability(&self) -> f64 {
        self.axes().map(|a| a.mass).product()
    }

    /// Log density of the truncated law; `-inf` outside the box.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        if !self.support.contains(x) {
            return f64::NEG_INFINITY;
        }
        self.axes().zip(x).map(|(a, &v)| a.log_density(v)).sum()
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }
}

/// One truncated 1-d factor.
#[derive(Debug, Clone, Copy)]
struct Axis {
    mean: f64,
    sd: f64,
    mass: f64,
    log_norm: f64,
}

impl Axis {
    fn new(mean: f64, sd: f64, lo: f64, hi: f64) -> Self {
        let std = Normal::standard();
        let mass = std.cdf((hi - mean) / sd) - std.cdf((lo - mean) / sd);
        let log_norm = -(mass * sd * (2.0 * std::f64::consts::PI).sqrt()).ln();
        Self { mean, sd, mass, log_norm }
    }

    #[inline]
    fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        self.log_norm - 0.5 * z * z
    }
}

/// `n` i.i.d. draws by rejection from the untruncated Gaussian.
pub fn sample_truncated_gaussian(spec: &TruncatedGaussianSpec, n: usize) -> Result<SampleSet> {
    spec.validate()?;
    if n == 0 {
        return invalid("need at least one sample");
    }
    let acceptance = spec.acceptance_probability();
    if !(acceptance >= MIN_ACCEPTANCE) {
        return Err(Error::PathologicalTruncation { acceptance });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(draw(spec, n, &mut rng))
}

fn draw(spec: &TruncatedGaussianSpec, n: usize, rng: &mut ChaCha8Rng) -> SampleSet {
    let d = spec.dim();
    let sd: Vec<f64> = spec.variance.iter().map(|v| v.sqrt()).collect();
    let mut flat = Vec::with_capacity(n * d);
    let mut point = vec![0.0; d];
    while flat.len() < n * d {
        for (i, p) in point.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            *p = spec.mean[i] + sd[i] * z;
        }
        if spec.support.contains(&point) {
            flat.extend_from_slice(&point);
        }
    }
    SampleSet::from_flat(d, flat)
        .and_then(|s| s.with_support(spec.support.clone()))
        .expect("buffer length is a multiple of d")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    GridQuadrature,
    MonteCarlo { samples: usize, seed: u64 },
}

impl OracleMethod {
    pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;

    /// Grid for `d <= 2`, otherwise Monte Carlo with 10^6 samples.
    pub fn auto(dim: usize, seed: u64) -> Self {
        if dim <= 2 {
            Self::GridQuadrature
        } else {
            Self::MonteCarlo { samples: Self::DEFAULT_MC_SAMPLES, seed }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub value: f64,
    /// Monte-Carlo standard error, or the difference between the last two
    /// grid refinements.
    pub standard_error: f64,
    pub method: OracleMethod,
    pub evaluations: u64,
}

const GRID_START_INTERVALS: usize = 400;
const GRID_TOLERANCE: f64 = 1e-6;
const GRID_MAX_EVALUATIONS: u64 = 40_000_000;

/// Ground-truth divergence between two truncated Gaussians on a shared box.
pub fn oracle_divergence(
    p: &TruncatedGaussianSpec,
    q: &TruncatedGaussianSpec,
    divergence: &DivergenceSpec,
    method: OracleMethod,
) -> Result<OracleResult> {
    p.validate()?;
    q.validate()?;
    divergence.validate()?;
    if p.support != q.support {
        return invalid("oracle densities must share the same support box");
    }
    let kind = divergence.kind;
    let integrand = |log_f1: f64, log_f2: f64| -> f64 {
        let ratio = (log_f1 - log_f2).exp();
        let g = match kind {
            DivergenceKind::Kl => ratio * (log_f1 - log_f2),
            other => crate::divergence::g_function(other, ratio).unwrap_or(f64::NAN),
        };
        log_f2.exp() * g
    };
    let (raw, raw_se, evaluations) = match method {
        OracleMethod::GridQuadrature => grid_integral(p, q, &integrand)?,
        OracleMethod::MonteCarlo { samples, seed } => monte_carlo(p, q, &integrand, samples, seed)?,
    };
    if !raw.is_finite() || !raw_se.is_finite() {
        return Err(Error::Numeric(format!("oracle integral diverged ({raw} +/- {raw_se})")));
    }
    let (value, standard_error) = match divergence.post_transform {
        PostTransform::Identity => (raw, raw_se),
        PostTransform::RenyiLog(a) => {
            if !(raw > 0.0) {
                return Err(Error::Numeric(format!("Rényi integral {raw} is not positive")));
            }
            (raw.ln() / (a - 1.0), raw_se / (raw * (a - 1.0).abs()))
        }
    };
    Ok(OracleResult { value, standard_error, method, evaluations })
}

/// Simpson nodes and weights on `[lo, hi]` with `intervals` (even) panels.
fn simpson(lo: f64, hi: f64, intervals: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (hi - lo) / intervals as f64;
    let nodes = (0..=intervals).map(|i| lo + h * i as f64).collect();
    let weights = (0..=intervals)
        .map(|i| {
            let c = if i == 0 || i == intervals {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect();
    (nodes, weights)
}

fn tensor_simpson(
    p: &TruncatedGaussianSpec,
    q: &TruncatedGaussianSpec,
    integrand: &(impl Fn(f64, f64) -> f64 + Sync),
    intervals: usize,
) -> f64 {
    let d = p.dim();
    let axes_p: Vec<Axis> = p.axes().collect();
    let axes_q: Vec<Axis> = q.axes().collect();
    // Per-axis nodes carry (weight, log f1 factor, log f2 factor).
    let tables: Vec<Vec<(f64, f64, f64)>> = (0..d)
        .map(|i| {
            let (nodes, weights) = simpson(p.support.lo[i], p.support.hi[i], intervals);
            nodes
                .iter()
                .zip(&weights)
                .map(|(&x, &w)| (w, axes_p[i].log_density(x), axes_q[i].log_density(x)))
                .collect()
        })
        .collect();
    let per_axis = intervals + 1;
    let total = per_axis.pow(d as u32);
    // Parallel over the outermost axis; inner axes walked with an odometer.
    let inner_total = total / per_axis;
    (0..per_axis)
        .into_par_iter()
        .map(|outer| {
            let (w0, a0, b0) = tables[0][outer];
            let mut idx = vec![0usize; d - 1];
            let mut acc = 0.0;
            for _ in 0..inner_total {
                let (mut w, mut a, mut b) = (w0, a0, b0);
                for (k, &j) in idx.iter().enumerate() {
                    let (wk, ak, bk) = tables[k + 1][j];
                    w *= wk;
                    a += ak;
                    b += bk;
                }
                acc += w * integrand(a, b);
                for slot in idx.iter_mut().rev() {
                    *slot += 1;
                    if *slot < per_axis {
                        break;
                    }
                    *slot = 0;
                }
            }
            acc
        })
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

fn grid_integral(
    p: &TruncatedGaussianSpec,
    q: &TruncatedGaussianSpec,
    integrand: &(impl Fn(f64, f64) -> f64 + Sync),
) -> Result<(f64, f64, u64)> {
    let d = p.dim() as u32;
    let cost = |n: usize| ((n + 1) as u64).saturating_pow(d);
    let mut n = GRID_START_INTERVALS;
    if cost(n) + cost(2 * n) > GRID_MAX_EVALUATIONS {
        return invalid(format!("grid quadrature is too expensive in d = {d}; use Monte Carlo"));
    }
    let mut evaluations = cost(n);
    let mut coarse = tensor_simpson(p, q, integrand, n);
    loop {
        let fine = tensor_simpson(p, q, integrand, 2 * n);
        evaluations += cost(2 * n);
        let diff = (fine - coarse).abs();
        if diff < GRID_TOLERANCE || !diff.is_finite() || evaluations + cost(4 * n) > GRID_MAX_EVALUATIONS {
            return Ok((fine, diff, evaluations));
        }
        coarse = fine;
        n *= 2;
    }
}

fn monte_carlo(
    p: &TruncatedGaussianSpec,
    q: &TruncatedGaussianSpec,
    integrand: &(impl Fn(f64, f64) -> f64 + Sync),
    samples: usize,
    seed: u64,
) -> Result<(f64, f64, u64)> {
    if samples < 2 {
        return invalid("Monte Carlo needs at least two samples");
    }
    if q.acceptance_probability() < MIN_ACCEPTANCE {
        return Err(Error::PathologicalTruncation { acceptance: q.acceptance_probability() });
    }
    const BATCHES: usize = 16;
    let sizes: Vec<usize> = (0..BATCHES).map(|b| samples / BATCHES + usize::from(b < samples % BATCHES)).collect();
    // Each batch returns (count, mean, sum of squared deviations).
    let parts: Vec<(f64, f64, f64)> = sizes
        .par_iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(b, &n)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, b as u64));
            let pts = draw(q, n, &mut rng);
            let (mut mean, mut m2) = (0.0, 0.0);
            for (i, x) in pts.iter().enumerate() {
                let lq = q.log_density(x);
                // E_q[g(f1/f2)] = integral of f2 g(f1/f2); divide the integrand by f2.
                let v = integrand(p.log_density(x), lq) / lq.exp();
                let delta = v - mean;
                mean += delta / (i + 1) as f64;
                m2 += delta * (v - mean);
            }
            (n as f64, mean, m2)
        })
        .collect();
    // Chan et al. pairwise merge, in batch order.
    let (n, mean, m2) = parts.into_iter().fold((0.0, 0.0, 0.0), |(na, ma, sa), (nb, mb, sb)| {
        let n = na + nb;
        let delta = mb - ma;
        (n, ma + delta * nb / n, sa + sb + delta * delta * na * nb / n)
    });
    let variance = m2 / (n - 1.0);
    Ok((mean, (variance / n).sqrt(), samples as u64))
}
