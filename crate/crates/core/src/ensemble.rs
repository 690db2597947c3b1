//! Weighted ensemble over bandwidths.
//!
//! Base estimates at `epsilon(t) = t * N^(-1/(2d))` for each index `t` in a
//! set `T` are combined with the minimum-norm weights satisfying
//! `sum w(t) = 1` and `sum w(t) t^(i/d) = 0` for `i = 1..=d`. The constraint
//! matrix `A` has rows `t^(i/d)`, `i = 0..=d`; the weights are
//! `w = A^T (A A^T)^(-1) e_1`, evaluated through a thin QR factorization of
//! `A^T` with one step of iterative refinement. The Gram matrix `A A^T` is
//! too ill-conditioned for `d >= 3` to reach the residual target directly.

use nalgebra::{DMatrix, DVector};

use crate::divergence::{estimate, DivergenceSpec, EstimateResult};
use crate::error::{invalid, Result};
use crate::hashing::{derive_seed, HashConfig};
use crate::sample::SampleSet;

/// Index set, dimension and the solved weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub t_values: Vec<f64>,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub c_h: f64,
}

impl EnsembleConfig {
    pub const DEFAULT_T_MIN: f64 = 0.8;
    pub const DEFAULT_T_MAX: f64 = 2.0;

    pub fn new(t_values: Vec<f64>, dim: usize) -> Result<Self> {
        let weights = ensemble_weights(&t_values, dim)?;
        Ok(Self { t_values, dim, weights, c_h: HashConfig::DEFAULT_C_H })
    }

    /// `count` indices evenly spaced on `[t_min, t_max]`.
    pub fn uniform(count: usize, t_min: f64, t_max: f64, dim: usize) -> Result<Self> {
        if count < 2 || !(t_min > 0.0 && t_min < t_max && t_max.is_finite()) {
            return invalid(format!("need count >= 2 and 0 < t_min < t_max, got {count}, [{t_min}, {t_max}]"));
        }
        let step = (t_max - t_min) / (count - 1) as f64;
        Self::new((0..count).map(|i| t_min + step * i as f64).collect(), dim)
    }

    /// `d + 3` indices on `[0.8, 2.0]`.
    pub fn default_for(dim: usize) -> Result<Self> {
        Self::uniform(dim + 3, Self::DEFAULT_T_MIN, Self::DEFAULT_T_MAX, dim)
    }

    pub fn with_c_h(mut self, c_h: f64) -> Self {
        self.c_h = c_h;
        self
    }
}

/// `(d + 1) x |T|` matrix with rows `t^(i/d)`, `i = 0..=d`.
pub fn constraint_matrix(t_values: &[f64], dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim + 1, t_values.len(), |i, j| {
        if i == 0 {
            1.0
        } else {
            t_values[j].powf(i as f64 / dim as f64)
        }
    })
}

/// Minimum-Euclidean-norm `w` with `A w = e_1`.
pub fn ensemble_weights(t_values: &[f64], dim: usize) -> Result<Vec<f64>> {
    if dim == 0 {
        return invalid("dimension must be positive");
    }
    if t_values.len() <= dim {
        return invalid(format!("need |T| > d, got |T| = {} with d = {dim}", t_values.len()));
    }
    if t_values.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return invalid("index values must be positive and finite");
    }
    let mut sorted = t_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return invalid("index values must be distinct");
    }

    let a = constraint_matrix(t_values, dim);
    let qr = a.transpose().qr();
    let (q, r) = (qr.q(), qr.r());
    let diag_max = r.diagonal().amax();
    if r.diagonal().iter().any(|v| v.abs() <= 1e-13 * diag_max) {
        return invalid("constraint matrix is rank deficient");
    }
    let rt = r.transpose();
    let solve = |rhs: &DVector<f64>| -> DVector<f64> {
        let y = rt.solve_lower_triangular(rhs).expect("nonsingular triangular factor");
        &q * y
    };

    let mut e1 = DVector::zeros(dim + 1);
    e1[0] = 1.0;
    let mut w = solve(&e1);
    for _ in 0..2 {
        let residual = &e1 - &a * &w;
        w += solve(&residual);
    }
    Ok(w.iter().copied().collect())
}

/// `t * N^(-1/(2d))`.
pub fn epsilon_schedule(t: f64, n: usize, dim: usize) -> f64 {
    assert!(n >= 1 && dim >= 1, "epsilon_schedule needs N >= 1 and d >= 1");
    t * (n as f64).powf(-1.0 / (2.0 * dim as f64))
}

/// One base estimate per index `t`, each with its own derived `H2` seed.
pub fn ehb_base_estimates(
    x: &SampleSet,
    y: &SampleSet,
    spec: &DivergenceSpec,
    cfg: &EnsembleConfig,
    seed: u64,
) -> Result<Vec<EstimateResult>> {
    if x.dim() != cfg.dim {
        return invalid(format!("ensemble configured for d = {}, samples have d = {}", cfg.dim, x.dim()));
    }
    cfg.t_values
        .iter()
        .map(|&t| {
            let eps = epsilon_schedule(t, x.len().max(1), cfg.dim);
            let hash = HashConfig::for_sample_size(x.len(), eps, cfg.c_h, derive_seed(seed, t.to_bits()))?;
            estimate(x, y, &hash, spec)
        })
        .collect()
}

/// Weighted sum of base results.
pub fn combine(weights: &[f64], bases: &[EstimateResult]) -> Result<EstimateResult> {
    if weights.len() != bases.len() || bases.is_empty() {
        return invalid("need one weight per base estimate");
    }
    let value = weights.iter().zip(bases).map(|(w, b)| w * b.value).sum();
    let raw_sum = weights.iter().zip(bases).map(|(w, b)| w * b.raw_sum).sum();
    Ok(EstimateResult {
        value,
        occupied_bins: bases.iter().map(|b| b.occupied_bins).max().unwrap_or(0),
        raw_sum,
        hash_config: None,
        spec: bases[0].spec,
    })
}

/// Ensemble estimate `sum_t w(t) D_{epsilon(t)}`.
pub fn estimate_ehb(
    x: &SampleSet,
    y: &SampleSet,
    spec: &DivergenceSpec,
    cfg: &EnsembleConfig,
    seed: u64,
) -> Result<EstimateResult> {
    combine(&cfg.weights, &ehb_base_estimates(x, y, spec, cfg, seed)?)
}
