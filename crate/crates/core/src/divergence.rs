//! f-divergence and Rényi-divergence estimates from collision counts.
//!
//! For bucket counts `(n_i, m_i)` with totals `N`, `M` and `eta = M / N`, the
//! base estimate is
//!
//! ```text
//! D = max{ (1/M) * sum_{i: m_i > 0} m_i * g~(eta * n_i / m_i), 0 }
//! g~(x) = g(max{ x, clip_ratio_floor })
//! ```
//!
//! For `g` nondecreasing on `(0, 1]` (the `x^alpha` family) the clip equals
//! `max{ g(x), g(floor) }`. Clipping the ratio rather than the value keeps
//! `g~(1) = g(1)` for `g` that decrease below 1 (Hellinger, total variation)
//! and leaves `x ln x` untouched on `[floor, 1]`.
//!
//! The Rényi variant uses `g(x) = x^alpha` and reports
//! `ln(max{inner, floor^alpha}) / (alpha - 1)` instead of the outer max.
//! All logarithms are natural.

use std::fmt;

use crate::error::{invalid, Error, Result};
use crate::hashing::{build_cell_counts, build_counts, BinCount, BinCounts, HashConfig};
use crate::sample::{SampleSet, SupportBox};

/// User-supplied `g` for [`DivergenceKind::Custom`].
#[derive(Clone, Copy)]
pub struct CustomG {
    pub name: &'static str,
    pub g: fn(f64) -> f64,
}

impl fmt::Debug for CustomG {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("CustomG").field(&self.name).finish()
    }
}

impl PartialEq for CustomG {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivergenceKind {
    /// `g(x) = x ln x`.
    Kl,
    /// `g(x) = x^alpha`, i.e. the integral of `f1^alpha f2^(1 - alpha)`.
    Alpha(f64),
    /// `g(x) = x^alpha` followed by `ln(.) / (alpha - 1)`.
    Renyi(f64),
    /// `g(x) = (sqrt(x) - 1)^2`.
    Hellinger,
    /// `g(x) = |x - 1| / 2`.
    TotalVariation,
    Custom(CustomG),
}

impl DivergenceKind {
    pub fn name(&self) -> String {
        match self {
            Self::Kl => "kl".into(),
            Self::Alpha(a) => format!("alpha({a})"),
            Self::Renyi(a) => format!("renyi({a})"),
            Self::Hellinger => "hellinger".into(),
            Self::TotalVariation => "tv".into(),
            Self::Custom(c) => c.name.into(),
        }
    }

    /// `g` extended to `x = 0` by its right limit.
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Kl => {
                if x == 0.0 {
                    0.0
                } else {
                    x * x.ln()
                }
            }
            Self::Alpha(a) | Self::Renyi(a) => x.powf(a),
            Self::Hellinger => (x.sqrt() - 1.0).powi(2),
            Self::TotalVariation => (x - 1.0).abs() / 2.0,
            Self::Custom(c) => (c.g)(x),
        }
    }
}

/// How the clipped inner average is turned into the reported value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PostTransform {
    /// `max(inner, 0)`.
    Identity,
    /// `ln(max(inner, floor^alpha)) / (alpha - 1)`.
    RenyiLog(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceSpec {
    pub kind: DivergenceKind,
    /// Lower clip on the density ratio fed to `g`; stands in for `C_L / C_U`.
    pub clip_ratio_floor: f64,
    pub post_transform: PostTransform,
}

impl DivergenceSpec {
    pub const DEFAULT_CLIP_FLOOR: f64 = 1e-3;

    /// Spec with the default clip floor. Rényi kinds get the log transform.
    pub fn new(kind: DivergenceKind) -> Result<Self> {
        let post_transform = match kind {
            DivergenceKind::Renyi(a) => PostTransform::RenyiLog(a),
            _ => PostTransform::Identity,
        };
        let spec = Self { kind, clip_ratio_floor: Self::DEFAULT_CLIP_FLOOR, post_transform };
        spec.validate()?;
        Ok(spec)
    }

    pub fn kl() -> Self {
        Self::new(DivergenceKind::Kl).expect("KL spec is valid")
    }

    pub fn alpha(alpha: f64) -> Result<Self> {
        Self::new(DivergenceKind::Alpha(alpha))
    }

    pub fn renyi(alpha: f64) -> Result<Self> {
        Self::new(DivergenceKind::Renyi(alpha))
    }

    pub fn with_clip_floor(mut self, floor: f64) -> Result<Self> {
        self.clip_ratio_floor = floor;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip_ratio_floor > 0.0 && self.clip_ratio_floor <= 1.0) {
            return invalid(format!("clip ratio floor must lie in (0, 1], got {}", self.clip_ratio_floor));
        }
        let check_alpha = |a: f64| {
            if !(a > 0.0 && a.is_finite()) || a == 1.0 {
                invalid(format!("alpha must be positive and different from 1, got {a}"))
            } else {
                Ok(())
            }
        };
        if let DivergenceKind::Alpha(a) | DivergenceKind::Renyi(a) = self.kind {
            check_alpha(a)?;
        }
        match (self.kind, self.post_transform) {
            (_, PostTransform::Identity) => Ok(()),
            (DivergenceKind::Alpha(a) | DivergenceKind::Renyi(a), PostTransform::RenyiLog(b)) if a == b => {
                check_alpha(b)
            }
            _ => invalid("the Rényi log transform requires g(x) = x^alpha with the same alpha"),
        }
    }

    /// `g(max(x, clip_ratio_floor))`; `x = 0` is allowed.
    #[inline]
    pub fn clipped_g(&self, x: f64) -> f64 {
        self.kind.eval(x.max(self.clip_ratio_floor))
    }

    /// Clipped contribution `m * g~(eta * n / m)` of one bin; zero when `m = 0`.
    #[inline]
    pub fn bin_term(&self, eta: f64, bin: BinCount) -> f64 {
        if bin.m == 0 {
            return 0.0;
        }
        let m = bin.m as f64;
        let ratio = eta * bin.n as f64 / m;
        m * self.clipped_g(ratio)
    }

    /// Applies the outer max or the Rényi log to the inner average.
    pub fn finalize(&self, inner: f64) -> Result<f64> {
        if !inner.is_finite() {
            return Err(Error::Numeric(format!("inner sum is not finite ({inner})")));
        }
        let value = match self.post_transform {
            PostTransform::Identity => inner.max(0.0),
            PostTransform::RenyiLog(a) => inner.max(self.clip_ratio_floor.powf(a)).ln() / (a - 1.0),
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Numeric(format!("estimate is not finite ({value})")))
        }
    }
}

/// `g(x)` for `x > 0`.
pub fn g_function(kind: DivergenceKind, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Numeric(format!("g is defined for x > 0, got {x}")));
    }
    Ok(kind.eval(x))
}

/// Clipped `g`: `g(max(x, clip_ratio_floor))` for `x > 0`.
pub fn g_tilde(spec: &DivergenceSpec, x: f64) -> Result<f64> {
    spec.validate()?;
    g_function(spec.kind, x)?;
    Ok(spec.clipped_g(x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub value: f64,
    pub occupied_bins: usize,
    /// `(1/M) * sum m_i g~(.)` before the outer max or log.
    pub raw_sum: f64,
    pub hash_config: Option<HashConfig>,
    pub spec: DivergenceSpec,
}

/// Unnormalized `sum_i m_i g~(eta n_i / m_i)` in table order.
pub fn inner_sum(counts: &BinCounts, spec: &DivergenceSpec) -> f64 {
    let eta = counts.total_m() as f64 / counts.total_n() as f64;
    counts.bins().map(|b| spec.bin_term(eta, b)).sum()
}

/// Evaluates the clipped estimator on precomputed counts.
pub fn estimate_f_divergence(counts: &BinCounts, spec: &DivergenceSpec) -> Result<EstimateResult> {
    spec.validate()?;
    if counts.total_m() == 0 {
        return invalid("no Y samples: M = 0");
    }
    if counts.total_n() == 0 {
        return invalid("no X samples: N = 0");
    }
    let raw_sum = inner_sum(counts, spec) / counts.total_m() as f64;
    Ok(EstimateResult {
        value: spec.finalize(raw_sum)?,
        occupied_bins: counts.occupied(),
        raw_sum,
        hash_config: None,
        spec: *spec,
    })
}

/// Hashes `x` and `y` with `cfg` and evaluates the estimator.
pub fn estimate(x: &SampleSet, y: &SampleSet, cfg: &HashConfig, spec: &DivergenceSpec) -> Result<EstimateResult> {
    let counts = build_counts(x, y, cfg)?;
    let mut result = estimate_f_divergence(&counts, spec)?;
    result.hash_config = Some(*cfg);
    Ok(result)
}

/// Bandwidth `N^(-1 / (gamma + d))`, balancing the `eps^gamma` and
/// `1 / (N eps^d)` bias terms.
///
/// # Panics
///
/// If `n == 0`, `d == 0` or `gamma` is outside `(0, 1]`.
pub fn default_epsilon(n: usize, d: usize, gamma: f64) -> f64 {
    assert!(n >= 1 && d >= 1, "default_epsilon needs N >= 1 and d >= 1");
    assert!(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1], got {gamma}");
    (n as f64).powf(-1.0 / (gamma + d as f64))
}

/// Rényi estimate for grid-only counts over a known support:
/// `ln[(eta^alpha / M) * sum_{m_i > 0} (n_i / (m_i + 1))^alpha * m_i] / (alpha - 1)`.
pub fn estimate_renyi_known_support(
    bins: impl IntoIterator<Item = BinCount>,
    alpha: f64,
    eta: f64,
    m_total: u64,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) || alpha == 1.0 {
        return invalid(format!("alpha must be positive and different from 1, got {alpha}"));
    }
    if m_total == 0 {
        return invalid("no Y samples: M = 0");
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return invalid(format!("eta must be positive, got {eta}"));
    }
    let sum: f64 = bins
        .into_iter()
        .filter(|b| b.m > 0)
        .map(|b| (b.n as f64 / (b.m as f64 + 1.0)).powf(alpha) * b.m as f64)
        .sum();
    let inner = eta.powf(alpha) / m_total as f64 * sum;
    if !(inner > 0.0 && inner.is_finite()) {
        return Err(Error::Numeric(format!("log argument {inner} is not positive")));
    }
    Ok(inner.ln() / (alpha - 1.0))
}

/// Known-support Rényi estimator on raw samples: the box is split into
/// `cells_per_axis` cells per dimension, aligned with its lower corner.
pub fn renyi_known_support(
    x: &SampleSet,
    y: &SampleSet,
    support: &SupportBox,
    cells_per_axis: usize,
    alpha: f64,
) -> Result<f64> {
    if cells_per_axis == 0 {
        return invalid("need at least one cell per axis");
    }
    if support.dim() != x.dim() {
        return invalid("support box dimension does not match the samples");
    }
    let width = support.hi.iter().zip(&support.lo).map(|(h, l)| h - l).fold(0.0, f64::max);
    let cfg = HashConfig {
        epsilon: width / cells_per_axis as f64,
        offset_b: -support.lo[0],
        bucket_count: 1,
        c_h: 1.0,
        seed: 0,
    };
    let counts = build_cell_counts(x, y, &cfg)?;
    let eta = counts.total_m() as f64 / counts.total_n() as f64;
    estimate_renyi_known_support(counts.bins(), alpha, eta, counts.total_m())
}
