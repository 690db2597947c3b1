//! Streaming estimator with amortized constant-time updates.
//!
//! Samples arrive in (x, y) pairs. Between rehashes each pair touches at most
//! two buckets, and the running sum `S = sum_i m_i g~(n_i / m_i)` is patched
//! by removing the touched buckets' old terms and adding their new ones. When
//! the pair count reaches a power of two `p`, the bandwidth is reset to
//! `default_epsilon(p, d, gamma)`, `F` to `round(c_H * p)`, and every stored
//! point is rehashed. Over `N = 2^k` pairs that rehashes `1 + 2 + ... + 2^k =
//! 2N - 1` pairs in total.
//!
//! At a power of two the estimate is recomputed from scratch in the same
//! order as the batch estimator, so the two agree bit for bit. In between,
//! the patched sum may drift from a fresh summation by rounding only.

use crate::divergence::{default_epsilon, inner_sum, DivergenceSpec};
use crate::error::{invalid, Result};
use crate::hashing::{bucket_count_for, build_counts, BinCounts, HashConfig};
use crate::sample::SampleSet;

/// Estimate as seen by a reader.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineEstimate {
    pub value: f64,
    /// No pairs have been seen yet; `value` is 0 by convention.
    pub insufficient_data: bool,
}

#[derive(Debug, Clone)]
pub struct OnlineState {
    spec: DivergenceSpec,
    dim: usize,
    gamma: f64,
    c_h: f64,
    seed: u64,
    x: SampleSet,
    y: SampleSet,
    hash: Option<HashConfig>,
    counts: BinCounts,
    sum: f64,
    estimate: f64,
    rehash_count: u64,
    rehash_work: u64,
    hash_evaluations: u64,
}

impl OnlineState {
    pub fn new(spec: DivergenceSpec, dim: usize, gamma: f64, seed: u64) -> Result<Self> {
        spec.validate()?;
        if dim == 0 {
            return invalid("dimension must be positive");
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return invalid(format!("gamma must lie in (0, 1], got {gamma}"));
        }
        Ok(Self {
            spec,
            dim,
            gamma,
            c_h: HashConfig::DEFAULT_C_H,
            seed,
            x: SampleSet::new(dim),
            y: SampleSet::new(dim),
            hash: None,
            counts: BinCounts::new(),
            sum: 0.0,
            estimate: 0.0,
            rehash_count: 0,
            rehash_work: 0,
            hash_evaluations: 0,
        })
    }

    pub fn with_c_h(mut self, c_h: f64) -> Result<Self> {
        if !(c_h > 0.0 && c_h.is_finite()) {
            return invalid(format!("c_H must be positive, got {c_h}"));
        }
        self.c_h = c_h;
        Ok(self)
    }

    /// Adds one X and one Y sample.
    pub fn update(&mut self, x_new: &[f64], y_new: &[f64]) -> Result<()> {
        if x_new.len() != self.dim || y_new.len() != self.dim {
            return invalid(format!(
                "expected points of dimension {}, got {} and {}",
                self.dim,
                x_new.len(),
                y_new.len()
            ));
        }
        if x_new.iter().chain(y_new).any(|v| !v.is_finite()) {
            return invalid("non-finite coordinate in update");
        }
        let n_new = self.n_seen() + 1;
        if n_new.is_power_of_two() {
            self.x.push(x_new)?;
            self.y.push(y_new)?;
            return self.rehash(n_new);
        }

        let cfg = self.hash.expect("a rehash happens at n = 1");
        let kx = cfg.bucket_of(x_new)?;
        let ky = cfg.bucket_of(y_new)?;
        self.hash_evaluations += 2;
        self.x.push(x_new)?;
        self.y.push(y_new)?;

        // eta stays 1 because X and Y grow together.
        let spec = self.spec;
        let old_x = self.counts.get(&kx);
        let old_y = if ky == kx { old_x } else { self.counts.get(&ky) };
        self.sum -= spec.bin_term(1.0, old_x);
        if ky != kx {
            self.sum -= spec.bin_term(1.0, old_y);
        }
        let new_x = self.counts.add_x(kx);
        let new_y = self.counts.add_y(ky);
        if ky != kx {
            self.sum += spec.bin_term(1.0, new_x);
        }
        self.sum += spec.bin_term(1.0, new_y);
        self.estimate = spec.finalize(self.sum / self.counts.total_m() as f64)?;
        Ok(())
    }

    fn rehash(&mut self, p: usize) -> Result<()> {
        let epsilon = default_epsilon(p, self.dim, self.gamma);
        let cfg = HashConfig {
            epsilon,
            offset_b: 0.0,
            bucket_count: bucket_count_for(p, self.c_h)?,
            c_h: self.c_h,
            seed: self.seed,
        };
        self.counts = build_counts(&self.x, &self.y, &cfg)?;
        self.hash = Some(cfg);
        self.hash_evaluations += self.counts.hash_evaluations();
        self.rehash_count += 1;
        self.rehash_work += p as u64;
        self.sum = inner_sum(&self.counts, &self.spec);
        self.estimate = self.spec.finalize(self.sum / self.counts.total_m() as f64)?;
        Ok(())
    }

    pub fn estimate(&self) -> OnlineEstimate {
        OnlineEstimate { value: self.estimate, insufficient_data: self.n_seen() == 0 }
    }

    /// Fresh evaluation of the estimator on the current counts.
    pub fn recompute(&self) -> Result<f64> {
        if self.n_seen() == 0 {
            return Ok(0.0);
        }
        self.spec.finalize(inner_sum(&self.counts, &self.spec) / self.counts.total_m() as f64)
    }

    pub fn n_seen(&self) -> usize {
        self.x.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> &DivergenceSpec {
        &self.spec
    }

    /// Current hash configuration; `None` before the first pair.
    pub fn hash_config(&self) -> Option<&HashConfig> {
        self.hash.as_ref()
    }

    pub fn counts(&self) -> &BinCounts {
        &self.counts
    }

    pub fn x(&self) -> &SampleSet {
        &self.x
    }

    pub fn y(&self) -> &SampleSet {
        &self.y
    }

    pub fn rehash_count(&self) -> u64 {
        self.rehash_count
    }

    /// Pairs rehashed so far, summed over all rehashes.
    pub fn cumulative_rehash_work(&self) -> u64 {
        self.rehash_work
    }

    /// Point hash evaluations so far, incremental and rehash alike.
    pub fn hash_evaluations(&self) -> u64 {
        self.hash_evaluations
    }
}
