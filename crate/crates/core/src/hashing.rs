//! Two-level hashing of points into collision buckets.
//!
//! `H1` snaps each coordinate onto a grid of side `epsilon`, shifted by
//! `offset_b`, with floor toward negative infinity so the grid is translation
//! consistent across zero. `H2` maps the resulting integer cell to one of `F`
//! buckets through a seeded 64-bit mixing function reduced modulo `F`. Bucket
//! ids are `1..=F`.

use std::hash::Hash;

use indexmap::IndexMap;

use crate::error::{invalid, Error, Result};
use crate::sample::SampleSet;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed from `seed` and a stream index.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream.wrapping_add(GOLDEN_GAMMA)))
}

/// Grid and bucket parameters of the composite hash.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HashConfig {
    pub epsilon: f64,
    pub offset_b: f64,
    pub bucket_count: u64,
    pub c_h: f64,
    pub seed: u64,
}

impl HashConfig {
    pub const DEFAULT_C_H: f64 = 1.0;

    /// Configuration for a sample of size `n`, with `F = max(1, round(c_h * n))`.
    pub fn for_sample_size(n: usize, epsilon: f64, c_h: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            epsilon,
            offset_b: 0.0,
            bucket_count: bucket_count_for(n, c_h)?,
            c_h,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_offset(mut self, offset_b: f64) -> Self {
        self.offset_b = offset_b;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return invalid(format!("epsilon must be positive and finite, got {}", self.epsilon));
        }
        if !self.offset_b.is_finite() {
            return invalid("offset b must be finite");
        }
        if self.bucket_count == 0 {
            return invalid("bucket count F must be at least 1");
        }
        if !(self.c_h > 0.0 && self.c_h.is_finite()) {
            return invalid(format!("c_H must be positive, got {}", self.c_h));
        }
        Ok(())
    }

    #[inline]
    fn quantize(&self, x: f64) -> Result<i64> {
        if !x.is_finite() {
            return invalid(format!("non-finite coordinate {x}"));
        }
        let q = snap_floor((x + self.offset_b) / self.epsilon);
        // i64::MAX as f64 rounds up to 2^63, so the upper bound is exclusive.
        if !(q >= i64::MIN as f64 && q < i64::MAX as f64) {
            return invalid(format!("coordinate {x} overflows the grid at epsilon {}", self.epsilon));
        }
        Ok(q as i64)
    }

    #[inline]
    fn mix_start(&self) -> u64 {
        mix64(self.seed ^ GOLDEN_GAMMA)
    }

    #[inline]
    fn mix_coord(state: u64, coord: i64) -> u64 {
        mix64(state ^ mix64((coord as u64).wrapping_add(GOLDEN_GAMMA)))
    }

    #[inline]
    fn reduce(&self, state: u64) -> u64 {
        state % self.bucket_count + 1
    }

    /// `H2(H1(point))` without materializing the cell.
    #[inline]
    pub fn bucket_of(&self, point: &[f64]) -> Result<u64> {
        let mut state = self.mix_start();
        for &x in point {
            state = Self::mix_coord(state, self.quantize(x)?);
        }
        Ok(self.reduce(state))
    }
}

/// Floor that treats a quotient within 4 ulps of an integer as that integer,
/// so inputs sitting on a cell boundary in decimal (e.g. `0.6 / 0.2`) land in
/// the cell exact arithmetic would give.
#[inline]
fn snap_floor(q: f64) -> f64 {
    let r = q.round();
    if (q - r).abs() <= 4.0 * f64::EPSILON * r.abs().max(1.0) {
        r
    } else {
        q.floor()
    }
}

/// `F = max(1, round(c_h * n))`.
pub fn bucket_count_for(n: usize, c_h: f64) -> Result<u64> {
    if !(c_h > 0.0 && c_h.is_finite()) {
        return invalid(format!("c_H must be positive, got {c_h}"));
    }
    Ok(((c_h * n as f64).round() as u64).max(1))
}

/// Integer grid cell produced by `H1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridCell(pub Vec<i64>);

/// `H1`: `floor((x_i + b) / epsilon)` per coordinate.
pub fn hash_h1(point: &[f64], cfg: &HashConfig) -> Result<GridCell> {
    cfg.validate()?;
    point.iter().map(|&x| cfg.quantize(x)).collect::<Result<Vec<_>>>().map(GridCell)
}

/// `H2`: seeded bucket id in `1..=F` for a grid cell.
pub fn hash_h2(cell: &GridCell, cfg: &HashConfig) -> Result<u64> {
    cfg.validate()?;
    let state = cell.0.iter().fold(cfg.mix_start(), |s, &c| HashConfig::mix_coord(s, c));
    Ok(cfg.reduce(state))
}

/// Per-key pair of X and Y collision counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BinCount {
    pub n: u64,
    pub m: u64,
}

/// Sparse collision counts keyed by bucket (or by grid cell).
///
/// Only occupied keys are stored. Iteration follows first-insertion order, so
/// two tables filled from the same point sequence iterate identically and any
/// sum over them is reproducible bit for bit. Equality ignores order.
#[derive(Debug, Clone)]
pub struct Counts<K: Hash + Eq> {
    bins: IndexMap<K, BinCount>,
    total_n: u64,
    total_m: u64,
    hash_evaluations: u64,
}

/// Counts keyed by `H2` bucket id.
pub type BinCounts = Counts<u64>;

/// Counts keyed by `H1` grid cell (no second-level hashing).
pub type CellCounts = Counts<GridCell>;

impl<K: Hash + Eq> Default for Counts<K> {
    fn default() -> Self {
        Self { bins: IndexMap::new(), total_n: 0, total_m: 0, hash_evaluations: 0 }
    }
}

impl<K: Hash + Eq> PartialEq for Counts<K> {
    fn eq(&self, other: &Self) -> bool {
        self.total_n == other.total_n && self.total_m == other.total_m && self.bins == other.bins
    }
}

impl<K: Hash + Eq> Counts<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(capacity: usize) -> Self {
        Self { bins: IndexMap::with_capacity(capacity), ..Self::default() }
    }

    /// Builds a table directly from per-key counts; zero entries are dropped.
    pub fn from_bins(bins: impl IntoIterator<Item = (K, BinCount)>) -> Self {
        let mut out = Self::new();
        for (k, c) in bins {
            if c.n == 0 && c.m == 0 {
                continue;
            }
            let slot = out.bins.entry(k).or_default();
            slot.n += c.n;
            slot.m += c.m;
            out.total_n += c.n;
            out.total_m += c.m;
        }
        out
    }

    /// Records one X point in `key`, returning the updated bin.
    pub fn add_x(&mut self, key: K) -> BinCount {
        let slot = self.bins.entry(key).or_default();
        slot.n += 1;
        self.total_n += 1;
        *slot
    }

    /// Records one Y point in `key`, returning the updated bin.
    pub fn add_y(&mut self, key: K) -> BinCount {
        let slot = self.bins.entry(key).or_default();
        slot.m += 1;
        self.total_m += 1;
        *slot
    }

    pub fn get(&self, key: &K) -> BinCount {
        self.bins.get(key).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &BinCount)> {
        self.bins.iter()
    }

    pub fn bins(&self) -> impl Iterator<Item = BinCount> + '_ {
        self.bins.values().copied()
    }

    pub fn occupied(&self) -> usize {
        self.bins.len()
    }

    pub fn total_n(&self) -> u64 {
        self.total_n
    }

    pub fn total_m(&self) -> u64 {
        self.total_m
    }

    /// Number of hash evaluations spent filling this table.
    pub fn hash_evaluations(&self) -> u64 {
        self.hash_evaluations
    }

    pub(crate) fn note_evaluations(&mut self, k: u64) {
        self.hash_evaluations += k;
    }
}

fn check_pair(x: &SampleSet, y: &SampleSet) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return invalid("both sample sets must be nonempty");
    }
    if x.dim() != y.dim() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: X has d={}, Y has d={}",
            x.dim(),
            y.dim()
        )));
    }
    Ok(())
}

/// Hashes every point of `x` and `y` once and tallies per-bucket collisions.
pub fn build_counts(x: &SampleSet, y: &SampleSet, cfg: &HashConfig) -> Result<BinCounts> {
    check_pair(x, y)?;
    cfg.validate()?;
    let mut counts = BinCounts::with_capacity((x.len() + y.len()).min(cfg.bucket_count as usize));
    for p in x {
        counts.add_x(cfg.bucket_of(p)?);
    }
    for p in y {
        counts.add_y(cfg.bucket_of(p)?);
    }
    counts.note_evaluations((x.len() + y.len()) as u64);
    Ok(counts)
}

/// Like [`build_counts`] but keyed by `H1` cell, skipping `H2` entirely.
pub fn build_cell_counts(x: &SampleSet, y: &SampleSet, cfg: &HashConfig) -> Result<CellCounts> {
    check_pair(x, y)?;
    cfg.validate()?;
    let mut counts = CellCounts::new();
    for p in x {
        counts.add_x(hash_h1(p, cfg)?);
    }
    for p in y {
        counts.add_y(hash_h1(p, cfg)?);
    }
    counts.note_evaluations((x.len() + y.len()) as u64);
    Ok(counts)
}
