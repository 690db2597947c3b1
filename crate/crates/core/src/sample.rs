//! Point sets and their CSV representation.
//!
//! Points are stored row-major in a single buffer. The CSV layout is one row
//! per point with a header `x1,...,xd`.

use std::io::{Read, Write};

use crate::error::{invalid, Error, Result};

/// Axis-aligned box `[lo_i, hi_i]` per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SupportBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return invalid("support box bounds must have the same nonzero length");
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
            return invalid("support box must satisfy lo < hi with finite bounds");
        }
        Ok(Self { lo, hi })
    }

    /// The cube `[lo, hi]^d`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (l, h))| *x >= *l && *x <= *h)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }
}

/// An ordered collection of `d`-dimensional points.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dim: usize,
    data: Vec<f64>,
    support: Option<SupportBox>,
}

impl SampleSet {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { dim, data: Vec::new(), support: None }
    }

    /// Builds a set from a flat row-major buffer.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be positive");
        }
        if !data.len().is_multiple_of(dim) {
            return invalid(format!("buffer of length {} is not a multiple of d={dim}", data.len()));
        }
        Ok(Self { dim, data, support: None })
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let Some(first) = points.first() else {
            return invalid("cannot infer dimension from an empty point list");
        };
        let dim = first.as_ref().len();
        let mut set = Self::from_flat(dim, Vec::with_capacity(dim * points.len()))?;
        for p in points {
            set.push(p.as_ref())?;
        }
        Ok(set)
    }

    pub fn with_support(mut self, support: SupportBox) -> Result<Self> {
        if support.dim() != self.dim {
            return invalid("support box dimension does not match the sample dimension");
        }
        self.support = Some(support);
        Ok(self)
    }

    pub fn push(&mut self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim {
            return invalid(format!("point has dimension {}, expected {}", point.len(), self.dim));
        }
        self.data.extend_from_slice(point);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn support(&self) -> Option<&SupportBox> {
        self.support.as_ref()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Maps every point affinely so that `support` becomes `[0, 1]^d`.
    ///
    /// Divergences between two samples are unchanged when both go through
    /// the same bijection, while the default bandwidth assumes unit scale.
    pub fn to_unit_box(&self, support: &SupportBox) -> Result<SampleSet> {
        if support.dim() != self.dim {
            return invalid("support box dimension does not match the samples");
        }
        let data = self
            .iter()
            .flat_map(|p| p.iter().zip(support.lo.iter().zip(&support.hi)).map(|(x, (l, h))| (x - l) / (h - l)))
            .collect();
        Ok(SampleSet { dim: self.dim, data, support: Some(SupportBox::cube(self.dim, 0.0, 1.0)?) })
    }

    /// Writes the set as CSV with a `x1,...,xd` header. Floats are written
    /// with shortest round-trip precision.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record((1..=self.dim).map(|i| format!("x{i}")))?;
        for p in self.iter() {
            w.write_record(p.iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let dim = r.headers()?.len();
        if dim == 0 {
            return invalid("CSV header has no columns");
        }
        let mut set = Self::new(dim);
        for (row, record) in r.records().enumerate() {
            let record = record?;
            if record.len() != dim {
                return invalid(format!("row {} has {} fields, expected {dim}", row + 1, record.len()));
            }
            for field in record.iter() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::InvalidInput(format!("row {}: cannot parse {field:?} as a number", row + 1))
                })?;
                set.data.push(v);
            }
        }
        Ok(set)
    }
}

impl<'a> IntoIterator for &'a SampleSet {
    type Item = &'a [f64];
    type IntoIter = std::slice::ChunksExact<'a, f64>;

    fn into_iter(self) -> Self::IntoIter {
        self.iter()
    }
}
