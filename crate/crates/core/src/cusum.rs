//! Normalised CUSUM statistics for multiplicative sequences and their
//! aggregation across a panel.
//!
//! For a segment `[s, e]` of length `n` and a split `b` in `[s, e - 1]` the
//! left block is `[s, b]` and the right block `[b + 1, e]`. The statistic is
//!
//! ```text
//! | sqrt((e-b) / (n (b-s+1))) * sum_{s..=b} y  -  sqrt((b-s+1) / (n (e-b))) * sum_{b+1..=e} y |
//! -------------------------------------------------------------------------------------------
//!                              n^{-1} * sum_{s..=e} y
//! ```
//!
//! The normaliser is the mean over the segment itself, which makes the curve
//! invariant to rescaling `y`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed time interval `[start, end]` with at least two points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "[usize; 2]", try_from = "[usize; 2]")]
pub struct Segment {
    start: usize,
    end: usize,
}

impl Segment {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start >= end {
            return Err(Error::InvalidSegment {
                start,
                end,
                len: end.saturating_add(1),
            });
        }
        Ok(Self { start, end })
    }

    /// A segment that must also fit inside a series of length `len`.
    pub fn within(start: usize, end: usize, len: usize) -> Result<Self> {
        if start >= end || end >= len {
            return Err(Error::InvalidSegment { start, end, len });
        }
        Ok(Self { start, end })
    }

    /// The whole range `[0, len - 1]`.
    pub fn full(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::InvalidSegment {
                start: 0,
                end: len.saturating_sub(1),
                len,
            });
        }
        Ok(Self {
            start: 0,
            end: len - 1,
        })
    }

    #[inline]
    pub fn start(&self) -> usize {
        self.start
    }

    #[inline]
    pub fn end(&self) -> usize {
        self.end
    }

    /// Number of points, `e - s + 1`.
    #[inline]
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of admissible split points, `n - 1`.
    #[inline]
    pub fn splits(&self) -> usize {
        self.end - self.start
    }

    /// Whether `b` is an admissible split point (`s <= b < e`).
    #[inline]
    pub fn is_split(&self, b: usize) -> bool {
        b >= self.start && b < self.end
    }
}

impl From<Segment> for [usize; 2] {
    fn from(s: Segment) -> Self {
        [s.start, s.end]
    }
}

impl TryFrom<[usize; 2]> for Segment {
    type Error = Error;

    fn try_from(v: [usize; 2]) -> Result<Self> {
        Segment::new(v[0], v[1])
    }
}

/// Normalised CUSUM values of one sequence over one segment.
#[derive(Clone, Debug, PartialEq)]
pub struct CusumCurve {
    pub segment: Segment,
    /// `values[b - s]` for `b` in `[s, e - 1]`.
    pub values: Vec<f64>,
    /// Mean of the sequence over the segment.
    pub mean_level: f64,
}

impl CusumCurve {
    /// Value at absolute split index `b`.
    pub fn at(&self, b: usize) -> f64 {
        self.values[b - self.segment.start]
    }

    /// Absolute index of the maximum, smallest index on ties.
    pub fn argmax(&self) -> usize {
        self.segment.start + argmax(&self.values)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// CSV with columns `b,value`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["b", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            w.write_record([(self.segment.start + i).to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn validate(y: &[f64], segment: Segment) -> Result<()> {
    if y.len() != segment.len() {
        return Err(Error::Shape(format!(
            "sequence has {} values but segment [{}, {}] has {}",
            y.len(),
            segment.start,
            segment.end,
            segment.len()
        )));
    }
    for (i, &v) in y.iter().enumerate() {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::Domain {
                index: segment.start + i,
                value: v,
            });
        }
    }
    Ok(())
}

/// Compensated (Neumaier) prefix sums: `out[m] = sum(y[..m])`, `out.len() == y.len() + 1`.
pub(crate) fn prefix_sums_into(y: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.reserve(y.len() + 1);
    out.push(0.0);
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for &v in y {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
        out.push(sum + comp);
    }
}

/// Writes the normalised curve of `y` (one segment, already restricted) into
/// `out` (length `y.len() - 1`) and returns the segment total. A zero total
/// yields an all-zero curve.
pub(crate) fn curve_into(y: &[f64], prefix: &mut Vec<f64>, out: &mut [f64]) -> f64 {
    let n = y.len();
    debug_assert_eq!(out.len(), n - 1);
    prefix_sums_into(y, prefix);
    let total = prefix[n];
    if total <= 0.0 || y.iter().all(|&v| v == y[0]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        return total;
    }
    let nf = n as f64;
    let scale = nf / total;
    for (r, slot) in out.iter_mut().enumerate() {
        let m = (r + 1) as f64;
        let left = prefix[r + 1];
        // (n-m) L - m R with R = total - L
        let contrast = nf * left - m * total;
        *slot = contrast.abs() / (nf * m * (nf - m)).sqrt() * scale;
    }
    total
}

/// Value of the normalised statistic at a single split, from prefix sums of
/// the segment (`prefix.len() == n + 1`).
pub(crate) fn value_at(prefix: &[f64], r: usize) -> f64 {
    let n = prefix.len() - 1;
    let total = prefix[n];
    if total <= 0.0 {
        return 0.0;
    }
    let nf = n as f64;
    let m = (r + 1) as f64;
    let contrast = nf * prefix[r + 1] - m * total;
    contrast.abs() / (nf * m * (nf - m)).sqrt() * nf / total
}

/// Normalised CUSUM curve of `y` (the values of a sequence on `segment`).
pub fn cusum_curve(y: &[f64], segment: Segment) -> Result<CusumCurve> {
    validate(y, segment)?;
    let n = segment.len();
    let mut prefix = Vec::with_capacity(n + 1);
    let mut values = vec![0.0; n - 1];
    let total = curve_into(y, &mut prefix, &mut values);
    if total <= 0.0 {
        return Err(Error::Degenerate {
            start: segment.start,
            end: segment.end,
        });
    }
    Ok(CusumCurve {
        segment,
        values,
        mean_level: total / n as f64,
    })
}

/// Signed, unnormalised contrast `sqrt((e-b)/(n(b-s+1))) L - sqrt((b-s+1)/(n(e-b))) R`
/// for every split of the segment.
pub fn cusum_contrast(y: &[f64], segment: Segment) -> Result<Vec<f64>> {
    validate(y, segment)?;
    let n = y.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix_sums_into(y, &mut prefix);
    let total = prefix[n];
    let nf = n as f64;
    Ok((0..n - 1)
        .map(|r| {
            let m = (r + 1) as f64;
            (nf * prefix[r + 1] - m * total) / (nf * m * (nf - m)).sqrt()
        })
        .collect())
}

/// Rule for combining per-sequence CUSUM curves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Sum of the values that exceed their sequence's threshold.
    Thr,
    /// Point-wise average.
    Avg,
    /// Point-wise maximum.
    Max,
}

impl Aggregation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Aggregation::Thr => "thr",
            Aggregation::Avg => "avg",
            Aggregation::Max => "max",
        }
    }
}

impl std::fmt::Display for Aggregation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "thr" => Ok(Aggregation::Thr),
            "avg" => Ok(Aggregation::Avg),
            "max" => Ok(Aggregation::Max),
            other => Err(Error::Config(format!("unknown aggregation rule `{other}`"))),
        }
    }
}

/// Panel-level combination of CUSUM curves on one segment.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregatedCurve {
    pub segment: Segment,
    pub values: Vec<f64>,
    pub rule: Aggregation,
    /// Number of sequences above their threshold at each split.
    pub contributing_counts: Vec<usize>,
    /// Sequence attaining the point-wise maximum (first on ties).
    pub max_source: Vec<usize>,
}

impl AggregatedCurve {
    pub fn at(&self, b: usize) -> f64 {
        self.values[b - self.segment.start]
    }

    /// CSV with columns `b,value,count`; `offset` is added to `b`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W, offset: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["b", "value", "count"])?;
        for (i, (v, c)) in self.values.iter().zip(&self.contributing_counts).enumerate() {
            w.write_record([
                (self.segment.start + i + offset).to_string(),
                v.to_string(),
                c.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Streaming reduction of curves in ascending sequence order.
pub(crate) struct Accumulator {
    rule: Aggregation,
    sum: Vec<f64>,
    running_max: Vec<f64>,
    counts: Vec<usize>,
    max_source: Vec<usize>,
    added: usize,
}

impl Accumulator {
    pub(crate) fn new(rule: Aggregation, splits: usize) -> Self {
        Self {
            rule,
            sum: vec![0.0; splits],
            running_max: vec![f64::NEG_INFINITY; splits],
            counts: vec![0; splits],
            max_source: vec![0; splits],
            added: 0,
        }
    }

    pub(crate) fn add(&mut self, k: usize, curve: &[f64], threshold: f64) {
        debug_assert_eq!(curve.len(), self.sum.len());
        let gated = self.rule == Aggregation::Thr;
        for (b, &v) in curve.iter().enumerate() {
            let pass = v > threshold;
            if pass {
                self.counts[b] += 1;
            }
            if !gated || pass {
                self.sum[b] += v;
            }
            if v > self.running_max[b] {
                self.running_max[b] = v;
                self.max_source[b] = k;
            }
        }
        self.added += 1;
    }

    /// Append a partial reduction over later sequences.
    pub(crate) fn merge(&mut self, later: Accumulator) {
        for b in 0..self.sum.len() {
            self.sum[b] += later.sum[b];
            self.counts[b] += later.counts[b];
            if later.running_max[b] > self.running_max[b] {
                self.running_max[b] = later.running_max[b];
                self.max_source[b] = later.max_source[b];
            }
        }
        self.added += later.added;
    }

    pub(crate) fn finish(self, segment: Segment) -> AggregatedCurve {
        let values = match self.rule {
            Aggregation::Thr => self.sum,
            Aggregation::Avg => {
                let d = self.added.max(1) as f64;
                self.sum.into_iter().map(|v| v / d).collect()
            }
            Aggregation::Max => self.running_max.into_iter().map(|v| v.max(0.0)).collect(),
        };
        AggregatedCurve {
            segment,
            values,
            rule: self.rule,
            contributing_counts: self.counts,
            max_source: self.max_source,
        }
    }
}

/// Combine curves sharing one segment by the given rule.
///
/// `thresholds[k]` is the threshold of curve `k`; it gates the sum under
/// [`Aggregation::Thr`] and feeds `contributing_counts` under every rule.
pub fn aggregate(
    curves: &[CusumCurve],
    thresholds: &[f64],
    rule: Aggregation,
) -> Result<AggregatedCurve> {
    let first = curves
        .first()
        .ok_or_else(|| Error::Shape("cannot aggregate an empty list of curves".into()))?;
    if thresholds.len() != curves.len() {
        return Err(Error::Shape(format!(
            "{} thresholds for {} curves",
            thresholds.len(),
            curves.len()
        )));
    }
    let segment = first.segment;
    if let Some(bad) = curves.iter().find(|c| c.segment != segment) {
        return Err(Error::Shape(format!(
            "curves on different segments: [{}, {}] vs [{}, {}]",
            segment.start, segment.end, bad.segment.start, bad.segment.end
        )));
    }
    let mut acc = Accumulator::new(rule, segment.splits());
    for (k, (c, &pi)) in curves.iter().zip(thresholds).enumerate() {
        acc.add(k, &c.values, pi);
    }
    Ok(acc.finish(segment))
}
