//! Sparsified binary segmentation over a panel of multiplicative sequences.
//!
//! A generic step computes the normalised CUSUM curve of every sequence on the
//! current segment, combines them (by default keeping only the parts of each
//! curve that exceed that sequence's threshold), picks the largest admissible
//! peak whose `delta`-neighbourhood is entirely positive, and recurses on both
//! sides. [`post_process_within`] then re-tests every estimate on the interval
//! spanned by its two neighbours.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cusum::{
    curve_into, prefix_sums_into, value_at, Accumulator, AggregatedCurve, Aggregation, Segment,
};
use crate::error::{Error, Result};

/// Sequences per parallel work unit. Fixed so that floating-point reductions
/// do not depend on the number of worker threads.
const CHUNK: usize = 32;

/// A `d x T` panel of nonnegative sequences that can be read per segment.
pub trait PanelSource: Sync {
    /// Number of sequences `d`.
    fn dim(&self) -> usize;

    /// Panel length `T`.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether [`PanelSource::fill`] may return values that depend on the
    /// requested segment and not only on the time index.
    fn segment_dependent(&self) -> bool {
        false
    }

    /// Replace the contents of `out` with sequence `k` restricted to `segment`.
    fn fill(&self, k: usize, segment: Segment, out: &mut Vec<f64>);
}

/// Row-major in-memory panel.
#[derive(Clone, Debug, PartialEq)]
pub struct DensePanel {
    dim: usize,
    len: usize,
    data: Vec<f64>,
}

impl DensePanel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        let len = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(dim * len);
        for (k, row) in rows.into_iter().enumerate() {
            if row.len() != len {
                return Err(Error::Shape(format!(
                    "row {k} has length {} instead of {len}",
                    row.len()
                )));
            }
            if let Some((t, &v)) = row
                .iter()
                .enumerate()
                .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
            {
                return Err(Error::Domain { index: t, value: v });
            }
            data.extend(row);
        }
        Ok(Self { dim, len, data })
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.len..(k + 1) * self.len]
    }
}

impl PanelSource for DensePanel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.len
    }

    fn fill(&self, k: usize, segment: Segment, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.row(k)[segment.start()..=segment.end()]);
    }
}

/// Admissibility rule for split candidates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Balance {
    /// `max((b-s+1)/n, (e-b)/n) <= c` with `c` in `[1/2, 1)`.
    Fixed(f64),
    /// Every new estimate lies at least `delta` away from all earlier ones.
    MinDistance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SbsConfig {
    /// Per-sequence thresholds. `f64::INFINITY` disables a sequence.
    pub thresholds: Vec<f64>,
    pub delta: usize,
    pub balance: Balance,
    /// Segments shorter than this are not searched.
    pub min_segment: usize,
    pub rule: Aggregation,
}

impl SbsConfig {
    /// Threshold-sum rule, minimum-distance admissibility, `min_segment = 2 delta + 2`.
    pub fn new(thresholds: Vec<f64>, delta: usize) -> Self {
        Self {
            thresholds,
            delta,
            balance: Balance::MinDistance,
            min_segment: 2 * delta + 2,
            rule: Aggregation::Thr,
        }
    }

    pub fn with_rule(mut self, rule: Aggregation) -> Self {
        self.rule = rule;
        self
    }

    pub fn with_balance(mut self, balance: Balance) -> Self {
        self.balance = balance;
        self
    }

    pub fn with_min_segment(mut self, min_segment: usize) -> Self {
        self.min_segment = min_segment;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.thresholds.len() != dim {
            return Err(Error::Config(format!(
                "{} thresholds for a panel of {dim} sequences",
                self.thresholds.len()
            )));
        }
        if let Some(k) = self
            .thresholds
            .iter()
            .position(|&p| !(p > 0.0) || p.is_nan())
        {
            return Err(Error::Config(format!(
                "threshold {k} must be positive, got {}",
                self.thresholds[k]
            )));
        }
        if self.delta < 1 {
            return Err(Error::Config("delta must be at least 1".into()));
        }
        if self.min_segment < 2 * self.delta + 2 {
            return Err(Error::Config(format!(
                "min_segment {} is below 2 * delta + 2 = {}",
                self.min_segment,
                2 * self.delta + 2
            )));
        }
        if let Balance::Fixed(c) = self.balance {
            if !(0.5..1.0).contains(&c) {
                return Err(Error::Config(format!(
                    "balance constant {c} outside [1/2, 1)"
                )));
            }
        }
        Ok(())
    }

    fn active(&self, k: usize) -> bool {
        self.thresholds[k].is_finite()
    }
}

/// Member of an across-scales cluster.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterMember {
    pub location: usize,
    pub scale: i32,
    pub value: f64,
}

/// One estimated change-point with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangePoint {
    pub location: usize,
    /// Recursion depth at which it was found (root = 1).
    pub level: usize,
    pub segment: Segment,
    /// Aggregated statistic at `location`.
    pub value: f64,
    pub passing_sequences: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<i32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cluster: Vec<ClusterMember>,
}

/// Sorted change-point estimates for a panel of length `len` and dimension `dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangePointSet {
    pub schema: u32,
    #[serde(rename = "T")]
    pub len: usize,
    pub d: usize,
    pub rule: Aggregation,
    pub points: Vec<ChangePoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl ChangePointSet {
    pub fn empty(len: usize, d: usize, rule: Aggregation) -> Self {
        Self {
            schema: 1,
            len,
            d,
            rule,
            points: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn locations(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.location).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn sort(&mut self) {
        self.points.sort_by_key(|p| p.location);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

struct ChunkPartial {
    acc: Accumulator,
    /// (k, whether the curve of k exceeds its threshold somewhere, total)
    per_seq: Vec<(usize, bool, f64)>,
}

/// Everything the recursion needs to know about one segment.
struct SegmentScan {
    agg: AggregatedCurve,
    /// Aggregate with failed detections zeroed.
    gated: Vec<f64>,
    /// Sequence totals on the segment, `None` for inactive ones.
    totals: Vec<Option<f64>>,
}

fn scan_segment<P: PanelSource + ?Sized>(
    panel: &P,
    config: &SbsConfig,
    segment: Segment,
) -> SegmentScan {
    let d = panel.dim();
    let splits = segment.splits();
    let indices: Vec<usize> = (0..d).filter(|&k| config.active(k)).collect();
    let partials: Vec<ChunkPartial> = indices
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Accumulator::new(config.rule, splits);
            let mut y = Vec::with_capacity(segment.len());
            let mut prefix = Vec::with_capacity(segment.len() + 1);
            let mut curve = vec![0.0; splits];
            let mut per_seq = Vec::with_capacity(chunk.len());
            for &k in chunk {
                panel.fill(k, segment, &mut y);
                let total = curve_into(&y, &mut prefix, &mut curve);
                let pi = config.thresholds[k];
                acc.add(k, &curve, pi);
                per_seq.push((k, curve.iter().any(|&v| v > pi), total));
            }
            ChunkPartial { acc, per_seq }
        })
        .collect();

    let mut totals = vec![None; d];
    let mut exceed_sum = 0.0;
    let mut exceed_any = false;
    let mut merged: Option<Accumulator> = None;
    for part in partials {
        for &(k, exceeds, total) in &part.per_seq {
            totals[k] = Some(total);
            if exceeds {
                exceed_any = true;
                exceed_sum += config.thresholds[k];
            }
        }
        match merged.as_mut() {
            None => merged = Some(part.acc),
            Some(m) => m.merge(part.acc),
        }
    }
    let agg = merged
        .unwrap_or_else(|| Accumulator::new(config.rule, splits))
        .finish(segment);

    let gated = match config.rule {
        Aggregation::Thr => agg.values.clone(),
        Aggregation::Avg => {
            // scaled threshold d^{-1} sum_k 1(max_t curve_k > pi_k) pi_k
            let active = indices.len().max(1) as f64;
            let tau = exceed_sum / active;
            agg.values
                .iter()
                .map(|&v| if exceed_any && v > tau { v } else { 0.0 })
                .collect()
        }
        Aggregation::Max => agg
            .values
            .iter()
            .zip(&agg.max_source)
            .map(|(&v, &k)| if v > config.thresholds[k] { v } else { 0.0 })
            .collect(),
    };
    SegmentScan { agg, gated, totals }
}

/// Largest admissible split of `agg` whose `delta`-neighbourhood (clipped to
/// the segment's split range) is strictly positive. Ties go to the smaller
/// index. `existing` holds previously detected locations.
pub fn find_candidate(
    agg: &AggregatedCurve,
    existing: &[usize],
    config: &SbsConfig,
) -> Option<usize> {
    find_in(&agg.values, agg.segment, existing, config)
}

fn find_in(
    values: &[f64],
    segment: Segment,
    existing: &[usize],
    config: &SbsConfig,
) -> Option<usize> {
    let s = segment.start();
    let e = segment.end();
    let n = segment.len() as f64;
    let delta = config.delta;

    // zeros[r] = number of non-positive entries in values[..r]
    let mut zeros = Vec::with_capacity(values.len() + 1);
    zeros.push(0usize);
    for &v in values {
        let last = *zeros.last().unwrap();
        zeros.push(last + usize::from(!(v > 0.0)));
    }
    if zeros[values.len()] == values.len() {
        return None;
    }

    let mut order: Vec<usize> = (0..values.len()).filter(|&r| values[r] > 0.0).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    order.into_iter().map(|r| s + r).find(|&b| {
        let admissible = match config.balance {
            Balance::Fixed(c) => {
                let left = (b - s + 1) as f64 / n;
                let right = (e - b) as f64 / n;
                left.max(right) <= c
            }
            Balance::MinDistance => existing.iter().all(|&eta| b.abs_diff(eta) >= delta),
        };
        if !admissible {
            return false;
        }
        let lo = b.saturating_sub(delta).max(s) - s;
        let hi = (b + delta).min(e - 1) - s;
        zeros[hi + 1] == zeros[lo]
    })
}

/// Statistic of every active sequence at split `b` of `segment`.
fn values_at<P: PanelSource + ?Sized>(
    panel: &P,
    config: &SbsConfig,
    segment: Segment,
    b: usize,
) -> Vec<(usize, f64)> {
    let indices: Vec<usize> = (0..panel.dim()).filter(|&k| config.active(k)).collect();
    indices
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut y = Vec::with_capacity(segment.len());
            let mut prefix = Vec::with_capacity(segment.len() + 1);
            chunk
                .iter()
                .map(|&k| {
                    panel.fill(k, segment, &mut y);
                    if y.iter().all(|&v| v == y[0]) {
                        return (k, 0.0);
                    }
                    prefix_sums_into(&y, &mut prefix);
                    (k, value_at(&prefix, b - segment.start()))
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Run the recursive segmentation on the whole panel.
///
/// Segments are visited depth-first, left child first. Under
/// [`Balance::MinDistance`] a candidate is compared with every estimate found
/// earlier in that traversal.
pub fn sbs_segment<P: PanelSource + ?Sized>(
    panel: &P,
    config: &SbsConfig,
) -> Result<ChangePointSet> {
    let d = panel.dim();
    config.validate(d)?;
    let len = panel.len();
    let mut result = ChangePointSet::empty(len, d, config.rule);
    if len < config.min_segment || len < 2 {
        result.diagnostics.push(format!(
            "panel length {len} is below the minimum segment length {}; nothing searched",
            config.min_segment
        ));
        return Ok(result);
    }

    let root = Segment::full(len)?;
    let mut stack = vec![(root, 1usize)];
    let mut found: Vec<usize> = Vec::new();
    while let Some((segment, level)) = stack.pop() {
        let scan = scan_segment(panel, config, segment);
        if level == 1 {
            if let Some(k) = scan
                .totals
                .iter()
                .position(|t| matches!(t, Some(v) if *v <= 0.0))
            {
                return Err(Error::DegenerateSequence { sequence: k });
            }
        }
        let Some(b) = find_in(&scan.gated, segment, &found, config) else {
            continue;
        };
        let passing = values_at(panel, config, segment, b)
            .into_iter()
            .filter(|&(k, v)| v > config.thresholds[k])
            .map(|(k, _)| k)
            .collect();
        result.points.push(ChangePoint {
            location: b,
            level,
            segment,
            value: scan.agg.at(b),
            passing_sequences: passing,
            scale: None,
            cluster: Vec::new(),
        });
        found.push(b);

        let right = Segment::new(b + 1, segment.end()).ok();
        let left = Segment::new(segment.start(), b).ok();
        for child in [right, left].into_iter().flatten() {
            if child.len() >= config.min_segment {
                stack.push((child, level + 1));
            }
        }
    }
    result.sort();
    Ok(result)
}

/// Best margin `max_k (stat_k - pi_k)` of the estimate `b` on `segment`.
fn margin<P: PanelSource + ?Sized>(
    panel: &P,
    config: &SbsConfig,
    segment: Segment,
    b: usize,
) -> f64 {
    values_at(panel, config, segment, b)
        .into_iter()
        .map(|(k, v)| v - config.thresholds[k])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Within-scale pruning: estimate `q` survives iff some sequence's statistic at
/// `q`, computed on the interval from just after its left neighbour to its
/// right neighbour, exceeds that sequence's threshold. Failing estimates are
/// removed one at a time, smallest margin first, re-testing the neighbours of
/// each removal.
pub fn post_process_within<P: PanelSource + ?Sized>(
    panel: &P,
    cps: &ChangePointSet,
    config: &SbsConfig,
) -> Result<ChangePointSet> {
    config.validate(panel.dim())?;
    let mut out = cps.clone();
    out.sort();
    let len = panel.len();
    if out.points.is_empty() {
        return Ok(out);
    }
    if out.points.last().unwrap().location + 1 >= len {
        return Err(Error::Shape(
            "change-point location outside the panel".into(),
        ));
    }

    let bounds = |pts: &[ChangePoint], q: usize| -> (usize, usize) {
        let s = if q == 0 { 0 } else { pts[q - 1].location + 1 };
        let e = if q + 1 == pts.len() {
            len - 1
        } else {
            pts[q + 1].location
        };
        (s, e)
    };

    let mut margins: Vec<Option<f64>> = vec![None; out.points.len()];
    loop {
        for q in 0..out.points.len() {
            if margins[q].is_none() {
                let (s, e) = bounds(&out.points, q);
                let b = out.points[q].location;
                let m = match Segment::new(s, e) {
                    Ok(seg) if seg.is_split(b) => margin(panel, config, seg, b),
                    _ => f64::NEG_INFINITY,
                };
                margins[q] = Some(m);
            }
        }
        let worst = margins
            .iter()
            .enumerate()
            .map(|(q, m)| (q, m.unwrap()))
            .filter(|&(_, m)| m <= 0.0)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let Some((q, _)) = worst else { break };
        out.points.remove(q);
        margins.remove(q);
        if q > 0 {
            margins[q - 1] = None;
        }
        if q < margins.len() {
            margins[q] = None;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn step_panel(d: usize, len: usize, at: usize, lo: f64, hi: f64) -> DensePanel {
        let row: Vec<f64> = (0..len).map(|t| if t <= at { lo } else { hi }).collect();
        DensePanel::new(vec![row; d]).unwrap()
    }

    fn noisy_panel(seed: u64, d: usize, len: usize, steps: &[(usize, usize, f64)]) -> DensePanel {
        // steps: (sequence, location, post-change mean)
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..d)
            .map(|k| {
                (0..len)
                    .map(|t| {
                        let mut sigma = 1.0;
                        for &(kk, at, level) in steps {
                            if kk == k && t > at {
                                sigma = level;
                            }
                        }
                        let z: f64 = rng.sample(StandardNormal);
                        sigma * z * z
                    })
                    .collect()
            })
            .collect();
        DensePanel::new(rows).unwrap()
    }

    fn agg_with(values: Vec<f64>, s: usize) -> AggregatedCurve {
        let n = values.len();
        AggregatedCurve {
            segment: Segment::new(s, s + n).unwrap(),
            contributing_counts: values.iter().map(|&v| usize::from(v > 0.0)).collect(),
            max_source: vec![0; n],
            values,
            rule: Aggregation::Thr,
        }
    }

    #[test]
    fn constant_panel_has_no_change_points() {
        let panel = DensePanel::new(vec![vec![5.0; 300], vec![1.0; 300], vec![0.2; 300]]).unwrap();
        let out = sbs_segment(&panel, &SbsConfig::new(vec![0.5; 3], 8)).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn deterministic_step_is_found_exactly() {
        let panel = step_panel(1, 1024, 511, 1.0, 4.0);
        let out = sbs_segment(&panel, &SbsConfig::new(vec![0.1], 16)).unwrap();
        assert_eq!(out.locations(), vec![511]);
        let p = &out.points[0];
        assert_eq!(p.level, 1);
        assert_eq!(p.segment, Segment::new(0, 1023).unwrap());
        assert_eq!(p.passing_sequences, vec![0]);

        // brute-force maximisation of the statistic agrees
        let y = panel.row(0);
        let best = (0..1023)
            .max_by(|&a, &b| stat(y, a).total_cmp(&stat(y, b)).then(b.cmp(&a)))
            .unwrap();
        assert_eq!(best, 511);
    }

    fn stat(y: &[f64], b: usize) -> f64 {
        let n = y.len() as f64;
        let l: f64 = y[..=b].iter().sum();
        let r: f64 = y[b + 1..].iter().sum();
        let nl = (b + 1) as f64;
        let nr = n - nl;
        ((nr / (n * nl)).sqrt() * l - (nl / (n * nr)).sqrt() * r).abs() / ((l + r) / n)
    }

    #[test]
    fn candidate_search_examples() {
        let config = SbsConfig::new(vec![1.0], 2);
        assert_eq!(
            find_candidate(&agg_with(vec![0.0; 50], 0), &[], &config),
            None
        );

        let mut spike = vec![0.0; 50];
        spike[20] = 3.0;
        assert_eq!(find_candidate(&agg_with(spike, 0), &[], &config), None);

        let config = SbsConfig::new(vec![1.0], 10);
        let plateau: Vec<f64> = (0..400)
            .map(|b| {
                if (100..=200).contains(&b) {
                    10.0 - (b as f64 - 150.0).abs() / 100.0
                } else {
                    0.0
                }
            })
            .collect();
        assert_eq!(
            find_candidate(&agg_with(plateau.clone(), 0), &[], &config),
            Some(150)
        );
        // an existing estimate too close pushes the choice to the nearest admissible peak
        assert_eq!(
            find_candidate(&agg_with(plateau, 0), &[145], &config),
            Some(155)
        );
    }

    #[test]
    fn candidate_neighbourhood_is_clipped_to_segment() {
        let config = SbsConfig::new(vec![1.0], 5);
        let mut v = vec![1.0; 30];
        v[0] = 9.0;
        assert_eq!(find_candidate(&agg_with(v, 10), &[], &config), Some(10));
    }

    #[test]
    fn fixed_balance_excludes_edges() {
        let config = SbsConfig::new(vec![1.0], 1).with_balance(Balance::Fixed(0.75));
        let mut v = vec![1.0; 99];
        v[2] = 50.0;
        v[60] = 5.0;
        // n = 100; b = 2 is too unbalanced
        assert_eq!(find_candidate(&agg_with(v, 0), &[], &config), Some(60));
    }

    #[test]
    fn ties_prefer_smaller_index() {
        let config = SbsConfig::new(vec![1.0], 1);
        assert_eq!(
            find_candidate(&agg_with(vec![1.0, 2.0, 1.0, 2.0, 1.0], 0), &[], &config),
            Some(1)
        );
    }

    #[test]
    fn post_processing_examples() {
        let panel = step_panel(1, 1024, 511, 1.0, 4.0);
        let config = SbsConfig::new(vec![1.0], 16);
        let empty = ChangePointSet::empty(1024, 1, Aggregation::Thr);
        assert!(post_process_within(&panel, &empty, &config)
            .unwrap()
            .is_empty());

        let found = sbs_segment(&panel, &config).unwrap();
        let kept = post_process_within(&panel, &found, &config).unwrap();
        assert_eq!(kept.locations(), vec![511]);

        let panel = step_panel(2, 1024, 300, 1.0, 4.0);
        let config = SbsConfig::new(vec![1.0, 1.0], 2);
        let mut cps = ChangePointSet::empty(1024, 2, Aggregation::Thr);
        for loc in [300, 305] {
            cps.points.push(ChangePoint {
                location: loc,
                level: 1,
                segment: Segment::new(0, 1023).unwrap(),
                value: 1.0,
                passing_sequences: vec![],
                scale: None,
                cluster: vec![],
            });
        }
        assert_eq!(
            post_process_within(&panel, &cps, &config)
                .unwrap()
                .locations(),
            vec![300]
        );
    }

    #[test]
    fn short_panel_returns_diagnostic() {
        let panel = DensePanel::new(vec![vec![1.0; 10]]).unwrap();
        let out = sbs_segment(&panel, &SbsConfig::new(vec![1.0], 5)).unwrap();
        assert!(out.is_empty());
        assert_eq!(out.diagnostics.len(), 1);
    }

    #[test]
    fn degenerate_sequence_is_named() {
        let mut rows = vec![vec![1.0; 100]; 3];
        rows[2] = vec![0.0; 100];
        let panel = DensePanel::new(rows).unwrap();
        match sbs_segment(&panel, &SbsConfig::new(vec![1.0; 3], 4)) {
            Err(Error::DegenerateSequence { sequence }) => assert_eq!(sequence, 2),
            other => panic!("unexpected {other:?}"),
        }
        // disabled sequences are skipped
        let config = SbsConfig::new(vec![1.0, 1.0, f64::INFINITY], 4);
        assert!(sbs_segment(&panel, &config).unwrap().is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(SbsConfig::new(vec![1.0], 0).validate(1).is_err());
        assert!(SbsConfig::new(vec![0.0], 3).validate(1).is_err());
        assert!(SbsConfig::new(vec![1.0], 3).validate(2).is_err());
        assert!(SbsConfig::new(vec![1.0], 3)
            .with_min_segment(7)
            .validate(1)
            .is_err());
        assert!(SbsConfig::new(vec![1.0], 3)
            .with_balance(Balance::Fixed(1.0))
            .validate(1)
            .is_err());
        assert!(SbsConfig::new(vec![1.0], 3)
            .with_balance(Balance::Fixed(0.5))
            .validate(1)
            .is_ok());
    }

    #[test]
    fn multiple_noisy_steps() {
        let steps = [(0, 300, 4.0), (1, 300, 4.0), (2, 700, 0.2), (3, 700, 0.2)];
        let panel = noisy_panel(7, 10, 1024, &steps);
        let config = SbsConfig::new(vec![6.0; 10], 16);
        let out = sbs_segment(&panel, &config).unwrap();
        let out = post_process_within(&panel, &out, &config).unwrap();
        let locs = out.locations();
        assert_eq!(locs.len(), 2, "{locs:?}");
        assert!(
            locs[0].abs_diff(300) <= 16 && locs[1].abs_diff(700) <= 16,
            "{locs:?}"
        );
    }

    #[test]
    fn min_distance_spacing_and_partition() {
        for seed in 0..8 {
            let steps: Vec<(usize, usize, f64)> = (0..6)
                .map(|k| (k, 100 + 120 * k + seed as usize, 3.0))
                .collect();
            let panel = noisy_panel(seed, 6, 900, &steps);
            let config = SbsConfig::new(vec![2.0; 6], 12);
            let out = sbs_segment(&panel, &config).unwrap();
            let locs = out.locations();
            for w in locs.windows(2) {
                assert!(w[1] - w[0] >= config.delta);
            }
            for p in &out.points {
                assert!(p.segment.is_split(p.location));
            }
        }
    }

    /// First split equals an independently coded thresholded-sum argmax.
    #[test]
    fn first_split_matches_brute_force() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let len = rng.random_range(60..=256);
            let d = rng.random_range(1..6);
            let at = rng.random_range(10..len - 10);
            let steps: Vec<(usize, usize, f64)> = (0..d)
                .filter(|k| k % 2 == 0)
                .map(|k| (k, at, 3.0))
                .collect();
            let panel = noisy_panel(seed, d, len, &steps);
            let pis: Vec<f64> = (0..d).map(|_| rng.random_range(1.0..3.0)).collect();
            let delta = 3;
            let config = SbsConfig::new(pis.clone(), delta);

            let mut agg = vec![0.0; len - 1];
            for k in 0..d {
                let y = panel.row(k);
                for b in 0..len - 1 {
                    let v = stat(y, b);
                    if v > pis[k] {
                        agg[b] += v;
                    }
                }
            }
            let mut expected = None;
            let mut best = 0.0;
            for b in 0..len - 1 {
                let lo = b.saturating_sub(delta);
                let hi = (b + delta).min(len - 2);
                if agg[lo..=hi].iter().all(|&v| v > 0.0) && agg[b] > best {
                    best = agg[b];
                    expected = Some(b);
                }
            }
            let out = sbs_segment(&panel, &config).unwrap();
            let first = out.points.iter().find(|p| p.level == 1).map(|p| p.location);
            assert_eq!(first, expected, "seed {seed}");
        }
    }

    #[test]
    fn raising_thresholds_never_adds_points() {
        for seed in 0..10u64 {
            let steps = [(0, 200, 3.0), (1, 200, 3.0), (2, 500, 0.3), (3, 650, 2.5)];
            let panel = noisy_panel(50 + seed, 8, 800, &steps);
            let mut last = usize::MAX;
            for pi in [1.0, 2.0, 3.0, 4.0, 6.0, 10.0] {
                let n = sbs_segment(&panel, &SbsConfig::new(vec![pi; 8], 10))
                    .unwrap()
                    .len();
                assert!(n <= last, "seed {seed}: {n} > {last} at pi={pi}");
                last = n;
            }
        }
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let steps = [(0, 200, 3.0), (5, 500, 0.3), (40, 650, 2.5)];
        let panel = noisy_panel(3, 70, 800, &steps);
        for rule in [Aggregation::Thr, Aggregation::Avg, Aggregation::Max] {
            let config = SbsConfig::new(vec![2.5; 70], 10).with_rule(rule);
            let run = |threads| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .unwrap()
                    .install(|| sbs_segment(&panel, &config).unwrap())
            };
            let a = run(1);
            assert_eq!(a, run(3));
            assert_eq!(a, run(1));
        }
    }

    #[test]
    fn json_round_trip() {
        let panel = step_panel(2, 256, 100, 1.0, 4.0);
        let out = sbs_segment(&panel, &SbsConfig::new(vec![1.0, 1.0], 4)).unwrap();
        let json = out.to_json().unwrap();
        assert!(json.contains("\"T\": 256"));
        assert!(json.contains("\"segment\": [\n"));
        assert_eq!(ChangePointSet::from_json(&json).unwrap(), out);
    }
}
