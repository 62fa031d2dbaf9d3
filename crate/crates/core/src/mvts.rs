//! Change-point detection for multivariate series: per-scale segmentation of
//! periodogram panels with thresholds calibrated by AR(1) null simulation,
//! followed by merging across scales.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cusum::{Aggregation, Segment};
use crate::error::{Error, Result};
use crate::sbs::{
    post_process_within, sbs_segment, Balance, ChangePoint, ChangePointSet, ClusterMember,
    SbsConfig,
};
use crate::series::MultivariateSeries;
use crate::wavelet::{haar_filter, CrossSign, PeriodogramPanel, Scale};

/// Replicate indices occupy the low bits of an RNG stream id.
const REP_BITS: u32 = 24;
const MAX_REPS: usize = 1 << REP_BITS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    /// Exponent of the threshold rate `T^gamma`.
    pub gamma: f64,
    /// Quantile level for `kappa`.
    pub quantile: f64,
    /// Null replications.
    pub reps: usize,
    /// Bound on the fitted AR coefficient.
    pub clamp: f64,
    /// Fitted coefficients are rounded to this grid; sequences sharing a
    /// grid value share their null replicates.
    pub coefficient_step: f64,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            gamma: 0.499,
            quantile: 0.99,
            reps: 1000,
            clamp: 0.99,
            coefficient_step: 0.01,
            seed: 0,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "gamma {} outside (0, 1)",
                self.gamma
            )));
        }
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return Err(Error::Config(format!(
                "quantile {} outside (0, 1]",
                self.quantile
            )));
        }
        if self.reps == 0 || self.reps > MAX_REPS {
            return Err(Error::Config(format!(
                "null replications {} outside 1..={MAX_REPS}",
                self.reps
            )));
        }
        if !(self.coefficient_step >= 1e-10 && self.coefficient_step <= 0.1) {
            return Err(Error::Config(format!(
                "coefficient step {} outside [1e-10, 0.1]",
                self.coefficient_step
            )));
        }
        if !(self.clamp > 0.0 && self.clamp < 1.0) {
            return Err(Error::Config(format!(
                "clamp {} outside (0, 1)",
                self.clamp
            )));
        }
        if self.reps < 20 {
            log::warn!(
                "only {} null replications; quantiles will be unstable",
                self.reps
            );
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MvtsConfig {
    /// Scale-depth constant: scales `-1 ..= -floor(alpha ln ln T)` are used.
    pub alpha: f64,
    /// Minimum spacing within a scale; `None` means `floor(sqrt(T) / 2)`.
    pub delta: Option<usize>,
    /// Across-scale cluster diameter; `None` means `floor(sqrt(T) / 2)`.
    pub lambda: Option<usize>,
    pub rule: Aggregation,
    pub calibration: CalibrationConfig,
}

impl Default for MvtsConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            delta: None,
            lambda: None,
            rule: Aggregation::Thr,
            calibration: CalibrationConfig::default(),
        }
    }
}

impl MvtsConfig {
    /// Number of scales used at length `len`, i.e. `-I*_T`.
    pub fn depth(&self, len: usize) -> Result<usize> {
        let d = if len > 2 {
            (self.alpha * (len as f64).ln().ln()).floor()
        } else {
            0.0
        };
        if d < 1.0 {
            return Err(Error::Config(format!(
                "no scales available at length {len} with alpha {}",
                self.alpha
            )));
        }
        Ok(d as usize)
    }

    pub fn delta_for(&self, len: usize) -> usize {
        self.delta.unwrap_or_else(|| default_spacing(len))
    }

    pub fn lambda_for(&self, len: usize) -> usize {
        self.lambda.unwrap_or_else(|| default_spacing(len))
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!(
                "alpha {} must be positive",
                self.alpha
            )));
        }
        if self.delta_for(len) < 1 || self.lambda_for(len) < 1 {
            return Err(Error::Config("delta and lambda must be at least 1".into()));
        }
        self.calibration.validate()
    }
}

/// `floor(sqrt(T) / 2)`.
pub fn default_spacing(len: usize) -> usize {
    ((len as f64).sqrt() / 2.0).floor() as usize
}

/// Lag-one sample autocorrelation, clamped to `[-clamp, clamp]`.
pub fn fit_ar1(x: &[f64], clamp: f64) -> Result<f64> {
    if x.len() < 3 {
        return Err(Error::Shape(format!(
            "need at least 3 points, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let denom: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if !(denom > 0.0) {
        return Err(Error::DegenerateSeries {
            what: "series".into(),
        });
    }
    let num: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    Ok((num / denom).clamp(-clamp, clamp))
}

/// Stationary AR(1) path with unit innovations.
fn ar1_path(coef: f64, len: usize, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
    out.clear();
    let z: f64 = rng.sample(StandardNormal);
    let mut x = z / (1.0 - coef * coef).sqrt();
    out.push(x);
    for _ in 1..len {
        let e: f64 = rng.sample(StandardNormal);
        x = coef * x + e;
        out.push(x);
    }
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Calibrated threshold of one panel sequence at one scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub j: usize,
    pub l: usize,
    pub scale: Scale,
    pub kappa: f64,
    pub pi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdTable {
    pub entries: Vec<ThresholdEntry>,
}

impl ThresholdTable {
    /// Thresholds at `scale` in panel order `pairs`.
    pub fn for_scale(&self, scale: Scale, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        let index: HashMap<(usize, usize), f64> = self
            .entries
            .iter()
            .filter(|e| e.scale == scale)
            .map(|e| ((e.j, e.l), e.pi))
            .collect();
        pairs
            .iter()
            .map(|&(j, l)| {
                index.get(&(j, l)).copied().ok_or_else(|| {
                    Error::Shape(format!("no threshold for ({j}, {l}) at scale {scale}"))
                })
            })
            .collect()
    }

    pub fn scales(&self) -> Vec<Scale> {
        let mut s: Vec<Scale> = self.entries.iter().map(|e| e.scale).collect();
        s.sort_by(|a, b| b.cmp(a));
        s.dedup();
        s
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let entries = rdr
            .deserialize()
            .collect::<Result<Vec<ThresholdEntry>, _>>()?;
        if entries.iter().any(|e| !(e.pi > 0.0)) {
            return Err(Error::Parse("thresholds must be positive".into()));
        }
        Ok(Self { entries })
    }
}

/// Grid index of a fitted AR coefficient, `None` for a degenerate series.
type GridPoint = Option<i64>;

/// Per-sequence, per-scale thresholds for the scales `-1..=-depth`.
pub fn calibrate_thresholds(
    x: &MultivariateSeries,
    depth: usize,
    cfg: &CalibrationConfig,
) -> Result<ThresholdTable> {
    calibrate(x, depth, cfg, true)
}

/// As [`calibrate_thresholds`], but degenerate sequences get an infinite
/// threshold instead of an error.
pub fn calibrate_lenient(
    x: &MultivariateSeries,
    depth: usize,
    cfg: &CalibrationConfig,
) -> Result<ThresholdTable> {
    calibrate(x, depth, cfg, false)
}

fn calibrate(
    x: &MultivariateSeries,
    depth: usize,
    cfg: &CalibrationConfig,
    strict: bool,
) -> Result<ThresholdTable> {
    cfg.validate()?;
    let len = x.len();
    let p = x.dim();
    if depth == 0 || len < (1 << depth) + 1 {
        return Err(Error::Config(format!(
            "length {len} too short for {depth} scales"
        )));
    }
    let scales: Vec<Scale> = Scale::range(depth).collect();
    let step = cfg.coefficient_step;
    let fit = |series: &[f64], what: String| -> Result<GridPoint> {
        match fit_ar1(series, cfg.clamp) {
            Ok(a) => Ok(Some(grid_index(a, step))),
            Err(Error::DegenerateSeries { .. }) if !strict => Ok(None),
            Err(Error::DegenerateSeries { .. }) => Err(Error::DegenerateSeries { what }),
            Err(e) => Err(e),
        }
    };

    let mut pairs: Vec<(usize, usize)> = (0..p).map(|j| (j, j)).collect();
    for j in 0..p {
        for l in j + 1..p {
            pairs.push((j, l));
        }
    }

    // coefficients per scale, to pick the cross sign
    let coeffs: Vec<Vec<Vec<f64>>> = scales
        .iter()
        .map(|s| {
            (0..p)
                .map(|j| haar_filter(x.component(j), s.depth()))
                .collect()
        })
        .collect();

    // grid[m][k]: null law feeding sequence k at scale m
    let mut grid: Vec<Vec<GridPoint>> = vec![Vec::with_capacity(pairs.len()); depth];
    for &(j, l) in &pairs {
        if j == l {
            let g = fit(x.component(j), format!("component {j}"))?;
            grid.iter_mut().for_each(|row| row.push(g));
            continue;
        }
        let mut fitted: [Option<GridPoint>; 2] = [None, None];
        for (m, row) in grid.iter_mut().enumerate() {
            let sign = CrossSign::of(&coeffs[m][j], &coeffs[m][l]).sign;
            let variant = usize::from(sign < 0);
            let g = match fitted[variant] {
                Some(g) => g,
                None => {
                    let s = if variant == 0 { 1.0 } else { -1.0 };
                    let diff: Vec<f64> = x
                        .component(j)
                        .iter()
                        .zip(x.component(l))
                        .map(|(a, b)| a - s * b)
                        .collect();
                    let g = fit(&diff, format!("pair ({j}, {l})"))?;
                    fitted[variant] = Some(g);
                    g
                }
            };
            row.push(g);
        }
    }

    let mut points: Vec<i64> = grid.iter().flatten().flatten().copied().collect();
    points.sort_unstable();
    points.dedup();
    let weights: Vec<Vec<f64>> = scales
        .iter()
        .map(|s| cusum_weights(len + 1 - s.support()))
        .collect();
    // one work item per (grid point, replicate); each yields J at every scale
    let items: Vec<(i64, usize)> = points
        .iter()
        .flat_map(|&g| (0..cfg.reps).map(move |m| (g, m)))
        .collect();
    let stats: Vec<Vec<f64>> = items
        .par_iter()
        .map_init(NullScratch::default, |scratch, &(g, m)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(null_stream(g, m));
            scratch.run(g as f64 * step, len, &scales, &weights, &mut rng)
        })
        .collect();

    let rate = (len as f64).powf(cfg.gamma);
    let mut kappas: HashMap<(i64, usize), f64> = HashMap::new();
    for (i, &g) in points.iter().enumerate() {
        let block = &stats[i * cfg.reps..(i + 1) * cfg.reps];
        for m in 0..depth {
            let scaled: Vec<f64> = block.iter().map(|row| row[m] / rate).collect();
            kappas.insert((g, m), quantile(&scaled, cfg.quantile));
        }
    }

    let mut entries = Vec::with_capacity(pairs.len() * depth);
    for (m, &s) in scales.iter().enumerate() {
        for (k, &(j, l)) in pairs.iter().enumerate() {
            let (kappa, pi) = match grid[m][k] {
                Some(g) => {
                    let kappa = kappas[&(g, m)];
                    (kappa, kappa * rate)
                }
                None => (f64::INFINITY, f64::INFINITY),
            };
            entries.push(ThresholdEntry {
                j,
                l,
                scale: s,
                kappa,
                pi,
            });
        }
    }
    Ok(ThresholdTable { entries })
}

#[derive(Default)]
struct NullScratch {
    path: Vec<f64>,
    /// Prefix sums of the path, `sums[t] = x[0] + ... + x[t-1]`.
    sums: Vec<f64>,
}

fn grid_index(a: f64, step: f64) -> i64 {
    (a / step).round() as i64
}

/// RNG stream of replicate `m` of the null law at grid index `g`.
fn null_stream(g: i64, m: usize) -> u64 {
    // zig-zag so that negative indices stay distinct
    let key = ((g << 1) ^ (g >> 63)) as u64;
    (key << REP_BITS) | m as u64
}

/// CUSUM weights `1 / sqrt(n m (n - m))`, `m = 1..n`, for a periodogram of
/// `n` values.
fn cusum_weights(n: usize) -> Vec<f64> {
    let nf = n as f64;
    (1..n)
        .map(|m| {
            let m = m as f64;
            1.0 / (nf * m * (nf - m)).sqrt()
        })
        .collect()
}

impl NullScratch {
    /// Maximum of the normalised CUSUM of the null periodogram at each scale.
    ///
    /// The Haar amplitude is dropped: the statistic does not depend on it.
    fn run(
        &mut self,
        coef: f64,
        len: usize,
        scales: &[Scale],
        weights: &[Vec<f64>],
        rng: &mut ChaCha8Rng,
    ) -> Vec<f64> {
        ar1_path(coef, len, rng, &mut self.path);
        self.sums.clear();
        self.sums.push(0.0);
        let mut acc = 0.0;
        for &v in &self.path {
            acc += v;
            self.sums.push(acc);
        }
        let sums = &self.sums;
        scales
            .iter()
            .map(|s| {
                let support = s.support();
                let half = support / 2;
                let n = len + 1 - support;
                let weights = &weights[s.depth() - 1];
                // coefficient ending at t, minus its predecessor's block
                let coef_at = |t: usize| sums[t + 1] - 2.0 * sums[t + 1 - half] + sums[t + 1 - support];
                let total: f64 = (support - 1..len).map(|t| coef_at(t).powi(2)).sum();
                if total <= 0.0 {
                    return 0.0;
                }
                let nf = n as f64;
                let mut left = 0.0;
                let mut best = 0.0f64;
                for (r, w) in weights.iter().enumerate() {
                    left += coef_at(support - 1 + r).powi(2);
                    let contrast = nf * left - (r + 1) as f64 * total;
                    best = best.max(contrast.abs() * w);
                }
                best * nf / total
            })
            .collect()
    }
}

/// Full output of [`sbs_mvts`].
#[derive(Clone, Debug)]
pub struct MvtsOutput {
    pub merged: ChangePointSet,
    /// Estimates of each scale after within-scale pruning, in series time.
    pub per_scale: Vec<(Scale, ChangePointSet)>,
    pub thresholds: ThresholdTable,
}

/// Detect change-points in the second-order structure of `x`.
pub fn sbs_mvts(x: &MultivariateSeries, cfg: &MvtsConfig) -> Result<MvtsOutput> {
    let depth = cfg.depth(x.len())?;
    cfg.validate(x.len())?;
    check_length(x.len(), depth, cfg)?;
    let thresholds = calibrate_lenient(x, depth, &cfg.calibration)?;
    sbs_mvts_with(x, cfg, thresholds)
}

/// As [`sbs_mvts`] with precomputed thresholds.
pub fn sbs_mvts_with(
    x: &MultivariateSeries,
    cfg: &MvtsConfig,
    thresholds: ThresholdTable,
) -> Result<MvtsOutput> {
    let len = x.len();
    let depth = cfg.depth(len)?;
    cfg.validate(len)?;
    check_length(len, depth, cfg)?;
    let delta = cfg.delta_for(len);
    let mut per_scale = Vec::with_capacity(depth);
    for scale in Scale::range(depth) {
        let panel = PeriodogramPanel::new(x, scale)?;
        let pis = thresholds.for_scale(scale, panel.pairs())?;
        let config = SbsConfig::new(pis, delta)
            .with_rule(cfg.rule)
            .with_balance(Balance::MinDistance);
        let found = sbs_segment(&panel, &config)?;
        let mut kept = post_process_within(&panel, &found, &config)?;
        let warnings = panel.sign_warnings().len();
        if warnings > 0 {
            kept.diagnostics.push(format!(
                "{warnings} cross signs fell back to +1 at scale {scale}"
            ));
        }
        per_scale.push((scale, to_series_time(kept, &panel, len)));
    }
    let mut merged = across_scale_merge(&per_scale, cfg.lambda_for(len));
    merged.len = len;
    merged.d = x.dim() * (x.dim() + 1) / 2;
    merged.rule = cfg.rule;
    Ok(MvtsOutput {
        merged,
        per_scale,
        thresholds,
    })
}

fn check_length(len: usize, depth: usize, cfg: &MvtsConfig) -> Result<()> {
    let need = (1usize << depth).max(2 * cfg.delta_for(len) + 2);
    if len < need {
        return Err(Error::Config(format!(
            "length {len} is below the minimum {need}"
        )));
    }
    Ok(())
}

fn to_series_time(mut set: ChangePointSet, panel: &PeriodogramPanel, len: usize) -> ChangePointSet {
    let offset = panel.offset();
    for p in &mut set.points {
        p.location += offset;
        p.segment = Segment::new(p.segment.start() + offset, p.segment.end() + offset)
            .expect("shifted segment");
        p.scale = Some(panel.scale().index());
    }
    set.len = len;
    set
}

/// Pool per-scale estimates into clusters and keep one representative each.
///
/// Points are taken in location order; a cluster grows while its diameter
/// stays within `lambda`. The representative is the point from the finest
/// scale, then the larger statistic, then the smaller location.
pub fn across_scale_merge(per_scale: &[(Scale, ChangePointSet)], lambda: usize) -> ChangePointSet {
    let Some((_, first)) = per_scale.first() else {
        return ChangePointSet::empty(0, 0, Aggregation::Thr);
    };
    let mut out = ChangePointSet::empty(first.len, first.d, first.rule);
    let mut pool: Vec<(Scale, &ChangePoint)> = per_scale
        .iter()
        .flat_map(|(s, set)| set.points.iter().map(move |p| (*s, p)))
        .collect();
    pool.sort_by(|a, b| a.1.location.cmp(&b.1.location).then(b.0.cmp(&a.0)));

    let mut clusters: Vec<Vec<(Scale, &ChangePoint)>> = Vec::new();
    for item in pool {
        match clusters.last_mut() {
            Some(c) if item.1.location - c[0].1.location <= lambda => c.push(item),
            _ => clusters.push(vec![item]),
        }
    }
    for cluster in clusters {
        let (scale, rep) = *cluster
            .iter()
            .max_by(|a, b| {
                a.0.cmp(&b.0)
                    .then(a.1.value.total_cmp(&b.1.value))
                    .then(b.1.location.cmp(&a.1.location))
            })
            .unwrap();
        let mut point = rep.clone();
        point.scale = Some(scale.index());
        point.cluster = if cluster.len() > 1 {
            cluster
                .iter()
                .map(|(s, p)| ClusterMember {
                    location: p.location,
                    scale: s.index(),
                    value: p.value,
                })
                .collect()
        } else {
            Vec::new()
        };
        out.points.push(point);
    }
    out.points.sort_by_key(|p| p.location);
    for (_, set) in per_scale {
        out.diagnostics.extend(set.diagnostics.iter().cloned());
    }
    out
}
