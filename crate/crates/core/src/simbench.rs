//! Simulation models with known change-points, evaluation against the truth,
//! and the benchmark table harness.
//!
//! Throughout, a change-point `c` is the last index of the old regime: the
//! new parameters apply from index `c + 1` on.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cusum::Aggregation;
use crate::error::{Error, Result};
use crate::mvts::{calibrate_lenient, default_spacing, sbs_mvts_with, MvtsConfig};
use crate::sbs::DensePanel;
use crate::series::MultivariateSeries;

const M1_CHANGES: [usize; 3] = [341, 614, 838];
const M3_CHANGE: usize = 512;
const M4_CHANGE: usize = 100;
const FACTORS: usize = 5;
/// Correlation between neighbouring innovations in the correlated block.
const BLOCK_CORRELATION: f64 = -0.95;
/// Innovation standard deviation in the M1/M2 families (variance 4).
const INNOVATION_SD: f64 = 2.0;
/// Redraws allowed when an M3 draw has no matching moving average.
const M3_RETRIES: usize = 1000;
/// Ranges of the autoregressive regime drawn for M3 change series.
const M3_COEF: (f64, f64) = (-0.5, 0.5);
const M3_SCALE: (f64, f64) = (1.0, 2.0);

/// Generated component paths and, per change-point, the series that change.
type Rows = (Vec<Vec<f64>>, Vec<Vec<usize>>);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    #[serde(rename = "M1.1")]
    M1_1,
    #[serde(rename = "M1.2")]
    M1_2,
    #[serde(rename = "M2.1")]
    M2_1,
    #[serde(rename = "M2.2")]
    M2_2,
    M3,
    M4,
    A,
    B,
    #[serde(rename = "null")]
    Null,
}

impl Model {
    pub const ALL: [Model; 9] = [
        Model::M1_1,
        Model::M1_2,
        Model::M2_1,
        Model::M2_2,
        Model::M3,
        Model::M4,
        Model::A,
        Model::B,
        Model::Null,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Model::M1_1 => "M1.1",
            Model::M1_2 => "M1.2",
            Model::M2_1 => "M2.1",
            Model::M2_2 => "M2.2",
            Model::M3 => "M3",
            Model::M4 => "M4",
            Model::A => "A",
            Model::B => "B",
            Model::Null => "null",
        }
    }

    /// Change-points of the model at length `len`.
    pub fn truth(&self, len: usize) -> Vec<usize> {
        match self {
            Model::M1_1 | Model::M1_2 | Model::M2_1 | Model::M2_2 => M1_CHANGES.to_vec(),
            Model::M3 => vec![M3_CHANGE],
            Model::M4 | Model::B => vec![M4_CHANGE],
            Model::A => vec![len / 2],
            Model::Null => Vec::new(),
        }
    }

    fn uses_rho(&self) -> bool {
        !matches!(self, Model::A | Model::B | Model::Null)
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Model::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: Model,
    pub p: usize,
    #[serde(rename = "T")]
    pub len: usize,
    /// Fraction of series carrying changes.
    pub rho: f64,
    pub seed: u64,
    /// Spread each series' change uniformly over a window of `floor(2 ln T)`.
    #[serde(default)]
    pub jitter: bool,
}

impl ModelSpec {
    pub fn new(model: Model, p: usize, len: usize, rho: f64, seed: u64) -> Self {
        Self {
            model,
            p,
            len,
            rho,
            seed,
            jitter: false,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// Number of series with changes, `floor(rho p)`.
    pub fn changing(&self) -> usize {
        (self.rho * self.p as f64 + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.len < 128 {
            return Err(Error::Config(format!("T = {} is below 128", self.len)));
        }
        if self.p == 0 {
            return Err(Error::Config("p must be positive".into()));
        }
        if self.model.uses_rho() {
            if !(self.rho > 0.0 && self.rho <= 1.0) {
                return Err(Error::Config(format!("rho {} outside (0, 1]", self.rho)));
            }
            if self.changing() < 1 {
                return Err(Error::Config(format!(
                    "floor(rho p) = 0 for rho {} and p {}",
                    self.rho, self.p
                )));
            }
        }
        if matches!(self.model, Model::A | Model::B) && self.p < 2 {
            return Err(Error::Config(format!("model {} needs p >= 2", self.model)));
        }
        if let Some(&last) = self.model.truth(self.len).last() {
            if last + 2 + self.jitter_window() >= self.len {
                return Err(Error::Config(format!(
                    "T = {} too short for the change at {last}",
                    self.len
                )));
            }
        }
        Ok(())
    }

    /// Jitter window length, zero when jitter is off.
    pub fn jitter_window(&self) -> usize {
        if self.jitter {
            (2.0 * (self.len as f64).ln()).floor() as usize
        } else {
            0
        }
    }
}

/// Simulated data with the indices of the series that change at each
/// change-point.
#[derive(Clone, Debug)]
pub struct Generated {
    pub series: MultivariateSeries,
    pub changed: Vec<Vec<usize>>,
}

/// Simulate one data set with truth metadata.
pub fn generate(spec: &ModelSpec) -> Result<MultivariateSeries> {
    Ok(generate_with_provenance(spec)?.series)
}

pub fn generate_with_provenance(spec: &ModelSpec) -> Result<Generated> {
    spec.validate()?;
    let mut g = Gen {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
    };
    let (rows, changed) = match spec.model {
        Model::M1_1 => g.m1_1(),
        Model::M1_2 => g.m1_2(),
        Model::M2_1 => g.m2(true),
        Model::M2_2 => g.m2(false),
        Model::M3 => g.m3()?,
        Model::M4 => g.m4(),
        Model::A => g.example_a(),
        Model::B => g.example_b(),
        Model::Null => (g.null(), Vec::new()),
    };
    let series = MultivariateSeries::new(rows)?.with_truth(spec.model.truth(spec.len))?;
    Ok(Generated { series, changed })
}

/// `(coefficient, innovation scale)` of an AR(1) regime.
type Ar = (f64, f64);

/// AR(1) path through consecutive regimes `(start, params)`. Each regime's
/// values come from its own stationary filter run over the whole innovation
/// history `e`, so every segment has exactly its regime's second-order
/// structure from its first index on, with no transient at the change.
fn regime_path(e: &[f64], regimes: &[(usize, Ar)]) -> Vec<f64> {
    let mut x = vec![0.0; e.len()];
    for (r, &(start, (a, s))) in regimes.iter().enumerate() {
        let end = regimes.get(r + 1).map_or(e.len(), |next| next.0);
        let mut prev = e[0] / (1.0 - a * a).sqrt();
        if start == 0 {
            x[0] = s * prev;
        }
        for t in 1..end {
            prev = a * prev + e[t];
            if t >= start {
                x[t] = s * prev;
            }
        }
    }
    x
}

/// Population variance and lag-1, lag-2 autocorrelations of
/// `e_t + b1 e_{t-1} + b2 e_{t-2}` with unit innovations.
pub fn ma2_moments(b1: f64, b2: f64) -> (f64, f64, f64) {
    let v = 1.0 + b1 * b1 + b2 * b2;
    (v, (b1 + b1 * b2) / v, b2 / v)
}

/// Population variance and lag-1, lag-2 autocorrelations of a stationary
/// AR(1) with coefficient `a` and innovation sd `s`.
pub fn ar1_moments(a: f64, s: f64) -> (f64, f64, f64) {
    (s * s / (1.0 - a * a), a, a * a)
}

/// Moving-average coefficients with the variance and lag-1 autocorrelation
/// of the AR(1) `(a, s)`, choosing among the solutions the one whose lag-2
/// autocorrelation differs most from the AR's. `None` if there is none.
pub fn matching_ma2(a: f64, s: f64) -> Option<(f64, f64)> {
    let (v, rho1, rho2) = ar1_moments(a, s);
    if v <= 1.0 {
        return None;
    }
    let r = (v - 1.0).sqrt();
    let target = rho1 * v;
    // b1 (1 + b2) = target and b1^2 + b2^2 = v - 1
    let f = |b2: f64| target * target / ((1.0 + b2) * (1.0 + b2)) + b2 * b2 - (v - 1.0);
    let steps = 4000;
    let grid: Vec<f64> = (0..=steps)
        .map(|i| -r + 2.0 * r * i as f64 / steps as f64)
        .collect();
    let mut best: Option<(f64, f64, f64)> = None;
    for w in grid.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        if (lo + 1.0) * (hi + 1.0) <= 0.0 {
            continue;
        }
        let (flo, fhi) = (f(lo), f(hi));
        if !(flo.is_finite() && fhi.is_finite()) || flo * fhi > 0.0 {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let b2 = 0.5 * (lo + hi);
        let b1 = target / (1.0 + b2);
        let (mv, m1, m2) = ma2_moments(b1, b2);
        if (mv / v - 1.0).abs() > 1e-9 || (m1 - rho1).abs() > 1e-9 {
            continue;
        }
        let gap = (m2 - rho2).abs();
        if best.is_none_or(|(_, _, g)| gap > g) {
            best = Some((b1, b2, gap));
        }
    }
    best.map(|(b1, b2, _)| (b1, b2))
}

struct Gen<'a> {
    spec: &'a ModelSpec,
    rng: ChaCha8Rng,
}

impl Gen<'_> {
    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    fn white(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.normal()).collect()
    }

    /// Distinct random indices of `0..p`, sorted.
    fn choose(&mut self, p: usize, k: usize) -> Vec<usize> {
        let mut v = sample(&mut self.rng, p, k).into_vec();
        v.sort_unstable();
        v
    }

    /// Start of the new regime for a change at `c`, per series.
    fn starts(&mut self, c: usize) -> Vec<usize> {
        let w = self.spec.jitter_window();
        (0..self.spec.p)
            .map(|_| {
                if w == 0 {
                    c + 1
                } else {
                    c + 1 - w / 2 + self.rng.random_range(0..w)
                }
            })
            .collect()
    }

    /// `(alpha, sigma)` as drawn in the M1 family.
    fn m1_params(&mut self) -> Ar {
        (self.uniform(-0.5, 0.999), self.uniform(0.5, 2.0))
    }

    /// Innovations with variance 4 whose first `p/2` coordinates have
    /// correlation `(-0.95)^{|j-l|}`; one row per time point.
    fn block_innovations(&mut self) -> Vec<Vec<f64>> {
        let (p, len) = (self.spec.p, self.spec.len);
        let half = p / 2;
        let tail = (1.0 - BLOCK_CORRELATION * BLOCK_CORRELATION).sqrt();
        (0..len)
            .map(|_| {
                let mut e = Vec::with_capacity(p);
                for j in 0..p {
                    let z = self.normal();
                    let v = if j > 0 && j < half {
                        BLOCK_CORRELATION * e[j - 1] + tail * z
                    } else {
                        z
                    };
                    e.push(v);
                }
                e.iter().map(|v| INNOVATION_SD * v).collect()
            })
            .collect()
    }

    /// Per-segment coordinate swaps for the M1.2/M2.2 family: segment 0 keeps
    /// the identity; every later segment swaps `floor(rho p / 2)` random
    /// coordinates with as many others.
    fn swaps(&mut self) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let p = self.spec.p;
        let m = ((self.spec.rho * p as f64 / 2.0 + 1e-9).floor() as usize).clamp(1, p / 2);
        let mut perms = vec![(0..p).collect::<Vec<_>>()];
        let mut changed = Vec::new();
        for _ in M1_CHANGES {
            let picked = sample(&mut self.rng, p, 2 * m).into_vec();
            let mut perm: Vec<usize> = (0..p).collect();
            for i in 0..m {
                perm.swap(picked[i], picked[m + i]);
            }
            let mut set = picked;
            set.sort_unstable();
            changed.push(set);
            perms.push(perm);
        }
        (perms, changed)
    }

    /// Segment index of every series at every time, `[j][t]`.
    fn segment_index(&mut self, changes: &[usize]) -> Vec<Vec<usize>> {
        let (p, len) = (self.spec.p, self.spec.len);
        let starts: Vec<Vec<usize>> = changes.iter().map(|&c| self.starts(c)).collect();
        (0..p)
            .map(|j| {
                (0..len)
                    .map(|t| starts.iter().filter(|s| s[j] <= t).count())
                    .collect()
            })
            .collect()
    }

    fn m1_1(&mut self) -> Rows {
        let (p, len) = (self.spec.p, self.spec.len);
        let mut regimes: Vec<Vec<(usize, Ar)>> =
            (0..p).map(|_| vec![(0, self.m1_params())]).collect();
        let mut changed = Vec::new();
        for &c in &M1_CHANGES {
            let set = self.choose(p, self.spec.changing());
            let at = self.starts(c);
            for &j in &set {
                let params = self.m1_params();
                regimes[j].push((at[j], params));
            }
            changed.push(set);
        }
        let rows = regimes
            .iter()
            .map(|reg| {
                let e: Vec<f64> = self
                    .white(len)
                    .into_iter()
                    .map(|v| INNOVATION_SD * v)
                    .collect();
                regime_path(&e, reg)
            })
            .collect();
        (rows, changed)
    }

    fn m1_2(&mut self) -> Rows {
        let (p, len) = (self.spec.p, self.spec.len);
        let params: Vec<Ar> = (0..p).map(|_| self.m1_params()).collect();
        let e = self.block_innovations();
        let (perms, changed) = self.swaps();
        let seg = self.segment_index(&M1_CHANGES);
        let rows = (0..p)
            .map(|j| {
                let ej: Vec<f64> = (0..len).map(|t| e[t][perms[seg[j][t]][j]]).collect();
                regime_path(&ej, &[(0, params[j])])
            })
            .collect();
        (rows, changed)
    }

    fn m2(&mut self, loadings_change: bool) -> Rows {
        let (p, len) = (self.spec.p, self.spec.len);
        let factors: Vec<Vec<f64>> = (0..FACTORS)
            .map(|_| {
                let params = self.m1_params();
                let e: Vec<f64> = self
                    .white(len)
                    .into_iter()
                    .map(|v| INNOVATION_SD * v)
                    .collect();
                regime_path(&e, &[(0, params)])
            })
            .collect();
        // loading regimes per row: (start, row)
        let mut loadings: Vec<Vec<(usize, [f64; FACTORS])>> = (0..p)
            .map(|_| {
                let mut row = [0.0; FACTORS];
                for v in &mut row {
                    *v = self.uniform(0.5, 1.5);
                }
                vec![(0, row)]
            })
            .collect();
        let e = self.block_innovations();
        let mut changed = Vec::new();
        let (perms, seg) = if loadings_change {
            for &c in &M1_CHANGES {
                let set = self.choose(p, self.spec.changing());
                let at = self.starts(c);
                for &j in &set {
                    let mut row = [0.0; FACTORS];
                    for v in &mut row {
                        *v = self.normal();
                    }
                    loadings[j].push((at[j], row));
                }
                changed.push(set);
            }
            (vec![(0..p).collect::<Vec<_>>()], vec![vec![0; len]; p])
        } else {
            let (perms, sets) = self.swaps();
            changed = sets;
            let seg = self.segment_index(&M1_CHANGES);
            (perms, seg)
        };
        let rows = (0..p)
            .map(|j| {
                let mut r = 0;
                (0..len)
                    .map(|t| {
                        while r + 1 < loadings[j].len() && loadings[j][r + 1].0 <= t {
                            r += 1;
                        }
                        let row = &loadings[j][r].1;
                        let common: f64 = (0..FACTORS).map(|f| row[f] * factors[f][t]).sum();
                        common + e[t][perms[seg[j][t]][j]]
                    })
                    .collect()
            })
            .collect();
        (rows, changed)
    }

    /// Draw `(alpha, sigma)` and the matching MA(2), redrawing when none exists.
    fn m3_params(&mut self) -> Result<(Ar, (f64, f64))> {
        for _ in 0..M3_RETRIES {
            let a = self.uniform(M3_COEF.0, M3_COEF.1);
            let s = self.uniform(M3_SCALE.0, M3_SCALE.1);
            if let Some(ma) = matching_ma2(a, s) {
                return Ok(((a, s), ma));
            }
        }
        Err(Error::Generator(format!(
            "no matching moving average after {M3_RETRIES} draws"
        )))
    }

    fn m3(&mut self) -> Result<Rows> {
        let (p, len) = (self.spec.p, self.spec.len);
        let k = self.spec.changing();
        let at = self.starts(M3_CHANGE);
        let mut rows = Vec::with_capacity(p);
        for j in 0..p {
            if j < k {
                let ((a, s), (b1, b2)) = self.m3_params()?;
                let e = self.white(len + 2);
                let mut x = Vec::with_capacity(len);
                for t in 0..len {
                    let v = if t < at[j] {
                        e[t + 2] + b1 * e[t + 1] + b2 * e[t]
                    } else {
                        a * x[t - 1] + s * e[t + 2]
                    };
                    x.push(v);
                }
                rows.push(x);
            } else {
                let a = self.uniform(-0.5, 0.999);
                let e = self.white(len);
                rows.push(regime_path(&e, &[(0, (a, 1.0))]));
            }
        }
        Ok((rows, vec![(0..k).collect()]))
    }

    fn m4(&mut self) -> Rows {
        let (p, len) = (self.spec.p, self.spec.len);
        let k = self.spec.changing();
        let at = self.starts(M4_CHANGE);
        let rows = (0..p)
            .map(|j| {
                let e = self.white(len);
                if j < k {
                    let a = self.uniform(0.5, 0.59);
                    let b = self.uniform(-0.79, -0.5);
                    regime_path(&e, &[(0, (a, 1.0)), (at[j], (b, 1.0))])
                } else {
                    let b = self.uniform(-0.79, -0.5);
                    regime_path(&e, &[(0, (b, 1.0))])
                }
            })
            .collect();
        (rows, vec![(0..k).collect()])
    }

    fn example_a(&mut self) -> Rows {
        let (p, len) = (self.spec.p, self.spec.len);
        let at = self.starts(len / 2);
        let rows = (0..p)
            .map(|j| {
                let e = self.white(len);
                if j == 1 {
                    regime_path(&e, &[(0, (0.95, 1.0)), (at[j], (0.3, 1.0))])
                } else {
                    let a = self.uniform(0.5, 0.99);
                    regime_path(&e, &[(0, (a, 1.0))])
                }
            })
            .collect();
        (rows, vec![vec![1]])
    }

    fn example_b(&mut self) -> Rows {
        let (p, len) = (self.spec.p, self.spec.len);
        let first = p / 2;
        let at = self.starts(M4_CHANGE);
        let rows = (0..p)
            .map(|j| {
                let e = self.white(len);
                if j >= first {
                    regime_path(&e, &[(0, (0.3, 1.0)), (at[j], (-0.75, 1.0))])
                } else {
                    let a = self.uniform(0.5, 0.99);
                    regime_path(&e, &[(0, (a, 1.0))])
                }
            })
            .collect();
        (rows, vec![(first..p).collect()])
    }

    fn null(&mut self) -> Vec<Vec<f64>> {
        let (p, len) = (self.spec.p, self.spec.len);
        (0..p)
            .map(|_| {
                let params = self.m1_params();
                let e: Vec<f64> = self
                    .white(len)
                    .into_iter()
                    .map(|v| INNOVATION_SD * v)
                    .collect();
                regime_path(&e, &[(0, params)])
            })
            .collect()
    }
}

/// Squared scaled differences `(x_t - x_{t-1})^2 / 2`, `t = 1..T`, of every
/// component: panel index `u` is time `u + 1`.
pub fn difference_panel(x: &MultivariateSeries) -> Result<DensePanel> {
    DensePanel::new(
        x.components()
            .map(|c| c.windows(2).map(|w| 0.5 * (w[1] - w[0]).powi(2)).collect())
            .collect(),
    )
}

/// Outcome of one run against the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_hat: usize,
    /// Whether each true change-point was matched within the tolerance.
    pub detected: Vec<bool>,
    /// Distance to the matched estimate, per true change-point.
    pub errors: Vec<Option<usize>>,
}

impl EvalReport {
    pub fn detected_count(&self) -> usize {
        self.detected.iter().filter(|&&d| d).count()
    }
}

/// Match estimates to truths one-to-one, closest pairs first (ties to the
/// earlier truth, then the earlier estimate).
pub fn evaluate(estimates: &[usize], truth: &[usize], tolerance: usize) -> EvalReport {
    let mut pairs: Vec<(usize, usize, usize)> = truth
        .iter()
        .enumerate()
        .flat_map(|(q, &c)| {
            estimates
                .iter()
                .enumerate()
                .map(move |(r, &e)| (c.abs_diff(e), q, r))
        })
        .collect();
    pairs.sort_unstable();
    let mut errors = vec![None; truth.len()];
    let mut used = vec![false; estimates.len()];
    for (dist, q, r) in pairs {
        if errors[q].is_none() && !used[r] {
            errors[q] = Some(dist);
            used[r] = true;
        }
    }
    EvalReport {
        n_hat: estimates.len(),
        detected: errors
            .iter()
            .map(|e| matches!(e, Some(d) if *d <= tolerance))
            .collect(),
        errors,
    }
}

/// One table row: a model cell under one aggregation rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub model: Model,
    pub rho: f64,
    pub p: usize,
    #[serde(rename = "T")]
    pub len: usize,
    pub rule: Aggregation,
    pub mean_nhat: f64,
    pub sd_nhat: f64,
    /// Detection percentage per true change-point.
    pub det_pct: Vec<f64>,
    pub reps: usize,
    pub seed0: u64,
    /// Per-run reports, in replicate order.
    #[serde(skip)]
    pub runs: Vec<EvalReport>,
}

/// Run the detector under each rule on `reps` data sets with seeds
/// `spec.seed, spec.seed + 1, ...`. Thresholds are calibrated once per data
/// set and shared by the rules.
pub fn run_benchmark(
    spec: &ModelSpec,
    rules: &[Aggregation],
    reps: usize,
    cfg: &MvtsConfig,
) -> Result<Vec<BenchRow>> {
    if reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    if rules.is_empty() {
        return Err(Error::Config("no rules given".into()));
    }
    spec.validate()?;
    let truth = spec.model.truth(spec.len);
    let tolerance = default_spacing(spec.len);
    let depth = cfg.depth(spec.len)?;
    let mut runs: Vec<Vec<EvalReport>> = vec![Vec::with_capacity(reps); rules.len()];
    for r in 0..reps {
        let seed = spec.seed.wrapping_add(r as u64);
        let x = generate(&spec.with_seed(seed))?;
        let mut run_cfg = cfg.clone();
        run_cfg.calibration.seed = seed;
        let table = calibrate_lenient(&x, depth, &run_cfg.calibration)?;
        for (i, &rule) in rules.iter().enumerate() {
            run_cfg.rule = rule;
            let out = sbs_mvts_with(&x, &run_cfg, table.clone())?;
            runs[i].push(evaluate(&out.merged.locations(), &truth, tolerance));
        }
    }
    Ok(rules
        .iter()
        .zip(runs)
        .map(|(&rule, runs)| summarize(spec, rule, truth.len(), runs))
        .collect())
}

fn summarize(
    spec: &ModelSpec,
    rule: Aggregation,
    truths: usize,
    runs: Vec<EvalReport>,
) -> BenchRow {
    let n = runs.len() as f64;
    let counts: Vec<f64> = runs.iter().map(|r| r.n_hat as f64).collect();
    let mean = counts.iter().sum::<f64>() / n;
    let sd = if runs.len() > 1 {
        (counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let det_pct = (0..truths)
        .map(|q| 100.0 * runs.iter().filter(|r| r.detected[q]).count() as f64 / n)
        .collect();
    BenchRow {
        model: spec.model,
        rho: spec.rho,
        p: spec.p,
        len: spec.len,
        rule,
        mean_nhat: mean,
        sd_nhat: sd,
        det_pct,
        reps: runs.len(),
        seed0: spec.seed,
        runs,
    }
}

/// CSV with columns `model,rho,p,T,rule,mean_nhat,sd_nhat,det_pct_1..k,reps,seed0`.
pub fn write_bench_csv<W: Write>(rows: &[BenchRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let k = rows.iter().map(|r| r.det_pct.len()).max().unwrap_or(0);
    let mut header: Vec<String> = ["model", "rho", "p", "T", "rule", "mean_nhat", "sd_nhat"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=k).map(|q| format!("det_pct_{q}")));
    header.extend(["reps".to_string(), "seed0".to_string()]);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.model.to_string(),
            r.rho.to_string(),
            r.p.to_string(),
            r.len.to_string(),
            r.rule.to_string(),
            format!("{:.4}", r.mean_nhat),
            format!("{:.4}", r.sd_nhat),
        ];
        rec.extend((0..k).map(|q| {
            r.det_pct
                .get(q)
                .map_or(String::new(), |v| format!("{v:.1}"))
        }));
        rec.extend([r.reps.to_string(), r.seed0.to_string()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width table in the layout of the paper's result tables.
pub fn format_bench_table(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let k = rows.iter().map(|r| r.det_pct.len()).max().unwrap_or(0);
    out.push_str(&format!(
        "{:<6} {:>5} {:>4} {:>6} {:<4} {:>7} {:>7}",
        "model", "rho", "p", "T", "rule", "mean", "sd"
    ));
    for q in 1..=k {
        out.push_str(&format!(" {:>7}", format!("cp{q}%")));
    }
    out.push_str(&format!(" {:>5}\n", "reps"));
    for r in rows {
        out.push_str(&format!(
            "{:<6} {:>5} {:>4} {:>6} {:<4} {:>7.2} {:>7.2}",
            r.model.as_str(),
            r.rho,
            r.p,
            r.len,
            r.rule.as_str(),
            r.mean_nhat,
            r.sd_nhat
        ));
        for q in 0..k {
            match r.det_pct.get(q) {
                Some(v) => out.push_str(&format!(" {v:>7.0}")),
                None => out.push_str(&format!(" {:>7}", "-")),
            }
        }
        out.push_str(&format!(" {:>5}\n", r.reps));
    }
    out
}
