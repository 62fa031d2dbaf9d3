//! Multivariate locally stationary wavelet processes: specification,
//! simulation and the spectral quantities they imply.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::MultivariateSeries;
use crate::wavelet::{autocorr_wavelet, haar_filter, InnerProductMatrix, Scale, MAX_TRUNCATION};

/// Innovation positions drawn from one RNG substream.
const BLOCK: usize = 4096;

/// Largest tolerated negative eigenvalue of a correlation piece.
const PSD_TOLERANCE: f64 = 1e-10;

/// Step function on `[0, 1]`: `values[r]` holds from `breaks[r-1]` (inclusive)
/// up to `breaks[r]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstant {
    #[serde(default)]
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn constant(value: f64) -> Self {
        Self {
            breaks: Vec::new(),
            values: vec![value],
        }
    }

    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let f = Self { breaks, values };
        f.validate()?;
        Ok(f)
    }

    fn validate(&self) -> Result<()> {
        if self.values.len() != self.breaks.len() + 1 {
            return Err(Error::Config(format!(
                "{} breaks need {} values, got {}",
                self.breaks.len(),
                self.breaks.len() + 1,
                self.values.len()
            )));
        }
        if self.breaks.iter().any(|&z| !(z > 0.0 && z < 1.0)) {
            return Err(Error::Config(
                "breaks must lie strictly inside (0, 1)".into(),
            ));
        }
        if self.breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("breaks must be strictly increasing".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("piece values must be finite".into()));
        }
        Ok(())
    }

    /// Index of the piece containing `z`.
    pub fn piece(&self, z: f64) -> usize {
        self.breaks.partition_point(|&b| b <= z)
    }

    pub fn at(&self, z: f64) -> f64 {
        self.values[self.piece(z)]
    }
}

/// Transfer function `W_i^(j)` of one component at one scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub scale: Scale,
    pub component: usize,
    #[serde(flatten)]
    pub function: PiecewiseConstant,
}

/// Innovation correlation `Sigma_i^(j,l)` of a pair at one scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub scale: Scale,
    pub pair: [usize; 2],
    #[serde(flatten)]
    pub function: PiecewiseConstant,
}

/// Declarative process description. Transfer functions not listed are zero;
/// correlations not listed are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LswSpec {
    pub p: usize,
    /// Deepest scale used, `I`.
    pub truncation: usize,
    /// Declared constant `C` in `|W_i| <= C 2^{i/2}`, checked when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<f64>,
    #[serde(default)]
    pub transfer: Vec<Transfer>,
    #[serde(default)]
    pub correlation: Vec<Correlation>,
}

impl LswSpec {
    /// Independent components with `S_i = 2^i` at every scale, i.e. white
    /// noise up to truncation.
    pub fn white_noise(p: usize, truncation: usize) -> Self {
        let transfer = Scale::range(truncation)
            .flat_map(|scale| {
                (0..p).map(move |component| Transfer {
                    scale,
                    component,
                    function: PiecewiseConstant::constant(
                        (0.5f64).powf(scale.depth() as f64 / 2.0),
                    ),
                })
            })
            .collect();
        Self {
            p,
            truncation,
            envelope: None,
            transfer,
            correlation: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::Config("p must be positive".into()));
        }
        if !(1..=MAX_TRUNCATION).contains(&self.truncation) {
            return Err(Error::Config(format!(
                "truncation {} outside 1..={MAX_TRUNCATION}",
                self.truncation
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &self.transfer {
            t.function.validate()?;
            self.check_scale(t.scale)?;
            if t.component >= self.p {
                return Err(Error::Config(format!(
                    "component {} >= p = {}",
                    t.component, self.p
                )));
            }
            if !seen.insert((t.scale, t.component, t.component)) {
                return Err(Error::Config(format!(
                    "duplicate transfer for ({}, {})",
                    t.scale, t.component
                )));
            }
            if let Some(c) = self.envelope {
                let bound = c * 0.5f64.powf(t.scale.depth() as f64 / 2.0);
                if let Some(v) = t
                    .function
                    .values
                    .iter()
                    .find(|v| v.abs() > bound * (1.0 + 1e-12))
                {
                    return Err(Error::Config(format!(
                        "|W| = {} exceeds the envelope {bound} at scale {} component {}",
                        v.abs(),
                        t.scale,
                        t.component
                    )));
                }
            }
        }
        for c in &self.correlation {
            c.function.validate()?;
            self.check_scale(c.scale)?;
            let [j, l] = c.pair;
            if j >= l || l >= self.p {
                return Err(Error::Config(format!(
                    "pair ({j}, {l}) must satisfy j < l < p"
                )));
            }
            if !seen.insert((c.scale, j, l)) {
                return Err(Error::Config(format!(
                    "duplicate correlation for ({}, {j}, {l})",
                    c.scale
                )));
            }
            if c.function.values.iter().any(|v| v.abs() > 1.0) {
                return Err(Error::Config(format!(
                    "correlation of ({j}, {l}) outside [-1, 1]"
                )));
            }
        }
        for scale in Scale::range(self.truncation) {
            for (piece, z) in self.correlation_pieces(scale).into_iter().enumerate() {
                let min = SymmetricEigen::new(self.correlation_matrix(scale, z))
                    .eigenvalues
                    .min();
                if min < -PSD_TOLERANCE {
                    return Err(Error::NotPsd {
                        scale: scale.index(),
                        piece,
                        min_eigenvalue: min,
                    });
                }
            }
        }
        Ok(())
    }

    fn check_scale(&self, scale: Scale) -> Result<()> {
        if scale.depth() > self.truncation {
            return Err(Error::Config(format!(
                "scale {scale} below truncation -{}",
                self.truncation
            )));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// `W_i^(j)(z)`.
    pub fn transfer_at(&self, scale: Scale, j: usize, z: f64) -> f64 {
        self.transfer
            .iter()
            .find(|t| t.scale == scale && t.component == j)
            .map_or(0.0, |t| t.function.at(z))
    }

    /// `Sigma_i^(j,l)(z)`, with unit diagonal.
    pub fn correlation_at(&self, scale: Scale, j: usize, l: usize, z: f64) -> f64 {
        if j == l {
            return 1.0;
        }
        let key = [j.min(l), j.max(l)];
        self.correlation
            .iter()
            .find(|c| c.scale == scale && c.pair == key)
            .map_or(0.0, |c| c.function.at(z))
    }

    /// Spectrum `S_i^(j,l)(z) = W_i^(j) W_i^(l) Sigma_i^(j,l)`; on the diagonal
    /// this is `(W_i^(j))^2`.
    pub fn spectrum(&self, scale: Scale, j: usize, l: usize, z: f64) -> f64 {
        self.transfer_at(scale, j, z)
            * self.transfer_at(scale, l, z)
            * self.correlation_at(scale, j, l, z)
    }

    fn correlation_matrix(&self, scale: Scale, z: f64) -> DMatrix<f64> {
        let mut m = DMatrix::identity(self.p, self.p);
        for c in self.correlation.iter().filter(|c| c.scale == scale) {
            let v = c.function.at(z);
            let [j, l] = c.pair;
            m[(j, l)] = v;
            m[(l, j)] = v;
        }
        m
    }

    /// A representative `z` of each constant piece of `Sigma_i(z)`.
    fn correlation_pieces(&self, scale: Scale) -> Vec<f64> {
        let mut breaks: Vec<f64> = self
            .correlation
            .iter()
            .filter(|c| c.scale == scale)
            .flat_map(|c| c.function.breaks.iter().copied())
            .collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        std::iter::once(0.0).chain(breaks).collect()
    }

    /// Every distinct break point of any transfer or correlation function.
    pub fn breaks(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self
            .transfer
            .iter()
            .map(|t| &t.function)
            .chain(self.correlation.iter().map(|c| &c.function))
            .flat_map(|f| f.breaks.iter().copied())
            .collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }

    /// Change-point locations at length `len`: a break at `z` ends the old
    /// regime at `ceil(z T) - 1`.
    pub fn truth(&self, len: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .breaks()
            .into_iter()
            .map(|z| ((z * len as f64).ceil() as usize).saturating_sub(1))
            .filter(|&t| t > 0 && t + 1 < len)
            .collect();
        out.dedup();
        out
    }
}

/// Draw a realisation of length `len`.
///
/// Each scale's innovations come from ChaCha substreams keyed by
/// `(scale, block)` and the scale contributions are added in order, so the
/// output depends on `seed` only.
pub fn simulate(spec: &LswSpec, len: usize, seed: u64) -> Result<MultivariateSeries> {
    spec.validate()?;
    if len < (1usize << spec.truncation) {
        return Err(Error::Config(format!(
            "length {len} is below 2^{} required by the truncation",
            spec.truncation
        )));
    }
    let p = spec.p;
    let contributions: Vec<Vec<Vec<f64>>> = Scale::range(spec.truncation)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|scale| scale_contribution(spec, scale, len, seed))
        .collect::<Result<_>>()?;
    let mut x = vec![vec![0.0; len]; p];
    for scale_part in contributions {
        for (xj, part) in x.iter_mut().zip(scale_part) {
            if part.is_empty() {
                continue;
            }
            for (a, b) in xj.iter_mut().zip(part) {
                *a += b;
            }
        }
    }
    MultivariateSeries::new(x)?.with_truth(spec.truth(len))
}

fn scale_contribution(
    spec: &LswSpec,
    scale: Scale,
    len: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let p = spec.p;
    let support = scale.support();
    // positions k = -L+1 .. T-1, stored at q = k + L - 1
    let count = len + support - 1;
    let z_of = |q: usize| ((q as f64 - (support - 1) as f64) / len as f64).max(0.0);

    let active: Vec<bool> = (0..p)
        .map(|j| {
            spec.transfer.iter().any(|t| {
                t.scale == scale && t.component == j && t.function.values.iter().any(|&v| v != 0.0)
            })
        })
        .collect();
    if !active.iter().any(|&a| a) {
        return Ok(vec![Vec::new(); p]);
    }

    let pieces = spec.correlation_pieces(scale);
    let factors: Vec<Option<DMatrix<f64>>> = pieces
        .iter()
        .enumerate()
        .map(|(piece, &z)| {
            let m = spec.correlation_matrix(scale, z);
            if m == DMatrix::identity(p, p) {
                return Ok(None);
            }
            let eig = SymmetricEigen::new(m);
            let min = eig.eigenvalues.min();
            if min < -PSD_TOLERANCE {
                return Err(Error::NotPsd {
                    scale: scale.index(),
                    piece,
                    min_eigenvalue: min,
                });
            }
            let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            Ok(Some(&eig.eigenvectors * DMatrix::from_diagonal(&roots)))
        })
        .collect::<Result<_>>()?;
    let piece_breaks: Vec<f64> = pieces[1..].to_vec();

    let transfer: Vec<Option<&PiecewiseConstant>> = (0..p)
        .map(|j| {
            spec.transfer
                .iter()
                .find(|t| t.scale == scale && t.component == j)
                .map(|t| &t.function)
        })
        .collect();

    // weighted innovations a_k^(j) = W(k/T) xi_k^(j), component-major
    let blocks: Vec<Vec<f64>> = (0..count.div_ceil(BLOCK))
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((scale.depth() as u64) << 32) | block as u64);
            let start = block * BLOCK;
            let end = (start + BLOCK).min(count);
            let mut out = vec![0.0; (end - start) * p];
            let mut z = vec![0.0; p];
            for q in start..end {
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let zq = z_of(q);
                let factor = &factors[piece_breaks.partition_point(|&b| b <= zq)];
                for j in 0..p {
                    let Some(w) = transfer[j] else { continue };
                    let xi = match factor {
                        None => z[j],
                        Some(f) => (0..p).map(|c| f[(j, c)] * z[c]).sum(),
                    };
                    out[(q - start) * p + j] = w.at(zq) * xi;
                }
            }
            out
        })
        .collect();

    Ok((0..p)
        .map(|j| {
            if !active[j] {
                return Vec::new();
            }
            let a: Vec<f64> = blocks
                .iter()
                .flat_map(|b| b.iter().skip(j).step_by(p).copied())
                .collect();
            haar_filter(&a, scale.depth())
        })
        .collect())
}

/// Local (cross-)autocovariance `c^(j,l)(z, tau) = sum_i S_i^(j,l)(z) Psi_i(tau)`.
pub fn local_autocov(spec: &LswSpec, j: usize, l: usize, z: f64, tau: i64) -> f64 {
    Scale::range(spec.truncation)
        .map(|scale| spec.spectrum(scale, j, l, z) * autocorr_wavelet(scale, tau))
        .sum()
}

/// `beta_i^(j,l)(z) = sum_{i'} S_{i'}^(j,l)(z) A_{i,i'}`, the expectation of
/// the (raw cross-)periodogram away from breaks.
pub fn expected_periodogram(
    spec: &LswSpec,
    j: usize,
    l: usize,
    scale: Scale,
    z: f64,
) -> Result<f64> {
    let a = InnerProductMatrix::new(spec.truncation)?;
    expected_periodogram_with(spec, &a, j, l, scale, z)
}

/// As [`expected_periodogram`], reusing a precomputed matrix.
pub fn expected_periodogram_with(
    spec: &LswSpec,
    a: &InnerProductMatrix,
    j: usize,
    l: usize,
    scale: Scale,
    z: f64,
) -> Result<f64> {
    if a.truncation() < spec.truncation || scale.depth() > a.truncation() {
        return Err(Error::Shape(format!(
            "matrix truncation {} does not cover the spec (truncation {}) and scale {scale}",
            a.truncation(),
            spec.truncation
        )));
    }
    Ok(Scale::range(spec.truncation)
        .map(|other| spec.spectrum(other, j, l, z) * a.get(scale, other))
        .sum())
}
