//! Haar wavelet coefficients, (cross-)periodogram panels, autocorrelation
//! wavelets and the inner-product matrix between scales.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::sync::RwLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cusum::Segment;
use crate::error::{Error, Result};
use crate::sbs::PanelSource;
use crate::series::MultivariateSeries;

/// Deepest scale the inner-product matrix supports.
pub const MAX_TRUNCATION: usize = 20;

/// Wavelet family. Only Haar is implemented.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    #[default]
    Haar,
}

/// A wavelet scale `i <= -1`; `-1` is the finest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub struct Scale(i32);

impl Scale {
    pub const FINEST: Scale = Scale(-1);

    pub fn new(i: i32) -> Result<Self> {
        if (-30..=-1).contains(&i) {
            Ok(Self(i))
        } else {
            Err(Error::Config(format!("scale {i} outside -30..=-1")))
        }
    }

    /// Scale from its depth `1, 2, ...` (so depth 1 is scale -1).
    pub fn from_depth(depth: usize) -> Result<Self> {
        Self::new(-(depth as i32))
    }

    pub fn index(self) -> i32 {
        self.0
    }

    pub fn depth(self) -> usize {
        (-self.0) as usize
    }

    /// Haar support length `2^{-i}`.
    pub fn support(self) -> usize {
        1 << self.depth()
    }

    /// Scales `-1, -2, ..., -depth`.
    pub fn range(depth: usize) -> impl Iterator<Item = Scale> {
        (1..=depth).map(|m| Scale(-(m as i32)))
    }
}

impl From<Scale> for i32 {
    fn from(s: Scale) -> i32 {
        s.0
    }
}

impl TryFrom<i32> for Scale {
    type Error = Error;

    fn try_from(i: i32) -> Result<Self> {
        Scale::new(i)
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `2^{-depth/2}`.
fn amplitude(depth: usize) -> f64 {
    let even = 0.5f64.powi((depth / 2) as i32);
    if depth % 2 == 1 {
        even * std::f64::consts::FRAC_1_SQRT_2
    } else {
        even
    }
}

/// Haar filter at `depth` over every full window of `x`: output `u` covers
/// `x[u..u + L]` and equals `2^{-depth/2}` times (sum of the later half minus
/// sum of the earlier half). Built from dyadic block sums, so a constant
/// input gives exact zeros.
pub(crate) fn haar_filter(x: &[f64], depth: usize) -> Vec<f64> {
    let support = 1usize << depth;
    let n = x.len();
    if n < support {
        return Vec::new();
    }
    let half = support / 2;
    let mut blocks = x.to_vec();
    for r in 1..depth {
        let h = 1usize << (r - 1);
        for t in (h..n).rev() {
            blocks[t] += blocks[t - h];
        }
    }
    let a = amplitude(depth);
    (support - 1..n)
        .map(|t| a * (blocks[t] - blocks[t - half]))
        .collect()
}

/// Empirical Haar coefficients at one scale. Positions `t < L - 1` would need
/// samples before the start of the series and are masked out.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletCoeffs {
    pub scale: Scale,
    len: usize,
    values: Vec<f64>,
}

impl WaveletCoeffs {
    /// Length of the underlying series.
    pub fn series_len(&self) -> usize {
        self.len
    }

    /// First unmasked time index, `L - 1`.
    pub fn offset(&self) -> usize {
        self.scale.support() - 1
    }

    pub fn is_masked(&self, t: usize) -> bool {
        t < self.offset() || t >= self.len
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.len).map(|t| self.is_masked(t)).collect()
    }

    /// Coefficient at time `t`, `None` when masked.
    pub fn at(&self, t: usize) -> Option<f64> {
        (!self.is_masked(t)).then(|| self.values[t - self.offset()])
    }

    /// Unmasked coefficients, starting at time [`WaveletCoeffs::offset`].
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `w_{i,t} = sum_u x_u psi_{i,t-u}` at every `t` with full support.
pub fn haar_coefficients(x: &[f64], scale: Scale) -> Result<WaveletCoeffs> {
    if x.len() < scale.support() {
        return Err(Error::Shape(format!(
            "series of length {} is shorter than the support {} of scale {scale}",
            x.len(),
            scale.support()
        )));
    }
    if let Some(t) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Parse(format!("non-finite value at t = {t}")));
    }
    Ok(WaveletCoeffs {
        scale,
        len: x.len(),
        values: haar_filter(x, scale.depth()),
    })
}

/// Sign used to combine a pair in the cross periodogram.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CrossSign {
    /// `+1` or `-1`.
    pub sign: i8,
    /// The sample correlation was zero or undefined, so `+1` was used.
    pub fallback: bool,
}

impl CrossSign {
    pub(crate) fn of(a: &[f64], b: &[f64]) -> Self {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            let (dx, dy) = (x - ma, y - mb);
            sab += dx * dy;
            saa += dx * dx;
            sbb += dy * dy;
        }
        if saa == 0.0 || sbb == 0.0 || sab == 0.0 || !sab.is_finite() {
            Self {
                sign: 1,
                fallback: true,
            }
        } else {
            Self {
                sign: if sab > 0.0 { 1 } else { -1 },
                fallback: false,
            }
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.sign)
    }
}

/// Periodogram entries of all `p(p+1)/2` component pairs at one scale:
/// squared coefficients on the diagonal, then squared signed differences for
/// every pair `j < l`. Only unmasked time points are exposed, so panel index
/// `u` is series time `u + offset`.
#[derive(Debug)]
pub struct PeriodogramPanel {
    scale: Scale,
    p: usize,
    len: usize,
    /// Component-major unmasked coefficients.
    coeffs: Vec<f64>,
    pairs: Vec<(usize, usize)>,
    signs: RwLock<HashMap<(usize, Segment), CrossSign>>,
}

impl PeriodogramPanel {
    pub fn new(x: &MultivariateSeries, scale: Scale) -> Result<Self> {
        let p = x.dim();
        if x.len() < scale.support() {
            return Err(Error::Shape(format!(
                "series of length {} is shorter than the support {} of scale {scale}",
                x.len(),
                scale.support()
            )));
        }
        let rows: Vec<Vec<f64>> = (0..p)
            .into_par_iter()
            .map(|j| haar_filter(x.component(j), scale.depth()))
            .collect();
        let len = rows[0].len();
        let mut pairs: Vec<(usize, usize)> = (0..p).map(|j| (j, j)).collect();
        for j in 0..p {
            for l in j + 1..p {
                pairs.push((j, l));
            }
        }
        Ok(Self {
            scale,
            p,
            len,
            coeffs: rows.concat(),
            pairs,
            signs: RwLock::new(HashMap::new()),
        })
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    /// Series time of panel index 0.
    pub fn offset(&self) -> usize {
        self.scale.support() - 1
    }

    pub fn components(&self) -> usize {
        self.p
    }

    /// `(j, l)` of panel sequence `k`.
    pub fn pair(&self, k: usize) -> (usize, usize) {
        self.pairs[k]
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Panel sequence of the pair `(j, l)` in either order.
    pub fn index_of(&self, j: usize, l: usize) -> Option<usize> {
        let (j, l) = (j.min(l), j.max(l));
        if l >= self.p {
            return None;
        }
        if j == l {
            return Some(j);
        }
        // pairs (a, b) with a < j come first, each contributing p - 1 - a entries
        let before: usize = (0..j).map(|a| self.p - 1 - a).sum();
        Some(self.p + before + (l - j - 1))
    }

    /// Unmasked coefficients of component `j`.
    pub fn coefficients(&self, j: usize) -> &[f64] {
        &self.coeffs[j * self.len..(j + 1) * self.len]
    }

    /// Sign of the sample correlation of components `j` and `l` on a panel
    /// segment, cached per pair and segment.
    pub fn cross_sign(&self, k: usize, segment: Segment) -> CrossSign {
        if let Some(s) = self.signs.read().unwrap().get(&(k, segment)) {
            return *s;
        }
        let (j, l) = self.pairs[k];
        let range = segment.start()..segment.end() + 1;
        let s = CrossSign::of(
            &self.coefficients(j)[range.clone()],
            &self.coefficients(l)[range],
        );
        self.signs.write().unwrap().insert((k, segment), s);
        s
    }

    /// Cached `(pair, segment)` keys whose sign fell back to `+1`.
    pub fn sign_warnings(&self) -> Vec<(usize, Segment)> {
        let mut out: Vec<_> = self
            .signs
            .read()
            .unwrap()
            .iter()
            .filter(|(_, s)| s.fallback)
            .map(|(key, _)| *key)
            .collect();
        out.sort();
        out
    }

    /// Unsigned products `w_j w_l` over the whole panel.
    pub fn raw_cross(&self, j: usize, l: usize) -> Vec<f64> {
        self.coefficients(j)
            .iter()
            .zip(self.coefficients(l))
            .map(|(a, b)| a * b)
            .collect()
    }

    /// Panel entries of sequence `k` on the full panel length.
    pub fn entries(&self, k: usize) -> Vec<f64> {
        let mut out = Vec::new();
        if self.len >= 2 {
            self.fill(k, Segment::full(self.len).unwrap(), &mut out);
        } else {
            let (j, _) = self.pairs[k];
            out = self.coefficients(j).iter().map(|w| w * w).collect();
        }
        out
    }

    /// CSV with one row per unmasked time and one column per panel sequence,
    /// cross signs taken on the full panel.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend(
            self.pairs
                .iter()
                .map(|(j, l)| format!("j{j}_l{l}_i{}", self.scale)),
        );
        w.write_record(&header)?;
        let columns: Vec<Vec<f64>> = (0..self.pairs.len()).map(|k| self.entries(k)).collect();
        for u in 0..self.len {
            let mut row = vec![(u + self.offset()).to_string()];
            row.extend(columns.iter().map(|c| c[u].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl PanelSource for PeriodogramPanel {
    fn dim(&self) -> usize {
        self.pairs.len()
    }

    fn len(&self) -> usize {
        self.len
    }

    fn segment_dependent(&self) -> bool {
        self.p > 1
    }

    fn fill(&self, k: usize, segment: Segment, out: &mut Vec<f64>) {
        let (j, l) = self.pairs[k];
        let range = segment.start()..segment.end() + 1;
        out.clear();
        if j == l {
            out.extend(self.coefficients(j)[range].iter().map(|w| w * w));
        } else {
            let s = self.cross_sign(k, segment).as_f64();
            let a = &self.coefficients(j)[range.clone()];
            let b = &self.coefficients(l)[range];
            out.extend(a.iter().zip(b).map(|(x, y)| {
                let d = x - s * y;
                d * d
            }));
        }
    }
}

/// Periodogram panel of `x` at `scale`.
pub fn periodogram_panel(x: &MultivariateSeries, scale: Scale) -> Result<PeriodogramPanel> {
    PeriodogramPanel::new(x, scale)
}

/// Haar autocorrelation wavelet `Psi_i(tau) = sum_k psi_{i,k} psi_{i,k+tau}`.
pub fn autocorr_wavelet(scale: Scale, tau: i64) -> f64 {
    let support = scale.support() as f64;
    let t = tau.unsigned_abs() as f64;
    if t >= support {
        0.0
    } else if 2.0 * t <= support {
        1.0 - 3.0 * t / support
    } else {
        t / support - 1.0
    }
}

/// Discrete Haar wavelet vector `psi_{i,k}`, `k = 0..L`.
pub fn haar_vector(scale: Scale) -> Vec<f64> {
    let support = scale.support();
    let a = amplitude(scale.depth());
    (0..support)
        .map(|k| if k < support / 2 { a } else { -a })
        .collect()
}

/// Cross-scale autocorrelation `Psi_{i,i'}(tau) = sum_k psi_{i,k} psi_{i',k+tau}`.
pub fn cross_autocorr(a: Scale, b: Scale, tau: i64) -> f64 {
    let va = haar_vector(a);
    let vb = haar_vector(b);
    let mut sum = 0.0;
    for (k, x) in va.iter().enumerate() {
        let m = k as i64 + tau;
        if m >= 0 && (m as usize) < vb.len() {
            sum += x * vb[m as usize];
        }
    }
    sum
}

/// Gram matrix `A_{i,i'} = sum_tau Psi_i(tau) Psi_{i'}(tau)` over scales
/// `-1..=-truncation`; row/column `m` is scale `-(m+1)`.
#[derive(Clone, Debug)]
pub struct InnerProductMatrix {
    matrix: DMatrix<f64>,
}

impl InnerProductMatrix {
    pub fn new(truncation: usize) -> Result<Self> {
        if !(1..=MAX_TRUNCATION).contains(&truncation) {
            return Err(Error::Config(format!(
                "truncation {truncation} outside 1..={MAX_TRUNCATION}"
            )));
        }
        let scales: Vec<Scale> = Scale::range(truncation).collect();
        let mut matrix = DMatrix::zeros(truncation, truncation);
        let entries: Vec<(usize, usize, f64)> = (0..truncation)
            .flat_map(|a| (a..truncation).map(move |b| (a, b)))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(a, b)| {
                let (sa, sb) = (scales[a], scales[b]);
                let reach = sa.support().min(sb.support()) as i64;
                // tau = 0 once, every other lag twice by symmetry
                let mut sum = 0.0;
                let mut comp = 0.0;
                for tau in 1..reach {
                    let term = autocorr_wavelet(sa, tau) * autocorr_wavelet(sb, tau);
                    let y = term - comp;
                    let t = sum + y;
                    comp = (t - sum) - y;
                    sum = t;
                }
                (a, b, 1.0 + 2.0 * sum)
            })
            .collect();
        for (a, b, v) in entries {
            matrix[(a, b)] = v;
            matrix[(b, a)] = v;
        }
        Ok(Self { matrix })
    }

    pub fn truncation(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, a: Scale, b: Scale) -> f64 {
        self.matrix[(a.depth() - 1, b.depth() - 1)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

/// `beta_i = sum_{i'} S_{i'} A_{i,i'}`; `spectrum[m]` belongs to scale `-(m+1)`.
pub fn beta_transform(spectrum: &[f64], a: &InnerProductMatrix) -> Result<Vec<f64>> {
    check_len(spectrum, a)?;
    Ok((a.matrix() * DVector::from_column_slice(spectrum))
        .iter()
        .copied()
        .collect())
}

/// Solve `A S = beta` for the spectrum.
pub fn inverse_beta_transform(beta: &[f64], a: &InnerProductMatrix) -> Result<Vec<f64>> {
    check_len(beta, a)?;
    let rhs = DVector::from_column_slice(beta);
    a.matrix()
        .clone()
        .lu()
        .solve(&rhs)
        .map(|s| s.iter().copied().collect())
        .ok_or(Error::Singular(a.truncation()))
}

fn check_len(v: &[f64], a: &InnerProductMatrix) -> Result<()> {
    if v.len() != a.truncation() {
        return Err(Error::Shape(format!(
            "{} spectrum values for truncation {}",
            v.len(),
            a.truncation()
        )));
    }
    Ok(())
}
