//! Block Hessians along a trajectory, their spectra, histogram entropy,
//! mutual information between epochs, and the river/valley split.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, LabError, Result};
use crate::io::{fmt_num, CsvBuilder};
use crate::linalg::{symmetric_eigenvalues, Matrix};
use crate::model::{grad_full, Arch, Block, EmbeddingMap, Labeled, Params};
use crate::scalar::Scalar;

pub const DEFAULT_BINS: usize = 30;
pub const DEFAULT_FD_STEP: f64 = 1e-3;
pub const DEFAULT_EPS_REL: f64 = 0.05;
pub const DEFAULT_DELTA: f64 = 0.5;
pub const DEFAULT_KAPPA_V: f64 = 10.0;
pub const DEFAULT_TAU: f64 = 0.5;
/// Magnitudes below this fall in the underflow bin.
pub const HIST_FLOOR: f64 = 1e-8;

/// Central-difference Hessian of a gradient map at `theta`, symmetrised.
/// The step is `h · max(1, ‖θ‖_∞)`.
pub fn fd_hessian<T: Scalar>(theta: &[T], h: T, mut grad: impl FnMut(&[T]) -> Result<Vec<T>>) -> Result<Matrix<T>> {
    if !(h > T::zero()) {
        return param_err("finite-difference step must be positive");
    }
    let n = theta.len();
    let scale = theta.iter().fold(T::one(), |m, &x| m.max(x.abs()));
    let step = h * scale;
    let mut hess = Matrix::zeros(n, n);
    let mut probe = theta.to_vec();
    for j in 0..n {
        probe[j] = theta[j] + step;
        let gp = grad(&probe)?;
        probe[j] = theta[j] - step;
        let gm = grad(&probe)?;
        probe[j] = theta[j];
        if gp.len() != n || gm.len() != n {
            return Err(LabError::Shape("gradient length differs from parameter length".into()));
        }
        for i in 0..n {
            hess[(i, j)] = (gp[i] - gm[i]) / (T::lit(2.0) * step);
        }
    }
    if !hess.is_finite() {
        return Err(LabError::NonFinite("Hessian entries".into()));
    }
    Ok(hess.symmetrized())
}

/// Hessian of the mean loss with respect to one weight block (row-major
/// flattening), other blocks held fixed.
pub fn hessian_block<T: Scalar, S: Labeled>(
    params: &Params<T>,
    emap: &EmbeddingMap<T>,
    batch: &[S],
    arch: Arch,
    layer: usize,
    block: Block,
    h: T,
) -> Result<Matrix<T>> {
    params.check(arch)?;
    if block != Block::Wh && layer >= params.layers.len() {
        return param_err(format!("layer {layer} out of range"));
    }
    let theta = params.block(layer, block).as_slice().to_vec();
    let mut work = params.clone();
    fd_hessian(&theta, h, |x| {
        work.block_mut(layer, block).as_mut_slice().copy_from_slice(x);
        let g = grad_full(&work, emap, batch, arch)?;
        Ok(g.block(layer, block).as_slice().to_vec())
    })
}

/// Real eigenvalues sorted descending.
pub fn eigenspectrum<T: Scalar>(h: &Matrix<T>) -> Result<Vec<T>> {
    symmetric_eigenvalues(h)
}

/// Bin of `|x|` among `bins` log-spaced bins over `[HIST_FLOOR, hi]`; 0 is underflow.
fn bin_index(x: f64, hi: f64, bins: usize) -> usize {
    let a = x.abs();
    if a < HIST_FLOOR || hi <= HIST_FLOOR {
        return 0;
    }
    let span = (hi / HIST_FLOOR).ln();
    let k = ((a / HIST_FLOOR).ln() / span * bins as f64).floor() as usize;
    1 + k.min(bins - 1)
}

fn entropy_of_counts(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum::<f64>()
        .max(0.0)
}

fn max_abs(spec: &[f64]) -> f64 {
    spec.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn check_bins(bins: usize) -> Result<()> {
    if bins < 2 {
        return param_err(format!("need at least 2 bins, got {bins}"));
    }
    Ok(())
}

/// Entropy (nats) of the `|λ|` histogram with edges over `[HIST_FLOOR, hi]`.
pub fn entropy_with_edges(spectrum: &[f64], bins: usize, hi: f64) -> Result<f64> {
    check_bins(bins)?;
    let mut counts = vec![0usize; bins + 1];
    for &x in spectrum {
        counts[bin_index(x, hi, bins)] += 1;
    }
    Ok(entropy_of_counts(&counts))
}

/// Entropy of the eigenvalue-magnitude histogram on the spectrum's own edges.
pub fn matrix_entropy(spectrum: &[f64], bins: usize) -> Result<f64> {
    entropy_with_edges(spectrum, bins, max_abs(spectrum))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MutualInformation {
    pub mi: f64,
    /// Marginal entropies under the shared edges.
    pub entropy_prev: f64,
    pub entropy_curr: f64,
}

/// MI between two spectra paired by descending-magnitude rank, on edges shared by the pair.
pub fn mutual_information(spec_prev: &[f64], spec_curr: &[f64], bins: usize) -> Result<MutualInformation> {
    check_bins(bins)?;
    if spec_prev.len() != spec_curr.len() {
        return Err(LabError::Shape(format!("spectra of length {} and {}", spec_prev.len(), spec_curr.len())));
    }
    let hi = max_abs(spec_prev).max(max_abs(spec_curr));
    let by_magnitude = |s: &[f64]| {
        let mut v: Vec<f64> = s.iter().map(|x| x.abs()).collect();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
        v
    };
    let a = by_magnitude(spec_prev);
    let b = by_magnitude(spec_curr);
    let k = bins + 1;
    let mut joint = vec![0usize; k * k];
    let mut ma = vec![0usize; k];
    let mut mb = vec![0usize; k];
    for (&x, &y) in a.iter().zip(&b) {
        let (i, j) = (bin_index(x, hi, bins), bin_index(y, hi, bins));
        joint[i * k + j] += 1;
        ma[i] += 1;
        mb[j] += 1;
    }
    let n = a.len() as f64;
    let mut mi = 0.0;
    for i in 0..k {
        for j in 0..k {
            let c = joint[i * k + j];
            if c > 0 {
                let pij = c as f64 / n;
                mi += pij * (pij * n * n / (ma[i] as f64 * mb[j] as f64)).ln();
            }
        }
    }
    let entropy_prev = entropy_of_counts(&ma);
    let entropy_curr = entropy_of_counts(&mb);
    Ok(MutualInformation { mi, entropy_prev, entropy_curr })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiverValleySplit {
    pub epsilon: f64,
    pub river_indices: Vec<usize>,
    pub valley_indices: Vec<usize>,
}

/// River: `λ ≤ ε`; valley: `λ > ε`, on signed eigenvalues.
pub fn river_valley_split(spectrum: &[f64], epsilon: f64) -> Result<RiverValleySplit> {
    if !(epsilon > 0.0) {
        return param_err(format!("threshold {epsilon} must be positive"));
    }
    let (valley, river): (Vec<usize>, Vec<usize>) = (0..spectrum.len()).partition(|&i| spectrum[i] > epsilon);
    Ok(RiverValleySplit { epsilon, river_indices: river, valley_indices: valley })
}

/// `eps_rel · λ_max`, or the smallest positive float when `λ_max ≤ 0` (everything river).
pub fn relative_epsilon(spectrum: &[f64], eps_rel: f64) -> f64 {
    let top = spectrum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top > 0.0 {
        (eps_rel * top).max(f64::MIN_POSITIVE)
    } else {
        f64::MIN_POSITIVE
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValleyShape {
    UShaped,
    VShaped,
    Indeterminate,
}

impl fmt::Display for ValleyShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValleyShape::UShaped => "U",
            ValleyShape::VShaped => "V",
            ValleyShape::Indeterminate => "indeterminate",
        })
    }
}

impl FromStr for ValleyShape {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "U" => Ok(ValleyShape::UShaped),
            "V" => Ok(ValleyShape::VShaped),
            "indeterminate" => Ok(ValleyShape::Indeterminate),
            _ => param_err(format!("unknown valley shape '{s}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValleyClass {
    pub shape: ValleyShape,
    pub kappa: f64,
    /// Set when the smallest valley eigenvalue is not positive.
    pub nonpositive_floor: bool,
}

pub fn classify_valley(valley: &[f64], delta: f64, kappa_v: f64) -> Result<ValleyClass> {
    if valley.is_empty() {
        return param_err("empty valley");
    }
    let hi = valley.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = valley.iter().copied().fold(f64::INFINITY, f64::min);
    if lo <= 0.0 {
        return Ok(ValleyClass { shape: ValleyShape::VShaped, kappa: f64::INFINITY, nonpositive_floor: true });
    }
    let kappa = hi / lo;
    let shape = if kappa <= 1.0 + delta {
        ValleyShape::UShaped
    } else if kappa >= kappa_v {
        ValleyShape::VShaped
    } else {
        ValleyShape::Indeterminate
    };
    Ok(ValleyClass { shape, kappa, nonpositive_floor: false })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectralDominance {
    pub m1: usize,
    pub m2: usize,
    pub dominance: bool,
}

/// Counts eigenvalues `≤ τ` in each spectrum and tests whether the smallest
/// `m₁` Looped eigenvalues sit strictly below the Single ones, rank by rank.
pub fn dominance_check(spec_single: &[f64], spec_looped: &[f64], tau: f64) -> Result<SpectralDominance> {
    if !(tau > 0.0) {
        return param_err("tau must be positive");
    }
    let asc = |s: &[f64]| {
        let mut v = s.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        v
    };
    let s = asc(spec_single);
    let l = asc(spec_looped);
    let m1 = s.iter().filter(|&&x| x <= tau).count();
    let m2 = l.iter().filter(|&&x| x <= tau).count();
    let dominance = m1 >= 1 && l.len() >= m1 && (0..m1).all(|i| l[i] < s[i]);
    Ok(SpectralDominance { m1, m2, dominance })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub epoch: usize,
    pub block: Block,
    pub eigenvalues: Vec<f64>,
    pub entropy: f64,
    pub mi_with_prev: Option<f64>,
    /// Previous and current marginal entropies under the edges shared with the previous epoch.
    pub pair_entropies: Option<(f64, f64)>,
    pub epsilon: f64,
    pub river_dim: usize,
    pub valley_dim: usize,
    pub kappa: f64,
    pub shape: ValleyShape,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSettings {
    pub bins: usize,
    pub eps_rel: f64,
    /// Overrides the relative threshold when set.
    pub eps_abs: Option<f64>,
    pub delta: f64,
    pub kappa_v: f64,
}

impl Default for SpectrumSettings {
    fn default() -> Self {
        Self { bins: DEFAULT_BINS, eps_rel: DEFAULT_EPS_REL, eps_abs: None, delta: DEFAULT_DELTA, kappa_v: DEFAULT_KAPPA_V }
    }
}

/// Builds a report from a spectrum, linking it to the previous epoch's report if given.
pub fn spectrum_report(
    epoch: usize,
    block: Block,
    eigenvalues: Vec<f64>,
    prev: Option<&SpectrumReport>,
    settings: &SpectrumSettings,
) -> Result<SpectrumReport> {
    let entropy = matrix_entropy(&eigenvalues, settings.bins)?;
    let (mi_with_prev, pair_entropies) = match prev {
        Some(p) => {
            let mi = mutual_information(&p.eigenvalues, &eigenvalues, settings.bins)?;
            (Some(mi.mi), Some((mi.entropy_prev, mi.entropy_curr)))
        }
        None => (None, None),
    };
    let epsilon = settings.eps_abs.unwrap_or_else(|| relative_epsilon(&eigenvalues, settings.eps_rel));
    let split = river_valley_split(&eigenvalues, epsilon)?;
    let (kappa, shape) = if split.valley_indices.is_empty() {
        (f64::INFINITY, ValleyShape::Indeterminate)
    } else {
        let valley: Vec<f64> = split.valley_indices.iter().map(|&i| eigenvalues[i]).collect();
        let c = classify_valley(&valley, settings.delta, settings.kappa_v)?;
        (c.kappa, c.shape)
    };
    Ok(SpectrumReport {
        epoch,
        block,
        entropy,
        mi_with_prev,
        pair_entropies,
        epsilon,
        river_dim: split.river_indices.len(),
        valley_dim: split.valley_indices.len(),
        kappa,
        shape,
        eigenvalues,
    })
}

pub fn spectrum_csv(reports: &[SpectrumReport]) -> String {
    let mut b = CsvBuilder::new(&["epoch", "block", "rank", "eigenvalue"]);
    for r in reports {
        for (k, &l) in r.eigenvalues.iter().enumerate() {
            b.row([r.epoch.to_string(), r.block.to_string(), k.to_string(), fmt_num(l)]);
        }
    }
    b.finish()
}

pub fn spectrum_metrics_csv(reports: &[SpectrumReport]) -> String {
    let mut b = CsvBuilder::new(&["epoch", "block", "entropy", "mi", "river_dim", "valley_dim", "kappa", "shape"]);
    for r in reports {
        b.row([
            r.epoch.to_string(),
            r.block.to_string(),
            fmt_num(r.entropy),
            r.mi_with_prev.map(fmt_num).unwrap_or_default(),
            r.river_dim.to_string(),
            r.valley_dim.to_string(),
            fmt_num(r.kappa),
            r.shape.to_string(),
        ]);
    }
    b.finish()
}
