//! Mahalanobis-metrized Gaussian kernel smoothing.
//!
//! The kernel is `exp(-(x - c)ᵀ M (x - c))`; any constant rescaling of the
//! distance is absorbed into `M`. Exponents are shifted by their maximum
//! before exponentiation so the closest admissible point always has raw
//! weight one and normalization never divides by an underflowed sum.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{LegopError, Result};
use crate::functions::ScalarField;
use crate::linalg::{self, Mat};

/// Default Euclidean exclusion radius around a kernel center.
pub const DEFAULT_EXCLUSION_RADIUS: f64 = 1.6;

/// Symmetric positive semidefinite Mahalanobis metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RowMajor", into = "RowMajor")]
pub struct MetricMatrix(Mat);

/// Serialized form of a square matrix.
#[derive(Serialize, Deserialize)]
struct RowMajor {
    dim: usize,
    entries: Vec<f64>,
}

impl From<MetricMatrix> for RowMajor {
    fn from(m: MetricMatrix) -> Self {
        RowMajor { dim: m.dim(), entries: linalg::to_row_major(&m.0) }
    }
}

impl TryFrom<RowMajor> for MetricMatrix {
    type Error = LegopError;
    fn try_from(r: RowMajor) -> Result<Self> {
        MetricMatrix::new(linalg::from_row_major(r.dim, &r.entries)?)
    }
}

impl MetricMatrix {
    pub fn new(m: Mat) -> Result<Self> {
        linalg::check_psd(&m)?;
        Ok(Self(linalg::symmetrize(&m)))
    }

    /// `scale * I`.
    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        Self(Mat::identity(dim, dim) * scale)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(Mat::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_inner(self) -> Mat {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::sym_eigenvalues(&self.0)
    }

    /// `dᵀ M d`.
    pub fn distance_sq(&self, d: &[f64]) -> f64 {
        linalg::quad_form(&self.0, d)
    }
}

/// Gaussian target distribution `N(center, covariance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLocalization {
    pub center: Vec<f64>,
    pub covariance: Mat,
}

impl GaussianLocalization {
    pub fn new(center: Vec<f64>, covariance: Mat) -> Result<Self> {
        if covariance.nrows() != center.len() {
            return Err(LegopError::DimensionMismatch { expected: center.len(), found: covariance.nrows() });
        }
        linalg::check_psd(&covariance)?;
        Ok(Self { center, covariance: linalg::symmetrize(&covariance) })
    }

    /// Clips the covariance spectrum to `[0, cap]`.
    pub fn capped(&self, cap: Option<f64>) -> Self {
        let (vals, vecs) = linalg::sym_eigen(&self.covariance);
        let clipped: Vec<f64> = vals
            .iter()
            .map(|&v| {
                let v = v.max(0.0);
                cap.map_or(v, |c| v.min(c))
            })
            .collect();
        Self { center: self.center.clone(), covariance: linalg::from_eigen(&clipped, &vecs) }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }
}

/// Normalized kernel weights. `raw_sum` is the sum of the max-shifted raw
/// weights, i.e. the effective number of points relative to the closest one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub raw_sum: f64,
}

impl WeightVector {
    /// Normalizes nonnegative raw weights.
    pub fn from_raw(raw: Vec<f64>) -> Result<Self> {
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(LegopError::InvalidConfig("weights must be finite and nonnegative".into()));
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(LegopError::EmptyNeighborhood);
        }
        Ok(Self { weights: raw.into_iter().map(|w| w / sum).collect(), raw_sum: sum })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Number of entries that are strictly positive.
    pub fn support(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }
}

/// Kernel weights `∝ exp(-(X_j - c)ᵀ M (X_j - c))` over the dataset. Points
/// farther than `exclusion_radius` (Euclidean) from the center get weight 0.
pub fn mahalanobis_weights(
    data: &LabeledDataset,
    center: &[f64],
    metric: &MetricMatrix,
    exclusion_radius: Option<f64>,
) -> Result<WeightVector> {
    data.check_point(center)?;
    if metric.dim() != data.dim() {
        return Err(LegopError::DimensionMismatch { expected: data.dim(), found: metric.dim() });
    }
    let dim = data.dim();
    let r2 = exclusion_radius.map(|r| r * r);
    let mut diff = vec![0.0; dim];
    let mut exponents = Vec::with_capacity(data.len());
    let mut max_exp = f64::NEG_INFINITY;
    for j in 0..data.len() {
        let mut euclid = 0.0;
        for (k, (x, c)) in data.row(j).iter().zip(center).enumerate() {
            diff[k] = x - c;
            euclid += diff[k] * diff[k];
        }
        let e = if r2.is_some_and(|r2| euclid > r2) { f64::NEG_INFINITY } else { -metric.distance_sq(&diff) };
        max_exp = max_exp.max(e);
        exponents.push(e);
    }
    if max_exp == f64::NEG_INFINITY {
        return Err(LegopError::EmptyNeighborhood);
    }
    let raw = exponents.into_iter().map(|e| (e - max_exp).exp()).collect();
    WeightVector::from_raw(raw)
}

/// Weighted mean of labels, computed relative to the label of the heaviest
/// point so that constant labels are reproduced exactly.
pub fn weighted_label_mean(labels: &[f64], weights: &[f64]) -> f64 {
    let (mut best, mut best_w) = (0, f64::NEG_INFINITY);
    for (i, &w) in weights.iter().enumerate() {
        if w > best_w {
            best = i;
            best_w = w;
        }
    }
    let reference = labels[best];
    let mut acc = 0.0;
    let mut total = 0.0;
    for (&y, &w) in labels.iter().zip(weights) {
        if w > 0.0 {
            acc += w * (y - reference);
            total += w;
        }
    }
    reference + acc / total
}

/// Nadaraya-Watson estimate at `center` under the metric.
pub fn nw_estimate(
    data: &LabeledDataset,
    center: &[f64],
    metric: &MetricMatrix,
    exclusion_radius: Option<f64>,
) -> Result<f64> {
    let w = mahalanobis_weights(data, center, metric, exclusion_radius)?;
    Ok(weighted_label_mean(data.labels(), &w.weights))
}

/// `tr(L Σ)`.
pub fn egop_form(egop: &Mat, covariance: &Mat) -> Result<f64> {
    if egop.shape() != covariance.shape() || !egop.is_square() {
        return Err(LegopError::DimensionMismatch { expected: egop.nrows(), found: covariance.nrows() });
    }
    Ok(egop.component_mul(covariance).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasRatio {
    /// Monte-Carlo estimate of `∫ (P_M f - f)² dμ`.
    pub bias: f64,
    /// Monte-Carlo estimate of `W(μ) = ∫ ∇fᵀ Σ ∇f dμ`.
    pub egop_form: f64,
    pub ratio: f64,
}

/// Checks the localization-bias bound numerically.
///
/// With `M = Σ⁻¹` and a flat feature density, the continuous smoother is
/// `P_M f(x) = E[f(x + Σ^{1/2} z)]`. The squared bias at each outer sample is
/// estimated without bias as `(mean - f(x))² - var / K` over `K` inner draws.
pub fn localization_bias_ratio(
    f: &dyn ScalarField,
    localization: &GaussianLocalization,
    mc_samples: usize,
    seed: u64,
) -> Result<BiasRatio> {
    let dim = localization.dim();
    if f.dim() != dim {
        return Err(LegopError::DimensionMismatch { expected: dim, found: f.dim() });
    }
    if mc_samples < 1000 {
        return Err(LegopError::InvalidConfig("need at least 1000 Monte-Carlo samples".into()));
    }
    linalg::check_pd(&localization.covariance)?;
    let root = linalg::psd_sqrt(&localization.covariance);
    let inner = mc_samples.min(2000);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng, base: &[f64]| -> Vec<f64> {
        let z: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        (0..dim).map(|a| base[a] + (0..dim).map(|b| root[(a, b)] * z[b]).sum::<f64>()).collect()
    };
    let mut grad = vec![0.0; dim];
    let (mut bias, mut form) = (0.0, 0.0);
    for _ in 0..mc_samples {
        let x = draw(&mut rng, &localization.center);
        let fx = f.value(&x);
        let (mut mean, mut m2) = (0.0, 0.0);
        for k in 0..inner {
            let v = f.value(&draw(&mut rng, &x)) - fx;
            let delta = v - mean;
            mean += delta / (k + 1) as f64;
            m2 += delta * (v - mean);
        }
        let var = m2 / (inner - 1) as f64;
        bias += mean * mean - var / inner as f64;
        f.gradient(&x, &mut grad);
        form += linalg::quad_form(&localization.covariance, &grad);
    }
    let bias = (bias / mc_samples as f64).max(0.0);
    let form = form / mc_samples as f64;
    let ratio = if form > 0.0 {
        bias / form
    } else if bias == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(BiasRatio { bias, egop_form: form, ratio })
}
