//! The Local EGOP Learning loop.
//!
//! Starting from an isotropic metric, each iteration weights the data around
//! the query point, subsamples by weight, estimates gradients by
//! leave-one-out local linear regression at the subsampled points, averages
//! their outer products into an AGOP, and turns a momentum blend of the last
//! two AGOPs into the next metric, normalized to trace `1/t_{i+1}`. The
//! returned estimate is the local linear fit at the query point from the
//! iteration with the lowest leave-one-out error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{LegopError, Result};
use crate::linalg::{self, Mat};
use crate::local_regression::{KernelFrame, LocalFit, NeighborIndex, Ridge};
use crate::par::{map_indexed, Execution};
use crate::smoother::{self, MetricMatrix, WeightVector, DEFAULT_EXCLUSION_RADIUS};

/// Bandwidth schedule `t_i`, the reciprocal trace of the metric at iteration `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BandwidthSchedule {
    /// `t_i = (1 + i)^(-exponent)`.
    PowerLaw { exponent: f64 },
    /// `t_i = scale · ratio^(2i)`, i.e. `√t_i` decays geometrically.
    Geometric { scale: f64, ratio: f64 },
}

impl Default for BandwidthSchedule {
    fn default() -> Self {
        BandwidthSchedule::PowerLaw { exponent: 1.2 }
    }
}

impl BandwidthSchedule {
    pub fn t(&self, i: usize) -> f64 {
        match *self {
            BandwidthSchedule::PowerLaw { exponent } => (1.0 + i as f64).powf(-exponent),
            BandwidthSchedule::Geometric { scale, ratio } => scale * ratio.powi(2 * i as i32),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            BandwidthSchedule::PowerLaw { exponent } => exponent > 0.0 && exponent.is_finite(),
            BandwidthSchedule::Geometric { scale, ratio } => {
                scale > 0.0 && scale.is_finite() && ratio > 0.0 && ratio < 1.0
            }
        };
        if !ok {
            return Err(LegopError::InvalidConfig(format!(
                "schedule {self:?} is not positive and strictly decreasing"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegopConfig {
    pub iterations: usize,
    pub subsample: usize,
    pub schedule: BandwidthSchedule,
    pub momentum: f64,
    /// Initial metric is `I / init_scale`.
    pub init_scale: f64,
    pub exclusion_radius: Option<f64>,
    pub ridge: Ridge,
    pub seed: u64,
    /// Upper bound on the spectral norm of the localization covariance
    /// `(2M)⁻¹`, enforced by flooring the metric's eigenvalues.
    pub covariance_cap: Option<f64>,
    pub execution: Execution,
}

impl Default for LegopConfig {
    fn default() -> Self {
        Self {
            iterations: 150,
            subsample: 300,
            schedule: BandwidthSchedule::default(),
            momentum: 0.7,
            init_scale: 0.2,
            exclusion_radius: Some(DEFAULT_EXCLUSION_RADIUS),
            ridge: Ridge::default(),
            seed: 0,
            covariance_cap: None,
            execution: Execution::default(),
        }
    }
}

impl LegopConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LegopError::InvalidConfig(msg));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.subsample == 0 {
            return bad("subsample size must be at least 1".into());
        }
        if !(self.momentum > 0.0 && self.momentum <= 1.0) {
            return bad(format!("momentum {} outside (0, 1]", self.momentum));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad("init scale must be positive".into());
        }
        if let Some(r) = self.exclusion_radius {
            if !(r > 0.0) {
                return bad("exclusion radius must be positive".into());
            }
        }
        if let Some(z) = self.covariance_cap {
            if !(z > 0.0) {
                return bad("covariance cap must be positive".into());
            }
        }
        let (Ridge::Absolute(v) | Ridge::Relative(v)) = self.ridge;
        if !(v >= 0.0 && v.is_finite()) {
            return bad("ridge must be finite and nonnegative".into());
        }
        self.schedule.validate()
    }
}

/// One iteration of the loop, describing the metric `M_i` that was used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub t: f64,
    /// Eigenvalues of `M_i`, ascending.
    pub metric_eigenvalues: Vec<f64>,
    /// Eigenvalues of the pseudo-inverse of `M_i`, ascending.
    pub inverse_eigenvalues: Vec<f64>,
    /// Weighted leave-one-out squared error over the subsample.
    pub loo_mse: f64,
    /// Fits that needed guard widening, failed fits, and metric fallbacks.
    pub guard_events: usize,
    pub subsample_size: usize,
    pub subsample_hash: u64,
    /// Row-major AGOP `L_i`.
    pub agop: Vec<f64>,
    pub best_mse: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LegopTrace {
    pub records: Vec<IterationRecord>,
    /// Why the loop stopped before the configured iteration count.
    pub truncated: Option<String>,
    /// Iteration whose center fit produced the returned prediction.
    pub best_iteration: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegopRun {
    pub prediction: f64,
    pub trace: LegopTrace,
    /// The metric after the last update.
    pub metric: MetricMatrix,
}

/// 64-bit FNV-1a.
fn fnv1a(words: impl IntoIterator<Item = u64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Generator for one query point: the seed picks the key and the exact bits
/// of the center pick the stream, so a center's result does not depend on
/// which batch it was submitted in or where.
pub fn center_rng(seed: u64, center: &[f64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(center.iter().map(|v| v.to_bits())));
    rng
}

/// Up to `m` distinct indices drawn without replacement with probability
/// proportional to the remaining weight, returned ascending. Uses
/// exponential keys `ln(u)/w` (the top `m` keys are distributed exactly as
/// `m` sequential draws).
pub fn weighted_subsample<R: Rng + ?Sized>(weights: &WeightVector, m: usize, rng: &mut R) -> Result<Vec<usize>> {
    if weights.support() == 0 {
        return Err(LegopError::EmptyNeighborhood);
    }
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(weights.support());
    for (i, &w) in weights.weights.iter().enumerate() {
        if w > 0.0 {
            // u in (0, 1]
            let u = 1.0 - rng.random::<f64>();
            keyed.push((u.ln() / w, i));
        }
    }
    let take = m.min(keyed.len());
    if take < keyed.len() {
        keyed.select_nth_unstable_by(take - 1, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        keyed.truncate(take);
    }
    let mut out: Vec<usize> = keyed.into_iter().map(|(_, i)| i).collect();
    out.sort_unstable();
    Ok(out)
}

/// `B = β·L + (1-β)·L_prev`, `M = B / (t_next · tr B)`. Without a previous
/// AGOP the blend is `L` alone.
pub fn metric_update(agop: &Mat, previous: Option<&Mat>, momentum: f64, t_next: f64) -> Result<MetricMatrix> {
    if !(t_next > 0.0) {
        return Err(LegopError::InvalidConfig("t_next must be positive".into()));
    }
    let blend = match previous {
        Some(prev) => agop * momentum + prev * (1.0 - momentum),
        None => agop.clone(),
    };
    let tr = blend.trace();
    if !(tr > 1e-300) {
        return Err(LegopError::VanishingAgop(tr));
    }
    MetricMatrix::new(linalg::symmetrize(&(blend / (t_next * tr))))
}

/// Floors the metric's eigenvalues at `1/(2ζ)` so the kernel's covariance
/// `(2M)⁻¹` has spectral norm at most `ζ`.
fn apply_cap(metric: MetricMatrix, cap: Option<f64>) -> Result<MetricMatrix> {
    let Some(zeta) = cap else { return Ok(metric) };
    let floor = 1.0 / (2.0 * zeta);
    let (vals, vecs) = linalg::sym_eigen(metric.matrix());
    if vals[0] >= floor {
        return Ok(metric);
    }
    let clipped: Vec<f64> = vals.iter().map(|v| v.max(floor)).collect();
    MetricMatrix::new(linalg::from_eigen(&clipped, &vecs))
}

/// Runs the loop at one query point.
pub fn run_legop(data: &LabeledDataset, center: &[f64], config: &LegopConfig) -> Result<LegopRun> {
    check_inputs(data, config)?;
    let index = match config.exclusion_radius {
        Some(r) => Some(NeighborIndex::build(data, r)?),
        None => None,
    };
    run_checked(data, index.as_ref(), center, config)
}

/// Independent runs at several query points sharing one neighbor index.
/// Each center's result is identical to a single [`run_legop`] call.
pub fn predict_batch(
    data: &LabeledDataset,
    centers: &[Vec<f64>],
    config: &LegopConfig,
) -> Result<Vec<Result<LegopRun>>> {
    check_inputs(data, config)?;
    let index = match config.exclusion_radius {
        Some(r) => Some(NeighborIndex::build(data, r)?),
        None => None,
    };
    Ok(map_indexed(config.execution, centers.len(), |k| run_checked(data, index.as_ref(), &centers[k], config)))
}

fn check_inputs(data: &LabeledDataset, config: &LegopConfig) -> Result<()> {
    config.validate()?;
    if data.len() < data.dim() + 2 {
        return Err(LegopError::InvalidDataset(format!(
            "need at least {} points in dimension {}, got {}",
            data.dim() + 2,
            data.dim(),
            data.len()
        )));
    }
    if config.subsample > data.len() {
        return Err(LegopError::InvalidConfig(format!(
            "subsample size {} exceeds dataset size {}",
            config.subsample,
            data.len()
        )));
    }
    Ok(())
}

fn run_checked(
    data: &LabeledDataset,
    index: Option<&NeighborIndex>,
    center: &[f64],
    config: &LegopConfig,
) -> Result<LegopRun> {
    data.check_point(center)?;
    let dim = data.dim();
    let mut rng = center_rng(config.seed, center);
    let mut metric = MetricMatrix::scaled_identity(dim, 1.0 / config.init_scale);
    let mut prev_agop: Option<Mat> = None;
    let mut best_mse = f64::INFINITY;
    let mut best: Option<(usize, f64)> = None;
    let mut trace = LegopTrace::default();

    for i in 0..config.iterations {
        let t = config.schedule.t(i);
        let weights = match smoother::mahalanobis_weights(data, center, &metric, config.exclusion_radius) {
            Ok(w) => w,
            Err(LegopError::EmptyNeighborhood) => {
                trace.truncated = Some(format!("empty neighborhood at the query point in iteration {i}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let subsample = weighted_subsample(&weights, config.subsample, &mut rng)?;

        let mut frame = KernelFrame::new(data, &metric, config.exclusion_radius, config.ridge)?;
        if let Some(index) = index {
            frame = frame.with_neighbors(index);
        }
        let fits: Vec<Result<LocalFit>> =
            map_indexed(config.execution, subsample.len(), |k| frame.loo_fit(subsample[k]));

        let mut guard_events = 0;
        let mut agop = Mat::zeros(dim, dim);
        let mut mass = 0.0;
        let mut sq_err = 0.0;
        for (&j, fit) in subsample.iter().zip(&fits) {
            match fit {
                Ok(fit) => {
                    if fit.guard_steps > 0 {
                        guard_events += 1;
                    }
                    let w = weights.weights[j];
                    mass += w;
                    for a in 0..dim {
                        let wa = w * fit.gradient[a];
                        for b in 0..dim {
                            agop[(a, b)] += wa * fit.gradient[b];
                        }
                    }
                    let r = data.label(j) - fit.value;
                    sq_err += w * r * r;
                }
                Err(_) => guard_events += 1,
            }
        }
        if mass <= 0.0 {
            trace.truncated = Some(format!("every leave-one-out fit failed in iteration {i}"));
            break;
        }
        agop /= mass;
        let loo_mse = sq_err / mass;

        if loo_mse < best_mse {
            match frame.fit_at(center) {
                Ok(fit) => {
                    best_mse = loo_mse;
                    best = Some((i, fit.value));
                }
                Err(_) => guard_events += 1,
            }
        }

        let momentum = if prev_agop.is_some() { config.momentum } else { 1.0 };
        let t_next = config.schedule.t(i + 1);
        let next = match metric_update(&agop, prev_agop.as_ref(), momentum, t_next) {
            Ok(m) => m,
            Err(LegopError::VanishingAgop(_)) => {
                // no gradient signal: keep the shape, shrink to the new scale
                guard_events += 1;
                MetricMatrix::new(metric.matrix() / (t_next * metric.trace()))?
            }
            Err(e) => return Err(e),
        };

        let metric_eigenvalues = metric.eigenvalues();
        trace.records.push(IterationRecord {
            iteration: i,
            t,
            inverse_eigenvalues: linalg::pinv_eigenvalues(&metric_eigenvalues),
            metric_eigenvalues,
            loo_mse,
            guard_events,
            subsample_size: subsample.len(),
            subsample_hash: fnv1a(subsample.iter().map(|&j| j as u64)),
            agop: linalg::to_row_major(&agop),
            best_mse,
        });

        metric = apply_cap(next, config.covariance_cap)?;
        prev_agop = Some(agop);
    }

    let (best_iteration, prediction) = best.ok_or(LegopError::EmptyNeighborhood)?;
    trace.best_iteration = Some(best_iteration);
    Ok(LegopRun { prediction, trace, metric })
}

/// Standard deviation of successive differences of
/// `log(λ₂(M_i⁻¹) / √t_i)` over records `window.0..=window.1`, where `λ₂` is
/// the second-smallest eigenvalue of the metric's pseudo-inverse. Period-2
/// oscillation of the normalized metric shows up as a large value.
pub fn oscillation_statistic(trace: &LegopTrace, window: (usize, usize)) -> Result<f64> {
    let (lo, hi) = window;
    let recs: Vec<&IterationRecord> = trace.records.iter().filter(|r| r.iteration >= lo && r.iteration <= hi).collect();
    if recs.len() < 3 {
        return Err(LegopError::InvalidConfig("window holds fewer than three iterations".into()));
    }
    let mut logs = Vec::with_capacity(recs.len());
    for r in recs {
        let v = *r.inverse_eigenvalues.get(1).ok_or(LegopError::InvalidConfig("needs dimension >= 2".into()))?;
        if !(v > 0.0) {
            return Err(LegopError::Singular);
        }
        logs.push((v / r.t.sqrt()).ln());
    }
    let diffs: Vec<f64> = logs.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (diffs.len() - 1) as f64;
    Ok(var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_values() {
        let c = LegopConfig::default();
        assert_eq!((c.iterations, c.subsample, c.init_scale, c.momentum), (150, 300, 0.2, 0.7));
        assert_eq!(c.exclusion_radius, Some(1.6));
        assert_eq!(c.schedule, BandwidthSchedule::PowerLaw { exponent: 1.2 });
        assert!((c.schedule.t(4) - 5f64.powf(-1.2)).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let ok = LegopConfig::default();
        for bad in [
            LegopConfig { iterations: 0, ..ok.clone() },
            LegopConfig { subsample: 0, ..ok.clone() },
            LegopConfig { momentum: 0.0, ..ok.clone() },
            LegopConfig { momentum: 1.5, ..ok.clone() },
            LegopConfig { init_scale: -1.0, ..ok.clone() },
            LegopConfig { schedule: BandwidthSchedule::Geometric { scale: 1.0, ratio: 1.0 }, ..ok.clone() },
            LegopConfig { schedule: BandwidthSchedule::PowerLaw { exponent: 0.0 }, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn subsample_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one_hot = WeightVector::from_raw(vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(weighted_subsample(&one_hot, 3, &mut rng).unwrap(), vec![2]);
        let uniform = WeightVector::from_raw(vec![1.0; 7]).unwrap();
        assert_eq!(weighted_subsample(&uniform, 7, &mut rng).unwrap(), (0..7).collect::<Vec<_>>());
        let some = WeightVector::from_raw(vec![1.0, 3.0, 0.5, 2.0, 0.1]).unwrap();
        let s = weighted_subsample(&some, 3, &mut rng).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn metric_update_examples() {
        let i3 = Mat::identity(3, 3);
        let m = metric_update(&i3, Some(&i3), 0.7, 0.5).unwrap();
        assert!((m.matrix() - &i3 * (2.0 / 3.0)).amax() < 1e-15);
        let other = Mat::from_diagonal_element(3, 3, 5.0);
        let a = metric_update(&i3, Some(&other), 1.0, 0.5).unwrap();
        let b = metric_update(&i3, None, 1.0, 0.5).unwrap();
        assert_eq!(a, b);
        assert!(matches!(metric_update(&Mat::zeros(3, 3), None, 1.0, 0.5), Err(LegopError::VanishingAgop(_))));
    }

    #[test]
    fn cap_floors_metric() {
        let m = MetricMatrix::new(Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![0.01, 10.0]))).unwrap();
        let capped = apply_cap(m, Some(0.5)).unwrap();
        let eig = capped.eigenvalues();
        assert!((eig[0] - 1.0).abs() < 1e-12 && (eig[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn center_rng_depends_on_bits_only() {
        let a: u64 = center_rng(3, &[0.5, 1.0]).random();
        let b: u64 = center_rng(3, &[0.5, 1.0]).random();
        let c: u64 = center_rng(3, &[0.5, 1.0 + f64::EPSILON]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
