//! Oracle covariance recurrences and the tools to analyze them.
//!
//! The oracle recurrence replaces estimated gradients with exact ones: the
//! EGOP `L(μ) = E_μ[∇f ∇fᵀ]` of an analytic function under a Gaussian
//! localization `μ = N(x*, Σ)` is computed by Monte Carlo, and the next
//! covariance is `Σ_{i+1} = t_{i+1} (β L(μ_i) + (1-β) L(μ_{i-1}))⁻¹` on the
//! geometric schedule `√t_i = α rⁱ`. Rate fits of quadratic forms
//! `vᵀ Σ_i v` against `t_i` expose the anisotropy of the localization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datagen::HelixCurve;
use crate::error::{LegopError, Result};
use crate::functions::{CubicPolynomial, HelixIndex, Quadratic, ScalarField, SphereIndex};
use crate::linalg::{self, Mat};
use crate::par::{map_indexed, Execution};
use crate::smoother::GaussianLocalization;

/// Relative diagonal jitter added before inverting an EGOP.
pub const INVERSE_JITTER: f64 = 1e-12;

/// Antithetic pairs per Monte-Carlo block.
const PAIRS_PER_BLOCK: usize = 2048;

/// `Σ = t A⁻¹ / D`, the maximizer of `log det Σ` subject to `tr(AΣ) <= t`.
pub fn logdet_argmax(a: &Mat, t: f64) -> Result<Mat> {
    if !(t > 0.0) {
        return Err(LegopError::InvalidConfig("t must be positive".into()));
    }
    linalg::check_pd(a)?;
    let d = a.nrows() as f64;
    let inv = a.clone().cholesky().ok_or(LegopError::Singular)?.inverse();
    Ok(linalg::symmetrize(&(inv * (t / d))))
}

/// Limit constant of the homogeneous scalar recurrence on a geometric
/// schedule: `a_i ~ √(c t_i)` with `c = 1 / (β/r + (1-β)/r²)`.
pub fn autonomous_constant(ratio: f64, momentum: f64) -> f64 {
    1.0 / (momentum / ratio + (1.0 - momentum) / (ratio * ratio))
}

/// `√t_i = α rⁱ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricSchedule {
    pub alpha: f64,
    pub ratio: f64,
}

impl GeometricSchedule {
    pub fn t(&self, i: usize) -> f64 {
        let s = self.alpha * self.ratio.powi(i as i32);
        s * s
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(LegopError::InvalidConfig("schedule needs alpha > 0 and 0 < r < 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarKind {
    /// `a_{i+1} = t_{i+1} / (β a_i + (1-β) a_{i-1})`.
    Homogeneous,
    /// `b_{i+1} = t_{i+1} / (c + β b_i + (1-β) b_{i-1})`.
    Shifted,
}

/// Iterates a scalar recurrence from `seeds = (a_0, a_1)`, by default
/// `(α², t_1/(c + α²))`, and returns `a_0..=a_iterations`.
pub fn scalar_recurrence(
    kind: ScalarKind,
    c: f64,
    schedule: GeometricSchedule,
    momentum: f64,
    iterations: usize,
    seeds: Option<(f64, f64)>,
) -> Result<Vec<f64>> {
    schedule.validate()?;
    if !(momentum > 0.0 && momentum <= 1.0) {
        return Err(LegopError::InvalidConfig("momentum must lie in (0, 1]".into()));
    }
    if !(c >= 0.0) {
        return Err(LegopError::InvalidConfig("shift must be nonnegative".into()));
    }
    let shift = match kind {
        ScalarKind::Homogeneous => 0.0,
        ScalarKind::Shifted => c,
    };
    let a0 = schedule.alpha * schedule.alpha;
    let (a0, a1) = seeds.unwrap_or((a0, schedule.t(1) / (shift + a0)));
    if !(a0 > 0.0 && a1 > 0.0) {
        return Err(LegopError::InvalidConfig("seeds must be positive".into()));
    }
    let mut out = vec![a0, a1];
    for i in 1..iterations {
        let denom = shift + momentum * out[i] + (1.0 - momentum) * out[i - 1];
        if !(denom > 0.0) {
            return Err(LegopError::Divergence { step: i + 1, denominator: denom });
        }
        out.push(schedule.t(i + 1) / denom);
    }
    out.truncate(iterations + 1);
    Ok(out)
}

/// Analytic test function driving the oracle recurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFamily {
    /// `f(x) = gᵀx + ½ xᵀHx` at `x* = 0`; `hessian` is row-major.
    Quadratic { gradient: Vec<f64>, hessian: Vec<f64> },
    /// `f(x) = p(x/‖x‖)` in the plane at `x* = (1, 0)` with the fixed cubic
    /// `p(u) = 0.7u₁ - 1.2u₂ + 0.4u₁u₂ + 1.1u₂³`.
    Circle,
    /// `f(x) = p(x/‖x‖)` in R³ with a random cubic `p`, at
    /// `x* ∝ (0.3, 0.2, 0.9)`.
    Sphere { coefficient_seed: u64 },
    /// `f = p ∘ π` for the projection `π` onto a helix, at the curve point
    /// with parameter `param`.
    Helix { dim: usize, tau: f64, param: f64, coefficient_seed: u64 },
}

/// A test function with its base point and the directions to monitor.
pub struct Problem {
    pub field: Box<dyn ScalarField>,
    pub center: Vec<f64>,
    /// Unit gradient at the center.
    pub gradient_direction: Vec<f64>,
    pub directions: Vec<(String, Vec<f64>)>,
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn cross(a: &[f64], b: &[f64]) -> Vec<f64> {
    vec![a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

impl TestFamily {
    pub fn dim(&self) -> usize {
        match self {
            TestFamily::Quadratic { gradient, .. } => gradient.len(),
            TestFamily::Circle => 2,
            TestFamily::Sphere { .. } => 3,
            TestFamily::Helix { dim, .. } => *dim,
        }
    }

    pub fn build(&self) -> Result<Problem> {
        let (field, center): (Box<dyn ScalarField>, Vec<f64>) = match self {
            TestFamily::Quadratic { gradient, hessian } => {
                let d = gradient.len();
                if d == 0 {
                    return Err(LegopError::InvalidConfig("empty gradient".into()));
                }
                let h = linalg::from_row_major(d, hessian)?;
                if (&h - h.transpose()).amax() > 1e-12 * h.amax().max(1.0) {
                    return Err(LegopError::InvalidMatrix("hessian is not symmetric".into()));
                }
                let q = Quadratic { center: vec![0.0; d], gradient: gradient.clone(), hessian: h };
                (Box::new(q), vec![0.0; d])
            }
            TestFamily::Circle => {
                let poly = CubicPolynomial {
                    dim: 2,
                    monomials: vec![vec![0], vec![1], vec![0, 1], vec![1, 1, 1]],
                    coefficients: vec![0.7, -1.2, 0.4, 1.1],
                };
                (Box::new(SphereIndex { poly, ambient: 2 }), vec![1.0, 0.0])
            }
            TestFamily::Sphere { coefficient_seed } => {
                let poly = crate::datagen::CubicLabelSpec::new(*coefficient_seed).polynomial(3)?;
                (Box::new(SphereIndex { poly, ambient: 3 }), unit(&[0.3, 0.2, 0.9]))
            }
            TestFamily::Helix { dim, tau, param, coefficient_seed } => {
                if *dim < 2 || !(*tau > 0.0) {
                    return Err(LegopError::InvalidConfig("helix needs dim >= 2 and tau > 0".into()));
                }
                let curve = HelixCurve::new(*dim, *tau);
                let poly = crate::datagen::CubicLabelSpec::new(*coefficient_seed).polynomial(*dim)?;
                let center = curve.point(*param);
                (Box::new(HelixIndex { curve, poly }), center)
            }
        };
        let g = field.gradient_vec(&center);
        if !g.iter().any(|v| *v != 0.0) {
            return Err(LegopError::InvalidConfig("gradient at the base point must be nonzero".into()));
        }
        let gn = unit(&g);
        let directions = match self {
            TestFamily::Quadratic { .. } => linalg::orthonormal_complement(&gn)
                .into_iter()
                .enumerate()
                .map(|(k, v)| (format!("orthogonal_{k}"), v))
                .collect(),
            TestFamily::Circle => vec![("normal".to_string(), center.clone())],
            TestFamily::Sphere { .. } => {
                vec![("normal".to_string(), center.clone()), ("tangent".to_string(), unit(&cross(&gn, &center)))]
            }
            TestFamily::Helix { .. } => linalg::orthonormal_complement(&gn)
                .into_iter()
                .enumerate()
                .map(|(k, v)| (format!("normal_{k}"), v))
                .collect(),
        };
        Ok(Problem { field, center, gradient_direction: gn, directions })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceSpec {
    pub family: TestFamily,
    pub schedule: GeometricSchedule,
    pub momentum: f64,
    pub iterations: usize,
    /// Monte-Carlo samples per EGOP (rounded up to whole antithetic pairs).
    pub mc_samples: usize,
    /// Spectral cap `ζ` on the localization covariance.
    pub covariance_cap: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
}

impl RecurrenceSpec {
    pub fn new(family: TestFamily) -> Self {
        Self {
            family,
            schedule: GeometricSchedule { alpha: 0.1, ratio: 0.9 },
            momentum: 0.7,
            iterations: 100,
            mc_samples: 100_000,
            covariance_cap: None,
            seed: 0,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.momentum > 0.0 && self.momentum <= 1.0) {
            return Err(LegopError::InvalidConfig("momentum must lie in (0, 1]".into()));
        }
        if self.iterations < 2 {
            return Err(LegopError::InvalidConfig("need at least two iterations".into()));
        }
        if self.mc_samples < 2 {
            return Err(LegopError::InvalidConfig("need at least two Monte-Carlo samples".into()));
        }
        if let Some(z) = self.covariance_cap {
            if !(z > 0.0) {
                return Err(LegopError::InvalidConfig("covariance cap must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Monte-Carlo EGOP with per-entry standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct EgopEstimate {
    pub mean: Mat,
    pub stderr: Mat,
}

/// `E[∇f ∇fᵀ]` under `N(center, Σ)` from `samples` antithetic draws. Blocks
/// draw from their own ChaCha stream `(stream, block)` and are reduced in
/// block order, so the estimate does not depend on the execution policy.
pub fn monte_carlo_egop(
    field: &dyn ScalarField,
    loc: &GaussianLocalization,
    samples: usize,
    seed: u64,
    stream: u64,
    exec: Execution,
) -> Result<EgopEstimate> {
    let d = loc.dim();
    if field.dim() != d {
        return Err(LegopError::DimensionMismatch { expected: field.dim(), found: d });
    }
    let (vals, vecs) = linalg::sym_eigen(&loc.covariance);
    let roots: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    let pairs = samples.div_ceil(2).max(1);
    let blocks = pairs.div_ceil(PAIRS_PER_BLOCK);
    let partial = map_indexed(exec, blocks, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b as u64);
        let count = PAIRS_PER_BLOCK.min(pairs - b * PAIRS_PER_BLOCK);
        let mut sum = vec![0.0; d * d];
        let mut sum_sq = vec![0.0; d * d];
        let mut z = vec![0.0; d];
        let mut x = vec![0.0; d];
        let mut gp = vec![0.0; d];
        let mut gm = vec![0.0; d];
        for _ in 0..count {
            for zk in z.iter_mut() {
                *zk = StandardNormal.sample(&mut rng);
            }
            for (sign, g) in [(1.0, &mut gp), (-1.0, &mut gm)] {
                for a in 0..d {
                    let mut off = 0.0;
                    for k in 0..d {
                        off += vecs[(a, k)] * roots[k] * z[k];
                    }
                    x[a] = loc.center[a] + sign * off;
                }
                field.gradient(&x, g);
            }
            for a in 0..d {
                for b in 0..d {
                    let v = 0.5 * (gp[a] * gp[b] + gm[a] * gm[b]);
                    sum[a * d + b] += v;
                    sum_sq[a * d + b] += v * v;
                }
            }
        }
        (sum, sum_sq)
    });
    let mut sum = vec![0.0; d * d];
    let mut sum_sq = vec![0.0; d * d];
    for (s, q) in partial {
        for k in 0..d * d {
            sum[k] += s[k];
            sum_sq[k] += q[k];
        }
    }
    let n = pairs as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let stderr: Vec<f64> = if pairs > 1 {
        sum_sq.iter().zip(&mean).map(|(q, m)| ((q / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt()).collect()
    } else {
        vec![f64::INFINITY; d * d]
    };
    Ok(EgopEstimate {
        mean: linalg::symmetrize(&linalg::from_row_major(d, &mean)?),
        stderr: linalg::from_row_major(d, &stderr)?,
    })
}

/// Oracle EGOP of the spec's function under `localization` (after applying
/// the spec's covariance cap).
pub fn oracle_egop(spec: &RecurrenceSpec, localization: &GaussianLocalization) -> Result<EgopEstimate> {
    spec.validate()?;
    let problem = spec.family.build()?;
    let loc = localization.capped(spec.covariance_cap);
    monte_carlo_egop(problem.field.as_ref(), &loc, spec.mc_samples, spec.seed, 0, spec.execution)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenRecord {
    pub i: usize,
    pub t: f64,
    /// Eigenvalues of the (capped) localization covariance, ascending.
    pub eigenvalues: Vec<f64>,
    /// `gᵀ Σ_i g / ‖g‖²`.
    pub gradient_form: f64,
    /// `vᵀ Σ_i v` for each monitored direction.
    pub direction_forms: Vec<f64>,
    /// Row-major covariance.
    pub covariance: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EigenTrace {
    pub directions: Vec<String>,
    pub records: Vec<EigenRecord>,
    pub truncated: Option<String>,
}

/// Runs the oracle recurrence: `Σ_0 = αI`, `Σ_1 = t_1 L_0⁻¹`,
/// `Σ_2 = t_1 L_1⁻¹`, then `Σ_{i+1} = t_{i+1} (β L_i + (1-β) L_{i-1})⁻¹`.
/// Records `Σ_0..=Σ_iterations` as the localizations actually sampled (cap
/// applied).
pub fn matrix_recurrence(spec: &RecurrenceSpec) -> Result<EigenTrace> {
    spec.validate()?;
    let problem = spec.family.build()?;
    let d = problem.center.len();
    let sched = spec.schedule;
    let mut trace =
        EigenTrace { directions: problem.directions.iter().map(|(n, _)| n.clone()).collect(), ..Default::default() };

    let mut sigma = Mat::identity(d, d) * sched.alpha;
    let mut agops: Vec<Mat> = Vec::with_capacity(spec.iterations + 1);
    for i in 0..=spec.iterations {
        let loc = GaussianLocalization::new(problem.center.clone(), sigma.clone())?.capped(spec.covariance_cap);
        let cov = &loc.covariance;
        trace.records.push(EigenRecord {
            i,
            t: sched.t(i),
            eigenvalues: linalg::sym_eigenvalues(cov),
            gradient_form: linalg::quad_form(cov, &problem.gradient_direction),
            direction_forms: problem.directions.iter().map(|(_, v)| linalg::quad_form(cov, v)).collect(),
            covariance: linalg::to_row_major(cov),
        });
        if i == spec.iterations {
            break;
        }
        let egop =
            monte_carlo_egop(problem.field.as_ref(), &loc, spec.mc_samples, spec.seed, i as u64, spec.execution)?;
        agops.push(egop.mean);
        let (blend, t) = if i < 2 {
            (agops[i].clone(), sched.t(1))
        } else {
            (&agops[i] * spec.momentum + &agops[i - 1] * (1.0 - spec.momentum), sched.t(i + 1))
        };
        match linalg::inverse_with_jitter(&blend, INVERSE_JITTER) {
            Some(inv) => sigma = inv * t,
            None => {
                trace.truncated = Some(format!("EGOP not invertible at iteration {i}"));
                break;
            }
        }
    }
    Ok(trace)
}

/// Which series of an [`EigenTrace`] to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum Direction {
    Gradient,
    /// Index into the trace's monitored directions.
    Monitored(usize),
    /// `k`-th smallest eigenvalue.
    Eigenvalue(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub stderr: f64,
}

/// Least-squares slope of `log y` on `log t`.
pub fn loglog_slope(t: &[f64], y: &[f64]) -> Result<RateFit> {
    if t.len() != y.len() || t.len() < 2 {
        return Err(LegopError::InvalidConfig("need at least two paired points".into()));
    }
    if t.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(LegopError::InvalidConfig("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(LegopError::InvalidConfig("abscissae are all equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let stderr = if lx.len() > 2 {
        let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(RateFit { slope, stderr })
}

/// Slope of `log(series)` against `log t_i` over iterations `lo..=hi`.
pub fn rate_fit(trace: &EigenTrace, direction: Direction, window: (usize, usize)) -> Result<RateFit> {
    let (lo, hi) = window;
    let recs: Vec<&EigenRecord> = trace.records.iter().filter(|r| r.i >= lo && r.i <= hi).collect();
    if recs.len() != hi.saturating_sub(lo) + 1 || lo > hi {
        return Err(LegopError::InvalidConfig(format!("window {lo}..={hi} is not inside the trace")));
    }
    let mut ys = Vec::with_capacity(recs.len());
    for r in &recs {
        let y = match direction {
            Direction::Gradient => r.gradient_form,
            Direction::Monitored(k) => *r
                .direction_forms
                .get(k)
                .ok_or_else(|| LegopError::InvalidConfig(format!("no monitored direction {k}")))?,
            Direction::Eigenvalue(k) => {
                *r.eigenvalues.get(k).ok_or_else(|| LegopError::InvalidConfig(format!("no eigenvalue {k}")))?
            }
        };
        ys.push(y);
    }
    let ts: Vec<f64> = recs.iter().map(|r| r.t).collect();
    loglog_slope(&ts, &ys)
}

/// Thompson metric `max |log λ(B^{-1/2} A B^{-1/2})|`.
pub fn thompson_distance(a: &Mat, b: &Mat) -> Result<f64> {
    linalg::check_pd(a)?;
    linalg::check_pd(b)?;
    if a.nrows() != b.nrows() {
        return Err(LegopError::DimensionMismatch { expected: b.nrows(), found: a.nrows() });
    }
    let l = b.clone().cholesky().ok_or(LegopError::Singular)?.l();
    let linv = l.try_inverse().ok_or(LegopError::Singular)?;
    let c = linalg::symmetrize(&(&linv * a * linv.transpose()));
    let vals = linalg::sym_eigenvalues(&c);
    if vals[0] <= 0.0 {
        return Err(LegopError::Singular);
    }
    Ok(vals.iter().map(|v| v.ln().abs()).fold(0.0, f64::max))
}

/// Homogeneous matrix recurrence `Σ_{i+1} = t_{i+1} (β HΣ_iH + (1-β) HΣ_{i-1}H)⁻¹`
/// for a positive-definite `H`, started like [`matrix_recurrence`].
/// Returns the autonomous normalization `X_i = H^{1/2} Σ_i H^{1/2} / √(c t_i)`,
/// which converges to `I` when `β < 1` and alternates `X ↔ X⁻¹` when `β = 1`.
pub fn homogeneous_matrix_recurrence(
    hessian: &Mat,
    schedule: GeometricSchedule,
    momentum: f64,
    iterations: usize,
) -> Result<Vec<Mat>> {
    schedule.validate()?;
    linalg::check_pd(hessian)?;
    if !(momentum > 0.0 && momentum <= 1.0) {
        return Err(LegopError::InvalidConfig("momentum must lie in (0, 1]".into()));
    }
    let d = hessian.nrows();
    let w = linalg::psd_sqrt(hessian);
    let c = autonomous_constant(schedule.ratio, momentum);
    let egop = |s: &Mat| hessian * s * hessian;
    let mut sigmas = vec![Mat::identity(d, d) * schedule.alpha];
    let mut agops: Vec<Mat> = Vec::new();
    for i in 0..iterations {
        agops.push(egop(&sigmas[i]));
        let (blend, t) = if i < 2 {
            (agops[i].clone(), schedule.t(1))
        } else {
            (&agops[i] * momentum + &agops[i - 1] * (1.0 - momentum), schedule.t(i + 1))
        };
        let inv = linalg::inverse_with_jitter(&blend, 0.0).ok_or(LegopError::Singular)?;
        sigmas.push(inv * t);
    }
    Ok(sigmas
        .iter()
        .enumerate()
        .map(|(i, s)| linalg::symmetrize(&(&w * s * &w / (c * schedule.t(i)).sqrt())))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logdet_argmax_examples() {
        let i3 = Mat::identity(3, 3);
        assert!((logdet_argmax(&i3, 3.0).unwrap() - &i3).amax() < 1e-15);
        let a = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0]));
        let s = logdet_argmax(&a, 1.0).unwrap();
        assert!((s[(0, 0)] - 0.5).abs() < 1e-15 && (s[(1, 1)] - 0.125).abs() < 1e-15);
        assert!(logdet_argmax(&Mat::zeros(2, 2), 1.0).is_err());
    }

    #[test]
    fn constant_matches_definition() {
        assert!((autonomous_constant(0.9, 1.0) - 0.9).abs() < 1e-15);
        let c = autonomous_constant(0.9, 0.7);
        assert!((1.0 / c - (0.7 / 0.9 + 0.3 / 0.81)).abs() < 1e-14);
    }

    #[test]
    fn divergence_is_flagged() {
        let s = GeometricSchedule { alpha: 0.5, ratio: 0.9 };
        let err = scalar_recurrence(ScalarKind::Homogeneous, 0.0, s, 0.5, 10, Some((-1.0, 0.1))).unwrap_err();
        assert!(matches!(err, LegopError::InvalidConfig(_)));
    }

    #[test]
    fn thompson_basics() {
        let a = Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        assert!(thompson_distance(&a, &a).unwrap() < 1e-12);
        assert!((thompson_distance(&a, &(&a * 3.0)).unwrap() - 3f64.ln()).abs() < 1e-12);
        assert!(thompson_distance(&a, &Mat::zeros(2, 2)).is_err());
    }

    #[test]
    fn loglog_exact() {
        let t: Vec<f64> = (0..20).map(|i| 0.9f64.powi(2 * i)).collect();
        let f = loglog_slope(&t, &t).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12 && f.stderr < 1e-12);
        let r: Vec<f64> = t.iter().map(|v| v.sqrt()).collect();
        assert!((loglog_slope(&t, &r).unwrap().slope - 0.5).abs() < 1e-12);
        assert!(loglog_slope(&t, &[0.0; 20]).is_err());
    }

    #[test]
    fn families_have_nonzero_gradients() {
        for fam in [
            TestFamily::Quadratic { gradient: vec![1.0, 0.0], hessian: vec![1.0, 0.0, 0.0, 2.0] },
            TestFamily::Circle,
            TestFamily::Sphere { coefficient_seed: 1 },
            TestFamily::Helix { dim: 5, tau: 0.8, param: 1.0, coefficient_seed: 1 },
        ] {
            let p = fam.build().unwrap();
            assert_eq!(p.center.len(), fam.dim());
            for (_, v) in &p.directions {
                let dot: f64 = v.iter().zip(&p.gradient_direction).map(|(a, b)| a * b).sum();
                assert!(dot.abs() < 1e-10);
            }
        }
        let zero = TestFamily::Quadratic { gradient: vec![0.0, 0.0], hessian: vec![1.0, 0.0, 0.0, 1.0] };
        assert!(zero.build().is_err());
    }
}
