//! Isotropic Gaussian Nadaraya-Watson regression with a K-fold
//! cross-validated bandwidth.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{LegopError, Result};
use crate::par::{map_indexed, Execution};
use crate::smoother::weighted_label_mean;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSpec {
    /// Candidate bandwidths; `None` uses [`default_grid`].
    pub grid: Option<Vec<f64>>,
    pub folds: usize,
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
}

impl CvSpec {
    pub fn new(seed: u64) -> Self {
        Self { grid: None, folds: 5, seed, execution: Execution::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    /// Mean squared held-out error per grid point.
    pub scores: Vec<f64>,
}

/// Root-mean feature variance.
pub fn feature_scale(data: &LabeledDataset) -> f64 {
    let (n, d) = (data.len() as f64, data.dim());
    let mut total = 0.0;
    for k in 0..d {
        let mean = (0..data.len()).map(|i| data.row(i)[k]).sum::<f64>() / n;
        total += (0..data.len()).map(|i| (data.row(i)[k] - mean).powi(2)).sum::<f64>() / n;
    }
    (total / d as f64).sqrt()
}

/// 20 log-spaced bandwidths from `1e-3·σ` to `10·σ`.
pub fn default_grid(data: &LabeledDataset) -> Vec<f64> {
    let sigma = feature_scale(data);
    let scale = if sigma > 0.0 { sigma } else { 1.0 };
    let (lo, hi) = ((1e-3f64).ln(), 10f64.ln());
    (0..20).map(|k| scale * (lo + (hi - lo) * k as f64 / 19.0).exp()).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// NW prediction from a row of squared distances with kernel
/// `exp(-d² / (2h²))`, max-shifted so the nearest point has weight 1.
fn predict_from_row(dist: &[f64], labels: &[f64], min: f64, h: f64, weights: &mut Vec<f64>) -> f64 {
    let inv = 1.0 / (2.0 * h * h);
    weights.clear();
    weights.extend(dist.iter().map(|d| (-(d - min) * inv).exp()));
    weighted_label_mean(labels, weights)
}

/// Chooses the bandwidth minimizing K-fold held-out squared error, ties going
/// to the larger bandwidth.
pub fn nw_cv_fit(data: &LabeledDataset, spec: &CvSpec) -> Result<CvResult> {
    if spec.folds < 2 {
        return Err(LegopError::InvalidConfig("need at least two folds".into()));
    }
    if data.len() < spec.folds {
        return Err(LegopError::InvalidConfig(format!("{} points cannot fill {} folds", data.len(), spec.folds)));
    }
    let grid = match &spec.grid {
        Some(g) => g.clone(),
        None => default_grid(data),
    };
    if grid.is_empty() || grid.iter().any(|h| !(*h > 0.0 && h.is_finite())) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LegopError::InvalidConfig("grid must be nonempty, positive and strictly ascending".into()));
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut fold_of = vec![0; data.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % spec.folds;
    }

    // squared error of every point at every bandwidth, predicted from the
    // other folds
    let errors: Vec<Vec<f64>> = map_indexed(spec.execution, data.len(), |i| {
        let x = data.row(i);
        let mut dist = Vec::with_capacity(data.len());
        let mut labels = Vec::with_capacity(data.len());
        for j in 0..data.len() {
            if fold_of[j] != fold_of[i] {
                dist.push(sq_dist(x, data.row(j)));
                labels.push(data.label(j));
            }
        }
        let min = dist.iter().copied().fold(f64::INFINITY, f64::min);
        let mut w = Vec::with_capacity(dist.len());
        grid.iter()
            .map(|&h| {
                let r = predict_from_row(&dist, &labels, min, h, &mut w) - data.label(i);
                r * r
            })
            .collect()
    });
    let scores: Vec<f64> = (0..grid.len())
        .map(|k| {
            let s = errors.iter().map(|e| e[k]).sum::<f64>() / data.len() as f64;
            if s.is_finite() {
                s
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let mut best: Option<usize> = None;
    for (k, &s) in scores.iter().enumerate() {
        if s.is_finite() && best.is_none_or(|b| s <= scores[b]) {
            best = Some(k);
        }
    }
    let k = best.ok_or(LegopError::EmptyNeighborhood)?;
    Ok(CvResult { bandwidth: grid[k], grid, scores })
}

/// NW predictions at `centers` with metric `I/(2h²)`.
pub fn nw_cv_predict(data: &LabeledDataset, h: f64, centers: &[Vec<f64>], exec: Execution) -> Vec<Result<f64>> {
    map_indexed(exec, centers.len(), |k| {
        if !(h > 0.0 && h.is_finite()) {
            return Err(LegopError::InvalidConfig("bandwidth must be positive".into()));
        }
        let c = &centers[k];
        data.check_point(c)?;
        let dist: Vec<f64> = (0..data.len()).map(|j| sq_dist(c, data.row(j))).collect();
        let min = dist.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(predict_from_row(&dist, data.labels(), min, h, &mut Vec::new()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth_1d(n: usize) -> LabeledDataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64]).collect();
        let labels = rows.iter().map(|r| (6.0 * r[0]).sin()).collect();
        LabeledDataset::from_rows(&rows, labels).unwrap()
    }

    #[test]
    fn constant_labels_pick_largest_bandwidth() {
        let d = smooth_1d(50).with_labels(vec![2.5; 50]).unwrap();
        let r = nw_cv_fit(&d, &CvSpec::new(1)).unwrap();
        assert!(r.scores.iter().all(|&s| s == 0.0));
        assert_eq!(r.bandwidth, *r.grid.last().unwrap());
    }

    #[test]
    fn chosen_bandwidth_is_grid_argmin() {
        let d = smooth_1d(120);
        let r = nw_cv_fit(&d, &CvSpec::new(3)).unwrap();
        assert!(r.scores.iter().all(|s| s.is_finite()));
        let k = r.grid.iter().position(|&h| h == r.bandwidth).unwrap();
        assert!(r.scores.iter().all(|&s| r.scores[k] <= s));
    }

    #[test]
    fn predict_examples() {
        let d = LabeledDataset::from_rows(&[vec![-1.0], vec![1.0]], vec![0.0, 2.0]).unwrap();
        let p = nw_cv_predict(&d, 0.7, &[vec![0.0]], Execution::Sequential);
        assert!((p[0].as_ref().unwrap() - 1.0).abs() < 1e-15);
        let one = LabeledDataset::from_rows(&[vec![3.0]], vec![4.0]).unwrap();
        assert_eq!(nw_cv_predict(&one, 0.1, &[vec![100.0]], Execution::Sequential)[0], Ok(4.0));
        let flat = smooth_1d(10).with_labels(vec![-1.5; 10]).unwrap();
        assert_eq!(nw_cv_predict(&flat, 0.3, &[vec![0.77]], Execution::Sequential)[0], Ok(-1.5));
    }

    #[test]
    fn invalid_specs() {
        let d = smooth_1d(10);
        assert!(nw_cv_fit(&d, &CvSpec { folds: 1, ..CvSpec::new(0) }).is_err());
        assert!(nw_cv_fit(&d, &CvSpec { folds: 11, ..CvSpec::new(0) }).is_err());
        assert!(nw_cv_fit(&d, &CvSpec { grid: Some(vec![0.2, 0.1]), ..CvSpec::new(0) }).is_err());
    }
}
