//! Weighted local linear regression and its leave-one-out variant.
//!
//! Regressors are centered at the query point, so the fitted intercept is the
//! value estimate and the slope is the gradient estimate.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{LegopError, Result};
use crate::linalg::{self, Mat};
use crate::smoother::{MetricMatrix, WeightVector};

/// Kernel exponents more than this far below the maximum are treated as zero
/// weight (`e^-50 ≈ 2e-22`, far below double-precision resolution of the sum).
const EXPONENT_CUTOFF: f64 = 50.0;

/// Normalized weight at or above which a point counts toward the effective
/// sample guard.
const GUARD_WEIGHT: f64 = 1e-12;

/// Relative pivot threshold for declaring a ridge-free design rank deficient.
const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFit {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Sum of the max-shifted raw kernel weights that entered the fit.
    pub effective_weight_mass: f64,
    /// How many of the metric's strongest directions had to be dropped to
    /// reach the effective sample guard.
    pub guard_steps: usize,
}

/// Ridge penalty on the gradient coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Ridge {
    /// Fixed penalty.
    Absolute(f64),
    /// Factor times the trace of the weighted design covariance.
    Relative(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(1e-8)
    }
}

impl Ridge {
    fn validate(self) -> Result<()> {
        let v = match self {
            Ridge::Absolute(v) | Ridge::Relative(v) => v,
        };
        if !(v >= 0.0 && v.is_finite()) {
            return Err(LegopError::InvalidConfig(format!("ridge must be finite and nonnegative, got {v}")));
        }
        Ok(())
    }
}

/// Accumulator for `Σ w [1, d][1, d]ᵀ` and `Σ w y [1, d]`.
#[derive(Debug, Clone)]
pub(crate) struct NormalEquations {
    p: usize,
    gram: Vec<f64>,
    rhs: Vec<f64>,
    total: f64,
}

impl NormalEquations {
    pub(crate) fn new(dim: usize) -> Self {
        let p = dim + 1;
        Self { p, gram: vec![0.0; p * p], rhs: vec![0.0; p], total: 0.0 }
    }

    /// Adds one observation with displacement `d` from the center. Only the
    /// upper triangle of the Gram matrix is accumulated.
    #[inline]
    pub(crate) fn add(&mut self, w: f64, d: &[f64], y: f64) {
        let p = self.p;
        self.total += w;
        self.gram[0] += w;
        self.rhs[0] += w * y;
        for a in 0..p - 1 {
            let wa = w * d[a];
            self.gram[a + 1] += wa;
            self.rhs[a + 1] += wa * y;
            let start = (a + 1) * p + a + 1;
            for (g, db) in self.gram[start..(a + 2) * p].iter_mut().zip(&d[a..]) {
                *g += wa * db;
            }
        }
    }

    /// Solves with the given ridge policy. Weights need not be normalized:
    /// the system is divided by the total weight first.
    pub(crate) fn solve(&self, ridge: Ridge) -> Result<(f64, Vec<f64>)> {
        let p = self.p;
        if self.total <= 0.0 {
            return Err(LegopError::EmptyNeighborhood);
        }
        let mut a = Mat::zeros(p, p);
        for r in 0..p {
            for c in r..p {
                let v = self.gram[r * p + c] / self.total;
                a[(r, c)] = v;
                a[(c, r)] = v;
            }
        }
        let penalty = match ridge {
            Ridge::Absolute(v) => v,
            Ridge::Relative(f) => {
                // weighted covariance of the displacements about the center
                let mut tr = 0.0;
                for k in 1..p {
                    tr += a[(k, k)] - a[(0, k)] * a[(0, k)];
                }
                f * tr.max(0.0)
            }
        };
        for k in 1..p {
            a[(k, k)] += penalty;
        }
        let b = nalgebra::DVector::from_iterator(p, self.rhs.iter().map(|v| v / self.total));

        // Jacobi scaling makes the pivot test independent of feature units.
        let scale: Vec<f64> = (0..p).map(|k| if a[(k, k)] > 0.0 { 1.0 / a[(k, k)].sqrt() } else { 0.0 }).collect();
        if scale.contains(&0.0) {
            return Err(LegopError::RankDeficient);
        }
        let mut scaled = a.clone();
        for r in 0..p {
            for c in 0..p {
                scaled[(r, c)] *= scale[r] * scale[c];
            }
        }
        let chol = scaled.cholesky().ok_or(LegopError::RankDeficient)?;
        let l = chol.l();
        let min_pivot = (0..p).map(|k| l[(k, k)] * l[(k, k)]).fold(f64::INFINITY, f64::min);
        if min_pivot < PIVOT_TOLERANCE {
            return Err(LegopError::RankDeficient);
        }
        let sb = nalgebra::DVector::from_iterator(p, (0..p).map(|k| b[k] * scale[k]));
        let sol = chol.solve(&sb);
        let coef: Vec<f64> = (0..p).map(|k| sol[k] * scale[k]).collect();
        if coef.iter().any(|v| !v.is_finite()) {
            return Err(LegopError::RankDeficient);
        }
        Ok((coef[0], coef[1..].to_vec()))
    }
}

/// Solves `min Σ w_i (Y_i - a - gᵀ(X_i - c))² + ridge·‖g‖²` with normalized
/// weights and returns `(a, g)` as a [`LocalFit`].
pub fn weighted_linear_fit(
    data: &LabeledDataset,
    center: &[f64],
    weights: &WeightVector,
    ridge: f64,
) -> Result<LocalFit> {
    data.check_point(center)?;
    if weights.len() != data.len() {
        return Err(LegopError::DimensionMismatch { expected: data.len(), found: weights.len() });
    }
    Ridge::Absolute(ridge).validate()?;
    let mut ne = NormalEquations::new(data.dim());
    let mut d = vec![0.0; data.dim()];
    for (i, &w) in weights.weights.iter().enumerate() {
        if w > 0.0 {
            for (k, (x, c)) in data.row(i).iter().zip(center).enumerate() {
                d[k] = x - c;
            }
            ne.add(w, &d, data.label(i));
        }
    }
    let (value, gradient) = ne.solve(Ridge::Absolute(ridge))?;
    Ok(LocalFit { value, gradient, effective_weight_mass: weights.raw_sum, guard_steps: 0 })
}

/// Precomputed Euclidean neighbor lists: for each point, the other points
/// within the exclusion radius. Built once per dataset and shared across
/// iterations and query centers.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    radius: f64,
    offsets: Vec<usize>,
    indices: Vec<u32>,
}

impl NeighborIndex {
    pub fn build(data: &LabeledDataset, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(LegopError::InvalidConfig("exclusion radius must be positive".into()));
        }
        if data.len() > u32::MAX as usize {
            return Err(LegopError::InvalidDataset("too many points for a neighbor index".into()));
        }
        let r2 = radius * radius;
        let n = data.len();
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); n];
        for i in 0..n {
            let xi = data.row(i);
            for j in i + 1..n {
                let d2: f64 = xi.iter().zip(data.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2 <= r2 {
                    lists[i].push(j as u32);
                    lists[j].push(i as u32);
                }
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut indices = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        for mut l in lists {
            l.sort_unstable();
            indices.extend_from_slice(&l);
            offsets.push(indices.len());
        }
        Ok(Self { radius, offsets, indices })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Neighbors of point `i`, excluding `i` itself, in ascending order.
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// Data transformed by a metric factor, so that `dᵀ M d = ‖F d‖²` becomes a
/// plain Euclidean distance. Components are ordered by decreasing metric
/// eigenvalue; dropping leading components widens the kernel along the
/// metric's strongest directions.
pub(crate) struct KernelFrame<'a> {
    data: &'a LabeledDataset,
    factor: Vec<Vec<f64>>,
    transformed: Vec<f64>,
    radius_sq: Option<f64>,
    neighbors: Option<&'a NeighborIndex>,
    ridge: Ridge,
}

impl<'a> KernelFrame<'a> {
    pub(crate) fn new(
        data: &'a LabeledDataset,
        metric: &MetricMatrix,
        exclusion_radius: Option<f64>,
        ridge: Ridge,
    ) -> Result<Self> {
        let dim = data.dim();
        if metric.dim() != dim {
            return Err(LegopError::DimensionMismatch { expected: dim, found: metric.dim() });
        }
        ridge.validate()?;
        let (vals, vecs) = linalg::sym_eigen(metric.matrix());
        let factor: Vec<Vec<f64>> = (0..dim)
            .rev()
            .map(|k| {
                let s = vals[k].max(0.0).sqrt();
                (0..dim).map(|a| s * vecs[(a, k)]).collect()
            })
            .collect();
        let mut transformed = vec![0.0; data.len() * dim];
        for i in 0..data.len() {
            let x = data.row(i);
            for (c, f) in factor.iter().enumerate() {
                transformed[i * dim + c] = f.iter().zip(x).map(|(a, b)| a * b).sum();
            }
        }
        Ok(Self { data, factor, transformed, radius_sq: exclusion_radius.map(|r| r * r), neighbors: None, ridge })
    }

    /// Uses precomputed neighbor lists for leave-one-out fits. The index
    /// radius must equal the frame's exclusion radius.
    pub(crate) fn with_neighbors(mut self, index: &'a NeighborIndex) -> Self {
        debug_assert_eq!(self.radius_sq, Some(index.radius() * index.radius()));
        self.neighbors = Some(index);
        self
    }

    fn transform(&self, x: &[f64]) -> Vec<f64> {
        self.factor.iter().map(|f| f.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    /// Local linear fit centered at a data point, with that point left out.
    pub(crate) fn loo_fit(&self, index: usize) -> Result<LocalFit> {
        let center = self.data.row(index);
        let z = &self.transformed[index * self.data.dim()..(index + 1) * self.data.dim()];
        self.fit(center, z, Some(index))
    }

    /// Local linear fit at an arbitrary point.
    pub(crate) fn fit_at(&self, center: &[f64]) -> Result<LocalFit> {
        let z = self.transform(center);
        self.fit(center, &z, None)
    }

    /// Normalized weights at an arbitrary point (no guard widening).
    #[cfg(test)]
    pub(crate) fn weights_at(&self, center: &[f64]) -> Result<WeightVector> {
        let z = self.transform(center);
        let idx = self.admissible(center, None);
        if idx.is_empty() {
            return Err(LegopError::EmptyNeighborhood);
        }
        let mut q = Vec::new();
        self.distances(&idx, &z, 0, &mut q);
        let min = q.iter().copied().fold(f64::INFINITY, f64::min);
        let mut raw = vec![0.0; self.data.len()];
        for (&i, &qi) in idx.iter().zip(&q) {
            raw[i as usize] = (min - qi).exp();
        }
        WeightVector::from_raw(raw)
    }

    /// Points inside the exclusion radius, other than `exclude`.
    fn admissible(&self, center: &[f64], exclude: Option<usize>) -> Vec<u32> {
        if let (Some(j), Some(index)) = (exclude, self.neighbors) {
            return index.neighbors(j).to_vec();
        }
        let mut out = Vec::new();
        for i in 0..self.data.len() {
            if Some(i) == exclude {
                continue;
            }
            if let Some(r2) = self.radius_sq {
                let e: f64 = self.data.row(i).iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
                if e > r2 {
                    continue;
                }
            }
            out.push(i as u32);
        }
        out
    }

    /// Squared metric distances to `z` using components `skip..`.
    fn distances(&self, idx: &[u32], z: &[f64], skip: usize, out: &mut Vec<f64>) {
        out.clear();
        match self.data.dim() {
            1 => distances_fixed::<1>(&self.transformed, idx, z, skip, out),
            2 => distances_fixed::<2>(&self.transformed, idx, z, skip, out),
            3 => distances_fixed::<3>(&self.transformed, idx, z, skip, out),
            4 => distances_fixed::<4>(&self.transformed, idx, z, skip, out),
            5 => distances_fixed::<5>(&self.transformed, idx, z, skip, out),
            6 => distances_fixed::<6>(&self.transformed, idx, z, skip, out),
            7 => distances_fixed::<7>(&self.transformed, idx, z, skip, out),
            8 => distances_fixed::<8>(&self.transformed, idx, z, skip, out),
            dim => out.extend(idx.iter().map(|&i| {
                let i = i as usize;
                let zi = &self.transformed[i * dim + skip..(i + 1) * dim];
                zi.iter().zip(&z[skip..]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            })),
        }
    }

    fn fit(&self, center: &[f64], z: &[f64], exclude: Option<usize>) -> Result<LocalFit> {
        let dim = self.data.dim();
        let idx = self.admissible(center, exclude);
        if idx.is_empty() {
            return Err(LegopError::EmptyNeighborhood);
        }
        let mut q = Vec::with_capacity(idx.len());
        let mut skip = 0;
        loop {
            self.distances(&idx, z, skip, &mut q);
            let min = q.iter().copied().fold(f64::INFINITY, f64::min);
            let (ne, sum) = accumulate(self.data, center, &idx, &q, min);
            // weight >= GUARD_WEIGHT * sum  <=>  q - min <= -ln(GUARD_WEIGHT * sum)
            let reach = -(GUARD_WEIGHT * sum).ln();
            let support = q.iter().filter(|&&qi| qi - min <= reach.min(EXPONENT_CUTOFF)).count();
            if support >= dim + 2 || skip == dim {
                let (value, gradient) = ne.solve(self.ridge)?;
                return Ok(LocalFit { value, gradient, effective_weight_mass: sum, guard_steps: skip });
            }
            skip += 1;
        }
    }
}

fn distances_fixed<const D: usize>(transformed: &[f64], idx: &[u32], z: &[f64], skip: usize, out: &mut Vec<f64>) {
    let z: &[f64; D] = z.try_into().expect("transformed center has the data dimension");
    let row = |i: u32| -> &[f64; D] {
        let i = i as usize;
        transformed[i * D..(i + 1) * D].try_into().expect("row of length D")
    };
    if skip == 0 {
        out.extend(idx.iter().map(|&i| {
            let zi = row(i);
            let mut q = 0.0;
            for k in 0..D {
                let d = zi[k] - z[k];
                q += d * d;
            }
            q
        }));
    } else {
        out.extend(idx.iter().map(|&i| {
            let zi = row(i);
            let mut q = 0.0;
            for k in skip..D {
                let d = zi[k] - z[k];
                q += d * d;
            }
            q
        }));
    }
}

/// Normal equations for the points `idx` with weights `exp(min - q)`,
/// skipping exponents below the cutoff. Returns the system and the weight sum.
fn accumulate(data: &LabeledDataset, center: &[f64], idx: &[u32], q: &[f64], min: f64) -> (NormalEquations, f64) {
    match data.dim() {
        1 => accumulate_fixed::<1>(data, center, idx, q, min),
        2 => accumulate_fixed::<2>(data, center, idx, q, min),
        3 => accumulate_fixed::<3>(data, center, idx, q, min),
        4 => accumulate_fixed::<4>(data, center, idx, q, min),
        5 => accumulate_fixed::<5>(data, center, idx, q, min),
        6 => accumulate_fixed::<6>(data, center, idx, q, min),
        7 => accumulate_fixed::<7>(data, center, idx, q, min),
        8 => accumulate_fixed::<8>(data, center, idx, q, min),
        dim => {
            let mut ne = NormalEquations::new(dim);
            let mut d = vec![0.0; dim];
            for (&i, &qi) in idx.iter().zip(q) {
                let s = min - qi;
                if s < -EXPONENT_CUTOFF {
                    continue;
                }
                let i = i as usize;
                for ((dk, x), c) in d.iter_mut().zip(data.row(i)).zip(center) {
                    *dk = x - c;
                }
                ne.add(s.exp(), &d, data.label(i));
            }
            let sum = ne.total;
            (ne, sum)
        }
    }
}

/// Fixed-dimension accumulation; the full symmetric block is summed so the
/// inner loops unroll and vectorize.
fn accumulate_fixed<const D: usize>(
    data: &LabeledDataset,
    center: &[f64],
    idx: &[u32],
    q: &[f64],
    min: f64,
) -> (NormalEquations, f64) {
    let c: &[f64; D] = center.try_into().expect("center has the data dimension");
    let features = data.features();
    let labels = data.labels();
    let (mut sw, mut swy) = (0.0, 0.0);
    let mut swd = [0.0; D];
    let mut swdy = [0.0; D];
    let mut swdd = [[0.0; D]; D];
    for (&i, &qi) in idx.iter().zip(q) {
        let s = min - qi;
        if s < -EXPONENT_CUTOFF {
            continue;
        }
        let w = s.exp();
        let i = i as usize;
        let x: &[f64; D] = features[i * D..(i + 1) * D].try_into().expect("row of length D");
        let y = labels[i];
        let mut d = [0.0; D];
        for k in 0..D {
            d[k] = x[k] - c[k];
        }
        sw += w;
        swy += w * y;
        for a in 0..D {
            let wa = w * d[a];
            swd[a] += wa;
            swdy[a] += wa * y;
            for b in 0..D {
                swdd[a][b] += wa * d[b];
            }
        }
    }
    let p = D + 1;
    let mut ne = NormalEquations::new(D);
    ne.total = sw;
    ne.gram[0] = sw;
    ne.rhs[0] = swy;
    for a in 0..D {
        ne.gram[a + 1] = swd[a];
        ne.rhs[a + 1] = swdy[a];
        for (b, v) in swdd[a].iter().enumerate().skip(a) {
            ne.gram[(a + 1) * p + b + 1] = *v;
        }
    }
    (ne, sw)
}

/// Leave-one-out local linear fit at data point `index` under `metric`.
pub fn loo_local_fit(
    data: &LabeledDataset,
    index: usize,
    metric: &MetricMatrix,
    ridge: Ridge,
    exclusion_radius: Option<f64>,
) -> Result<LocalFit> {
    if data.len() < 2 {
        return Err(LegopError::InvalidDataset("leave-one-out needs at least two points".into()));
    }
    if index >= data.len() {
        return Err(LegopError::InvalidConfig(format!("index {index} out of range")));
    }
    KernelFrame::new(data, metric, exclusion_radius, ridge)?.loo_fit(index)
}
