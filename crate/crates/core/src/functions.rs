//! Analytic scalar fields with closed-form gradients.
//!
//! These are the test functions behind the oracle EGOP computations and the
//! label generators: linear and quadratic fields, random cubic polynomials,
//! and "index" functions that depend on a point only through its nearest-point
//! projection onto a sphere or helix.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::HelixCurve;
use crate::linalg::Mat;

pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// Writes `∇f(x)` into `out` (length `dim`).
    fn gradient(&self, x: &[f64], out: &mut [f64]);

    fn gradient_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient(x, &mut g);
        g
    }
}

/// `f(x) = aᵀx + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub slope: Vec<f64>,
    pub intercept: f64,
}

impl ScalarField for Linear {
    fn dim(&self) -> usize {
        self.slope.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.intercept + self.slope.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.slope);
    }
}

/// `f(x) = gᵀ(x - c) + ½ (x - c)ᵀ H (x - c)`, so `∇f(c) = g` and `∇²f = H`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub center: Vec<f64>,
    pub gradient: Vec<f64>,
    pub hessian: Mat,
}

impl ScalarField for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let lin: f64 = self.gradient.iter().zip(&d).map(|(a, b)| a * b).sum();
        lin + 0.5 * crate::linalg::quad_form(&self.hessian, &d)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (a, o) in out.iter_mut().enumerate().take(self.dim()) {
            let mut acc = self.gradient[a];
            for (b, (xb, cb)) in x.iter().zip(&self.center).enumerate() {
                acc += self.hessian[(a, b)] * (xb - cb);
            }
            *o = acc;
        }
    }
}

/// Polynomial over all monomials of total degree `<= 3`.
///
/// Monomials are stored as sorted variable-index multisets in graded
/// lexicographic order: `1`, `x_i`, `x_i x_j (i <= j)`, `x_i x_j x_k (i <= j <= k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicPolynomial {
    pub dim: usize,
    pub monomials: Vec<Vec<usize>>,
    pub coefficients: Vec<f64>,
}

impl CubicPolynomial {
    pub fn monomials_for(dim: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for i in 0..dim {
            out.push(vec![i]);
        }
        for i in 0..dim {
            for j in i..dim {
                out.push(vec![i, j]);
            }
        }
        for i in 0..dim {
            for j in i..dim {
                for k in j..dim {
                    out.push(vec![i, j, k]);
                }
            }
        }
        out
    }

    /// Coefficients drawn uniformly from `[-bound, bound]`.
    pub fn random<R: Rng + ?Sized>(dim: usize, bound: f64, rng: &mut R) -> Self {
        let monomials = Self::monomials_for(dim);
        let coefficients = monomials.iter().map(|_| rng.random_range(-bound..=bound)).collect();
        Self { dim, monomials, coefficients }
    }
}

impl ScalarField for CubicPolynomial {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.monomials.iter().zip(&self.coefficients).map(|(m, c)| c * m.iter().map(|&k| x[k]).product::<f64>()).sum()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (m, c) in self.monomials.iter().zip(&self.coefficients) {
            for s in 0..m.len() {
                let mut prod = *c;
                for (t, &k) in m.iter().enumerate() {
                    if t != s {
                        prod *= x[k];
                    }
                }
                out[m[s]] += prod;
            }
        }
    }
}

/// `f(x) = p(u)` with `u` the radial projection of the first `p.dim`
/// coordinates onto the unit sphere. Remaining ambient coordinates are ignored,
/// so `f` is constant along every normal direction of the sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereIndex {
    pub poly: CubicPolynomial,
    pub ambient: usize,
}

impl ScalarField for SphereIndex {
    fn dim(&self) -> usize {
        self.ambient
    }

    fn value(&self, x: &[f64]) -> f64 {
        let k = self.poly.dim;
        let r = x[..k].iter().map(|v| v * v).sum::<f64>().sqrt();
        let u: Vec<f64> = x[..k].iter().map(|v| v / r).collect();
        self.poly.value(&u)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let k = self.poly.dim;
        let r = x[..k].iter().map(|v| v * v).sum::<f64>().sqrt();
        let u: Vec<f64> = x[..k].iter().map(|v| v / r).collect();
        let mut gp = vec![0.0; k];
        self.poly.gradient(&u, &mut gp);
        let radial: f64 = gp.iter().zip(&u).map(|(a, b)| a * b).sum();
        out.iter_mut().for_each(|v| *v = 0.0);
        for a in 0..k {
            out[a] = (gp[a] - radial * u[a]) / r;
        }
    }
}

/// `f(x) = p(π(x))` where `π` is the nearest-point projection onto a helix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelixIndex {
    pub curve: HelixCurve,
    pub poly: CubicPolynomial,
}

impl ScalarField for HelixIndex {
    fn dim(&self) -> usize {
        self.curve.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let t = self.curve.project(x);
        self.poly.value(&self.curve.point(t))
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let t = self.curve.project(x);
        let p = self.curve.point(t);
        let d1 = self.curve.tangent(t);
        let d2 = self.curve.second_derivative(t);
        let mut gp = vec![0.0; self.curve.dim];
        self.poly.gradient(&p, &mut gp);
        let dfdt: f64 = gp.iter().zip(&d1).map(|(a, b)| a * b).sum();
        // implicit differentiation of (x - c(t)) · c'(t) = 0
        let speed2: f64 = d1.iter().map(|v| v * v).sum();
        let curv: f64 = x.iter().zip(&p).zip(&d2).map(|((xi, pi), ci)| (xi - pi) * ci).sum();
        let denom = speed2 - curv;
        for (o, v) in out.iter_mut().zip(&d1) {
            *o = dfdt * v / denom;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn finite_diff(f: &dyn ScalarField, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|k| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[k] += h;
                b[k] -= h;
                (f.value(&a) - f.value(&b)) / (2.0 * h)
            })
            .collect()
    }

    fn assert_grad(f: &dyn ScalarField, x: &[f64]) {
        let g = f.gradient_vec(x);
        let fd = finite_diff(f, x);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-5 * (1.0 + b.abs()), "{g:?} vs {fd:?}");
        }
    }

    #[test]
    fn monomial_count() {
        assert_eq!(CubicPolynomial::monomials_for(5).len(), 56);
        assert_eq!(CubicPolynomial::monomials_for(2).len(), 10);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = CubicPolynomial::random(3, 3.0, &mut rng);
        assert_grad(&p, &[0.3, -0.7, 1.1]);

        let s = SphereIndex { poly: CubicPolynomial::random(2, 3.0, &mut rng), ambient: 2 };
        assert_grad(&s, &[0.9, 0.4]);

        let s3 = SphereIndex { poly: CubicPolynomial::random(3, 3.0, &mut rng), ambient: 4 };
        assert_grad(&s3, &[0.2, 0.9, -0.3, 0.5]);

        let q = Quadratic {
            center: vec![0.1, 0.2],
            gradient: vec![1.0, -1.0],
            hessian: Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        };
        assert_grad(&q, &[0.4, -0.3]);

        let h = HelixIndex { curve: HelixCurve::new(5, 0.8), poly: CubicPolynomial::random(5, 3.0, &mut rng) };
        let mut x = h.curve.point(2.0);
        x[0] += 0.1;
        x[3] -= 0.15;
        assert_grad(&h, &x);
    }

    #[test]
    fn sphere_index_is_radially_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = SphereIndex { poly: CubicPolynomial::random(2, 3.0, &mut rng), ambient: 2 };
        let a = s.value(&[0.6, 0.8]);
        let b = s.value(&[0.6 * 1.3, 0.8 * 1.3]);
        assert!((a - b).abs() < 1e-12);
    }
}
