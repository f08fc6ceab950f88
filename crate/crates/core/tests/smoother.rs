use legop::dataset::LabeledDataset;
use legop::linalg::{self, Mat};
use legop::smoother::{egop_form, mahalanobis_weights, nw_estimate, MetricMatrix};
use proptest::prelude::*;

fn dataset(dim: usize) -> impl Strategy<Value = LabeledDataset> {
    (2usize..25).prop_flat_map(move |n| {
        (prop::collection::vec(-2.0..2.0f64, n * dim), prop::collection::vec(-5.0..5.0f64, n))
            .prop_map(move |(x, y)| LabeledDataset::from_flat(dim, x, y).unwrap())
    })
}

/// `BBᵀ` for a random square `B`: PSD, possibly near-singular.
fn psd(dim: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-1.5..1.5f64, dim * dim).prop_map(move |v| {
        let b = Mat::from_row_slice(dim, dim, &v);
        linalg::symmetrize(&(&b * b.transpose()))
    })
}

fn case(dim: usize) -> impl Strategy<Value = (LabeledDataset, Vec<f64>, MetricMatrix)> {
    (dataset(dim), prop::collection::vec(-2.0..2.0f64, dim), psd(dim))
        .prop_map(|(d, c, m)| (d, c, MetricMatrix::new(m).unwrap()))
}

fn rotation(dim: usize, seed: &[f64]) -> Mat {
    // QR of a seeded matrix gives an orthogonal matrix
    let a = Mat::from_row_slice(dim, dim, seed) + Mat::identity(dim, dim) * 0.1;
    a.qr().q()
}

proptest! {
    #[test]
    fn affine_label_equivariance((data, c, m) in (1usize..4).prop_flat_map(case), a in -3.0..3.0f64, b in -10.0..10.0f64) {
        let base = nw_estimate(&data, &c, &m, None).unwrap();
        let moved = data.with_labels(data.labels().iter().map(|y| a * y + b).collect()).unwrap();
        let est = nw_estimate(&moved, &c, &m, None).unwrap();
        prop_assert!((est - (a * base + b)).abs() <= 1e-10 * (1.0 + b.abs() + (a * base).abs()));
    }

    #[test]
    fn rotation_equivariance((data, c, m) in (2usize..4).prop_flat_map(case), seed in prop::collection::vec(-1.0..1.0f64, 9)) {
        let d = data.dim();
        let u = rotation(d, &seed[..d * d]);
        let rotate = |v: &[f64]| -> Vec<f64> { (0..d).map(|a| (0..d).map(|k| u[(a, k)] * v[k]).sum()).collect() };
        let rows: Vec<Vec<f64>> = (0..data.len()).map(|i| rotate(data.row(i))).collect();
        let rotated = LabeledDataset::from_rows(&rows, data.labels().to_vec()).unwrap();
        let rm = MetricMatrix::new(linalg::symmetrize(&(&u * m.matrix() * u.transpose()))).unwrap();
        let w = mahalanobis_weights(&data, &c, &m, None).unwrap();
        let wr = mahalanobis_weights(&rotated, &rotate(&c), &rm, None).unwrap();
        for (x, y) in w.weights.iter().zip(&wr.weights) {
            prop_assert!((x - y).abs() <= 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn scaling_keeps_weight_order((data, c, m) in (1usize..4).prop_flat_map(case), scale in 0.05..20.0f64) {
        let w = mahalanobis_weights(&data, &c, &m, None).unwrap().weights;
        let sm = MetricMatrix::new(m.matrix() * scale).unwrap();
        let ws = mahalanobis_weights(&data, &c, &sm, None).unwrap().weights;
        for i in 0..w.len() {
            for j in 0..w.len() {
                // strict order may collapse to a tie only through underflow
                if w[i] < w[j] {
                    prop_assert!(ws[i] <= ws[j]);
                }
            }
        }
    }

    #[test]
    fn estimate_within_label_range((data, c, m) in (1usize..4).prop_flat_map(case), radius in prop::option::of(0.5..4.0f64)) {
        match mahalanobis_weights(&data, &c, &m, radius) {
            Ok(w) => {
                let used: Vec<f64> = (0..data.len()).filter(|&i| w.weights[i] > 0.0).map(|i| data.label(i)).collect();
                let lo = used.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = used.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let est = nw_estimate(&data, &c, &m, radius).unwrap();
                prop_assert!(est >= lo - 1e-12 && est <= hi + 1e-12);
                prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            Err(e) => prop_assert_eq!(e, legop::error::LegopError::EmptyNeighborhood),
        }
    }

    #[test]
    fn egop_form_nonnegative_and_bilinear(l1 in psd(3), l2 in psd(3), s1 in psd(3), s2 in psd(3), a in 0.0..5.0f64, b in 0.0..5.0f64) {
        let w = |l: &Mat, s: &Mat| egop_form(l, s).unwrap();
        prop_assert!(w(&l1, &s1) >= -1e-12);
        let scale = 1.0 + w(&l1, &s1).abs() + w(&l2, &s1).abs() + w(&l1, &s2).abs();
        let lin_first = w(&(&l1 * a + &l2 * b), &s1) - (a * w(&l1, &s1) + b * w(&l2, &s1));
        let lin_second = w(&l1, &(&s1 * a + &s2 * b)) - (a * w(&l1, &s1) + b * w(&l1, &s2));
        prop_assert!(lin_first.abs() <= 1e-10 * scale * (1.0 + a + b));
        prop_assert!(lin_second.abs() <= 1e-10 * scale * (1.0 + a + b));
        // trace of the product equals the entrywise double sum
        let brute: f64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| l1[(i, j)] * s1[(i, j)]).sum();
        prop_assert!((w(&l1, &s1) - brute).abs() <= 1e-12 * (1.0 + brute.abs()));
    }
}

#[test]
fn rank_one_form_reads_the_quadratic_form() {
    let g = [1.0, -2.0, 0.5];
    let l = Mat::from_fn(3, 3, |i, j| g[i] * g[j]);
    let s = Mat::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.0, 0.3, 0.0, 0.3, 0.5]);
    let t = linalg::quad_form(&s, &g);
    assert!((egop_form(&l, &s).unwrap() - t).abs() < 1e-12);
}

#[test]
fn equidistant_pair_gives_midpoint_under_anisotropic_metric() {
    let m = MetricMatrix::new(Mat::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0])).unwrap();
    let data = LabeledDataset::from_rows(&[vec![0.4, -0.2], vec![-0.4, 0.2]], vec![0.0, 2.0]).unwrap();
    assert!((nw_estimate(&data, &[0.0, 0.0], &m, None).unwrap() - 1.0).abs() < 1e-15);
}
