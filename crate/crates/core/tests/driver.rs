use legop::datagen::{gen_helix, CubicLabelSpec, HelixSpec};
use legop::dataset::LabeledDataset;
use legop::driver::{predict_batch, run_legop, weighted_subsample, LegopConfig};
use legop::linalg::{self, Mat};
use legop::par::Execution;
use legop::smoother::WeightVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn helix(n: usize, dim: usize, seed: u64) -> legop::datagen::GeneratedData {
    gen_helix(&HelixSpec::new(dim, n, seed), &CubicLabelSpec::new(seed), 0.05).unwrap()
}

fn small_config(seed: u64) -> LegopConfig {
    LegopConfig { iterations: 25, subsample: 80, seed, ..LegopConfig::default() }
}

#[test]
fn reruns_are_bit_identical() {
    let data = helix(600, 3, 1).dataset;
    let c = data.row(5).to_vec();
    for exec in [Execution::Sequential, Execution::Parallel] {
        let cfg = LegopConfig { execution: exec, ..small_config(3) };
        assert_eq!(run_legop(&data, &c, &cfg).unwrap(), run_legop(&data, &c, &cfg).unwrap());
    }
    let seq = run_legop(&data, &c, &LegopConfig { execution: Execution::Sequential, ..small_config(3) }).unwrap();
    let par = run_legop(&data, &c, &LegopConfig { execution: Execution::Parallel, ..small_config(3) }).unwrap();
    assert_eq!(seq, par);
    let other = run_legop(&data, &c, &small_config(4)).unwrap();
    assert_ne!(seq.trace.records[1].subsample_hash, other.trace.records[1].subsample_hash);
}

#[test]
fn best_mse_is_nonincreasing_and_matches_prediction_iteration() {
    let data = helix(800, 3, 2).dataset;
    let run = run_legop(&data, data.row(40), &small_config(1)).unwrap();
    let recs = &run.trace.records;
    let mut previous = f64::INFINITY;
    let mut running_min = f64::INFINITY;
    for r in recs {
        running_min = running_min.min(r.loo_mse);
        assert!(r.best_mse <= previous);
        assert!(r.best_mse >= running_min);
        previous = r.best_mse;
    }
    let best = run.trace.best_iteration.expect("some iteration was accepted");
    assert_eq!(recs[best].loo_mse, recs.last().unwrap().best_mse);
}

#[test]
fn trace_normalization_holds_every_iteration() {
    let data = helix(700, 4, 3).dataset;
    let run = run_legop(&data, data.row(9), &small_config(5)).unwrap();
    for r in run.trace.records.iter().skip(1) {
        let tr: f64 = r.metric_eigenvalues.iter().sum();
        assert!((tr * r.t - 1.0).abs() < 1e-10, "iteration {}: t·tr(M) = {}", r.iteration, tr * r.t);
        assert!(r.metric_eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        assert!(r.inverse_eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }
    let first = &run.trace.records[0];
    assert!(first.metric_eigenvalues.iter().all(|&v| (v - 5.0).abs() < 1e-12));
}

#[test]
fn linear_data_is_recovered_and_agop_aligns_with_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let slope = [1.5, -0.8];
    let rows: Vec<Vec<f64>> =
        (0..500).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let labels = rows.iter().map(|r| 0.3 + slope[0] * r[0] + slope[1] * r[1]).collect();
    let data = LabeledDataset::from_rows(&rows, labels).unwrap();
    let c = [0.1, -0.2];
    let run = run_legop(&data, &c, &LegopConfig { iterations: 40, seed: 2, ..LegopConfig::default() }).unwrap();
    let truth = 0.3 + slope[0] * c[0] + slope[1] * c[1];
    assert!((run.prediction - truth).abs() < 1e-6, "{} vs {truth}", run.prediction);
    let gn = (slope[0] * slope[0] + slope[1] * slope[1]).sqrt();
    for r in run.trace.records.iter().skip(1) {
        let l = Mat::from_row_slice(2, 2, &r.agop);
        let (_, vecs) = linalg::sym_eigen(&l);
        let lead = [vecs[(0, 1)], vecs[(1, 1)]];
        let cos = (lead[0] * slope[0] + lead[1] * slope[1]) / gn;
        assert!(cos.abs() > 0.999, "iteration {}: |cos| = {}", r.iteration, cos.abs());
    }
}

#[test]
fn constant_labels_predict_the_constant() {
    let data = helix(400, 3, 4).dataset.with_labels(vec![-2.75; 400]).unwrap();
    let run = run_legop(&data, data.row(3), &small_config(8)).unwrap();
    assert!((run.prediction + 2.75).abs() < 1e-10, "{}", run.prediction);
    for r in &run.trace.records {
        assert!(r.loo_mse < 1e-20);
    }
}

#[test]
fn subsample_frequencies_follow_weights() {
    let w = WeightVector::from_raw(vec![0.7, 0.2, 0.1]).unwrap();
    let mut counts = [0usize; 3];
    let trials = 100_000;
    for seed in 0..trials {
        let pick = weighted_subsample(&w, 1, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        counts[pick[0]] += 1;
    }
    for (c, p) in counts.iter().zip([0.7, 0.2, 0.1]) {
        assert!((*c as f64 / trials as f64 - p).abs() < 0.01, "{counts:?}");
    }
}

#[test]
fn batch_matches_single_runs_and_permutes() {
    let data = helix(500, 3, 6).dataset;
    let cfg = small_config(9);
    let centers: Vec<Vec<f64>> = (0..5).map(|k| data.row(k * 37).to_vec()).collect();
    let single = run_legop(&data, &centers[2], &cfg).unwrap();
    let one = predict_batch(&data, &centers[2..3], &cfg).unwrap();
    assert_eq!(one[0].as_ref().unwrap(), &single);

    let batch = predict_batch(&data, &centers, &cfg).unwrap();
    let order = [3, 0, 4, 2, 1];
    let permuted: Vec<Vec<f64>> = order.iter().map(|&k| centers[k].clone()).collect();
    let pbatch = predict_batch(&data, &permuted, &cfg).unwrap();
    for (pos, &k) in order.iter().enumerate() {
        assert_eq!(pbatch[pos], batch[k]);
    }
}

#[test]
fn batch_mse_over_helix_centers_matches_single_runs() {
    let train = helix(600, 5, 7);
    let test = gen_helix(&HelixSpec::new(5, 500, 70), &CubicLabelSpec::new(7), 0.0).unwrap();
    let centers: Vec<Vec<f64>> = (0..500).map(|k| test.dataset.row(k).to_vec()).collect();
    let cfg = LegopConfig { iterations: 8, subsample: 40, seed: 1, ..LegopConfig::default() };
    let batch = predict_batch(&train.dataset, &centers, &cfg).unwrap();
    let mse = |preds: Vec<f64>| {
        preds.iter().zip(&test.truth).map(|(p, t)| (p - t.clean_label).powi(2)).sum::<f64>() / preds.len() as f64
    };
    let batch_mse = mse(batch.iter().map(|r| r.as_ref().unwrap().prediction).collect());
    let single_mse = mse(centers.iter().map(|c| run_legop(&train.dataset, c, &cfg).unwrap().prediction).collect());
    assert_eq!(batch_mse, single_mse);
}

#[test]
fn empty_neighborhood_truncates_instead_of_failing() {
    // two tight clusters far apart; the query sits in one of them
    let mut rows = Vec::new();
    for k in 0..30 {
        let a = k as f64 * 0.01;
        rows.push(vec![a, (a * 7.0).sin() * 0.01]);
        rows.push(vec![10.0 + a, (a * 5.0).cos() * 0.01]);
    }
    let labels = rows.iter().map(|r| r[0] + r[1]).collect();
    let data = LabeledDataset::from_rows(&rows, labels).unwrap();
    let cfg = LegopConfig { iterations: 10, subsample: 20, exclusion_radius: Some(0.05), ..LegopConfig::default() };
    let run = run_legop(&data, &[5.0, 0.0], &cfg);
    match run {
        Ok(r) => assert!(r.trace.truncated.is_some()),
        Err(e) => assert_eq!(e, legop::error::LegopError::EmptyNeighborhood),
    }
}

#[test]
fn label_shift_leaves_agop_path_unchanged() {
    let data = helix(500, 3, 11).dataset;
    let shifted = data.with_labels(data.labels().iter().map(|y| y - 40.0).collect()).unwrap();
    let cfg = small_config(2);
    let a = run_legop(&data, data.row(100), &cfg).unwrap();
    let b = run_legop(&shifted, data.row(100), &cfg).unwrap();
    assert_eq!(a.trace.records.len(), b.trace.records.len());
    for (x, y) in a.trace.records.iter().zip(&b.trace.records) {
        let scale = x.agop.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (p, q) in x.agop.iter().zip(&y.agop) {
            assert!((p - q).abs() <= 1e-9 * scale);
        }
        assert_eq!(x.subsample_hash, y.subsample_hash);
    }
}
