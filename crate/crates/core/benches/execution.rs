use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use legop::baseline::{nw_cv_fit, CvSpec};
use legop::datagen::{gen_helix, CubicLabelSpec, HelixSpec};
use legop::driver::{predict_batch, run_legop, LegopConfig};
use legop::par::Execution;

const POLICIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench_single_center(c: &mut Criterion) {
    let data = gen_helix(&HelixSpec::new(5, 2000, 1), &CubicLabelSpec::new(1), 0.05).unwrap().dataset;
    let center = data.row(0).to_vec();
    let mut group = c.benchmark_group("loo_fits_per_iteration");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        let config = LegopConfig { iterations: 10, execution: exec, ..LegopConfig::default() };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_legop(&data, &center, &config).unwrap())
        });
    }
    group.finish();
}

fn bench_batch(c: &mut Criterion) {
    let data = gen_helix(&HelixSpec::new(3, 1000, 2), &CubicLabelSpec::new(2), 0.05).unwrap().dataset;
    let centers: Vec<Vec<f64>> = (0..16).map(|k| data.row(k * 50).to_vec()).collect();
    let mut group = c.benchmark_group("predict_batch");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        let config = LegopConfig { iterations: 10, subsample: 100, execution: exec, ..LegopConfig::default() };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| predict_batch(&data, &centers, &config).unwrap())
        });
    }
    group.finish();
}

fn bench_cross_validation(c: &mut Criterion) {
    let data = gen_helix(&HelixSpec::new(5, 1500, 3), &CubicLabelSpec::new(3), 0.05).unwrap().dataset;
    let mut group = c.benchmark_group("nw_cross_validation");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        let spec = CvSpec { execution: exec, ..CvSpec::new(1) };
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| nw_cv_fit(&data, &spec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_single_center, bench_batch, bench_cross_validation);
criterion_main!(benches);
