//! Reproducible experiment harness.
//!
//! Each experiment is described by a serializable [`ExperimentSpec`]. Running
//! it yields an [`ExperimentReport`] that embeds the spec, so
//! [`replay`] can regenerate the result table bit for bit. Conditions run
//! through [`map_indexed`] and the table is assembled in condition order.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::baseline::{nw_cv_fit, nw_cv_predict, CvSpec};
use crate::datagen::{gen_helix, image_to_dataset, CubicLabelSpec, HelixSpec, Pgm, DEFAULT_LABEL_NOISE};
use crate::dataset::LabeledDataset;
use crate::driver::{oscillation_statistic, predict_batch, run_legop, LegopConfig, LegopRun};
use crate::error::{LegopError, Result};
use crate::functions::{Quadratic, ScalarField};
use crate::linalg::Mat;
use crate::par::{map_indexed, Execution};
use crate::recurrence::{loglog_slope, matrix_recurrence, rate_fit, Direction, RecurrenceSpec, TestFamily};
use crate::smoother::mahalanobis_weights;

/// Salt separating the held-out test stream from the training stream, so the
/// test points for a seed are the same at every training size.
const TEST_SEED_SALT: u64 = 0x07e5_75e7_d00d_f00d;

/// Noisy-helix regression setup shared by the learning-rate and baseline
/// experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelixTask {
    pub tau: f64,
    pub noise_radius: f64,
    /// Standard deviation of Gaussian label noise on the training set.
    pub label_noise: f64,
    /// Held-out centers per seed, scored against clean labels.
    pub test_points: usize,
}

impl Default for HelixTask {
    fn default() -> Self {
        Self { tau: 0.8, noise_radius: 0.5, label_noise: DEFAULT_LABEL_NOISE, test_points: 200 }
    }
}

/// Training data, held-out centers and their clean labels.
pub struct HelixSplit {
    pub train: LabeledDataset,
    pub centers: Vec<Vec<f64>>,
    pub clean: Vec<f64>,
}

impl HelixTask {
    pub fn split(&self, dim: usize, n: usize, seed: u64) -> Result<HelixSplit> {
        let labels = CubicLabelSpec::new(seed);
        let train_spec = HelixSpec { tau: self.tau, noise_radius: self.noise_radius, ..HelixSpec::new(dim, n, seed) };
        let train = gen_helix(&train_spec, &labels, self.label_noise)?.dataset;
        let test_spec = HelixSpec { n: self.test_points, seed: seed ^ TEST_SEED_SALT, ..train_spec };
        let test = gen_helix(&test_spec, &labels, 0.0)?;
        let centers = (0..test.dataset.len()).map(|i| test.dataset.row(i).to_vec()).collect();
        let clean = test.truth.iter().map(|t| t.clean_label).collect();
        Ok(HelixSplit { train, centers, clean })
    }
}

/// Mean squared error over the centers whose prediction succeeded, and the
/// number that failed.
fn scored<T>(predictions: &[Result<T>], value: impl Fn(&T) -> f64, clean: &[f64]) -> (f64, usize) {
    let mut sum = 0.0;
    let mut ok = 0usize;
    for (p, y) in predictions.iter().zip(clean) {
        if let Ok(p) = p {
            sum += (value(p) - y).powi(2);
            ok += 1;
        }
    }
    let mse = if ok > 0 { sum / ok as f64 } else { f64::NAN };
    (mse, predictions.len() - ok)
}

fn legop_mse(split: &HelixSplit, config: &LegopConfig) -> Result<(f64, usize)> {
    let runs = predict_batch(&split.train, &split.centers, config)?;
    Ok(scored(&runs, |r: &LegopRun| r.prediction, &split.clean))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningRateSpec {
    pub dims: Vec<usize>,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub task: HelixTask,
    pub legop: LegopConfig,
}

impl LearningRateSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            dims: vec![3, 5],
            sizes: vec![500, 1000, 2000, 4000, 8000],
            seeds: vec![seed, seed + 1, seed + 2],
            task: HelixTask::default(),
            legop: LegopConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumSpec {
    pub dim: usize,
    pub n: usize,
    /// Diagonal of the Hessian; the gradient at the center is `e₁`.
    pub hessian_diagonal: Vec<f64>,
    pub label_noise: f64,
    pub seeds: Vec<u64>,
    pub momenta: Vec<f64>,
    pub window: (usize, usize),
    pub legop: LegopConfig,
}

impl MomentumSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            dim: 3,
            n: 2000,
            hessian_diagonal: vec![1.0, 2.0, 3.0],
            label_noise: 0.0,
            seeds: vec![seed, seed + 1, seed + 2],
            momenta: vec![0.7, 1.0],
            window: (20, 80),
            legop: LegopConfig { iterations: 100, ..LegopConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereEigsSpec {
    pub recurrence: RecurrenceSpec,
    pub early_window: (usize, usize),
    pub late_window: (usize, usize),
}

impl SphereEigsSpec {
    pub fn new(seed: u64) -> Self {
        let mut recurrence = RecurrenceSpec::new(TestFamily::Sphere { coefficient_seed: seed });
        recurrence.covariance_cap = Some(0.01);
        recurrence.seed = seed;
        Self { recurrence, early_window: (10, 30), late_window: (60, 100) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImageSource {
    Pgm {
        path: String,
    },
    /// Built-in test pattern: a diagonal step edge plus concentric rings.
    Synthetic {
        width: usize,
        height: usize,
    },
}

impl ImageSource {
    pub fn load(&self) -> Result<Pgm> {
        match self {
            ImageSource::Pgm { path } => Pgm::read(std::path::Path::new(path)),
            ImageSource::Synthetic { width, height } => Ok(synthetic_image(*width, *height)),
        }
    }
}

/// 8-bit test pattern with a sharp diagonal edge on the left half and smooth
/// rings on the right, giving both strongly and weakly anisotropic regions.
pub fn synthetic_image(width: usize, height: usize) -> Pgm {
    let mut pixels = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let (y, x) = (r as f64 / height.max(1) as f64, c as f64 / width.max(1) as f64);
            let v = if x < 0.5 {
                if x + 0.5 * y < 0.55 {
                    0.2
                } else {
                    0.8
                }
            } else {
                let d = ((x - 0.75).powi(2) + (y - 0.5).powi(2)).sqrt();
                0.5 + 0.4 * (40.0 * d).cos()
            };
            pixels.push((v * 255.0).round() as u16);
        }
    }
    Pgm { width, height, maxval: 255, pixels }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageLocalizeSpec {
    pub image: ImageSource,
    /// Query pixels as `(row, col)`.
    pub centers: Vec<(usize, usize)>,
    pub top_k: usize,
    /// Iteration count; small values keep the localizations wide.
    pub stop_iter: usize,
    pub legop: LegopConfig,
}

impl ImageLocalizeSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            image: ImageSource::Synthetic { width: 64, height: 64 },
            centers: vec![(20, 13), (32, 48), (50, 40)],
            top_k: 125,
            stop_iter: 10,
            legop: LegopConfig { seed, ..LegopConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCompareSpec {
    pub dim: usize,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub task: HelixTask,
    pub folds: usize,
    pub legop: LegopConfig,
}

impl BaselineCompareSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            dim: 5,
            n: 4000,
            seeds: vec![seed, seed + 1, seed + 2],
            task: HelixTask::default(),
            folds: 5,
            legop: LegopConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum ExperimentSpec {
    LearningRate(LearningRateSpec),
    Momentum(MomentumSpec),
    SphereEigs(SphereEigsSpec),
    ImageLocalize(ImageLocalizeSpec),
    BaselineCompare(BaselineCompareSpec),
}

pub const EXPERIMENT_NAMES: [&str; 5] =
    ["learning-rate", "momentum", "sphere-eigs", "image-localize", "baseline-compare"];

impl ExperimentSpec {
    /// Default spec for a named experiment.
    pub fn by_name(name: &str, seed: u64) -> Option<Self> {
        Some(match name {
            "learning-rate" => ExperimentSpec::LearningRate(LearningRateSpec::new(seed)),
            "momentum" => ExperimentSpec::Momentum(MomentumSpec::new(seed)),
            "sphere-eigs" => ExperimentSpec::SphereEigs(SphereEigsSpec::new(seed)),
            "image-localize" => ExperimentSpec::ImageLocalize(ImageLocalizeSpec::new(seed)),
            "baseline-compare" => ExperimentSpec::BaselineCompare(BaselineCompareSpec::new(seed)),
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentSpec::LearningRate(_) => EXPERIMENT_NAMES[0],
            ExperimentSpec::Momentum(_) => EXPERIMENT_NAMES[1],
            ExperimentSpec::SphereEigs(_) => EXPERIMENT_NAMES[2],
            ExperimentSpec::ImageLocalize(_) => EXPERIMENT_NAMES[3],
            ExperimentSpec::BaselineCompare(_) => EXPERIMENT_NAMES[4],
        }
    }

    /// Sets the execution policy of every parallel stage.
    pub fn set_execution(&mut self, exec: Execution) {
        match self {
            ExperimentSpec::LearningRate(s) => s.legop.execution = exec,
            ExperimentSpec::Momentum(s) => s.legop.execution = exec,
            ExperimentSpec::SphereEigs(s) => s.recurrence.execution = exec,
            ExperimentSpec::ImageLocalize(s) => s.legop.execution = exec,
            ExperimentSpec::BaselineCompare(s) => s.legop.execution = exec,
        }
    }

    pub fn run(&self) -> Result<ExperimentReport> {
        let start = Instant::now();
        let (rows, summary) = match self {
            ExperimentSpec::LearningRate(s) => learning_rate(s)?,
            ExperimentSpec::Momentum(s) => momentum(s)?,
            ExperimentSpec::SphereEigs(s) => sphere_eigs(s)?,
            ExperimentSpec::ImageLocalize(s) => image_localize(s)?,
            ExperimentSpec::BaselineCompare(s) => baseline_compare(s)?,
        };
        let config = serde_json::to_value(self).map_err(|e| LegopError::Parse(e.to_string()))?;
        Ok(ExperimentReport {
            name: self.name().to_string(),
            config,
            rows,
            summary,
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// One condition of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub condition: String,
    /// Training size, when the condition has one.
    pub n: Option<usize>,
    /// Iteration index, for per-iteration traces.
    pub iteration: Option<usize>,
    pub values: BTreeMap<String, Value>,
}

impl ReportRow {
    fn new(condition: String, n: Option<usize>, iteration: Option<usize>, values: Value) -> Self {
        let values = match values {
            Value::Object(m) => m.into_iter().collect(),
            other => BTreeMap::from([("value".to_string(), other)]),
        };
        Self { condition, n, iteration, values }
    }

    /// Numeric value of a column, `NaN` when absent or non-numeric.
    pub fn number(&self, key: &str) -> f64 {
        self.values.get(key).and_then(Value::as_f64).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    /// The fully resolved [`ExperimentSpec`].
    pub config: Value,
    pub rows: Vec<ReportRow>,
    pub summary: BTreeMap<String, Value>,
    pub wall_seconds: f64,
}

impl ExperimentReport {
    pub fn spec(&self) -> Result<ExperimentSpec> {
        serde_json::from_value(self.config.clone()).map_err(|e| LegopError::Parse(e.to_string()))
    }

    pub fn summary_number(&self, key: &str) -> f64 {
        self.summary.get(key).and_then(Value::as_f64).unwrap_or(f64::NAN)
    }
}

/// Reruns the experiment recorded in a report.
pub fn replay(report: &ExperimentReport) -> Result<ExperimentReport> {
    report.spec()?.run()
}

type Table = (Vec<ReportRow>, BTreeMap<String, Value>);

/// JSON for a float, with non-finite values as `null`.
fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

fn learning_rate(spec: &LearningRateSpec) -> Result<Table> {
    if spec.sizes.len() < 2 || spec.seeds.is_empty() || spec.dims.is_empty() {
        return Err(LegopError::InvalidConfig("need two sizes, one seed and one dimension".into()));
    }
    let conditions: Vec<(usize, usize, u64)> = spec
        .dims
        .iter()
        .flat_map(|&d| spec.sizes.iter().flat_map(move |&n| spec.seeds.iter().map(move |&s| (d, n, s))))
        .collect();
    let results = map_indexed(spec.legop.execution, conditions.len(), |k| {
        let (d, n, s) = conditions[k];
        let split = spec.task.split(d, n, s)?;
        legop_mse(&split, &LegopConfig { seed: s, ..spec.legop.clone() })
    });
    let mut rows = Vec::with_capacity(conditions.len());
    let mut by_cell: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (&(d, n, s), r) in conditions.iter().zip(results) {
        let (mse, failed) = r?;
        by_cell.entry((d, n)).or_default().push(mse);
        rows.push(ReportRow::new(
            format!("dim{d}-n{n}-seed{s}"),
            Some(n),
            None,
            json!({ "dim": d, "seed": s, "mse": num(mse), "failed": failed }),
        ));
    }
    let mut summary = BTreeMap::new();
    for &d in &spec.dims {
        let ns: Vec<f64> = spec.sizes.iter().map(|&n| n as f64).collect();
        let means: Vec<f64> =
            spec.sizes.iter().map(|&n| by_cell[&(d, n)].iter().sum::<f64>() / spec.seeds.len() as f64).collect();
        for (&n, &m) in spec.sizes.iter().zip(&means) {
            summary.insert(format!("dim{d}_n{n}_mean_mse"), num(m));
        }
        let slope = loglog_slope(&ns, &means).map(|f| f.slope).unwrap_or(f64::NAN);
        summary.insert(format!("dim{d}_slope"), num(slope));
    }
    Ok((rows, summary))
}

/// Uniform features on `[-1, 1]^D` with quadratic labels
/// `x₁ + ½ Σ h_k x_k²` plus uniform noise of half-width `label_noise`.
pub fn quadratic_dataset(spec: &MomentumSpec, seed: u64) -> Result<LabeledDataset> {
    let d = spec.dim;
    if d < 2 || spec.hessian_diagonal.len() != d {
        return Err(LegopError::InvalidConfig("quadratic data needs dim >= 2 and a matching Hessian diagonal".into()));
    }
    let mut gradient = vec![0.0; d];
    gradient[0] = 1.0;
    let f = Quadratic {
        center: vec![0.0; d],
        gradient,
        hessian: Mat::from_diagonal(&spec.hessian_diagonal.clone().into()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let noise = if spec.label_noise > 0.0 { rng.random_range(-spec.label_noise..spec.label_noise) } else { 0.0 };
        labels.push(f.value(&x) + noise);
        rows.push(x);
    }
    LabeledDataset::from_rows(&rows, labels)
}

fn momentum(spec: &MomentumSpec) -> Result<Table> {
    if spec.momenta.len() != 2 {
        return Err(LegopError::InvalidConfig("momentum comparison needs exactly two momenta".into()));
    }
    let conditions: Vec<(u64, f64)> =
        spec.seeds.iter().flat_map(|&s| spec.momenta.iter().map(move |&b| (s, b))).collect();
    let stats = map_indexed(spec.legop.execution, conditions.len(), |k| {
        let (s, beta) = conditions[k];
        let data = quadratic_dataset(spec, s)?;
        let config = LegopConfig { momentum: beta, seed: s, ..spec.legop.clone() };
        let run = run_legop(&data, &vec![0.0; spec.dim], &config)?;
        oscillation_statistic(&run.trace, spec.window)
    });
    let mut rows = Vec::new();
    let mut per_seed: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (&(s, beta), stat) in conditions.iter().zip(stats) {
        let stat = stat?;
        per_seed.entry(s).or_default().push(stat);
        rows.push(ReportRow::new(
            format!("seed{s}-beta{beta}"),
            Some(spec.n),
            None,
            json!({ "seed": s, "momentum": beta, "oscillation": num(stat) }),
        ));
    }
    // ratio of the second momentum's statistic to the first's
    let mut ratios: Vec<f64> = spec.seeds.iter().map(|s| per_seed[s][1] / per_seed[s][0]).collect();
    let mut summary = BTreeMap::new();
    for (s, r) in spec.seeds.iter().zip(&ratios) {
        summary.insert(format!("seed{s}_ratio"), num(*r));
    }
    summary.insert("min_ratio".into(), num(ratios.iter().copied().fold(f64::INFINITY, f64::min)));
    summary.insert("median_ratio".into(), num(median(&mut ratios)));
    Ok((rows, summary))
}

fn sphere_eigs(spec: &SphereEigsSpec) -> Result<Table> {
    let trace = matrix_recurrence(&spec.recurrence)?;
    let rows = trace
        .records
        .iter()
        .map(|r| {
            let mut v = json!({ "t": num(r.t), "eigenvalues": r.eigenvalues, "gradient": num(r.gradient_form) });
            for (name, f) in trace.directions.iter().zip(&r.direction_forms) {
                v[name] = num(*f);
            }
            ReportRow::new(format!("iter{}", r.i), None, Some(r.i), v)
        })
        .collect();
    let mut summary = BTreeMap::new();
    if let Some(reason) = &trace.truncated {
        summary.insert("truncated".into(), Value::String(reason.clone()));
    }
    let mut series: Vec<(String, Direction)> = vec![("gradient".into(), Direction::Gradient)];
    series.extend(trace.directions.iter().enumerate().map(|(k, n)| (n.clone(), Direction::Monitored(k))));
    for (label, window) in [("early", spec.early_window), ("late", spec.late_window)] {
        for (name, dir) in &series {
            let slope = rate_fit(&trace, *dir, window).map(|f| f.slope).unwrap_or(f64::NAN);
            summary.insert(format!("{label}_{name}_slope"), num(slope));
        }
    }
    Ok((rows, summary))
}

fn image_localize(spec: &ImageLocalizeSpec) -> Result<Table> {
    if spec.stop_iter == 0 || spec.top_k == 0 {
        return Err(LegopError::InvalidConfig("stop-iter and top-k must be positive".into()));
    }
    let image = spec.image.load()?;
    let data = image_to_dataset(&image)?;
    let coord = |k: usize, size: usize| if size == 1 { 0.5 } else { k as f64 / (size - 1) as f64 };
    let mut centers = Vec::with_capacity(spec.centers.len());
    for &(r, c) in &spec.centers {
        if r >= image.height || c >= image.width {
            return Err(LegopError::InvalidConfig(format!("pixel ({r}, {c}) outside the image")));
        }
        centers.push(vec![coord(r, image.height), coord(c, image.width)]);
    }
    let config = LegopConfig { iterations: spec.stop_iter, ..spec.legop.clone() };
    let runs = predict_batch(&data, &centers, &config)?;
    let mut rows = Vec::with_capacity(runs.len());
    for ((&(r, c), center), run) in spec.centers.iter().zip(&centers).zip(runs) {
        let run = run?;
        let w = mahalanobis_weights(&data, center, &run.metric, config.exclusion_radius)?;
        let mut order: Vec<usize> = (0..w.len()).filter(|&i| w.weights[i] > 0.0).collect();
        order.sort_by(|&a, &b| w.weights[b].total_cmp(&w.weights[a]).then(a.cmp(&b)));
        order.truncate(spec.top_k);
        let pixels: Vec<[usize; 2]> = order.iter().map(|&i| [i / image.width, i % image.width]).collect();
        rows.push(ReportRow::new(
            format!("pixel{r}-{c}"),
            None,
            Some(spec.stop_iter),
            json!({
                "row": r,
                "col": c,
                "prediction": num(run.prediction),
                "metric_eigenvalues": run.metric.eigenvalues(),
                "top_pixels": pixels,
            }),
        ));
    }
    Ok((rows, BTreeMap::new()))
}

fn baseline_compare(spec: &BaselineCompareSpec) -> Result<Table> {
    if spec.seeds.is_empty() {
        return Err(LegopError::InvalidConfig("need at least one seed".into()));
    }
    let results = map_indexed(spec.legop.execution, spec.seeds.len(), |k| -> Result<(f64, f64, f64, usize)> {
        let s = spec.seeds[k];
        let split = spec.task.split(spec.dim, spec.n, s)?;
        let (legop, failed) = legop_mse(&split, &LegopConfig { seed: s, ..spec.legop.clone() })?;
        let cv =
            nw_cv_fit(&split.train, &CvSpec { folds: spec.folds, execution: spec.legop.execution, ..CvSpec::new(s) })?;
        let nw = nw_cv_predict(&split.train, cv.bandwidth, &split.centers, spec.legop.execution);
        let (nw_mse, _) = scored(&nw, |p: &f64| *p, &split.clean);
        Ok((legop, nw_mse, cv.bandwidth, failed))
    });
    let mut rows = Vec::new();
    let mut factors = Vec::new();
    let mut all_better = true;
    for (&s, r) in spec.seeds.iter().zip(results) {
        let (legop, nw, h, failed) = r?;
        factors.push(nw / legop);
        all_better &= legop < nw;
        rows.push(ReportRow::new(
            format!("seed{s}"),
            Some(spec.n),
            None,
            json!({
                "seed": s,
                "legop_mse": num(legop),
                "nw_mse": num(nw),
                "nw_bandwidth": num(h),
                "improvement": num(nw / legop),
                "failed": failed,
            }),
        ));
    }
    let mut summary = BTreeMap::new();
    summary.insert("median_improvement".into(), num(median(&mut factors)));
    summary.insert("legop_better_every_seed".into(), Value::Bool(all_better));
    Ok((rows, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for name in EXPERIMENT_NAMES {
            let spec = ExperimentSpec::by_name(name, 4).unwrap();
            assert_eq!(spec.name(), name);
            let json = serde_json::to_value(&spec).unwrap();
            assert_eq!(serde_json::from_value::<ExperimentSpec>(json).unwrap(), spec);
        }
        assert!(ExperimentSpec::by_name("nope", 1).is_none());
    }

    #[test]
    fn test_split_is_fixed_across_sizes() {
        let task = HelixTask { test_points: 20, ..HelixTask::default() };
        let a = task.split(3, 100, 7).unwrap();
        let b = task.split(3, 300, 7).unwrap();
        assert_eq!(a.centers, b.centers);
        assert_eq!(a.clean, b.clean);
        assert_eq!(a.train.row(0), b.train.row(0));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn synthetic_image_has_both_levels() {
        let img = synthetic_image(16, 16);
        assert_eq!(img.pixels.len(), 256);
        assert!(img.pixels.contains(&51) && img.pixels.contains(&204));
    }
}
