//! `legop` command-line front end: dataset generation, batch prediction and
//! the reproducible experiments.
//!
//! Exit codes: 0 on success, 1 on runtime or data failures, 2 on usage
//! errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use legop::datagen::{
    gen_annulus, gen_helix, gen_noisy_sphere, read_points, write_csv, AnnulusSpec, CubicLabelSpec, GeneratedData,
    HelixSpec, NoiseShape, SphereSpec, DEFAULT_LABEL_NOISE,
};
use legop::driver::{predict_batch, BandwidthSchedule, LegopConfig};
use legop::error::LegopError;
use legop::experiment::{ExperimentReport, ExperimentSpec, ImageSource, EXPERIMENT_NAMES};
use legop::local_regression::Ridge;

#[derive(Parser)]
#[command(
    name = "legop",
    version,
    about = "Local EGOP learning: anisotropic kernel regression with a learned local metric"
)]
struct Cli {
    /// Worker threads (default: all available cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV, with a JSON sidecar holding the
    /// generator record.
    Gen(GenArgs),
    /// Run Local EGOP learning at every query point of a CSV file.
    Predict(PredictArgs),
    /// Run a named experiment and write its JSON report.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Helix,
    Circle,
    Sphere,
    Annulus,
}

#[derive(Args)]
struct GenArgs {
    kind: Kind,
    /// Ambient dimension (helix default 5, circle 2, sphere 3).
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Helix radius.
    #[arg(long, default_value_t = 0.8)]
    tau: f64,
    /// Normal-noise radius (helix default 0.5, circle and sphere 0.1).
    #[arg(long)]
    noise: Option<f64>,
    /// Put every noise vector on the sphere of radius `noise`.
    #[arg(long)]
    shell: bool,
    /// Standard deviation of Gaussian label noise.
    #[arg(long, default_value_t = DEFAULT_LABEL_NOISE)]
    label_noise: f64,
    #[arg(long, env = "LEGOP_SEED", default_value_t = 0)]
    seed: u64,
    /// Output CSV; the sidecar goes next to it with a `.json` extension.
    /// Without it the CSV is written to stdout and no sidecar is produced.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Query points CSV; a label column, if present, is ignored.
    #[arg(long)]
    centers: PathBuf,
    /// Predictions CSV.
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration trace (JSON lines); defaults to the output path with a
    /// `.trace.jsonl` extension.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Name of the label column.
    #[arg(long, default_value = "label")]
    label: String,
    #[command(flatten)]
    config: ConfigArgs,
}

/// Loop parameters; omitted flags keep the library defaults.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    subsample: Option<usize>,
    /// Power-law bandwidth schedule exponent: `t_i = (1 + i)^-p`.
    #[arg(long)]
    exponent: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    /// Initial metric is `I / init-scale`.
    #[arg(long)]
    init_scale: Option<f64>,
    #[arg(long, conflicts_with = "no_exclusion")]
    exclusion_radius: Option<f64>,
    /// Use every point in every fit.
    #[arg(long)]
    no_exclusion: bool,
    /// Ridge relative to the local displacement scale.
    #[arg(long)]
    ridge: Option<f64>,
    /// Cap on the spectral norm of the localization covariance.
    #[arg(long)]
    covariance_cap: Option<f64>,
    #[arg(long, env = "LEGOP_SEED")]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn apply(&self, mut c: LegopConfig) -> LegopConfig {
        if let Some(v) = self.iterations {
            c.iterations = v;
        }
        if let Some(v) = self.subsample {
            c.subsample = v;
        }
        if let Some(v) = self.exponent {
            c.schedule = BandwidthSchedule::PowerLaw { exponent: v };
        }
        if let Some(v) = self.momentum {
            c.momentum = v;
        }
        if let Some(v) = self.init_scale {
            c.init_scale = v;
        }
        if let Some(v) = self.exclusion_radius {
            c.exclusion_radius = Some(v);
        }
        if self.no_exclusion {
            c.exclusion_radius = None;
        }
        if let Some(v) = self.ridge {
            c.ridge = Ridge::Relative(v);
        }
        if self.covariance_cap.is_some() {
            c.covariance_cap = self.covariance_cap;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        c
    }
}

#[derive(Args)]
struct ExperimentArgs {
    /// One of: learning-rate, momentum, sphere-eigs, image-localize,
    /// baseline-compare.
    name: Option<String>,
    /// Report JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; seeded experiments use seeds `seed, seed+1, seed+2`.
    #[arg(long, env = "LEGOP_SEED", default_value_t = 1)]
    seed: u64,
    /// Run the fully resolved spec stored in a JSON file (a bare spec or a
    /// previous report) instead of a named default.
    #[arg(long, conflicts_with = "name")]
    config: Option<PathBuf>,
    /// Helix ambient dimensions, comma separated (learning-rate).
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Training sizes, comma separated (learning-rate).
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Training size (baseline-compare, momentum).
    #[arg(long)]
    n: Option<usize>,
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// Held-out test centers per seed.
    #[arg(long)]
    test_points: Option<usize>,
    /// Grayscale PGM image (image-localize; default: built-in pattern).
    #[arg(long)]
    image: Option<PathBuf>,
    /// Query pixels as `row:col`, comma separated (image-localize).
    #[arg(long, value_delimiter = ',')]
    pixels: Option<Vec<String>>,
    /// Highest-weight pixels to report per center (image-localize).
    #[arg(long)]
    top_k: Option<usize>,
    /// Iterations before stopping (image-localize).
    #[arg(long)]
    stop_iter: Option<usize>,
    /// Monte-Carlo samples per EGOP (sphere-eigs).
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Covariance cap (sphere-eigs).
    #[arg(long)]
    covariance_cap: Option<f64>,
    #[command(flatten)]
    config_args: LoopArgs,
}

/// Loop overrides for experiments that run Local EGOP learning.
#[derive(Args)]
struct LoopArgs {
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    subsample: Option<usize>,
}

/// Errors with an exit code.
enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Configuration errors detected while validating flag values are usage
/// errors; everything else is a runtime failure.
fn classify(e: LegopError) -> Failure {
    match e {
        LegopError::InvalidConfig(m) => Failure::Usage(m),
        other => Failure::Runtime(other.into()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Experiment(a) => cmd_experiment(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit_stdout(bytes: &[u8]) -> Result<()> {
    let mut out = io::stdout().lock();
    match out.write_all(bytes).and_then(|_| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn cmd_gen(a: &GenArgs) -> std::result::Result<(), Failure> {
    let labels = CubicLabelSpec::new(a.seed);
    let shape = if a.shell { NoiseShape::Shell } else { NoiseShape::Ball };
    let (generated, spec): (GeneratedData, serde_json::Value) = match a.kind {
        Kind::Helix => {
            let spec = HelixSpec {
                tau: a.tau,
                noise_radius: a.noise.unwrap_or(0.5),
                noise_shape: shape,
                ..HelixSpec::new(a.dim.unwrap_or(5), a.n, a.seed)
            };
            (gen_helix(&spec, &labels, a.label_noise).map_err(classify)?, json!(spec))
        }
        Kind::Circle | Kind::Sphere => {
            let intrinsic = if matches!(a.kind, Kind::Circle) { 1 } else { 2 };
            let spec = SphereSpec {
                intrinsic,
                dim: a.dim.unwrap_or(intrinsic + 1),
                n: a.n,
                noise_radius: a.noise.unwrap_or(0.1),
                noise_shape: shape,
                seed: a.seed,
                noise_seed: None,
            };
            (gen_noisy_sphere(&spec, &labels, a.label_noise).map_err(classify)?, json!(spec))
        }
        Kind::Annulus => {
            if a.dim.is_some_and(|d| d != 2) {
                return Err(usage("annulus data is two-dimensional"));
            }
            let spec = AnnulusSpec::feature_learning(a.n, a.seed);
            (gen_annulus(&spec, &labels, a.label_noise).map_err(classify)?, json!(spec))
        }
    };
    let kind = a.kind.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            write_csv(&mut w, &generated.dataset, None, "label").map_err(anyhow::Error::from)?;
            w.flush().map_err(anyhow::Error::from)?;
            let sidecar = json!({
                "kind": kind,
                "spec": spec,
                "labels": labels,
                "label_noise": a.label_noise,
                "polynomial": generated.polynomial,
                "truth": generated.truth,
            });
            write_json(&path.with_extension("json"), &sidecar)?;
        }
        None => {
            let mut buf = Vec::new();
            write_csv(&mut buf, &generated.dataset, None, "label").map_err(anyhow::Error::from)?;
            emit_stdout(&buf)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TraceLine<'a> {
    center_id: usize,
    i: usize,
    t_i: f64,
    m_eigs: &'a [f64],
    sigma_eigs: Vec<f64>,
    loo_mse: f64,
    guard_events: usize,
}

fn cmd_predict(a: &PredictArgs) -> std::result::Result<(), Failure> {
    let config = a.config.apply(LegopConfig::default());
    config.validate().map_err(classify)?;
    let data = legop::datagen::load_csv(&a.data, &a.label)
        .with_context(|| format!("cannot load training data from {}", a.data.display()))?;
    let file = File::open(&a.centers).with_context(|| format!("cannot open {}", a.centers.display()))?;
    let (centers, _) = read_points(file, &a.label).with_context(|| format!("cannot read {}", a.centers.display()))?;
    let runs = predict_batch(&data, &centers, &config).map_err(classify)?;

    let mut out = create(&a.out)?;
    writeln!(out, "center_id,prediction,best_iteration,reason").map_err(anyhow::Error::from)?;
    let trace_path = a.trace.clone().unwrap_or_else(|| a.out.with_extension("trace.jsonl"));
    let mut trace = create(&trace_path)?;
    for (k, run) in runs.iter().enumerate() {
        match run {
            Ok(r) => {
                let best = r.trace.best_iteration.map(|b| b.to_string()).unwrap_or_default();
                writeln!(out, "{k},{:?},{best},", r.prediction).map_err(anyhow::Error::from)?;
                for rec in &r.trace.records {
                    let line = TraceLine {
                        center_id: k,
                        i: rec.iteration,
                        t_i: rec.t,
                        m_eigs: &rec.metric_eigenvalues,
                        sigma_eigs: rec.inverse_eigenvalues.iter().map(|v| v / 2.0).collect(),
                        loo_mse: rec.loo_mse,
                        guard_events: rec.guard_events,
                    };
                    serde_json::to_writer(&mut trace, &line).map_err(anyhow::Error::from)?;
                    writeln!(trace).map_err(anyhow::Error::from)?;
                }
            }
            Err(e) => {
                let reason = e.to_string().replace('"', "'");
                writeln!(out, "{k},,,\"{reason}\"").map_err(anyhow::Error::from)?;
            }
        }
    }
    out.flush().map_err(anyhow::Error::from)?;
    trace.flush().map_err(anyhow::Error::from)?;
    let failed = runs.iter().filter(|r| r.is_err()).count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} centers failed; see {}", runs.len(), a.out.display());
    }
    Ok(())
}

fn parse_pixel(s: &str) -> Option<(usize, usize)> {
    let (r, c) = s.split_once(':')?;
    Some((r.trim().parse().ok()?, c.trim().parse().ok()?))
}

fn resolve_spec(a: &ExperimentArgs) -> std::result::Result<ExperimentSpec, Failure> {
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| usage(format!("invalid JSON: {e}")))?;
        // accept either a bare spec or a report embedding one
        let spec_value = value.get("config").cloned().unwrap_or(value);
        return serde_json::from_value(spec_value).map_err(|e| usage(format!("invalid experiment spec: {e}")));
    }
    let name = a.name.as_deref().ok_or_else(|| usage("an experiment name or --config is required"))?;
    let mut spec = ExperimentSpec::by_name(name, a.seed).ok_or_else(|| {
        usage(format!("unknown experiment {name:?}; expected one of {}", EXPERIMENT_NAMES.join(", ")))
    })?;
    let seeds: Option<Vec<u64>> = a.seeds.map(|k| (0..k as u64).map(|s| a.seed + s).collect());
    let lp = &a.config_args;
    let apply_loop = |c: &mut LegopConfig| {
        if let Some(v) = lp.iterations {
            c.iterations = v;
        }
        if let Some(v) = lp.subsample {
            c.subsample = v;
        }
    };
    match &mut spec {
        ExperimentSpec::LearningRate(s) => {
            if let Some(v) = &a.dims {
                s.dims = v.clone();
            }
            if let Some(v) = &a.sizes {
                s.sizes = v.clone();
            }
            if let Some(v) = seeds {
                s.seeds = v;
            }
            if let Some(v) = a.test_points {
                s.task.test_points = v;
            }
            apply_loop(&mut s.legop);
        }
        ExperimentSpec::Momentum(s) => {
            if let Some(v) = a.n {
                s.n = v;
            }
            if let Some(v) = seeds {
                s.seeds = v;
            }
            apply_loop(&mut s.legop);
        }
        ExperimentSpec::SphereEigs(s) => {
            if let Some(v) = a.mc_samples {
                s.recurrence.mc_samples = v;
            }
            if let Some(v) = a.covariance_cap {
                s.recurrence.covariance_cap = Some(v);
            }
            if let Some(v) = lp.iterations {
                s.recurrence.iterations = v;
            }
        }
        ExperimentSpec::ImageLocalize(s) => {
            if let Some(p) = &a.image {
                s.image = ImageSource::Pgm { path: p.display().to_string() };
            }
            if let Some(px) = &a.pixels {
                s.centers = px
                    .iter()
                    .map(|p| parse_pixel(p).ok_or_else(|| usage(format!("pixel {p:?} is not row:col"))))
                    .collect::<std::result::Result<_, _>>()?;
            }
            if let Some(v) = a.top_k {
                s.top_k = v;
            }
            if let Some(v) = a.stop_iter {
                s.stop_iter = v;
            }
            apply_loop(&mut s.legop);
        }
        ExperimentSpec::BaselineCompare(s) => {
            if let Some(v) = a.n {
                s.n = v;
            }
            if let Some(v) = seeds {
                s.seeds = v;
            }
            if let Some(v) = a.test_points {
                s.task.test_points = v;
            }
            apply_loop(&mut s.legop);
        }
    }
    Ok(spec)
}

fn cmd_experiment(a: &ExperimentArgs) -> std::result::Result<(), Failure> {
    let spec = resolve_spec(a)?;
    let report: ExperimentReport = spec.run().map_err(classify)?;
    match &a.out {
        Some(path) => write_json(path, &report)?,
        None => {
            let mut buf = serde_json::to_vec_pretty(&report).map_err(anyhow::Error::from)?;
            buf.push(b'\n');
            emit_stdout(&buf)?;
        }
    }
    eprintln!("{}: {} rows in {:.1}s", report.name, report.rows.len(), report.wall_seconds);
    Ok(())
}
