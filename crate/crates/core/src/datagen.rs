//! Synthetic data on noisy manifolds, plus raster and CSV ingestion.
//!
//! Every generator draws from separate ChaCha streams for base points,
//! normal noise and label noise, so a run can be repeated with a different
//! noise seed while keeping base points (and therefore clean labels) fixed.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{LegopError, Result};
use crate::functions::{CubicPolynomial, ScalarField};

const BASE_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const LABEL_NOISE_STREAM: u64 = 2;
const COEFFICIENT_STREAM: u64 = 3;

/// Default standard deviation of the Gaussian observation noise on labels.
pub const DEFAULT_LABEL_NOISE: f64 = 0.05;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// How normal noise is distributed inside its radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseShape {
    /// Uniform in the solid ball.
    #[default]
    Ball,
    /// Uniform on the sphere of exactly the given radius.
    Shell,
}

/// Helix `τ·(sin(t + w_1), cos(t + w_1), …, [t])` with offsets evenly spaced on
/// `[0, 2π)` and a trailing linear coordinate when the dimension is odd.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelixCurve {
    pub dim: usize,
    pub tau: f64,
    pub offsets: Vec<f64>,
}

impl HelixCurve {
    pub fn new(dim: usize, tau: f64) -> Self {
        let pairs = dim / 2;
        let offsets = (0..pairs).map(|k| 2.0 * PI * k as f64 / pairs as f64).collect();
        Self { dim, tau, offsets }
    }

    fn has_linear(&self) -> bool {
        self.dim % 2 == 1
    }

    pub fn point(&self, t: f64) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.dim);
        for w in &self.offsets {
            p.push(self.tau * (t + w).sin());
            p.push(self.tau * (t + w).cos());
        }
        if self.has_linear() {
            p.push(self.tau * t);
        }
        p
    }

    pub fn tangent(&self, t: f64) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.dim);
        for w in &self.offsets {
            p.push(self.tau * (t + w).cos());
            p.push(-self.tau * (t + w).sin());
        }
        if self.has_linear() {
            p.push(self.tau);
        }
        p
    }

    pub fn second_derivative(&self, t: f64) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.dim);
        for w in &self.offsets {
            p.push(-self.tau * (t + w).sin());
            p.push(-self.tau * (t + w).cos());
        }
        if self.has_linear() {
            p.push(0.0);
        }
        p
    }

    /// Parameter of the nearest curve point. Even dimensions give a closed
    /// curve (periodic parameter); odd dimensions an open one on `[0, 2π]`.
    pub fn project(&self, x: &[f64]) -> f64 {
        let dist2 = |t: f64| self.point(t).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let grid = 256;
        let mut best = (0.0, f64::INFINITY);
        for k in 0..=grid {
            let t = 2.0 * PI * k as f64 / grid as f64;
            let d = dist2(t);
            if d < best.1 {
                best = (t, d);
            }
        }
        let mut t = best.0;
        for _ in 0..50 {
            let p = self.point(t);
            let d1 = self.tangent(t);
            let d2 = self.second_derivative(t);
            let f: f64 = p.iter().zip(x).zip(&d1).map(|((a, b), c)| (a - b) * c).sum();
            let df: f64 = d1.iter().map(|v| v * v).sum::<f64>()
                + p.iter().zip(x).zip(&d2).map(|((a, b), c)| (a - b) * c).sum::<f64>();
            if df <= 0.0 {
                break;
            }
            let mut next = t - f / df;
            if self.has_linear() {
                next = next.clamp(0.0, 2.0 * PI);
            }
            let done = (next - t).abs() < 1e-15;
            t = next;
            if done {
                break;
            }
        }
        if !self.has_linear() {
            t = t.rem_euclid(2.0 * PI);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelixSpec {
    pub dim: usize,
    pub n: usize,
    pub tau: f64,
    pub noise_radius: f64,
    #[serde(default)]
    pub noise_shape: NoiseShape,
    pub seed: u64,
    /// Seed for the normal-noise stream; defaults to `seed`.
    #[serde(default)]
    pub noise_seed: Option<u64>,
}

impl HelixSpec {
    pub fn new(dim: usize, n: usize, seed: u64) -> Self {
        Self { dim, n, tau: 0.8, noise_radius: 0.5, noise_shape: NoiseShape::Ball, seed, noise_seed: None }
    }

    fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(LegopError::InvalidConfig("helix needs dimension >= 2".into()));
        }
        if self.n == 0 {
            return Err(LegopError::InvalidConfig("sample count must be positive".into()));
        }
        if !(self.tau > 0.0) {
            return Err(LegopError::InvalidConfig("tau must be positive".into()));
        }
        if !(self.noise_radius >= 0.0 && self.noise_radius < self.tau) {
            return Err(LegopError::InvalidConfig(format!(
                "noise radius {} must lie in [0, tau = {})",
                self.noise_radius, self.tau
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicLabelSpec {
    pub bound: f64,
    pub seed: u64,
}

impl CubicLabelSpec {
    pub fn new(seed: u64) -> Self {
        Self { bound: 3.0, seed }
    }

    pub fn polynomial(&self, dim: usize) -> Result<CubicPolynomial> {
        if !(self.bound > 0.0) {
            return Err(LegopError::InvalidConfig("coefficient bound must be positive".into()));
        }
        Ok(CubicPolynomial::random(dim, self.bound, &mut stream_rng(self.seed, COEFFICIENT_STREAM)))
    }
}

/// Per-sample generator record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Base-point parameters: `[t]` for helices, the unit base point for
    /// spheres, `[angle, radius]` for the annulus.
    pub param: Vec<f64>,
    pub clean_point: Vec<f64>,
    pub clean_label: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedData {
    pub dataset: LabeledDataset,
    pub truth: Vec<GroundTruth>,
    pub polynomial: CubicPolynomial,
}

/// Uniform vector of norm `<= radius` (ball) or `= radius` (shell) in the span
/// of the orthonormal `basis`.
fn normal_noise<R: Rng>(rng: &mut R, basis: &[Vec<f64>], dim: usize, radius: f64, shape: NoiseShape) -> Vec<f64> {
    let k = basis.len();
    let mut out = vec![0.0; dim];
    if k == 0 || radius == 0.0 {
        return out;
    }
    let mut coef: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
    let norm = coef.iter().map(|c| c * c).sum::<f64>().sqrt();
    let u: f64 = rng.random();
    let r = match shape {
        NoiseShape::Ball => radius * u.powf(1.0 / k as f64),
        NoiseShape::Shell => radius,
    };
    coef.iter_mut().for_each(|c| *c *= r / norm);
    for (c, b) in coef.iter().zip(basis) {
        for (o, v) in out.iter_mut().zip(b) {
            *o += c * v;
        }
    }
    out
}

fn gaussian_label<R: Rng>(rng: &mut R, clean: f64, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    clean + sd * z
}

fn check_label_noise(sd: f64) -> Result<()> {
    if !(sd >= 0.0 && sd.is_finite()) {
        return Err(LegopError::InvalidConfig("label noise must be finite and nonnegative".into()));
    }
    Ok(())
}

/// Noisy helix with cubic labels evaluated at the clean curve point.
pub fn gen_helix(spec: &HelixSpec, labels: &CubicLabelSpec, noise_sd: f64) -> Result<GeneratedData> {
    spec.validate()?;
    check_label_noise(noise_sd)?;
    let curve = HelixCurve::new(spec.dim, spec.tau);
    let poly = labels.polynomial(spec.dim)?;
    let mut base_rng = stream_rng(spec.seed, BASE_STREAM);
    let mut noise_rng = stream_rng(spec.noise_seed.unwrap_or(spec.seed), NOISE_STREAM);
    let mut label_rng = stream_rng(spec.seed, LABEL_NOISE_STREAM);
    let mut features = Vec::with_capacity(spec.n * spec.dim);
    let mut ys = Vec::with_capacity(spec.n);
    let mut truth = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let t = base_rng.random_range(0.0..2.0 * PI);
        let clean = curve.point(t);
        let complement = crate::linalg::orthonormal_complement(&curve.tangent(t));
        let noise = normal_noise(&mut noise_rng, &complement, spec.dim, spec.noise_radius, spec.noise_shape);
        features.extend(clean.iter().zip(&noise).map(|(a, b)| a + b));
        let clean_label = poly.value(&clean);
        ys.push(gaussian_label(&mut label_rng, clean_label, noise_sd));
        truth.push(GroundTruth { param: vec![t], clean_point: clean, clean_label });
    }
    Ok(GeneratedData { dataset: LabeledDataset::from_flat(spec.dim, features, ys)?, truth, polynomial: poly })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereSpec {
    /// Intrinsic dimension: 1 (circle) or 2 (sphere).
    pub intrinsic: usize,
    pub dim: usize,
    pub n: usize,
    pub noise_radius: f64,
    #[serde(default)]
    pub noise_shape: NoiseShape,
    pub seed: u64,
    #[serde(default)]
    pub noise_seed: Option<u64>,
}

/// Unit `d`-sphere in the first `d + 1` coordinates with noise in the normal
/// space (radial direction plus the unused ambient coordinates).
pub fn gen_noisy_sphere(spec: &SphereSpec, labels: &CubicLabelSpec, noise_sd: f64) -> Result<GeneratedData> {
    let d = spec.intrinsic;
    if !(d == 1 || d == 2) {
        return Err(LegopError::InvalidConfig("intrinsic dimension must be 1 or 2".into()));
    }
    if spec.dim < d + 1 {
        return Err(LegopError::InvalidConfig(format!("ambient dimension must be at least {}", d + 1)));
    }
    if !(spec.noise_radius >= 0.0 && spec.noise_radius < 1.0) {
        return Err(LegopError::InvalidConfig("noise radius must lie in [0, 1)".into()));
    }
    if spec.n == 0 {
        return Err(LegopError::InvalidConfig("sample count must be positive".into()));
    }
    check_label_noise(noise_sd)?;
    let k = d + 1;
    let poly = labels.polynomial(k)?;
    let mut base_rng = stream_rng(spec.seed, BASE_STREAM);
    let mut noise_rng = stream_rng(spec.noise_seed.unwrap_or(spec.seed), NOISE_STREAM);
    let mut label_rng = stream_rng(spec.seed, LABEL_NOISE_STREAM);
    let mut features = Vec::with_capacity(spec.n * spec.dim);
    let mut ys = Vec::with_capacity(spec.n);
    let mut truth = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let mut u: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut base_rng)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v /= norm);
        let mut clean = vec![0.0; spec.dim];
        clean[..k].copy_from_slice(&u);
        let mut basis = vec![clean.clone()];
        for extra in k..spec.dim {
            let mut e = vec![0.0; spec.dim];
            e[extra] = 1.0;
            basis.push(e);
        }
        let noise = normal_noise(&mut noise_rng, &basis, spec.dim, spec.noise_radius, spec.noise_shape);
        features.extend(clean.iter().zip(&noise).map(|(a, b)| a + b));
        let clean_label = poly.value(&u);
        ys.push(gaussian_label(&mut label_rng, clean_label, noise_sd));
        truth.push(GroundTruth { param: u, clean_point: clean, clean_label });
    }
    Ok(GeneratedData { dataset: LabeledDataset::from_flat(spec.dim, features, ys)?, truth, polynomial: poly })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSpec {
    pub n: usize,
    pub inner: f64,
    pub outer: f64,
    pub width_degrees: f64,
    pub seed: u64,
}

impl AnnulusSpec {
    /// Spherical cap of 25° scaled radially by `Uniform[0.6, 1.8]`.
    pub fn feature_learning(n: usize, seed: u64) -> Self {
        Self { n, inner: 0.6, outer: 1.8, width_degrees: 25.0, seed }
    }
}

/// Arc of the unit circle centered on `(1, 0)` with angular width
/// `width_degrees`, scaled radially by `Uniform[inner, outer]`. Labels are a
/// cubic in `(cos φ, sin φ)`, so they depend on the angle only.
pub fn gen_annulus(spec: &AnnulusSpec, labels: &CubicLabelSpec, noise_sd: f64) -> Result<GeneratedData> {
    if !(spec.inner > 0.0 && spec.inner <= spec.outer) {
        return Err(LegopError::InvalidConfig("need 0 < inner <= outer".into()));
    }
    if !(spec.width_degrees > 0.0 && spec.width_degrees <= 360.0) {
        return Err(LegopError::InvalidConfig("angular width must be in (0, 360]".into()));
    }
    if spec.n == 0 {
        return Err(LegopError::InvalidConfig("sample count must be positive".into()));
    }
    check_label_noise(noise_sd)?;
    let poly = labels.polynomial(2)?;
    let half = spec.width_degrees.to_radians() / 2.0;
    let mut base_rng = stream_rng(spec.seed, BASE_STREAM);
    let mut noise_rng = stream_rng(spec.seed, NOISE_STREAM);
    let mut label_rng = stream_rng(spec.seed, LABEL_NOISE_STREAM);
    let mut features = Vec::with_capacity(spec.n * 2);
    let mut ys = Vec::with_capacity(spec.n);
    let mut truth = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let angle = base_rng.random_range(-half..half);
        let radius = if spec.outer > spec.inner { noise_rng.random_range(spec.inner..spec.outer) } else { spec.inner };
        let u = [angle.cos(), angle.sin()];
        features.extend([radius * u[0], radius * u[1]]);
        let clean_label = poly.value(&u);
        ys.push(gaussian_label(&mut label_rng, clean_label, noise_sd));
        truth.push(GroundTruth { param: vec![angle, radius], clean_point: u.to_vec(), clean_label });
    }
    Ok(GeneratedData { dataset: LabeledDataset::from_flat(2, features, ys)?, truth, polynomial: poly })
}

/// Portable graymap raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Row-major intensities.
    pub pixels: Vec<u16>,
}

impl Pgm {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let token = |pos: &mut usize| -> Result<String> {
            loop {
                while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                    *pos += 1;
                }
                if *pos < bytes.len() && bytes[*pos] == b'#' {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = *pos;
            while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
                *pos += 1;
            }
            if start == *pos {
                return Err(LegopError::Parse("unexpected end of graymap header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
        };
        let magic = token(&mut pos)?;
        if magic != "P2" && magic != "P5" {
            return Err(LegopError::Parse(format!("unsupported graymap magic {magic:?}")));
        }
        let num = |s: String, what: &str| -> Result<usize> {
            s.parse::<usize>().map_err(|_| LegopError::Parse(format!("invalid {what} {s:?}")))
        };
        let width = num(token(&mut pos)?, "width")?;
        let height = num(token(&mut pos)?, "height")?;
        let maxval = num(token(&mut pos)?, "maxval")?;
        if width == 0 || height == 0 {
            return Err(LegopError::Parse("graymap has zero size".into()));
        }
        if maxval == 0 || maxval > 65535 {
            return Err(LegopError::Parse(format!("maxval {maxval} outside 1..=65535")));
        }
        let count = width * height;
        let mut pixels = Vec::with_capacity(count);
        if magic == "P2" {
            for _ in 0..count {
                let v = num(token(&mut pos)?, "pixel")?;
                pixels.push(v);
            }
        } else {
            // exactly one whitespace byte separates the header from the raster
            pos += 1;
            let bpp = if maxval < 256 { 1 } else { 2 };
            let need = count * bpp;
            if bytes.len() < pos + need {
                return Err(LegopError::Parse(format!(
                    "raster truncated: need {need} bytes, have {}",
                    bytes.len().saturating_sub(pos)
                )));
            }
            for k in 0..count {
                let at = pos + k * bpp;
                let v =
                    if bpp == 1 { bytes[at] as usize } else { u16::from_be_bytes([bytes[at], bytes[at + 1]]) as usize };
                pixels.push(v);
            }
        }
        if let Some(bad) = pixels.iter().find(|&&v| v > maxval) {
            return Err(LegopError::Parse(format!("pixel value {bad} exceeds maxval {maxval}")));
        }
        Ok(Self { width, height, maxval: maxval as u16, pixels: pixels.into_iter().map(|v| v as u16).collect() })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::parse(&bytes)
    }

    /// Binary (`P5`) encoding.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        for &p in &self.pixels {
            if self.maxval < 256 {
                out.push(p as u8);
            } else {
                out.extend_from_slice(&p.to_be_bytes());
            }
        }
        out
    }
}

/// One sample per pixel: features `(row, col)` scaled to `[0, 1]` (a single
/// row or column maps to 0.5), label = intensity / maxval.
pub fn image_to_dataset(image: &Pgm) -> Result<LabeledDataset> {
    if image.pixels.len() != image.width * image.height {
        return Err(LegopError::Parse("pixel count does not match image size".into()));
    }
    let coord = |k: usize, size: usize| if size == 1 { 0.5 } else { k as f64 / (size - 1) as f64 };
    let mut features = Vec::with_capacity(image.pixels.len() * 2);
    let mut labels = Vec::with_capacity(image.pixels.len());
    for r in 0..image.height {
        for c in 0..image.width {
            features.push(coord(r, image.height));
            features.push(coord(c, image.width));
            labels.push(image.pixels[r * image.width + c] as f64 / image.maxval as f64);
        }
    }
    LabeledDataset::from_flat(2, features, labels)
}

/// Header and numeric rows of a CSV file.
fn read_table<R: Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> =
        rdr.headers().map_err(|e| LegopError::Parse(e.to_string()))?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| LegopError::Parse(e.to_string()))?;
        if record.len() != headers.len() {
            return Err(LegopError::Parse(format!(
                "row {}: expected {} fields, found {}",
                r + 1,
                headers.len(),
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(headers.len());
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                LegopError::Parse(format!("row {}, column {:?}: non-numeric value {:?}", r + 1, headers[c], cell))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok((headers, rows))
}

/// Reads a CSV with a header row; every column except `label` is a feature,
/// in header order.
pub fn read_csv<R: Read>(reader: R, label: &str) -> Result<(LabeledDataset, Vec<String>)> {
    let (headers, rows) = read_table(reader)?;
    let label_col = headers
        .iter()
        .position(|h| h == label)
        .ok_or_else(|| LegopError::Parse(format!("label column {label:?} not found in header")))?;
    let feature_names: Vec<String> =
        headers.iter().enumerate().filter(|(k, _)| *k != label_col).map(|(_, h)| h.clone()).collect();
    let mut features = Vec::with_capacity(rows.len() * feature_names.len());
    let mut labels = Vec::with_capacity(rows.len());
    for row in rows {
        for (c, v) in row.into_iter().enumerate() {
            if c == label_col {
                labels.push(v);
            } else {
                features.push(v);
            }
        }
    }
    let dataset = LabeledDataset::from_flat(feature_names.len(), features, labels)?;
    Ok((dataset, feature_names))
}

/// Reads query points from a CSV with a header row. A column named `label`,
/// if present, is ignored.
pub fn read_points<R: Read>(reader: R, label: &str) -> Result<(Vec<Vec<f64>>, Vec<String>)> {
    let (headers, rows) = read_table(reader)?;
    match headers.iter().position(|h| h == label) {
        Some(col) => {
            let names = headers.iter().enumerate().filter(|(k, _)| *k != col).map(|(_, h)| h.clone()).collect();
            let points = rows
                .into_iter()
                .map(|r| r.into_iter().enumerate().filter(|(k, _)| *k != col).map(|(_, v)| v).collect())
                .collect();
            Ok((points, names))
        }
        None => Ok((rows, headers)),
    }
}

pub fn load_csv(path: &Path, label: &str) -> Result<LabeledDataset> {
    Ok(read_csv(std::fs::File::open(path)?, label)?.0)
}

/// Writes features then label. Floats use the shortest representation that
/// parses back to the same bits.
pub fn write_csv<W: Write>(
    writer: W,
    data: &LabeledDataset,
    feature_names: Option<&[String]>,
    label: &str,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = match feature_names {
        Some(names) if names.len() == data.dim() => names.to_vec(),
        Some(names) => return Err(LegopError::DimensionMismatch { expected: data.dim(), found: names.len() }),
        None => (0..data.dim()).map(|k| format!("x{k}")).collect(),
    };
    header.push(label.to_string());
    let io = |e: csv::Error| LegopError::Io(e.to_string());
    wtr.write_record(&header).map_err(io)?;
    for i in 0..data.len() {
        let mut row: Vec<String> = data.row(i).iter().map(|v| format!("{v:?}")).collect();
        row.push(format!("{:?}", data.label(i)));
        wtr.write_record(&row).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_csv(path: &Path, data: &LabeledDataset, feature_names: Option<&[String]>, label: &str) -> Result<()> {
    write_csv(std::fs::File::create(path)?, data, feature_names, label)
}
