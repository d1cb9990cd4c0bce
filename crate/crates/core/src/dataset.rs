//! Manifests, synthetic benchmark data, benchmark runs and reports.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{classify, DEFAULT_M_FRACTION};
use crate::error::{Error, Result};
use crate::gradfeat::{extract_features, intensity_feature, MappingFunction, DEFAULT_EPS};
use crate::imagekit::{
    apply_occlusion, load_grayscale, write_pgm, Anchor, ImageMatrix, OcclusionSpec,
};
use crate::solver::{build_dictionary, ClassId, Dictionary, SolverConfig};

pub const DEFAULT_SHAPE: (usize, usize) = (42, 30);
const MANIFEST_HEADER: [&str; 3] = ["path", "label", "split"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Resolved path (relative entries are joined onto the manifest's directory).
    pub path: PathBuf,
    pub label: ClassId,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub image_shape: (usize, usize),
    /// Directory relative entries were resolved against; reports list paths
    /// relative to it.
    pub root: PathBuf,
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn with_shape(mut self, shape: (usize, usize)) -> Self {
        self.image_shape = shape;
        self
    }

    /// Checks label coverage and path uniqueness.
    pub fn validate(&self) -> Result<()> {
        let train: BTreeSet<&ClassId> = self.split(Split::Train).map(|e| &e.label).collect();
        if train.is_empty() {
            return Err(Error::arg("manifest has no training images"));
        }
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(&e.path) {
                return Err(Error::arg(format!("duplicate path {}", e.path.display())));
            }
        }
        if let Some(e) = self.split(Split::Test).find(|e| !train.contains(&e.label)) {
            return Err(Error::arg(format!(
                "label {} has no training images",
                e.label
            )));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct ManifestRow {
    path: String,
    label: String,
    split: String,
}

/// Reads a `path,label,split` CSV manifest.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(parse_err(
            1,
            format!("expected header \"path,label,split\", got {header:?}"),
        ));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut entries = Vec::new();
    let mut train_labels = BTreeSet::new();
    let mut test_lines = Vec::new();
    let mut seen = BTreeSet::new();
    for record in reader.deserialize::<ManifestRow>() {
        let line = entries.len() + 2;
        let row = record.map_err(|e| {
            let line = e.position().map_or(line, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let split = match row.split.as_str() {
            "train" => Split::Train,
            "test" => Split::Test,
            other => {
                return Err(parse_err(
                    line,
                    format!("split must be \"train\" or \"test\", got \"{other}\""),
                ))
            }
        };
        if row.path.is_empty() || row.label.is_empty() {
            return Err(parse_err(line, "empty path or label".into()));
        }
        let resolved = base.join(&row.path);
        if !seen.insert(resolved.clone()) {
            return Err(parse_err(line, format!("duplicate path {}", row.path)));
        }
        let label = ClassId(row.label);
        match split {
            Split::Train => {
                train_labels.insert(label.clone());
            }
            Split::Test => test_lines.push((line, label.clone())),
        }
        entries.push(ManifestEntry {
            path: resolved,
            label,
            split,
        });
    }
    if train_labels.is_empty() {
        return Err(parse_err(1, "manifest has no training images".into()));
    }
    if let Some((line, label)) = test_lines.iter().find(|(_, l)| !train_labels.contains(l)) {
        return Err(parse_err(
            *line,
            format!("label {label} has no training images"),
        ));
    }
    Ok(Manifest {
        entries,
        image_shape: DEFAULT_SHAPE,
        root: base.to_path_buf(),
    })
}

/// Writes `manifest` as CSV with paths relative to `dir` where possible.
pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut out = String::from("path,label,split\n");
    for e in &manifest.entries {
        let p = e.path.strip_prefix(base).unwrap_or(&e.path);
        let split = match e.split {
            Split::Train => "train",
            Split::Test => "test",
        };
        out.push_str(&format!("{},{},{}\n", p.display(), e.label, split));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn class_rng(seed: u64, class: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((class as u64) << 8) | stream);
    rng
}

/// Base identity image for `class`: a rank-3 outer-product texture over a
/// smooth background, clipped to [0, 1].
pub fn synth_identity(class: usize, shape: (usize, usize), seed: u64) -> ImageMatrix {
    let (h, w) = shape;
    let mut rng = class_rng(seed, class, 0);
    let mut factors = Vec::new();
    for _ in 0..3 {
        let u: Vec<f64> = (0..h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        factors.push((u, v));
    }
    let (fr, fc): (f64, f64) = (rng.gen_range(0.5..1.5), rng.gen_range(0.5..1.5));
    let (pr, pc): (f64, f64) = (rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3));
    ImageMatrix::from_fn(h, w, |r, c| {
        let texture: f64 = factors.iter().map(|(u, v)| u[r] * v[c]).sum::<f64>() / 3.0;
        let y = r as f64 / h as f64 * std::f64::consts::TAU;
        let x = c as f64 / w as f64 * std::f64::consts::TAU;
        let background = 0.5 + 0.15 * (fr * y + pr).sin() * (fc * x + pc).cos();
        (background + 0.35 * texture).clamp(0.0, 1.0)
    })
    .expect("positive shape")
}

/// Test view of an identity: the base image under a mild illumination
/// change (global gain plus a linear shading ramp).
pub fn synth_probe(base: &ImageMatrix, class: usize, seed: u64) -> ImageMatrix {
    let mut rng = class_rng(seed, class, 1);
    let gain: f64 = rng.gen_range(0.8..1.0);
    let (gr, gc): (f64, f64) = (rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
    let (h, w) = base.shape();
    ImageMatrix::from_fn(h, w, |r, c| {
        let shade = gr * (r as f64 / h as f64 - 0.5) + gc * (c as f64 / w as f64 - 0.5);
        (gain * base.get(r, c) + shade).clamp(0.0, 1.0)
    })
    .expect("same shape")
}

/// Square textured occluder used by synthetic benchmarks.
pub fn synth_occluder(size: usize, seed: u64) -> ImageMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0cc1_0de5);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..12)
        .map(|_| {
            (
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.05..0.25),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    let noise: Vec<f64> = (0..size * size)
        .map(|_| rng.gen_range(-0.15..0.15))
        .collect();
    ImageMatrix::from_fn(size, size, |r, c| {
        let (y, x) = (r as f64 / size as f64, c as f64 / size as f64);
        let smooth: f64 = blobs
            .iter()
            .map(|&(by, bx, s, a)| a * (-((y - by).powi(2) + (x - bx).powi(2)) / (s * s)).exp())
            .sum();
        (0.5 + 0.4 * smooth.tanh() + noise[r * size + c]).clamp(0.0, 1.0)
    })
    .expect("positive size")
}

/// Generates `classes` synthetic identities into `dir` (one training and
/// one test image each) and writes `dir/manifest.csv`.
pub fn synth_dataset(
    classes: usize,
    shape: (usize, usize),
    seed: u64,
    dir: &Path,
) -> Result<Manifest> {
    if classes < 2 {
        return Err(Error::arg(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if shape.0 < 8 || shape.1 < 8 {
        return Err(Error::arg(format!(
            "synthetic images must be at least 8x8, got {shape:?}"
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(2 * classes);
    for class in 0..classes {
        let base = synth_identity(class, shape, seed);
        let probe = synth_probe(&base, class, seed);
        let label = ClassId::from(class + 1);
        for (img, split, tag) in [
            (&base, Split::Train, "train"),
            (&probe, Split::Test, "test"),
        ] {
            let path = dir.join(format!("class{:03}_{tag}.pgm", class + 1));
            write_pgm(img, &path)?;
            entries.push(ManifestEntry {
                path,
                label: label.clone(),
                split,
            });
        }
    }
    let manifest = Manifest {
        entries,
        image_shape: shape,
        root: dir.to_path_buf(),
    };
    write_manifest(&manifest, &dir.join("manifest.csv"))?;
    Ok(manifest)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    Gradient,
    Intensity,
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" => Ok(FeatureMode::Gradient),
            "intensity" => Ok(FeatureMode::Intensity),
            other => Err(Error::arg(format!("unknown feature mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mapping: MappingFunction,
    pub eps: f64,
    pub solver: SolverConfig,
    pub m_fraction: f64,
    pub feature_mode: FeatureMode,
}

impl PipelineConfig {
    pub fn new(image_shape: (usize, usize)) -> Self {
        Self {
            mapping: MappingFunction::default(),
            eps: DEFAULT_EPS,
            solver: SolverConfig::new(image_shape),
            m_fraction: DEFAULT_M_FRACTION,
            feature_mode: FeatureMode::Gradient,
        }
    }

    /// Feature vectors of `img`, one per order (a single one in intensity mode).
    pub fn features(&self, img: &ImageMatrix) -> Result<Vec<Vec<f64>>> {
        match self.feature_mode {
            FeatureMode::Gradient => Ok(extract_features(img, &self.mapping, self.eps)?
                .into_orders()
                .to_vec()),
            FeatureMode::Intensity => Ok(vec![intensity_feature(img)]),
        }
    }
}

/// Builds one dictionary per feature order from the manifest's training split.
pub fn build_dictionaries(manifest: &Manifest, cfg: &PipelineConfig) -> Result<Vec<Dictionary>> {
    let (h, w) = manifest.image_shape;
    let per_image: Vec<(Vec<Vec<f64>>, ClassId)> = manifest
        .split(Split::Train)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|e| {
            let img = load_grayscale(&e.path, h, w)?;
            Ok((cfg.features(&img)?, e.label.clone()))
        })
        .collect::<Result<_>>()?;
    if per_image.is_empty() {
        return Err(Error::arg("manifest has no training images"));
    }
    let orders = per_image[0].0.len();
    (0..orders)
        .map(|w| build_dictionary(per_image.iter().map(|(f, l)| (&f[w], l.clone()))))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetAccuracy {
    pub name: String,
    pub occlusion_rate: f64,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Relative to the manifest root when the image lies under it.
    pub path: PathBuf,
    pub subset: String,
    pub true_label: ClassId,
    pub verdict: Option<ClassId>,
    pub correct: bool,
    pub top_lists: Vec<Vec<ClassId>>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub subsets: Vec<SubsetAccuracy>,
    pub overall: f64,
    pub correct: usize,
    pub total: usize,
    pub samples: Vec<SampleRecord>,
    pub config: PipelineConfig,
    /// Not serialized, so that reports from identical runs are byte-identical.
    #[serde(skip)]
    pub wall_time_seconds: f64,
}

/// Subset key of an occlusion setting.
pub fn subset_name(occlusion: Option<&OcclusionSpec>) -> String {
    match occlusion {
        None => "none".into(),
        Some(spec) => format!("{:.2}", spec.occlusion_rate),
    }
}

fn sample_seed(base: u64, sample: usize) -> u64 {
    base ^ (sample as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Classifies every test image under every occlusion setting.
///
/// Random anchors are re-seeded per sample so each test image gets its own
/// occluder position. A failed sample is recorded and counted as wrong.
pub fn run_benchmark(
    manifest: &Manifest,
    occlusions: &[Option<OcclusionSpec>],
    cfg: &PipelineConfig,
) -> Result<BenchmarkReport> {
    let start = Instant::now();
    manifest.validate()?;
    if occlusions.is_empty() {
        return Err(Error::arg("no occlusion settings given"));
    }
    let dicts = build_dictionaries(manifest, cfg)?;
    let (h, w) = manifest.image_shape;
    let tests: Vec<&ManifestEntry> = manifest.split(Split::Test).collect();
    let probes: Vec<ImageMatrix> = tests
        .par_iter()
        .map(|e| load_grayscale(&e.path, h, w))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..occlusions.len())
        .flat_map(|o| (0..tests.len()).map(move |s| (o, s)))
        .collect();
    let samples: Vec<SampleRecord> = jobs
        .par_iter()
        .map(|&(o, s)| {
            let entry = tests[s];
            let occlusion = occlusions[o].as_ref();
            let outcome = (|| {
                let img = match occlusion {
                    None => probes[s].clone(),
                    Some(spec) => {
                        let mut spec = spec.clone();
                        if spec.anchor == Anchor::Random {
                            spec.seed = sample_seed(spec.seed, s);
                        }
                        apply_occlusion(&probes[s], &spec)?
                    }
                };
                let feats = cfg.features(&img)?;
                classify(&dicts, &feats, &cfg.solver, cfg.m_fraction)
            })();
            let (verdict, top_lists, error) = match outcome {
                Ok(c) => (Some(c.verdict.identity), c.top_lists, None),
                Err(e) => (None, Vec::new(), Some(e.to_string())),
            };
            SampleRecord {
                path: entry
                    .path
                    .strip_prefix(&manifest.root)
                    .unwrap_or(&entry.path)
                    .to_path_buf(),
                subset: subset_name(occlusion),
                true_label: entry.label.clone(),
                correct: verdict.as_ref() == Some(&entry.label),
                verdict,
                top_lists,
                error,
            }
        })
        .collect();

    let subsets = occlusions
        .iter()
        .map(|occ| {
            let name = subset_name(occ.as_ref());
            let rate = occ.as_ref().map_or(0.0, |s| s.occlusion_rate);
            let (correct, total) = tally(samples.iter().filter(|r| r.subset == name));
            SubsetAccuracy {
                name,
                occlusion_rate: rate,
                correct,
                total,
                accuracy: ratio(correct, total),
            }
        })
        .collect();
    let (correct, total) = tally(samples.iter());
    Ok(BenchmarkReport {
        subsets,
        overall: ratio(correct, total),
        correct,
        total,
        samples,
        config: cfg.clone(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
    })
}

fn tally<'a>(records: impl Iterator<Item = &'a SampleRecord>) -> (usize, usize) {
    records.fold((0, 0), |(c, t), r| (c + r.correct as usize, t + 1))
}

fn ratio(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::arg(format!("unknown report format '{other}'"))),
        }
    }
}

/// Serializes a report. CSV has one row per subset plus an `overall` row.
pub fn render_report(report: &BenchmarkReport, format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Json => {
            let mut bytes = serde_json::to_vec_pretty(report)
                .map_err(|e| Error::arg(format!("cannot serialize report: {e}")))?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        ReportFormat::Csv => {
            let mut out = String::from("subset,accuracy,correct,total\n");
            for s in &report.subsets {
                out.push_str(&format!(
                    "{},{:.6},{},{}\n",
                    s.name, s.accuracy, s.correct, s.total
                ));
            }
            out.push_str(&format!(
                "overall,{:.6},{},{}\n",
                report.overall, report.correct, report.total
            ));
            Ok(out.into_bytes())
        }
    }
}

pub fn emit_report(report: &BenchmarkReport, path: &Path, format: ReportFormat) -> Result<()> {
    let bytes = render_report(report, format)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
