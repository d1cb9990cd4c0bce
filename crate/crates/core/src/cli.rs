//! Command-line front end.
//!
//! Settings are resolved per field: command-line flag, then the JSON file
//! named by `HASLR_CONFIG`, then the built-in default.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::classifier::{classify, DEFAULT_M_FRACTION};
use crate::dataset::{
    build_dictionaries, emit_report, load_manifest, run_benchmark, synth_dataset, synth_occluder,
    FeatureMode, PipelineConfig, ReportFormat, DEFAULT_SHAPE,
};
use crate::error::{Error, Result};
use crate::gradfeat::{
    extract_features, MappingFunction, MappingKind, DEFAULT_EPS, DEFAULT_U, DEFAULT_V,
};
use crate::imagekit::{
    apply_occlusion, load_grayscale, load_native, write_pgm, Anchor, ImageMatrix, OcclusionSpec,
};
use crate::solver::{
    PenaltyFunction, SolverConfig, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_MAX_ITERS, DEFAULT_REL_TOL,
};

pub const CONFIG_ENV: &str = "HASLR_CONFIG";
const DEFAULT_SEED: u64 = 7;
const DEFAULT_OCCLUDER_SIZE: usize = 32;

#[derive(Debug, Parser)]
#[command(
    name = "haslr",
    version,
    about = "Occlusion-robust recognition with gradient-direction features"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the three gradient-direction feature vectors of an image as JSON.
    Extract {
        image: PathBuf,
        /// Output file (standard output when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        opts: CliConfig,
    },
    /// Identify one image against the training split of a manifest.
    Recognize {
        image: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Write solver and residue diagnostics as JSON.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        #[command(flatten)]
        opts: CliConfig,
    },
    /// Generate a synthetic dataset and its manifest.
    Synth {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        opts: CliConfig,
    },
    /// Paste an occluder onto an image and write the result as PGM.
    Occlude {
        image: PathBuf,
        /// Occlusion rate in (0, 1).
        #[arg(long)]
        rate: f64,
        /// Occluder image (a synthetic square texture when omitted).
        #[arg(long)]
        occluder: Option<PathBuf>,
        /// "random" or "ROW,COL" (top-left corner).
        #[arg(long, default_value = "random")]
        anchor: String,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        opts: CliConfig,
    },
    /// Run the occlusion benchmark and write a report.
    Bench {
        #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
        manifest: Option<PathBuf>,
        /// Generate N synthetic classes instead of reading a manifest.
        #[arg(long, value_name = "N")]
        synth: Option<usize>,
        /// Where synthetic images go (a temporary directory when omitted).
        #[arg(long, requires = "synth")]
        synth_dir: Option<PathBuf>,
        /// Comma-separated occlusion rates; 0 means no occlusion.
        #[arg(long, value_delimiter = ',', default_value = "0.0")]
        rates: Vec<f64>,
        #[arg(long)]
        occluder: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        opts: CliConfig,
    },
}

/// Pipeline settings shared by every subcommand. Each field may also come
/// from the JSON config file; unset fields fall back to the defaults shown.
#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    /// Mapping function: arctan|tanh|softsign|sigmoid [default: tanh]
    #[arg(long)]
    pub mapping: Option<String>,
    /// Mapping slope [default: 7.3]
    #[arg(long)]
    pub u: Option<f64>,
    /// Mapping offset [default: 0.51]
    #[arg(long)]
    pub v: Option<f64>,
    /// Nuclear-norm weight [default: 100]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// ADMM penalty parameter [default: 1]
    #[arg(long)]
    pub beta: Option<f64>,
    /// Sparsity penalty: constant|laplace|gent|nig [default: nig]
    #[arg(long)]
    pub penalty: Option<String>,
    /// NIG delta [default: 1]
    #[arg(long)]
    pub delta: Option<f64>,
    /// NIG gamma [default: 1e-6]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Generalized-t shape a [default: 1]
    #[arg(long = "gent-a")]
    pub gent_a: Option<f64>,
    /// Generalized-t scale b [default: 1]
    #[arg(long = "gent-b")]
    pub gent_b: Option<f64>,
    /// Laplace scale [default: 1]
    #[arg(long = "laplace-scale")]
    pub laplace_scale: Option<f64>,
    /// Constant lasso weight [default: 1]
    #[arg(long = "lasso-weight")]
    pub lasso_weight: Option<f64>,
    /// Fraction of classes kept per order before polling [default: 0.10]
    #[arg(long = "m-fraction")]
    pub m_fraction: Option<f64>,
    /// Relative-change stopping tolerance [default: 1e-6]
    #[arg(long = "rel-tol")]
    pub rel_tol: Option<f64>,
    /// ADMM iteration cap [default: 500]
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    /// Random seed [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Feature mode: gradient|intensity [default: gradient]
    #[arg(long = "feature-mode")]
    pub feature_mode: Option<String>,
    /// Raster height [default: 42]
    #[arg(long)]
    pub height: Option<usize>,
    /// Raster width [default: 30]
    #[arg(long)]
    pub width: Option<usize>,
    /// Report format: json|csv [default: json]
    #[arg(long)]
    pub format: Option<String>,
    /// Worker threads [default: available parallelism]
    #[arg(long)]
    pub jobs: Option<usize>,
}

macro_rules! merge_fields {
    ($a:ident, $b:ident, $($f:ident),*) => {
        CliConfig { $($f: $a.$f.clone().or_else(|| $b.$f.clone()),)* }
    };
}

impl CliConfig {
    /// Field-wise `self` over `fallback`.
    pub fn or(&self, fallback: &CliConfig) -> CliConfig {
        merge_fields!(
            self,
            fallback,
            mapping,
            u,
            v,
            alpha,
            beta,
            penalty,
            delta,
            gamma,
            gent_a,
            gent_b,
            laplace_scale,
            lasso_weight,
            m_fraction,
            rel_tol,
            max_iters,
            seed,
            feature_mode,
            height,
            width,
            format,
            jobs
        )
    }

    pub fn from_file(path: &Path) -> Result<CliConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// Flags over the `HASLR_CONFIG` file (if set) over defaults.
    pub fn resolve_env(&self) -> Result<CliConfig> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Ok(self.or(&CliConfig::from_file(Path::new(&p))?)),
            _ => Ok(self.clone()),
        }
    }

    pub fn shape(&self) -> Result<(usize, usize)> {
        let h = self.height.unwrap_or(DEFAULT_SHAPE.0);
        let w = self.width.unwrap_or(DEFAULT_SHAPE.1);
        if h == 0 || w == 0 {
            return Err(Error::arg(format!(
                "image shape must be positive, got {h}x{w}"
            )));
        }
        Ok((h, w))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn mapping(&self) -> Result<MappingFunction> {
        let kind: MappingKind = self.mapping.as_deref().unwrap_or("tanh").parse()?;
        let map = MappingFunction::new(
            kind,
            self.u.unwrap_or(DEFAULT_U),
            self.v.unwrap_or(DEFAULT_V),
        );
        if !(map.u.is_finite() && map.v.is_finite()) {
            return Err(Error::arg("mapping parameters must be finite"));
        }
        Ok(map)
    }

    pub fn penalty(&self) -> Result<PenaltyFunction> {
        let p = match self.penalty.as_deref().unwrap_or("nig") {
            "nig" => PenaltyFunction::Nig {
                delta: self.delta.unwrap_or(1.0),
                gamma: self.gamma.unwrap_or(1e-6),
            },
            "gent" => PenaltyFunction::GeneralizedT {
                a: self.gent_a.unwrap_or(1.0),
                b: self.gent_b.unwrap_or(1.0),
            },
            "laplace" => PenaltyFunction::Laplace {
                scale: self.laplace_scale.unwrap_or(1.0),
            },
            "constant" => PenaltyFunction::Constant {
                weight: self.lasso_weight.unwrap_or(1.0),
            },
            other => return Err(Error::arg(format!("unknown penalty '{other}'"))),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn report_format(&self) -> Result<ReportFormat> {
        self.format.as_deref().unwrap_or("json").parse()
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let shape = self.shape()?;
        let mut solver = SolverConfig::new(shape);
        solver.alpha = self.alpha.unwrap_or(DEFAULT_ALPHA);
        solver.beta = self.beta.unwrap_or(DEFAULT_BETA);
        solver.penalty = self.penalty()?;
        solver.rel_tol = self.rel_tol.unwrap_or(DEFAULT_REL_TOL);
        solver.max_iters = self.max_iters.unwrap_or(DEFAULT_MAX_ITERS);
        solver.validate()?;
        let m_fraction = self.m_fraction.unwrap_or(DEFAULT_M_FRACTION);
        if !(m_fraction > 0.0 && m_fraction <= 1.0) {
            return Err(Error::arg(format!(
                "m-fraction must lie in (0, 1], got {m_fraction}"
            )));
        }
        Ok(PipelineConfig {
            mapping: self.mapping()?,
            eps: DEFAULT_EPS,
            solver,
            m_fraction,
            feature_mode: self
                .feature_mode
                .as_deref()
                .unwrap_or("gradient")
                .parse::<FeatureMode>()?,
        })
    }
}

#[derive(Serialize)]
struct FeatureFile<'a> {
    order1: &'a [f64],
    order2: &'a [f64],
    order3: &'a [f64],
    shape: [usize; 2],
    mapping: MappingFunction,
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::arg(format!("cannot serialize: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn parse_anchor(s: &str) -> Result<Anchor> {
    if s == "random" {
        return Ok(Anchor::Random);
    }
    let parsed = s
        .split_once(',')
        .and_then(|(r, c)| Some((r.trim().parse().ok()?, c.trim().parse().ok()?)));
    match parsed {
        Some((r, c)) => Ok(Anchor::Fixed(r, c)),
        None => Err(Error::arg(format!(
            "anchor must be \"random\" or \"ROW,COL\", got \"{s}\""
        ))),
    }
}

fn load_occluder(path: Option<&Path>, seed: u64) -> Result<ImageMatrix> {
    match path {
        Some(p) => load_native(p),
        None => Ok(synth_occluder(DEFAULT_OCCLUDER_SIZE, seed)),
    }
}

pub fn cmd_extract(image: &Path, output: Option<&Path>, cfg: &CliConfig) -> Result<()> {
    let (h, w) = cfg.shape()?;
    let map = cfg.mapping()?;
    let img = load_grayscale(image, h, w)?;
    let feats = extract_features(&img, &map, DEFAULT_EPS)?;
    let file = FeatureFile {
        order1: feats.order(1),
        order2: feats.order(2),
        order3: feats.order(3),
        shape: [h, w],
        mapping: map,
    };
    write_output(output, &to_json(&file)?)
}

pub fn cmd_recognize(
    image: &Path,
    manifest: &Path,
    diagnostics: Option<&Path>,
    cfg: &CliConfig,
) -> Result<String> {
    let pipeline = cfg.pipeline()?;
    let manifest = load_manifest(manifest)?.with_shape(cfg.shape()?);
    manifest.validate()?;
    let dicts = build_dictionaries(&manifest, &pipeline)?;
    let (h, w) = manifest.image_shape;
    let img = load_grayscale(image, h, w)?;
    let feats = pipeline.features(&img)?;
    let c = classify(&dicts, &feats, &pipeline.solver, pipeline.m_fraction)?;
    if let Some(p) = diagnostics {
        write_output(Some(p), &to_json(&c)?)?;
    }
    Ok(format!(
        "identity={} frequency={} tie_broken={}",
        c.verdict.identity,
        c.verdict.frequency(),
        c.verdict.tie_broken
    ))
}

pub fn cmd_synth(classes: usize, out_dir: &Path, cfg: &CliConfig) -> Result<String> {
    let m = synth_dataset(classes, cfg.shape()?, cfg.seed(), out_dir)?;
    Ok(format!(
        "wrote {} images to {}",
        m.entries.len(),
        out_dir.display()
    ))
}

pub fn cmd_occlude(
    image: &Path,
    rate: f64,
    occluder: Option<&Path>,
    anchor: &str,
    output: &Path,
    cfg: &CliConfig,
) -> Result<()> {
    let (h, w) = cfg.shape()?;
    let spec = OcclusionSpec {
        occluder: load_occluder(occluder, cfg.seed())?,
        occlusion_rate: rate,
        anchor: parse_anchor(anchor)?,
        seed: cfg.seed(),
    };
    let face = load_grayscale(image, h, w)?;
    write_pgm(&apply_occlusion(&face, &spec)?, output)
}

pub struct BenchArgs<'a> {
    pub manifest: Option<&'a Path>,
    pub synth: Option<usize>,
    pub synth_dir: Option<&'a Path>,
    pub rates: &'a [f64],
    pub occluder: Option<&'a Path>,
    pub output: Option<&'a Path>,
}

pub fn cmd_bench(args: &BenchArgs<'_>, cfg: &CliConfig) -> Result<String> {
    let pipeline = cfg.pipeline()?;
    let format = cfg.report_format()?;
    let shape = cfg.shape()?;
    let seed = cfg.seed();
    if args.rates.is_empty() {
        return Err(Error::arg("no occlusion rates given"));
    }
    let occluder = load_occluder(args.occluder, seed)?;
    let occlusions: Vec<Option<OcclusionSpec>> = args
        .rates
        .iter()
        .map(|&rate| {
            if rate == 0.0 {
                Ok(None)
            } else if rate > 0.0 && rate < 1.0 {
                Ok(Some(OcclusionSpec {
                    occluder: occluder.clone(),
                    occlusion_rate: rate,
                    anchor: Anchor::Random,
                    seed,
                }))
            } else {
                Err(Error::arg(format!(
                    "occlusion rate must lie in [0, 1), got {rate}"
                )))
            }
        })
        .collect::<Result<_>>()?;

    let _scratch;
    let manifest = match (args.manifest, args.synth) {
        (Some(p), None) => load_manifest(p)?.with_shape(shape),
        (None, Some(n)) => {
            let dir = match args.synth_dir {
                Some(d) => d.to_path_buf(),
                None => {
                    let t = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
                    let p = t.path().to_path_buf();
                    _scratch = t;
                    p
                }
            };
            synth_dataset(n, shape, seed, &dir)?
        }
        _ => return Err(Error::arg("give exactly one of --manifest or --synth")),
    };
    let report = run_benchmark(&manifest, &occlusions, &pipeline)?;
    if let Some(p) = args.output {
        emit_report(&report, p, format)?;
    }
    let mut out = String::new();
    for s in &report.subsets {
        out.push_str(&format!(
            "subset={} accuracy={:.4} ({}/{})\n",
            s.name, s.accuracy, s.correct, s.total
        ));
    }
    eprintln!("wall_time={:.2}s", report.wall_time_seconds);
    out.push_str(&format!("overall={:.4}", report.overall));
    Ok(out)
}

fn opts_of(cmd: &Command) -> &CliConfig {
    match cmd {
        Command::Extract { opts, .. }
        | Command::Recognize { opts, .. }
        | Command::Synth { opts, .. }
        | Command::Occlude { opts, .. }
        | Command::Bench { opts, .. } => opts,
    }
}

fn dispatch(cmd: &Command, cfg: &CliConfig) -> Result<Option<String>> {
    match cmd {
        Command::Extract { image, output, .. } => {
            cmd_extract(image, output.as_deref(), cfg)?;
            Ok(None)
        }
        Command::Recognize {
            image,
            manifest,
            diagnostics,
            ..
        } => cmd_recognize(image, manifest, diagnostics.as_deref(), cfg).map(Some),
        Command::Synth {
            classes, out_dir, ..
        } => cmd_synth(*classes, out_dir, cfg).map(Some),
        Command::Occlude {
            image,
            rate,
            occluder,
            anchor,
            output,
            ..
        } => {
            cmd_occlude(image, *rate, occluder.as_deref(), anchor, output, cfg)?;
            Ok(None)
        }
        Command::Bench {
            manifest,
            synth,
            synth_dir,
            rates,
            occluder,
            output,
            ..
        } => cmd_bench(
            &BenchArgs {
                manifest: manifest.as_deref(),
                synth: *synth,
                synth_dir: synth_dir.as_deref(),
                rates,
                occluder: occluder.as_deref(),
                output: output.as_deref(),
            },
            cfg,
        )
        .map(Some),
    }
}

/// Runs a parsed command line, returning the line(s) for standard output.
pub fn execute(cli: &Cli) -> Result<Option<String>> {
    let cfg = opts_of(&cli.command).resolve_env()?;
    match cfg.jobs {
        Some(0) => Err(Error::arg("--jobs must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::arg(format!("cannot start {n} workers: {e}")))?
            .install(|| dispatch(&cli.command, &cfg)),
        None => dispatch(&cli.command, &cfg),
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(Some(line)) => {
            println!("{line}");
            0
        }
        Ok(None) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let cfg = CliConfig::default();
        let p = cfg.pipeline().unwrap();
        assert_eq!(p.mapping, MappingFunction::default());
        assert_eq!(p.solver, SolverConfig::new(DEFAULT_SHAPE));
        assert_eq!(p.m_fraction, 0.10);
        assert_eq!(p.feature_mode, FeatureMode::Gradient);
        assert_eq!(cfg.report_format().unwrap(), ReportFormat::Json);
    }

    #[test]
    fn flags_override_file() {
        let flags = CliConfig {
            alpha: Some(5.0),
            ..Default::default()
        };
        let file: CliConfig =
            serde_json::from_str(r#"{"alpha": 50, "beta": 2, "penalty": "gent"}"#).unwrap();
        let merged = flags.or(&file);
        assert_eq!(merged.alpha, Some(5.0));
        assert_eq!(merged.beta, Some(2.0));
        assert_eq!(
            merged.penalty().unwrap(),
            PenaltyFunction::GeneralizedT { a: 1.0, b: 1.0 }
        );
        assert!(serde_json::from_str::<CliConfig>(r#"{"alpah": 1}"#).is_err());
    }

    #[test]
    fn bad_values_are_argument_errors() {
        let bad = |cfg: CliConfig| cfg.pipeline().unwrap_err().exit_code();
        assert_eq!(
            bad(CliConfig {
                penalty: Some("l0".into()),
                ..Default::default()
            }),
            2
        );
        assert_eq!(
            bad(CliConfig {
                mapping: Some("relu".into()),
                ..Default::default()
            }),
            2
        );
        assert_eq!(
            bad(CliConfig {
                alpha: Some(-1.0),
                ..Default::default()
            }),
            2
        );
        assert_eq!(
            bad(CliConfig {
                m_fraction: Some(0.0),
                ..Default::default()
            }),
            2
        );
        assert_eq!(
            bad(CliConfig {
                height: Some(0),
                ..Default::default()
            }),
            2
        );
    }

    #[test]
    fn anchors() {
        assert_eq!(parse_anchor("random").unwrap(), Anchor::Random);
        assert_eq!(parse_anchor("3, 4").unwrap(), Anchor::Fixed(3, 4));
        assert!(parse_anchor("3").is_err());
    }

    #[test]
    fn help_lists_defaults() {
        use clap::CommandFactory;
        let mut cmd = Cli::command();
        let help = cmd
            .find_subcommand_mut("bench")
            .unwrap()
            .render_long_help()
            .to_string();
        for d in [
            "tanh", "7.3", "0.51", "100", "nig", "1e-6", "0.10", "500", "42", "30",
        ] {
            assert!(help.contains(&format!("[default: {d}]")), "missing {d}");
        }
    }
}
