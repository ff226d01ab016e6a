//! Command-line front end: argument parsing, `key=value` config files,
//! thread control and run manifests.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bank::{apply_bank, build_bank_with, export_tensor, sigma_grid, BankConfig, BetaPolicy};
use crate::cell::{
    configure, even_orientations, orientation_superposition, rotate_set, CellEvaluator, CellParams, CorfCell,
    ShiftMode,
};
use crate::error::{CorfError, Result};
use crate::imagecore::{load_grayscale, save_map_rescaled, Image};
use crate::lgn::{lgn_response, DogSpec, Polarity};
use crate::metrics::{parse_labels, Metrics};
use crate::noise::{noise_sweep, parse_range_list, sweep_csv};
use crate::probe::{evaluate_vectors, flatten, train_probe_vectors, ProbeConfig};
use crate::pushpull::{pushpull_maps_with, PushPullCell};
use crate::rng::RNG_ALGORITHM;

pub const THREADS_ENV: &str = "CORF_THREADS";

#[derive(Debug, Parser)]
#[command(name = "corf", version, about = "Push-pull CORF simple-cell feature extraction")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Plain-text `key=value` config file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker thread cap (falls back to CORF_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory receiving the run manifest and any generated maps.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Configure a CORF cell on the synthetic edge and write it as JSON.
    Configure(ConfigureArgs),
    /// Write response maps of one image as PNGs.
    Respond(RespondArgs),
    /// Run the filter bank on an image and export the feature tensor.
    Bank(BankArgs),
    /// Feature stability under Gaussian pixel noise.
    NoiseSweep(NoiseSweepArgs),
    /// Train and evaluate a linear probe on the synthetic dataset.
    Probe(ProbeArgs),
    /// Metrics from predicted and true label files.
    Metrics(MetricsArgs),
    /// Run the embedded invariant checks.
    Selfcheck,
}

#[derive(Debug, Args, Default)]
pub struct CellArgs {
    /// Circle radii as multiples of sigma, comma separated.
    #[arg(long)]
    pub radii: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Sub-unit blur base as a fraction of sigma.
    #[arg(long)]
    pub blur_base: Option<f64>,
    /// Sub-unit blur growth per pixel of radius.
    #[arg(long)]
    pub blur_slope: Option<f64>,
    /// bilinear | nearest
    #[arg(long)]
    pub shift: Option<String>,
}

#[derive(Debug, Args)]
pub struct ConfigureArgs {
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub cell: CellArgs,
}

#[derive(Debug, Args)]
pub struct RespondArgs {
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// lgn | cell | pushpull
    #[arg(long)]
    pub stage: Option<String>,
    /// Cell JSON from `configure`; otherwise one is configured at --sigma.
    #[arg(long)]
    pub cell: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// on | off (lgn stage)
    #[arg(long)]
    pub polarity: Option<String>,
    #[arg(long)]
    pub orientations: Option<usize>,
    /// Shorthand for --stage pushpull.
    #[arg(long)]
    pub pushpull: bool,
    #[arg(long)]
    pub k: Option<f64>,
    /// auto | <x>sigma | pixels
    #[arg(long)]
    pub beta: Option<String>,
    /// File name prefix for the written maps.
    #[arg(long)]
    pub prefix: Option<String>,
    #[command(flatten)]
    pub cell_params: CellArgs,
}

#[derive(Debug, Args)]
pub struct BankArgs {
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub sigma_start: Option<f64>,
    #[arg(long)]
    pub sigma_end: Option<f64>,
    #[arg(long)]
    pub sigma_step: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long)]
    pub orientations: Option<usize>,
    /// Keep `push - k * pull` unrectified before superposition.
    #[arg(long)]
    pub signed: bool,
    #[command(flatten)]
    pub cell: CellArgs,
}

#[derive(Debug, Args)]
pub struct NoiseSweepArgs {
    /// Directory of PNG/PGM images, or `fixtures` for the built-in suite.
    #[arg(long)]
    pub images: Option<String>,
    #[arg(long)]
    pub sigmas: Option<String>,
    /// `a..b:step` or a list, in percent.
    #[arg(long)]
    pub percents: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub sigma_start: Option<f64>,
    #[arg(long)]
    pub sigma_end: Option<f64>,
    #[arg(long)]
    pub sigma_step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Only `synthetic` is built in.
    #[arg(long)]
    pub dataset: Option<String>,
    /// corf | raw
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long = "true")]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CorfError::InvalidParameter(format!("config line {}: expected key=value", n + 1)))?;
        map.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(map)
}

/// Resolves parameters with precedence flag > config file > default and
/// records every resolved value.
pub struct Resolver {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(file: BTreeMap<String, String>) -> Self {
        Resolver {
            file,
            resolved: BTreeMap::new(),
        }
    }

    pub fn opt<T: FromStr + ToString + Clone>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(text) => Some(text.parse::<T>().map_err(|_| {
                    CorfError::InvalidParameter(format!("config value '{text}' for '{key}' is invalid"))
                })?),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    pub fn get<T: FromStr + ToString + Clone>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        let v = self.opt(key, flag)?.unwrap_or(default);
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn require<T: FromStr + ToString + Clone>(&mut self, key: &str, flag: Option<T>) -> Result<T> {
        self.opt(key, flag)?
            .ok_or_else(|| CorfError::InvalidParameter(format!("missing required --{key}")))
    }

    pub fn flag(&mut self, key: &str, flag: bool) -> Result<bool> {
        let v = flag || self.opt::<bool>(key, None)?.unwrap_or(false);
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    /// Arguments that reproduce this run.
    command: Vec<String>,
    threads: usize,
    rng: &'static str,
    config: &'a BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_inputs(paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for p in paths {
        let bytes = std::fs::read(p).map_err(|e| CorfError::io(p, e))?;
        out.insert(p.display().to_string(), sha256_hex(&bytes));
    }
    Ok(out)
}

struct RunContext {
    out_dir: Option<PathBuf>,
    threads: usize,
    verbose: u8,
}

struct RunRecord {
    resolved: BTreeMap<String, String>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    /// Where the manifest goes; `None` skips it.
    manifest: Option<PathBuf>,
}

fn write_manifest(sub: &str, ctx: &RunContext, record: &RunRecord) -> Result<()> {
    let Some(path) = &record.manifest else {
        return Ok(());
    };
    let mut command = vec![sub.to_string()];
    for (k, v) in &record.resolved {
        match v.as_str() {
            "true" => command.push(format!("--{k}")),
            "false" => {}
            _ => {
                command.push(format!("--{k}"));
                command.push(v.clone());
            }
        }
    }
    let manifest = Manifest {
        tool: "corf",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: sub,
        command,
        threads: ctx.threads,
        rng: RNG_ALGORITHM,
        config: &record.resolved,
        inputs: hash_inputs(&record.inputs)?,
        outputs: record.outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    crate::fsutil::write_atomic(path, text.as_bytes())
}

fn manifest_for(out: &Path, ctx: &RunContext) -> PathBuf {
    let name = format!(
        "{}.manifest.json",
        out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
    );
    match &ctx.out_dir {
        Some(d) => d.join(name),
        None => out.with_file_name(name),
    }
}

fn cell_params(r: &mut Resolver, a: &CellArgs) -> Result<CellParams> {
    let defaults = CellParams::default();
    let radii_text = r.get(
        "radii",
        a.radii.clone(),
        defaults.radii.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
    )?;
    let radii = radii_text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| CorfError::InvalidParameter(format!("bad radii '{radii_text}'")))?;
    let shift = match r.get("shift", a.shift.clone(), "bilinear".to_string())?.as_str() {
        "bilinear" => ShiftMode::Bilinear,
        "nearest" => ShiftMode::Nearest,
        other => return Err(CorfError::InvalidParameter(format!("unknown shift mode '{other}'"))),
    };
    Ok(CellParams {
        radii,
        threshold: r.get("threshold", a.threshold, defaults.threshold)?,
        blur: crate::cell::BlurLaw {
            base_factor: r.get("blur-base", a.blur_base, defaults.blur.base_factor)?,
            slope: r.get("blur-slope", a.blur_slope, defaults.blur.slope)?,
        },
        shift,
        ..defaults
    })
}

fn run_configure(r: &mut Resolver, a: &ConfigureArgs, ctx: &RunContext) -> Result<RunRecord> {
    let sigma = r.get("sigma", a.sigma, 2.0)?;
    let out = r.require("out", a.out.as_ref().map(|p| p.display().to_string()))?;
    let params = cell_params(r, &a.cell)?;
    let cell = configure(sigma, &params)?;
    let out = PathBuf::from(out);
    crate::fsutil::write_atomic(&out, cell.to_json().as_bytes())?;
    println!(
        "configured {} sub-units ({} on, {} off) at sigma {sigma}",
        cell.subunits.len(),
        cell.count(Polarity::On),
        cell.count(Polarity::Off)
    );
    Ok(RunRecord {
        resolved: r.resolved().clone(),
        inputs: vec![],
        manifest: Some(manifest_for(&out, ctx)),
        outputs: vec![out],
    })
}

fn run_respond(r: &mut Resolver, a: &RespondArgs, ctx: &RunContext) -> Result<RunRecord> {
    let image_path = PathBuf::from(r.require("image", a.image.as_ref().map(|p| p.display().to_string()))?);
    let image = load_grayscale(&image_path)?;
    let pushpull = r.flag("pushpull", a.pushpull)?;
    let default_stage = if pushpull { "pushpull" } else { "cell" };
    let stage = r.get("stage", a.stage.clone(), default_stage.to_string())?;
    let prefix = r.get("prefix", a.prefix.clone(), "response".to_string())?;
    let dir = ctx.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| CorfError::io(&dir, e))?;
    let mut inputs = vec![image_path];
    let mut outputs = Vec::new();
    let mut save = |name: String, map: &crate::imagecore::ResponseMap| -> Result<()> {
        let path = dir.join(name);
        let scale = save_map_rescaled(&path, map)?;
        println!("{} scale={scale}", path.display());
        outputs.push(path);
        Ok(())
    };

    if stage == "lgn" {
        let sigma = r.get("sigma", a.sigma, 2.0)?;
        let polarity = match r.get("polarity", a.polarity.clone(), "on".to_string())?.as_str() {
            "on" => Polarity::On,
            "off" => Polarity::Off,
            other => return Err(CorfError::InvalidParameter(format!("unknown polarity '{other}'"))),
        };
        let map = lgn_response(&image, &DogSpec::new(sigma, polarity)?)?;
        let tag = if polarity == Polarity::On { "on" } else { "off" };
        save(format!("{prefix}_lgn_{tag}.png"), &map)?;
    } else if stage == "cell" || stage == "pushpull" {
        let cell: CorfCell = match r.opt("cell", a.cell.as_ref().map(|p| p.display().to_string()))? {
            Some(path) => {
                let path = PathBuf::from(path);
                let text = std::fs::read_to_string(&path).map_err(|e| CorfError::io(&path, e))?;
                inputs.push(path);
                CorfCell::from_json(&text)?
            }
            None => {
                let sigma = r.get("sigma", a.sigma, 2.0)?;
                configure(sigma, &cell_params(r, &a.cell_params)?)?
            }
        };
        let n = r.get("orientations", a.orientations, 12usize)?;
        if n == 0 {
            return Err(CorfError::InvalidParameter("need at least one orientation".into()));
        }
        let orientations = even_orientations(n);
        let mut eval = CellEvaluator::new(&image, cell.source_sigma, cell.truncation)?;
        if stage == "cell" {
            eval.prepare(&cell)?;
            let maps = orientations
                .iter()
                .map(|&psi| eval.response(&rotate_set(&cell, psi)))
                .collect::<Result<Vec<_>>>()?;
            for (psi, m) in orientations.iter().zip(&maps) {
                save(format!("{prefix}_o{:03}.png", psi.to_degrees().round() as i64), m)?;
            }
            save(format!("{prefix}_superposed.png"), &orientation_superposition(&maps)?)?;
        } else {
            let k = r.get("k", a.k, crate::bank::DEFAULT_K)?;
            let beta = BetaPolicy::parse(&r.get("beta", a.beta.clone(), "auto".to_string())?)?;
            let pp = PushPullCell::new(cell.clone(), beta.beta(cell.source_sigma), k)?;
            let (mut push, mut pull, mut both) = (Vec::new(), Vec::new(), Vec::new());
            for &psi in &orientations {
                let maps = pushpull_maps_with(&mut eval, &pp.rotated(psi))?;
                both.push(maps.rectified());
                push.push(maps.push);
                pull.push(maps.pull);
            }
            save(format!("{prefix}_push.png"), &orientation_superposition(&push)?)?;
            save(format!("{prefix}_pull.png"), &orientation_superposition(&pull)?)?;
            save(format!("{prefix}_pushpull.png"), &orientation_superposition(&both)?)?;
        }
    } else {
        return Err(CorfError::InvalidParameter(format!("unknown stage '{stage}'")));
    }
    r.get("out-dir", None, dir.display().to_string())?;
    Ok(RunRecord {
        resolved: r.resolved().clone(),
        inputs,
        manifest: Some(dir.join(format!("{prefix}.manifest.json"))),
        outputs,
    })
}

fn bank_config(
    r: &mut Resolver,
    start: Option<f64>,
    end: Option<f64>,
    step: Option<f64>,
    k: Option<f64>,
    beta: Option<String>,
    orientations: Option<usize>,
) -> Result<BankConfig> {
    let start = r.get("sigma-start", start, 1.0)?;
    let end = r.get("sigma-end", end, 5.0)?;
    let step = r.get("sigma-step", step, 0.25)?;
    let n = r.get("orientations", orientations, crate::bank::DEFAULT_ORIENTATIONS)?;
    Ok(BankConfig {
        sigmas: sigma_grid(start, end, step)?,
        orientations: even_orientations(n),
        k: r.get("k", k, crate::bank::DEFAULT_K)?,
        beta: BetaPolicy::parse(&r.get("beta", beta, "auto".to_string())?)?,
        rectify: true,
    })
}

fn run_bank(r: &mut Resolver, a: &BankArgs, ctx: &RunContext) -> Result<RunRecord> {
    let image_path = PathBuf::from(r.require("image", a.image.as_ref().map(|p| p.display().to_string()))?);
    let out = PathBuf::from(r.require("out", a.out.as_ref().map(|p| p.display().to_string()))?);
    let mut config = bank_config(
        r,
        a.sigma_start,
        a.sigma_end,
        a.sigma_step,
        a.k,
        a.beta.clone(),
        a.orientations,
    )?;
    config.rectify = !r.flag("signed", a.signed)?;
    let params = cell_params(r, &a.cell)?;
    let image = load_grayscale(&image_path)?;
    let bank = build_bank_with(config, &params)?;
    let tensor = apply_bank(&image, &bank)?;
    export_tensor(&tensor, &out)?;
    if ctx.verbose > 0 {
        eprintln!("bank: {} scales x {} orientations", bank.channels(), bank.config.orientations.len());
    }
    println!(
        "{}: {}x{}x{} tensor",
        out.display(),
        tensor.height(),
        tensor.width(),
        tensor.channels()
    );
    Ok(RunRecord {
        resolved: r.resolved().clone(),
        inputs: vec![image_path],
        manifest: Some(manifest_for(&out, ctx)),
        outputs: vec![out],
    })
}

fn load_image_dir(dir: &Path) -> Result<Vec<(PathBuf, String, Image)>> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CorfError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm"))
                .unwrap_or(false)
        })
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(CorfError::InvalidParameter(format!("no PNG/PGM images in {}", dir.display())));
    }
    entries
        .into_iter()
        .map(|p| {
            let img = load_grayscale(&p)?;
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((p, name, img))
        })
        .collect()
}

fn run_noise_sweep(r: &mut Resolver, a: &NoiseSweepArgs, ctx: &RunContext) -> Result<RunRecord> {
    let source = r.require("images", a.images.clone())?;
    let sigmas = parse_range_list(&r.get("sigmas", a.sigmas.clone(), "0.1,0.2,0.3".to_string())?)?;
    let percents = parse_range_list(&r.get("percents", a.percents.clone(), "10..100:10".to_string())?)?;
    if percents.iter().any(|p| !(0.0..=100.0).contains(p)) {
        return Err(CorfError::InvalidParameter("percents must lie in [0, 100]".into()));
    }
    let seed = r.get("seed", a.seed, 42u64)?;
    let out = PathBuf::from(r.require("out", a.out.as_ref().map(|p| p.display().to_string()))?);
    let config = bank_config(r, a.sigma_start, a.sigma_end, a.sigma_step, a.k, None, None)?;
    let bank = build_bank_with(config, &CellParams::default())?;

    let (inputs, images): (Vec<PathBuf>, Vec<(String, Image)>) = if source == "fixtures" {
        (vec![], crate::synth::fixture_suite())
    } else {
        load_image_dir(Path::new(&source))?
            .into_iter()
            .map(|(p, n, i)| (p, (n, i)))
            .unzip()
    };
    let rows = noise_sweep(&images, &bank, &sigmas, &percents, seed)?;
    crate::fsutil::write_atomic(&out, sweep_csv(&rows).as_bytes())?;
    println!("{}: {} rows", out.display(), rows.len());
    Ok(RunRecord {
        resolved: r.resolved().clone(),
        inputs,
        manifest: Some(manifest_for(&out, ctx)),
        outputs: vec![out],
    })
}

#[derive(Serialize)]
struct ProbeReport<'a> {
    dataset: &'a str,
    features: &'a str,
    samples: usize,
    feature_dim: usize,
    config: &'a ProbeConfig,
    initial_loss: f64,
    best_epoch: usize,
    epochs: &'a [crate::probe::EpochLog],
    validation: &'a Metrics,
    train: &'a Metrics,
}

fn run_probe(r: &mut Resolver, a: &ProbeArgs, ctx: &RunContext) -> Result<RunRecord> {
    let dataset = r.get("dataset", a.dataset.clone(), "synthetic".to_string())?;
    if dataset != "synthetic" {
        return Err(CorfError::InvalidParameter(format!("unknown dataset '{dataset}'")));
    }
    let features = r.get("features", a.features.clone(), "corf".to_string())?;
    let seed = r.get("seed", a.seed, 7u64)?;
    let out = PathBuf::from(r.require("out", a.out.as_ref().map(|p| p.display().to_string()))?);
    let per_class = r.get("per-class", a.per_class, 300usize)?;
    let d = ProbeConfig::default();
    let config = ProbeConfig {
        learning_rate: r.get("learning-rate", a.learning_rate, d.learning_rate)?,
        momentum: r.get("momentum", a.momentum, d.momentum)?,
        weight_decay: r.get("weight-decay", a.weight_decay, d.weight_decay)?,
        batch_size: r.get("batch-size", a.batch_size, d.batch_size)?,
        max_epochs: r.get("epochs", a.epochs, d.max_epochs)?,
        early_stop_patience: r.get("patience", a.patience, d.early_stop_patience)?,
        seed,
        ..d
    };
    config.validate()?;

    let samples = crate::synth::oriented_bar_dataset(seed, per_class, 32);
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let xs: Vec<Vec<f64>> = match features.as_str() {
        "raw" => samples.iter().map(|s| s.image.data().to_vec()).collect(),
        "corf" => {
            let bank = crate::bank::build_bank(BankConfig::default())?;
            samples
                .par_iter()
                .map(|s| apply_bank(&s.image, &bank).map(|t| flatten(&t)))
                .collect::<Result<_>>()?
        }
        other => return Err(CorfError::InvalidParameter(format!("unknown feature set '{other}'"))),
    };
    let report = train_probe_vectors(&xs, &labels, &config)?;
    let subset = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (idx.iter().map(|&i| xs[i].clone()).collect(), idx.iter().map(|&i| labels[i]).collect())
    };
    let (vx, vy) = subset(&report.val_indices);
    let (tx, ty) = subset(&report.train_indices);
    let validation = evaluate_vectors(&report.model, &vx, &vy)?;
    let train = evaluate_vectors(&report.model, &tx, &ty)?;
    let doc = ProbeReport {
        dataset: &dataset,
        features: &features,
        samples: xs.len(),
        feature_dim: xs[0].len(),
        config: &config,
        initial_loss: report.initial_loss,
        best_epoch: report.best_epoch,
        epochs: &report.epochs,
        validation: &validation,
        train: &train,
    };
    let text = serde_json::to_string_pretty(&doc).expect("report serializes");
    crate::fsutil::write_atomic(&out, text.as_bytes())?;
    println!(
        "{features} probe: validation accuracy {:.4}, macro-F1 {:.4} (best epoch {})",
        validation.accuracy, validation.macro_f1, report.best_epoch
    );
    Ok(RunRecord {
        resolved: r.resolved().clone(),
        inputs: vec![],
        manifest: Some(manifest_for(&out, ctx)),
        outputs: vec![out],
    })
}

fn run_metrics(r: &mut Resolver, a: &MetricsArgs, ctx: &RunContext) -> Result<RunRecord> {
    let pred = PathBuf::from(r.require("pred", a.pred.as_ref().map(|p| p.display().to_string()))?);
    let truth = PathBuf::from(r.require("true", a.truth.as_ref().map(|p| p.display().to_string()))?);
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| CorfError::io(p, e));
    let predicted = parse_labels(&read(&pred)?)?;
    let actual = parse_labels(&read(&truth)?)?;
    let classes = predicted.iter().chain(&actual).copied().max().map(|m| m + 1).unwrap_or(0);
    let metrics = Metrics::from_labels(&actual, &predicted, classes)?;
    let text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    println!("{text}");
    let out = r.opt("out", a.out.as_ref().map(|p| p.display().to_string()))?.map(PathBuf::from);
    if let Some(out) = &out {
        crate::fsutil::write_atomic(out, text.as_bytes())?;
    }
    let manifest = match &out {
        Some(o) => Some(manifest_for(o, ctx)),
        None => ctx.out_dir.as_ref().map(|d| d.join("metrics.manifest.json")),
    };
    Ok(RunRecord {
        resolved: r.resolved().clone(),
        inputs: vec![pred, truth],
        manifest,
        outputs: out.into_iter().collect(),
    })
}

fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CorfError::InvalidParameter(format!("{THREADS_ENV}='{v}' is not a count")))?,
            Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        },
    };
    if n == 0 {
        return Err(CorfError::InvalidParameter("thread count must be positive".into()));
    }
    Ok(n)
}

fn execute(cli: Cli) -> Result<i32> {
    let file = match &cli.config {
        Some(p) => parse_config_text(&std::fs::read_to_string(p).map_err(|e| CorfError::io(p, e))?)?,
        None => BTreeMap::new(),
    };
    let threads = resolve_threads(cli.threads)?;
    let ctx = RunContext {
        out_dir: cli.out_dir.clone(),
        threads,
        verbose: cli.verbose,
    };
    if let Some(d) = &ctx.out_dir {
        std::fs::create_dir_all(d).map_err(|e| CorfError::io(d, e))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CorfError::InvalidParameter(format!("thread pool: {e}")))?;
    let mut r = Resolver::new(file);
    pool.install(|| {
        let (name, record) = match &cli.command {
            Command::Configure(a) => ("configure", run_configure(&mut r, a, &ctx)?),
            Command::Respond(a) => ("respond", run_respond(&mut r, a, &ctx)?),
            Command::Bank(a) => ("bank", run_bank(&mut r, a, &ctx)?),
            Command::NoiseSweep(a) => ("noise-sweep", run_noise_sweep(&mut r, a, &ctx)?),
            Command::Probe(a) => ("probe", run_probe(&mut r, a, &ctx)?),
            Command::Metrics(a) => ("metrics", run_metrics(&mut r, a, &ctx)?),
            Command::Selfcheck => {
                let report = crate::selfcheck::run();
                for line in &report {
                    println!("{line}");
                }
                let ok = report.iter().all(|c| c.passed);
                return Ok(if ok { 0 } else { 1 });
            }
        };
        write_manifest(name, &ctx, &record)?;
        Ok(0)
    })
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit status: 0 success, 1 runtime failure, 2 usage error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            1
        }
    }
}
