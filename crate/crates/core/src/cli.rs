//! Command-line surface: rebalancing, training, evaluation, gradient checks
//! and attention export.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation failure.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::autodiff::DEFAULT_GRADCHECK_EPS;
use crate::backbone::{self, InputSpec, NetworkConfig, ParamStore, Preset, StageSpec, StemSpec};
use crate::data::{self, fixture, synthetic, DatasetManifest, Expression, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::gradcheck;
use crate::metrics::MetricsReport;
use crate::training::{self, Dataset, EpochLog, InputPipeline, TrainConfig};

/// Environment variable overriding the config seed.
pub const SEED_ENV: &str = "LLA_SEED";

#[derive(Debug, Parser)]
#[command(name = "llanet", version, about = "Lossless-attention expression network")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Thin over-represented classes and top up rare ones from a supplement.
    Rebalance(RebalanceArgs),
    /// Train from a JSON run config.
    Train(TrainArgs),
    /// Score a checkpoint on the validation manifest.
    Eval(EvalArgs),
    /// Finite-difference gradient verification.
    Gradcheck(GradcheckArgs),
    /// Export the attention map of one combined module.
    DumpAttention(DumpAttentionArgs),
    /// Write a deterministic synthetic image set with its manifest.
    MakeSynthetic(SyntheticArgs),
}

#[derive(Debug, Args)]
pub struct RebalanceArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = fixture::K_NEUTRAL)]
    pub k_neutral: usize,
    #[arg(long, default_value_t = fixture::K_HAPPY)]
    pub k_happy: usize,
    #[arg(long)]
    pub supplement: Option<PathBuf>,
    /// `class=N`, class by name or label; repeatable.
    #[arg(long = "quota", num_args = 1..)]
    pub quotas: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub tencrop: bool,
    /// Manifest to score instead of the config's validation set.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GradcheckPreset {
    /// Attention block and the tiny network end to end.
    Tiny,
    /// Every graph kernel in isolation.
    Ops,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "ops")]
    pub preset: GradcheckPreset,
    #[arg(long, default_value_t = DEFAULT_GRADCHECK_EPS)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct DumpAttentionArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub module_index: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    #[arg(long, default_value_t = 10)]
    pub per_class: usize,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Network section of a run config: a preset plus optional overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub preset: Option<Preset>,
    pub input: Option<InputSpec>,
    pub stem: Option<StemSpec>,
    pub stages: Option<Vec<StageSpec>>,
    pub llam_kernel: Option<usize>,
    pub use_llam: Option<bool>,
    pub classes: Option<usize>,
}

impl NetworkSection {
    /// Preset defaults to `tiny`.
    pub fn resolve(&self, seed: u64) -> NetworkConfig {
        let mut c = self.preset.unwrap_or(Preset::Tiny).config();
        if let Some(v) = self.input {
            c.input = v;
        }
        if let Some(v) = self.stem {
            c.stem = v;
        }
        if let Some(v) = &self.stages {
            c.stages = v.clone();
        }
        if let Some(v) = self.llam_kernel {
            c.llam_kernel = v;
        }
        if let Some(v) = self.use_llam {
            c.use_llam = v;
        }
        if let Some(v) = self.classes {
            c.classes = v;
        }
        c.seed = seed;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub train_manifest: PathBuf,
    #[serde(default)]
    pub val_manifest: Option<PathBuf>,
    /// Root for image paths; defaults to each manifest's directory.
    #[serde(default)]
    pub image_root: Option<PathBuf>,
    #[serde(default)]
    pub pipeline: InputPipeline,
}

/// The JSON document accepted by `train`, `eval` and `dump-attention`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub train: TrainConfig,
    pub data: DataSection,
}

/// A run config with every default filled in; echoed as `config.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub seed: u64,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub data: DataSection,
    /// Directory relative data paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ResolvedConfig {
    fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.base_dir.join(p)
        }
    }

    fn load_dataset(&self, manifest_path: &Path) -> Result<(DatasetManifest, Dataset)> {
        let manifest_path = self.resolve_path(manifest_path);
        let manifest = read_manifest(&manifest_path)?;
        let root = match &self.data.image_root {
            Some(r) => self.resolve_path(r),
            None => manifest_path.parent().map(Path::to_owned).unwrap_or_default(),
        };
        let dataset = Dataset::load(&manifest, &root)?;
        Ok((manifest, dataset))
    }

    fn eval_manifest(&self) -> &Path {
        self.data.val_manifest.as_deref().unwrap_or(&self.data.train_manifest)
    }
}

/// Turns a serde path into a JSON pointer.
fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// Parses and validates a run config. `seed_override` replaces the file's seed.
pub fn parse_run_config(text: &str, base_dir: &Path, seed_override: Option<u64>) -> Result<ResolvedConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = json_pointer(e.path());
        let inner = e.into_inner();
        Error::config(pointer, inner.to_string())
    })?;
    let seed = seed_override.unwrap_or(raw.seed);
    let network = raw.network.resolve(seed);
    network.validate()?;
    if network.classes != NUM_CLASSES {
        return Err(Error::config("/network/classes", format!("expression data has {NUM_CLASSES} classes")));
    }
    let train = TrainConfig { seed, ..raw.train };
    train.validate()?;
    raw.data
        .pipeline
        .normalization
        .validate(network.input.channels)
        .map_err(|e| Error::config("/data/pipeline/normalization", e.to_string()))?;
    Ok(ResolvedConfig {
        seed,
        network,
        train,
        data: raw.data,
        base_dir: base_dir.to_owned(),
    })
}

fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::config(SEED_ENV, format!("not an unsigned integer: {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// Reads a run config file; relative data paths resolve against its directory.
pub fn load_run_config(path: &Path, seed_override: Option<u64>) -> Result<ResolvedConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_owned).unwrap_or_default();
    parse_run_config(&text, &base, seed_override)
}

fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    data::parse_manifest(&text)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn console(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

/// Parses `class=N`.
pub fn parse_quota(s: &str) -> Result<(usize, usize)> {
    let bad = |msg: String| Error::config("--quota", msg);
    let (class, n) = s.split_once('=').ok_or_else(|| bad(format!("expected class=N, got {s:?}")))?;
    let class: Expression = class.parse().map_err(|e: Error| bad(e.to_string()))?;
    let n = n.trim().parse().map_err(|_| bad(format!("bad count in {s:?}")))?;
    Ok((class.label(), n))
}

/// Writes `manifest.csv` and `report.json` under `--out`.
pub fn cmd_rebalance(args: &RebalanceArgs, out: &mut dyn Write) -> Result<()> {
    let manifest = read_manifest(&args.manifest)?;
    let supplement = match &args.supplement {
        Some(p) => read_manifest(p)?,
        None => DatasetManifest::default(),
    };
    let mut quotas = BTreeMap::new();
    for q in &args.quotas {
        let (class, n) = parse_quota(q)?;
        quotas.insert(class, n);
    }
    if args.k_neutral == 0 || args.k_happy == 0 {
        return Err(Error::config("--k-neutral/--k-happy", "thinning factors must be >= 1"));
    }
    let ks = BTreeMap::from([
        (Expression::Neutral.label(), args.k_neutral),
        (Expression::Happiness.label(), args.k_happy),
    ]);
    let outcome = data::rebalance(&manifest, &ks, &supplement, &quotas)?;
    create_dir(&args.out)?;
    write(&args.out.join("manifest.csv"), outcome.manifest.to_csv()?)?;
    #[derive(Serialize)]
    struct Report<'a> {
        classes: &'a data::RebalanceReport,
        total_before: usize,
        total_after: usize,
        shortfall: BTreeMap<&'static str, usize>,
    }
    let report = &outcome.report;
    let shortfall = report
        .shortfall
        .iter()
        .map(|(&c, &n)| (Expression::ALL[c].name(), n))
        .collect();
    let doc = Report {
        classes: report,
        total_before: manifest.len(),
        total_after: report.total_after(),
        shortfall,
    };
    write(&args.out.join("report.json"), to_json(&doc)?)?;
    for (e, c) in Expression::ALL.iter().zip(&report.classes) {
        console(
            out,
            format_args!("{:<9} before={:>7} removed={:>7} added={:>6} after={:>7}", e.name(), c.before, c.removed, c.added, c.after),
        )?;
    }
    console(out, format_args!("total after={}", report.total_after()))?;
    for (name, n) in &doc.shortfall {
        console(out, format_args!("shortfall {name}: {n}"))?;
    }
    Ok(())
}

/// Final training summary written as `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_accuracy: f64,
    pub checkpoint_sha256: String,
    pub validation: MetricsReport,
}

/// Writes `config.json`, `epochs.jsonl`, `best.ckpt` and `metrics.json`.
pub fn cmd_train(args: &TrainArgs, seed_override: Option<u64>, out: &mut dyn Write) -> Result<TrainMetrics> {
    let cfg = load_run_config(&args.config, seed_override)?;
    let (_, train_set) = cfg.load_dataset(&cfg.data.train_manifest)?;
    let val_set = match &cfg.data.val_manifest {
        Some(p) => Some(cfg.load_dataset(p)?.1),
        None => None,
    };
    create_dir(&args.out)?;
    write(&args.out.join("config.json"), to_json(&cfg)?)?;

    let log_path = args.out.join("epochs.jsonl");
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let outcome = training::fit(&cfg.network, &cfg.train, &cfg.data.pipeline, &train_set, val_set.as_ref(), |l: &EpochLog| {
        let line = serde_json::to_string(l)?;
        writeln!(log, "{line}").map_err(|e| Error::io(&log_path, e))?;
        console(
            out,
            format_args!(
                "epoch {:>3} lr={:.5} loss={:.4} train_acc={:.4} val_score={:.4}",
                l.epoch, l.lr, l.train_loss, l.train_acc, l.val_score
            ),
        )
    })?;

    outcome.best.save(&args.out.join("best.ckpt"), &cfg.network)?;
    let eval = training::evaluate(
        &outcome.best,
        &cfg.network,
        val_set.as_ref().unwrap_or(&train_set),
        &cfg.data.pipeline,
        cfg.train.eval_tencrop,
    )?;
    let metrics = TrainMetrics {
        epochs_run: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        train_accuracy: outcome.final_train_accuracy(),
        checkpoint_sha256: outcome.best.digest(&cfg.network),
        validation: MetricsReport::from_matrix(&eval.confusion)?,
    };
    write(&args.out.join("metrics.json"), to_json(&metrics)?)?;
    console(
        out,
        format_args!("best epoch {} score={:.4} checkpoint sha256 {}", metrics.best_epoch, metrics.validation.score, metrics.checkpoint_sha256),
    )?;
    Ok(metrics)
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    image_path: &'a str,
    label: usize,
    predicted: usize,
    probabilities: &'a [f64],
}

/// Writes `metrics.json`, `confusion.csv` and `predictions.jsonl`.
pub fn cmd_eval(args: &EvalArgs, seed_override: Option<u64>, out: &mut dyn Write) -> Result<MetricsReport> {
    let cfg = load_run_config(&args.config, seed_override)?;
    let store = ParamStore::load(&args.checkpoint, &cfg.network)?;
    let (manifest, dataset) = match &args.manifest {
        Some(p) => {
            let p = std::env::current_dir().map_err(|e| Error::io(".", e))?.join(p);
            cfg.load_dataset(&p)?
        }
        None => cfg.load_dataset(cfg.eval_manifest())?,
    };
    let eval = training::evaluate(&store, &cfg.network, &dataset, &cfg.data.pipeline, args.tencrop)?;
    let report = MetricsReport::from_matrix(&eval.confusion)?;
    create_dir(&args.out)?;
    write(&args.out.join("metrics.json"), to_json(&report)?)?;

    let mut cm = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once("truth").chain(Expression::ALL.iter().map(|e| e.name())).collect();
    let csv_err = |e: csv::Error| Error::invalid("eval", e.to_string());
    cm.write_record(&header).map_err(csv_err)?;
    for (e, row) in Expression::ALL.iter().zip(&report.confusion) {
        let fields: Vec<String> = std::iter::once(e.name().to_owned()).chain(row.iter().map(u64::to_string)).collect();
        cm.write_record(&fields).map_err(csv_err)?;
    }
    let bytes = cm.into_inner().map_err(|e| Error::invalid("eval", e.to_string()))?;
    write(&args.out.join("confusion.csv"), bytes)?;

    let mut lines = String::new();
    for (rec, p) in manifest.records().iter().zip(&eval.predictions) {
        let line = PredictionLine {
            image_path: &rec.image_path,
            label: p.label,
            predicted: p.predicted,
            probabilities: &p.probabilities,
        };
        lines.push_str(&serde_json::to_string(&line)?);
        lines.push('\n');
    }
    write(&args.out.join("predictions.jsonl"), lines)?;
    console(
        out,
        format_args!(
            "{} images, {} crops each: accuracy={:.4} macro_f1={:.4} score={:.4}",
            eval.predictions.len(),
            eval.crops_per_image,
            report.accuracy,
            report.macro_f1,
            report.score
        ),
    )?;
    Ok(report)
}

/// Prints one line per check; fails if any exceeds `tolerance`.
pub fn cmd_gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> Result<Vec<gradcheck::CheckLine>> {
    if !(args.eps > 0.0) || !(args.tolerance > 0.0) {
        return Err(Error::config("--eps/--tolerance", "must be positive"));
    }
    let lines = match args.preset {
        GradcheckPreset::Ops => gradcheck::ops_suite(args.eps)?,
        GradcheckPreset::Tiny => gradcheck::tiny_suite(args.eps)?,
    };
    let mut failed = 0;
    for l in &lines {
        let ok = l.report.passed(args.tolerance);
        failed += usize::from(!ok);
        console(
            out,
            format_args!(
                "{:<24} max_rel_error={:.3e} checked={:<4} skipped_kinks={:<3} {}",
                l.name,
                l.report.max_rel_error,
                l.report.checked,
                l.report.skipped_kinks,
                if ok { "ok" } else { "FAIL" }
            ),
        )?;
    }
    if failed > 0 {
        return Err(Error::invalid("gradcheck", format!("{failed} check(s) exceeded tolerance {:e}", args.tolerance)));
    }
    Ok(lines)
}

/// 8-bit level of an attention value in (0, 1).
pub fn attention_level(m: f64) -> u8 {
    (m * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Writes `module{i}_c{cc}.pgm` per channel and `module{i}.bin`: four LE
/// u32 dims `(n, c, h, w)` followed by LE f64 values.
pub fn cmd_dump_attention(args: &DumpAttentionArgs, seed_override: Option<u64>, out: &mut dyn Write) -> Result<Vec<PathBuf>> {
    let cfg = load_run_config(&args.config, seed_override)?;
    let modules = cfg.network.modules().len();
    if !cfg.network.use_llam {
        return Err(Error::config("/network/use_llam", "network has no attention modules"));
    }
    if args.module_index >= modules {
        return Err(Error::config(
            "--module-index",
            format!("{} out of range, network has {modules} modules", args.module_index),
        ));
    }
    let store = ParamStore::load(&args.checkpoint, &cfg.network)?;
    let img = data::load_image(&args.image)?;
    let x = data::to_tensor(&img, &cfg.data.pipeline.normalization)?;
    let maps = backbone::attention_maps(&x, &store, &cfg.network)?;
    let m = &maps[args.module_index];
    let s = m.shape();
    create_dir(&args.out)?;
    let i = args.module_index;
    let mut written = Vec::with_capacity(s.c + 1);
    for c in 0..s.c {
        let pixels = m.slice_channels(c, 1)?.data().iter().map(|&v| attention_level(v)).collect();
        let plane = data::Image::new(1, s.h, s.w, pixels)?;
        let path = args.out.join(format!("module{i}_c{c:03}.pgm"));
        data::save_image(&plane, &path)?;
        written.push(path);
    }
    let mut raw = Vec::with_capacity(16 + 8 * m.numel());
    for d in s.dims() {
        raw.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in m.data() {
        raw.extend_from_slice(&v.to_le_bytes());
    }
    let bin = args.out.join(format!("module{i}.bin"));
    write(&bin, raw)?;
    written.push(bin);
    console(out, format_args!("module {i}: {} channels of {}x{}", s.c, s.h, s.w))?;
    Ok(written)
}

/// Writes images and `manifest.csv` under `--out`.
pub fn cmd_make_synthetic(args: &SyntheticArgs, out: &mut dyn Write) -> Result<DatasetManifest> {
    if args.size == 0 || args.per_class == 0 {
        return Err(Error::config("--size/--per-class", "must be positive"));
    }
    let images = synthetic::expression_set(args.per_class, args.size, args.seed);
    let manifest = synthetic::write_set(&args.out, &images)?;
    write(&args.out.join("manifest.csv"), manifest.to_csv()?)?;
    console(out, format_args!("wrote {} images", manifest.len()))?;
    Ok(manifest)
}

/// Exit code for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::Parse { .. } => 2,
        _ => 1,
    }
}

/// Dispatches a parsed command.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let seed = seed_from_env()?;
    match &cli.command {
        Command::Rebalance(a) => cmd_rebalance(a, out),
        Command::Train(a) => cmd_train(a, seed, out).map(drop),
        Command::Eval(a) => cmd_eval(a, seed, out).map(drop),
        Command::Gradcheck(a) => cmd_gradcheck(a, out).map(drop),
        Command::DumpAttention(a) => cmd_dump_attention(a, seed, out).map(drop),
        Command::MakeSynthetic(a) => cmd_make_synthetic(a, out).map(drop),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"data": {"train_manifest": "train.csv"}}"#;

    #[test]
    fn defaults_fill_in() {
        let c = parse_run_config(MINIMAL, Path::new("/tmp"), None).unwrap();
        assert_eq!(c.network, NetworkConfig::tiny());
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.data.pipeline, InputPipeline::default());
    }

    #[test]
    fn seed_override_reaches_network_and_train() {
        let c = parse_run_config(MINIMAL, Path::new("."), Some(42)).unwrap();
        assert_eq!((c.seed, c.network.seed, c.train.seed), (42, 42, 42));
    }

    #[test]
    fn unknown_key_reports_pointer() {
        let text = r#"{"train": {"base_lr": 0.1, "lr": 1}, "data": {"train_manifest": "t.csv"}}"#;
        match parse_run_config(text, Path::new("."), None) {
            Err(Error::Config { pointer, .. }) => assert!(pointer.starts_with("/train"), "{pointer}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nested_type_error_reports_pointer() {
        let text = r#"{"network": {"stages": [{"blocks": 1, "channels": "x", "stride": 1}]}, "data": {"train_manifest": "t.csv"}}"#;
        match parse_run_config(text, Path::new("."), None) {
            Err(Error::Config { pointer, .. }) => assert_eq!(pointer, "/network/stages/0/channels"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn semantic_errors_are_config_errors() {
        let text = r#"{"network": {"llam_kernel": 4}, "data": {"train_manifest": "t.csv"}}"#;
        let e = parse_run_config(text, Path::new("."), None).unwrap_err();
        assert_eq!(exit_code(&e), 2);
        let text = r#"{"network": {"classes": 5}, "data": {"train_manifest": "t.csv"}}"#;
        assert!(matches!(parse_run_config(text, Path::new("."), None), Err(Error::Config { .. })));
        assert!(parse_run_config(r#"{"seed": 1}"#, Path::new("."), None).is_err());
    }

    #[test]
    fn quota_parsing() {
        assert_eq!(parse_quota("anger=5").unwrap(), (0, 5));
        assert_eq!(parse_quota("6=2").unwrap(), (6, 2));
        assert!(parse_quota("anger").is_err());
        assert!(parse_quota("joy=3").is_err());
        assert!(parse_quota("fear=-1").is_err());
    }

    #[test]
    fn attention_levels() {
        assert_eq!(attention_level(0.5), 128);
        assert_eq!(attention_level(1.0 / 1024.0), 0);
        assert_eq!(attention_level(0.003), 1);
        assert_eq!(attention_level(1.0 - 0.003), 254);
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(main_with_args(["llanet", "no-such-command"]), 2);
        assert_eq!(main_with_args(["llanet", "gradcheck", "--preset", "huge"]), 2);
    }
}
