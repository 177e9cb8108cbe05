//! Command-line front end: `simulate`, `train`, `detect`, `eval`, and a
//! `pipeline` command chaining all four on generated train/test pairs.
//!
//! Flag defaults correspond to the simulated-data protocol (the `sim-a`
//! preset); `muufl` and `aviris` presets swap in the learner and evaluation
//! settings used for those collection styles. Every command writes a
//! `<command>.resolved.conf` capturing the configuration actually used, and
//! feeding that file back via `--config` reproduces the run byte for byte.
//!
//! Exit codes: 0 on success, 2 for bad arguments (unknown flags, invalid
//! values, missing required flags), 1 for runtime failures (unreadable or
//! inconsistent files, degenerate data).

mod settings;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::data::{BagCollection, SpectralLibrary};
use crate::detectors::{self, DetailedScore, DetectorKind, Fusion};
use crate::error::Error;
use crate::evaluation::{self, RocCurve, ScoredInstance};
use crate::learner::{self, LearnerConfig, TargetDictionary};
use crate::simulator::{self, GroundTruth, SimConfig, TargetPlacement, TruthRecord};
use crate::textio;
use crate::whitening::{BackgroundSource, BackgroundStats};
use settings::Settings;

const TRAIN_BAGS: &str = "train.csv";
const TEST_BAGS: &str = "test.csv";
const TRAIN_TRUTH: &str = "train_truth.csv";
const TEST_TRUTH: &str = "test_truth.csv";
const DICTIONARY: &str = "dictionary.csv";
const DICTIONARY_WHITENED: &str = "dictionary_whitened.csv";
const BACKGROUND_STATS: &str = "background_stats.csv";
const TRACE: &str = "trace.csv";
const SCORES: &str = "scores.csv";
const ROC: &str = "roc.csv";
const SUMMARY: &str = "summary.csv";
const PLOT: &str = "plot.csv";

#[derive(Parser, Debug)]
#[command(
    name = "mtmi",
    version,
    about = "Learn sub-pixel target signatures from bag-labeled spectra; detect and evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a train/test pair of bagged datasets with ground truth
    Simulate(SimulateArgs),
    /// Learn a target dictionary from bag-labeled data
    Train(TrainArgs),
    /// Score every instance against a learned dictionary
    Detect(DetectArgs),
    /// Compute ROC, normalized AUC, and plot data from scores plus truth
    Eval(EvalArgs),
    /// Chain simulate, train, detect (on the test half), and eval
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Parameter preset: sim-a, muufl, or aviris
    #[arg(long)]
    preset: Option<String>,
    /// key=value config file; explicit flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory receiving all output files
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Spectral library CSV (name,<band labels...>)
    #[arg(long)]
    library: Option<PathBuf>,
    /// Comma-separated library names mixed into positive bags
    #[arg(long)]
    targets: Option<String>,
    /// Comma-separated library names used as background
    #[arg(long)]
    backgrounds: Option<String>,
    #[arg(long)]
    pos_bags: Option<usize>,
    #[arg(long)]
    neg_bags: Option<usize>,
    #[arg(long)]
    points_per_bag: Option<usize>,
    /// Target-bearing instances per positive bag
    #[arg(long)]
    targets_per_bag: Option<usize>,
    /// Mean target proportion, in (0, 1]
    #[arg(long)]
    mean_proportion: Option<f64>,
    /// Amplitude SNR in dB; `inf` disables noise
    #[arg(long)]
    snr_db: Option<f64>,
    /// Target identity assignment: per-bag or per-instance
    #[arg(long)]
    target_placement: Option<String>,
    /// Train-half seed; the test half uses seed+1
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Bag-labeled dataset CSV
    #[arg(long)]
    bags: Option<PathBuf>,
    /// Detection statistic: ace or smf
    #[arg(long)]
    detector: Option<String>,
    /// Dictionary size to initialize; pruning may return fewer
    #[arg(long)]
    k: Option<usize>,
    /// Uniqueness penalty weight
    #[arg(long)]
    alpha: Option<f64>,
    /// K-Means candidate count, or `auto` for min(10k, positive instances)
    #[arg(long)]
    clusters: Option<String>,
    #[arg(long)]
    kmeans_max_iter: Option<usize>,
    /// Cap on alternating-optimization iterations
    #[arg(long)]
    max_iter: Option<usize>,
    /// Statistics source: negative (neg) or all
    #[arg(long)]
    background: Option<String>,
    /// Relative eigenvalue floor for whitening
    #[arg(long)]
    eigenvalue_floor_rel: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Bag-labeled dataset CSV to score
    #[arg(long)]
    bags: Option<PathBuf>,
    /// Dictionary CSV from `train`
    #[arg(long)]
    dictionary: Option<PathBuf>,
    /// Background statistics CSV from `train`
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Detection statistic: ace or smf
    #[arg(long)]
    detector: Option<String>,
    /// Signature fusion: max or mean
    #[arg(long)]
    fusion: Option<String>,
    /// Also write one score column per dictionary signature
    #[arg(long)]
    per_signature: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Scores CSV from `detect`
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Ground-truth CSV from `simulate`
    #[arg(long)]
    truth: Option<PathBuf>,
    /// False-alarm-rate cutoff for normalization, in (0, 1]
    #[arg(long)]
    far: Option<f64>,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long)]
    targets: Option<String>,
    #[arg(long)]
    backgrounds: Option<String>,
    #[arg(long)]
    pos_bags: Option<usize>,
    #[arg(long)]
    neg_bags: Option<usize>,
    #[arg(long)]
    points_per_bag: Option<usize>,
    #[arg(long)]
    targets_per_bag: Option<usize>,
    #[arg(long)]
    mean_proportion: Option<f64>,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    target_placement: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    detector: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    clusters: Option<String>,
    #[arg(long)]
    kmeans_max_iter: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    background: Option<String>,
    #[arg(long)]
    eigenvalue_floor_rel: Option<f64>,
    #[arg(long)]
    fusion: Option<String>,
    #[arg(long)]
    per_signature: bool,
    #[arg(long)]
    far: Option<f64>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Entry point for the `mtmi` binary.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(error)) => {
            eprintln!("error: {error}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Train(args) => cmd_train(args),
        Command::Detect(args) => cmd_detect(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Pipeline(args) => cmd_pipeline(args),
    }
}

fn simulate_defaults() -> Settings {
    Settings::with_defaults(&[
        ("library", ""),
        ("out_dir", "."),
        ("targets", "basalt,verde_antique"),
        ("backgrounds", "pyroxenite,phyllite,slate"),
        ("pos_bags", "10"),
        ("neg_bags", "20"),
        ("points_per_bag", "500"),
        ("targets_per_bag", "250"),
        ("mean_proportion", "0.3"),
        ("snr_db", "20"),
        ("target_placement", "per-bag"),
        ("seed", "0"),
    ])
}

fn train_defaults() -> Settings {
    Settings::with_defaults(&[
        ("bags", ""),
        ("out_dir", "."),
        ("detector", "ace"),
        ("k", "4"),
        ("alpha", "1"),
        ("clusters", "auto"),
        ("kmeans_max_iter", "100"),
        ("max_iter", "1000"),
        ("background", "negative"),
        ("eigenvalue_floor_rel", "1e-8"),
        ("seed", "0"),
    ])
}

fn detect_defaults() -> Settings {
    Settings::with_defaults(&[
        ("bags", ""),
        ("dictionary", ""),
        ("stats", ""),
        ("out_dir", "."),
        ("detector", "ace"),
        ("fusion", "max"),
        ("per_signature", "false"),
    ])
}

fn eval_defaults() -> Settings {
    Settings::with_defaults(&[
        ("scores", ""),
        ("truth", ""),
        ("out_dir", "."),
        ("far", "1e-3"),
    ])
}

fn pipeline_defaults() -> Settings {
    Settings::with_defaults(&[
        ("library", ""),
        ("out_dir", "."),
        ("targets", "basalt,verde_antique"),
        ("backgrounds", "pyroxenite,phyllite,slate"),
        ("pos_bags", "10"),
        ("neg_bags", "20"),
        ("points_per_bag", "500"),
        ("targets_per_bag", "250"),
        ("mean_proportion", "0.3"),
        ("snr_db", "20"),
        ("target_placement", "per-bag"),
        ("seed", "0"),
        ("detector", "ace"),
        ("k", "4"),
        ("alpha", "1"),
        ("clusters", "auto"),
        ("kmeans_max_iter", "100"),
        ("max_iter", "1000"),
        ("background", "negative"),
        ("eigenvalue_floor_rel", "1e-8"),
        ("fusion", "max"),
        ("per_signature", "false"),
        ("far", "1e-3"),
    ])
}

/// Defaults, then preset (flag first, else the config file's `preset` key),
/// then the config file's remaining entries. Flags are applied by callers.
fn resolve(
    mut base: Settings,
    preset_flag: &Option<String>,
    config_flag: &Option<PathBuf>,
) -> CliResult<Settings> {
    let file_values = match config_flag {
        Some(path) => Some((path, settings::load_file(path)?)),
        None => None,
    };
    let preset_name = preset_flag.clone().or_else(|| {
        file_values
            .as_ref()
            .and_then(|(_, values)| values.get("preset").cloned())
    });
    if let Some(name) = &preset_name {
        base.apply_preset(name).map_err(CliError::Usage)?;
    }
    if let Some((path, values)) = file_values {
        for (key, value) in values {
            if key == "preset" {
                continue;
            }
            if !base.contains_key(&key) {
                return Err(CliError::Usage(format!(
                    "unknown config key {key:?} in {}",
                    path.display()
                )));
            }
            base.set(&key, value);
        }
    }
    Ok(base)
}

fn usage<T>(message: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(message.into()))
}

/// Invalid-value errors become usage errors (exit 2); everything else stays
/// a runtime failure.
fn invalid_to_usage(e: Error) -> CliError {
    match e {
        Error::Invalid(message) => CliError::Usage(message),
        other => CliError::Runtime(other),
    }
}

fn require_path(s: &Settings, key: &str) -> CliResult<PathBuf> {
    let value = s.get(key);
    if value.is_empty() {
        return usage(format!("--{} is required", key.replace('_', "-")));
    }
    Ok(PathBuf::from(value))
}

fn get_usize(s: &Settings, key: &str) -> CliResult<usize> {
    let value = s.get(key);
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value for {key}: {value:?}")))
}

fn get_u64(s: &Settings, key: &str) -> CliResult<u64> {
    let value = s.get(key);
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value for {key}: {value:?}")))
}

fn get_f64(s: &Settings, key: &str) -> CliResult<f64> {
    let value = s.get(key);
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value for {key}: {value:?}")))
}

fn get_bool(s: &Settings, key: &str) -> CliResult<bool> {
    match s.get(key).trim() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => usage(format!("invalid value for {key}: {other:?} (expected true or false)")),
    }
}

fn get_list(s: &Settings, key: &str) -> Vec<String> {
    s.get(key)
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn get_clusters(s: &Settings) -> CliResult<Option<usize>> {
    let value = s.get("clusters").trim();
    if value == "auto" {
        return Ok(None);
    }
    value
        .parse()
        .map(Some)
        .map_err(|_| CliError::Usage(format!("invalid value for clusters: {value:?}")))
}

fn get_detector(s: &Settings) -> CliResult<DetectorKind> {
    let value = s.get("detector");
    DetectorKind::parse(value)
        .ok_or_else(|| CliError::Usage(format!("detector must be ace or smf, got {value:?}")))
}

fn get_fusion(s: &Settings) -> CliResult<Fusion> {
    let value = s.get("fusion");
    Fusion::parse(value)
        .ok_or_else(|| CliError::Usage(format!("fusion must be max or mean, got {value:?}")))
}

fn get_background(s: &Settings) -> CliResult<BackgroundSource> {
    let value = s.get("background");
    BackgroundSource::parse(value).ok_or_else(|| {
        CliError::Usage(format!("background must be negative (neg) or all, got {value:?}"))
    })
}

fn get_placement(s: &Settings) -> CliResult<TargetPlacement> {
    let value = s.get("target_placement");
    TargetPlacement::parse(value).ok_or_else(|| {
        CliError::Usage(format!(
            "target_placement must be per-bag or per-instance, got {value:?}"
        ))
    })
}

fn out_dir_of(s: &Settings) -> CliResult<PathBuf> {
    let dir = PathBuf::from(s.get("out_dir"));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn path_flag(value: &Option<PathBuf>) -> Option<String> {
    value.as_ref().map(|p| p.to_string_lossy().into_owned())
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut s = resolve(simulate_defaults(), &args.common.preset, &args.common.config)?;
    s.set_if_some("out_dir", &path_flag(&args.common.out_dir));
    s.set_if_some("library", &path_flag(&args.library));
    s.set_if_some("targets", &args.targets);
    s.set_if_some("backgrounds", &args.backgrounds);
    s.set_if_some("pos_bags", &args.pos_bags);
    s.set_if_some("neg_bags", &args.neg_bags);
    s.set_if_some("points_per_bag", &args.points_per_bag);
    s.set_if_some("targets_per_bag", &args.targets_per_bag);
    s.set_if_some("mean_proportion", &args.mean_proportion);
    s.set_if_some("snr_db", &args.snr_db);
    s.set_if_some("target_placement", &args.target_placement);
    s.set_if_some("seed", &args.seed);
    exec_simulate(&s)
}

fn exec_simulate(s: &Settings) -> CliResult<()> {
    let library_path = require_path(s, "library")?;
    let config = SimConfig {
        targets: get_list(s, "targets"),
        backgrounds: get_list(s, "backgrounds"),
        num_pos_bags: get_usize(s, "pos_bags")?,
        num_neg_bags: get_usize(s, "neg_bags")?,
        points_per_bag: get_usize(s, "points_per_bag")?,
        targets_per_pos_bag: get_usize(s, "targets_per_bag")?,
        mean_target_proportion: get_f64(s, "mean_proportion")?,
        snr_db: get_f64(s, "snr_db")?,
        placement: get_placement(s)?,
        seed: get_u64(s, "seed")?,
    };
    let library = SpectralLibrary::load_csv(&library_path)?;
    config.validate(&library).map_err(invalid_to_usage)?;
    let out_dir = out_dir_of(s)?;

    let (train, train_truth) = simulator::generate_dataset(&library, &config)?;
    let mut test_config = config.clone();
    test_config.seed = config.seed.wrapping_add(1);
    let (test, test_truth) = simulator::generate_dataset(&library, &test_config)?;

    train.save_csv(&out_dir.join(TRAIN_BAGS))?;
    test.save_csv(&out_dir.join(TEST_BAGS))?;
    train_truth.save_csv(&out_dir.join(TRAIN_TRUTH))?;
    test_truth.save_csv(&out_dir.join(TEST_TRUTH))?;
    s.save(&out_dir.join("simulate.resolved.conf"))?;
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let mut s = resolve(train_defaults(), &args.common.preset, &args.common.config)?;
    s.set_if_some("out_dir", &path_flag(&args.common.out_dir));
    s.set_if_some("bags", &path_flag(&args.bags));
    s.set_if_some("detector", &args.detector);
    s.set_if_some("k", &args.k);
    s.set_if_some("alpha", &args.alpha);
    s.set_if_some("clusters", &args.clusters);
    s.set_if_some("kmeans_max_iter", &args.kmeans_max_iter);
    s.set_if_some("max_iter", &args.max_iter);
    s.set_if_some("background", &args.background);
    s.set_if_some("eigenvalue_floor_rel", &args.eigenvalue_floor_rel);
    s.set_if_some("seed", &args.seed);
    exec_train(&s)
}

fn exec_train(s: &Settings) -> CliResult<()> {
    let bags_path = require_path(s, "bags")?;
    let config = LearnerConfig {
        initial_targets: get_usize(s, "k")?,
        uniqueness_weight: get_f64(s, "alpha")?,
        kmeans_clusters: get_clusters(s)?,
        kmeans_max_iter: get_usize(s, "kmeans_max_iter")?,
        max_iter: get_usize(s, "max_iter")?,
        detector: get_detector(s)?,
        seed: get_u64(s, "seed")?,
        background_source: get_background(s)?,
        eigenvalue_floor_rel: get_f64(s, "eigenvalue_floor_rel")?,
    };
    config.validate().map_err(invalid_to_usage)?;

    let bags = BagCollection::load_csv(&bags_path)?;
    let out_dir = out_dir_of(s)?;
    let output = learner::train(&bags, &config)?;

    output.dictionary.save_csv(&out_dir.join(DICTIONARY))?;
    output
        .dictionary
        .save_whitened_csv(&out_dir.join(DICTIONARY_WHITENED))?;
    output.stats.save_csv(&out_dir.join(BACKGROUND_STATS))?;
    output.trace.save_csv(&out_dir.join(TRACE))?;

    let positive_instances: usize = bags
        .bags()
        .iter()
        .filter(|b| b.label().is_positive())
        .map(|b| b.len())
        .sum();
    let mut resolved = s.clone();
    resolved.set("clusters", config.resolved_clusters(positive_instances));
    resolved.save(&out_dir.join("train.resolved.conf"))?;
    Ok(())
}

fn cmd_detect(args: &DetectArgs) -> CliResult<()> {
    let mut s = resolve(detect_defaults(), &args.common.preset, &args.common.config)?;
    s.set_if_some("out_dir", &path_flag(&args.common.out_dir));
    s.set_if_some("bags", &path_flag(&args.bags));
    s.set_if_some("dictionary", &path_flag(&args.dictionary));
    s.set_if_some("stats", &path_flag(&args.stats));
    s.set_if_some("detector", &args.detector);
    s.set_if_some("fusion", &args.fusion);
    if args.per_signature {
        s.set("per_signature", "true");
    }
    exec_detect(&s)
}

fn exec_detect(s: &Settings) -> CliResult<()> {
    let bags_path = require_path(s, "bags")?;
    let dict_path = require_path(s, "dictionary")?;
    let stats_path = require_path(s, "stats")?;
    let detector = get_detector(s)?;
    let fusion = get_fusion(s)?;
    let per_signature = get_bool(s, "per_signature")?;

    let stats = BackgroundStats::load_csv(&stats_path)?;
    let dictionary = TargetDictionary::load_csv(&dict_path, &stats)?;
    let bags = BagCollection::load_csv(&bags_path)?;
    if bags.dim() != stats.dim() {
        return Err(Error::dims(
            stats.dim(),
            bags.dim(),
            format!("bands in {} vs {}", bags_path.display(), stats_path.display()),
        )
        .into());
    }
    let out_dir = out_dir_of(s)?;
    let rows = detectors::detect_batch_detailed(&bags, &dictionary, &stats, detector, fusion)?;
    detectors::save_scores(&out_dir.join(SCORES), &rows, per_signature)?;
    s.save(&out_dir.join("detect.resolved.conf"))?;
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let mut s = resolve(eval_defaults(), &args.common.preset, &args.common.config)?;
    s.set_if_some("out_dir", &path_flag(&args.common.out_dir));
    s.set_if_some("scores", &path_flag(&args.scores));
    s.set_if_some("truth", &path_flag(&args.truth));
    s.set_if_some("far", &args.far);
    exec_eval(&s)
}

fn exec_eval(s: &Settings) -> CliResult<()> {
    let scores_path = require_path(s, "scores")?;
    let truth_path = require_path(s, "truth")?;
    let far = get_f64(s, "far")?;
    if !(far > 0.0 && far <= 1.0) {
        return usage(format!("--far must be in (0, 1], got {far}"));
    }

    let rows = detectors::load_scores(&scores_path)?;
    if rows.is_empty() {
        return Err(Error::Invalid(format!("no scores in {}", scores_path.display())).into());
    }
    let truth = GroundTruth::load_csv(&truth_path)?;
    let truth_map = truth.index_map();
    let mut joined: Vec<(&DetailedScore, &TruthRecord)> = Vec::with_capacity(rows.len());
    for row in &rows {
        let record = truth_map.get(&(row.bag_id, row.instance_index)).ok_or_else(|| {
            Error::Invalid(format!(
                "no ground truth for bag {} instance {} (scores {}, truth {})",
                row.bag_id,
                row.instance_index,
                scores_path.display(),
                truth_path.display()
            ))
        })?;
        joined.push((row, record));
    }

    let overall: Vec<ScoredInstance> = joined
        .iter()
        .map(|(row, rec)| ScoredInstance::new(row.score, rec.proportion > 0.0))
        .collect();
    let curve = evaluation::roc_curve(&overall)?;
    let (overall_nauc, extrapolated) = evaluation::nauc_flagged(&curve, far)?;

    let mut summary: Vec<(String, String)> = vec![
        ("nauc".into(), textio::fmt_f64(overall_nauc)),
        ("far_cutoff".into(), textio::fmt_f64(far)),
        ("extrapolated".into(), u8::from(extrapolated).to_string()),
        ("num_instances".into(), joined.len().to_string()),
    ];

    // Per-target rows: positives are that target's instances, negatives are
    // background-only instances, other targets' instances are excluded.
    let signature_count = rows[0].per_signature.len();
    for name in truth.target_names() {
        let subset = |score_of: &dyn Fn(&DetailedScore) -> f64| -> Vec<ScoredInstance> {
            joined
                .iter()
                .filter_map(|(row, rec)| match &rec.target_name {
                    Some(target) if *target == name => {
                        Some(ScoredInstance::new(score_of(row), true))
                    }
                    Some(_) => None,
                    None => Some(ScoredInstance::new(score_of(row), false)),
                })
                .collect()
        };
        let fused = subset(&|row| row.score);
        let (value, extrapolated) =
            evaluation::nauc_flagged(&evaluation::roc_curve(&fused)?, far)?;
        summary.push((format!("nauc_{name}"), textio::fmt_f64(value)));
        summary.push((format!("extrapolated_{name}"), u8::from(extrapolated).to_string()));
        if signature_count > 0 {
            let mut best_index = 0usize;
            let mut best_value = f64::NEG_INFINITY;
            for k in 0..signature_count {
                let scored = subset(&|row| row.per_signature[k]);
                let value = evaluation::nauc(&evaluation::roc_curve(&scored)?, far)?;
                if value > best_value {
                    best_value = value;
                    best_index = k;
                }
            }
            summary.push((
                format!("nauc_{name}_best_signature"),
                textio::fmt_f64(best_value),
            ));
            summary.push((format!("best_signature_{name}"), (best_index + 1).to_string()));
        }
    }

    let out_dir = out_dir_of(s)?;
    curve.save_csv(&out_dir.join(ROC))?;
    let summary_path = out_dir.join(SUMMARY);
    let mut out = textio::create(&summary_path)?;
    writeln!(out, "metric,value").map_err(|e| Error::io(&summary_path, e))?;
    for (metric, value) in &summary {
        writeln!(out, "{metric},{value}").map_err(|e| Error::io(&summary_path, e))?;
    }
    out.flush().map_err(|e| Error::io(&summary_path, e))?;
    write_plot(&curve, far, &out_dir.join(PLOT))?;
    s.save(&out_dir.join("eval.resolved.conf"))?;
    Ok(())
}

/// Plot data for the normalized region: `fpr_scaled` runs from 0 to 1 over
/// `[0, far]`, ending at the interpolated (or horizontally extended) cutoff.
fn write_plot(curve: &RocCurve, far: f64, path: &Path) -> crate::Result<()> {
    let mut out = textio::create(path)?;
    writeln!(out, "fpr_scaled,tpr").map_err(|e| Error::io(path, e))?;
    let mut previous = None;
    for point in curve.points() {
        if point.fpr <= far {
            writeln!(
                out,
                "{},{}",
                textio::fmt_f64(point.fpr / far),
                textio::fmt_f64(point.tpr)
            )
            .map_err(|e| Error::io(path, e))?;
            previous = Some(point);
        } else {
            let a = previous.expect("curve starts at fpr 0");
            if a.fpr < far {
                let t = (far - a.fpr) / (point.fpr - a.fpr);
                let tpr = a.tpr + t * (point.tpr - a.tpr);
                writeln!(out, "{},{}", textio::fmt_f64(1.0), textio::fmt_f64(tpr))
                    .map_err(|e| Error::io(path, e))?;
            }
            return out.flush().map_err(|e| Error::io(path, e));
        }
    }
    if let Some(a) = previous {
        if a.fpr < far {
            writeln!(out, "{},{}", textio::fmt_f64(1.0), textio::fmt_f64(a.tpr))
                .map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn cmd_pipeline(args: &PipelineArgs) -> CliResult<()> {
    let mut s = resolve(pipeline_defaults(), &args.common.preset, &args.common.config)?;
    s.set_if_some("out_dir", &path_flag(&args.common.out_dir));
    s.set_if_some("library", &path_flag(&args.library));
    s.set_if_some("targets", &args.targets);
    s.set_if_some("backgrounds", &args.backgrounds);
    s.set_if_some("pos_bags", &args.pos_bags);
    s.set_if_some("neg_bags", &args.neg_bags);
    s.set_if_some("points_per_bag", &args.points_per_bag);
    s.set_if_some("targets_per_bag", &args.targets_per_bag);
    s.set_if_some("mean_proportion", &args.mean_proportion);
    s.set_if_some("snr_db", &args.snr_db);
    s.set_if_some("target_placement", &args.target_placement);
    s.set_if_some("seed", &args.seed);
    s.set_if_some("detector", &args.detector);
    s.set_if_some("k", &args.k);
    s.set_if_some("alpha", &args.alpha);
    s.set_if_some("clusters", &args.clusters);
    s.set_if_some("kmeans_max_iter", &args.kmeans_max_iter);
    s.set_if_some("max_iter", &args.max_iter);
    s.set_if_some("background", &args.background);
    s.set_if_some("eigenvalue_floor_rel", &args.eigenvalue_floor_rel);
    s.set_if_some("fusion", &args.fusion);
    if args.per_signature {
        s.set("per_signature", "true");
    }
    s.set_if_some("far", &args.far);
    exec_pipeline(&s)
}

/// Copies every key the stage understands from the pipeline settings, so the
/// stage behaves exactly as if invoked standalone with those values.
fn stage_settings(pipeline: &Settings, mut stage: Settings) -> Settings {
    let keys: Vec<String> = stage.keys().map(str::to_string).collect();
    for key in keys {
        if pipeline.contains_key(&key) {
            stage.set(&key, pipeline.get(&key));
        }
    }
    if pipeline.contains_key("preset") {
        stage.set("preset", pipeline.get("preset"));
    }
    stage
}

fn exec_pipeline(s: &Settings) -> CliResult<()> {
    let out_dir = out_dir_of(s)?;

    let sim = stage_settings(s, simulate_defaults());
    exec_simulate(&sim)?;

    let mut train = stage_settings(s, train_defaults());
    train.set("bags", out_dir.join(TRAIN_BAGS).display());
    exec_train(&train)?;

    let mut detect = stage_settings(s, detect_defaults());
    detect.set("bags", out_dir.join(TEST_BAGS).display());
    detect.set("dictionary", out_dir.join(DICTIONARY).display());
    detect.set("stats", out_dir.join(BACKGROUND_STATS).display());
    exec_detect(&detect)?;

    let mut eval = stage_settings(s, eval_defaults());
    eval.set("scores", out_dir.join(SCORES).display());
    eval.set("truth", out_dir.join(TEST_TRUTH).display());
    exec_eval(&eval)?;

    s.save(&out_dir.join("pipeline.resolved.conf"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_parsers_reject_garbage_with_usage_errors() {
        let mut s = detect_defaults();
        s.set("per_signature", "maybe");
        assert!(matches!(get_bool(&s, "per_signature"), Err(CliError::Usage(_))));
        s.set("detector", "both");
        assert!(matches!(get_detector(&s), Err(CliError::Usage(_))));
        s.set("fusion", "median");
        assert!(matches!(get_fusion(&s), Err(CliError::Usage(_))));
        assert!(matches!(require_path(&s, "bags"), Err(CliError::Usage(_))));
    }

    #[test]
    fn clusters_accept_auto_or_counts() {
        let mut s = train_defaults();
        assert_eq!(get_clusters(&s).unwrap(), None);
        s.set("clusters", "12");
        assert_eq!(get_clusters(&s).unwrap(), Some(12));
        s.set("clusters", "lots");
        assert!(get_clusters(&s).is_err());
    }

    #[test]
    fn stage_settings_inherit_shared_keys_only() {
        let mut pipeline = pipeline_defaults();
        pipeline.set("alpha", "0.25");
        pipeline.set("far", "0.5");
        let train = stage_settings(&pipeline, train_defaults());
        assert_eq!(train.get("alpha"), "0.25");
        assert!(!train.contains_key("far"));
        let eval = stage_settings(&pipeline, eval_defaults());
        assert_eq!(eval.get("far"), "0.5");
    }
}
