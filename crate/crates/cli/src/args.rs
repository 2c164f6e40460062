use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use geoq_core::cgr::Embedding;
use geoq_core::fusion::ClassWeightMode;
use geoq_core::quantum::Shots;
use geoq_core::vqc::TargetMetric;

#[derive(Debug, Parser)]
#[command(name = "geoq", version, about = "Geometry-first tabular classification pipeline")]
pub struct Cli {
    /// JSON object or key=value file whose keys mirror the long flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a CSV and write the split files with a correlation summary.
    Prepare(PrepareArgs),
    /// Coordinate-descent search over subset configurations for a range of k.
    Search(SearchArgs),
    /// Mixing-weight calibration and F-beta sweep for one searched k.
    Calibrate(CalibrateArgs),
    /// Fit and save fusion artifacts for the best subset sizes.
    FitFusion(FitFusionArgs),
    /// Write margin-feature CSVs for every split under a fusion artifact.
    BuildDelta(BuildDeltaArgs),
    /// K-fold selection and training of the variational classifier.
    TrainVqc(TrainVqcArgs),
    /// Apply a fusion or classifier artifact to a CSV.
    Score(ScoreArgs),
    /// Metrics from a predictions file and the true labels.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Name of the label column.
    #[arg(long)]
    pub label: String,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.56,0.19,0.25", value_parser = parse_split)]
    pub split: [f64; 3],
    /// Seed for the stratified split and everything seeded downstream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parsed numeric list flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsizeList(pub Vec<usize>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShotCount {
    Exact,
    Count(u64),
}

#[derive(Debug, Clone, Args)]
pub struct GeometryArgs {
    /// `exact` or a shot count for the swap-test estimate.
    #[arg(long, default_value = "exact", value_parser = parse_shot_count)]
    pub shots: ShotCount,
    /// Seed for shot sampling.
    #[arg(long, default_value_t = 0)]
    pub qseed: u64,
    /// Feature embedding: `phi` or `multiplicative`.
    #[arg(long, default_value = "phi", value_parser = parse_embedding)]
    pub embedding: Embedding,
    /// Per-class row cap for the exact medoid; larger classes are subsampled.
    #[arg(long, default_value_t = geoq_core::medoid::DEFAULT_MAX_POINTS)]
    pub medoid_max: usize,
}

impl GeometryArgs {
    pub fn shots(&self) -> Shots {
        match self.shots {
            ShotCount::Exact => Shots::Exact,
            ShotCount::Count(shots) => Shots::Sampled {
                shots,
                seed: self.qseed,
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PrepareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// Subset sizes as `min:max` or a single value.
    #[arg(long, default_value = "2:5", value_parser = parse_k_range)]
    pub k: (usize, usize),
    /// Maximum passes over the anchors per k.
    #[arg(long, default_value_t = 3)]
    pub passes: usize,
    /// Candidate subsets per anchor and pass; 0 evaluates all of them.
    #[arg(long, default_value_t = 200)]
    pub budget: usize,
    /// Membership size per anchor (default: min(6, features - 1)).
    #[arg(long)]
    pub m: Option<usize>,
    /// Keep only the first anchors in target-correlation order.
    #[arg(long)]
    pub max_anchors: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FusionGridArgs {
    /// Alpha values, as `start:stop:step` or a comma list.
    #[arg(long, default_value = "0:1:0.05", value_parser = parse_grid)]
    pub alpha_grid: Grid,
    /// F-beta values to report.
    #[arg(long, default_value = "0.5,1,2", value_parser = parse_grid)]
    pub beta_grid: Grid,
    /// Class weights on fused scores: `none` or `inv_sqrt`.
    #[arg(long, default_value = "none", value_parser = parse_weight_mode)]
    pub class_weights: ClassWeightMode,
    /// Use the distance channel only.
    #[arg(long)]
    pub no_angular: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grids: FusionGridArgs,
    /// Search record written by `search`.
    #[arg(long, value_name = "PATH")]
    pub search_record: PathBuf,
    /// Subset size to calibrate (default: best searched k).
    #[arg(long)]
    pub k: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FitFusionArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grids: FusionGridArgs,
    /// Search record written by `search`.
    #[arg(long, value_name = "PATH")]
    pub search_record: PathBuf,
    /// Number of subset sizes to persist, best first.
    #[arg(long, default_value_t = geoq_core::artifacts::DEFAULT_TOP_R)]
    pub top_r: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BuildDeltaArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Fusion artifact (default: the fusion entry of best_alias.json in --out).
    #[arg(long, value_name = "PATH")]
    pub artifact: Option<PathBuf>,
    /// Add the fused-score margin as a third column.
    #[arg(long)]
    pub include_fused: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainVqcArgs {
    /// Directory with the files written by `build-delta`.
    #[arg(long, default_value = "out", value_name = "DIR")]
    pub delta_dir: PathBuf,
    /// Output directory (default: the delta directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Ansatz repetitions to try.
    #[arg(long, default_value = "1,2,3", value_parser = parse_usize_list)]
    pub reps: UsizeList,
    /// Re-uploading settings to try: `both`, `on` or `off`.
    #[arg(long, default_value = "both", value_parser = ["both", "on", "off"])]
    pub reupload: String,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0.2)]
    pub spsa_a: f64,
    #[arg(long, default_value_t = 0.15)]
    pub spsa_c: f64,
    #[arg(long, default_value_t = 0.602)]
    pub spsa_alpha: f64,
    #[arg(long, default_value_t = 0.101)]
    pub spsa_gamma: f64,
    /// Gradient norm clip.
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,
    /// Early-stopping patience in steps.
    #[arg(long, default_value_t = 25)]
    pub patience: usize,
    /// Minimum loss improvement that resets patience.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0.1)]
    pub init_sigma: f64,
    /// Weight the loss so each class contributes equally.
    #[arg(long)]
    pub balance_classes: bool,
    /// Clip bound for standardized inputs before the angle map.
    #[arg(long, default_value_t = 3.0)]
    pub z_max: f64,
    /// Per-input angle scales (one value is broadcast).
    #[arg(long, value_parser = parse_grid)]
    pub lambda: Option<Grid>,
    /// Qubit count (default: max(2, inputs)).
    #[arg(long)]
    pub qubits: Option<usize>,
    /// `macro_f1` or `recall_at_alert:<max rate>`.
    #[arg(long, default_value = "macro_f1", value_parser = parse_target_metric)]
    pub target_metric: TargetMetric,
    /// Threshold grid searched on validation data.
    #[arg(long, default_value = "0.05:0.95:0.05", value_parser = parse_grid)]
    pub threshold_grid: Grid,
    /// Fixed decision threshold on P(class 1) instead of the tuned one.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    /// Fusion or classifier artifact.
    #[arg(long, value_name = "PATH")]
    pub artifact: PathBuf,
    /// CSV with the artifact's feature columns.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Label column; when present metrics are added to the report.
    #[arg(long)]
    pub label: Option<String>,
    /// Fusion artifact feeding a classifier (default: fusion_k<k>.json next to it).
    #[arg(long, value_name = "PATH")]
    pub fusion: Option<PathBuf>,
    /// Decision threshold override for a binary classifier.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Predictions CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report JSON (default: stdout when --out is given).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Predictions CSV with `row_id` and `label` columns.
    #[arg(long, value_name = "PATH")]
    pub predictions: PathBuf,
    /// CSV holding the true labels, one row per `row_id`.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Label column in --data.
    #[arg(long)]
    pub label: String,
    /// Report JSON (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn parse_split(s: &str) -> Result<[f64; 3], String> {
    geoq_core::data::parse_fractions(s).map_err(|e| e.to_string())
}

pub fn parse_shot_count(s: &str) -> Result<ShotCount, String> {
    if s.eq_ignore_ascii_case("exact") {
        return Ok(ShotCount::Exact);
    }
    match s.parse::<u64>() {
        Ok(0) => Err("shot count must be positive".into()),
        Ok(n) => Ok(ShotCount::Count(n)),
        Err(_) => Err(format!("expected `exact` or a shot count, got `{s}`")),
    }
}

pub fn parse_embedding(s: &str) -> Result<Embedding, String> {
    match s {
        "phi" => Ok(Embedding::Phi),
        "multiplicative" | "z" => Ok(Embedding::Multiplicative),
        _ => Err(format!("unknown embedding `{s}` (phi or multiplicative)")),
    }
}

pub fn parse_weight_mode(s: &str) -> Result<ClassWeightMode, String> {
    s.parse().map_err(|e: geoq_core::Error| e.to_string())
}

pub fn parse_k_range(s: &str) -> Result<(usize, usize), String> {
    let num = |p: &str| p.trim().parse::<usize>().map_err(|_| format!("bad k range `{s}`"));
    let (lo, hi) = match s.split_once(':') {
        Some((a, b)) => (num(a)?, num(b)?),
        None => {
            let k = num(s)?;
            (k, k)
        }
    };
    if lo == 0 || lo > hi {
        return Err(format!("k range `{s}` must satisfy 1 <= min <= max"));
    }
    Ok((lo, hi))
}

/// `start:stop:step` (inclusive) or a comma list.
pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let num = |p: &str| {
        p.trim()
            .parse::<f64>()
            .map_err(|_| format!("bad number `{p}` in `{s}`"))
    };
    let parts: Vec<&str> = s.split(':').collect();
    let values = match parts.as_slice() {
        [start, stop, step] => {
            let (a, b, h) = (num(start)?, num(stop)?, num(step)?);
            if !(h > 0.0) || b < a {
                return Err(format!("grid `{s}` needs step > 0 and stop >= start"));
            }
            let n = ((b - a) / h + 1e-9).floor() as usize;
            (0..=n).map(|i| a + i as f64 * h).collect()
        }
        [_] => s.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(format!("grid `{s}` must be start:stop:step or a comma list")),
    };
    if values.is_empty() {
        return Err("grid is empty".into());
    }
    Ok(Grid(values))
}

pub fn parse_usize_list(s: &str) -> Result<UsizeList, String> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad integer `{p}`")))
        .collect::<Result<_, _>>()
        .map(UsizeList)
}

pub fn parse_target_metric(s: &str) -> Result<TargetMetric, String> {
    if s == "macro_f1" {
        return Ok(TargetMetric::MacroF1);
    }
    if let Some(rate) = s.strip_prefix("recall_at_alert") {
        let rate = match rate.strip_prefix(':') {
            Some(r) => r.parse::<f64>().map_err(|_| format!("bad alert rate in `{s}`"))?,
            None if rate.is_empty() => 0.05,
            None => return Err(format!("unknown target metric `{s}`")),
        };
        if !(0.0..=1.0).contains(&rate) {
            return Err("alert rate must lie in [0, 1]".into());
        }
        return Ok(TargetMetric::RecallAtAlert { max_alert_rate: rate });
    }
    Err(format!(
        "unknown target metric `{s}` (macro_f1 or recall_at_alert:<rate>)"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn parsers() {
        assert_eq!(parse_k_range("2:5").unwrap(), (2, 5));
        assert_eq!(parse_k_range("3").unwrap(), (3, 3));
        assert!(parse_k_range("5:2").is_err());
        assert!(parse_k_range("0:2").is_err());
        assert_eq!(parse_shot_count("exact").unwrap(), ShotCount::Exact);
        assert_eq!(parse_shot_count("1000").unwrap(), ShotCount::Count(1000));
        assert!(parse_shot_count("0").is_err());
        let g = parse_grid("0:1:0.05").unwrap().0;
        assert_eq!(g.len(), 21);
        assert!((g[20] - 1.0).abs() < 1e-12);
        assert_eq!(parse_grid("0.5,1,2").unwrap().0, vec![0.5, 1.0, 2.0]);
        assert!(parse_grid("1:0:0.1").is_err());
        assert_eq!(
            parse_target_metric("recall_at_alert:0.02").unwrap(),
            TargetMetric::RecallAtAlert { max_alert_rate: 0.02 }
        );
        assert_eq!(parse_target_metric("macro_f1").unwrap(), TargetMetric::MacroF1);
        assert!(parse_target_metric("auc").is_err());
    }

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
