//! Fusion scoring over per-class distance and angle channels, classification
//! metrics, mixing-weight calibration and F-beta reporting.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medoid::MedoidSet;
use crate::quantum::{compact_swap_test, derive_seed, Shots};

pub const DEFAULT_EPSILON: f64 = 1e-12;

/// `0.0, 0.05, ..., 1.0`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

pub fn default_beta_grid() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeightMode {
    #[default]
    None,
    /// `w_c = sqrt(n_c / max n)`: smaller multipliers for rarer classes, which
    /// favours them under the minimum-score rule.
    InvSqrt,
}

impl std::str::FromStr for ClassWeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "inv_sqrt" => Ok(Self::InvSqrt),
            _ => Err(Error::InvalidArgument(format!("unknown class weight mode `{s}`"))),
        }
    }
}

pub fn class_weights(counts: &[usize], mode: ClassWeightMode) -> Option<Vec<f64>> {
    match mode {
        ClassWeightMode::None => None,
        ClassWeightMode::InvSqrt => {
            let max = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
            Some(counts.iter().map(|&n| (n.max(1) as f64 / max).sqrt()).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub alpha: f64,
    pub use_angular: bool,
    pub epsilon: f64,
    pub class_weights: Option<Vec<f64>>,
    #[serde(default)]
    pub shots: Shots,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            use_angular: true,
            epsilon: DEFAULT_EPSILON,
            class_weights: None,
            shots: Shots::Exact,
        }
    }
}

impl FusionParams {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        if let Some(w) = &self.class_weights {
            if w.len() != n_classes {
                return Err(Error::DimensionMismatch {
                    expected: n_classes,
                    got: w.len(),
                });
            }
            if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidArgument("class weights must be positive".into()));
            }
        }
        Ok(())
    }

    fn effective_alpha(&self) -> f64 {
        if self.use_angular {
            self.alpha
        } else {
            1.0
        }
    }
}

/// Raw distance and angle from every sample to every class medoid (`N × C`).
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub distance: Array2<f64>,
    pub angle: Array2<f64>,
}

impl Geometry {
    pub fn n_samples(&self) -> usize {
        self.distance.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.distance.ncols()
    }
}

/// Runs the compact SWAP test of every row of `f` against every medoid.
/// In sampled mode each (row, class) pair gets its own derived seed.
pub fn compute_geometry(f: ArrayView2<f64>, medoids: &MedoidSet, shots: Shots) -> Result<Geometry> {
    let c = medoids.n_classes();
    if c < 2 {
        return Err(Error::InvalidArgument("fusion needs at least two classes".into()));
    }
    let protos: Vec<&[f64]> = (0..c).map(|k| medoids.get(k)).collect::<Result<_>>()?;
    if f.ncols() != medoids.dim() {
        return Err(Error::DimensionMismatch {
            expected: medoids.dim(),
            got: f.ncols(),
        });
    }
    let rows: Vec<Vec<(f64, f64)>> = (0..f.nrows())
        .into_par_iter()
        .map(|i| {
            let x = f.row(i).to_vec();
            protos
                .iter()
                .enumerate()
                .map(|(k, m)| {
                    let shots = match shots {
                        Shots::Exact => Shots::Exact,
                        Shots::Sampled { shots, seed } => Shots::Sampled {
                            shots,
                            seed: derive_seed(seed, i as u64, k as u64),
                        },
                    };
                    compact_swap_test(&x, m, shots).map(|g| (g.distance, g.angle))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    let mut distance = Array2::zeros((n, c));
    let mut angle = Array2::zeros((n, c));
    for (i, row) in rows.into_iter().enumerate() {
        for (k, (d, t)) in row.into_iter().enumerate() {
            distance[[i, k]] = d;
            angle[[i, k]] = t;
        }
    }
    Ok(Geometry { distance, angle })
}

/// Normalized channels, fused scores and minimum-score labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutput {
    pub labels: Vec<usize>,
    pub distance_norm: Array2<f64>,
    pub angle_norm: Array2<f64>,
    pub scores: Array2<f64>,
}

impl FusionOutput {
    /// Runner-up score minus best score, per sample.
    pub fn margins(&self) -> Vec<f64> {
        self.scores
            .rows()
            .into_iter()
            .zip(&self.labels)
            .map(|(row, &best)| {
                let runner = row
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != best)
                    .map(|(_, &v)| v)
                    .fold(f64::INFINITY, f64::min);
                runner - row[best]
            })
            .collect()
    }
}

/// Index of the smallest value; ties go to the lower index.
pub fn argmin(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, v) in values.into_iter().enumerate() {
        if v < best.0 || i == 0 {
            best = (v, i);
        }
    }
    best.1
}

pub fn fuse(geometry: &Geometry, params: &FusionParams) -> Result<FusionOutput> {
    let c = geometry.n_classes();
    params.validate(c)?;
    let alpha = params.effective_alpha();
    let normalize = |m: &Array2<f64>| {
        let mut out = m.clone();
        for mut row in out.rows_mut() {
            let total = row.sum() + params.epsilon;
            row.mapv_inplace(|v| v / total);
        }
        out
    };
    let distance_norm = normalize(&geometry.distance);
    let angle_norm = normalize(&geometry.angle);
    let mut scores = if params.use_angular {
        &distance_norm * alpha + &angle_norm * (1.0 - alpha)
    } else {
        distance_norm.clone()
    };
    if let Some(w) = &params.class_weights {
        for mut row in scores.rows_mut() {
            for (v, wc) in row.iter_mut().zip(w) {
                *v *= wc;
            }
        }
    }
    let labels = scores
        .rows()
        .into_iter()
        .map(|row| argmin(row.iter().copied()))
        .collect();
    Ok(FusionOutput {
        labels,
        distance_norm,
        angle_norm,
        scores,
    })
}

pub fn fusion_infer(f: ArrayView2<f64>, medoids: &MedoidSet, params: &FusionParams) -> Result<FusionOutput> {
    fuse(&compute_geometry(f, medoids, params.shots)?, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    Macro,
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    ratio((1.0 + b2) * precision * recall, b2 * precision + recall)
}

impl MetricsReport {
    pub fn f1(&self, averaging: Averaging) -> f64 {
        match averaging {
            Averaging::Macro => self.macro_f1,
            Averaging::Weighted => self.weighted_f1,
        }
    }

    /// Class-averaged F-beta; `beta = 1` gives the matching F1 average.
    pub fn f_beta(&self, beta: f64, averaging: Averaging) -> Result<f64> {
        if !(beta > 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
        }
        let per: Vec<(f64, usize)> = self
            .per_class
            .iter()
            .map(|m| (f_beta(m.precision, m.recall, beta), m.support))
            .collect();
        Ok(match averaging {
            Averaging::Macro => per.iter().map(|p| p.0).sum::<f64>() / per.len() as f64,
            Averaging::Weighted => per.iter().map(|&(f, s)| f * s as f64).sum::<f64>() / self.n as f64,
        })
    }

    /// Fraction of samples predicted as `class`.
    pub fn predicted_rate(&self, class: usize) -> f64 {
        let predicted: usize = self.confusion.iter().map(|row| row[class]).sum();
        ratio(predicted as f64, self.n as f64)
    }
}

pub fn evaluate(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<MetricsReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        for label in [t, p] {
            if label >= n_classes {
                return Err(Error::LabelOutOfRange { label, n_classes });
            }
        }
        confusion[t][p] += 1;
    }
    let n = y_true.len();
    let per_class: Vec<ClassMetrics> = (0..n_classes)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted as f64);
            let recall = ratio(tp, support as f64);
            ClassMetrics {
                precision,
                recall,
                f1: f_beta(precision, recall, 1.0),
                support,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n_classes as f64;
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    Ok(MetricsReport {
        n,
        accuracy: correct as f64 / n as f64,
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        weighted_f1: per_class.iter().map(|m| m.f1 * m.support as f64).sum::<f64>() / n as f64,
        per_class,
        confusion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaRecord {
    pub alpha: f64,
    pub macro_f1: f64,
}

/// Grid search for the mixing weight on precomputed validation geometry.
/// Returns `1.0` when the angular channel is disabled; equal scores keep the
/// earlier grid value.
pub fn calibrate_alpha_on(
    geometry: &Geometry,
    y: &[usize],
    grid: &[f64],
    params: &FusionParams,
) -> Result<(f64, Vec<AlphaRecord>)> {
    if !params.use_angular {
        return Ok((1.0, Vec::new()));
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("alpha grid is empty".into()));
    }
    let records: Vec<AlphaRecord> = grid
        .par_iter()
        .map(|&alpha| {
            let p = FusionParams {
                alpha,
                ..params.clone()
            };
            let out = fuse(geometry, &p)?;
            let report = evaluate(y, &out.labels, geometry.n_classes())?;
            Ok(AlphaRecord {
                alpha,
                macro_f1: report.macro_f1,
            })
        })
        .collect::<Result<_>>()?;
    let mut best = records[0];
    for r in &records[1..] {
        if r.macro_f1 > best.macro_f1 {
            best = *r;
        }
    }
    Ok((best.alpha, records))
}

pub fn calibrate_alpha(
    f_val: ArrayView2<f64>,
    y_val: &[usize],
    medoids: &MedoidSet,
    grid: &[f64],
    params: &FusionParams,
) -> Result<(f64, Vec<AlphaRecord>)> {
    if !params.use_angular {
        return Ok((1.0, Vec::new()));
    }
    let geometry = compute_geometry(f_val, medoids, params.shots)?;
    calibrate_alpha_on(&geometry, y_val, grid, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaRecord {
    pub beta: f64,
    pub macro_f_beta: f64,
}

/// Macro F-beta for each `beta` under fixed predictions.
pub fn fbeta_sweep(y_true: &[usize], y_pred: &[usize], n_classes: usize, grid: &[f64]) -> Result<Vec<BetaRecord>> {
    let report = evaluate(y_true, y_pred, n_classes)?;
    grid.iter()
        .map(|&beta| {
            Ok(BetaRecord {
                beta,
                macro_f_beta: report.f_beta(beta, Averaging::Macro)?,
            })
        })
        .collect()
}
