//! Versioned JSON bundles for fitted fusion and VQC models, top-r
//! persistence across subset sizes, and scoring of raw records.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cgr::{AnchorModel, CgrConfig, Embedding};
use crate::data::{Dataset, Scaler, Splits};
use crate::delta::build_deltas;
use crate::error::{Error, Result};
use crate::fusion::{
    calibrate_alpha_on, class_weights, compute_geometry, evaluate, fbeta_sweep, fuse, AlphaRecord, BetaRecord,
    ClassWeightMode, FusionOutput, FusionParams, MetricsReport,
};
use crate::medoid::MedoidSet;
use crate::optimizer::SearchRecord;
use crate::pipeline::{fit_prototypes, FeatureStage, MedoidParams};
use crate::vqc::{HpCandidate, HpScore, VqcModel, VqcOutcome};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_TOP_R: usize = 2;

/// Seeds and tool version recorded alongside every output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Manifest {
    pub tool_version: String,
    pub command: String,
    pub seeds: BTreeMap<String, u64>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seeds: BTreeMap::new(),
        }
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub val: MetricsReport,
    pub test: Option<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionArtifact {
    pub format_version: u32,
    pub k: usize,
    pub feature_names: Vec<String>,
    pub class_labels: Vec<String>,
    pub stage: FeatureStage,
    pub medoids: MedoidSet,
    pub params: FusionParams,
    pub alpha_star: f64,
    pub alpha_records: Vec<AlphaRecord>,
    pub fbeta: Vec<BetaRecord>,
    pub metrics: SplitMetrics,
    pub manifest: Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub label: usize,
    pub scores: Vec<f64>,
    pub margin: f64,
}

impl FusionArtifact {
    /// Fusion output for raw records laid out like `feature_names`.
    pub fn infer(&self, x: ArrayView2<f64>) -> Result<FusionOutput> {
        if x.ncols() != self.feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_names.len(),
                got: x.ncols(),
            });
        }
        let f = self.stage.transform(x)?;
        fuse(
            &compute_geometry(f.view(), &self.medoids, self.params.shots)?,
            &self.params,
        )
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(self.infer(x)?.labels)
    }

    pub fn score_rows(&self, x: ArrayView2<f64>) -> Result<Vec<ScoredRecord>> {
        let out = self.infer(x)?;
        let margins = out.margins();
        Ok(out
            .labels
            .iter()
            .zip(margins)
            .zip(out.scores.rows())
            .map(|((&label, margin), s)| ScoredRecord {
                label,
                scores: s.to_vec(),
                margin,
            })
            .collect())
    }

    /// Unstandardized margin features for raw records.
    pub fn deltas(&self, x: ArrayView2<f64>, include_fused: bool) -> Result<Array2<f64>> {
        build_deltas(&self.infer(x)?, include_fused)
    }
}

/// Scores one raw record with every original feature in order.
pub fn score_record(artifact: &FusionArtifact, record: &[f64]) -> Result<ScoredRecord> {
    let x = ArrayView2::from_shape((1, record.len()), record).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(artifact.score_rows(x)?.remove(0))
}

/// Scores a record given as `(column, value)` pairs, naming any column the
/// artifact needs but the record lacks.
pub fn score_named(artifact: &FusionArtifact, record: &BTreeMap<String, f64>) -> Result<ScoredRecord> {
    let row = artifact
        .feature_names
        .iter()
        .map(|name| {
            record
                .get(name)
                .copied()
                .ok_or_else(|| Error::MissingFeature(name.clone()))
        })
        .collect::<Result<Vec<f64>>>()?;
    score_record(artifact, &row)
}

/// Inputs for fitting a fusion artifact beyond the configuration itself.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionFitSettings {
    pub base: FusionParams,
    pub weight_mode: ClassWeightMode,
    pub alpha_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    pub medoid: MedoidParams,
    pub embedding: Embedding,
}

/// Refits scaler and medoids on train, calibrates the mixing weight on
/// validation and evaluates both validation and test.
pub fn fit_fusion_artifact(
    k: usize,
    config: &CgrConfig,
    anchor_model: &AnchorModel,
    splits: &Splits,
    settings: &FusionFitSettings,
    manifest: Manifest,
) -> Result<FusionArtifact> {
    let train = &splits.train;
    let protos = fit_prototypes(train, anchor_model, config, settings.embedding, settings.medoid)?;
    let mut params = FusionParams {
        class_weights: class_weights(&train.class_counts(), settings.weight_mode),
        ..settings.base.clone()
    };
    let f_val = protos.stage.transform(splits.val.x.view())?;
    let g_val = compute_geometry(f_val.view(), &protos.medoids, params.shots)?;
    let (alpha_star, alpha_records) = calibrate_alpha_on(&g_val, &splits.val.y, &settings.alpha_grid, &params)?;
    params.alpha = alpha_star;
    let n_classes = train.n_classes();
    let val_pred = fuse(&g_val, &params)?.labels;
    let val = evaluate(&splits.val.y, &val_pred, n_classes)?;
    let test = if splits.test.n_rows() > 0 {
        let f_test = protos.stage.transform(splits.test.x.view())?;
        let pred = fuse(
            &compute_geometry(f_test.view(), &protos.medoids, params.shots)?,
            &params,
        )?
        .labels;
        Some(evaluate(&splits.test.y, &pred, n_classes)?)
    } else {
        None
    };
    let fbeta = fbeta_sweep(&splits.val.y, &val_pred, n_classes, &settings.beta_grid)?;
    Ok(FusionArtifact {
        format_version: FORMAT_VERSION,
        k,
        feature_names: train.feature_names.clone(),
        class_labels: train.class_labels.clone(),
        stage: protos.stage,
        medoids: protos.medoids,
        params,
        alpha_star,
        alpha_records,
        fbeta,
        metrics: SplitMetrics { val, test },
        manifest,
    })
}

pub fn fusion_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("fusion_k{k}.json"))
}

pub fn vqc_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("vqc_k{k}.json"))
}

/// Fits and writes artifacts for the `r` best subset sizes by validation
/// macro-F1 (ties to smaller `k`). Returns them best first.
pub fn persist_top_r(
    record: &SearchRecord,
    anchor_model: &AnchorModel,
    splits: &Splits,
    r: usize,
    settings: &FusionFitSettings,
    manifest: &Manifest,
    out_dir: &Path,
) -> Result<Vec<(PathBuf, FusionArtifact)>> {
    if r == 0 {
        return Err(Error::InvalidArgument("top-r must be at least 1".into()));
    }
    if record.entries.is_empty() {
        return Err(Error::Artifact("search record has no entries".into()));
    }
    let mut out = Vec::new();
    for entry in record.ranked().into_iter().take(r) {
        let art = fit_fusion_artifact(
            entry.k,
            &entry.best_config,
            anchor_model,
            splits,
            settings,
            manifest.clone(),
        )?;
        let path = fusion_path(out_dir, entry.k);
        save_json(&path, &art)?;
        out.push((path, art));
    }
    if let Some((path, art)) = out.first() {
        update_best_alias(out_dir, AliasKind::Fusion, art.k, path, art.metrics.val.macro_f1)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRates {
    pub val: f64,
    pub test: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqcArtifact {
    pub format_version: u32,
    pub k: usize,
    pub delta_columns: Vec<String>,
    /// Standardizes raw margins before the classifier's own angle map.
    pub delta_scaler: Scaler,
    pub model: VqcModel,
    pub hp: HpCandidate,
    pub cv: Vec<HpScore>,
    pub metrics: SplitMetrics,
    pub alert_rate: AlertRates,
    pub final_loss: f64,
    pub best_alias: bool,
    pub manifest: Manifest,
}

impl VqcArtifact {
    pub fn from_outcome(
        k: usize,
        delta_columns: Vec<String>,
        delta_scaler: Scaler,
        outcome: VqcOutcome,
        manifest: Manifest,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            k,
            delta_columns,
            delta_scaler,
            model: outcome.model,
            hp: outcome.hp,
            cv: outcome.cv,
            metrics: SplitMetrics {
                val: outcome.val,
                test: outcome.test,
            },
            alert_rate: AlertRates {
                val: outcome.val_alert_rate,
                test: outcome.test_alert_rate,
            },
            final_loss: outcome.final_loss,
            best_alias: false,
            manifest,
        }
    }

    /// Class probabilities for raw (unstandardized) margin rows.
    pub fn probabilities(&self, raw_deltas: ArrayView2<f64>) -> Result<Array2<f64>> {
        let z = self.delta_scaler.transform(raw_deltas)?;
        self.model.probabilities(z.view())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AliasKind {
    Fusion,
    Vqc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AliasEntry {
    pub k: usize,
    pub path: String,
    pub val_score: f64,
}

/// Pointer to the winning artifact of each kind in a directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestAlias {
    pub format_version: u32,
    pub fusion: Option<AliasEntry>,
    pub vqc: Option<AliasEntry>,
}

pub fn update_best_alias(dir: &Path, kind: AliasKind, k: usize, path: &Path, val_score: f64) -> Result<BestAlias> {
    let alias_path = dir.join("best_alias.json");
    let mut alias = if alias_path.exists() {
        load_json::<BestAlias>(&alias_path)?
    } else {
        BestAlias {
            format_version: FORMAT_VERSION,
            fusion: None,
            vqc: None,
        }
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let entry = Some(AliasEntry {
        k,
        path: name,
        val_score,
    });
    match kind {
        AliasKind::Fusion => alias.fusion = entry,
        AliasKind::Vqc => alias.vqc = entry,
    }
    save_json(&alias_path, &alias)?;
    Ok(alias)
}

/// Serializes to a sibling temp file, then renames over `path`.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    serde_json::to_writer_pretty(&mut tmp, value)?;
    tmp.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Loads a JSON document carrying `format_version`, rejecting versions this
/// build does not understand.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Artifact(format!("{} has no format_version", path.display())))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(Error::ArtifactVersion {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| Error::Artifact(format!("{}: {e}", path.display())))
}

/// Reads the columns named in `features` (in that order) from a CSV file,
/// plus the raw values of `label` when present.
pub fn read_feature_table(
    path: &Path,
    features: &[String],
    label: Option<&str>,
) -> Result<(Array2<f64>, Option<Vec<String>>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
        _ => Error::Csv(e),
    })?;
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').trim().to_string())
        .collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let cols = features
        .iter()
        .map(|f| find(f).ok_or_else(|| Error::MissingFeature(f.clone())))
        .collect::<Result<Vec<usize>>>()?;
    let label_col = label.and_then(find);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (&c, name) in cols.iter().zip(features) {
            let cell = rec.get(c).unwrap_or("").trim();
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::NonNumeric {
                    row: row + 1,
                    column: name.clone(),
                    value: cell.to_string(),
                })?;
            values.push(v);
        }
        if let Some(c) = label_col {
            labels.push(rec.get(c).unwrap_or("").trim().to_string());
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let x = Array2::from_shape_vec((n, features.len()), values).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok((x, label_col.map(|_| labels)))
}

/// Re-encodes raw label strings with an artifact's class inventory.
pub fn encode_labels(raw: &[String], class_labels: &[String]) -> Result<Vec<usize>> {
    raw.iter()
        .map(|s| {
            class_labels
                .iter()
                .position(|c| c == s)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown class label `{s}`")))
        })
        .collect()
}

/// Rows of `ds` laid out in the artifact's feature order.
pub fn align_features(ds: &Dataset, feature_names: &[String]) -> Result<Array2<f64>> {
    let cols = feature_names
        .iter()
        .map(|f| {
            ds.feature_names
                .iter()
                .position(|g| g == f)
                .ok_or_else(|| Error::MissingFeature(f.clone()))
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok(ds.x.select(ndarray::Axis(1), &cols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgr::build_anchor_model;
    use crate::data::{correlation, stratified_split};
    use crate::fusion::{default_alpha_grid, default_beta_grid};
    use crate::optimizer::{coordinate_descent, SearchContext, SearchSettings};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn toy() -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 90;
        let y: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let x = Array2::from_shape_fn((n, 4), |(i, j)| {
            let e: f64 = StandardNormal.sample(&mut rng);
            e + if j < 2 { 2.0 * y[i] as f64 } else { 0.0 }
        });
        Dataset::from_parts(x, y).unwrap()
    }

    fn settings() -> FusionFitSettings {
        FusionFitSettings {
            base: FusionParams::default(),
            weight_mode: ClassWeightMode::None,
            alpha_grid: default_alpha_grid(),
            beta_grid: default_beta_grid(),
            medoid: MedoidParams::default(),
            embedding: Embedding::Phi,
        }
    }

    fn searched() -> (Splits, AnchorModel, SearchRecord) {
        let ds = toy();
        let splits = stratified_split(&ds, [0.5, 0.25, 0.25], 0).unwrap();
        let model = build_anchor_model(&correlation(&splits.train, true).unwrap(), 3, None).unwrap();
        let ctx = SearchContext {
            train: &splits.train,
            val: &splits.val,
            anchor_model: &model,
            fusion: FusionParams {
                alpha: 1.0,
                ..FusionParams::default()
            },
            medoid: MedoidParams::default(),
            embedding: Embedding::Phi,
        };
        let rec = coordinate_descent(
            &ctx,
            &SearchSettings {
                k_min: 2,
                k_max: 4,
                ..Default::default()
            },
        )
        .unwrap();
        (splits, model, rec)
    }

    #[test]
    fn top_r_round_trip() {
        let (splits, model, rec) = searched();
        let dir = tempfile::tempdir().unwrap();
        let arts = persist_top_r(
            &rec,
            &model,
            &splits,
            2,
            &settings(),
            &Manifest::new("test"),
            dir.path(),
        )
        .unwrap();
        assert_eq!(arts.len(), 2);
        assert_eq!(arts[0].1.k, rec.ranked()[0].k);
        let all = persist_top_r(
            &rec,
            &model,
            &splits,
            10,
            &settings(),
            &Manifest::new("test"),
            dir.path(),
        )
        .unwrap();
        assert_eq!(all.len(), 3);

        let (path, art) = &arts[0];
        let back: FusionArtifact = load_json(path).unwrap();
        assert_eq!(&back, art);
        for split in [&splits.train, &splits.val, &splits.test] {
            assert_eq!(
                back.predict(split.x.view()).unwrap(),
                art.predict(split.x.view()).unwrap()
            );
        }
        let pred = back.predict(splits.test.x.view()).unwrap();
        assert_eq!(
            evaluate(&splits.test.y, &pred, 3).unwrap(),
            *art.metrics.test.as_ref().unwrap()
        );

        let alias: BestAlias = load_json(&dir.path().join("best_alias.json")).unwrap();
        assert_eq!(alias.fusion.unwrap().k, art.k);
    }

    #[test]
    fn version_and_schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        std::fs::write(&p, r#"{"format_version": 99}"#).unwrap();
        assert!(matches!(
            load_json::<BestAlias>(&p),
            Err(Error::ArtifactVersion { found: 99, .. })
        ));
        std::fs::write(&p, r#"{"k": 1}"#).unwrap();
        assert!(matches!(load_json::<BestAlias>(&p), Err(Error::Artifact(_))));
    }

    #[test]
    fn scoring_contracts() {
        let (splits, model, rec) = searched();
        let best = rec.ranked()[0];
        let mut s = settings();
        s.base.use_angular = false;
        let art = fit_fusion_artifact(best.k, &best.best_config, &model, &splits, &s, Manifest::new("t")).unwrap();
        assert_eq!(art.alpha_star, 1.0);

        let row = splits.train.x.row(0).to_vec();
        let scored = score_record(&art, &row).unwrap();
        assert_eq!(scored.label, art.predict(splits.train.x.view()).unwrap()[0]);
        assert!(scored.margin >= 0.0);

        let mut named: BTreeMap<String, f64> = art.feature_names.iter().cloned().zip(row.iter().copied()).collect();
        assert_eq!(score_named(&art, &named).unwrap(), scored);
        named.remove("f2");
        assert!(matches!(score_named(&art, &named), Err(Error::MissingFeature(c)) if c == "f2"));
        assert!(score_record(&art, &row[..3]).is_err());
    }

    #[test]
    fn feature_table_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "b,label,a\n2,x,1\n4,y,3\n").unwrap();
        let names = vec!["a".to_string(), "b".to_string()];
        let (x, labels) = read_feature_table(&p, &names, Some("label")).unwrap();
        assert_eq!(x, ndarray::array![[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(labels.unwrap(), vec!["x", "y"]);
        let missing = vec!["c".to_string()];
        assert!(matches!(read_feature_table(&p, &missing, None), Err(Error::MissingFeature(c)) if c == "c"));
    }
}
