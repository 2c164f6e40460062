//! prepare, search, calibrate, fit-fusion and build-delta.

use std::path::{Path, PathBuf};

use geoq_core::artifacts::{
    self, fit_fusion_artifact, persist_top_r, BestAlias, FusionArtifact, FusionFitSettings, Manifest, FORMAT_VERSION,
};
use geoq_core::cgr::build_anchor_model;
use geoq_core::data::{class_counts, correlation, Dataset};
use geoq_core::delta::{delta_columns, write_delta_csv};
use geoq_core::fusion::FusionParams;
use geoq_core::optimizer::{coordinate_descent, SearchContext, SearchSettings};
use geoq_core::pipeline::MedoidParams;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::{BuildDeltaArgs, CalibrateArgs, FitFusionArgs, FusionGridArgs, PrepareArgs, SearchArgs};
use crate::common::{
    default_membership, emit_report, ensure_dir, label_strings, load_data, load_search_file, search_record_path,
    write_dataset_csv, SearchFile,
};
use crate::failure::{CliResult, Failure};

pub fn prepare(args: &PrepareArgs) -> CliResult<()> {
    let loaded = load_data(&args.data)?;
    ensure_dir(&args.out)?;
    let sp = &loaded.splits;
    let names = ["train", "val", "test"];
    let mut files = serde_json::Map::new();
    for (name, ds) in names.iter().zip([&sp.train, &sp.val, &sp.test]) {
        let path = args.out.join(format!("{name}.csv"));
        write_dataset_csv(&path, ds, &args.data.label)?;
        files.insert(name.to_string(), json!(path.display().to_string()));
    }

    let corr = correlation(&sp.train, true)?;
    let m = default_membership(loaded.dataset.n_features())?;
    let model = build_anchor_model(&corr, m, None)?;
    let names_of =
        |idx: &[usize]| -> Vec<&str> { idx.iter().map(|&i| loaded.dataset.feature_names[i].as_str()).collect() };
    let target: Vec<_> = loaded
        .dataset
        .feature_names
        .iter()
        .zip(corr.target_corr.as_deref().unwrap_or_default())
        .map(|(f, r)| json!({"feature": f, "r": r}))
        .collect();
    let memberships: serde_json::Map<String, serde_json::Value> = model
        .anchors
        .iter()
        .map(|a| {
            (
                loaded.dataset.feature_names[*a].clone(),
                json!(names_of(&model.membership[a])),
            )
        })
        .collect();
    let n_classes = loaded.dataset.n_classes();
    let manifest = Manifest::new("prepare").seed("split", args.data.seed);
    let report = json!({
        "manifest": manifest,
        "data": loaded.fingerprint,
        "class_labels": loaded.dataset.class_labels,
        "sizes": {"train": sp.train.n_rows(), "val": sp.val.n_rows(), "test": sp.test.n_rows()},
        "class_counts": {
            "train": class_counts(&sp.train.y, n_classes),
            "val": class_counts(&sp.val.y, n_classes),
            "test": class_counts(&sp.test.y, n_classes),
        },
        "row_indices": {"train": sp.indices[0], "val": sp.indices[1], "test": sp.indices[2]},
        "files": files,
        "target_correlation": target,
        "anchor_order": names_of(&model.anchors),
        "membership": memberships,
        "membership_size": m,
    });
    emit_report(&args.out.join("prepare_report.json"), &report)
}

pub fn search(args: &SearchArgs) -> CliResult<()> {
    let loaded = load_data(&args.data)?;
    let sp = &loaded.splits;
    let m = match args.m {
        Some(m) => m,
        None => default_membership(loaded.dataset.n_features())?,
    };
    let model = build_anchor_model(&correlation(&sp.train, true)?, m, args.max_anchors)?;
    let medoid = MedoidParams {
        m_max: args.geometry.medoid_max,
        seed: args.data.seed,
    };
    let shots = args.geometry.shots();
    let ctx = SearchContext {
        train: &sp.train,
        val: &sp.val,
        anchor_model: &model,
        fusion: FusionParams {
            alpha: 1.0,
            shots,
            ..FusionParams::default()
        },
        medoid,
        embedding: args.geometry.embedding,
    };
    let settings = SearchSettings {
        k_min: args.k.0,
        k_max: args.k.1,
        max_passes: args.passes,
        budget: (args.budget > 0).then_some(args.budget),
        seed: args.data.seed,
    };
    let record = coordinate_descent(&ctx, &settings)?;
    ensure_dir(&args.out)?;
    let manifest = Manifest::new("search")
        .seed("split", args.data.seed)
        .seed("search", settings.seed)
        .seed("medoid", medoid.seed)
        .seed("qseed", args.geometry.qseed);
    let summary: Vec<_> = record
        .entries
        .iter()
        .map(|e| json!({"k": e.k, "val_macro_f1": e.best_f1, "passes": e.passes_used, "evaluations": e.evaluations}))
        .collect();
    let best_k = record.ranked().first().map(|e| e.k);
    let file = SearchFile {
        format_version: FORMAT_VERSION,
        manifest: manifest.clone(),
        data: loaded.fingerprint,
        m,
        medoid,
        embedding: args.geometry.embedding,
        shots,
        anchor_model: model,
        record,
    };
    let path = search_record_path(&args.out);
    artifacts::save_json(&path, &file)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "manifest": manifest,
            "search_record": path.display().to_string(),
            "best_k": best_k,
            "entries": summary,
        }))
        .map_err(geoq_core::Error::from)?
    );
    Ok(())
}

fn fit_settings(file: &SearchFile, grids: &FusionGridArgs) -> FusionFitSettings {
    FusionFitSettings {
        base: FusionParams {
            use_angular: !grids.no_angular,
            shots: file.shots,
            ..FusionParams::default()
        },
        weight_mode: grids.class_weights,
        alpha_grid: grids.alpha_grid.0.clone(),
        beta_grid: grids.beta_grid.0.clone(),
        medoid: file.medoid,
        embedding: file.embedding,
    }
}

fn fit_manifest(command: &str, file: &SearchFile) -> Manifest {
    let mut m = Manifest::new(command);
    m.seeds = file.manifest.seeds.clone();
    m
}

pub fn calibrate(args: &CalibrateArgs) -> CliResult<()> {
    let file = load_search_file(&args.search_record)?;
    let loaded = load_data(&args.data)?;
    file.data.check(&loaded.fingerprint)?;
    let entry = match args.k {
        Some(k) => file
            .record
            .entry(k)
            .ok_or_else(|| Failure::usage(format!("k={k} is not in the search record")))?,
        None => file.record.ranked()[0],
    };
    let manifest = fit_manifest("calibrate", &file);
    let art = fit_fusion_artifact(
        entry.k,
        &entry.best_config,
        &file.anchor_model,
        &loaded.splits,
        &fit_settings(&file, &args.grids),
        manifest.clone(),
    )?;
    ensure_dir(&args.out)?;
    let report = json!({
        "manifest": manifest,
        "k": art.k,
        "alpha_star": art.alpha_star,
        "use_angular": art.params.use_angular,
        "class_weights": art.params.class_weights,
        "alpha_records": art.alpha_records,
        "fbeta": art.fbeta,
        "val": art.metrics.val,
        "test": art.metrics.test,
    });
    emit_report(&args.out.join(format!("calibration_k{}.json", art.k)), &report)
}

pub fn fit_fusion(args: &FitFusionArgs) -> CliResult<()> {
    let file = load_search_file(&args.search_record)?;
    let loaded = load_data(&args.data)?;
    file.data.check(&loaded.fingerprint)?;
    ensure_dir(&args.out)?;
    let manifest = fit_manifest("fit-fusion", &file);
    let saved = persist_top_r(
        &file.record,
        &file.anchor_model,
        &loaded.splits,
        args.top_r,
        &fit_settings(&file, &args.grids),
        &manifest,
        &args.out,
    )?;
    let listed: Vec<_> = saved
        .iter()
        .map(|(path, art)| {
            json!({
                "k": art.k,
                "path": path.display().to_string(),
                "alpha_star": art.alpha_star,
                "val_macro_f1": art.metrics.val.macro_f1,
                "val_accuracy": art.metrics.val.accuracy,
                "test_accuracy": art.metrics.test.as_ref().map(|t| t.accuracy),
                "test_macro_f1": art.metrics.test.as_ref().map(|t| t.macro_f1),
            })
        })
        .collect();
    let alias: BestAlias = artifacts::load_json(&args.out.join("best_alias.json"))?;
    let report = json!({"manifest": manifest, "artifacts": listed, "best_alias": alias});
    emit_report(&args.out.join("fit_fusion_report.json"), &report)
}

/// Fusion artifact named by `best_alias.json` in `dir`.
pub fn aliased_fusion(dir: &Path) -> CliResult<PathBuf> {
    let alias_path = dir.join("best_alias.json");
    if !alias_path.exists() {
        return Err(Failure::artifact(format!(
            "no --artifact given and {} does not exist",
            alias_path.display()
        )));
    }
    let alias: BestAlias = artifacts::load_json(&alias_path)?;
    let entry = alias
        .fusion
        .ok_or_else(|| Failure::artifact(format!("{} has no fusion entry", alias_path.display())))?;
    Ok(dir.join(entry.path))
}

pub fn load_fusion(path: &Path) -> CliResult<FusionArtifact> {
    if !path.exists() {
        return Err(Failure::artifact(format!("artifact {} not found", path.display())));
    }
    Ok(artifacts::load_json(path)?)
}

/// Sidecar describing the margin CSVs, read back by `train-vqc`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaReport {
    pub format_version: u32,
    pub manifest: Manifest,
    pub k: usize,
    pub fusion_artifact: String,
    pub columns: Vec<String>,
    pub class_labels: Vec<String>,
    pub files: Vec<String>,
    pub sizes: Vec<usize>,
}

pub const DELTA_REPORT: &str = "delta_report.json";

pub fn delta_file(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("delta_{split}.csv"))
}

pub fn build_delta(args: &BuildDeltaArgs) -> CliResult<()> {
    let art_path = match &args.artifact {
        Some(p) => p.clone(),
        None => aliased_fusion(&args.out)?,
    };
    let art = load_fusion(&art_path)?;
    let loaded = load_data(&args.data)?;
    ensure_dir(&args.out)?;
    let sp = &loaded.splits;
    let mut files = Vec::new();
    let mut sizes = Vec::new();
    for (name, ds) in [("train", &sp.train), ("val", &sp.val), ("test", &sp.test)] {
        if ds.n_rows() == 0 {
            continue;
        }
        let (z, y) = deltas_for(&art, ds, args.include_fused)?;
        let path = delta_file(&args.out, name);
        write_delta_csv(&path, z.view(), &y)?;
        files.push(path.file_name().unwrap_or_default().to_string_lossy().into_owned());
        sizes.push(y.len());
    }
    let mut manifest = Manifest::new("build-delta").seed("split", args.data.seed);
    manifest.seeds.extend(art.manifest.seeds.clone());
    let report = DeltaReport {
        format_version: FORMAT_VERSION,
        manifest,
        k: art.k,
        fusion_artifact: art_path.display().to_string(),
        columns: delta_columns(args.include_fused)
            .into_iter()
            .map(String::from)
            .collect(),
        class_labels: art.class_labels.clone(),
        files,
        sizes,
    };
    let value = serde_json::to_value(&report).map_err(geoq_core::Error::from)?;
    emit_report(&args.out.join(DELTA_REPORT), &value)
}

fn deltas_for(
    art: &FusionArtifact,
    ds: &Dataset,
    include_fused: bool,
) -> CliResult<(ndarray::Array2<f64>, Vec<usize>)> {
    let x = artifacts::align_features(ds, &art.feature_names)?;
    let y = artifacts::encode_labels(&label_strings(ds), &art.class_labels)?;
    Ok((art.deltas(x.view(), include_fused)?, y))
}
