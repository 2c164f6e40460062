use std::io::Write;
use std::path::{Path, PathBuf};

use geoq_core::artifacts::{self, Manifest};
use geoq_core::cgr::{AnchorModel, Embedding};
use geoq_core::data::{load_csv, stratified_split, Dataset, Splits};
use geoq_core::optimizer::SearchRecord;
use geoq_core::pipeline::MedoidParams;
use geoq_core::quantum::Shots;
use serde::{Deserialize, Serialize};

use crate::args::DataArgs;
use crate::failure::{CliResult, Failure};

/// What a split was built from, stored so later stages can check they see
/// the same rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataFingerprint {
    pub path: String,
    pub label: String,
    pub split: [f64; 3],
    pub seed: u64,
    pub n_rows: usize,
    pub feature_names: Vec<String>,
}

impl DataFingerprint {
    pub fn check(&self, other: &DataFingerprint) -> CliResult<()> {
        let same = self.label == other.label
            && self.split == other.split
            && self.seed == other.seed
            && self.n_rows == other.n_rows
            && self.feature_names == other.feature_names;
        if same {
            Ok(())
        } else {
            Err(Failure::artifact(format!(
                "search record was built from {} (label {}, split {:?}, seed {}, {} rows); \
                 got {} (label {}, split {:?}, seed {}, {} rows)",
                self.path,
                self.label,
                self.split,
                self.seed,
                self.n_rows,
                other.path,
                other.label,
                other.split,
                other.seed,
                other.n_rows
            )))
        }
    }
}

pub struct Loaded {
    pub dataset: Dataset,
    pub splits: Splits,
    pub fingerprint: DataFingerprint,
}

pub fn load_data(args: &DataArgs) -> CliResult<Loaded> {
    let dataset = load_csv(&args.data, &args.label)?;
    let splits = stratified_split(&dataset, args.split, args.seed)?;
    let fingerprint = DataFingerprint {
        path: args.data.display().to_string(),
        label: args.label.clone(),
        split: args.split,
        seed: args.seed,
        n_rows: dataset.n_rows(),
        feature_names: dataset.feature_names.clone(),
    };
    log::info!(
        "{}: {} rows, {} features, {} classes, split {:?}",
        args.data.display(),
        dataset.n_rows(),
        dataset.n_features(),
        dataset.n_classes(),
        splits.sizes()
    );
    Ok(Loaded {
        dataset,
        splits,
        fingerprint,
    })
}

/// Default membership size: six neighbours, fewer for narrow tables.
pub fn default_membership(n_features: usize) -> CliResult<usize> {
    if n_features < 2 {
        return Err(Failure::data("need at least two feature columns"));
    }
    Ok(6.min(n_features - 1))
}

/// Contents of `search_record.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchFile {
    pub format_version: u32,
    pub manifest: Manifest,
    pub data: DataFingerprint,
    pub m: usize,
    pub medoid: MedoidParams,
    pub embedding: Embedding,
    pub shots: Shots,
    pub anchor_model: AnchorModel,
    pub record: SearchRecord,
}

pub fn search_record_path(dir: &Path) -> PathBuf {
    dir.join("search_record.json")
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::data(format!("cannot create {}: {e}", dir.display())))
}

/// Writes a report atomically and echoes it on stdout.
pub fn emit_report(path: &Path, report: &serde_json::Value) -> CliResult<()> {
    artifacts::save_json(path, report)?;
    println!(
        "{}",
        serde_json::to_string_pretty(report).map_err(geoq_core::Error::from)?
    );
    Ok(())
}

/// Writes a dataset back to CSV with its label column last.
pub fn write_dataset_csv(path: &Path, ds: &Dataset, label: &str) -> CliResult<()> {
    let file = std::fs::File::create(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let csv_err = |e: csv::Error| Failure::data(format!("{}: {e}", path.display()));
    let mut header = ds.feature_names.clone();
    header.push(label.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (row, &c) in ds.x.rows().into_iter().zip(&ds.y) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(ds.class_labels[c].clone());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| Failure::data(format!("{}: {}", path.display(), e.error())))?
        .flush()
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

pub fn label_strings(ds: &Dataset) -> Vec<String> {
    ds.y.iter().map(|&c| ds.class_labels[c].clone()).collect()
}

pub fn load_search_file(path: &Path) -> CliResult<SearchFile> {
    if !path.exists() {
        return Err(Failure::artifact(format!("search record {} not found", path.display())));
    }
    Ok(artifacts::load_json(path)?)
}
