//! score and evaluate.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use geoq_core::artifacts::{self, encode_labels, fusion_path, read_feature_table, Manifest, VqcArtifact};
use geoq_core::fusion::evaluate;
use geoq_core::vqc::decide;
use serde_json::json;

use crate::args::{EvaluateArgs, ScoreArgs};
use crate::common::emit_report;
use crate::failure::{CliResult, Failure};
use crate::fusion_cmds::load_fusion;

struct Scored {
    labels: Vec<usize>,
    margins: Vec<f64>,
    probs: Option<ndarray::Array2<f64>>,
    class_labels: Vec<String>,
    raw_labels: Option<Vec<String>>,
}

/// `(top - runner-up)` per row, or `P1 - τ` for a binary threshold rule.
fn prob_margins(probs: &ndarray::Array2<f64>, tau: Option<f64>) -> Vec<f64> {
    probs
        .rows()
        .into_iter()
        .map(|row| match tau {
            Some(t) if row.len() == 2 => row[1] - t,
            _ => {
                let mut v = row.to_vec();
                v.sort_by(|a, b| b.total_cmp(a));
                v[0] - v.get(1).copied().unwrap_or(0.0)
            }
        })
        .collect()
}

pub fn score(args: &ScoreArgs) -> CliResult<()> {
    if !args.artifact.exists() {
        return Err(Failure::artifact(format!(
            "artifact {} not found",
            args.artifact.display()
        )));
    }
    let value: serde_json::Value = artifacts::load_json(&args.artifact)?;
    let is_vqc = value.get("delta_columns").is_some();
    let mut report = json!({
        "manifest": Manifest::new("score"),
        "artifact": args.artifact.display().to_string(),
        "kind": if is_vqc { "vqc" } else { "fusion" },
    });

    let scored = if is_vqc {
        let vqc: VqcArtifact = serde_json::from_value(value)
            .map_err(|e| Failure::artifact(format!("{}: {e}", args.artifact.display())))?;
        let fusion_file = match &args.fusion {
            Some(p) => p.clone(),
            None => fusion_path(args.artifact.parent().unwrap_or(Path::new(".")), vqc.k),
        };
        let fusion = load_fusion(&fusion_file)?;
        if fusion.k != vqc.k {
            return Err(Failure::artifact(format!(
                "classifier was trained on k={} margins but {} has k={}",
                vqc.k,
                fusion_file.display(),
                fusion.k
            )));
        }
        let (x, raw_labels) = read_feature_table(&args.data, &fusion.feature_names, args.label.as_deref())?;
        let deltas = fusion.deltas(x.view(), vqc.delta_columns.len() == 3)?;
        let probs = vqc.probabilities(deltas.view())?;
        let binary = vqc.model.spec.n_classes == 2;
        if args.tau.is_some() && !binary {
            return Err(Failure::usage("--tau applies to binary classifiers only"));
        }
        let tau = binary.then(|| args.tau.unwrap_or(vqc.model.threshold));
        if let Some(t) = tau {
            if !(0.0..=1.0).contains(&t) {
                return Err(Failure::usage("--tau must lie in [0, 1]"));
            }
            report["tau"] = json!(t);
            report["alert_rate"] = json!(geoq_core::vqc::alert_rate(probs.view(), t));
        }
        report["fusion_artifact"] = json!(fusion_file.display().to_string());
        Scored {
            labels: decide(probs.view(), tau),
            margins: prob_margins(&probs, tau),
            probs: Some(probs),
            class_labels: fusion.class_labels,
            raw_labels,
        }
    } else {
        let fusion: artifacts::FusionArtifact = serde_json::from_value(value)
            .map_err(|e| Failure::artifact(format!("{}: {e}", args.artifact.display())))?;
        let (x, raw_labels) = read_feature_table(&args.data, &fusion.feature_names, args.label.as_deref())?;
        let out = fusion.infer(x.view())?;
        Scored {
            margins: out.margins(),
            labels: out.labels,
            probs: None,
            class_labels: fusion.class_labels,
            raw_labels,
        }
    };

    let mut counts: BTreeMap<&str, usize> = scored.class_labels.iter().map(|c| (c.as_str(), 0)).collect();
    for &l in &scored.labels {
        *counts.entry(scored.class_labels[l].as_str()).or_default() += 1;
    }
    report["n"] = json!(scored.labels.len());
    report["predicted_counts"] = json!(counts);
    if let Some(raw) = &scored.raw_labels {
        let y = encode_labels(raw, &scored.class_labels)?;
        let metrics = evaluate(&y, &scored.labels, scored.class_labels.len())?;
        report["metrics"] = json!(metrics);
    } else if let Some(label) = &args.label {
        log::warn!("label column `{label}` not found; metrics skipped");
    }

    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            write_predictions(std::io::BufWriter::new(file), &scored)
                .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            report["predictions"] = json!(path.display().to_string());
            match &args.report {
                Some(r) => emit_report(r, &report)?,
                None => println!(
                    "{}",
                    serde_json::to_string_pretty(&report).map_err(geoq_core::Error::from)?
                ),
            }
        }
        None => {
            write_predictions(std::io::stdout().lock(), &scored).map_err(|e| Failure::data(format!("stdout: {e}")))?;
            if let Some(r) = &args.report {
                artifacts::save_json(r, &report)?;
            }
        }
    }
    Ok(())
}

fn write_predictions<W: Write>(sink: W, s: &Scored) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["row_id".to_string(), "label".into(), "margin".into()];
    if s.probs.is_some() {
        header.extend(s.class_labels.iter().map(|c| format!("p_{c}")));
    }
    w.write_record(&header)?;
    for (i, (&l, m)) in s.labels.iter().zip(&s.margins).enumerate() {
        let mut rec = vec![i.to_string(), s.class_labels[l].clone(), m.to_string()];
        if let Some(p) = &s.probs {
            rec.extend(p.row(i).iter().map(|v| v.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn read_column(path: &Path, column: &str) -> CliResult<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let header = rdr
        .headers()
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let idx = header
        .iter()
        .position(|h| h.trim().trim_start_matches('\u{feff}') == column)
        .ok_or_else(|| Failure::data(format!("{}: column `{column}` not found", path.display())))?;
    rdr.records()
        .map(|r| {
            r.map(|rec| rec.get(idx).unwrap_or("").trim().to_string())
                .map_err(|e| Failure::data(format!("{}: {e}", path.display())))
        })
        .collect()
}

/// Sorted class inventory, numerically when every label is a number.
fn class_inventory<'a>(labels: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut set: Vec<String> = labels.cloned().collect();
    set.sort();
    set.dedup();
    if set.iter().all(|s| s.parse::<f64>().is_ok()) {
        set.sort_by(|a, b| {
            a.parse::<f64>()
                .unwrap_or(0.0)
                .total_cmp(&b.parse::<f64>().unwrap_or(0.0))
        });
    }
    set
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> CliResult<()> {
    let ids = read_column(&args.predictions, "row_id")?;
    let predicted = read_column(&args.predictions, "label")?;
    let truth = read_column(&args.data, &args.label)?;
    if ids.is_empty() {
        return Err(Failure::data(format!("{} has no rows", args.predictions.display())));
    }
    let mut y_true = Vec::with_capacity(ids.len());
    for id in &ids {
        let row: usize = id.parse().map_err(|_| Failure::data(format!("bad row_id `{id}`")))?;
        let t = truth.get(row).ok_or_else(|| {
            Failure::data(format!(
                "row_id {row} beyond the {} rows of {}",
                truth.len(),
                args.data.display()
            ))
        })?;
        y_true.push(t.clone());
    }
    let classes = class_inventory(y_true.iter().chain(&predicted));
    let index: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let enc = |v: &[String]| -> Vec<usize> { v.iter().map(|s| index[s.as_str()]).collect() };
    let metrics = evaluate(&enc(&y_true), &enc(&predicted), classes.len())?;
    let report = json!({
        "manifest": Manifest::new("evaluate"),
        "predictions": args.predictions.display().to_string(),
        "class_labels": classes,
        "metrics": metrics,
    });
    match &args.out {
        Some(path) => emit_report(path, &report),
        None => {
            println!(
                "{}",
                serde_json::to_string_pretty(&report).map_err(geoq_core::Error::from)?
            );
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn margins() {
        let p = array![[0.2, 0.8], [0.7, 0.3]];
        let m = prob_margins(&p, Some(0.3));
        assert!((m[0] - 0.5).abs() < 1e-12 && (m[1] + 0.0).abs() < 1e-12);
        let q = array![[0.1, 0.6, 0.3]];
        assert!((prob_margins(&q, None)[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn inventory_sorts_numbers_numerically() {
        let v: Vec<String> = ["10", "2", "2", "1"].iter().map(|s| s.to_string()).collect();
        assert_eq!(class_inventory(v.iter()), vec!["1", "2", "10"]);
        let w: Vec<String> = ["b", "a"].iter().map(|s| s.to_string()).collect();
        assert_eq!(class_inventory(w.iter()), vec!["a", "b"]);
    }
}
