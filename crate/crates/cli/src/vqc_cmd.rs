use geoq_core::artifacts::{self, update_best_alias, vqc_path, AliasKind, BestAlias, Manifest, VqcArtifact};
use geoq_core::delta::{read_delta_csv, standardize_deltas};
use geoq_core::fusion::evaluate;
use geoq_core::vqc::{alert_rate, kfold_train, HpCandidate, KFoldSettings, Labelled, SpsaConfig};
use ndarray::Array2;
use serde_json::json;

use crate::args::TrainVqcArgs;
use crate::common::{emit_report, ensure_dir};
use crate::failure::{CliResult, Failure};
use crate::fusion_cmds::{delta_file, DeltaReport, DELTA_REPORT};

fn hp_space(args: &TrainVqcArgs) -> Vec<HpCandidate> {
    let uploads: &[bool] = match args.reupload.as_str() {
        "on" => &[true],
        "off" => &[false],
        _ => &[true, false],
    };
    let mut space = Vec::new();
    for &reps in &args.reps.0 {
        for &reupload in uploads {
            space.push(HpCandidate {
                reps,
                reupload,
                steps: args.steps,
                batch: args.batch,
            });
        }
    }
    space
}

fn settings(args: &TrainVqcArgs, m: usize) -> CliResult<KFoldSettings> {
    let feature_scales = match &args.lambda {
        None => None,
        Some(l) if l.0.len() == 1 => Some(vec![l.0[0]; m]),
        Some(l) if l.0.len() == m => Some(l.0.clone()),
        Some(l) => {
            return Err(Failure::usage(format!(
                "--lambda has {} values for {m} margin columns",
                l.0.len()
            )))
        }
    };
    Ok(KFoldSettings {
        folds: args.folds,
        threshold_grid: args.threshold_grid.0.clone(),
        target: args.target_metric,
        z_max: args.z_max,
        feature_scales,
        n_qubits: args.qubits,
        spsa: SpsaConfig {
            steps: args.steps,
            batch: args.batch,
            a: args.spsa_a,
            c: args.spsa_c,
            alpha: args.spsa_alpha,
            gamma: args.spsa_gamma,
            clip_norm: args.clip,
            patience: args.patience,
            tolerance: args.tolerance,
            init_sigma: args.init_sigma,
            seed: args.seed,
            balance_classes: args.balance_classes,
        },
        seed: args.seed,
    })
}

pub fn train_vqc(args: &TrainVqcArgs) -> CliResult<()> {
    let dir = &args.delta_dir;
    let report_path = dir.join(DELTA_REPORT);
    if !report_path.exists() {
        return Err(Failure::artifact(format!(
            "{} not found; run build-delta first",
            report_path.display()
        )));
    }
    let meta: DeltaReport = artifacts::load_json(&report_path)?;
    let (z_train, y_train) = read_delta_csv(delta_file(dir, "train"))?;
    let (z_val, y_val) = read_delta_csv(delta_file(dir, "val"))?;
    let test_path = delta_file(dir, "test");
    let test = if test_path.exists() {
        Some(read_delta_csv(&test_path)?)
    } else {
        None
    };
    let m = z_train.ncols();
    if meta.columns.len() != m {
        return Err(Failure::artifact(format!(
            "{} lists {} columns but the CSVs have {m}",
            report_path.display(),
            meta.columns.len()
        )));
    }
    let n_classes = meta.class_labels.len();
    if let Some(tau) = args.tau {
        if n_classes != 2 {
            return Err(Failure::usage("--tau applies to binary problems only"));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(Failure::usage("--tau must lie in [0, 1]"));
        }
    }

    let mut others = vec![z_val.view()];
    if let Some((z, _)) = &test {
        others.push(z.view());
    }
    let std = standardize_deltas(z_train.view(), &others)?;
    let settings = settings(args, m)?;
    let space = hp_space(args);
    let mut outcome = kfold_train(
        Labelled {
            z: std.splits[0].view(),
            y: &y_train,
        },
        Labelled {
            z: std.splits[1].view(),
            y: &y_val,
        },
        test.as_ref().map(|(_, y)| Labelled {
            z: std.splits[2].view(),
            y,
        }),
        n_classes,
        &space,
        &settings,
    )?;

    if let Some(tau) = args.tau {
        outcome.model.threshold = tau;
        let rescore = |z: &Array2<f64>, y: &[usize]| -> CliResult<_> {
            let probs = outcome.model.probabilities(z.view())?;
            let pred = outcome.model.predict(z.view())?;
            Ok((evaluate(y, &pred, n_classes)?, alert_rate(probs.view(), tau)))
        };
        let (val, val_alert) = rescore(&std.splits[1], &y_val)?;
        outcome.val_target = settings
            .target
            .score(&y_val, &outcome.model.predict(std.splits[1].view())?, n_classes)?;
        outcome.val = val;
        outcome.val_alert_rate = val_alert;
        if let Some((_, y)) = &test {
            let (t, a) = rescore(&std.splits[2], y)?;
            outcome.test = Some(t);
            outcome.test_alert_rate = Some(a);
        }
    }

    let out_dir = args.out.clone().unwrap_or_else(|| dir.clone());
    ensure_dir(&out_dir)?;
    let mut manifest = Manifest::new("train-vqc").seed("spsa", args.seed);
    for (k, v) in &meta.manifest.seeds {
        manifest.seeds.entry(k.clone()).or_insert(*v);
    }
    let val_target = outcome.val_target;
    let record = outcome.train_record.clone();
    let mut art = VqcArtifact::from_outcome(meta.k, meta.columns.clone(), std.scaler, outcome, manifest.clone());

    let alias_path = out_dir.join("best_alias.json");
    let current = if alias_path.exists() {
        artifacts::load_json::<BestAlias>(&alias_path)?.vqc
    } else {
        None
    };
    art.best_alias = match current {
        None => true,
        Some(e) => e.k == meta.k || val_target > e.val_score,
    };
    let path = vqc_path(&out_dir, meta.k);
    artifacts::save_json(&path, &art)?;
    if art.best_alias {
        update_best_alias(&out_dir, AliasKind::Vqc, meta.k, &path, val_target)?;
    }

    let report = json!({
        "manifest": manifest,
        "k": meta.k,
        "artifact": path.display().to_string(),
        "best_alias": art.best_alias,
        "hp": art.hp,
        "spec": art.model.spec,
        "cv": art.cv,
        "target_metric": settings.target,
        "tau": art.model.threshold,
        "tau_fixed": args.tau.is_some(),
        "val_target": val_target,
        "alert_rate": art.alert_rate,
        "val": art.metrics.val,
        "test": art.metrics.test,
        "final_loss": art.final_loss,
        "steps_run": record.steps_run,
        "stopped_early": record.stopped_early,
    });
    emit_report(&out_dir.join(format!("train_vqc_report_k{}.json", meta.k)), &report)
}
