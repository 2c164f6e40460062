//! Contrastive margin features from the normalized fusion channels.
//!
//! Binary problems use class 1 minus class 0. With more classes the margin is
//! runner-up minus best, where best and runner-up are ranked by fused score.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::data::Scaler;
use crate::error::{Error, Result};
use crate::fusion::FusionOutput;

pub fn delta_columns(include_fused: bool) -> Vec<&'static str> {
    let mut cols = vec!["delta_d", "delta_theta"];
    if include_fused {
        cols.push("delta_s");
    }
    cols
}

/// `(c*, c2)`: lowest and second-lowest score, ties to the lower class.
fn best_two(scores: &[f64]) -> (usize, usize) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    (order[0], order[1])
}

/// Margin features for one sample from its normalized distance, angle and
/// fused-score rows.
pub fn delta_row(d: &[f64], theta: &[f64], s: &[f64], include_fused: bool) -> Result<Vec<f64>> {
    let c = d.len();
    if c < 2 {
        return Err(Error::InvalidArgument(
            "margin features need at least two classes".into(),
        ));
    }
    if theta.len() != c || s.len() != c {
        return Err(Error::DimensionMismatch {
            expected: c,
            got: theta.len().min(s.len()),
        });
    }
    let (hi, lo) = if c == 2 {
        (1, 0)
    } else {
        let (best, runner) = best_two(s);
        (runner, best)
    };
    let mut row = vec![d[hi] - d[lo], theta[hi] - theta[lo]];
    if include_fused {
        row.push(s[hi] - s[lo]);
    }
    Ok(row)
}

/// Unstandardized margin matrix, one row per sample.
pub fn build_deltas(out: &FusionOutput, include_fused: bool) -> Result<Array2<f64>> {
    let n = out.scores.nrows();
    let width = delta_columns(include_fused).len();
    let mut z = Array2::zeros((n, width));
    for i in 0..n {
        let row = delta_row(
            &out.distance_norm.row(i).to_vec(),
            &out.angle_norm.row(i).to_vec(),
            &out.scores.row(i).to_vec(),
            include_fused,
        )?;
        for (j, v) in row.into_iter().enumerate() {
            z[[i, j]] = v;
        }
    }
    Ok(z)
}

/// Standardized margins for several splits, all using statistics from the
/// first (training) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaFeatures {
    pub scaler: Scaler,
    pub splits: Vec<Array2<f64>>,
}

pub fn standardize_deltas(train: ArrayView2<f64>, others: &[ArrayView2<f64>]) -> Result<DeltaFeatures> {
    let scaler = Scaler::fit(train)?;
    let mut splits = vec![scaler.transform(train)?];
    for z in others {
        splits.push(scaler.transform(*z)?);
    }
    Ok(DeltaFeatures { scaler, splits })
}

/// Writes `delta_d,delta_theta[,delta_s],label` rows.
pub fn write_delta_csv(path: impl AsRef<Path>, z: ArrayView2<f64>, y: &[usize]) -> Result<()> {
    let path = path.as_ref();
    if z.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: z.nrows(),
            got: y.len(),
        });
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header: Vec<String> = delta_columns(z.ncols() == 3).into_iter().map(String::from).collect();
    header.truncate(z.ncols());
    header.push("label".into());
    w.write_record(&header)?;
    for (row, label) in z.rows().into_iter().zip(y) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(label.to_string());
        w.write_record(&rec)?;
    }
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`write_delta_csv`].
pub fn read_delta_csv(path: impl AsRef<Path>) -> Result<(Array2<f64>, Vec<usize>)> {
    let ds = crate::data::load_csv(path, "label")?;
    let y =
        ds.y.iter()
            .map(|&c| {
                ds.class_labels[c]
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidArgument(format!("label `{}`: {e}", ds.class_labels[c])))
            })
            .collect::<Result<_>>()?;
    Ok((ds.x, y))
}
