//! Tabular ingestion, stratified splitting, standardization and Pearson
//! correlation.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labelled feature matrix. Labels are contiguous class indices; the
/// original label strings are kept in `class_labels` for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub feature_names: Vec<String>,
    pub class_labels: Vec<String>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<usize>, feature_names: Vec<String>, class_labels: Vec<String>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if feature_names.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                got: feature_names.len(),
            });
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate feature name `{name}`")));
            }
        }
        if let Some(&label) = y.iter().find(|&&l| l >= class_labels.len()) {
            return Err(Error::LabelOutOfRange {
                label,
                n_classes: class_labels.len(),
            });
        }
        Ok(Self {
            x,
            y,
            feature_names,
            class_labels,
        })
    }

    /// Builds a dataset with generated feature names and numeric class labels.
    pub fn from_parts(x: Array2<f64>, y: Vec<usize>) -> Result<Self> {
        let n_classes = y.iter().max().map_or(0, |m| m + 1);
        let names = (0..x.ncols()).map(|j| format!("f{j}")).collect();
        let labels = (0..n_classes).map(|c| c.to_string()).collect();
        Self::new(x, y, names, labels)
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    /// Row count per class index, over the full class inventory.
    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.y, self.n_classes())
    }

    /// Rows selected by `indices`, keeping the class inventory intact.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            class_labels: self.class_labels.clone(),
        }
    }
}

pub fn class_counts(y: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    for &label in y {
        counts[label] += 1;
    }
    counts
}

/// Reads a comma-separated file with a header row. Every column other than
/// `label_column` must be numeric.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column)
}

pub fn read_csv<R: Read>(reader: R, label_column: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().trim_start_matches('\u{feff}').to_string())
        .collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingLabelColumn(label_column.to_string()))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values = Vec::new();
    let mut y = Vec::new();
    let mut encoding: HashMap<String, usize> = HashMap::new();
    let mut class_labels = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for (col, field) in record.iter().enumerate() {
            let field = field.trim();
            if col == label_idx {
                let next = class_labels.len();
                let code = *encoding.entry(field.to_string()).or_insert(next);
                if code == next {
                    class_labels.push(field.to_string());
                }
                y.push(code);
            } else {
                match field.parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(v),
                    _ => {
                        return Err(Error::NonNumeric {
                            row,
                            column: header[col].clone(),
                            value: field.to_string(),
                        })
                    }
                }
            }
        }
    }
    if y.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let x = Array2::from_shape_vec((y.len(), feature_names.len()), values)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Dataset::new(x, y, feature_names, class_labels)
}

/// Train/validation/test partition of a dataset. `indices` refers to rows of
/// the source dataset and is sorted within each split.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub indices: [Vec<usize>; 3],
}

impl Splits {
    pub fn sizes(&self) -> [usize; 3] {
        [self.train.n_rows(), self.val.n_rows(), self.test.n_rows()]
    }
}

/// Parses `train,val,test` fractions such as `0.56,0.19,0.25`.
pub fn parse_fractions(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidArgument(format!("split fractions `{s}`: {e}")))?;
    match parts.as_slice() {
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(Error::InvalidArgument(format!(
            "expected three split fractions, got `{s}`"
        ))),
    }
}

fn ceil_tolerant(v: f64) -> usize {
    (v - 1e-9).ceil().max(0.0) as usize
}

/// Overall split sizes. The test split takes `ceil(f_test * n)` rows and the
/// validation split `ceil(f_val / (f_train + f_val) * rest)` of the remainder,
/// which mirrors a two-stage holdout.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    validate_fractions(fractions)?;
    let [f_train, f_val, f_test] = fractions;
    let n_test = ceil_tolerant(f_test * n as f64).min(n);
    let rest = n - n_test;
    let n_val = ceil_tolerant(f_val / (f_train + f_val) * rest as f64).min(rest);
    Ok([rest - n_val, n_val, n_test])
}

fn validate_fractions(fractions: [f64; 3]) -> Result<()> {
    if fractions.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be positive, got {fractions:?}"
        )));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

/// Per-class allocation whose row sums equal the class counts, column sums
/// equal `sizes`, and every cell is the floor or ceiling of its proportional
/// quota `n_c * n_j / N`.
pub fn allocate_stratified(counts: &[usize], sizes: [usize; 3]) -> Vec<[usize; 3]> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![[0; 3]; counts.len()];
    }
    let mut alloc: Vec<[usize; 3]> = Vec::with_capacity(counts.len());
    let mut remainders = Vec::new();
    for (c, &n_c) in counts.iter().enumerate() {
        let mut row = [0; 3];
        for j in 0..3 {
            let q = n_c * sizes[j];
            row[j] = q / total;
            if !q.is_multiple_of(total) {
                remainders.push((q % total, c, j));
            }
        }
        alloc.push(row);
    }
    let mut row_need: Vec<usize> = counts
        .iter()
        .zip(&alloc)
        .map(|(&n_c, row)| n_c - row.iter().sum::<usize>())
        .collect();
    let mut col_need = [0usize; 3];
    for j in 0..3 {
        col_need[j] = sizes[j] - alloc.iter().map(|r| r[j]).sum::<usize>();
    }

    // Bump cells with the largest remainders first, then repair any shortfall
    // with augmenting paths over the fractional cells.
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let allowed: HashSet<(usize, usize)> = remainders.iter().map(|&(_, c, j)| (c, j)).collect();
    let mut bumped: HashSet<(usize, usize)> = HashSet::new();
    for &(_, c, j) in &remainders {
        if row_need[c] > 0 && col_need[j] > 0 {
            bumped.insert((c, j));
            row_need[c] -= 1;
            col_need[j] -= 1;
        }
    }
    while let Some(start) = row_need.iter().position(|&r| r > 0) {
        let Some(path) = augmenting_path(start, counts.len(), &allowed, &bumped, &col_need) else {
            break;
        };
        for (i, &(c, j)) in path.iter().enumerate() {
            if i % 2 == 0 {
                bumped.insert((c, j));
            } else {
                bumped.remove(&(c, j));
            }
        }
        let &(_, last_split) = path.last().expect("non-empty path");
        row_need[start] -= 1;
        col_need[last_split] -= 1;
    }
    for (c, j) in bumped {
        alloc[c][j] += 1;
    }
    alloc
}

/// Breadth-first search for an alternating path class -> split -> class ...
/// ending at a split that still needs rows. Returned edges alternate between
/// cells to bump (even positions) and cells to un-bump (odd positions).
fn augmenting_path(
    start: usize,
    n_classes: usize,
    allowed: &HashSet<(usize, usize)>,
    bumped: &HashSet<(usize, usize)>,
    col_need: &[usize; 3],
) -> Option<Vec<(usize, usize)>> {
    use std::collections::VecDeque;
    let mut parent_split: [Option<usize>; 3] = [None; 3];
    let mut parent_class: Vec<Option<usize>> = vec![None; n_classes];
    let mut visited_class = vec![false; n_classes];
    visited_class[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        for j in 0..3 {
            if parent_split[j].is_some() || !allowed.contains(&(c, j)) || bumped.contains(&(c, j)) {
                continue;
            }
            parent_split[j] = Some(c);
            if col_need[j] > 0 {
                let mut path = Vec::new();
                let mut split = j;
                loop {
                    let cls = parent_split[split].expect("visited split");
                    path.push((cls, split));
                    if cls == start {
                        break;
                    }
                    let prev_split = parent_class[cls].expect("visited class");
                    path.push((cls, prev_split));
                    split = prev_split;
                }
                path.reverse();
                return Some(path);
            }
            for c2 in 0..n_classes {
                if !visited_class[c2] && bumped.contains(&(c2, j)) {
                    visited_class[c2] = true;
                    parent_class[c2] = Some(j);
                    queue.push_back(c2);
                }
            }
        }
    }
    None
}

/// Seeded stratified train/validation/test split.
pub fn stratified_split(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Splits> {
    let sizes = split_sizes(ds.n_rows(), fractions)?;
    let counts = ds.class_counts();
    for (class, &count) in counts.iter().enumerate() {
        if count > 0 && count < 3 {
            return Err(Error::ClassTooSmall {
                class,
                count,
                needed: 3,
            });
        }
    }
    let alloc = allocate_stratified(&counts, sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (class, quota) in alloc.iter().enumerate() {
        let mut rows: Vec<usize> = (0..ds.n_rows()).filter(|&i| ds.y[i] == class).collect();
        rows.shuffle(&mut rng);
        let mut offset = 0;
        for (j, part) in parts.iter_mut().enumerate() {
            part.extend_from_slice(&rows[offset..offset + quota[j]]);
            offset += quota[j];
        }
    }
    for part in parts.iter_mut() {
        part.sort_unstable();
    }
    Ok(Splits {
        train: ds.subset(&parts[0]),
        val: ds.subset(&parts[1]),
        test: ds.subset(&parts[2]),
        indices: parts,
    })
}

/// Column-wise standardization with population statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

fn is_degenerate(std: f64, mean: f64) -> bool {
    !(std > 1e-12 * mean.abs().max(1.0))
}

fn column_mean_std(col: ArrayView1<f64>) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.sum() / n;
    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Scaler {
    pub fn fit(x: ArrayView2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        let (means, stds) = x
            .columns()
            .into_iter()
            .map(|col| {
                let (mean, std) = column_mean_std(col);
                (mean, if is_degenerate(std, mean) { 1.0 } else { std })
            })
            .unzip();
        Ok(Self { means, stds })
    }

    /// A pass-through scaler of width `d`.
    pub fn identity(d: usize) -> Self {
        Self {
            means: vec![0.0; d],
            stds: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    fn check(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: d,
            });
        }
        Ok(())
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(x.ncols())?;
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.means[j], self.stds[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check(row.len())?;
        Ok(row
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn inverse_transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(x.ncols())?;
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.means[j], self.stds[j]);
            col.mapv_inplace(|v| v * s + m);
        }
        Ok(out)
    }
}

/// Pearson correlations between features, plus optional feature/target
/// correlations with the class index treated as a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationModel {
    pub r: Array2<f64>,
    pub target_corr: Option<Vec<f64>>,
}

impl CorrelationModel {
    pub fn n_features(&self) -> usize {
        self.r.nrows()
    }
}

pub fn correlation(ds: &Dataset, include_target: bool) -> Result<CorrelationModel> {
    let n = ds.n_rows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "correlation needs at least 2 rows, got {n}"
        )));
    }
    let centered = |col: ArrayView1<f64>| -> Option<Array1<f64>> {
        let (mean, std) = column_mean_std(col);
        if is_degenerate(std, mean) {
            None
        } else {
            Some(col.mapv(|v| (v - mean) / std))
        }
    };
    let cols: Vec<Option<Array1<f64>>> = ds.x.columns().into_iter().map(centered).collect();
    let pearson = |a: &Option<Array1<f64>>, b: &Option<Array1<f64>>| -> f64 {
        match (a, b) {
            (Some(a), Some(b)) => (a.dot(b) / n as f64).clamp(-1.0, 1.0),
            _ => 0.0,
        }
    };
    let m = cols.len();
    let mut r = Array2::zeros((m, m));
    for i in 0..m {
        if cols[i].is_some() {
            r[[i, i]] = 1.0;
        }
        for j in (i + 1)..m {
            let v = pearson(&cols[i], &cols[j]);
            r[[i, j]] = v;
            r[[j, i]] = v;
        }
    }
    let target_corr = include_target.then(|| {
        let target = Array1::from_iter(ds.y.iter().map(|&c| c as f64));
        let t = centered(target.view());
        cols.iter().map(|c| pearson(c, &t)).collect()
    });
    Ok(CorrelationModel { r, target_corr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn first_appearance_label_encoding() {
        let csv = "a,b,label\n1,2,B\n3,4,M\n5,6,B\n";
        let ds = read_csv(csv.as_bytes(), "label").unwrap();
        assert_eq!(ds.y, vec![0, 1, 0]);
        assert_eq!(ds.n_classes(), 2);
        assert_eq!(ds.class_labels, vec!["B", "M"]);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.x, array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let csv = "a,b,label\n1,2,0\n3,oops,1\n";
        match read_csv(csv.as_bytes(), "label") {
            Err(Error::NonNumeric { row, column, value }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "b");
                assert_eq!(value, "oops");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_label_and_empty_file() {
        assert!(matches!(
            read_csv("a,b\n1,2\n".as_bytes(), "y"),
            Err(Error::MissingLabelColumn(_))
        ));
        assert!(matches!(read_csv("a,y\n".as_bytes(), "y"), Err(Error::EmptyDataset)));
        assert!(matches!(load_csv("/nonexistent/file.csv", "y"), Err(Error::Io { .. })));
    }

    #[test]
    fn wine_split_sizes() {
        assert_eq!(split_sizes(178, [0.56, 0.19, 0.25]).unwrap(), [99, 34, 45]);
    }

    #[test]
    fn single_class_split_sizes() {
        let x = Array2::zeros((10, 1));
        let ds = Dataset::from_parts(x, vec![0; 10]).unwrap();
        let splits = stratified_split(&ds, [0.5, 0.2, 0.3], 7).unwrap();
        assert_eq!(splits.sizes(), [5, 2, 3]);
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let x = Array2::from_shape_fn((60, 2), |(i, j)| (i * 2 + j) as f64);
        let y = (0..60).map(|i| i % 3).collect();
        let ds = Dataset::from_parts(x, y).unwrap();
        let a = stratified_split(&ds, [0.6, 0.2, 0.2], 11).unwrap();
        let b = stratified_split(&ds, [0.6, 0.2, 0.2], 11).unwrap();
        let c = stratified_split(&ds, [0.6, 0.2, 0.2], 12).unwrap();
        assert_eq!(a.indices, b.indices);
        assert_ne!(a.indices, c.indices);
    }

    #[test]
    fn split_rejects_bad_fractions_and_tiny_classes() {
        let ds = Dataset::from_parts(Array2::zeros((5, 1)), vec![0, 0, 0, 1, 1]).unwrap();
        assert!(stratified_split(&ds, [0.5, 0.5, 0.5], 0).is_err());
        assert!(stratified_split(&ds, [0.0, 0.5, 0.5], 0).is_err());
        assert!(matches!(
            stratified_split(&ds, [0.6, 0.2, 0.2], 0),
            Err(Error::ClassTooSmall { class: 1, .. })
        ));
    }

    #[test]
    fn standardizes_with_population_std() {
        let x = array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]];
        let scaler = Scaler::fit(x.view()).unwrap();
        let z = scaler.transform(x.view()).unwrap();
        let expected = 1.0 / (2.0f64 / 3.0).sqrt();
        assert_abs_diff_eq!(z[[0, 0]], -expected, epsilon = 1e-12);
        assert_abs_diff_eq!(z[[1, 0]], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z[[2, 0]], expected, epsilon = 1e-12);
        assert_abs_diff_eq!(z[[0, 0]], -1.2247, epsilon = 1e-4);
        assert_eq!(scaler.stds[1], 1.0);
        assert!(z.column(1).iter().all(|&v| v == 0.0));
        assert!(scaler.transform(array![[1.0]].view()).is_err());
    }

    #[test]
    fn pearson_closed_forms() {
        let x = array![[1.0, 1.0, -1.0, 4.0], [2.0, 2.0, -2.0, 4.0], [3.0, 4.0, -3.0, 4.0]];
        let ds = Dataset::from_parts(x, vec![0, 1, 1]).unwrap();
        let corr = correlation(&ds, true).unwrap();
        let u = [1.0f64, 2.0, 3.0];
        let v = [1.0f64, 2.0, 4.0];
        let mu = u.iter().sum::<f64>() / 3.0;
        let mv = v.iter().sum::<f64>() / 3.0;
        let cov: f64 = u.iter().zip(&v).map(|(a, b)| (a - mu) * (b - mv)).sum();
        let su: f64 = u.iter().map(|a| (a - mu).powi(2)).sum::<f64>().sqrt();
        let sv: f64 = v.iter().map(|b| (b - mv).powi(2)).sum::<f64>().sqrt();
        assert_abs_diff_eq!(corr.r[[0, 1]], cov / (su * sv), epsilon = 1e-12);
        assert_abs_diff_eq!(corr.r[[0, 1]], 0.9820, epsilon = 1e-4);
        assert_eq!(corr.r[[0, 0]], 1.0);
        assert_abs_diff_eq!(corr.r[[0, 2]], -1.0, epsilon = 1e-12);
        // constant column
        assert_eq!(corr.r[[3, 3]], 0.0);
        assert_eq!(corr.r[[0, 3]], 0.0);
        assert!(corr.target_corr.is_some());
        let single = Dataset::from_parts(array![[1.0]], vec![0]).unwrap();
        assert!(correlation(&single, false).is_err());
    }

    proptest! {
        #[test]
        fn split_partitions_rows_and_keeps_proportions(
            counts in proptest::collection::vec(3usize..40, 1..5),
            seed in 0u64..1000,
            ft in 0.3f64..0.7,
        ) {
            let fv = (1.0 - ft) / 2.0;
            let fractions = [ft, fv, 1.0 - ft - fv];
            let y: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
            let n = y.len();
            let ds = Dataset::from_parts(Array2::zeros((n, 1)), y).unwrap();
            let splits = stratified_split(&ds, fractions, seed).unwrap();
            let mut all: Vec<usize> = splits.indices.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes = splits.sizes();
            prop_assert_eq!(sizes, split_sizes(n, fractions).unwrap());
            for (c, &n_c) in counts.iter().enumerate() {
                for (j, part) in [&splits.train, &splits.val, &splits.test].iter().enumerate() {
                    let got = part.class_counts()[c] as f64;
                    let exact = n_c as f64 * sizes[j] as f64 / n as f64;
                    prop_assert!((got - exact).abs() < 1.0 + 1e-9, "class {} split {} got {} exact {}", c, j, got, exact);
                }
            }
        }

        #[test]
        fn scaler_round_trip(rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 3), 2..20)) {
            let n = rows.len();
            let x = Array2::from_shape_vec((n, 3), rows.into_iter().flatten().collect()).unwrap();
            let scaler = Scaler::fit(x.view()).unwrap();
            prop_assert!(scaler.stds.iter().all(|&s| s > 0.0));
            let z = scaler.transform(x.view()).unwrap();
            for col in z.columns() {
                prop_assert!(col.mean().unwrap().abs() < 1e-9);
            }
            let back = scaler.transform(scaler.inverse_transform(z.view()).unwrap().view()).unwrap();
            for ((j, a), b) in back.indexed_iter().map(|((_, j), a)| (j, a)).zip(z.iter()) {
                let scale = (scaler.means[j].abs() / scaler.stds[j]).max(1.0);
                prop_assert!((a - b).abs() <= 4e-12 * scale);
            }
        }

        #[test]
        fn correlation_is_symmetric_and_bounded(rows in proptest::collection::vec(proptest::collection::vec(-10f64..10.0, 4), 2..30)) {
            let n = rows.len();
            let x = Array2::from_shape_vec((n, 4), rows.into_iter().flatten().collect()).unwrap();
            let ds = Dataset::from_parts(x, vec![0; n]).unwrap();
            let corr = correlation(&ds, false).unwrap();
            prop_assert_eq!(corr.r.clone(), corr.r.t().to_owned());
            prop_assert!(corr.r.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }
    }
}
