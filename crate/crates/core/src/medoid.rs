//! Class prototypes as Euclidean medoids, optionally over a seeded subsample.

use std::collections::BTreeMap;

use ndarray::{Array1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::derive_seed;

pub const DEFAULT_MAX_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedoidSet {
    pub medoids: BTreeMap<usize, Vec<f64>>,
    pub m_max: usize,
    pub seed: u64,
}

impl MedoidSet {
    pub fn n_classes(&self) -> usize {
        self.medoids.len()
    }

    pub fn dim(&self) -> usize {
        self.medoids.values().next().map_or(0, Vec::len)
    }

    pub fn get(&self, class: usize) -> Result<&[f64]> {
        self.medoids
            .get(&class)
            .map(Vec::as_slice)
            .ok_or(Error::MissingMedoid(class))
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Row index of the medoid of `points`. When there are more than `m_max`
/// rows the search runs over a uniform subsample drawn without replacement.
/// Equal distance sums resolve to the lowest index.
pub fn medoid_index(points: ArrayView2<f64>, m_max: usize, seed: u64) -> Result<usize> {
    let n = points.nrows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if m_max == 0 {
        return Err(Error::InvalidArgument("medoid subsample cap must be positive".into()));
    }
    let candidates: Vec<usize> = if n <= m_max {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, n, m_max).into_vec();
        idx.sort_unstable();
        idx
    };
    let rows: Vec<Vec<f64>> = candidates.iter().map(|&i| points.row(i).to_vec()).collect();
    let sums: Vec<f64> = rows.par_iter().map(|p| rows.iter().map(|q| dist(p, q)).sum()).collect();
    let mut best = 0;
    for (i, &s) in sums.iter().enumerate() {
        if s < sums[best] {
            best = i;
        }
    }
    Ok(candidates[best])
}

pub fn euclidean_medoid(points: ArrayView2<f64>, m_max: usize, seed: u64) -> Result<Array1<f64>> {
    let i = medoid_index(points, m_max, seed)?;
    Ok(points.row(i).to_owned())
}

/// One medoid per class in `0..n_classes`; every class needs at least one row.
pub fn fit_class_medoids(
    f: ArrayView2<f64>,
    y: &[usize],
    n_classes: usize,
    m_max: usize,
    seed: u64,
) -> Result<MedoidSet> {
    if f.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: f.nrows(),
            got: y.len(),
        });
    }
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &c) in y.iter().enumerate() {
        by_class
            .get_mut(c)
            .ok_or(Error::LabelOutOfRange { label: c, n_classes })?
            .push(i);
    }
    let mut medoids = BTreeMap::new();
    for (c, rows) in by_class.iter().enumerate() {
        if rows.is_empty() {
            return Err(Error::ClassTooSmall {
                class: c,
                count: 0,
                needed: 1,
            });
        }
        let pts = f.select(Axis(0), rows);
        let m = euclidean_medoid(pts.view(), m_max, derive_seed(seed, c as u64, 0))?;
        medoids.insert(c, m.to_vec());
    }
    Ok(MedoidSet { medoids, m_max, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn brute_force(points: &Array2<f64>) -> usize {
        let n = points.nrows();
        let mut best = (f64::INFINITY, 0);
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                let mut d = 0.0;
                for k in 0..points.ncols() {
                    d += (points[[i, k]] - points[[j, k]]).powi(2);
                }
                s += f64::sqrt(d);
            }
            if s < best.0 {
                best = (s, i);
            }
        }
        best.1
    }

    #[test]
    fn small_cases() {
        let one = array![[4.0, -1.0]];
        assert_eq!(euclidean_medoid(one.view(), 10, 0).unwrap().to_vec(), vec![4.0, -1.0]);
        let line = array![[0.0], [1.0], [10.0]];
        assert_eq!(euclidean_medoid(line.view(), 10, 0).unwrap().to_vec(), vec![1.0]);
        let two = array![[3.0], [-3.0]];
        assert_eq!(medoid_index(two.view(), 10, 0).unwrap(), 0);
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(euclidean_medoid(empty.view(), 10, 0).is_err());
    }

    #[test]
    fn subsample_is_seeded_member() {
        let pts = Array2::from_shape_fn((50, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
        let a = medoid_index(pts.view(), 8, 42).unwrap();
        let b = medoid_index(pts.view(), 8, 42).unwrap();
        assert_eq!(a, b);
        assert!(a < 50);
    }

    #[test]
    fn class_medoids_sit_in_their_blobs() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..10 {
            let t = i as f64 * 0.1;
            rows.extend_from_slice(&[t, -t]);
            y.push(0);
            rows.extend_from_slice(&[20.0 + t, 20.0 - t]);
            y.push(1);
        }
        let f = Array2::from_shape_vec((20, 2), rows).unwrap();
        let set = fit_class_medoids(f.view(), &y, 2, DEFAULT_MAX_POINTS, 1).unwrap();
        assert!(set.get(0).unwrap()[0] < 1.0);
        assert!(set.get(1).unwrap()[0] > 19.0);
        for c in 0..2 {
            let idx: Vec<usize> = (0..20).filter(|&i| y[i] == c).collect();
            let pts = f.select(Axis(0), &idx);
            assert_eq!(set.get(c).unwrap(), pts.row(brute_force(&pts)).to_vec().as_slice());
        }
        assert!(matches!(
            fit_class_medoids(f.view(), &y, 3, 10, 1),
            Err(Error::ClassTooSmall { class: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn matches_brute_force_below_cap(
            n in 1usize..30,
            d in 1usize..5,
            seed in any::<u64>(),
            values in proptest::collection::vec(-5.0f64..5.0, 150),
        ) {
            let pts = Array2::from_shape_fn((n, d), |(i, j)| values[(i * d + j) % values.len()]);
            prop_assert_eq!(medoid_index(pts.view(), 30, seed).unwrap(), brute_force(&pts));
        }

        #[test]
        fn medoid_is_an_input_row(
            values in proptest::collection::vec(-5.0f64..5.0, 40),
            cap in 1usize..20,
            seed in any::<u64>(),
        ) {
            let pts = Array2::from_shape_vec((20, 2), values).unwrap();
            let m = euclidean_medoid(pts.view(), cap, seed).unwrap();
            prop_assert!(pts.rows().into_iter().any(|r| r == m));
        }
    }
}
