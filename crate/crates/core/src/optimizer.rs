//! Coordinate-descent search over CGR configurations, maximizing validation
//! macro-F1 of the fusion classifier, with progressive initialization across
//! subset sizes.

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cgr::{AnchorModel, CgrConfig, Embedding};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fusion::{evaluate, fusion_infer, FusionParams, MetricsReport};
use crate::pipeline::{fit_prototypes, MedoidParams};
use crate::quantum::derive_seed;

/// Anchor-first subsets of size `k` drawn from `members` (anchor first, the
/// rest in membership order). When `budget` is exceeded a seeded subsample of
/// that many subsets is kept, still in enumeration order.
pub fn candidate_subsets(
    anchor: usize,
    members: &[usize],
    k: usize,
    budget: Option<usize>,
    seed: u64,
) -> Vec<Vec<usize>> {
    let rest: Vec<usize> = members.iter().copied().filter(|&f| f != anchor).collect();
    if k == 0 {
        return Vec::new();
    }
    if k > rest.len() {
        let mut all = vec![anchor];
        all.extend(rest);
        return vec![all];
    }
    let mut out: Vec<Vec<usize>> = rest
        .into_iter()
        .combinations(k - 1)
        .map(|c| std::iter::once(anchor).chain(c).collect())
        .collect();
    if let Some(budget) = budget {
        if out.len() > budget {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = rand::seq::index::sample(&mut rng, out.len(), budget).into_vec();
            keep.sort_unstable();
            out = keep.into_iter().map(|i| std::mem::take(&mut out[i])).collect();
        }
    }
    out
}

/// Resizes each anchor subset to `k`: grows by appending the first member of
/// `M_a` not yet present, shrinks by truncating from the tail.
pub fn normalize_config(config: &CgrConfig, model: &AnchorModel, k: usize) -> CgrConfig {
    let subsets = model
        .anchors
        .iter()
        .map(|&a| {
            let members = &model.membership[&a];
            let mut s: Vec<usize> = config.subsets.get(&a).cloned().unwrap_or_else(|| vec![a]);
            if s.first() != Some(&a) {
                s.retain(|&f| f != a);
                s.insert(0, a);
            }
            let target = k.min(members.len());
            s.truncate(target);
            for &f in members {
                if s.len() >= target {
                    break;
                }
                if !s.contains(&f) {
                    s.push(f);
                }
            }
            (a, s)
        })
        .collect();
    CgrConfig { k, subsets }
}

/// Everything needed to score a configuration on a fixed train/validation
/// pair.
#[derive(Debug, Clone)]
pub struct SearchContext<'a> {
    pub train: &'a Dataset,
    pub val: &'a Dataset,
    pub anchor_model: &'a AnchorModel,
    pub fusion: FusionParams,
    pub medoid: MedoidParams,
    pub embedding: Embedding,
}

impl SearchContext<'_> {
    /// Builds features, standardizes with training statistics, fits medoids
    /// on train and returns validation macro-F1 with the full report.
    pub fn score(&self, config: &CgrConfig) -> Result<(f64, MetricsReport)> {
        let protos = fit_prototypes(self.train, self.anchor_model, config, self.embedding, self.medoid)?;
        let f_val = protos.stage.transform(self.val.x.view())?;
        let out = fusion_infer(f_val.view(), &protos.medoids, &self.fusion)?;
        let report = evaluate(&self.val.y, &out.labels, self.val.n_classes())?;
        Ok((report.macro_f1, report))
    }
}

pub fn score_config(ctx: &SearchContext, config: &CgrConfig) -> Result<(f64, MetricsReport)> {
    ctx.score(config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSettings {
    pub k_min: usize,
    pub k_max: usize,
    pub max_passes: usize,
    pub budget: Option<usize>,
    pub seed: u64,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            k_min: 2,
            k_max: 5,
            max_passes: 3,
            budget: Some(200),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchEntry {
    pub k: usize,
    pub best_config: CgrConfig,
    pub best_f1: f64,
    pub metrics: MetricsReport,
    pub passes_used: usize,
    pub evaluations: usize,
    /// Incumbent score after the initial evaluation and after every accepted move.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub settings: SearchSettings,
    pub entries: Vec<SearchEntry>,
}

impl SearchRecord {
    /// Entries ordered by validation macro-F1, best first; ties favour smaller k.
    pub fn ranked(&self) -> Vec<&SearchEntry> {
        let mut v: Vec<&SearchEntry> = self.entries.iter().collect();
        v.sort_by(|a, b| b.best_f1.total_cmp(&a.best_f1).then(a.k.cmp(&b.k)));
        v
    }

    pub fn entry(&self, k: usize) -> Option<&SearchEntry> {
        self.entries.iter().find(|e| e.k == k)
    }
}

fn with_subset(config: &CgrConfig, anchor: usize, subset: Vec<usize>) -> CgrConfig {
    let mut c = config.clone();
    c.subsets.insert(anchor, subset);
    c
}

fn search_k(ctx: &SearchContext, settings: &SearchSettings, k: usize, init: CgrConfig) -> Result<SearchEntry> {
    let model = ctx.anchor_model;
    let mut config = init;
    let (mut best_f1, mut metrics) = ctx.score(&config)?;
    let mut evaluations = 1;
    let mut trace = vec![best_f1];
    let mut passes_used = 0;
    for pass in 1..=settings.max_passes {
        passes_used = pass;
        let mut improved = false;
        for &a in &model.anchors {
            let current = config.subset(a)?.to_vec();
            let seed = derive_seed(settings.seed, a as u64, k as u64);
            let candidates: Vec<Vec<usize>> = candidate_subsets(a, &model.membership[&a], k, settings.budget, seed)
                .into_iter()
                .filter(|c| *c != current)
                .collect();
            if candidates.is_empty() {
                continue;
            }
            let scored: Vec<(f64, MetricsReport)> = candidates
                .par_iter()
                .map(|c| ctx.score(&with_subset(&config, a, c.clone())))
                .collect::<Result<_>>()?;
            evaluations += scored.len();
            let mut pick: Option<usize> = None;
            for (i, (f1, _)) in scored.iter().enumerate() {
                if *f1 > pick.map_or(best_f1, |j| scored[j].0) {
                    pick = Some(i);
                }
            }
            if let Some(i) = pick {
                config = with_subset(&config, a, candidates[i].clone());
                (best_f1, metrics) = scored[i].clone();
                trace.push(best_f1);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    Ok(SearchEntry {
        k,
        best_config: config,
        best_f1,
        metrics,
        passes_used,
        evaluations,
        trace,
    })
}

/// Runs the search for every `k` in `k_min..=k_max`, seeding each run from the
/// previous run's best configuration.
pub fn coordinate_descent(ctx: &SearchContext, settings: &SearchSettings) -> Result<SearchRecord> {
    if ctx.anchor_model.anchors.is_empty() {
        return Err(Error::InvalidConfig("anchor model has no anchors".into()));
    }
    if settings.k_min == 0 || settings.k_min > settings.k_max {
        return Err(Error::InvalidArgument(format!(
            "invalid k range {}:{}",
            settings.k_min, settings.k_max
        )));
    }
    if settings.max_passes == 0 {
        return Err(Error::InvalidArgument("max passes must be at least 1".into()));
    }
    let mut entries: Vec<SearchEntry> = Vec::new();
    for k in settings.k_min..=settings.k_max {
        let init = match entries.last() {
            Some(prev) => normalize_config(&prev.best_config, ctx.anchor_model, k),
            None => CgrConfig::default_for(ctx.anchor_model, k),
        };
        let entry = search_k(ctx, settings, k, init)?;
        log::info!(
            "k={k}: val macro-F1 {:.4} after {} passes, {} evaluations",
            entry.best_f1,
            entry.passes_used,
            entry.evaluations
        );
        entries.push(entry);
    }
    Ok(SearchRecord {
        settings: *settings,
        entries,
    })
}

/// Every configuration reachable for size `k` (the cartesian product of the
/// per-anchor candidate lists).
pub fn enumerate_configs(model: &AnchorModel, k: usize) -> Vec<CgrConfig> {
    model
        .anchors
        .iter()
        .map(|&a| {
            candidate_subsets(a, &model.membership[&a], k, None, 0)
                .into_iter()
                .map(move |s| (a, s))
        })
        .multi_cartesian_product()
        .map(|pairs| CgrConfig {
            k,
            subsets: pairs.into_iter().collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgr::build_anchor_model;
    use crate::data::{correlation, stratified_split};
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn model_for(ds: &Dataset, m: usize) -> AnchorModel {
        build_anchor_model(&correlation(ds, true).unwrap(), m, None).unwrap()
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(
            candidate_subsets(0, &[0, 1, 2], 2, None, 0),
            vec![vec![0, 1], vec![0, 2]]
        );
        assert_eq!(candidate_subsets(0, &[0, 1, 2, 3], 3, None, 0).len(), 3);
        assert_eq!(candidate_subsets(0, &[0, 1, 2], 5, None, 0), vec![vec![0, 1, 2]]);
        let capped = candidate_subsets(0, &[0, 1, 2, 3], 3, Some(1), 9);
        assert_eq!(capped.len(), 1);
        assert_eq!(capped, candidate_subsets(0, &[0, 1, 2, 3], 3, Some(1), 9));
    }

    #[test]
    fn normalize_grows_and_shrinks() {
        let corr = crate::data::CorrelationModel {
            r: ndarray::array![[1.0, 0.9, 0.5], [0.9, 1.0, 0.1], [0.5, 0.1, 1.0]],
            target_corr: None,
        };
        let model = build_anchor_model(&corr, 2, None).unwrap();
        let mut c = CgrConfig::default_for(&model, 2);
        c.subsets.insert(0, vec![0, 2]);
        let grown = normalize_config(&c, &model, 3);
        assert_eq!(grown.subsets[&0], vec![0, 2, 1]);
        assert_eq!(grown.subsets[&0][..2], c.subsets[&0][..]);
        let shrunk = normalize_config(&grown, &model, 1);
        assert_eq!(shrunk.subsets[&0], vec![0]);
        assert!(grown.validate(&model).is_ok());
    }

    fn blobs(seed: u64, n: usize, d: usize, gap: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, d));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % 2;
            for j in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                x[[i, j]] = z + if j == 0 { gap * c as f64 } else { 0.0 };
            }
            y.push(c);
        }
        Dataset::from_parts(x, y).unwrap()
    }

    #[test]
    fn separable_blobs_score_perfectly() {
        let mut ds = blobs(3, 80, 3, 0.0);
        for i in 0..80 {
            let shift = if ds.y[i] == 1 { 100.0 } else { 0.0 };
            for j in 0..3 {
                ds.x[[i, j]] = ds.x[[i, j]] * 0.1 + shift;
            }
        }
        let splits = stratified_split(&ds, [0.5, 0.25, 0.25], 1).unwrap();
        let model = model_for(&splits.train, 2);
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
        let config = CgrConfig::default_for(&model, 2);
        let (f1, report) = score_config(&ctx, &config).unwrap();
        assert_eq!(f1, 1.0);
        assert_eq!(score_config(&ctx, &config).unwrap(), (f1, report));
        let mut bad = config.clone();
        bad.subsets.insert(42, vec![42]);
        assert!(score_config(&ctx, &bad).is_err());
    }

    #[test]
    fn search_is_monotone_and_finds_informative_feature() {
        let ds = blobs(11, 160, 4, 3.0);
        let splits = stratified_split(&ds, [0.5, 0.25, 0.25], 2).unwrap();
        let model = model_for(&splits.train, 3);
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
        let settings = SearchSettings {
            k_min: 1,
            k_max: 3,
            ..SearchSettings::default()
        };
        let rec = coordinate_descent(&ctx, &settings).unwrap();
        assert_eq!(rec.entries.len(), 3);
        for e in &rec.entries {
            assert!(e.trace.windows(2).all(|w| w[1] > w[0]));
            assert!(e.passes_used <= settings.max_passes);
            assert!(e.best_config.validate(&model).is_ok());
        }
        assert_eq!(model.anchors[0], 0);

        let best = rec.ranked()[0];
        let exhaustive = enumerate_configs(&model, best.k)
            .iter()
            .map(|c| ctx.score(c).unwrap().0)
            .fold(f64::MIN, f64::max);
        assert!(best.best_f1 <= exhaustive);

        let again = coordinate_descent(&ctx, &settings).unwrap();
        assert_eq!(rec, again);
        let json = serde_json::to_string(&rec).unwrap();
        let back: SearchRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.entries.len(), rec.entries.len());
    }

    #[test]
    fn progressive_init_extends_previous_best() {
        let ds = blobs(5, 120, 4, 2.0);
        let splits = stratified_split(&ds, [0.5, 0.25, 0.25], 3).unwrap();
        let model = model_for(&splits.train, 3);
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
        let settings = SearchSettings {
            k_min: 2,
            k_max: 3,
            max_passes: 1,
            ..SearchSettings::default()
        };
        let rec = coordinate_descent(&ctx, &settings).unwrap();
        let init = normalize_config(&rec.entries[0].best_config, &model, 3);
        for (&a, s) in &init.subsets {
            assert_eq!(s[..2], rec.entries[0].best_config.subsets[&a][..]);
        }
        assert!(coordinate_descent(
            &ctx,
            &SearchSettings {
                k_min: 3,
                k_max: 2,
                ..settings
            }
        )
        .is_err());
    }

    #[test]
    fn enumeration_product_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Array2::from_shape_fn((30, 3), |_| rng.random::<f64>());
        let ds = Dataset::from_parts(x, (0..30).map(|i| i % 2).collect()).unwrap();
        let model = model_for(&ds, 2);
        assert_eq!(enumerate_configs(&model, 2).len(), 8);
        assert_eq!(enumerate_configs(&model, 3).len(), 1);
    }
}
