//! Correlation-group anchors and the nonlinear anchor-wise features built on
//! them.
//!
//! Every anchor `a` owns a membership list `M_a` (the anchor followed by its
//! `m` most strongly correlated features, by absolute value) and a weight
//! `ρ(a, f)` per member. A configuration picks, per anchor, an anchor-first
//! subset of `M_a`; the feature for that anchor is the ℓ2 norm of the
//! correlation-weighted subvector.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::CorrelationModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "AnchorModelRepr", try_from = "AnchorModelRepr")]
pub struct AnchorModel {
    pub n_features: usize,
    pub anchors: Vec<usize>,
    pub membership: BTreeMap<usize, Vec<usize>>,
    pub weights: BTreeMap<(usize, usize), f64>,
}

/// JSON shape: `{anchors, membership: {"a": [..]}, weights: {"a,f": ρ}}`.
#[derive(Serialize, Deserialize)]
struct AnchorModelRepr {
    n_features: usize,
    anchors: Vec<usize>,
    membership: BTreeMap<usize, Vec<usize>>,
    weights: BTreeMap<String, f64>,
}

impl From<AnchorModel> for AnchorModelRepr {
    fn from(m: AnchorModel) -> Self {
        Self {
            n_features: m.n_features,
            anchors: m.anchors,
            membership: m.membership,
            weights: m
                .weights
                .into_iter()
                .map(|((a, f), w)| (format!("{a},{f}"), w))
                .collect(),
        }
    }
}

impl TryFrom<AnchorModelRepr> for AnchorModel {
    type Error = String;

    fn try_from(r: AnchorModelRepr) -> std::result::Result<Self, String> {
        let mut weights = BTreeMap::new();
        for (key, w) in r.weights {
            let (a, f) = key.split_once(',').ok_or_else(|| format!("bad weight key `{key}`"))?;
            let parse = |s: &str| s.trim().parse::<usize>().map_err(|e| format!("{key}: {e}"));
            weights.insert((parse(a)?, parse(f)?), w);
        }
        let model = AnchorModel {
            n_features: r.n_features,
            anchors: r.anchors,
            membership: r.membership,
            weights,
        };
        model.validate().map_err(|e| e.to_string())?;
        Ok(model)
    }
}

impl AnchorModel {
    pub fn members(&self, anchor: usize) -> Result<&[usize]> {
        self.membership
            .get(&anchor)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownAnchor(anchor))
    }

    pub fn weight(&self, anchor: usize, feature: usize) -> Option<f64> {
        if anchor == feature {
            return self.membership.contains_key(&anchor).then_some(1.0);
        }
        self.weights.get(&(anchor, feature)).copied()
    }

    fn validate(&self) -> Result<()> {
        for &a in &self.anchors {
            let members = self.members(a)?;
            if members.first() != Some(&a) {
                return Err(Error::InvalidConfig(format!(
                    "membership of anchor {a} must start with the anchor"
                )));
            }
            for &f in members {
                if f >= self.n_features {
                    return Err(Error::UnknownFeature(f));
                }
                if self.weight(a, f).is_none() {
                    return Err(Error::InvalidConfig(format!("missing weight ({a}, {f})")));
                }
            }
        }
        Ok(())
    }
}

/// Ranks anchors by |corr(f, target)| (input order when target correlations
/// are absent) and builds top-`m` memberships. Ties keep the lower feature
/// index first. `max_anchors` keeps only the leading anchors.
pub fn build_anchor_model(corr: &CorrelationModel, m: usize, max_anchors: Option<usize>) -> Result<AnchorModel> {
    let n = corr.n_features();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if m >= n {
        return Err(Error::InvalidArgument(format!(
            "membership size m={m} needs at least {} features, have {n}",
            m + 1
        )));
    }
    let clean = |v: f64| if v.is_nan() { 0.0 } else { v };
    let mut anchors: Vec<usize> = (0..n).collect();
    if let Some(t) = &corr.target_corr {
        anchors.sort_by(|&a, &b| clean(t[b]).abs().total_cmp(&clean(t[a]).abs()));
    }
    if let Some(cap) = max_anchors {
        anchors.truncate(cap.max(1));
    }

    let mut membership = BTreeMap::new();
    let mut weights = BTreeMap::new();
    for &a in &anchors {
        let mut others: Vec<usize> = (0..n).filter(|&f| f != a).collect();
        others.sort_by(|&f, &g| clean(corr.r[[a, g]]).abs().total_cmp(&clean(corr.r[[a, f]]).abs()));
        let mut members = Vec::with_capacity(m + 1);
        members.push(a);
        members.extend_from_slice(&others[..m]);
        weights.insert((a, a), 1.0);
        for &f in &members[1..] {
            weights.insert((a, f), clean(corr.r[[a, f]]));
        }
        membership.insert(a, members);
    }
    Ok(AnchorModel {
        n_features: n,
        anchors,
        membership,
        weights,
    })
}

/// Per-anchor feature subsets of a common size `k`, anchor first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CgrConfig {
    pub k: usize,
    pub subsets: BTreeMap<usize, Vec<usize>>,
}

impl CgrConfig {
    /// Each anchor followed by the first `k - 1` other members of `M_a`.
    pub fn default_for(model: &AnchorModel, k: usize) -> Self {
        let subsets = model
            .anchors
            .iter()
            .map(|&a| {
                let members = &model.membership[&a];
                (a, members[..k.min(members.len())].to_vec())
            })
            .collect();
        Self { k, subsets }
    }

    pub fn subset(&self, anchor: usize) -> Result<&[usize]> {
        self.subsets
            .get(&anchor)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownAnchor(anchor))
    }

    pub fn validate(&self, model: &AnchorModel) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("subset size k must be positive".into()));
        }
        for &a in self.subsets.keys() {
            if !model.membership.contains_key(&a) {
                return Err(Error::UnknownAnchor(a));
            }
        }
        for &a in &model.anchors {
            let subset = self.subset(a)?;
            let members = model.members(a)?;
            if subset.first() != Some(&a) {
                return Err(Error::InvalidConfig(format!(
                    "subset for anchor {a} must start with the anchor"
                )));
            }
            if subset.len() != self.k.min(members.len()) {
                return Err(Error::InvalidConfig(format!(
                    "subset for anchor {a} has {} members, expected {}",
                    subset.len(),
                    self.k.min(members.len())
                )));
            }
            for (i, f) in subset.iter().enumerate() {
                if !members.contains(f) {
                    return Err(Error::InvalidConfig(format!(
                        "feature {f} is not a member of anchor {a}"
                    )));
                }
                if subset[..i].contains(f) {
                    return Err(Error::InvalidConfig(format!(
                        "feature {f} repeated in subset of anchor {a}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Which anchor-wise statistic fills the feature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Embedding {
    /// `φ_a(x) = ‖(ρ(a,f) x_f)_{f ∈ κ(a)}‖₂`.
    #[default]
    Phi,
    /// `z_a(x) = g_a · ‖x_{κ(a)}‖₂` with `g_a` taken over the same subset.
    Multiplicative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgrFeatures {
    pub matrix: Array2<f64>,
    pub anchor_order: Vec<usize>,
}

fn subset_weights(model: &AnchorModel, anchor: usize, subset: &[usize]) -> Result<Vec<f64>> {
    subset
        .iter()
        .map(|&f| {
            if f >= model.n_features {
                return Err(Error::UnknownFeature(f));
            }
            model.weight(anchor, f).ok_or(Error::UnknownFeature(f))
        })
        .collect()
}

fn check_columns(x: &ArrayView2<f64>, model: &AnchorModel) -> Result<()> {
    if x.ncols() != model.n_features {
        return Err(Error::DimensionMismatch {
            expected: model.n_features,
            got: x.ncols(),
        });
    }
    Ok(())
}

/// `u(i) = sqrt(Σ_{f ∈ subset} (ρ(a,f) x_{i,f})²)` for every row.
pub fn anchor_feature_vector(
    x: ArrayView2<f64>,
    anchor: usize,
    subset: &[usize],
    model: &AnchorModel,
) -> Result<Array1<f64>> {
    check_columns(&x, model)?;
    if subset.is_empty() {
        return Err(Error::InvalidConfig(format!("empty subset for anchor {anchor}")));
    }
    let w = subset_weights(model, anchor, subset)?;
    Ok(x.rows()
        .into_iter()
        .map(|row| {
            subset
                .iter()
                .zip(&w)
                .map(|(&f, &wf)| (wf * row[f]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// `sqrt(Σ_{f ∈ M_a} ρ(a,f)²)`, including the anchor's own unit weight.
pub fn group_strength(model: &AnchorModel, anchor: usize) -> Result<f64> {
    group_strength_over(model, anchor, model.members(anchor)?)
}

pub fn group_strength_over(model: &AnchorModel, anchor: usize, subset: &[usize]) -> Result<f64> {
    Ok(subset_weights(model, anchor, subset)?
        .iter()
        .map(|w| w * w)
        .sum::<f64>()
        .sqrt())
}

fn activation(x: &ArrayView2<f64>, subset: &[usize]) -> Array1<f64> {
    x.rows()
        .into_iter()
        .map(|row| subset.iter().map(|&f| row[f] * row[f]).sum::<f64>().sqrt())
        .collect()
}

/// `z_a(x) = g_a · ‖x_{M_a}‖₂` for every row.
pub fn multiplicative_feature(x: ArrayView2<f64>, model: &AnchorModel, anchor: usize) -> Result<Array1<f64>> {
    check_columns(&x, model)?;
    let g = group_strength(model, anchor)?;
    Ok(activation(&x, model.members(anchor)?) * g)
}

pub fn build_feature_matrix(
    x: ArrayView2<f64>,
    model: &AnchorModel,
    config: &CgrConfig,
    embedding: Embedding,
) -> Result<CgrFeatures> {
    check_columns(&x, model)?;
    config.validate(model)?;
    let mut matrix = Array2::zeros((x.nrows(), model.anchors.len()));
    for (j, &a) in model.anchors.iter().enumerate() {
        let subset = config.subset(a)?;
        let column = match embedding {
            Embedding::Phi => anchor_feature_vector(x, a, subset, model)?,
            Embedding::Multiplicative => activation(&x, subset) * group_strength_over(model, a, subset)?,
        };
        matrix.column_mut(j).assign(&column);
    }
    Ok(CgrFeatures {
        matrix,
        anchor_order: model.anchors.clone(),
    })
}

/// Features of a single record.
pub fn record_features(
    record: &[f64],
    model: &AnchorModel,
    config: &CgrConfig,
    embedding: Embedding,
) -> Result<Vec<f64>> {
    let view = ArrayView2::from_shape((1, record.len()), record).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(build_feature_matrix(view, model, config, embedding)?
        .matrix
        .row(0)
        .to_vec())
}
