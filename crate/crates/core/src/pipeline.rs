//! Feature construction shared by search, persistence and scoring:
//! CGR features under a configuration, a scaler fitted on training rows and
//! class medoids in the standardized space.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::cgr::{build_feature_matrix, AnchorModel, CgrConfig, Embedding};
use crate::data::{Dataset, Scaler};
use crate::error::Result;
use crate::medoid::{fit_class_medoids, MedoidSet, DEFAULT_MAX_POINTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedoidParams {
    pub m_max: usize,
    pub seed: u64,
}

impl Default for MedoidParams {
    fn default() -> Self {
        Self {
            m_max: DEFAULT_MAX_POINTS,
            seed: 0,
        }
    }
}

/// Raw records to standardized CGR features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStage {
    pub anchor_model: AnchorModel,
    pub config: CgrConfig,
    pub embedding: Embedding,
    pub scaler: Scaler,
}

impl FeatureStage {
    pub fn fit(
        x_train: ArrayView2<f64>,
        anchor_model: &AnchorModel,
        config: &CgrConfig,
        embedding: Embedding,
    ) -> Result<Self> {
        let f = build_feature_matrix(x_train, anchor_model, config, embedding)?;
        Ok(Self {
            anchor_model: anchor_model.clone(),
            config: config.clone(),
            embedding,
            scaler: Scaler::fit(f.matrix.view())?,
        })
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let f = build_feature_matrix(x, &self.anchor_model, &self.config, self.embedding)?;
        self.scaler.transform(f.matrix.view())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prototypes {
    pub stage: FeatureStage,
    pub medoids: MedoidSet,
    /// Standardized training features.
    pub train_features: Array2<f64>,
}

pub fn fit_prototypes(
    train: &Dataset,
    anchor_model: &AnchorModel,
    config: &CgrConfig,
    embedding: Embedding,
    medoid: MedoidParams,
) -> Result<Prototypes> {
    let stage = FeatureStage::fit(train.x.view(), anchor_model, config, embedding)?;
    let train_features = stage.transform(train.x.view())?;
    let medoids = fit_class_medoids(
        train_features.view(),
        &train.y,
        train.n_classes(),
        medoid.m_max,
        medoid.seed,
    )?;
    Ok(Prototypes {
        stage,
        medoids,
        train_features,
    })
}
