use crate::model::{FeatureMask, FeatureSchema, PredictionModel, TimeWindow};

use super::DdaConfig;

/// Every (feature subset, time window) pair, masks in ascending bit order
/// and windows in configured order within each mask. Position in the pool
/// is the tie-breaker of the model search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelPool {
    arity: usize,
    windows: Vec<TimeWindow>,
}

impl ModelPool {
    pub fn new(arity: usize, windows: Vec<TimeWindow>) -> Self {
        assert!(
            arity <= FeatureMask::MAX_FEATURES,
            "too many features for a model pool"
        );
        Self { arity, windows }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn windows(&self) -> &[TimeWindow] {
        &self.windows
    }

    pub fn mask_count(&self) -> usize {
        1 << self.arity
    }

    pub fn len(&self) -> usize {
        self.mask_count() * self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn model(&self, position: usize) -> PredictionModel {
        let nw = self.windows.len();
        PredictionModel::new(
            FeatureMask((position / nw) as u32),
            self.windows[position % nw],
        )
    }

    pub fn position(&self, model: &PredictionModel) -> Option<usize> {
        let mask = model.mask.0 as usize;
        if mask >= self.mask_count() {
            return None;
        }
        let w = self.windows.iter().position(|w| *w == model.window)?;
        Some(mask * self.windows.len() + w)
    }

    pub fn iter(&self) -> impl Iterator<Item = PredictionModel> + '_ {
        (0..self.len()).map(|i| self.model(i))
    }
}

/// The full model pool for `schema` under `config`.
pub fn enumerate_models(schema: &FeatureSchema, config: &DdaConfig) -> ModelPool {
    ModelPool::new(schema.arity(), config.windows())
}
