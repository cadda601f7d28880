use rayon::prelude::*;

use super::model_io::FORMAT_VERSION;
use super::tree::{train_tree, tree_rng, Tree};
use super::{ForestError, ForestParams, TrainingSet};

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    /// Parameters with `feature_subsample` resolved to a concrete λ.
    pub params: ForestParams,
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub class_names: Vec<String>,
    pub format_version: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

/// Train a forest, growing trees in parallel.
pub fn train_forest(data: &TrainingSet, params: &ForestParams) -> Result<Forest, ForestError> {
    train_forest_with(data, params, Execution::Parallel)
}

/// Train a forest with an explicit execution strategy. The result does not
/// depend on the strategy.
pub fn train_forest_with(
    data: &TrainingSet,
    params: &ForestParams,
    execution: Execution,
) -> Result<Forest, ForestError> {
    if data.len() < 2 {
        return Err(ForestError::TooFewSamples(data.len()));
    }
    if params.n_classes != data.n_classes() {
        return Err(ForestError::Params(format!(
            "n_classes is {} but the training set names {} classes",
            params.n_classes,
            data.n_classes()
        )));
    }
    let distinct = data.distinct_labels();
    if distinct < 2 {
        return Err(ForestError::TooFewClasses(distinct));
    }
    params.validate(data.n_features())?;

    let mut resolved = params.clone();
    resolved.feature_subsample = Some(params.resolved_subsample(data.n_features()));

    let grow = |i: usize| train_tree(data, &resolved, tree_rng(params.seed, i));
    let trees: Vec<Tree> = match execution {
        Execution::Serial => (0..params.n_trees).map(grow).collect(),
        Execution::Parallel => (0..params.n_trees).into_par_iter().map(grow).collect(),
    };

    Ok(Forest {
        params: resolved,
        trees,
        n_features: data.n_features(),
        class_names: data.class_names().to_vec(),
        format_version: FORMAT_VERSION,
    })
}

impl Forest {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    fn check_input(&self, features: &[f64]) -> Result<(), ForestError> {
        if features.len() != self.n_features {
            return Err(ForestError::InputLength {
                expected: self.n_features,
                actual: features.len(),
            });
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(ForestError::InputNonFinite(i));
        }
        Ok(())
    }

    /// Mean of the leaf class distributions reached in every tree.
    pub fn predict_proba(&self, features: &[f64]) -> Result<Vec<f64>, ForestError> {
        self.check_input(features)?;
        let mut acc = vec![0.0; self.n_classes()];
        for tree in &self.trees {
            for (a, p) in acc.iter_mut().zip(tree.leaf_distribution(features)) {
                *a += p;
            }
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }

    /// Most probable class; ties go to the lowest index.
    pub fn predict_class(&self, features: &[f64]) -> Result<usize, ForestError> {
        Ok(argmax(&self.predict_proba(features)?))
    }
}

/// Index of the largest entry, lowest index on ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
