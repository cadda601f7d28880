//! Canonical correlation forests.
//!
//! Each tree is a binary tree whose internal nodes threshold a projection of
//! a random feature subset. In [`SplitMode::Ccf`] the projection directions
//! come from a CCA between the node's features and its one-hot labels,
//! computed on a with-replacement resample of the node rows (the projection
//! bootstrap); the threshold itself is always chosen on the node's original
//! rows. [`SplitMode::AxisAligned`] is the classical single-feature baseline.
//! Trees never bag rows: every tree sees the full training set.

mod forest;
mod model_io;
mod split;
mod tree;

pub use forest::{train_forest, train_forest_with, Execution, Forest};
pub use model_io::{deserialize, serialize, ModelParseError, FORMAT_VERSION};
pub use split::{best_split, impurity_of_counts, SplitCandidate};
pub use tree::{train_tree, tree_rng, Node, Tree};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForestError {
    #[error("training set is empty")]
    Empty,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("need at least 2 distinct classes in the training labels, found {0}")]
    TooFewClasses(usize),
    #[error("sample {index} has {actual} features, expected {expected}")]
    FeatureLength {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error("sample {index} contains a non-finite feature")]
    NonFinite { index: usize },
    #[error("label {label} of sample {index} is out of range for {n_classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        n_classes: usize,
    },
    #[error("{labels} labels for {samples} samples")]
    LabelCount { samples: usize, labels: usize },
    #[error("invalid class name {0:?}: must be non-empty without whitespace")]
    ClassName(String),
    #[error("invalid parameter: {0}")]
    Params(String),
    #[error("input has {actual} features, forest expects {expected}")]
    InputLength { expected: usize, actual: usize },
    #[error("input feature {0} is not finite")]
    InputNonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Impurity {
    #[default]
    Gini,
    Entropy,
}

impl fmt::Display for Impurity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Impurity::Gini => "gini",
            Impurity::Entropy => "entropy",
        })
    }
}

impl FromStr for Impurity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gini" => Ok(Impurity::Gini),
            "entropy" => Ok(Impurity::Entropy),
            other => Err(format!(
                "unknown impurity {other:?} (expected gini or entropy)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitMode {
    #[default]
    Ccf,
    AxisAligned,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::Ccf => "ccf",
            SplitMode::AxisAligned => "axis",
        })
    }
}

impl FromStr for SplitMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ccf" => Ok(SplitMode::Ccf),
            "axis" | "axis_aligned" => Ok(SplitMode::AxisAligned),
            other => Err(format!("unknown mode {other:?} (expected ccf or axis)")),
        }
    }
}

/// Forest hyper-parameters. A handful of CCF trees (10 to 15) is usually
/// enough; axis-aligned forests need far more.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub n_classes: usize,
    /// Features drawn per node. `None` means `ceil(sqrt(d))`.
    pub feature_subsample: Option<usize>,
    pub min_node_size: usize,
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub impurity: Impurity,
    pub mode: SplitMode,
    /// Ridge added to both CCA covariance matrices, relative to the mean
    /// diagonal of the node's feature covariance.
    pub gamma: f64,
    pub seed: u64,
}

pub const DEFAULT_GAMMA: f64 = 1e-6;

impl ForestParams {
    pub fn new(n_classes: usize) -> Self {
        ForestParams {
            n_trees: 10,
            n_classes,
            feature_subsample: None,
            min_node_size: 2,
            max_depth: None,
            impurity: Impurity::Gini,
            mode: SplitMode::Ccf,
            gamma: DEFAULT_GAMMA,
            seed: 0,
        }
    }

    /// λ for a `d`-feature problem.
    pub fn resolved_subsample(&self, d: usize) -> usize {
        self.feature_subsample
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d.max(1))
    }

    pub(crate) fn validate(&self, d: usize) -> Result<(), ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::Params("n_trees must be >= 1".into()));
        }
        if self.min_node_size == 0 {
            return Err(ForestError::Params("min_node_size must be >= 1".into()));
        }
        if let Some(l) = self.feature_subsample {
            if l == 0 || l > d {
                return Err(ForestError::Params(format!(
                    "feature_subsample {l} outside 1..={d}"
                )));
            }
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(ForestError::Params(format!(
                "gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Feature rows with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    n_features: usize,
    rows: Vec<f64>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl TrainingSet {
    pub fn new(
        features: &[Vec<f64>],
        labels: &[usize],
        class_names: Vec<String>,
    ) -> Result<Self, ForestError> {
        if features.len() != labels.len() {
            return Err(ForestError::LabelCount {
                samples: features.len(),
                labels: labels.len(),
            });
        }
        let first = features.first().ok_or(ForestError::Empty)?;
        let d = first.len();
        if d == 0 {
            return Err(ForestError::FeatureLength {
                index: 0,
                expected: 1,
                actual: 0,
            });
        }
        for name in &class_names {
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(ForestError::ClassName(name.clone()));
            }
        }
        let n_classes = class_names.len();
        let mut rows = Vec::with_capacity(features.len() * d);
        for (index, (f, &label)) in features.iter().zip(labels).enumerate() {
            if f.len() != d {
                return Err(ForestError::FeatureLength {
                    index,
                    expected: d,
                    actual: f.len(),
                });
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(ForestError::NonFinite { index });
            }
            if label >= n_classes {
                return Err(ForestError::LabelOutOfRange {
                    index,
                    label,
                    n_classes,
                });
            }
            rows.extend_from_slice(f);
        }
        Ok(TrainingSet {
            n_features: d,
            rows,
            labels: labels.to_vec(),
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.n_features..(i + 1) * self.n_features]
    }

    /// Multiply every feature by `c`.
    pub fn scaled(&self, c: f64) -> TrainingSet {
        TrainingSet {
            rows: self.rows.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    pub(crate) fn distinct_labels(&self) -> usize {
        let mut seen = vec![false; self.n_classes()];
        for &l in &self.labels {
            seen[l] = true;
        }
        seen.iter().filter(|&&s| s).count()
    }
}

/// Projected coordinate of `row` along a split direction.
///
/// Training and prediction both route through this function so that stored
/// thresholds partition the training rows exactly as they did during growth.
#[inline]
pub fn project(row: &[f64], features: &[usize], projection: &[f64]) -> f64 {
    features
        .iter()
        .zip(projection)
        .fold(0.0, |acc, (&f, &w)| acc + row[f] * w)
}
