//! KernelSHAP attribution and the two explanation targets built on it:
//! principal-component relevance and per-mode variable rankings.

mod explain;
mod kernel;

pub use explain::{
    explain_component, explain_components, explain_mode, mode_score, ComponentWeighting, Explanation,
    ExplanationTarget, RankedVariable,
};
pub use kernel::{binom, kernel_shap, kernel_weight, shapley_exact, Attribution, MAX_EXACT_FEATURES};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dbscan::DbscanError;
use crate::matrix::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum ShapError {
    #[error("{features} features exceed the exact-enumeration limit of {threshold}")]
    Budget { features: usize, threshold: usize },
    #[error("coalition budget {budget} is below the minimum {needed}")]
    BudgetTooSmall { budget: usize, needed: usize },
    #[error("weighted regression is singular; increase the coalition budget")]
    DegenerateSampling,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("expected {expected} features, got {got}")]
    Shape { expected: usize, got: usize },
    #[error(transparent)]
    Lookup(#[from] DbscanError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapConfig {
    /// Reference rows in standardized space; `None` is the training mean (the zero vector).
    #[serde(default)]
    pub background: Option<Matrix>,
    pub coalition_budget: usize,
    pub exact_threshold: usize,
    pub seed: u64,
    /// Members explained per mode; larger modes are subsampled evenly.
    pub max_samples: usize,
    #[serde(default)]
    pub component_weighting: ComponentWeighting,
}

impl Default for ShapConfig {
    fn default() -> Self {
        ShapConfig {
            background: None,
            coalition_budget: 2048,
            exact_threshold: 12,
            seed: 0,
            max_samples: 16,
            component_weighting: ComponentWeighting::Equal,
        }
    }
}

impl ShapConfig {
    /// Background rows for `m` features.
    pub fn background_matrix(&self, m: usize) -> Matrix {
        match &self.background {
            Some(b) => b.clone(),
            None => Matrix::zeros(1, m),
        }
    }

    /// Mean background row.
    pub fn background_mean(&self, m: usize) -> Vec<f64> {
        let b = self.background_matrix(m);
        let mut mean = vec![0.0; b.cols()];
        for row in b.row_iter() {
            for (acc, v) in mean.iter_mut().zip(row) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= b.rows() as f64);
        mean
    }

    pub fn violations(&self, m: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.exact_threshold == 0 {
            out.push("exact_threshold must be at least 1".into());
        }
        if self.max_samples == 0 {
            out.push("max_samples must be at least 1".into());
        }
        if let Some(b) = &self.background {
            if b.cols() != m || b.rows() == 0 {
                out.push(format!("background is {}x{}, expected rows x {m}", b.rows(), b.cols()));
            }
        }
        if m > self.exact_threshold && self.coalition_budget < 2 * m + 2 {
            out.push(format!(
                "coalition_budget {} below 2m + 2 = {}",
                self.coalition_budget,
                2 * m + 2
            ));
        }
        out
    }
}
