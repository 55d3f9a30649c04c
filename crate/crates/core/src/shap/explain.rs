//! Rankings of variables by mean absolute attribution.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::kernel::kernel_shap;
use super::{ShapConfig, ShapError};
use crate::dbscan::{ClusterModel, DbscanError};
use crate::ingest::UnitTag;
use crate::matrix::{euclidean, Matrix};
use crate::pca::PcaModel;
use crate::preprocess::Scaler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "id")]
pub enum ExplanationTarget {
    Component(usize),
    Mode(usize),
    ComponentSetTop(usize),
}

impl fmt::Display for ExplanationTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExplanationTarget::Component(j) => write!(f, "PC{}", j + 1),
            ExplanationTarget::Mode(id) => write!(f, "mode {id}"),
            ExplanationTarget::ComponentSetTop(k) => write!(f, "PC1-PC{k}"),
        }
    }
}

/// How per-component attributions are combined into one ranking.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentWeighting {
    #[default]
    Equal,
    ExplainedVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedVariable {
    pub rank: usize,
    pub variable: String,
    pub score: f64,
    pub unit_tag: UnitTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub target: ExplanationTarget,
    pub ranking: Vec<RankedVariable>,
}

impl Explanation {
    /// Ranks `scores` (aligned with `scaler.variables`) and keeps the first `top`.
    pub fn from_scores(target: ExplanationTarget, scaler: &Scaler, scores: &[f64], top: usize) -> Explanation {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap_or(Ordering::Equal)
                .then_with(|| scaler.variables[a].name.cmp(&scaler.variables[b].name))
        });
        let ranking = idx
            .into_iter()
            .take(top)
            .enumerate()
            .map(|(r, i)| RankedVariable {
                rank: r + 1,
                variable: scaler.variables[i].name.clone(),
                score: scores[i],
                unit_tag: scaler.variables[i].unit_tag,
            })
            .collect();
        Explanation { target, ranking }
    }

    pub fn variables(&self) -> Vec<&str> {
        self.ranking.iter().map(|r| r.variable.as_str()).collect()
    }
}

/// Membership score of `z` for `mode`: minus the distance to its nearest member.
pub fn mode_score(model: &ClusterModel, mode: usize, z: &[f64]) -> Result<f64, ShapError> {
    if z.len() != model.dimension() {
        return Err(ShapError::Shape {
            expected: model.dimension(),
            got: z.len(),
        });
    }
    let members = model.members(mode);
    if members.is_empty() {
        return Err(DbscanError::UnknownMode(mode).into());
    }
    Ok(-nearest(model, &members, z))
}

fn nearest(model: &ClusterModel, members: &[usize], z: &[f64]) -> f64 {
    members
        .iter()
        .map(|&i| euclidean(model.points.row(i), z))
        .fold(f64::INFINITY, f64::min)
}

fn check_inputs(pca: &PcaModel, scaler: &Scaler, samples: &Matrix, top: usize) -> Result<(), ShapError> {
    if top < 1 {
        return Err(ShapError::Parameter("top must be at least 1".into()));
    }
    if samples.rows() == 0 {
        return Err(ShapError::Parameter("no samples to explain".into()));
    }
    if scaler.len() != pca.n_variables() {
        return Err(ShapError::Shape {
            expected: pca.n_variables(),
            got: scaler.len(),
        });
    }
    if samples.cols() != pca.n_variables() {
        return Err(ShapError::Shape {
            expected: pca.n_variables(),
            got: samples.cols(),
        });
    }
    Ok(())
}

fn component_scores(pca: &PcaModel, samples: &Matrix, bg: &[f64], j: usize) -> Vec<f64> {
    let m = pca.n_variables();
    let mut scores = vec![0.0; m];
    for row in samples.row_iter() {
        for i in 0..m {
            scores[i] += (pca.loadings[(i, j)] * (row[i] - bg[i])).abs();
        }
    }
    scores.iter_mut().for_each(|s| *s /= samples.rows() as f64);
    scores
}

/// Relevance of each variable to one retained component.
///
/// The component score is linear, so its Shapley values are
/// `V[i,j]·(x_i − bg_i)` exactly and no sampling is needed.
pub fn explain_component(
    pca: &PcaModel,
    scaler: &Scaler,
    samples: &Matrix,
    component: usize,
    config: &ShapConfig,
    top: usize,
) -> Result<Explanation, ShapError> {
    check_inputs(pca, scaler, samples, top)?;
    if component >= pca.k {
        return Err(ShapError::Parameter(format!(
            "component {component} not retained (k = {})",
            pca.k
        )));
    }
    let bg = config.background_mean(pca.n_variables());
    let scores = component_scores(pca, samples, &bg, component);
    Ok(Explanation::from_scores(
        ExplanationTarget::Component(component),
        scaler,
        &scores,
        top,
    ))
}

/// Relevance of each variable to the retained components taken together.
pub fn explain_components(
    pca: &PcaModel,
    scaler: &Scaler,
    samples: &Matrix,
    config: &ShapConfig,
    top: usize,
) -> Result<Explanation, ShapError> {
    check_inputs(pca, scaler, samples, top)?;
    let m = pca.n_variables();
    let bg = config.background_mean(m);
    let weights: Vec<f64> = match config.component_weighting {
        ComponentWeighting::Equal => vec![1.0 / pca.k as f64; pca.k],
        ComponentWeighting::ExplainedVariance => {
            let total: f64 = pca.eigenvalues[..pca.k].iter().sum();
            if total > 0.0 {
                pca.eigenvalues[..pca.k].iter().map(|l| l / total).collect()
            } else {
                vec![1.0 / pca.k as f64; pca.k]
            }
        }
    };
    let mut scores = vec![0.0; m];
    for (j, w) in weights.iter().enumerate() {
        for (acc, s) in scores.iter_mut().zip(component_scores(pca, samples, &bg, j)) {
            *acc += w * s;
        }
    }
    Ok(Explanation::from_scores(
        ExplanationTarget::ComponentSetTop(pca.k),
        scaler,
        &scores,
        top,
    ))
}

/// Evenly spaced subset of `0..n` of size at most `cap`.
pub(crate) fn spread(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    (0..cap).map(|i| i * n / cap).collect()
}

fn sample_seed(seed: u64, mode: usize, index: usize) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [mode as u64, index as u64] {
        h = (h ^ v).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    h
}

/// Ranks variables by how much they pull samples into `mode`.
///
/// `members` are standardized rows; at most `config.max_samples` of them are
/// explained, evenly spaced.
pub fn explain_mode(
    model: &ClusterModel,
    pca: &PcaModel,
    scaler: &Scaler,
    mode: usize,
    members: &Matrix,
    config: &ShapConfig,
    top: usize,
) -> Result<Explanation, ShapError> {
    check_inputs(pca, scaler, members, top)?;
    if model.dimension() != pca.k {
        return Err(ShapError::Shape {
            expected: pca.k,
            got: model.dimension(),
        });
    }
    let mode_members = model.members(mode);
    if mode_members.is_empty() {
        return Err(DbscanError::UnknownMode(mode).into());
    }
    let m = pca.n_variables();
    let background = config.background_matrix(m);
    let value_fn = |x: &[f64]| -nearest(model, &mode_members, &pca.project_row(x));
    let picked = spread(members.rows(), config.max_samples.max(1));
    let mut scores = vec![0.0; m];
    for &r in &picked {
        let cfg = ShapConfig {
            seed: sample_seed(config.seed, mode, r),
            ..config.clone()
        };
        let attr = kernel_shap(&value_fn, members.row(r), &background, &cfg)?;
        for (acc, p) in scores.iter_mut().zip(&attr.phi) {
            *acc += p.abs();
        }
    }
    scores.iter_mut().for_each(|s| *s /= picked.len() as f64);
    Ok(Explanation::from_scores(ExplanationTarget::Mode(mode), scaler, &scores, top))
}
