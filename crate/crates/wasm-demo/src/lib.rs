//! Browser demo: fit a small synthetic plant, move the DBSCAN radius around,
//! and ask which variables make a mode stand out.
//!
//! [`Session`] is plain Rust so it can be tested natively; [`Demo`] is the
//! wasm-bindgen face of it and speaks JSON strings.

use std::collections::BTreeMap;

use opmode_core::dbscan::{dbscan_fit, k_distance, ClusterModel};
use opmode_core::matrix::Matrix;
use opmode_core::modelstore::ModeModelBundle;
use opmode_core::pipeline::{fit_offline, flat_labels, standardize, PipelineConfig};
use opmode_core::preprocess::resample;
use opmode_core::shap::{explain_mode, Explanation};
use opmode_core::synthgen::{adjusted_rand_index, generate, window_labels, PlantSpec};
use opmode_core::time::Timestamp;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct Point {
    pub timestamp: String,
    pub x: f64,
    pub y: f64,
    /// `None` for noise.
    pub mode: Option<usize>,
    /// Planted regime, 0 for normal operation.
    pub truth: usize,
}

#[derive(Debug, Serialize)]
pub struct Clustering {
    pub epsilon: f64,
    pub mode_count: usize,
    pub ari: f64,
    pub points: Vec<Point>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub seed: u64,
    pub n_samples: usize,
    pub n_variables: usize,
    pub k: usize,
    pub explained_ratio: f64,
    pub knee_epsilon: f64,
    pub regimes: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct KDistance {
    pub k: usize,
    pub knee_epsilon: f64,
    pub distances: Vec<f64>,
}

pub struct Session {
    seed: u64,
    bundle: ModeModelBundle,
    z: Matrix,
    truth: Vec<usize>,
    regimes: Vec<String>,
    cluster: ClusterModel,
}

impl Session {
    pub fn new(seed: u64) -> Result<Session, String> {
        let spec = PlantSpec::small(seed);
        let plant = generate(&spec).map_err(|e| e.to_string())?;
        let config = PipelineConfig {
            seed,
            ..PipelineConfig::default()
        };
        let rspec = config.resample_spec();
        let windows = resample(&plant.table, &rspec).map_err(|e| e.to_string())?;
        let labels = window_labels(plant.table.timestamps(), &plant.labels, &rspec, windows.timestamps());
        let by_time: BTreeMap<Timestamp, usize> = windows.timestamps().iter().copied().zip(labels).collect();
        drop(windows);
        let (bundle, _) = fit_offline(plant.table.clone(), &config).map_err(|e| e.to_string())?;
        let (ts, z) = standardize(&bundle, &plant.table).map_err(|e| e.to_string())?;
        if ts != bundle.sample_timestamps {
            return Err("window grid differs from the fitted model".into());
        }
        let truth = ts.iter().map(|t| by_time.get(t).copied().unwrap_or(0)).collect();
        Ok(Session {
            seed,
            cluster: bundle.cluster.clone(),
            bundle,
            z,
            truth,
            regimes: spec.regimes.iter().map(|r| r.name.clone()).collect(),
        })
    }

    pub fn bundle(&self) -> &ModeModelBundle {
        &self.bundle
    }

    pub fn summary(&self) -> Summary {
        Summary {
            seed: self.seed,
            n_samples: self.z.rows(),
            n_variables: self.z.cols(),
            k: self.bundle.pca.k,
            explained_ratio: self.bundle.pca.explained_ratio,
            knee_epsilon: self.bundle.cluster.epsilon,
            regimes: self.regimes.clone(),
        }
    }

    pub fn kdistance(&self) -> Result<KDistance, String> {
        let curve = k_distance(&self.bundle.cluster.points, self.bundle.cluster.min_points).map_err(|e| e.to_string())?;
        Ok(KDistance {
            k: curve.k,
            knee_epsilon: self.bundle.cluster.epsilon,
            distances: curve.sorted_distances,
        })
    }

    /// Re-runs DBSCAN on the projected windows with a new radius.
    pub fn cluster(&mut self, epsilon: f64) -> Result<Clustering, String> {
        let model = dbscan_fit(&self.bundle.cluster.points, epsilon, self.bundle.cluster.min_points)
            .map_err(|e| e.to_string())?;
        self.cluster = model;
        Ok(self.clustering())
    }

    pub fn clustering(&self) -> Clustering {
        let found = flat_labels(&self.cluster);
        let pts = &self.cluster.points;
        let points = (0..pts.rows())
            .map(|i| Point {
                timestamp: self.bundle.sample_timestamps[i].to_string(),
                x: pts[(i, 0)],
                y: if pts.cols() > 1 { pts[(i, 1)] } else { 0.0 },
                mode: self.cluster.labels[i].mode(),
                truth: self.truth[i],
            })
            .collect();
        Clustering {
            epsilon: self.cluster.epsilon,
            mode_count: self.cluster.mode_count(),
            ari: adjusted_rand_index(&self.truth, &found),
            points,
        }
    }

    /// SHAP ranking for a mode of the current clustering.
    pub fn explain(&self, mode: usize) -> Result<Explanation, String> {
        let members = self.cluster.members(mode);
        if members.is_empty() {
            return Err(format!("no mode {mode}"));
        }
        let rows = self.z.select_rows(&members);
        explain_mode(
            &self.cluster,
            &self.bundle.pca,
            &self.bundle.scaler,
            mode,
            &rows,
            &self.bundle.shap,
            self.bundle.top,
        )
        .map_err(|e| e.to_string())
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

#[wasm_bindgen]
pub struct Demo {
    session: Session,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, JsError> {
        Session::new(seed.into())
            .map(|session| Demo { session })
            .map_err(|e| JsError::new(&e))
    }

    pub fn summary(&self) -> String {
        json(&self.session.summary())
    }

    /// Current clustering with 2-D coordinates for plotting.
    pub fn clustering(&self) -> String {
        json(&self.session.clustering())
    }

    pub fn kdistance(&self) -> Result<String, JsError> {
        self.session.kdistance().map(|k| json(&k)).map_err(|e| JsError::new(&e))
    }

    pub fn cluster(&mut self, epsilon: f64) -> Result<String, JsError> {
        self.session.cluster(epsilon).map(|c| json(&c)).map_err(|e| JsError::new(&e))
    }

    pub fn explain(&self, mode: u32) -> Result<String, JsError> {
        self.session.explain(mode as usize).map(|e| json(&e)).map_err(|e| JsError::new(&e))
    }
}
