//! Operation-mode discovery for industrial time series.

pub mod dbscan;
pub mod export;
pub mod ingest;
pub mod knee;
pub mod matrix;
pub mod modelstore;
pub mod pca;
pub mod pipeline;
pub mod preprocess;
pub mod shap;
pub mod synthgen;
pub mod time;
