//! Versioned JSON persistence of a fitted mode model.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dbscan::ClusterModel;
use crate::ingest::UnitMap;
use crate::pca::PcaModel;
use crate::preprocess::{ResampleSpec, Scaler};
use crate::shap::{Explanation, ShapConfig};
use crate::time::Timestamp;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelStoreError {
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("corrupt model document: {0}")]
    Corrupt(#[from] serde_json::Error),
    #[error("unsupported schema version {found} (this build reads version {supported})")]
    Version { found: u64, supported: u32 },
    #[error("inconsistent model bundle: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

/// Everything the online stage needs to reproduce the offline transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeModelBundle {
    pub schema_version: u32,
    pub created_at: Timestamp,
    pub resample: ResampleSpec,
    pub variables: Vec<String>,
    pub scaler: Scaler,
    pub pca: PcaModel,
    pub cluster: ClusterModel,
    pub shap: ShapConfig,
    pub unit_map: UnitMap,
    /// One per cluster point, in point order.
    pub sample_timestamps: Vec<Timestamp>,
    pub mode_explanations: BTreeMap<usize, Explanation>,
    pub component_explanation: Option<Explanation>,
    pub top: usize,
}

impl ModeModelBundle {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            out.push(format!("schema_version {} != {SCHEMA_VERSION}", self.schema_version));
        }
        if let Err(e) = self.resample.validate() {
            out.push(e.to_string());
        }
        out.extend(self.scaler.violations());
        out.extend(self.pca.violations());
        out.extend(self.cluster.violations());
        out.extend(self.shap.violations(self.scaler.len()));
        if self.variables != self.scaler.names() {
            out.push("variable list differs from scaler variables".into());
        }
        if self.scaler.len() != self.pca.n_variables() {
            out.push(format!(
                "scaler has {} variables but PCA has {} rows",
                self.scaler.len(),
                self.pca.n_variables()
            ));
        }
        if self.cluster.dimension() != self.pca.k {
            out.push(format!(
                "cluster points have dimension {} but k = {}",
                self.cluster.dimension(),
                self.pca.k
            ));
        }
        if self.sample_timestamps.len() != self.cluster.len() {
            out.push(format!(
                "{} sample timestamps for {} cluster points",
                self.sample_timestamps.len(),
                self.cluster.len()
            ));
        }
        if self.sample_timestamps.windows(2).any(|w| w[1] <= w[0]) {
            out.push("sample timestamps are not strictly increasing".into());
        }
        let live = self.cluster.mode_ids();
        for id in self.mode_explanations.keys() {
            if !live.contains(id) {
                out.push(format!("explanation stored for unknown mode {id}"));
            }
        }
        if self.top == 0 {
            out.push("top must be at least 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelStoreError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ModelStoreError::Invalid(v))
        }
    }

    pub fn to_json(&self) -> Result<String, ModelStoreError> {
        self.validate()?;
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<ModeModelBundle, ModelStoreError> {
        let doc: serde_json::Value = serde_json::from_str(text)?;
        match doc.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(found) => {
                return Err(ModelStoreError::Version {
                    found,
                    supported: SCHEMA_VERSION,
                })
            }
            None => {
                return Err(ModelStoreError::Corrupt(serde::de::Error::missing_field(
                    "schema_version",
                )))
            }
        }
        let bundle: ModeModelBundle = serde_json::from_value(doc)?;
        bundle.validate()?;
        Ok(bundle)
    }
}

/// Writes the bundle atomically: a sibling temp file renamed into place.
pub fn save(bundle: &ModeModelBundle, path: &Path) -> Result<(), ModelStoreError> {
    let text = bundle.to_json()?;
    let io_err = |source| ModelStoreError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let write = || -> io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(e)
    })
}

pub fn load(path: &Path) -> Result<ModeModelBundle, ModelStoreError> {
    let text = fs::read_to_string(path).map_err(|source| ModelStoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ModeModelBundle::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dbscan::dbscan_fit;
    use crate::ingest::{UnitTag, VariableMeta};
    use crate::matrix::Matrix;
    use crate::pca::{ComponentPolicy, PcaModel};

    fn bundle() -> ModeModelBundle {
        let x = Matrix::from_rows(&[
            [1.0, 0.3, -0.7],
            [-0.4, 1.1, 0.2],
            [0.1, -0.9, 1.3],
            [-0.7, -0.5, -0.8],
        ]);
        let pca = PcaModel::fit(&x, ComponentPolicy::Fixed(2)).unwrap();
        let z = pca.project(&x).unwrap();
        let cluster = dbscan_fit(&z, 0.5, 1).unwrap();
        let variables = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        ModeModelBundle {
            schema_version: SCHEMA_VERSION,
            created_at: Timestamp(3 * 43_200),
            resample: ResampleSpec::twelve_hours(),
            scaler: Scaler {
                variables: variables.iter().map(|n| VariableMeta::new(n.as_str(), UnitTag::Biological)).collect(),
                means: vec![0.1, 1.0 / 3.0, 2.0f64.sqrt()],
                stds: vec![1.0, 0.7, 1e-3],
            },
            variables,
            pca,
            cluster,
            shap: ShapConfig::default(),
            unit_map: UnitMap::new(),
            sample_timestamps: (0..4).map(|i| Timestamp(i * 43_200)).collect(),
            mode_explanations: BTreeMap::new(),
            component_explanation: None,
            top: 10,
        }
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let b = bundle();
        let back = ModeModelBundle::from_json(&b.to_json().unwrap()).unwrap();
        assert_eq!(back, b);
        for (x, y) in back.pca.loadings.as_slice().iter().zip(b.pca.loadings.as_slice()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut b = bundle();
        b.pca.k = 1;
        b.pca.loadings = Matrix::from_rows(&[[1.0], [0.0], [0.0]]);
        let err = b.to_json().unwrap_err();
        assert!(err.to_string().contains("dimension 2 but k = 1"), "{err}");
    }

    #[test]
    fn future_version_rejected() {
        let text = bundle().to_json().unwrap().replacen("\"schema_version\": 1", "\"schema_version\": 2", 1);
        assert!(matches!(
            ModeModelBundle::from_json(&text),
            Err(ModelStoreError::Version { found: 2, .. })
        ));
    }

    #[test]
    fn truncated_is_corrupt() {
        let text = bundle().to_json().unwrap();
        let cut = &text[..text.len() / 2];
        assert!(matches!(ModeModelBundle::from_json(cut), Err(ModelStoreError::Corrupt(_))));
    }

    #[test]
    fn zero_std_names_variable() {
        let mut b = bundle();
        b.scaler.stds[1] = 0.0;
        let text = serde_json::to_string(&b).unwrap();
        let err = ModeModelBundle::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("\"b\""), "{err}");
    }

    #[test]
    fn full_scale_bundle_fits_in_ten_megabytes() {
        use crate::dbscan::{ClusterModel, Label};
        use crate::shap::{ExplanationTarget, RankedVariable};
        use rand::{Rng, SeedableRng};

        let (m, k, n) = (453, 7, 730);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let variables: Vec<String> = (0..m).map(|i| format!("BIO_{i:04}")).collect();
        let mut eigenvalues: Vec<f64> = draw(m).into_iter().map(f64::abs).collect();
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let ranking = |mode| Explanation {
            target: ExplanationTarget::Mode(mode),
            ranking: (0..10)
                .map(|r| RankedVariable {
                    rank: r + 1,
                    variable: variables[r].clone(),
                    score: 1.0 / (r + 1) as f64,
                    unit_tag: UnitTag::Biological,
                })
                .collect(),
        };
        let b = ModeModelBundle {
            schema_version: SCHEMA_VERSION,
            created_at: Timestamp(n as i64 * 43_200),
            resample: ResampleSpec::twelve_hours(),
            scaler: Scaler {
                variables: variables.iter().map(|v| VariableMeta::new(v.as_str(), UnitTag::Biological)).collect(),
                means: draw(m),
                stds: draw(m).into_iter().map(|v| v.abs() + 0.1).collect(),
            },
            variables: variables.clone(),
            pca: PcaModel {
                loadings: Matrix::from_row_major(m, k, draw(m * k)).unwrap(),
                eigenvalues,
                k,
                explained_ratio: 0.8,
            },
            cluster: ClusterModel {
                epsilon: 2.5,
                min_points: 1,
                points: Matrix::from_row_major(n, k, draw(n * k)).unwrap(),
                labels: (0..n).map(|i| Label::Mode(i % 5)).collect(),
                next_mode_id: 5,
            },
            shap: ShapConfig::default(),
            unit_map: UnitMap::new(),
            sample_timestamps: (0..n as i64).map(|i| Timestamp(i * 43_200)).collect(),
            mode_explanations: (0..5).map(|id| (id, ranking(id))).collect(),
            component_explanation: None,
            top: 10,
        };
        let text = b.to_json().unwrap();
        assert!(text.len() < 10_000_000, "{} bytes", text.len());
        assert_eq!(ModeModelBundle::from_json(&text).unwrap(), b);
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save(&bundle(), &path).unwrap();
        assert_eq!(load(&path).unwrap(), bundle());
        assert!(!dir.path().join("model.json.tmp").exists());
    }
}
