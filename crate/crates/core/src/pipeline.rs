//! Offline fit, online assignment and full rebuild.

use std::collections::BTreeMap;

use log::{debug, info};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dbscan::{choose_epsilon, dbscan_fit, k_distance, spanning_epsilon, ClusterModel, DbscanError, KDistanceCurve, Label, Outcome};
use crate::ingest::{IngestError, TimeSeriesTable, UnitMap};
use crate::matrix::Matrix;
use crate::modelstore::{ModeModelBundle, ModelStoreError, SCHEMA_VERSION};
use crate::pca::{ComponentPolicy, PcaError, PcaModel, ScreePoint};
use crate::preprocess::{
    apply_scaler, clean_variables, drop_constant, fit_scaler, impute, resample, to_matrix, CleaningReport,
    PreprocessError, RemovalReason, RemovedVariable, ResampleSpec, Scaler,
};
use crate::shap::{explain_components, explain_mode, ComponentWeighting, Explanation, ShapConfig, ShapError};
use crate::time::{Duration, Timestamp};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: {source}")]
    Preprocess {
        stage: &'static str,
        source: PreprocessError,
    },
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("pca: {0}")]
    Pca(#[from] PcaError),
    #[error("dbscan: {0}")]
    Dbscan(#[from] DbscanError),
    #[error("shap: {0}")]
    Shap(#[from] ShapError),
    #[error("modelstore: {0}")]
    Store(#[from] ModelStoreError),
    #[error("config: {0}")]
    Config(String),
    #[error("schema drift: table lacks model variables {0:?}")]
    Drift(Vec<String>),
    #[error("online: window {window} is not after the model's last sample {last}")]
    Order { window: Timestamp, last: Timestamp },
}

fn stage(stage: &'static str) -> impl FnOnce(PreprocessError) -> PipelineError {
    move |source| PipelineError::Preprocess { stage, source }
}

/// Attribution settings exposed in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapOptions {
    pub coalition_budget: usize,
    pub exact_threshold: usize,
    pub max_samples: usize,
    pub component_weighting: ComponentWeighting,
}

impl Default for ShapOptions {
    fn default() -> Self {
        let d = ShapConfig::default();
        ShapOptions {
            coalition_budget: d.coalition_budget,
            exact_threshold: d.exact_threshold,
            max_samples: d.max_samples,
            component_weighting: d.component_weighting,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub missing_threshold: f64,
    pub exclude: Vec<String>,
    pub window: Duration,
    /// Window anchor; `None` picks 08:00 for 12 h windows and midnight otherwise.
    pub anchor_offset: Option<Duration>,
    pub min_coverage: f64,
    pub components: ComponentPolicy,
    /// Fixed neighbourhood radius; `None` takes the k-distance knee.
    pub epsilon: Option<f64>,
    /// The knee is trusted only when the largest k-distance is at least this
    /// multiple of it; otherwise nothing stands apart and the radius that
    /// joins all samples into one mode is used.
    pub min_tail_ratio: f64,
    pub min_points: usize,
    /// Neighbour rank of the k-distance curve; `None` uses `min_points`.
    pub k_neighbors: Option<usize>,
    pub top: usize,
    pub seed: u64,
    pub shap: ShapOptions,
    /// Explain every online sample, not only new and merged modes.
    pub explain_all_online: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            missing_threshold: 0.01,
            exclude: Vec::new(),
            window: Duration::hours(12),
            anchor_offset: None,
            min_coverage: 0.5,
            components: ComponentPolicy::Elbow,
            epsilon: None,
            min_tail_ratio: 4.0,
            min_points: 1,
            k_neighbors: None,
            top: 10,
            seed: 0,
            shap: ShapOptions::default(),
            explain_all_online: false,
        }
    }
}

impl PipelineConfig {
    pub fn resample_spec(&self) -> ResampleSpec {
        let mut spec = ResampleSpec::new(self.window);
        if let Some(off) = self.anchor_offset {
            spec.anchor_offset = off;
        }
        spec.min_coverage = self.min_coverage;
        spec
    }

    pub fn shap_config(&self) -> ShapConfig {
        ShapConfig {
            background: None,
            coalition_budget: self.shap.coalition_budget,
            exact_threshold: self.shap.exact_threshold,
            seed: self.seed,
            max_samples: self.shap.max_samples,
            component_weighting: self.shap.component_weighting,
        }
    }

    pub fn k_neighbors(&self) -> usize {
        self.k_neighbors.unwrap_or(self.min_points)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut bad = Vec::new();
        if !(0.0..=1.0).contains(&self.missing_threshold) {
            bad.push(format!("missing_threshold {} outside [0, 1]", self.missing_threshold));
        }
        if let Err(e) = self.resample_spec().validate() {
            bad.push(e.to_string());
        }
        if let Some(eps) = self.epsilon {
            if !(eps.is_finite() && eps > 0.0) {
                bad.push(format!("epsilon {eps} must be positive"));
            }
        }
        if !(self.min_tail_ratio.is_finite() && self.min_tail_ratio >= 0.0) {
            bad.push(format!("min_tail_ratio {} must be finite and non-negative", self.min_tail_ratio));
        }
        if self.min_points == 0 {
            bad.push("min_points must be at least 1".into());
        }
        if self.k_neighbors() == 0 {
            bad.push("k_neighbors must be at least 1".into());
        }
        if self.top == 0 {
            bad.push("top must be at least 1".into());
        }
        if let ComponentPolicy::Fixed(0) = self.components {
            bad.push("fixed component count must be at least 1".into());
        }
        if self.shap.exact_threshold == 0 || self.shap.max_samples == 0 {
            bad.push("shap exact_threshold and max_samples must be at least 1".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Config(bad.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonSource {
    Knee,
    Fixed,
    /// No separated tail on the k-distance curve; one mode.
    Spanning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineReport {
    pub cleaning: CleaningReport,
    pub n_samples: usize,
    pub n_variables: usize,
    pub scree: Vec<ScreePoint>,
    pub k: usize,
    pub explained_ratio: f64,
    pub epsilon: f64,
    pub epsilon_source: EpsilonSource,
    pub k_distance: KDistanceCurve,
    pub mode_count: usize,
    pub mode_sizes: BTreeMap<usize, usize>,
    pub mode_explanations: Vec<Explanation>,
    pub component_explanation: Explanation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineEvent {
    pub timestamp: Timestamp,
    pub outcome: Outcome,
    pub coordinates: Vec<f64>,
    pub explanation: Option<Explanation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Migration {
    /// Old mode continues as (or was absorbed into) `new`.
    Mapped {
        old: usize,
        new: usize,
        overlap: usize,
        old_size: usize,
    },
    Retired { old: usize, old_size: usize },
    Emerged { new: usize, size: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeMigrationReport {
    pub entries: Vec<Migration>,
}

impl ModeMigrationReport {
    pub fn mapped_to(&self, old: usize) -> Option<usize> {
        self.entries.iter().find_map(|e| match e {
            Migration::Mapped { old: o, new, .. } if *o == old => Some(*new),
            _ => None,
        })
    }

    pub fn emerged(&self) -> Vec<usize> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                Migration::Emerged { new, .. } => Some(*new),
                _ => None,
            })
            .collect()
    }
}

/// Standardized model-space samples ready for projection.
struct Prepared {
    timestamps: Vec<Timestamp>,
    z: Matrix,
}

/// Cleaning, imputation, resampling and scaler fit for the offline stage.
fn prepare_offline(
    table: TimeSeriesTable,
    config: &PipelineConfig,
) -> Result<(Prepared, Scaler, CleaningReport), PipelineError> {
    let spec = config.resample_spec();
    let (table, mut cleaning) =
        clean_variables(table, config.missing_threshold, &config.exclude).map_err(stage("clean"))?;
    debug!("cleaning kept {} variables", cleaning.kept_count);
    let table = impute(table).map_err(stage("impute"))?;
    let windows = resample(&table, &spec).map_err(stage("resample"))?;
    drop(table);
    if windows.n_samples() < 2 {
        return Err(PipelineError::Preprocess {
            stage: "resample",
            source: PreprocessError::EmptyResult(format!(
                "{} window(s) of {}; at least 2 are needed",
                windows.n_samples(),
                spec.window
            )),
        });
    }
    let windows = impute(windows).map_err(stage("impute"))?;
    let (windows, flat) = drop_constant(windows);
    for name in flat {
        cleaning.kept.retain(|k| *k != name);
        cleaning.removed.push(RemovedVariable {
            name,
            reason: RemovalReason::AllConstant,
        });
    }
    cleaning.kept_count = cleaning.kept.len();
    if windows.n_variables() == 0 {
        return Err(PipelineError::Preprocess {
            stage: "resample",
            source: PreprocessError::EmptyResult("every variable is constant after resampling".into()),
        });
    }
    let scaler = fit_scaler(&windows).map_err(stage("scale"))?;
    let z = apply_scaler(&windows, &scaler).map_err(stage("scale"))?;
    let z = to_matrix(&z).map_err(stage("scale"))?;
    Ok((
        Prepared {
            timestamps: windows.timestamps().to_vec(),
            z,
        },
        scaler,
        cleaning,
    ))
}

/// Offline stage: clean → impute → resample → scale → PCA → DBSCAN → SHAP.
pub fn fit_offline(
    table: TimeSeriesTable,
    config: &PipelineConfig,
) -> Result<(ModeModelBundle, OfflineReport), PipelineError> {
    config.validate()?;
    let (prep, scaler, cleaning) = prepare_offline(table, config)?;
    let (n, m) = (prep.z.rows(), prep.z.cols());
    info!("fitting {n} samples x {m} variables");

    let pca = PcaModel::fit(&prep.z, config.components)?;
    let scores = pca.project(&prep.z)?;
    info!("kept {} components ({:.2}% variance)", pca.k, 100.0 * pca.explained_ratio);

    let curve = k_distance(&scores, config.k_neighbors())?;
    let (epsilon, epsilon_source) = match config.epsilon {
        Some(e) => (e, EpsilonSource::Fixed),
        None => {
            let knee = choose_epsilon(&curve)?;
            let top = curve.sorted_distances.last().copied().unwrap_or(knee);
            if top >= config.min_tail_ratio * knee {
                (knee, EpsilonSource::Knee)
            } else {
                info!("k-distance tail only {:.2}x the knee; treating the data as one mode", top / knee);
                (spanning_epsilon(&scores, config.min_points)?, EpsilonSource::Spanning)
            }
        }
    };
    let cluster = dbscan_fit(&scores, epsilon, config.min_points)?;
    info!("epsilon {epsilon:.6}: {} modes", cluster.mode_count());

    let shap = config.shap_config();
    let component_explanation = explain_components(&pca, &scaler, &prep.z, &shap, config.top)?;
    let mut mode_explanations = BTreeMap::new();
    for id in cluster.mode_ids() {
        let members = prep.z.select_rows(&cluster.members(id));
        debug!("explaining mode {id} ({} members)", members.rows());
        let e = explain_mode(&cluster, &pca, &scaler, id, &members, &shap, config.top)?;
        mode_explanations.insert(id, e);
    }

    let unit_map = unit_map_of(&scaler);
    let bundle = ModeModelBundle {
        schema_version: SCHEMA_VERSION,
        created_at: *prep.timestamps.last().expect("at least two samples"),
        resample: config.resample_spec(),
        variables: scaler.names(),
        scaler,
        pca,
        cluster,
        shap,
        unit_map,
        sample_timestamps: prep.timestamps,
        mode_explanations,
        component_explanation: Some(component_explanation.clone()),
        top: config.top,
    };
    bundle.validate()?;
    let report = OfflineReport {
        cleaning,
        n_samples: n,
        n_variables: m,
        scree: bundle.pca.scree(),
        k: bundle.pca.k,
        explained_ratio: bundle.pca.explained_ratio,
        epsilon,
        epsilon_source,
        k_distance: curve,
        mode_count: bundle.cluster.mode_count(),
        mode_sizes: bundle.cluster.mode_sizes(),
        mode_explanations: bundle.mode_explanations.values().cloned().collect(),
        component_explanation,
    };
    Ok((bundle, report))
}

fn unit_map_of(scaler: &Scaler) -> UnitMap {
    let mut map = UnitMap::new();
    for v in &scaler.variables {
        map.insert(v.name.clone(), v.unit_tag);
    }
    map
}

/// Resamples and standardizes new data with the bundle's fitted transform.
fn prepare_online(bundle: &ModeModelBundle, table: &TimeSeriesTable) -> Result<Prepared, PipelineError> {
    let selected = table.select(&bundle.variables).map_err(PipelineError::Drift)?;
    let selected = impute(selected).map_err(stage("impute"))?;
    let windows = resample(&selected, &bundle.resample).map_err(stage("resample"))?;
    drop(selected);
    let windows = impute(windows).map_err(stage("impute"))?;
    let z = apply_scaler(&windows, &bundle.scaler).map_err(stage("scale"))?;
    let z = to_matrix(&z).map_err(stage("scale"))?;
    Ok(Prepared {
        timestamps: windows.timestamps().to_vec(),
        z,
    })
}

/// Window timestamps and standardized rows of `table` under the bundle's transform.
pub fn standardize(bundle: &ModeModelBundle, table: &TimeSeriesTable) -> Result<(Vec<Timestamp>, Matrix), PipelineError> {
    let p = prepare_online(bundle, table)?;
    Ok((p.timestamps, p.z))
}

/// Online stage: each new window is projected and assigned incrementally.
///
/// New and merged modes are explained on the triggering sample; joined
/// samples reuse the stored explanation of their mode.
pub fn process_online(
    mut bundle: ModeModelBundle,
    table: &TimeSeriesTable,
    config: &PipelineConfig,
) -> Result<(ModeModelBundle, Vec<OnlineEvent>), PipelineError> {
    if table.n_samples() == 0 {
        return Ok((bundle, Vec::new()));
    }
    let prep = prepare_online(&bundle, table)?;
    if let (Some(&first), Some(&last)) = (prep.timestamps.first(), bundle.sample_timestamps.last()) {
        if first <= last {
            return Err(PipelineError::Order { window: first, last });
        }
    }
    let mut events = Vec::with_capacity(prep.timestamps.len());
    for (i, &t) in prep.timestamps.iter().enumerate() {
        let z = prep.z.row(i);
        let coords = bundle.pca.project_row(z);
        let outcome = bundle.cluster.assign_incremental(&coords)?;
        bundle.sample_timestamps.push(t);
        let explain_now = config.explain_all_online || !matches!(outcome, Outcome::Joined(_));
        if let Outcome::Merged { from, into } = &outcome {
            for id in from.iter().filter(|id| *id != into) {
                bundle.mode_explanations.remove(id);
            }
        }
        let explanation = if explain_now {
            let sample = Matrix::from_rows(&[z]);
            let e = explain_mode(
                &bundle.cluster,
                &bundle.pca,
                &bundle.scaler,
                outcome.mode(),
                &sample,
                &bundle.shap,
                bundle.top,
            )?;
            if !matches!(outcome, Outcome::Joined(_)) {
                bundle.mode_explanations.insert(outcome.mode(), e.clone());
            }
            Some(e)
        } else {
            bundle.mode_explanations.get(&outcome.mode()).cloned()
        };
        debug!("{t}: {outcome:?}");
        events.push(OnlineEvent {
            timestamp: t,
            outcome,
            coordinates: coords,
            explanation,
        });
    }
    bundle.validate()?;
    Ok((bundle, events))
}

/// Full refit on the extended history plus the old-to-new mode mapping.
pub fn rebuild(
    old: &ModeModelBundle,
    full_table: TimeSeriesTable,
    config: &PipelineConfig,
) -> Result<(ModeModelBundle, OfflineReport, ModeMigrationReport), PipelineError> {
    let (bundle, report) = fit_offline(full_table, config)?;
    let migration = migrate(old, &bundle);
    Ok((bundle, report, migration))
}

fn labels_by_time(b: &ModeModelBundle) -> BTreeMap<Timestamp, Label> {
    b.sample_timestamps.iter().copied().zip(b.cluster.labels.iter().copied()).collect()
}

/// Maps each old mode to the new mode sharing most of its samples (ties to
/// the lower new id). Samples are matched by window timestamp.
pub fn migrate(old: &ModeModelBundle, new: &ModeModelBundle) -> ModeMigrationReport {
    let new_labels = labels_by_time(new);
    let mut overlaps: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    let mut old_sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for (t, l) in old.sample_timestamps.iter().zip(&old.cluster.labels) {
        let Label::Mode(o) = l else { continue };
        *old_sizes.entry(*o).or_default() += 1;
        if let Some(Label::Mode(n)) = new_labels.get(t) {
            *overlaps.entry(*o).or_default().entry(*n).or_default() += 1;
        }
    }
    let mut entries = Vec::new();
    let mut hit = std::collections::BTreeSet::new();
    for (&o, &size) in &old_sizes {
        let best = overlaps
            .get(&o)
            .and_then(|c| c.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))));
        match best {
            Some((&n, &overlap)) => {
                hit.insert(n);
                entries.push(Migration::Mapped {
                    old: o,
                    new: n,
                    overlap,
                    old_size: size,
                });
            }
            None => entries.push(Migration::Retired { old: o, old_size: size }),
        }
    }
    for (n, size) in new.cluster.mode_sizes() {
        if !hit.contains(&n) {
            entries.push(Migration::Emerged { new: n, size });
        }
    }
    ModeMigrationReport { entries }
}

/// Per-window ground truth comparison helper: mode id per sample, with
/// noise samples given fresh ids so each counts as its own group.
pub fn flat_labels(cluster: &ClusterModel) -> Vec<usize> {
    let mut next = cluster.next_mode_id;
    cluster
        .labels
        .iter()
        .map(|l| match l {
            Label::Mode(id) => *id,
            Label::Noise => {
                next += 1;
                next - 1
            }
        })
        .collect()
}
