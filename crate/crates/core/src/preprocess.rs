//! Variable cleaning, gap imputation, window resampling and z-score scaling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Column, TimeSeriesTable, VariableMeta};
use crate::matrix::Matrix;
use crate::time::{Duration, Timestamp};

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("no data left: {0}")]
    EmptyResult(String),
    #[error("variable {0:?} has no observed value to impute from")]
    Impute(String),
    #[error("variable {0:?} has zero variance")]
    Constant(String),
    #[error("variable {0:?} has fewer than two observed values")]
    TooFewValues(String),
    #[error("table lacks scaler variables {0:?}")]
    Schema(Vec<String>),
    #[error("table still has missing cells in {0:?}")]
    Missing(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RemovalReason {
    AllConstant,
    MissingRateExceeded,
    ManualExclude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedVariable {
    pub name: String,
    pub reason: RemovalReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub removed: Vec<RemovedVariable>,
    pub kept_count: usize,
    pub kept: Vec<String>,
}

/// Drops manually excluded variables, variables whose missing rate exceeds
/// `missing_threshold`, and variables that never change.
///
/// Reasons are checked in that order, so each removed variable carries exactly one.
pub fn clean_variables(
    table: TimeSeriesTable,
    missing_threshold: f64,
    manual_excludes: &[String],
) -> Result<(TimeSeriesTable, CleaningReport), PreprocessError> {
    if !(0.0..=1.0).contains(&missing_threshold) {
        return Err(PreprocessError::Parameter(format!(
            "missing_threshold {missing_threshold} outside [0, 1]"
        )));
    }
    let n = table.n_samples();
    let (timestamps, variables, columns) = table.into_parts();
    let mut report = CleaningReport::default();
    let mut kept_vars = Vec::new();
    let mut kept_cols = Vec::new();
    for (var, col) in variables.into_iter().zip(columns) {
        let rate = if n == 0 { 0.0 } else { col.missing_count() as f64 / n as f64 };
        let reason = if manual_excludes.contains(&var.name) {
            Some(RemovalReason::ManualExclude)
        } else if rate > missing_threshold {
            Some(RemovalReason::MissingRateExceeded)
        } else if col.is_constant() {
            Some(RemovalReason::AllConstant)
        } else {
            None
        };
        match reason {
            Some(reason) => report.removed.push(RemovedVariable {
                name: var.name,
                reason,
            }),
            None => {
                report.kept.push(var.name.clone());
                kept_vars.push(var);
                kept_cols.push(col);
            }
        }
    }
    report.kept_count = kept_vars.len();
    if kept_vars.is_empty() {
        return Err(PreprocessError::EmptyResult(
            "cleaning removed every variable".into(),
        ));
    }
    let table = TimeSeriesTable::new(timestamps, kept_vars, kept_cols)
        .expect("subset of a valid table is valid");
    Ok((table, report))
}

/// Fills missing cells: interior gaps by time-weighted linear interpolation
/// between the nearest observed neighbours, leading gaps with the next
/// observed value, trailing gaps with the previous one.
pub fn impute(table: TimeSeriesTable) -> Result<TimeSeriesTable, PreprocessError> {
    let (timestamps, variables, mut columns) = table.into_parts();
    for (var, col) in variables.iter().zip(columns.iter_mut()) {
        impute_column(&timestamps, col).map_err(|()| PreprocessError::Impute(var.name.clone()))?;
    }
    Ok(TimeSeriesTable::new(timestamps, variables, columns).expect("shape unchanged"))
}

fn impute_column(ts: &[Timestamp], col: &mut Column) -> Result<(), ()> {
    if col.missing_count() == 0 {
        return Ok(());
    }
    if col.is_empty() {
        return Ok(());
    }
    let first = col.missing.iter().position(|m| !m).ok_or(())?;
    let first_val = col.values[first];
    for i in 0..first {
        col.values[i] = first_val;
        col.missing[i] = false;
    }
    let mut prev = first;
    let mut i = first + 1;
    while i < col.len() {
        if !col.missing[i] {
            if i > prev + 1 {
                let (t0, t1) = (ts[prev].0 as f64, ts[i].0 as f64);
                let (v0, v1) = (col.values[prev], col.values[i]);
                for g in prev + 1..i {
                    let w = (ts[g].0 as f64 - t0) / (t1 - t0);
                    col.values[g] = v0 + w * (v1 - v0);
                    col.missing[g] = false;
                }
            }
            prev = i;
        }
        i += 1;
    }
    let last_val = col.values[prev];
    for g in prev + 1..col.len() {
        col.values[g] = last_val;
        col.missing[g] = false;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Aggregator {
    #[default]
    Mean,
}

/// Anchor-aligned resampling windows.
///
/// Window boundaries are `anchor_offset + i * window` from midnight UTC,
/// so a 12 h window with an 8 h offset yields 08:00–20:00 and 20:00–08:00.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleSpec {
    pub window: Duration,
    pub anchor_offset: Duration,
    #[serde(default)]
    pub aggregator: Aggregator,
    pub min_coverage: f64,
}

impl ResampleSpec {
    /// Window with the default anchor for its length: 08:00/20:00 for 12 h, midnight otherwise.
    pub fn new(window: Duration) -> Self {
        let anchor_offset = if window == Duration::hours(12) {
            Duration::hours(8)
        } else {
            Duration(0)
        };
        ResampleSpec {
            window,
            anchor_offset,
            aggregator: Aggregator::Mean,
            min_coverage: 0.5,
        }
    }

    pub fn twelve_hours() -> Self {
        Self::new(Duration::hours(12))
    }

    pub fn daily() -> Self {
        Self::new(Duration::DAY)
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.window.0 <= 0 {
            return Err(PreprocessError::Parameter("window must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.min_coverage) {
            return Err(PreprocessError::Parameter(format!(
                "min_coverage {} outside [0, 1]",
                self.min_coverage
            )));
        }
        if self.anchor_offset.0 < 0 {
            return Err(PreprocessError::Parameter("anchor offset must be non-negative".into()));
        }
        Ok(())
    }

    pub fn window_start(&self, t: Timestamp) -> Timestamp {
        let w = self.window.0;
        let off = self.anchor_offset.0.rem_euclid(w);
        Timestamp((t.0 - off).div_euclid(w) * w + off)
    }
}

/// Typical spacing of the table's timestamps (median positive difference).
pub fn sampling_period(ts: &[Timestamp]) -> Option<i64> {
    if ts.len() < 2 {
        return None;
    }
    let mut d: Vec<i64> = ts.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let mid = d.len() / 2;
    Some(*d.select_nth_unstable(mid).1)
}

/// Averages observed values over anchor-aligned windows.
///
/// Windows whose timestamp coverage is below `min_coverage` are dropped;
/// inside a kept window a variable with too few observed values gets a
/// missing cell. Output timestamps are window starts.
pub fn resample(table: &TimeSeriesTable, spec: &ResampleSpec) -> Result<TimeSeriesTable, PreprocessError> {
    spec.validate()?;
    let ts = table.timestamps();
    if ts.is_empty() {
        return Err(PreprocessError::EmptyResult("table has no rows to resample".into()));
    }
    let w = spec.window.0;
    let period = sampling_period(ts).unwrap_or(w).max(1);
    let expected = (w as f64 / period as f64).max(1.0);

    let first = spec.window_start(ts[0]);
    let last = spec.window_start(*ts.last().unwrap());
    let n_windows = ((last.0 - first.0) / w + 1) as usize;
    // row ranges per window
    let mut bounds = vec![0usize; n_windows + 1];
    {
        let mut r = 0;
        for (k, b) in bounds.iter_mut().enumerate().skip(1) {
            let end = first.0 + k as i64 * w;
            while r < ts.len() && ts[r].0 < end {
                r += 1;
            }
            *b = r;
        }
    }
    let kept: Vec<usize> = (0..n_windows)
        .filter(|&k| {
            let count = (bounds[k + 1] - bounds[k]) as f64;
            (count / expected).min(1.0) >= spec.min_coverage && (count > 0.0 || spec.min_coverage == 0.0)
        })
        .collect();
    if kept.is_empty() {
        return Err(PreprocessError::EmptyResult(format!(
            "no {} window reaches coverage {}",
            spec.window, spec.min_coverage
        )));
    }
    let out_ts: Vec<Timestamp> = kept.iter().map(|&k| Timestamp(first.0 + k as i64 * w)).collect();
    let columns = table
        .columns()
        .iter()
        .map(|col| {
            let mut cells = Vec::with_capacity(kept.len());
            for &k in &kept {
                let (lo, hi) = (bounds[k], bounds[k + 1]);
                let mut sum = 0.0;
                let mut count = 0usize;
                for i in lo..hi {
                    if !col.missing[i] {
                        sum += col.values[i];
                        count += 1;
                    }
                }
                let coverage = (count as f64 / expected).min(1.0);
                cells.push((count > 0 && coverage >= spec.min_coverage).then(|| sum / count as f64));
            }
            Column::from_options(&cells)
        })
        .collect();
    Ok(TimeSeriesTable::new(out_ts, table.variables().to_vec(), columns).expect("valid by construction"))
}

/// Per-variable z-score parameters, in fitted variable order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub variables: Vec<VariableMeta>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Scaler {
    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }

    /// Lists every invariant breach; empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.means.len() != self.variables.len() || self.stds.len() != self.variables.len() {
            out.push(format!(
                "scaler has {} variables, {} means, {} stds",
                self.variables.len(),
                self.means.len(),
                self.stds.len()
            ));
            return out;
        }
        for ((v, mu), sd) in self.variables.iter().zip(&self.means).zip(&self.stds) {
            if !(sd.is_finite() && *sd > 0.0) {
                out.push(format!("scaler std for variable {:?} is {sd}, must be > 0", v.name));
            }
            if !mu.is_finite() {
                out.push(format!("scaler mean for variable {:?} is not finite", v.name));
            }
        }
        out
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(x, (mu, sd))| (x - mu) / sd)
            .collect()
    }

    pub fn inverse_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(z, (mu, sd))| z * sd + mu)
            .collect()
    }
}

/// Column mean and sample standard deviation (divisor n − 1) over observed cells.
pub fn fit_scaler(table: &TimeSeriesTable) -> Result<Scaler, PreprocessError> {
    let mut means = Vec::with_capacity(table.n_variables());
    let mut stds = Vec::with_capacity(table.n_variables());
    for (var, col) in table.variables().iter().zip(table.columns()) {
        let observed = || {
            col.values
                .iter()
                .zip(&col.missing)
                .filter(|(_, &m)| !m)
                .map(|(v, _)| *v)
        };
        let n = observed().count();
        if n < 2 {
            return Err(PreprocessError::TooFewValues(var.name.clone()));
        }
        let mean = observed().sum::<f64>() / n as f64;
        let ss: f64 = observed().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        if !(sd > 0.0) || col.is_constant() {
            return Err(PreprocessError::Constant(var.name.clone()));
        }
        means.push(mean);
        stds.push(sd);
    }
    Ok(Scaler {
        variables: table.variables().to_vec(),
        means,
        stds,
    })
}

/// Standardizes the scaler's variables, reordered to scaler order.
/// Table columns the scaler does not know are left out of the result.
pub fn apply_scaler(table: &TimeSeriesTable, scaler: &Scaler) -> Result<TimeSeriesTable, PreprocessError> {
    map_scaled(table, scaler, |x, mu, sd| (x - mu) / sd)
}

/// Inverse of [`apply_scaler`].
pub fn inverse_scaler(table: &TimeSeriesTable, scaler: &Scaler) -> Result<TimeSeriesTable, PreprocessError> {
    map_scaled(table, scaler, |z, mu, sd| z * sd + mu)
}

fn map_scaled(
    table: &TimeSeriesTable,
    scaler: &Scaler,
    f: impl Fn(f64, f64, f64) -> f64,
) -> Result<TimeSeriesTable, PreprocessError> {
    let selected = table.select(&scaler.names()).map_err(PreprocessError::Schema)?;
    let (timestamps, _, columns) = selected.into_parts();
    let columns = columns
        .into_iter()
        .enumerate()
        .map(|(j, c)| {
            let (mu, sd) = (scaler.means[j], scaler.stds[j]);
            Column {
                values: c
                    .values
                    .iter()
                    .zip(&c.missing)
                    .map(|(&x, &m)| if m { f64::NAN } else { f(x, mu, sd) })
                    .collect(),
                missing: c.missing,
            }
        })
        .collect();
    Ok(TimeSeriesTable::new(timestamps, scaler.variables.clone(), columns).expect("same shape"))
}

/// Dense `n_samples x n_variables` matrix of a fully observed table.
pub fn to_matrix(table: &TimeSeriesTable) -> Result<Matrix, PreprocessError> {
    let (n, m) = (table.n_samples(), table.n_variables());
    let mut out = Matrix::zeros(n, m);
    for (j, (var, col)) in table.variables().iter().zip(table.columns()).enumerate() {
        if col.missing_count() > 0 {
            return Err(PreprocessError::Missing(var.name.clone()));
        }
        for (i, v) in col.values.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    Ok(out)
}

/// Removes columns that became constant (e.g. after window averaging).
pub fn drop_constant(table: TimeSeriesTable) -> (TimeSeriesTable, Vec<String>) {
    let (timestamps, variables, columns) = table.into_parts();
    let mut dropped = Vec::new();
    let mut vars = Vec::new();
    let mut cols = Vec::new();
    for (v, c) in variables.into_iter().zip(columns) {
        if c.is_constant() {
            dropped.push(v.name);
        } else {
            vars.push(v);
            cols.push(c);
        }
    }
    (TimeSeriesTable::new(timestamps, vars, cols).expect("subset"), dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::UnitTag;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn table(cols: Vec<Vec<Option<f64>>>, step: i64) -> TimeSeriesTable {
        let n = cols.first().map_or(0, Vec::len);
        let ts = (0..n as i64).map(|i| Timestamp(i * step)).collect();
        let vars = (0..cols.len())
            .map(|j| VariableMeta::new(format!("v{j}"), UnitTag::Other))
            .collect();
        let cols = cols.iter().map(|c| Column::from_options(c)).collect();
        TimeSeriesTable::new(ts, vars, cols).unwrap()
    }

    fn observed(col: &Column) -> Vec<f64> {
        assert_eq!(col.missing_count(), 0);
        col.values.clone()
    }

    #[test]
    fn constant_zero_removed() {
        let t = table(
            vec![vec![Some(0.0); 4], vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0)]],
            60,
        );
        let (out, rep) = clean_variables(t, 0.01, &[]).unwrap();
        assert_eq!(out.n_variables(), 1);
        assert_eq!(rep.removed[0].reason, RemovalReason::AllConstant);
        assert_eq!(rep.kept_count + rep.removed.len(), 2);
    }

    #[test]
    fn missing_rate_above_threshold_removed() {
        let mut c: Vec<Option<f64>> = (0..100).map(|i| Some(i as f64)).collect();
        c[3] = None;
        c[7] = None;
        let good: Vec<Option<f64>> = (0..100).map(|i| Some((i * i) as f64)).collect();
        let (out, rep) = clean_variables(table(vec![c, good], 60), 0.01, &[]).unwrap();
        assert_eq!(out.names(), vec!["v1".to_string()]);
        assert_eq!(rep.removed[0].reason, RemovalReason::MissingRateExceeded);
    }

    #[test]
    fn clean_identity_and_manual_exclude() {
        let t = table(vec![vec![Some(1.0), Some(2.0)], vec![Some(3.0), Some(1.0)]], 60);
        let (out, rep) = clean_variables(t.clone(), 0.01, &[]).unwrap();
        assert_eq!(out, t);
        assert!(rep.removed.is_empty());
        let (_, rep) = clean_variables(t.clone(), 0.01, &["v0".into()]).unwrap();
        assert_eq!(rep.removed[0].reason, RemovalReason::ManualExclude);
        let err = clean_variables(t, 0.01, &["v0".into(), "v1".into()]).unwrap_err();
        assert!(matches!(err, PreprocessError::EmptyResult(_)));
    }

    #[test]
    fn impute_examples() {
        let t = impute(table(vec![vec![Some(1.0), None, Some(3.0)]], 60)).unwrap();
        assert_eq!(observed(t.column(0)), vec![1.0, 2.0, 3.0]);
        let t = impute(table(vec![vec![None, Some(5.0), Some(5.0)]], 60)).unwrap();
        assert_eq!(observed(t.column(0)), vec![5.0, 5.0, 5.0]);
        let t = impute(table(vec![vec![Some(7.0), Some(5.0), None]], 60)).unwrap();
        assert_eq!(observed(t.column(0)), vec![7.0, 5.0, 5.0]);
    }

    #[test]
    fn impute_two_gap_matches_linear_oracle() {
        let t = impute(table(vec![vec![Some(1.0), None, None, Some(4.0)]], 60)).unwrap();
        // closed form: v(t) = v0 + (t - t0) / (t1 - t0) * (v1 - v0)
        let oracle: Vec<f64> = (0..4).map(|i| 1.0 + i as f64 / 3.0 * 3.0).collect();
        for (a, b) in observed(t.column(0)).iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn impute_fully_missing_names_variable() {
        let err = impute(table(vec![vec![Some(1.0), Some(2.0)], vec![None, None]], 60)).unwrap_err();
        assert_eq!(err, PreprocessError::Impute("v1".into()));
    }

    #[test]
    fn resample_mean_of_window() {
        // two samples per 2-minute window
        let t = table(vec![vec![Some(2.0), Some(4.0), Some(10.0), Some(20.0)]], 60);
        let spec = ResampleSpec {
            window: Duration(120),
            anchor_offset: Duration(0),
            aggregator: Aggregator::Mean,
            min_coverage: 0.5,
        };
        let r = resample(&t, &spec).unwrap();
        assert_eq!(observed(r.column(0)), vec![3.0, 15.0]);
        assert_eq!(r.timestamps(), &[Timestamp(0), Timestamp(120)]);
    }

    #[test]
    fn resample_identity_at_sampling_period() {
        let t = table(vec![vec![Some(1.5), Some(-2.0), Some(3.25)]], 60);
        let spec = ResampleSpec {
            window: Duration(60),
            anchor_offset: Duration(0),
            aggregator: Aggregator::Mean,
            min_coverage: 1.0,
        };
        assert_eq!(resample(&t, &spec).unwrap(), t);
    }

    #[test]
    fn resample_low_cell_coverage_marks_missing() {
        let t = table(
            vec![vec![Some(1.0), None, None, None], vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0)]],
            60,
        );
        let spec = ResampleSpec {
            window: Duration(240),
            anchor_offset: Duration(0),
            aggregator: Aggregator::Mean,
            min_coverage: 0.5,
        };
        let r = resample(&t, &spec).unwrap();
        assert!(r.is_missing(0, 0));
        assert_eq!(r.value(0, 1), Some(2.5));
    }

    #[test]
    fn resample_too_short_for_full_window() {
        let t = table(vec![vec![Some(1.0), Some(2.0)]], 60);
        let spec = ResampleSpec {
            window: Duration::DAY,
            anchor_offset: Duration(0),
            aggregator: Aggregator::Mean,
            min_coverage: 1.0,
        };
        assert!(matches!(resample(&t, &spec), Err(PreprocessError::EmptyResult(_))));
    }

    #[test]
    fn window_anchors() {
        let spec = ResampleSpec::twelve_hours();
        let t = Timestamp::from_ymd_hms(2022, 8, 1, 7, 59, 0);
        assert_eq!(spec.window_start(t), Timestamp::from_ymd_hms(2022, 7, 31, 20, 0, 0));
        let t = Timestamp::from_ymd_hms(2022, 8, 1, 8, 0, 0);
        assert_eq!(spec.window_start(t), t);
        let t = Timestamp::from_ymd_hms(2022, 8, 1, 23, 0, 0);
        assert_eq!(
            ResampleSpec::daily().window_start(t),
            Timestamp::from_ymd_hms(2022, 8, 1, 0, 0, 0)
        );
    }

    #[test]
    fn scaler_two_points() {
        let s = fit_scaler(&table(vec![vec![Some(0.0), Some(2.0)]], 60)).unwrap();
        assert_eq!(s.means[0], 1.0);
        assert!((s.stds[0] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn scaler_rejects_constant() {
        let err = fit_scaler(&table(vec![vec![Some(5.0); 3]], 60)).unwrap_err();
        assert_eq!(err, PreprocessError::Constant("v0".into()));
    }

    #[test]
    fn scaler_monte_carlo() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let dist = Normal::new(3.0, 2.0).unwrap();
        let col: Vec<Option<f64>> = (0..1000).map(|_| Some(dist.sample(&mut rng))).collect();
        let s = fit_scaler(&table(vec![col], 60)).unwrap();
        assert!((s.means[0] - 3.0).abs() < 0.2, "mean {}", s.means[0]);
        assert!((s.stds[0] - 2.0).abs() < 0.2, "std {}", s.stds[0]);
    }

    #[test]
    fn apply_scaler_unit_points_and_schema() {
        let t = table(vec![vec![Some(1.0), Some(3.0), Some(5.0)], vec![Some(0.0), Some(1.0), Some(5.0)]], 60);
        let s = fit_scaler(&t).unwrap();
        let z = s.transform_row(&[s.means[0], s.means[1] + s.stds[1]]);
        assert_eq!(z, vec![0.0, 1.0]);

        let reordered = t.select(&["v1".into(), "v0".into()]).unwrap();
        assert_eq!(apply_scaler(&reordered, &s).unwrap(), apply_scaler(&t, &s).unwrap());
        let narrow = t.select(&["v1".into()]).unwrap();
        assert_eq!(
            apply_scaler(&narrow, &s).unwrap_err(),
            PreprocessError::Schema(vec!["v0".into()])
        );
    }
}
