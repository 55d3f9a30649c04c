//! Synthetic plant data with planted operating regimes and known labels.
//!
//! The baseline is a low-rank factor model: every variable is its own level
//! plus a loaded mix of shared factors plus independent noise. Factors carry
//! an annual drift, a daily cycle and an Ornstein-Uhlenbeck component.
//! Regimes then override the affected variables inside their time windows.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Column, TimeSeriesTable, UnitMap, UnitTag, VariableMeta};
use crate::preprocess::ResampleSpec;
use crate::time::{Duration, Timestamp};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid plant spec: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

/// A contiguous block of variables belonging to one facility unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitBlock {
    pub unit: UnitTag,
    pub prefix: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub count: usize,
    /// Probability that a variable loads on a given factor.
    pub density: f64,
    pub seasonal_amplitude: f64,
    pub daily_amplitude: f64,
    /// Stationary standard deviation of the OU component.
    pub jitter: f64,
    pub correlation_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum VariableSelector {
    All,
    /// The first `count` variables of a unit (all of them when `None`).
    Unit { unit: UnitTag, count: Option<usize> },
    Names { names: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeWindow {
    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t < self.end
    }
}

/// Inside its windows an affected variable reads
/// `level·μ + scale·(factor part) + offset·σ + noise_scale·(noise)`,
/// where `σ` is that variable's noise standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub name: String,
    pub windows: Vec<TimeWindow>,
    pub variables: VariableSelector,
    #[serde(default = "one")]
    pub level: f64,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default = "one")]
    pub noise_scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub units: Vec<UnitBlock>,
    pub start: Timestamp,
    pub period: Duration,
    pub span: Duration,
    pub factors: FactorSpec,
    /// Range of per-variable operating levels.
    pub level_range: (f64, f64),
    /// Range of the factor scale as a fraction of the level.
    pub variability_range: (f64, f64),
    /// Noise standard deviation in units of the factor scale.
    pub noise: f64,
    pub regimes: Vec<RegimeSpec>,
    /// Fraction of cells dropped at random.
    #[serde(default)]
    pub missing_rate: f64,
    /// Extra variables that never change.
    #[serde(default)]
    pub constant_columns: usize,
    /// Extra variables missing half of the time.
    #[serde(default)]
    pub gappy_columns: usize,
    pub seed: u64,
}

/// Generated table plus ground truth.
#[derive(Debug, Clone)]
pub struct Plant {
    pub table: TimeSeriesTable,
    /// 0 for baseline, `r + 1` inside regime `r`, one per row.
    pub labels: Vec<usize>,
    /// Affected variable names, one list per regime.
    pub regime_variables: Vec<Vec<String>>,
    pub unit_map: UnitMap,
}

const YEAR: f64 = 365.0 * 86_400.0;

impl PlantSpec {
    /// 453 variables, one-minute sampling, twelve months, four regimes.
    pub fn full(seed: u64) -> PlantSpec {
        let at = Timestamp::from_ymd_hms;
        let win = |start: Timestamp, hours: i64| TimeWindow {
            start,
            end: start.plus(Duration::hours(hours)),
        };
        PlantSpec {
            units: vec![
                block(UnitTag::PreprocessingThickening, "PT", 91),
                block(UnitTag::Biological, "BIO", 91),
                block(UnitTag::Drained, "DRN", 91),
                block(UnitTag::Digestion, "DIG", 90),
                block(UnitTag::PumpingArrival, "PMP", 90),
            ],
            start: at(2022, 8, 1, 8, 0, 0),
            period: Duration::MINUTE,
            span: Duration(365 * Duration::DAY.0),
            factors: FactorSpec {
                count: 7,
                density: 0.5,
                seasonal_amplitude: 1.0,
                daily_amplitude: 0.5,
                jitter: 0.14,
                correlation_time: Duration(300 * 60),
            },
            level_range: (10.0, 100.0),
            variability_range: (0.01, 0.03),
            noise: 4.0,
            regimes: vec![
                RegimeSpec {
                    name: "plant_outage".into(),
                    windows: vec![win(at(2022, 10, 12, 8, 0, 0), 12)],
                    variables: VariableSelector::All,
                    level: 0.0,
                    scale: 0.0,
                    offset: 0.0,
                    noise_scale: 0.05,
                },
                RegimeSpec {
                    name: "storm_inflow".into(),
                    windows: vec![win(at(2023, 1, 17, 20, 0, 0), 24)],
                    variables: VariableSelector::Unit {
                        unit: UnitTag::PumpingArrival,
                        count: Some(60),
                    },
                    level: 1.0,
                    scale: 1.0,
                    offset: 8.0,
                    noise_scale: 1.0,
                },
                RegimeSpec {
                    name: "digester_maintenance".into(),
                    windows: vec![win(at(2023, 3, 9, 8, 0, 0), 12)],
                    variables: VariableSelector::Unit {
                        unit: UnitTag::Digestion,
                        count: Some(60),
                    },
                    level: 1.0,
                    scale: 1.0,
                    offset: -6.0,
                    noise_scale: 1.0,
                },
                RegimeSpec {
                    name: "aeration_upset".into(),
                    windows: vec![win(at(2023, 5, 22, 8, 0, 0), 48)],
                    variables: VariableSelector::Unit {
                        unit: UnitTag::Biological,
                        count: Some(60),
                    },
                    level: 1.0,
                    scale: 1.0,
                    offset: 10.0,
                    noise_scale: 1.0,
                },
            ],
            missing_rate: 0.001,
            constant_columns: 0,
            gappy_columns: 0,
            seed,
        }
    }

    /// A quick desk-sized plant: 25 variables at 10-minute sampling over
    /// 60 days, three regimes, and a few cells and columns to clean.
    pub fn small(seed: u64) -> PlantSpec {
        let at = Timestamp::from_ymd_hms;
        let win = |start: Timestamp, hours: i64| TimeWindow {
            start,
            end: start.plus(Duration::hours(hours)),
        };
        PlantSpec {
            units: vec![
                block(UnitTag::PreprocessingThickening, "PT", 5),
                block(UnitTag::Biological, "BIO", 5),
                block(UnitTag::Drained, "DRN", 5),
                block(UnitTag::Digestion, "DIG", 5),
                block(UnitTag::PumpingArrival, "PMP", 5),
            ],
            start: at(2022, 8, 1, 8, 0, 0),
            period: Duration(10 * 60),
            span: Duration(60 * Duration::DAY.0),
            factors: FactorSpec {
                count: 3,
                density: 0.7,
                seasonal_amplitude: 0.0,
                daily_amplitude: 0.5,
                jitter: 0.14,
                correlation_time: Duration(300 * 60),
            },
            level_range: (10.0, 100.0),
            variability_range: (0.01, 0.03),
            noise: 4.0,
            regimes: vec![
                RegimeSpec {
                    name: "plant_outage".into(),
                    windows: vec![win(at(2022, 8, 12, 8, 0, 0), 12)],
                    variables: VariableSelector::All,
                    level: 0.0,
                    scale: 0.0,
                    offset: 0.0,
                    noise_scale: 0.05,
                },
                RegimeSpec {
                    name: "storm_inflow".into(),
                    windows: vec![win(at(2022, 8, 30, 20, 0, 0), 24)],
                    variables: VariableSelector::Unit {
                        unit: UnitTag::PumpingArrival,
                        count: None,
                    },
                    level: 1.0,
                    scale: 1.0,
                    offset: 8.0,
                    noise_scale: 1.0,
                },
                RegimeSpec {
                    name: "digester_maintenance".into(),
                    windows: vec![win(at(2022, 9, 18, 8, 0, 0), 12)],
                    variables: VariableSelector::Unit {
                        unit: UnitTag::Digestion,
                        count: None,
                    },
                    level: 1.0,
                    scale: 1.0,
                    offset: -6.0,
                    noise_scale: 1.0,
                },
            ],
            missing_rate: 0.002,
            constant_columns: 1,
            gappy_columns: 1,
            seed,
        }
    }

    pub fn n_variables(&self) -> usize {
        self.units.iter().map(|u| u.count).sum()
    }

    pub fn n_samples(&self) -> usize {
        if self.period.0 <= 0 {
            return 0;
        }
        (self.span.0 / self.period.0).max(0) as usize
    }

    pub fn end(&self) -> Timestamp {
        self.start.plus(self.span)
    }

    /// Names and units of the factor-model variables, in column order.
    pub fn variables(&self) -> Vec<VariableMeta> {
        let mut out = Vec::with_capacity(self.n_variables());
        for u in &self.units {
            for i in 0..u.count {
                out.push(VariableMeta::new(format!("{}_{:03}", u.prefix, i + 1), u.unit));
            }
        }
        out
    }

    pub fn unit_map(&self) -> UnitMap {
        let mut map = UnitMap::new();
        for u in &self.units {
            map.insert_prefix(format!("{}_", u.prefix), u.unit);
        }
        map
    }

    fn select(&self, vars: &[VariableMeta], sel: &VariableSelector) -> Result<Vec<usize>, String> {
        match sel {
            VariableSelector::All => Ok((0..vars.len()).collect()),
            VariableSelector::Unit { unit, count } => {
                let idx: Vec<usize> = (0..vars.len()).filter(|&i| vars[i].unit_tag == *unit).collect();
                let want = count.unwrap_or(idx.len());
                if idx.is_empty() || want > idx.len() || want == 0 {
                    return Err(format!("unit {unit} has {} variables, {want} requested", idx.len()));
                }
                Ok(idx[..want].to_vec())
            }
            VariableSelector::Names { names } => names
                .iter()
                .map(|n| {
                    vars.iter()
                        .position(|v| &v.name == n)
                        .ok_or_else(|| format!("unknown variable {n:?}"))
                })
                .collect(),
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let m = self.n_variables();
        if m == 0 {
            out.push("no variables".into());
        }
        if self.period.0 <= 0 {
            out.push("sampling period must be positive".into());
        } else if self.n_samples() < 2 {
            out.push("span must cover at least two samples".into());
        }
        if self.factors.count > m {
            out.push(format!("{} factors exceed {m} variables", self.factors.count));
        }
        if !(0.0..=1.0).contains(&self.factors.density) {
            out.push("factor density must lie in [0, 1]".into());
        }
        if self.factors.correlation_time.0 <= 0 {
            out.push("factor correlation time must be positive".into());
        }
        let (lo, hi) = self.level_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            out.push("level_range must be an ordered finite pair".into());
        }
        let (lo, hi) = self.variability_range;
        if !(lo >= 0.0 && hi.is_finite() && lo <= hi) {
            out.push("variability_range must be an ordered non-negative pair".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            out.push("noise must be finite and non-negative".into());
        }
        if !(0.0..0.5).contains(&self.missing_rate) {
            out.push("missing_rate must lie in [0, 0.5)".into());
        }
        let vars = self.variables();
        let mut names = std::collections::HashSet::new();
        for v in &vars {
            if !names.insert(&v.name) {
                out.push(format!("duplicate variable {:?}", v.name));
            }
        }
        let mut spans: Vec<(TimeWindow, &str)> = Vec::new();
        for r in &self.regimes {
            if r.windows.is_empty() {
                out.push(format!("regime {:?} has no windows", r.name));
            }
            for w in &r.windows {
                if w.start >= w.end || w.start < self.start || w.end > self.end() {
                    out.push(format!("regime {:?} window {}..{} outside the span", r.name, w.start, w.end));
                }
                spans.push((*w, &r.name));
            }
            if let Err(e) = self.select(&vars, &r.variables) {
                out.push(format!("regime {:?}: {e}", r.name));
            }
            if ![r.level, r.scale, r.offset, r.noise_scale].iter().all(|v| v.is_finite()) {
                out.push(format!("regime {:?} has non-finite parameters", r.name));
            }
        }
        spans.sort_by_key(|(w, _)| w.start);
        for pair in spans.windows(2) {
            if pair[1].0.start < pair[0].0.end {
                out.push(format!("regime windows of {:?} and {:?} overlap", pair[0].1, pair[1].1));
            }
        }
        out
    }
}

fn block(unit: UnitTag, prefix: &str, count: usize) -> UnitBlock {
    UnitBlock {
        unit,
        prefix: prefix.into(),
        count,
    }
}

fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

/// Regime label of each timestamp: 0 outside every regime.
pub fn regime_labels(spec: &PlantSpec, timestamps: &[Timestamp]) -> Vec<usize> {
    timestamps
        .iter()
        .map(|&t| {
            spec.regimes
                .iter()
                .position(|r| r.windows.iter().any(|w| w.contains(t)))
                .map_or(0, |r| r + 1)
        })
        .collect()
}

/// Majority label of each resampling window that survives `resample`.
pub fn window_labels(
    timestamps: &[Timestamp],
    labels: &[usize],
    spec: &ResampleSpec,
    window_starts: &[Timestamp],
) -> Vec<usize> {
    let mut counts: BTreeMap<Timestamp, BTreeMap<usize, usize>> = BTreeMap::new();
    for (&t, &l) in timestamps.iter().zip(labels) {
        *counts.entry(spec.window_start(t)).or_default().entry(l).or_default() += 1;
    }
    window_starts
        .iter()
        .map(|w| {
            counts.get(w).map_or(0, |c| {
                c.iter()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                    .map_or(0, |(l, _)| *l)
            })
        })
        .collect()
}

/// Builds the plant table and its ground truth.
pub fn generate(spec: &PlantSpec) -> Result<Plant, SynthError> {
    let v = spec.violations();
    if !v.is_empty() {
        return Err(SynthError::Invalid(v));
    }
    let n = spec.n_samples();
    let timestamps: Vec<Timestamp> = (0..n).map(|i| Timestamp(spec.start.0 + i as i64 * spec.period.0)).collect();
    let labels = regime_labels(spec, &timestamps);
    let factors = factor_paths(spec, &timestamps);

    let mut variables = spec.variables();
    let m = variables.len();
    let mut regimes_of: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut regime_variables = Vec::with_capacity(spec.regimes.len());
    for (r, regime) in spec.regimes.iter().enumerate() {
        let idx = spec.select(&variables, &regime.variables).expect("validated");
        regime_variables.push(idx.iter().map(|&i| variables[i].name.clone()).collect());
        for i in idx {
            regimes_of[i].push(r);
        }
    }

    let mut columns = Vec::with_capacity(m + spec.constant_columns + spec.gappy_columns);
    for (j, affected) in regimes_of.iter().enumerate() {
        let mut rng = stream(spec.seed, 1 + j as u64);
        let level = rng.random_range(spec.level_range.0..=spec.level_range.1);
        let scale = level * rng.random_range(spec.variability_range.0..=spec.variability_range.1);
        let sigma = spec.noise * scale;
        let loadings: Vec<f64> = (0..spec.factors.count)
            .map(|_| {
                let on = rng.random::<f64>() < spec.factors.density;
                let w: f64 = rng.sample(StandardNormal);
                if on {
                    w
                } else {
                    0.0
                }
            })
            .collect();
        let mut values = vec![0.0; n];
        for (t, out) in values.iter_mut().enumerate() {
            let mut shared = 0.0;
            for (f, path) in factors.iter().enumerate() {
                shared += loadings[f] * path[t];
            }
            let noise: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
            let regime = labels[t].checked_sub(1).filter(|r| affected.contains(r));
            *out = match regime {
                None => level + scale * shared + noise,
                Some(r) => {
                    let g = &spec.regimes[r];
                    g.level * level + g.scale * scale * shared + g.offset * sigma + g.noise_scale * noise
                }
            };
        }
        let missing = drop_cells(&mut rng, n, spec.missing_rate);
        columns.push(masked(values, missing));
    }
    for c in 0..spec.constant_columns {
        variables.push(VariableMeta::new(format!("AUX_C{:02}", c + 1), UnitTag::Other));
        columns.push(Column::observed(vec![1.0; n]));
    }
    for c in 0..spec.gappy_columns {
        let mut rng = stream(spec.seed, 1 + (m + c) as u64);
        variables.push(VariableMeta::new(format!("AUX_G{:02}", c + 1), UnitTag::Other));
        let values: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let missing = (0..n).map(|t| (t / 60) % 2 == 1).collect();
        columns.push(masked(values, missing));
    }
    let table = TimeSeriesTable::new(timestamps, variables, columns).map_err(|e| SynthError::Invalid(vec![e.to_string()]))?;
    Ok(Plant {
        table,
        labels,
        regime_variables,
        unit_map: spec.unit_map(),
    })
}

fn masked(mut values: Vec<f64>, missing: Vec<bool>) -> Column {
    for (v, &m) in values.iter_mut().zip(&missing) {
        if m {
            *v = f64::NAN;
        }
    }
    Column { values, missing }
}

/// Independent cell drops at `rate`, drawn by geometric skipping.
fn drop_cells(rng: &mut ChaCha8Rng, n: usize, rate: f64) -> Vec<bool> {
    let mut missing = vec![false; n];
    if rate <= 0.0 {
        return missing;
    }
    let log_q = (1.0 - rate).ln();
    let mut i = 0usize;
    loop {
        let u: f64 = rng.random();
        let skip = ((1.0 - u).ln() / log_q).floor();
        if !skip.is_finite() || skip >= (n - i) as f64 {
            break;
        }
        i += skip as usize;
        missing[i] = true;
        i += 1;
        if i >= n {
            break;
        }
    }
    missing
}

fn factor_paths(spec: &PlantSpec, timestamps: &[Timestamp]) -> Vec<Vec<f64>> {
    let fs = &spec.factors;
    let mut rng = stream(spec.seed, 0);
    let a = (-(spec.period.0 as f64) / fs.correlation_time.0 as f64).exp();
    let innovation = fs.jitter * (1.0 - a * a).sqrt();
    (0..fs.count)
        .map(|f| {
            let phase = rng.random_range(0.0..2.0 * PI);
            let daily_sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let cycles = (f % 3 + 1) as f64;
            let mut ou = fs.jitter * rng.sample::<f64, _>(StandardNormal);
            timestamps
                .iter()
                .map(|t| {
                    let secs = t.0 as f64;
                    let seasonal = fs.seasonal_amplitude * (2.0 * PI * cycles * secs / YEAR + phase).sin();
                    // zero mean over every 08:00-20:00 and 20:00-08:00 window
                    let hour = (t.0 - 8 * 3600).rem_euclid(86_400) as f64 / 86_400.0;
                    let daily = daily_sign * fs.daily_amplitude * (2.0 * PI * hour).cos();
                    let value = seasonal + daily + ou;
                    ou = a * ou + innovation * rng.sample::<f64, _>(StandardNormal);
                    value
                })
                .collect()
        })
        .collect()
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let pairs = |c: u64| (c * c.saturating_sub(1) / 2) as f64;
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sa: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sb: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n as u64);
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::resample;

    fn tiny() -> PlantSpec {
        let mut s = PlantSpec::small(3);
        s.span = Duration(4 * Duration::DAY.0);
        s.regimes.clear();
        s
    }

    #[test]
    fn zero_noise_is_low_rank_and_all_baseline() {
        let mut s = tiny();
        s.noise = 0.0;
        s.missing_rate = 0.0;
        s.constant_columns = 0;
        s.gappy_columns = 0;
        let p = generate(&s).unwrap();
        assert!(p.labels.iter().all(|&l| l == 0));
        let (table, _) = crate::preprocess::drop_constant(p.table);
        let scaler = crate::preprocess::fit_scaler(&table).unwrap();
        let z = crate::preprocess::apply_scaler(&table, &scaler).unwrap();
        let c = crate::pca::covariance(&crate::preprocess::to_matrix(&z).unwrap()).unwrap();
        let eig = crate::pca::eigen_sym(&c).unwrap();
        let big = eig.values.iter().filter(|&&v| v > 1e-8 * eig.values[0]).count();
        assert!(big <= s.factors.count, "{big} nonzero eigenvalues");
    }

    #[test]
    fn shutdown_rows_labelled_and_zeroed() {
        let mut s = tiny();
        s.missing_rate = 0.0;
        let start = Timestamp::from_ymd_hms(2022, 8, 2, 8, 0, 0);
        s.regimes.push(RegimeSpec {
            name: "shutdown".into(),
            windows: vec![TimeWindow {
                start,
                end: start.plus(Duration::DAY),
            }],
            variables: VariableSelector::Unit {
                unit: UnitTag::Biological,
                count: None,
            },
            level: 0.0,
            scale: 0.0,
            offset: 0.0,
            noise_scale: 0.0,
        });
        let p = generate(&s).unwrap();
        let per_day = (Duration::DAY.0 / s.period.0) as usize;
        let inside: Vec<usize> = (0..p.labels.len()).filter(|&i| p.labels[i] == 1).collect();
        assert_eq!(inside.len(), per_day);
        assert_eq!(inside[0], per_day);
        let bio = p.table.variable_index("BIO_001").unwrap();
        assert!(inside.iter().all(|&i| p.table.value(i, bio) == Some(0.0)));
        assert_eq!(p.regime_variables[0].len(), 5);
    }

    #[test]
    fn deterministic_and_seed_keeps_labels() {
        let a = generate(&PlantSpec::small(5)).unwrap();
        let b = generate(&PlantSpec::small(5)).unwrap();
        let c = generate(&PlantSpec::small(6)).unwrap();
        let csv = |p: &Plant| {
            let mut buf = Vec::new();
            crate::ingest::write_table(&p.table, &mut buf).unwrap();
            buf
        };
        assert!(csv(&a) == csv(&b));
        assert_eq!(a.labels, c.labels);
        assert!(csv(&a) != csv(&c));
    }

    #[test]
    fn small_preset_exercises_cleaning() {
        let p = generate(&PlantSpec::small(1)).unwrap();
        assert_eq!(p.table.n_variables(), 27);
        let gappy = p.table.variable_index("AUX_G01").unwrap();
        assert!(p.table.column(gappy).missing_count() > p.table.n_samples() / 3);
        assert!(p.table.column(p.table.variable_index("AUX_C01").unwrap()).is_constant());
        assert!(p.table.total_missing() > 0);
    }

    #[test]
    fn window_labels_follow_regimes() {
        let p = generate(&PlantSpec::small(2)).unwrap();
        let spec = ResampleSpec::twelve_hours();
        let r = resample(&p.table, &spec).unwrap();
        let wl = window_labels(p.table.timestamps(), &p.labels, &spec, r.timestamps());
        let count = |label| wl.iter().filter(|&&l| l == label).count();
        assert_eq!((count(1), count(2), count(3)), (1, 2, 1));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = tiny();
        s.factors.count = 100;
        s.regimes.push(RegimeSpec {
            name: "late".into(),
            windows: vec![TimeWindow {
                start: s.end(),
                end: s.end().plus(Duration::HOUR),
            }],
            variables: VariableSelector::Names {
                names: vec!["nope".into()],
            },
            level: 1.0,
            scale: 1.0,
            offset: 0.0,
            noise_scale: 1.0,
        });
        let SynthError::Invalid(v) = generate(&s).unwrap_err();
        assert_eq!(v.len(), 3, "{v:?}");
    }

    #[test]
    fn ari_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 2, 2]), 1.0);
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]);
        assert!((v - (-0.5)).abs() < 1e-12, "{v}");
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[1, 1, 1]), 1.0);
    }
}
