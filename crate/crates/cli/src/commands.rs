use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use opmode_core::dbscan::k_distance;
use opmode_core::export;
use opmode_core::ingest::{load_table, write_table, TimeSeriesTable};
use opmode_core::modelstore::{self, ModeModelBundle};
use opmode_core::pipeline::{
    fit_offline, process_online, rebuild, ModeMigrationReport, OfflineReport, OnlineEvent, PipelineConfig,
};
use opmode_core::shap::Explanation;
use opmode_core::synthgen::{generate, PlantSpec};
use serde::Serialize;

use crate::args::*;
use crate::tables;

/// Exit status 1 for domain failures, 2 for misuse.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Domain(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Domain(m) => f.write_str(m),
        }
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Domain(_) => 1,
        }
    }
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Domain(e.to_string())
    }
}

pub type CmdResult = Result<(), Failure>;

fn io_ctx(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |e| Failure::Domain(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(io_ctx(path))
}

fn ensure_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(io_ctx(dir))
}

fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_ctx(path))
}

/// File when a path is given, stdout otherwise.
fn sink(out: Option<&PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

pub fn load_config(overrides: &Overrides) -> Result<PipelineConfig, Failure> {
    let base = match &overrides.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_ctx(path))?;
            toml::from_str(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    let config = overrides.apply(base);
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(config)
}

fn load_input(input: &Path, unit_map: Option<&PathBuf>) -> Result<TimeSeriesTable, Failure> {
    let table = load_table(input, unit_map.map(|p| p.as_path())).map_err(|e| Failure::Domain(format!("ingest: {e}")))?;
    info!("{}: {} rows x {} variables", input.display(), table.n_samples(), table.n_variables());
    Ok(table)
}

fn load_model(path: &Path) -> Result<ModeModelBundle, Failure> {
    modelstore::load(path).map_err(|e| Failure::Domain(format!("modelstore: {e}")))
}

fn save_model(bundle: &ModeModelBundle, path: &Path) -> CmdResult {
    modelstore::save(bundle, path).map_err(|e| Failure::Domain(format!("modelstore: {e}")))
}

fn all_explanations(bundle: &ModeModelBundle) -> Vec<&Explanation> {
    bundle
        .component_explanation
        .iter()
        .chain(bundle.mode_explanations.values())
        .collect()
}

/// Report plus the plot tables shared by `fit` and `update`.
fn write_offline_artifacts(bundle: &ModeModelBundle, report: &OfflineReport, dir: &Path) -> CmdResult {
    ensure_dir(dir)?;
    write_json(report, &dir.join("report.json"))?;
    export::write_assignments(bundle, create(&dir.join("assignments.csv"))?)?;
    export::write_kdistance(&report.k_distance, create(&dir.join("kdist.csv"))?)?;
    export::write_scree(&report.scree, create(&dir.join("scree.csv"))?)?;
    export::write_explanations(&all_explanations(bundle), create(&dir.join("explanations.csv"))?)?;
    Ok(())
}

fn log_summary(report: &OfflineReport) {
    info!(
        "{} samples x {} variables, k = {} ({:.2}% variance), epsilon = {:.4} ({:?}), {} modes",
        report.n_samples,
        report.n_variables,
        report.k,
        100.0 * report.explained_ratio,
        report.epsilon,
        report.epsilon_source,
        report.mode_count
    );
}

pub fn fit(args: &FitArgs) -> CmdResult {
    let config = load_config(&args.overrides)?;
    let table = load_input(&args.input, args.unit_map.as_ref())?;
    let (bundle, report) = fit_offline(table, &config)?;
    log_summary(&report);
    save_model(&bundle, &args.model)?;
    if let Some(dir) = &args.out {
        write_offline_artifacts(&bundle, &report, dir)?;
    }
    Ok(())
}

pub fn assign(args: &AssignArgs) -> CmdResult {
    let bundle = load_model(&args.model)?;
    let table = load_input(&args.input, args.unit_map.as_ref())?;
    let config = PipelineConfig {
        explain_all_online: args.explain_all,
        ..PipelineConfig::default()
    };
    let k = bundle.pca.k;
    let (bundle, events) = process_online(bundle, &table, &config)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &events {
        let kind = match e.outcome {
            opmode_core::dbscan::Outcome::Joined(_) => "joined",
            opmode_core::dbscan::Outcome::Merged { .. } => "merged",
            opmode_core::dbscan::Outcome::NewMode(_) => "new_mode",
        };
        *counts.entry(kind).or_default() += 1;
    }
    info!("{} windows assigned: {counts:?}", events.len());
    ensure_dir(&args.out)?;
    write_json(&events, &args.out.join("events.json"))?;
    export::write_events(&events, k, create(&args.out.join("events.csv"))?)?;
    save_model(&bundle, &args.out.join("model.json"))
}

pub fn update(args: &UpdateArgs) -> CmdResult {
    let config = load_config(&args.overrides)?;
    let old = load_model(&args.model)?;
    let table = load_input(&args.input, args.unit_map.as_ref())?;
    let (bundle, report, migration): (_, _, ModeMigrationReport) = rebuild(&old, table, &config)?;
    log_summary(&report);
    info!("migration: {} entries", migration.entries.len());
    write_offline_artifacts(&bundle, &report, &args.out)?;
    write_json(&migration, &args.out.join("migration.json"))?;
    save_model(&bundle, &args.out.join("model.json"))
}

pub fn explain(args: &ExplainArgs) -> CmdResult {
    let bundle = load_model(&args.model)?;
    let mut picked: Vec<Explanation> = if args.components {
        bundle.component_explanation.iter().cloned().collect()
    } else if let Some(id) = args.mode {
        match bundle.mode_explanations.get(&id) {
            Some(e) => vec![e.clone()],
            None => {
                return Err(Failure::Domain(format!(
                    "mode {id} has no stored explanation (modes: {:?})",
                    bundle.cluster.mode_ids()
                )))
            }
        }
    } else {
        all_explanations(&bundle).into_iter().cloned().collect()
    };
    if let Some(top) = args.top {
        if top == 0 {
            return Err(Failure::Usage("--top must be at least 1".into()));
        }
        for e in &mut picked {
            e.ranking.truncate(top);
        }
    }
    let mut out = sink(args.out.as_ref())?;
    match args.format {
        Format::Csv => export::write_explanations(&picked.iter().collect::<Vec<_>>(), &mut out)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &picked)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn kdist(args: &KdistArgs) -> CmdResult {
    let bundle = load_model(&args.model)?;
    let k = args.neighbors.unwrap_or(bundle.cluster.min_points);
    let curve = k_distance(&bundle.cluster.points, k).map_err(|e| Failure::Domain(format!("dbscan: {e}")))?;
    let mut out = sink(args.out.as_ref())?;
    export::write_kdistance(&curve, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn scree(args: &ScreeArgs) -> CmdResult {
    let bundle = load_model(&args.model)?;
    let mut out = sink(args.out.as_ref())?;
    export::write_scree(&bundle.pca.scree(), &mut out)?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RegimeSummary<'a> {
    label: usize,
    name: &'a str,
    windows: &'a [opmode_core::synthgen::TimeWindow],
    variables: &'a [String],
}

pub fn synth(args: &SynthArgs) -> CmdResult {
    let mut spec = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_ctx(path))?;
            toml::from_str::<PlantSpec>(&text).map_err(|e| Failure::Usage(format!("plant spec {}: {e}", path.display())))?
        }
        None => match args.preset {
            Preset::Full => PlantSpec::full(0),
            Preset::Small => PlantSpec::small(0),
        },
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let plant = generate(&spec).map_err(|e| Failure::Domain(format!("synthgen: {e}")))?;
    info!(
        "generated {} rows x {} columns",
        plant.table.n_samples(),
        plant.table.n_variables()
    );
    ensure_dir(&args.out)?;
    let data = args.out.join("data.csv");
    let mut w = create(&data)?;
    write_table(&plant.table, &mut w).map_err(io_ctx(&data))?;
    w.flush().map_err(io_ctx(&data))?;

    let labels = args.out.join("labels.csv");
    let mut w = create(&labels)?;
    writeln!(w, "timestamp,label,regime").map_err(io_ctx(&labels))?;
    for (t, l) in plant.table.timestamps().iter().zip(&plant.labels) {
        let name = l.checked_sub(1).map_or("baseline", |r| spec.regimes[r].name.as_str());
        writeln!(w, "{t},{l},{name}").map_err(io_ctx(&labels))?;
    }
    w.flush().map_err(io_ctx(&labels))?;

    let units = args.out.join("units.csv");
    let mut w = create(&units)?;
    plant.unit_map.write(&mut w).map_err(io_ctx(&units))?;
    w.flush().map_err(io_ctx(&units))?;

    let regimes: Vec<RegimeSummary> = spec
        .regimes
        .iter()
        .zip(&plant.regime_variables)
        .enumerate()
        .map(|(r, (g, vars))| RegimeSummary {
            label: r + 1,
            name: &g.name,
            windows: &g.windows,
            variables: vars,
        })
        .collect();
    write_json(&regimes, &args.out.join("regimes.json"))
}

pub fn report(args: &ReportArgs) -> CmdResult {
    let text = fs::read_to_string(&args.input).map_err(io_ctx(&args.input))?;
    let doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Domain(format!("{}: {e}", args.input.display())))?;
    ensure_dir(&args.out)?;
    if doc.is_array() {
        let events: Vec<OnlineEvent> = serde_json::from_value(doc)
            .map_err(|e| Failure::Domain(format!("{}: not an event list: {e}", args.input.display())))?;
        tables::online_samples(&events, create(&args.out.join("online_samples.csv"))?)?;
    } else {
        let report: OfflineReport = serde_json::from_value(doc)
            .map_err(|e| Failure::Domain(format!("{}: not an offline report: {e}", args.input.display())))?;
        tables::mode_tables(&report.mode_explanations, &args.out)?;
        tables::component_table(&report.component_explanation, create(&args.out.join("components.csv"))?)?;
        tables::mode_sizes(&report, create(&args.out.join("mode_sizes.csv"))?)?;
    }
    Ok(())
}
