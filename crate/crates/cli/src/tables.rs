//! Ranking tables laid out one column per mode, ranks down the rows.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use opmode_core::dbscan::Outcome;
use opmode_core::pipeline::{OfflineReport, OnlineEvent};
use opmode_core::shap::{Explanation, ExplanationTarget};

use crate::commands::{CmdResult, Failure};

fn writer(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))
}

fn mode_id(e: &Explanation) -> String {
    match e.target {
        ExplanationTarget::Mode(id) => id.to_string(),
        other => other.to_string(),
    }
}

/// `modes_variables.csv` and `modes_units.csv`, aligned cell by cell.
pub fn mode_tables(explanations: &[Explanation], dir: &Path) -> CmdResult {
    let depth = explanations.iter().map(|e| e.ranking.len()).max().unwrap_or(0);
    let header: Vec<String> = std::iter::once("rank".to_string())
        .chain(explanations.iter().map(|e| format!("mode {}", mode_id(e))))
        .collect();
    let mut vars = csv::Writer::from_writer(writer(&dir.join("modes_variables.csv"))?);
    let mut units = csv::Writer::from_writer(writer(&dir.join("modes_units.csv"))?);
    vars.write_record(&header)?;
    units.write_record(&header)?;
    for r in 0..depth {
        let mut vrow = vec![(r + 1).to_string()];
        let mut urow = vrow.clone();
        for e in explanations {
            match e.ranking.get(r) {
                Some(v) => {
                    vrow.push(v.variable.clone());
                    urow.push(v.unit_tag.to_string());
                }
                None => {
                    vrow.push(String::new());
                    urow.push(String::new());
                }
            }
        }
        vars.write_record(&vrow)?;
        units.write_record(&urow)?;
    }
    vars.flush()?;
    units.flush()?;
    Ok(())
}

pub fn component_table<W: Write>(e: &Explanation, out: W) -> CmdResult {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "variable", "unit_tag", "score"])?;
    for v in &e.ranking {
        w.write_record([v.rank.to_string(), v.variable.clone(), v.unit_tag.to_string(), v.score.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn mode_sizes<W: Write>(report: &OfflineReport, out: W) -> CmdResult {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mode", "size"])?;
    for (id, n) in &report.mode_sizes {
        w.write_record([id.to_string(), n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Online windows that did not simply join a known mode, with their rankings.
pub fn online_samples<W: Write>(events: &[OnlineEvent], out: W) -> CmdResult {
    let depth = events
        .iter()
        .filter_map(|e| e.explanation.as_ref())
        .map(|e| e.ranking.len())
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["sample", "timestamp", "outcome", "mode"].map(String::from).to_vec();
    header.extend((1..=depth).map(|r| format!("rank_{r}")));
    w.write_record(&header)?;
    let mut n = 0;
    for e in events {
        let kind = match e.outcome {
            Outcome::Joined(_) => continue,
            Outcome::NewMode(_) => "new_mode",
            Outcome::Merged { .. } => "merged",
        };
        n += 1;
        let mut row = vec![n.to_string(), e.timestamp.to_string(), kind.to_string(), e.outcome.mode().to_string()];
        let ranked = e.explanation.as_ref().map(|x| x.ranking.as_slice()).unwrap_or(&[]);
        for r in 0..depth {
            row.push(
                ranked
                    .get(r)
                    .map(|v| format!("{} ({})", v.variable, v.unit_tag))
                    .unwrap_or_default(),
            );
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
