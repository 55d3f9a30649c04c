//! Plot-ready CSV tables: assignments, k-distance curve, scree, rankings.

use std::io::Write;

use crate::dbscan::{KDistanceCurve, Label, Outcome};
use crate::modelstore::ModeModelBundle;
use crate::pca::ScreePoint;
use crate::pipeline::OnlineEvent;
use crate::shap::Explanation;

pub type ExportResult = Result<(), csv::Error>;

fn label_str(l: &Label) -> String {
    match l {
        Label::Noise => "noise".into(),
        Label::Mode(id) => id.to_string(),
    }
}

fn pc_headers(k: usize) -> impl Iterator<Item = String> {
    (1..=k).map(|j| format!("PC{j}"))
}

/// One row per training window: sample index, timestamp, month, mode, scores.
pub fn write_assignments<W: Write>(bundle: &ModeModelBundle, out: W) -> ExportResult {
    let mut w = csv::Writer::from_writer(out);
    let k = bundle.pca.k;
    let mut header: Vec<String> = ["sample", "timestamp", "month", "mode"].map(String::from).to_vec();
    header.extend(pc_headers(k));
    w.write_record(&header)?;
    for (i, (t, label)) in bundle.sample_timestamps.iter().zip(&bundle.cluster.labels).enumerate() {
        let ts = t.to_string();
        let mut rec = vec![i.to_string(), ts.clone(), ts[..7.min(ts.len())].to_string(), label_str(label)];
        rec.extend(bundle.cluster.points.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_kdistance<W: Write>(curve: &KDistanceCurve, out: W) -> ExportResult {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "distance"])?;
    for (i, d) in curve.sorted_distances.iter().enumerate() {
        w.write_record([(i + 1).to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scree<W: Write>(scree: &[ScreePoint], out: W) -> ExportResult {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["component", "eigenvalue", "cumulative_ratio"])?;
    for p in scree {
        w.write_record([p.index.to_string(), p.eigenvalue.to_string(), p.cumulative_ratio.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Long format, one row per (target, rank).
pub fn write_explanations<W: Write>(explanations: &[&Explanation], out: W) -> ExportResult {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["target", "rank", "variable", "score", "unit_tag"])?;
    for e in explanations {
        let target = e.target.to_string();
        for r in &e.ranking {
            w.write_record([
                target.clone(),
                r.rank.to_string(),
                r.variable.clone(),
                r.score.to_string(),
                r.unit_tag.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_events<W: Write>(events: &[OnlineEvent], k: usize, out: W) -> ExportResult {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["timestamp", "outcome", "mode", "merged_from"].map(String::from).to_vec();
    header.extend(pc_headers(k));
    w.write_record(&header)?;
    for e in events {
        let (kind, from) = match &e.outcome {
            Outcome::Joined(_) => ("joined", String::new()),
            Outcome::NewMode(_) => ("new_mode", String::new()),
            Outcome::Merged { from, .. } => (
                "merged",
                from.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(";"),
            ),
        };
        let mut rec = vec![e.timestamp.to_string(), kind.into(), e.outcome.mode().to_string(), from];
        rec.extend(e.coordinates.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
