//! Density-based mode discovery.
//!
//! Batch DBSCAN with an inclusive `d <= eps` neighbourhood (a point counts
//! itself), the k-distance curve used to pick `eps`, and append-only
//! incremental assignment for `min_points = 1`, where clusters are exactly
//! the connected components of the eps-graph.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knee::elbow_index;
use crate::matrix::{euclidean, Matrix};

#[derive(Debug, Error, PartialEq)]
pub enum DbscanError {
    #[error("point set is empty")]
    Empty,
    #[error("epsilon must be finite and positive, got {0}")]
    Epsilon(f64),
    #[error("min_points must be at least 1")]
    MinPoints,
    #[error("coordinates must be finite (row {0})")]
    NonFinite(usize),
    #[error("k = {k} needs at least k + 1 points, have {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be at least 1")]
    KZero,
    #[error("k-distance curve needs at least 3 points, has {0}")]
    CurveTooShort(usize),
    #[error("k-distance curve is flat; supply epsilon explicitly")]
    FlatCurve,
    #[error("point has {got} coordinates, model expects {expected}")]
    Shape { expected: usize, got: usize },
    #[error("incremental assignment is only defined for min_points = 1 (model has {0})")]
    UnsupportedContract(usize),
    #[error("unknown mode id {0}")]
    UnknownMode(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Noise,
    Mode(usize),
}

impl Label {
    pub fn mode(self) -> Option<usize> {
        match self {
            Label::Mode(id) => Some(id),
            Label::Noise => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointKind {
    Core,
    Border,
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub epsilon: f64,
    pub min_points: usize,
    pub points: Matrix,
    pub labels: Vec<Label>,
    pub next_mode_id: usize,
}

/// What happened to an incrementally inserted point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Joined(usize),
    Merged { from: Vec<usize>, into: usize },
    NewMode(usize),
}

impl Outcome {
    pub fn mode(&self) -> usize {
        match *self {
            Outcome::Joined(id) | Outcome::NewMode(id) => id,
            Outcome::Merged { into, .. } => into,
        }
    }
}

fn check_params(points: &Matrix, epsilon: f64, min_points: usize) -> Result<(), DbscanError> {
    if points.rows() == 0 {
        return Err(DbscanError::Empty);
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(DbscanError::Epsilon(epsilon));
    }
    if min_points == 0 {
        return Err(DbscanError::MinPoints);
    }
    if let Some(i) = points.row_iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(DbscanError::NonFinite(i));
    }
    Ok(())
}

fn region(points: &Matrix, p: usize, epsilon: f64) -> Vec<usize> {
    let x = points.row(p);
    (0..points.rows())
        .filter(|&q| euclidean(x, points.row(q)) <= epsilon)
        .collect()
}

/// Core / border / noise per point.
pub fn classify_points(points: &Matrix, epsilon: f64, min_points: usize) -> Result<Vec<PointKind>, DbscanError> {
    check_params(points, epsilon, min_points)?;
    let n = points.rows();
    let neighbors: Vec<Vec<usize>> = (0..n).map(|p| region(points, p, epsilon)).collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_points).collect();
    Ok((0..n)
        .map(|p| {
            if core[p] {
                PointKind::Core
            } else if neighbors[p].iter().any(|&q| core[q]) {
                PointKind::Border
            } else {
                PointKind::Noise
            }
        })
        .collect())
}

/// Batch DBSCAN. Mode ids are numbered by first appearance in row order.
pub fn dbscan_fit(points: &Matrix, epsilon: f64, min_points: usize) -> Result<ClusterModel, DbscanError> {
    check_params(points, epsilon, min_points)?;
    let n = points.rows();
    let mut labels: Vec<Option<Label>> = vec![None; n];
    let mut next = 0usize;
    for p in 0..n {
        if labels[p].is_some() {
            continue;
        }
        let nb = region(points, p, epsilon);
        if nb.len() < min_points {
            labels[p] = Some(Label::Noise);
            continue;
        }
        let id = next;
        next += 1;
        labels[p] = Some(Label::Mode(id));
        let mut queue: VecDeque<usize> = nb.into_iter().filter(|&q| q != p).collect();
        while let Some(q) = queue.pop_front() {
            match labels[q] {
                Some(Label::Noise) => {
                    // border point first reached from this cluster
                    labels[q] = Some(Label::Mode(id));
                    continue;
                }
                Some(Label::Mode(_)) => continue,
                None => {}
            }
            labels[q] = Some(Label::Mode(id));
            let nbq = region(points, q, epsilon);
            if nbq.len() >= min_points {
                queue.extend(nbq.into_iter().filter(|&r| !matches!(labels[r], Some(Label::Mode(_)))));
            }
        }
    }
    let labels: Vec<Label> = labels.into_iter().map(|l| l.expect("every point visited")).collect();
    let (labels, count) = renumber_by_first_appearance(&labels);
    Ok(ClusterModel {
        epsilon,
        min_points,
        points: points.clone(),
        labels,
        next_mode_id: count,
    })
}

fn renumber_by_first_appearance(labels: &[Label]) -> (Vec<Label>, usize) {
    let mut map = BTreeMap::new();
    let out = labels
        .iter()
        .map(|l| match l {
            Label::Noise => Label::Noise,
            Label::Mode(id) => {
                let fresh = map.len();
                Label::Mode(*map.entry(*id).or_insert(fresh))
            }
        })
        .collect();
    (out, map.len())
}

impl ClusterModel {
    pub fn dimension(&self) -> usize {
        self.points.cols()
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    /// Live mode ids, ascending.
    pub fn mode_ids(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.labels.iter().filter_map(|l| l.mode()).collect();
        set.into_iter().collect()
    }

    pub fn mode_count(&self) -> usize {
        self.mode_ids().len()
    }

    pub fn members(&self, mode: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Label::Mode(mode))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn mode_sizes(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for id in self.labels.iter().filter_map(|l| l.mode()) {
            *out.entry(id).or_insert(0) += 1;
        }
        out
    }

    /// Clusters as sorted member lists; noise points are left out.
    /// Comparable across label renumberings.
    pub fn partition(&self) -> BTreeSet<Vec<usize>> {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, l) in self.labels.iter().enumerate() {
            if let Label::Mode(id) = l {
                groups.entry(*id).or_default().push(i);
            }
        }
        groups.into_values().collect()
    }

    /// Appends one point under the `min_points = 1` contract.
    ///
    /// The point joins the single mode it touches, merges every touched mode
    /// into the smallest touched id, or opens a new mode. Retired ids are never reused.
    pub fn assign_incremental(&mut self, point: &[f64]) -> Result<Outcome, DbscanError> {
        if self.min_points != 1 {
            return Err(DbscanError::UnsupportedContract(self.min_points));
        }
        if !self.is_empty() && point.len() != self.dimension() {
            return Err(DbscanError::Shape {
                expected: self.dimension(),
                got: point.len(),
            });
        }
        if point.iter().any(|v| !v.is_finite()) {
            return Err(DbscanError::NonFinite(self.len()));
        }
        let touched: BTreeSet<usize> = self
            .points
            .row_iter()
            .zip(&self.labels)
            .filter(|(row, _)| euclidean(row, point) <= self.epsilon)
            .filter_map(|(_, l)| l.mode())
            .collect();
        let outcome = match touched.len() {
            0 => {
                let id = self.next_mode_id;
                self.next_mode_id += 1;
                Outcome::NewMode(id)
            }
            1 => Outcome::Joined(*touched.first().unwrap()),
            _ => {
                let into = *touched.first().unwrap();
                for l in &mut self.labels {
                    if let Label::Mode(id) = l {
                        if touched.contains(id) {
                            *l = Label::Mode(into);
                        }
                    }
                }
                Outcome::Merged {
                    from: touched.into_iter().collect(),
                    into,
                }
            }
        };
        self.points.push_row(point);
        self.labels.push(Label::Mode(outcome.mode()));
        Ok(outcome)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            out.push(format!("epsilon {} must be finite and positive", self.epsilon));
        }
        if self.min_points == 0 {
            out.push("min_points must be at least 1".into());
        }
        if self.labels.len() != self.points.rows() {
            out.push(format!("{} labels for {} points", self.labels.len(), self.points.rows()));
        }
        if let Some(max) = self.mode_ids().last() {
            if *max >= self.next_mode_id {
                out.push(format!("mode id {max} not below next_mode_id {}", self.next_mode_id));
            }
        }
        if self.min_points == 1 && self.labels.contains(&Label::Noise) {
            out.push("noise label present with min_points = 1".into());
        }
        if !self.points.is_finite() {
            out.push("cluster points contain non-finite values".into());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KDistanceCurve {
    pub k: usize,
    pub sorted_distances: Vec<f64>,
}

/// Distance of every point to its k-th nearest neighbour (itself excluded), ascending.
pub fn k_distance(points: &Matrix, k: usize) -> Result<KDistanceCurve, DbscanError> {
    let n = points.rows();
    if k == 0 {
        return Err(DbscanError::KZero);
    }
    if k >= n {
        return Err(DbscanError::KTooLarge { k, n });
    }
    if let Some(i) = points.row_iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(DbscanError::NonFinite(i));
    }
    let mut out = Vec::with_capacity(n);
    let mut buf = Vec::with_capacity(n - 1);
    for p in 0..n {
        buf.clear();
        let x = points.row(p);
        buf.extend((0..n).filter(|&q| q != p).map(|q| euclidean(x, points.row(q))));
        let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
        out.push(*kth);
    }
    out.sort_by(f64::total_cmp);
    Ok(KDistanceCurve {
        k,
        sorted_distances: out,
    })
}

/// Epsilon at the knee of the k-distance curve.
pub fn choose_epsilon(curve: &KDistanceCurve) -> Result<f64, DbscanError> {
    let d = &curve.sorted_distances;
    if d.len() < 3 {
        return Err(DbscanError::CurveTooShort(d.len()));
    }
    let knee = elbow_index(d).ok_or(DbscanError::FlatCurve)?;
    d[knee..]
        .iter()
        .copied()
        .find(|v| *v > 0.0)
        .ok_or(DbscanError::FlatCurve)
}

/// Smallest radius that puts every point in one mode: each point is core and
/// the largest minimum-spanning-tree edge is bridged.
pub fn spanning_epsilon(points: &Matrix, min_points: usize) -> Result<f64, DbscanError> {
    let n = points.rows();
    if n == 0 {
        return Err(DbscanError::Empty);
    }
    // Prim on the complete graph, O(n^2)
    let mut in_tree = vec![false; n];
    let mut reach = vec![f64::INFINITY; n];
    reach[0] = 0.0;
    let mut widest: f64 = 0.0;
    for _ in 0..n {
        let mut next = usize::MAX;
        for i in 0..n {
            if !in_tree[i] && (next == usize::MAX || reach[i] < reach[next]) {
                next = i;
            }
        }
        in_tree[next] = true;
        widest = widest.max(reach[next]);
        for i in 0..n {
            if !in_tree[i] {
                reach[i] = reach[i].min(euclidean(points.row(next), points.row(i)));
            }
        }
    }
    let k = min_points.saturating_sub(1).min(n - 1);
    let deepest = if k == 0 {
        0.0
    } else {
        k_distance(points, k)?.sorted_distances.last().copied().unwrap_or(0.0)
    };
    let eps = widest.max(deepest);
    Ok(if eps > 0.0 { eps } else { f64::MIN_POSITIVE })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Matrix {
        Matrix::from_rows(&xs.iter().map(|x| [*x]).collect::<Vec<_>>())
    }

    #[test]
    fn one_dimensional_components() {
        let m = dbscan_fit(&line(&[0.0, 0.5, 5.0]), 1.0, 1).unwrap();
        assert_eq!(m.labels, vec![Label::Mode(0), Label::Mode(0), Label::Mode(1)]);
        assert_eq!(m.next_mode_id, 2);
    }

    #[test]
    fn spanning_radius_is_tight() {
        let pts = line(&[0.0, 1.0, 3.0]);
        let eps = spanning_epsilon(&pts, 1).unwrap();
        assert_eq!(eps, 2.0);
        assert_eq!(dbscan_fit(&pts, eps, 1).unwrap().mode_count(), 1);
        assert_eq!(dbscan_fit(&pts, 1.999, 1).unwrap().mode_count(), 2);
        // 3 has its second neighbour at distance 3
        assert_eq!(spanning_epsilon(&pts, 3).unwrap(), 3.0);
        assert_eq!(dbscan_fit(&pts, 3.0, 3).unwrap().mode_count(), 1);
    }

    #[test]
    fn single_point() {
        let m = dbscan_fit(&line(&[3.0]), 1.0, 1).unwrap();
        assert_eq!(m.labels, vec![Label::Mode(0)]);
    }

    #[test]
    fn boundary_is_inclusive() {
        let m = dbscan_fit(&line(&[0.0, 1.0]), 1.0, 1).unwrap();
        assert_eq!(m.mode_count(), 1);
    }

    #[test]
    fn noise_and_border() {
        // first three dense; 1.0 border of 0.25 with eps 0.8; 9 noise
        let pts = line(&[0.0, 0.125, 0.25, 1.0, 9.0]);
        let m = dbscan_fit(&pts, 0.8, 3).unwrap();
        assert_eq!(
            m.labels,
            vec![Label::Mode(0), Label::Mode(0), Label::Mode(0), Label::Mode(0), Label::Noise]
        );
        let kinds = classify_points(&pts, 0.8, 3).unwrap();
        assert_eq!(
            kinds,
            vec![PointKind::Core, PointKind::Core, PointKind::Core, PointKind::Border, PointKind::Noise]
        );
    }

    #[test]
    fn ids_follow_first_appearance() {
        // point 0 is a border reached only from the cluster seeded at point 2
        let pts = line(&[0.0, 10.0, 0.9, 1.0, 1.1, 10.05]);
        let m = dbscan_fit(&pts, 0.2, 3).unwrap();
        assert_eq!(m.labels[0], Label::Noise);
        let m = dbscan_fit(&line(&[0.75, 10.0, 0.9, 1.0, 1.1, 10.05, 10.1]), 0.2, 3).unwrap();
        assert_eq!(m.labels[0], Label::Mode(0));
        assert_eq!(m.labels[1], Label::Mode(1));
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(dbscan_fit(&line(&[f64::NAN]), 1.0, 1).unwrap_err(), DbscanError::NonFinite(0));
        assert!(matches!(dbscan_fit(&line(&[0.0]), 0.0, 1), Err(DbscanError::Epsilon(_))));
        assert_eq!(dbscan_fit(&line(&[0.0]), 1.0, 0).unwrap_err(), DbscanError::MinPoints);
    }

    #[test]
    fn k_distance_examples() {
        let c = k_distance(&line(&[0.0, 1.0, 2.0]), 1).unwrap();
        assert_eq!(c.sorted_distances, vec![1.0, 1.0, 1.0]);
        let c = k_distance(&line(&[0.0, 3.0]), 1).unwrap();
        assert_eq!(c.sorted_distances, vec![3.0, 3.0]);
        assert_eq!(k_distance(&line(&[0.0, 3.0]), 2).unwrap_err(), DbscanError::KTooLarge { k: 2, n: 2 });
    }

    #[test]
    fn k_distance_two_blobs() {
        // blob A on a 0.1 grid at x in [0, 0.3], blob B the same shifted by 10
        let xs: Vec<f64> = (0..4).map(|i| i as f64 * 0.1).chain((0..4).map(|i| 10.0 + i as f64 * 0.1)).collect();
        let c = k_distance(&line(&xs), 1).unwrap();
        assert!(c.sorted_distances.iter().all(|d| (d - 0.1).abs() < 1e-9));
        let c = k_distance(&line(&xs), 4).unwrap();
        // fourth neighbour lies in the other blob: at least 10 - 0.3
        assert!(c.sorted_distances.iter().all(|d| *d >= 9.7 - 1e-9));
        let plateau = k_distance(&line(&xs), 3).unwrap();
        assert!(plateau.sorted_distances.last().unwrap() < &0.31);
        assert!(c.sorted_distances[0] - plateau.sorted_distances.last().unwrap() >= 8.0);
    }

    #[test]
    fn epsilon_examples() {
        let curve = |v: &[f64]| KDistanceCurve { k: 1, sorted_distances: v.to_vec() };
        assert_eq!(choose_epsilon(&curve(&[1.0, 1.0, 1.0, 1.0, 9.0, 10.0])), Ok(1.0));
        assert_eq!(choose_epsilon(&curve(&[1.0, 2.0, 3.0, 4.0, 5.0, 100.0])), Ok(5.0));
        assert_eq!(choose_epsilon(&curve(&[2.0; 4])), Err(DbscanError::FlatCurve));
        assert_eq!(choose_epsilon(&curve(&[0.0, 0.0, 0.0, 7.0])), Ok(7.0));
    }

    #[test]
    fn incremental_examples() {
        let mut m = dbscan_fit(&line(&[0.0, 5.0]), 1.0, 1).unwrap();
        assert_eq!(m.assign_incremental(&[0.5]).unwrap(), Outcome::Joined(0));

        let mut m = dbscan_fit(&line(&[0.0, 1.8]), 1.0, 1).unwrap();
        assert_eq!(
            m.assign_incremental(&[0.9]).unwrap(),
            Outcome::Merged { from: vec![0, 1], into: 0 }
        );
        assert_eq!(m.labels, vec![Label::Mode(0); 3]);
        assert_eq!(m.assign_incremental(&[100.0]).unwrap(), Outcome::NewMode(2));
        assert_eq!(m.assign_incremental(&[1.0, 2.0]).unwrap_err(), DbscanError::Shape { expected: 1, got: 2 });
    }

    #[test]
    fn incremental_requires_min_points_one() {
        let mut m = dbscan_fit(&line(&[0.0, 0.1, 0.2]), 1.0, 2).unwrap();
        assert_eq!(m.assign_incremental(&[0.0]).unwrap_err(), DbscanError::UnsupportedContract(2));
    }
}
