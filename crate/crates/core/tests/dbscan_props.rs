use std::collections::{BTreeMap, BTreeSet};

use opmode_core::dbscan::{classify_points, dbscan_fit, k_distance, ClusterModel, Label, PointKind};
use opmode_core::matrix::{euclidean, Matrix};
use proptest::prelude::*;

fn points(max_n: usize, max_dim: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_n, 1..=max_dim).prop_flat_map(|(n, d)| {
        // coarse grid values make exact-distance ties common
        prop::collection::vec((0i32..12).prop_map(|v| v as f64 * 0.25), n * d)
            .prop_map(move |data| Matrix::from_row_major(n, d, data).unwrap())
    })
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Connected components of the ε-graph restricted to `nodes`.
fn components(x: &Matrix, eps: f64, nodes: &[usize]) -> BTreeSet<Vec<usize>> {
    let n = x.rows();
    let mut parent: Vec<usize> = (0..n).collect();
    for (a, &p) in nodes.iter().enumerate() {
        for &q in &nodes[a + 1..] {
            if dist2(x.row(p), x.row(q)) <= eps * eps {
                let (rp, rq) = (find(&mut parent, p), find(&mut parent, q));
                parent[rp] = rq;
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &p in nodes {
        let r = find(&mut parent, p);
        groups.entry(r).or_default().push(p);
    }
    groups.into_values().collect()
}

fn within(x: &Matrix, p: usize, q: usize, eps: f64) -> bool {
    euclidean(x.row(p), x.row(q)) <= eps
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn min_points_one_matches_union_find(x in points(80, 7), eps in 0.1f64..1.5) {
        let model = dbscan_fit(&x, eps, 1).unwrap();
        let all: Vec<usize> = (0..x.rows()).collect();
        prop_assert_eq!(model.partition(), components(&x, eps, &all));
    }

    #[test]
    fn classification_matches_definition(x in points(40, 3), eps in 0.1f64..1.2, min_points in 1usize..=5) {
        let kinds = classify_points(&x, eps, min_points).unwrap();
        let n = x.rows();
        let core: Vec<bool> = (0..n)
            .map(|p| (0..n).filter(|&q| within(&x, p, q, eps)).count() >= min_points)
            .collect();
        for p in 0..n {
            let expected = if core[p] {
                PointKind::Core
            } else if (0..n).any(|q| core[q] && within(&x, p, q, eps)) {
                PointKind::Border
            } else {
                PointKind::Noise
            };
            prop_assert_eq!(kinds[p], expected, "point {}", p);
        }
    }

    #[test]
    fn batch_partition_is_core_components_plus_borders(
        x in points(40, 3), eps in 0.1f64..1.2, min_points in 1usize..=5
    ) {
        let model = dbscan_fit(&x, eps, min_points).unwrap();
        let kinds = classify_points(&x, eps, min_points).unwrap();
        let cores: Vec<usize> = (0..x.rows()).filter(|&p| kinds[p] == PointKind::Core).collect();
        let core_parts: BTreeSet<Vec<usize>> = model
            .partition()
            .into_iter()
            .map(|g| g.into_iter().filter(|p| kinds[*p] == PointKind::Core).collect())
            .collect();
        prop_assert_eq!(core_parts, components(&x, eps, &cores));
        for (p, label) in model.labels.iter().enumerate() {
            match kinds[p] {
                PointKind::Noise => prop_assert_eq!(*label, Label::Noise),
                PointKind::Border => {
                    let Label::Mode(id) = label else { return Err(TestCaseError::fail("border as noise")) };
                    let ok = model.members(*id).iter().any(|&q| kinds[q] == PointKind::Core && within(&x, p, q, eps));
                    prop_assert!(ok, "border {} not adjacent to a core of its mode", p);
                }
                PointKind::Core => prop_assert!(label.mode().is_some()),
            }
        }
    }

    #[test]
    fn incremental_matches_batch_any_order(
        x in points(50, 4),
        eps in 0.1f64..1.5,
        order_seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let n = x.rows();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(order_seed));
        let mut model: ClusterModel = dbscan_fit(&Matrix::from_rows(&[x.row(order[0])]), eps, 1).unwrap();
        for &i in &order[1..] {
            model.assign_incremental(x.row(i)).unwrap();
        }
        // map insertion positions back to original row indices
        let remapped: BTreeSet<Vec<usize>> = model
            .partition()
            .into_iter()
            .map(|g| {
                let mut v: Vec<usize> = g.into_iter().map(|pos| order[pos]).collect();
                v.sort_unstable();
                v
            })
            .collect();
        prop_assert_eq!(remapped, dbscan_fit(&x, eps, 1).unwrap().partition());
        prop_assert!(model.violations().is_empty());
    }

    #[test]
    fn k_distance_matches_brute_force(x in points(30, 3), k in 1usize..4) {
        prop_assume!(x.rows() > k);
        let curve = k_distance(&x, k).unwrap();
        let mut expected: Vec<f64> = (0..x.rows())
            .map(|p| {
                let mut d: Vec<f64> = (0..x.rows()).filter(|&q| q != p).map(|q| euclidean(x.row(p), x.row(q))).collect();
                d.sort_by(f64::total_cmp);
                d[k - 1]
            })
            .collect();
        expected.sort_by(f64::total_cmp);
        prop_assert_eq!(curve.sorted_distances, expected);
    }
}

#[test]
fn merged_ids_are_never_reused() {
    let x = Matrix::from_rows(&[[0.0], [2.0]]);
    let mut m = dbscan_fit(&x, 1.0, 1).unwrap();
    m.assign_incremental(&[1.0]).unwrap();
    assert_eq!(m.mode_ids(), vec![0]);
    match m.assign_incremental(&[10.0]).unwrap() {
        opmode_core::dbscan::Outcome::NewMode(id) => assert_eq!(id, 2),
        other => panic!("unexpected {other:?}"),
    }
}
