use opmode_wasm_demo::Session;

#[test]
fn default_radius_recovers_planted_regimes() {
    let s = Session::new(0).unwrap();
    let c = s.clustering();
    assert_eq!(c.ari, 1.0);
    assert_eq!(c.mode_count, 4);
    assert_eq!(c.points.len(), s.summary().n_samples);
    assert_eq!(s.summary().regimes.len(), 3);
}

#[test]
fn explanations_match_the_fitted_bundle() {
    let s = Session::new(1).unwrap();
    for (id, stored) in &s.bundle().mode_explanations {
        assert_eq!(&s.explain(*id).unwrap(), stored);
    }
    assert!(s.explain(999).is_err());
}

#[test]
fn radius_controls_mode_count() {
    let mut s = Session::new(2).unwrap();
    let k = s.kdistance().unwrap();
    assert!(k.distances.windows(2).all(|w| w[0] <= w[1]));
    let huge = s.cluster(1e6).unwrap();
    assert_eq!(huge.mode_count, 1);
    let tiny = s.cluster(1e-9).unwrap();
    assert_eq!(tiny.mode_count, tiny.points.len());
    let back = s.cluster(k.knee_epsilon).unwrap();
    assert_eq!(back.ari, 1.0);
}

#[test]
fn json_is_plottable() {
    let s = Session::new(3).unwrap();
    let v = serde_json::to_value(s.clustering()).unwrap();
    let p = &v["points"][0];
    for key in ["timestamp", "x", "y", "mode", "truth"] {
        assert!(p.get(key).is_some(), "{key}");
    }
}
