//! Elbow detection by maximum distance to the end-to-end chord.

/// Index of the point farthest from the straight line joining the first and
/// last points, with both axes scaled to `[0, 1]`. The first index wins ties.
///
/// Returns `None` for an empty curve or one whose values are all equal.
pub fn elbow_index(values: &[f64]) -> Option<usize> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return None;
    }
    if n < 3 {
        return Some(0);
    }
    let x = |i: usize| i as f64 / (n - 1) as f64;
    let y = |i: usize| (values[i] - lo) / span;
    let (x0, y0) = (0.0, y(0));
    let (dx, dy) = (1.0, y(n - 1) - y0);
    let norm = (dx * dx + dy * dy).sqrt();
    let mut best = 0;
    let mut best_d = f64::NEG_INFINITY;
    for i in 0..n {
        let d = (dy * (x(i) - x0) - dx * (y(i) - y0)).abs() / norm;
        if d > best_d {
            best_d = d;
            best = i;
        }
    }
    Some(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Unnormalized chord distance, computed directly on (index, value).
    fn raw_oracle(v: &[f64]) -> usize {
        let n = v.len();
        let (x1, y1) = ((n - 1) as f64, v[n - 1]);
        let (dx, dy) = (x1, y1 - v[0]);
        let mut best = (0, -1.0);
        for (i, &yi) in v.iter().enumerate() {
            let d = (dy * i as f64 - dx * (yi - v[0])).abs() / (dx * dx + dy * dy).sqrt();
            if d > best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    #[test]
    fn scree_example() {
        // by hand: cross products 26.7, 17.8, 8.9 for i = 1, 2, 3
        assert_eq!(elbow_index(&[10.0, 1.0, 0.9, 0.8, 0.7]), Some(1));
    }

    #[test]
    fn jump_curve() {
        assert_eq!(elbow_index(&[1.0, 1.0, 1.0, 1.0, 9.0, 10.0]), Some(3));
        assert_eq!(elbow_index(&[1.0, 2.0, 3.0, 4.0, 5.0, 100.0]), Some(4));
    }

    #[test]
    fn flat_is_none() {
        assert_eq!(elbow_index(&[2.0; 5]), None);
        assert_eq!(elbow_index(&[]), None);
    }

    #[test]
    fn normalization_does_not_move_the_argmax() {
        let curves: [&[f64]; 4] = [
            &[0.1, 0.2, 0.25, 0.3, 3.0, 3.2],
            &[50.0, 20.0, 10.0, 9.0, 8.5, 8.0, 1.0],
            &[1.0, 1.5, 1.7, 1.8, 1.85, 40.0, 41.0, 300.0],
            &[5.0, 4.0, 3.0, 2.0, 0.5],
        ];
        for c in curves {
            assert_eq!(elbow_index(c), Some(raw_oracle(c)), "{c:?}");
        }
    }
}
