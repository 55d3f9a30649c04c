//! Shapley values of a black-box function over "present" / "absent" features.
//!
//! Absent features take background values; with several background rows the
//! coalition value is the mean over rows.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ShapConfig, ShapError};
use crate::matrix::Matrix;

/// Upper bound on exhaustive enumeration regardless of configuration.
pub const MAX_EXACT_FEATURES: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub phi: Vec<f64>,
    pub base_value: f64,
    pub target_value: f64,
}

impl Attribution {
    /// `Σφ − (f(x) − f(background))`.
    pub fn efficiency_gap(&self) -> f64 {
        self.phi.iter().sum::<f64>() - (self.target_value - self.base_value)
    }
}

struct Game<'a, F> {
    f: &'a F,
    x: &'a [f64],
    background: &'a Matrix,
    buf: Vec<f64>,
}

impl<'a, F: Fn(&[f64]) -> f64> Game<'a, F> {
    fn new(f: &'a F, x: &'a [f64], background: &'a Matrix) -> Result<Self, ShapError> {
        if x.is_empty() {
            return Err(ShapError::Parameter("no features to explain".into()));
        }
        if background.rows() == 0 || background.cols() != x.len() {
            return Err(ShapError::Shape {
                expected: x.len(),
                got: background.cols(),
            });
        }
        Ok(Game {
            f,
            x,
            background,
            buf: vec![0.0; x.len()],
        })
    }

    fn m(&self) -> usize {
        self.x.len()
    }

    /// Value of the coalition whose members are listed in `present`.
    fn value(&mut self, present: &[usize]) -> f64 {
        let mut total = 0.0;
        for r in 0..self.background.rows() {
            self.buf.copy_from_slice(self.background.row(r));
            for &i in present {
                self.buf[i] = self.x[i];
            }
            total += (self.f)(&self.buf);
        }
        total / self.background.rows() as f64
    }

    fn value_mask(&mut self, mask: u64) -> f64 {
        let present: Vec<usize> = (0..self.m()).filter(|i| mask >> i & 1 == 1).collect();
        self.value(&present)
    }
}

/// Exact Shapley values by enumerating all `2^m` coalitions.
pub fn shapley_exact<F: Fn(&[f64]) -> f64>(
    f: &F,
    x: &[f64],
    background: &Matrix,
    max_features: usize,
) -> Result<Attribution, ShapError> {
    let m = x.len();
    let limit = max_features.min(MAX_EXACT_FEATURES);
    if m > limit {
        return Err(ShapError::Budget { features: m, threshold: limit });
    }
    let mut game = Game::new(f, x, background)?;
    let full = (1u64 << m) - 1;
    let values: Vec<f64> = (0..=full).map(|mask| game.value_mask(mask)).collect();
    // |S|!(m-|S|-1)!/m! = 1 / (m * C(m-1, |S|))
    let weights: Vec<f64> = (0..m).map(|s| 1.0 / (m as f64 * binom(m - 1, s))).collect();
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1u64 << i;
        let mut acc = 0.0;
        for mask in 0..=full {
            if mask & bit == 0 {
                let s = mask.count_ones() as usize;
                acc += weights[s] * (values[(mask | bit) as usize] - values[mask as usize]);
            }
        }
        *p = acc;
    }
    Ok(Attribution {
        phi,
        base_value: values[0],
        target_value: values[full as usize],
    })
}

/// `C(n, k)` as a float; exact for the small cases used in weights.
pub fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley kernel weight of a coalition of size `s` out of `m` features.
pub fn kernel_weight(m: usize, s: usize) -> f64 {
    (m - 1) as f64 / (binom(m, s) * s as f64 * (m - s) as f64)
}

/// KernelSHAP: constrained weighted least squares over coalitions.
///
/// Up to `exact_threshold` features every non-trivial coalition is used with
/// its exact kernel weight, which reproduces the Shapley values. Beyond that
/// coalitions are drawn in complementary pairs, fully enumerating the
/// smallest sizes when the budget allows. The empty and full coalitions
/// enter as an equality constraint, so `Σφ = f(x) − f(background)` exactly.
pub fn kernel_shap<F: Fn(&[f64]) -> f64>(
    f: &F,
    x: &[f64],
    background: &Matrix,
    config: &ShapConfig,
) -> Result<Attribution, ShapError> {
    let mut game = Game::new(f, x, background)?;
    let m = game.m();
    let base = game.value(&[]);
    let all: Vec<usize> = (0..m).collect();
    let target = game.value(&all);
    if m == 1 {
        return Ok(Attribution {
            phi: vec![target - base],
            base_value: base,
            target_value: target,
        });
    }
    let coalitions = if m <= config.exact_threshold.min(MAX_EXACT_FEATURES) {
        enumerate_all(m)
    } else {
        let needed = 2 * m + 2;
        if config.coalition_budget < needed {
            return Err(ShapError::BudgetTooSmall {
                budget: config.coalition_budget,
                needed,
            });
        }
        sample_coalitions(m, config.coalition_budget, config.seed)
    };
    let phi = solve(&mut game, &coalitions, base, target)?;
    Ok(Attribution {
        phi,
        base_value: base,
        target_value: target,
    })
}

/// A coalition as its sorted member list with a regression weight.
type Weighted = Vec<(Vec<usize>, f64)>;

fn enumerate_all(m: usize) -> Weighted {
    let full = (1u64 << m) - 1;
    (1..full)
        .map(|mask| {
            let members: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
            let w = kernel_weight(m, members.len());
            (members, w)
        })
        .collect()
}

fn complement(m: usize, members: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(m - members.len());
    let mut it = members.iter().peekable();
    for i in 0..m {
        if it.peek() == Some(&&i) {
            it.next();
        } else {
            out.push(i);
        }
    }
    out
}

fn combinations(m: usize, s: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..s).collect();
    loop {
        visit(&idx);
        let mut i = s;
        while i > 0 && idx[i - 1] == m - s + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..s {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn sample_coalitions(m: usize, budget: usize, seed: u64) -> Weighted {
    let n_sizes = m / 2; // sizes 1..=n_sizes, paired with m - s
    let n_paired = (m - 1) / 2;
    let mut weight_by_size: Vec<f64> = (1..=n_sizes)
        .map(|s| {
            let w = (m - 1) as f64 / (s * (m - s)) as f64;
            if s <= n_paired {
                2.0 * w
            } else {
                w
            }
        })
        .collect();
    let total: f64 = weight_by_size.iter().sum();
    weight_by_size.iter_mut().for_each(|w| *w /= total);

    let mut out: Weighted = Vec::new();
    let mut left = budget as f64;
    let mut remaining = weight_by_size.clone();
    let mut n_full = 0;
    for s in 1..=n_sizes {
        let paired = s <= n_paired;
        let count = binom(m, s) * if paired { 2.0 } else { 1.0 };
        if left * remaining[s - 1] / count < 1.0 - 1e-8 {
            break;
        }
        n_full = s;
        left -= count;
        let mut w = weight_by_size[s - 1] / binom(m, s);
        if paired {
            w /= 2.0;
        }
        combinations(m, s, |c| {
            out.push((c.to_vec(), w));
            if paired {
                out.push((complement(m, c), w));
            }
        });
        let rest = 1.0 - remaining[s - 1];
        if rest > 0.0 {
            for r in remaining.iter_mut().skip(s) {
                *r /= rest;
            }
        }
    }

    if n_full < n_sizes && left >= 1.0 {
        let sizes: Vec<usize> = (n_full + 1..=n_sizes).collect();
        let probs: Vec<f64> = sizes.iter().map(|&s| weight_by_size[s - 1]).collect();
        let leftover_weight: f64 = probs.iter().sum();
        let cumulative: Vec<f64> = probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p / leftover_weight;
                Some(*acc)
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        let mut draws = left as usize;
        while draws > 0 {
            let u: f64 = rng.random();
            let pick = cumulative.iter().position(|c| u < *c).unwrap_or(sizes.len() - 1);
            let s = sizes[pick];
            let mut members = index::sample(&mut rng, m, s).into_vec();
            members.sort_unstable();
            if s <= n_paired && draws > 1 {
                *counts.entry(complement(m, &members)).or_insert(0.0) += 1.0;
                draws -= 1;
            }
            *counts.entry(members).or_insert(0.0) += 1.0;
            draws -= 1;
        }
        let total_count: f64 = counts.values().sum();
        for (members, c) in counts {
            out.push((members, c * leftover_weight / total_count));
        }
    }
    out
}

fn solve<F: Fn(&[f64]) -> f64>(
    game: &mut Game<'_, F>,
    coalitions: &Weighted,
    base: f64,
    target: f64,
) -> Result<Vec<f64>, ShapError> {
    let m = game.m();
    let last = m - 1;
    let delta = target - base;
    let dim = m - 1;
    // φ_last = Δ − Σ_{i<last} φ_i; regress on a_i = z_i − z_last
    let mut ata = vec![0.0; dim * dim];
    let mut atb = vec![0.0; dim];
    let mut nz: Vec<usize> = Vec::with_capacity(m);
    for (members, w) in coalitions {
        let y = game.value(members) - base;
        let has_last = members.last() == Some(&last);
        nz.clear();
        let (sign, t) = if has_last {
            nz.extend(complement(m, members));
            (-1.0, y - delta)
        } else {
            nz.extend_from_slice(members);
            (1.0, y)
        };
        for (a, &i) in nz.iter().enumerate() {
            atb[i] += w * sign * t;
            let row = &mut ata[i * dim..(i + 1) * dim];
            for &j in &nz[..=a] {
                row[j] += w;
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            ata[j * dim + i] = ata[i * dim + j];
        }
    }
    let a = DMatrix::from_row_slice(dim, dim, &ata);
    let b = DVector::from_column_slice(&atb);
    let sol = match a.clone().cholesky() {
        Some(ch) => Some(ch.solve(&b)),
        None => a.lu().solve(&b),
    }
    .filter(|v| v.iter().all(|x| x.is_finite()))
    .ok_or(ShapError::DegenerateSampling)?;
    let mut phi: Vec<f64> = sol.iter().copied().collect();
    phi.push(delta - phi.iter().sum::<f64>());
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_bg(m: usize) -> Matrix {
        Matrix::zeros(1, m)
    }

    #[test]
    fn single_feature() {
        let f = |x: &[f64]| x[0];
        let a = shapley_exact(&f, &[7.0], &zero_bg(1), 12).unwrap();
        assert_eq!(a.phi, vec![7.0]);
        let k = kernel_shap(&f, &[7.0], &zero_bg(1), &ShapConfig::default()).unwrap();
        assert_eq!(k.phi, vec![7.0]);
    }

    #[test]
    fn symmetric_sum() {
        let f = |x: &[f64]| x[0] + x[1];
        let a = shapley_exact(&f, &[1.0, 1.0], &zero_bg(2), 12).unwrap();
        assert_eq!(a.phi, vec![1.0, 1.0]);
    }

    #[test]
    fn product_by_enumeration() {
        // S = {}: 0, {1}: 0, {2}: 0, {1,2}: 6 → each marginal averages to 3
        let f = |x: &[f64]| x[0] * x[1];
        let a = shapley_exact(&f, &[2.0, 3.0], &zero_bg(2), 12).unwrap();
        assert_eq!(a.phi, vec![3.0, 3.0]);
    }

    #[test]
    fn linear_closed_form_via_kernel() {
        let f = |x: &[f64]| 2.0 * x[0] + 3.0 * x[1];
        let a = kernel_shap(&f, &[1.0, 1.0], &zero_bg(2), &ShapConfig::default()).unwrap();
        assert!((a.phi[0] - 2.0).abs() < 1e-12 && (a.phi[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn exact_over_budget() {
        let f = |x: &[f64]| x.iter().sum::<f64>();
        let x = vec![1.0; 5];
        assert_eq!(
            shapley_exact(&f, &x, &zero_bg(5), 4).unwrap_err(),
            ShapError::Budget { features: 5, threshold: 4 }
        );
    }

    #[test]
    fn sampling_needs_budget() {
        let f = |x: &[f64]| x.iter().sum::<f64>();
        let x = vec![1.0; 20];
        let cfg = ShapConfig { exact_threshold: 4, coalition_budget: 10, ..ShapConfig::default() };
        assert_eq!(
            kernel_shap(&f, &x, &zero_bg(20), &cfg).unwrap_err(),
            ShapError::BudgetTooSmall { budget: 10, needed: 42 }
        );
    }

    #[test]
    fn combinations_count() {
        let mut n = 0;
        combinations(6, 3, |c| {
            assert!(c.windows(2).all(|w| w[0] < w[1]));
            n += 1;
        });
        assert_eq!(n, 20);
    }

    #[test]
    fn sampled_weights_cover_small_sizes() {
        // with a generous budget sizes 1 and m-1 are enumerated completely
        let c = sample_coalitions(10, 2000, 1);
        assert_eq!(c.iter().filter(|(s, _)| s.len() == 1).count(), 10);
        assert_eq!(c.iter().filter(|(s, _)| s.len() == 9).count(), 10);
        assert!(c.iter().all(|(s, w)| !s.is_empty() && s.len() < 10 && *w > 0.0));
    }

    #[test]
    fn complement_lists() {
        assert_eq!(complement(5, &[1, 3]), vec![0, 2, 4]);
        assert_eq!(complement(3, &[]), vec![0, 1, 2]);
    }
}
