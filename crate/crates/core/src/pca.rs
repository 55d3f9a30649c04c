//! Covariance PCA: Jacobi eigendecomposition, component selection and projection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knee::elbow_index;
use crate::matrix::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum PcaError {
    #[error("covariance needs at least 2 samples, got {0}")]
    InsufficientData(usize),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),
    #[error("eigenvalue spectrum is empty or all zero")]
    DegenerateSpectrum,
    #[error("expected {expected} columns, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("invalid component policy: {0}")]
    Policy(String),
}

const SYMMETRY_TOL: f64 = 1e-9;
const MAX_SWEEPS: usize = 100;
const CONVERGENCE: f64 = 1e-12;

/// `C = XᵀX / (n − 1)` for column-standardized `X`.
pub fn covariance(x: &Matrix) -> Result<Matrix, PcaError> {
    let (n, m) = (x.rows(), x.cols());
    if n < 2 {
        return Err(PcaError::InsufficientData(n));
    }
    let mut c = Matrix::zeros(m, m);
    for row in x.row_iter() {
        for i in 0..m {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            let dst = &mut c.row_mut(i)[i..];
            for (d, &rj) in dst.iter_mut().zip(&row[i..]) {
                *d += ri * rj;
            }
        }
    }
    let scale = 1.0 / (n - 1) as f64;
    for i in 0..m {
        for j in i..m {
            let v = c[(i, j)] * scale;
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Eigenvectors stored as columns.
    pub vectors: Matrix,
}

/// Cyclic Jacobi eigensolver.
///
/// Sweeps stop when the off-diagonal Frobenius norm drops below
/// `1e-12 * ||C||_F` or after 100 sweeps. Each eigenvector is signed so its
/// largest-magnitude entry is positive (first such entry on ties).
pub fn eigen_sym(c: &Matrix) -> Result<SymmetricEigen, PcaError> {
    let m = c.rows();
    if c.cols() != m {
        return Err(PcaError::NotSquare(m, c.cols()));
    }
    if !c.is_finite() {
        return Err(PcaError::NonFinite);
    }
    let mut asym: f64 = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            asym = asym.max((c[(i, j)] - c[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOL {
        return Err(PcaError::NotSymmetric(asym));
    }

    // symmetrize exactly so row updates can be mirrored into columns
    let mut a = c.clone();
    for i in 0..m {
        for j in i + 1..m {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    // rows of `vt` are the eigenvectors
    let mut vt = Matrix::identity(m);
    let target = CONVERGENCE * a.frobenius_norm();

    for _ in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off <= target || off == 0.0 {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                rotate(&mut a, &mut vt, p, q, apq);
            }
        }
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(m, m);
    for (col, &src) in order.iter().enumerate() {
        let v = vt.row(src);
        let sign = sign_of_dominant(v);
        for (r, &x) in v.iter().enumerate() {
            vectors[(r, col)] = sign * x;
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let m = a.rows();
    let mut s = 0.0;
    for i in 0..m {
        for (j, v) in a.row(i).iter().enumerate() {
            if i != j {
                s += v * v;
            }
        }
    }
    s.sqrt()
}

fn rotate(a: &mut Matrix, vt: &mut Matrix, p: usize, q: usize, apq: f64) {
    let m = a.rows();
    let (app, aqq) = (a[(p, p)], a[(q, q)]);
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.is_finite() {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    } else {
        0.0
    };
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // rows p and q of A' = Jᵀ A J, then mirror into the columns
    for k in 0..m {
        if k == p || k == q {
            continue;
        }
        let akp = a[(p, k)];
        let akq = a[(q, k)];
        let np = c * akp - s * akq;
        let nq = s * akp + c * akq;
        a[(p, k)] = np;
        a[(k, p)] = np;
        a[(q, k)] = nq;
        a[(k, q)] = nq;
    }
    a[(p, p)] = app - t * apq;
    a[(q, q)] = aqq + t * apq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;

    let (rp, rq) = vt.two_rows_mut(p, q);
    for (vp, vq) in rp.iter_mut().zip(rq.iter_mut()) {
        let (x, y) = (*vp, *vq);
        *vp = c * x - s * y;
        *vq = s * x + c * y;
    }
}

/// +1 or −1 so that the largest-magnitude entry becomes positive.
fn sign_of_dominant(v: &[f64]) -> f64 {
    let max = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let tol = max * 1e-12;
    match v.iter().find(|x| x.abs() >= max - tol) {
        Some(&x) if x < 0.0 => -1.0,
        _ => 1.0,
    }
}

/// How many principal components to keep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentPolicy {
    /// Knee of the scree curve.
    #[default]
    Elbow,
    /// Smallest k whose cumulative explained ratio reaches the target.
    VarianceTarget(f64),
    Fixed(usize),
}

impl std::str::FromStr for ComponentPolicy {
    type Err = String;

    /// `elbow`, `variance:0.9` or `fixed:7` (a bare integer also means fixed).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("elbow") {
            return Ok(ComponentPolicy::Elbow);
        }
        if let Some(f) = s.strip_prefix("variance:") {
            return f
                .parse()
                .map(ComponentPolicy::VarianceTarget)
                .map_err(|_| format!("bad variance target {f:?}"));
        }
        let k = s.strip_prefix("fixed:").unwrap_or(s);
        k.parse()
            .map(ComponentPolicy::Fixed)
            .map_err(|_| format!("bad component policy {s:?}"))
    }
}

pub fn choose_k(eigenvalues: &[f64], policy: ComponentPolicy) -> Result<usize, PcaError> {
    let m = eigenvalues.len();
    let total: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if m == 0 || !(total > 0.0) {
        return Err(PcaError::DegenerateSpectrum);
    }
    match policy {
        ComponentPolicy::Fixed(k) => Ok(k.clamp(1, m)),
        ComponentPolicy::VarianceTarget(f) => {
            if !(0.0..=1.0).contains(&f) {
                return Err(PcaError::Policy(format!("variance target {f} outside [0, 1]")));
            }
            let mut acc = 0.0;
            for (i, v) in eigenvalues.iter().enumerate() {
                acc += v.max(0.0);
                if acc / total >= f {
                    return Ok(i + 1);
                }
            }
            Ok(m)
        }
        ComponentPolicy::Elbow => {
            let clipped: Vec<f64> = eigenvalues.iter().map(|v| v.max(0.0)).collect();
            Ok(elbow_index(&clipped).map_or(1, |i| i + 1))
        }
    }
}

/// Fitted principal-component model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// `m x k`, orthonormal columns.
    pub loadings: Matrix,
    /// All `m` eigenvalues, descending, negatives clipped to zero.
    pub eigenvalues: Vec<f64>,
    pub k: usize,
    pub explained_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreePoint {
    pub index: usize,
    pub eigenvalue: f64,
    pub cumulative_ratio: f64,
}

impl PcaModel {
    /// Fits on an already standardized `n x m` matrix.
    pub fn fit(x: &Matrix, policy: ComponentPolicy) -> Result<PcaModel, PcaError> {
        if !x.is_finite() {
            return Err(PcaError::NonFinite);
        }
        let c = covariance(x)?;
        let eig = eigen_sym(&c)?;
        let k = choose_k(&eig.values, policy)?;
        Ok(PcaModel::from_eigen(eig, k))
    }

    pub fn from_eigen(eig: SymmetricEigen, k: usize) -> PcaModel {
        let m = eig.values.len();
        let k = k.clamp(1, m.max(1));
        let eigenvalues: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
        let mut loadings = Matrix::zeros(m, k);
        for i in 0..m {
            for j in 0..k {
                loadings[(i, j)] = eig.vectors[(i, j)];
            }
        }
        let total: f64 = eigenvalues.iter().sum();
        let kept: f64 = eigenvalues[..k].iter().sum();
        let explained_ratio = if total > 0.0 { (kept / total).clamp(0.0, 1.0) } else { 0.0 };
        PcaModel {
            loadings,
            eigenvalues,
            k,
            explained_ratio,
        }
    }

    pub fn n_variables(&self) -> usize {
        self.loadings.rows()
    }

    /// `X V_k`.
    pub fn project(&self, x: &Matrix) -> Result<Matrix, PcaError> {
        if x.cols() != self.n_variables() {
            return Err(PcaError::Shape {
                expected: self.n_variables(),
                got: x.cols(),
            });
        }
        Ok(x.matmul(&self.loadings))
    }

    pub fn project_row(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, &l) in out.iter_mut().zip(self.loadings.row(i)) {
                *o += xi * l;
            }
        }
        out
    }

    /// `X_new V_kᵀ`, back in standardized variable space.
    pub fn reconstruct(&self, scores: &Matrix) -> Matrix {
        scores.matmul(&self.loadings.transpose())
    }

    pub fn scree(&self) -> Vec<ScreePoint> {
        let total: f64 = self.eigenvalues.iter().sum();
        let mut acc = 0.0;
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                acc += v;
                ScreePoint {
                    index: i + 1,
                    eigenvalue: v,
                    cumulative_ratio: if total > 0.0 { acc / total } else { 0.0 },
                }
            })
            .collect()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let m = self.eigenvalues.len();
        if self.loadings.rows() != m {
            out.push(format!("loadings have {} rows for {} eigenvalues", self.loadings.rows(), m));
        }
        if self.loadings.cols() != self.k || self.k == 0 || self.k > m {
            out.push(format!("k = {} inconsistent with {} loading columns", self.k, self.loadings.cols()));
        }
        if self.eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            out.push("eigenvalues are not descending".into());
        }
        if self.eigenvalues.iter().any(|v| !v.is_finite() || *v < 0.0) {
            out.push("eigenvalues must be finite and non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.explained_ratio) {
            out.push(format!("explained ratio {} outside [0, 1]", self.explained_ratio));
        }
        if !self.loadings.is_finite() {
            out.push("loadings contain non-finite values".into());
        }
        out
    }
}
