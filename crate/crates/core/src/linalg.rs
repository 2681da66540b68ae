//! Small dense helpers on top of nalgebra: a pivot-reporting Cholesky
//! factorization, SPD solves, numerical rank, and an ordered symmetric
//! eigendecomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// First non-positive pivot met while factorizing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailedPivot {
    pub index: usize,
    pub value: f64,
}

/// Lower-triangular factor `L` with `M = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: DMatrix<f64>,
}

impl Cholesky {
    /// Factorizes the lower triangle of `m`; the upper triangle is never read.
    pub fn new(m: &DMatrix<f64>) -> Result<Self, FailedPivot> {
        let n = m.nrows();
        assert_eq!(n, m.ncols(), "Cholesky needs a square matrix");
        let mut lower = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= lower[(j, k)] * lower[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(FailedPivot { index: j, value: d });
            }
            let ljj = d.sqrt();
            lower[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= lower[(i, k)] * lower[(j, k)];
                }
                lower[(i, j)] = s / ljj;
            }
        }
        Ok(Self { lower })
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// `log det M = 2 Σ log L_jj`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `L^{-1} B`.
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lower
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `M^{-1} b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self
            .lower
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal");
        self.lower
            .tr_solve_lower_triangular(&y)
            .expect("Cholesky factor has a positive diagonal")
    }
}

/// Numerical rank with threshold `max(r, c) * eps * sigma_max`.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let sv = a.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let tol = a.nrows().max(a.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending. Each
/// eigenvector is unit-norm and its largest-magnitude component (first one
/// on ties) is positive.
pub fn symmetric_eigen_descending(m: &DMatrix<f64>) -> Vec<(f64, DVector<f64>)> {
    let eig = SymmetricEigen::new(m.clone());
    let mut pairs: Vec<(f64, DVector<f64>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(j, &lambda)| {
            let mut u: DVector<f64> = eig.eigenvectors.column(j).into_owned();
            let norm = u.norm();
            if norm > 0.0 {
                u /= norm;
            }
            let mut pivot = 0;
            for i in 1..u.len() {
                if u[i].abs() > u[pivot].abs() {
                    pivot = i;
                }
            }
            if u[pivot] < 0.0 {
                u = -u;
            }
            (lambda, u)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}
