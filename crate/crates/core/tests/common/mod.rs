//! Test-only oracles, written independently of the library's numerics.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sensor_select::MeasurementMatrix;

pub fn gaussian(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_rows(seed: u64, rows: usize, cols: usize) -> MeasurementMatrix {
    MeasurementMatrix::new(gaussian(seed, rows, cols)).unwrap()
}

/// `A^T diag(w) A` as a full matrix product.
pub fn weighted_gram(a: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(w));
    a.transpose() * d * a
}

/// `log det` through LU; `-inf` when the determinant is not positive.
pub fn oracle_log_det(a: &DMatrix<f64>, w: &[f64]) -> f64 {
    let det = weighted_gram(a, w).lu().determinant();
    if det > 0.0 { det.ln() } else { f64::NEG_INFINITY }
}

/// All k-subsets of 0..m in lexicographic order.
pub fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            if m - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, k, &mut Vec::new(), &mut out);
    out
}

pub fn indicator(m: usize, idx: &[usize]) -> Vec<f64> {
    let mut w = vec![0.0; m];
    for &i in idx {
        w[i] = 1.0;
    }
    w
}

/// Best Boolean objective over all budget-k selections.
pub fn boolean_optimum(a: &DMatrix<f64>, k: usize) -> f64 {
    subsets(a.nrows(), k)
        .iter()
        .map(|s| oracle_log_det(a, &indicator(a.nrows(), s)))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Euclidean projection onto `{0 <= z <= 1, sum z = k}` by bisection on the shift.
pub fn project_capped_simplex(y: &[f64], k: f64) -> Vec<f64> {
    let clip = |t: f64| y.iter().map(|v| (v - t).clamp(0.0, 1.0)).collect::<Vec<_>>();
    let total = |t: f64| clip(t).iter().sum::<f64>();
    let (mut lo, mut hi) = (
        y.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0,
        y.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > k { lo = mid } else { hi = mid }
    }
    clip(0.5 * (lo + hi))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
