//! Log-barrier interior-point method for the relaxed selection problems
//!
//! ```text
//! maximize   log det(Σ z_i a_i a_i^T + S) - c^T z
//! subject to 1^T z = k,  0 <= z_i <= 1
//! ```
//!
//! where the augmentation `S` and the linear cost `c` are optional. The
//! centralized, naive, focused-diversity and linear-penalty problems are all
//! instances of [`RelaxedProblem`].
//!
//! The barrier subproblem maximizes `ψ(z) = f(z) + κ Σ (log z_i + log(1 - z_i))`
//! with a feasible-start Newton method; `κ` shrinks geometrically until the
//! `2 m κ` suboptimality bound is negligible.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::model::{self, MeasurementMatrix, SelectionVector};

/// Relaxed selection problem over the rows of one measurement matrix.
#[derive(Debug, Clone)]
pub struct RelaxedProblem {
    rows: MeasurementMatrix,
    budget: usize,
    augmentation: Option<DMatrix<f64>>,
    linear_cost: Option<DVector<f64>>,
}

impl RelaxedProblem {
    /// Requires `1 <= budget < m` so that the box/simplex intersection has
    /// a strict interior.
    pub fn new(rows: MeasurementMatrix, budget: usize) -> Result<Self> {
        if budget == 0 || budget >= rows.m() {
            return Err(Error::InvalidProblem(format!(
                "budget {budget} must satisfy 1 <= k < m = {}",
                rows.m()
            )));
        }
        Ok(Self {
            rows,
            budget,
            augmentation: None,
            linear_cost: None,
        })
    }

    /// Adds a symmetric positive semidefinite `S` to the information matrix.
    pub fn with_augmentation(mut self, s: DMatrix<f64>) -> Result<Self> {
        let n = self.rows.n();
        if s.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                what: "augmentation size",
                expected: n,
                actual: s.nrows(),
            });
        }
        let scale = s.amax().max(1.0);
        if s.iter().any(|v| !v.is_finite()) || (&s - s.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidProblem("augmentation must be symmetric".into()));
        }
        let min_eig = s.symmetric_eigenvalues().min();
        if min_eig < -1e-10 * scale {
            return Err(Error::InvalidProblem(format!(
                "augmentation is not positive semidefinite (eigenvalue {min_eig:e})"
            )));
        }
        self.augmentation = Some(s);
        Ok(self)
    }

    /// Subtracts `c^T z` from the objective; `c` must be non-negative.
    pub fn with_linear_cost(mut self, c: DVector<f64>) -> Result<Self> {
        if c.len() != self.rows.m() {
            return Err(Error::DimensionMismatch {
                what: "linear cost length",
                expected: self.rows.m(),
                actual: c.len(),
            });
        }
        if let Some((i, v)) = c.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "linear cost c[{i}] = {v} must be finite and non-negative"
            )));
        }
        self.linear_cost = Some(c);
        Ok(self)
    }

    pub fn rows(&self) -> &MeasurementMatrix {
        &self.rows
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn augmentation(&self) -> Option<&DMatrix<f64>> {
        self.augmentation.as_ref()
    }

    pub fn linear_cost(&self) -> Option<&DVector<f64>> {
        self.linear_cost.as_ref()
    }

    pub fn m(&self) -> usize {
        self.rows.m()
    }

    fn check_len(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.m() {
            return Err(Error::DimensionMismatch {
                what: "iterate length",
                expected: self.m(),
                actual: z.len(),
            });
        }
        Ok(())
    }

    fn penalty(&self, z: &[f64]) -> f64 {
        self.linear_cost
            .as_ref()
            .map_or(0.0, |c| c.iter().zip(z).map(|(c, z)| c * z).sum())
    }

    /// `f(z) = log det(Σ z_i a_i a_i^T + S) - c^T z`, without the barrier.
    pub fn objective(&self, z: &[f64]) -> Result<f64> {
        self.check_len(z)?;
        let log_det =
            model::log_det_objective(self.rows.matrix(), z, self.augmentation.as_ref())?;
        Ok(log_det - self.penalty(z))
    }

    /// `f(z)` and the Gram matrix `G = A W A^T`, `W` the inverse information
    /// matrix, formed by triangular solves.
    fn objective_and_gram(&self, z: &[f64]) -> Result<(f64, DMatrix<f64>)> {
        self.check_len(z)?;
        let info = model::information_matrix(self.rows.matrix(), z, self.augmentation.as_ref())?;
        let chol = Cholesky::new(&info).map_err(|p| Error::SingularInformation {
            index: p.index,
            pivot: p.value,
        })?;
        let b = chol.solve_lower(&self.rows.matrix().transpose());
        let gram = b.tr_mul(&b);
        Ok((chol.log_det() - self.penalty(z), gram))
    }
}

/// Tunables of the barrier method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// Initial barrier weight.
    pub kappa0: f64,
    /// Divisor applied to `κ` after each centering stage.
    pub kappa_shrink: f64,
    /// Stop once `2 m κ < outer_tol`, which bounds the absolute suboptimality.
    pub outer_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Centering ends when half the squared Newton decrement drops below this...
    pub newton_tol: f64,
    /// ...and the zero-sum-projected gradient of ψ is below this in max norm.
    pub stationarity_tol: f64,
    pub ls_alpha: f64,
    pub ls_beta: f64,
    /// Fraction of the distance to the box boundary a step may cover.
    pub boundary_fraction: f64,
    /// Wall-clock limit; the solve fails with [`Error::DeadlineExceeded`]
    /// once it has passed.
    #[serde(skip)]
    pub deadline: Option<Instant>,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            kappa0: 1.0,
            kappa_shrink: 10.0,
            outer_tol: 1e-6,
            max_outer: 12,
            max_inner: 50,
            newton_tol: 1e-9,
            stationarity_tol: 1e-7,
            ls_alpha: 0.01,
            ls_beta: 0.5,
            boundary_fraction: 0.99,
            deadline: None,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.kappa0 > 0.0
            && self.kappa_shrink > 1.0
            && self.outer_tol > 0.0
            && self.max_outer >= 1
            && self.max_inner >= 1
            && self.newton_tol > 0.0
            && self.stationarity_tol > 0.0
            && self.ls_alpha > 0.0
            && self.ls_alpha < 0.5
            && self.ls_beta > 0.0
            && self.ls_beta < 1.0
            && self.boundary_fraction > 0.0
            && self.boundary_fraction < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid solver parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationCounts {
    pub outer: usize,
    pub inner: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedSolution {
    pub z_star: SelectionVector,
    /// `f(z*)` including `-c^T z*` when a cost is present; no barrier term.
    pub objective: f64,
    pub iterations: IterationCounts,
    pub final_kappa: f64,
    /// False if some centering stage hit the inner iteration cap.
    pub converged: bool,
}

/// One accepted Newton iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub outer: usize,
    pub kappa: f64,
    pub psi: f64,
}

fn check_interior(z: &[f64]) -> Result<()> {
    match z.iter().position(|v| !(*v > 0.0 && *v < 1.0)) {
        Some(index) => Err(Error::BoundaryViolation {
            index,
            value: z[index],
        }),
        None => Ok(()),
    }
}

fn barrier(z: &[f64], kappa: f64) -> f64 {
    kappa * z.iter().map(|v| v.ln() + (1.0 - v).ln()).sum::<f64>()
}

/// `ψ(z) = f(z) + κ Σ (log z_i + log(1 - z_i))`.
pub fn psi(p: &RelaxedProblem, z: &[f64], kappa: f64) -> Result<f64> {
    p.check_len(z)?;
    check_interior(z)?;
    Ok(p.objective(z)? + barrier(z, kappa))
}

fn gradient_from_gram(p: &RelaxedProblem, z: &[f64], kappa: f64, gram: &DMatrix<f64>) -> DVector<f64> {
    let mut g = DVector::from_fn(z.len(), |i, _| {
        gram[(i, i)] + kappa * (1.0 / z[i] - 1.0 / (1.0 - z[i]))
    });
    if let Some(c) = &p.linear_cost {
        g -= c;
    }
    g
}

/// Negated Hessian `(G ∘ G) + κ diag(1/z² + 1/(1-z)²)`, positive definite on
/// the interior.
fn neg_hessian_from_gram(z: &[f64], kappa: f64, gram: &DMatrix<f64>) -> DMatrix<f64> {
    let mut h = gram.component_mul(gram);
    for (i, v) in z.iter().enumerate() {
        h[(i, i)] += kappa * (1.0 / (v * v) + 1.0 / ((1.0 - v) * (1.0 - v)));
    }
    h
}

/// Component `i` is `a_i^T W a_i - c_i + κ (1/z_i - 1/(1 - z_i))`.
pub fn grad_psi(p: &RelaxedProblem, z: &[f64], kappa: f64) -> Result<DVector<f64>> {
    p.check_len(z)?;
    check_interior(z)?;
    let (_, gram) = p.objective_and_gram(z)?;
    Ok(gradient_from_gram(p, z, kappa, &gram))
}

/// Entry `(i, j)` is `-(a_i^T W a_j)^2`, plus `-κ (1/z_i² + 1/(1 - z_i)²)` on
/// the diagonal. The linear cost does not contribute.
pub fn hess_psi(p: &RelaxedProblem, z: &[f64], kappa: f64) -> Result<DMatrix<f64>> {
    p.check_len(z)?;
    check_interior(z)?;
    let (_, gram) = p.objective_and_gram(z)?;
    Ok(-neg_hessian_from_gram(z, kappa, &gram))
}

/// Max-norm of `∇ψ` projected onto `{v : 1^T v = 0}`.
pub fn projected_gradient_norm(p: &RelaxedProblem, z: &[f64], kappa: f64) -> Result<f64> {
    let g = grad_psi(p, z, kappa)?;
    Ok(project_zero_sum(&g).amax())
}

fn project_zero_sum(v: &DVector<f64>) -> DVector<f64> {
    let mean = v.mean();
    v.map(|x| x - mean)
}

/// Solves the relaxed problem from the uniform start `z = (k/m) 1`.
pub fn solve_relaxed(p: &RelaxedProblem, params: &SolverParams) -> Result<RelaxedSolution> {
    Solver::new(p, params, false).run().map(|(s, _)| s)
}

/// As [`solve_relaxed`], also returning `ψ` at every accepted iterate.
pub fn solve_relaxed_traced(
    p: &RelaxedProblem,
    params: &SolverParams,
) -> Result<(RelaxedSolution, Vec<TracePoint>)> {
    Solver::new(p, params, true).run()
}

struct Solver<'a> {
    problem: &'a RelaxedProblem,
    params: &'a SolverParams,
    trace: Option<Vec<TracePoint>>,
}

enum Centering {
    Done,
    IterationCap,
}

impl<'a> Solver<'a> {
    fn new(
        problem: &'a RelaxedProblem,
        params: &'a SolverParams,
        traced: bool,
    ) -> Self {
        Self {
            problem,
            params,
            trace: traced.then(Vec::new),
        }
    }

    fn run(mut self) -> Result<(RelaxedSolution, Vec<TracePoint>)> {
        self.params.validate()?;
        let p = self.problem;
        let m = p.m();
        let k = p.budget as f64;
        let mut z = vec![k / m as f64; m];
        let mut kappa = self.params.kappa0;
        let mut counts = IterationCounts::default();
        let mut converged = true;

        for outer in 1..=self.params.max_outer {
            counts.outer = outer;
            if let Centering::IterationCap = self.center(&mut z, kappa, outer, &mut counts.inner)? {
                converged = false;
            }
            let f = p.objective(&z)?;
            if 2.0 * m as f64 * kappa < self.params.outer_tol {
                let z_star = SelectionVector::relaxed(z, p.budget)?;
                let solution = RelaxedSolution {
                    z_star,
                    objective: f,
                    iterations: counts,
                    final_kappa: kappa,
                    converged,
                };
                return Ok((solution, self.trace.unwrap_or_default()));
            }
            kappa /= self.params.kappa_shrink;
        }
        Err(Error::NonConvergence {
            outer: counts.outer,
            inner: counts.inner,
        })
    }

    /// Newton's method on ψ at fixed κ, starting from and updating `z`.
    fn center(&mut self, z: &mut Vec<f64>, kappa: f64, outer: usize, inner: &mut usize) -> Result<Centering> {
        let p = self.problem;
        let prm = self.params;
        let ones = DVector::from_element(z.len(), 1.0);

        for _ in 0..prm.max_inner {
            if prm.deadline.is_some_and(|d| Instant::now() > d) {
                return Err(Error::DeadlineExceeded);
            }
            let (f, gram) = p.objective_and_gram(z)?;
            let psi_now = f + barrier(z, kappa);
            let g = gradient_from_gram(p, z, kappa, &gram);
            let h = neg_hessian_from_gram(z, kappa, &gram);

            // KKT system [-H 1; 1^T 0] eliminated through the Cholesky factor of -H.
            let chol = Cholesky::new(&h).map_err(|_| Error::SingularKkt)?;
            let hg = chol.solve(&g);
            let h1 = chol.solve(&ones);
            let denom = h1.sum();
            if !(denom > 0.0) || !denom.is_finite() {
                return Err(Error::SingularKkt);
            }
            let nu = -hg.sum() / denom;
            let mut step = hg + h1 * nu;
            let drift = step.mean();
            step.add_scalar_mut(-drift);
            if step.iter().any(|v| !v.is_finite()) {
                return Err(Error::SingularKkt);
            }

            let slope = g.dot(&step);
            let stationarity = project_zero_sum(&g).amax();
            if slope / 2.0 <= prm.newton_tol && stationarity <= prm.stationarity_tol {
                return Ok(Centering::Done);
            }

            let mut t: f64 = 1.0;
            for (zi, di) in z.iter().zip(step.iter()) {
                if *di < 0.0 {
                    t = t.min(prm.boundary_fraction * zi / -di);
                } else if *di > 0.0 {
                    t = t.min(prm.boundary_fraction * (1.0 - zi) / di);
                }
            }

            // Gains below the rounding noise of ψ must not stall the search.
            let slack = 4.0 * f64::EPSILON * psi_now.abs().max(1.0);
            let mut accepted = None;
            while t > f64::EPSILON {
                let trial: Vec<f64> = z.iter().zip(step.iter()).map(|(zi, di)| zi + t * di).collect();
                if let Ok(value) = psi(p, &trial, kappa) {
                    if value >= psi_now + prm.ls_alpha * t * slope - slack {
                        accepted = Some((trial, value));
                        break;
                    }
                }
                t *= prm.ls_beta;
            }
            // A failed line search means ψ is flat to working precision.
            let Some((next, value)) = accepted else {
                return Ok(Centering::Done);
            };
            *z = next;
            *inner += 1;
            if let Some(trace) = self.trace.as_mut() {
                trace.push(TracePoint {
                    outer,
                    kappa,
                    psi: value,
                });
            }
        }
        Ok(Centering::IterationCap)
    }
}
