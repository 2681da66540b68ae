//! Centralized and decentralized selection strategies, simple rounding, and
//! the information node 1 shares with node 2.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::barrier_solver::{
    solve_relaxed, IterationCounts, RelaxedProblem, RelaxedSolution, SolverParams,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, BoundsReport, MeasurementMatrix, Partition, SelectionVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Centralized,
    #[serde(rename = "naive")]
    NaiveDecentralized,
    Fdm,
    Lpm,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Centralized,
        Strategy::NaiveDecentralized,
        Strategy::Fdm,
        Strategy::Lpm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Centralized => "centralized",
            Strategy::NaiveDecentralized => "naive",
            Strategy::Fdm => "fdm",
            Strategy::Lpm => "lpm",
        }
    }

    /// Whether node 2 uses vectors shared by node 1.
    pub fn shares_vectors(self) -> bool {
        matches!(self, Strategy::Fdm | Strategy::Lpm)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "centralized" | "cen" => Ok(Strategy::Centralized),
            "naive" | "dec" | "decentralized" => Ok(Strategy::NaiveDecentralized),
            "fdm" => Ok(Strategy::Fdm),
            "lpm" => Ok(Strategy::Lpm),
            other => Err(Error::Config(format!("unknown strategy '{other}'"))),
        }
    }
}

/// Sets the `k` largest entries to one and the rest to zero. Equal values
/// are ranked by index, lowest first.
pub fn round_simple(z: &SelectionVector, k: usize) -> Result<SelectionVector> {
    let m = z.len();
    if k > m {
        return Err(Error::InvalidSelection(format!(
            "cannot select {k} of {m} sensors"
        )));
    }
    let entries = z.entries();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| entries[b].total_cmp(&entries[a]));
    SelectionVector::from_indices(m, &order[..k])
}

/// The vectors `g_j = λ_j u_j` for the `N` largest eigenpairs of node 1's
/// information matrix, in descending order of `λ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedVectorSet {
    n: usize,
    vectors: Vec<DVector<f64>>,
}

impl SharedVectorSet {
    pub fn new(n: usize, vectors: Vec<DVector<f64>>) -> Result<Self> {
        if vectors.len() > n {
            return Err(Error::TooManyVectors {
                requested: vectors.len(),
                available: n,
            });
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != n) {
            return Err(Error::DimensionMismatch {
                what: "shared vector length",
                expected: n,
                actual: v.len(),
            });
        }
        if vectors.iter().flat_map(|v| v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Message("non-finite shared vector entry".into()));
        }
        for pair in vectors.windows(2) {
            let (a, b) = (pair[0].norm(), pair[1].norm());
            if b > a * (1.0 + 1e-12) {
                return Err(Error::Message(
                    "shared vectors must be ordered by non-increasing norm".into(),
                ));
            }
        }
        Ok(Self { n, vectors })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            vectors: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.vectors
    }

    /// `Σ_j g_j g_j^T = Σ_j λ_j² u_j u_j^T`.
    pub fn augmentation(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.n, self.n);
        for g in &self.vectors {
            s.ger(1.0, g, g, 1.0);
        }
        s.fill_upper_triangle_with_lower_triangle();
        s
    }

    /// Multiplies every vector by `t > 0`.
    pub fn scaled(&self, t: f64) -> Self {
        Self {
            n: self.n,
            vectors: self.vectors.iter().map(|g| g * t).collect(),
        }
    }
}

/// Eigen-decomposes `A1^T diag(z1) A1` and keeps the `count` dominant
/// directions scaled by their eigenvalues.
pub fn extract_shared_vectors(
    a1: &MeasurementMatrix,
    z1: &SelectionVector,
    count: usize,
) -> Result<SharedVectorSet> {
    let n = a1.n();
    if count > n {
        return Err(Error::TooManyVectors {
            requested: count,
            available: n,
        });
    }
    if count == 0 {
        return Ok(SharedVectorSet::empty(n));
    }
    let info = a1.information(z1, None)?;
    let vectors = linalg::symmetric_eigen_descending(&info)
        .into_iter()
        .take(count)
        // Round-off can leave null-space eigenvalues slightly negative.
        .map(|(lambda, u)| u * lambda.max(0.0))
        .collect();
    SharedVectorSet::new(n, vectors)
}

/// `c_i = Σ_j |a_{2i}^T g_j| / ||a_{2i}||²`.
pub fn lpm_costs(a2: &MeasurementMatrix, shared: &SharedVectorSet) -> Result<DVector<f64>> {
    if shared.n() != a2.n() {
        return Err(Error::DimensionMismatch {
            what: "shared vector dimension",
            expected: a2.n(),
            actual: shared.n(),
        });
    }
    let rows = a2.matrix();
    let mut costs = DVector::zeros(a2.m());
    for i in 0..a2.m() {
        let row = rows.row(i);
        let norm2 = row.norm_squared();
        if norm2 == 0.0 {
            return Err(Error::ZeroRow { index: i });
        }
        let relevance: f64 = shared
            .vectors()
            .iter()
            .map(|g| row.iter().zip(g.iter()).map(|(a, b)| a * b).sum::<f64>().abs())
            .sum();
        costs[i] = relevance / norm2;
    }
    Ok(costs)
}

/// Result of one strategy on one instance, judged by the central objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    /// Relaxed solution, stacked node 1 first for decentralized strategies.
    pub z_relaxed: SelectionVector,
    pub z_boolean: SelectionVector,
    /// `U` is always the centralized relaxation bound; `L = f_cen(z_boolean)`.
    pub bounds: BoundsReport,
    /// `f_cen(z_relaxed)`.
    pub relaxed_value: f64,
    /// Number of vectors node 1 shared with node 2.
    pub shared_vectors: usize,
    /// Solver counts, one entry per relaxed solve (node 1 first).
    pub iterations: Vec<IterationCounts>,
}

fn lower_bound(a: &MeasurementMatrix, z: &SelectionVector) -> Result<f64> {
    match a.log_det(z, None) {
        Ok(v) => Ok(v),
        Err(Error::SingularInformation { .. }) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// Solves the centralized relaxation and rounds it. A rank-deficient rounding
/// is reported through `bounds.lower = -inf`.
pub fn select_centralized(
    a: &MeasurementMatrix,
    k: usize,
    params: &SolverParams,
) -> Result<StrategyOutcome> {
    if k < a.n() || k >= a.m() {
        return Err(Error::InvalidProblem(format!(
            "centralized budget {k} must satisfy n = {} <= k < m = {}",
            a.n(),
            a.m()
        )));
    }
    let solution = solve_relaxed(&RelaxedProblem::new(a.clone(), k)?, params)?;
    let z_boolean = round_simple(&solution.z_star, k)?;
    let upper = solution.objective;
    let lower = lower_bound(a, &z_boolean)?;
    Ok(StrategyOutcome {
        strategy: Strategy::Centralized,
        relaxed_value: upper,
        z_relaxed: solution.z_star,
        z_boolean,
        bounds: BoundsReport::new(upper, lower),
        shared_vectors: 0,
        iterations: vec![solution.iterations],
    })
}

/// Checks the two-node budget split: `k` even, `n <= k` and `1 <= k/2 < m/2`.
pub fn check_decentralized_budget(p: &Partition, k: usize) -> Result<()> {
    if !k.is_multiple_of(2) {
        return Err(Error::InvalidProblem(format!(
            "total budget {k} must be even to split between two nodes"
        )));
    }
    if k < p.n() {
        return Err(Error::InvalidProblem(format!(
            "total budget {k} is below the parameter count {}",
            p.n()
        )));
    }
    if k / 2 >= p.a1().m() {
        return Err(Error::InvalidProblem(format!(
            "per-node budget {} must be below the per-node sensor count {}",
            k / 2,
            p.a1().m()
        )));
    }
    Ok(())
}

/// A leader node's relaxed solution and its rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDecision {
    pub relaxed: RelaxedSolution,
    pub selection: SelectionVector,
}

/// How node 2 accounts for node 1's decision.
#[derive(Debug, Clone, Copy)]
pub enum Coupling<'a> {
    Independent,
    FocusedDiversity(&'a SharedVectorSet),
    LinearPenalty(&'a SharedVectorSet),
}

fn decide(problem: RelaxedProblem, params: &SolverParams) -> Result<NodeDecision> {
    let budget = problem.budget();
    let relaxed = solve_relaxed(&problem, params)?;
    let selection = round_simple(&relaxed.z_star, budget)?;
    Ok(NodeDecision { relaxed, selection })
}

/// Node 1 solves its local problem with budget `k/2`.
pub fn leader_one(p: &Partition, k: usize, params: &SolverParams) -> Result<NodeDecision> {
    check_decentralized_budget(p, k)?;
    decide(RelaxedProblem::new(p.a1().clone(), k / 2)?, params)
}

/// Node 2 solves its local problem with budget `k/2`, modified by `coupling`.
/// An empty shared set leaves the problem unmodified.
pub fn leader_two(
    p: &Partition,
    k: usize,
    coupling: Coupling<'_>,
    params: &SolverParams,
) -> Result<NodeDecision> {
    check_decentralized_budget(p, k)?;
    let mut problem = RelaxedProblem::new(p.a2().clone(), k / 2)?;
    match coupling {
        Coupling::Independent => {}
        Coupling::FocusedDiversity(shared) if !shared.is_empty() => {
            problem = problem.with_augmentation(shared.augmentation())?;
        }
        Coupling::LinearPenalty(shared) if !shared.is_empty() => {
            problem = problem.with_linear_cost(lpm_costs(p.a2(), shared)?)?;
        }
        Coupling::FocusedDiversity(_) | Coupling::LinearPenalty(_) => {}
    }
    decide(problem, params)
}

/// Stacks both nodes' decisions and evaluates them centrally against `upper`.
pub fn assemble_decentralized(
    strategy: Strategy,
    p: &Partition,
    upper: f64,
    node1: &NodeDecision,
    node2: &NodeDecision,
    shared_vectors: usize,
) -> Result<StrategyOutcome> {
    let full = p.stacked();
    let z_relaxed = model::stack_selections(&node1.relaxed.z_star, &node2.relaxed.z_star)?;
    let z_boolean = model::stack_selections(&node1.selection, &node2.selection)?;
    let relaxed_value = full.log_det(&z_relaxed, None)?;
    let lower = lower_bound(&full, &z_boolean)?;
    Ok(StrategyOutcome {
        strategy,
        z_relaxed,
        z_boolean,
        bounds: BoundsReport::new(upper, lower),
        relaxed_value,
        shared_vectors,
        iterations: vec![node1.relaxed.iterations, node2.relaxed.iterations],
    })
}

/// Upper bound `U_cen` for a partitioned instance.
pub fn centralized_upper_bound(p: &Partition, k: usize, params: &SolverParams) -> Result<f64> {
    Ok(select_centralized(&p.stacked(), k, params)?.bounds.upper)
}

/// Both nodes select independently.
pub fn select_naive(p: &Partition, k: usize, params: &SolverParams) -> Result<StrategyOutcome> {
    check_decentralized_budget(p, k)?;
    let upper = centralized_upper_bound(p, k, params)?;
    let node1 = leader_one(p, k, params)?;
    let node2 = leader_two(p, k, Coupling::Independent, params)?;
    assemble_decentralized(Strategy::NaiveDecentralized, p, upper, &node1, &node2, 0)
}

fn select_shared(
    strategy: Strategy,
    p: &Partition,
    k: usize,
    count: usize,
    params: &SolverParams,
) -> Result<StrategyOutcome> {
    check_decentralized_budget(p, k)?;
    let upper = centralized_upper_bound(p, k, params)?;
    let node1 = leader_one(p, k, params)?;
    let shared = extract_shared_vectors(p.a1(), &node1.selection, count)?;
    let coupling = match strategy {
        Strategy::Fdm => Coupling::FocusedDiversity(&shared),
        _ => Coupling::LinearPenalty(&shared),
    };
    let node2 = leader_two(p, k, coupling, params)?;
    assemble_decentralized(strategy, p, upper, &node1, &node2, shared.len())
}

/// Focused diversity: node 2 treats node 1's `count` dominant directions as
/// already measured.
pub fn select_fdm(
    p: &Partition,
    k: usize,
    count: usize,
    params: &SolverParams,
) -> Result<StrategyOutcome> {
    select_shared(Strategy::Fdm, p, k, count, params)
}

/// Linear penalty: node 2 pays for rows aligned with node 1's dominant
/// directions.
pub fn select_lpm(
    p: &Partition,
    k: usize,
    count: usize,
    params: &SolverParams,
) -> Result<StrategyOutcome> {
    select_shared(Strategy::Lpm, p, k, count, params)
}
