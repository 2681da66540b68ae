//! Monte-Carlo comparison of the four strategies on random instances with
//! weakly correlated rows shared between the two nodes.
//!
//! Every trial draws from its own ChaCha stream keyed by
//! `(master_seed, trial)`, so results do not depend on scheduling or on the
//! number of worker threads.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, RowDVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier_solver::SolverParams;
use crate::error::{Error, Result};
use crate::model::{MeasurementMatrix, Partition, GAP_REFERENCE_GUARD};
use crate::strategies::{self, Coupling, NodeDecision, Strategy, StrategyOutcome};

/// Tolerance for `f_cen(z*_dec) <= U_cen`.
pub const INCLUSION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    pub k_s: usize,
    /// Number of shared vectors.
    #[serde(rename = "N", alias = "n_shared")]
    pub n_shared: usize,
    /// Correlation strength σ in `[0, 1]`; 0 makes paired rows identical.
    pub sigma_corr: f64,
    pub num_correlated_pairs: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub strategies: Vec<Strategy>,
    pub n_sweep: Option<Vec<usize>>,
    pub trial_timeout_secs: f64,
    pub solver: SolverParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m: 100,
            n: 40,
            k_s: 40,
            n_shared: 5,
            sigma_corr: 0.1,
            num_correlated_pairs: 15,
            trials: 10_000,
            master_seed: 0,
            strategies: Strategy::ALL.to_vec(),
            n_sweep: None,
            trial_timeout_secs: 60.0,
            solver: SolverParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn half(&self) -> usize {
        self.m / 2
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !self.m.is_multiple_of(2) {
            return fail(format!("m = {} must be even", self.m));
        }
        if self.n == 0 || self.half() < self.n {
            return fail(format!("need 1 <= n <= m/2, got n = {}, m = {}", self.n, self.m));
        }
        if !self.k_s.is_multiple_of(2) || self.k_s < self.n || self.k_s / 2 >= self.half() {
            return fail(format!(
                "k_s = {} must be even with n <= k_s and k_s/2 < m/2",
                self.k_s
            ));
        }
        if self.n_shared > self.n {
            return fail(format!("N = {} exceeds n = {}", self.n_shared, self.n));
        }
        if let Some(sweep) = &self.n_sweep {
            if let Some(bad) = sweep.iter().find(|&&v| v > self.n) {
                return fail(format!("n_sweep value {bad} exceeds n = {}", self.n));
            }
        }
        if !(0.0..=1.0).contains(&self.sigma_corr) {
            return fail(format!("sigma_corr = {} outside [0, 1]", self.sigma_corr));
        }
        if self.num_correlated_pairs > self.half() {
            return fail(format!(
                "num_correlated_pairs = {} exceeds m/2",
                self.num_correlated_pairs
            ));
        }
        if self.trials == 0 {
            return fail("trials must be positive".into());
        }
        if self.strategies.is_empty() {
            return fail("no strategies configured".into());
        }
        let mut seen = self.strategies.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.strategies.len() {
            return fail("duplicate strategy".into());
        }
        if !(self.trial_timeout_secs > 0.0) {
            return fail("trial_timeout_secs must be positive".into());
        }
        self.solver.validate()
    }
}

/// Independent stream for one trial.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

/// Random partition seeded directly by `seed`.
pub fn generate_instance(cfg: &ExperimentConfig, seed: u64) -> Result<Partition> {
    generate_instance_with(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Fills both halves with iid standard normals, then overwrites
/// `num_correlated_pairs` distinct (node 1 row, node 2 row) pairs with
/// `sqrt(1 - σ²) b + σ w`, sharing `b` within a pair.
pub fn generate_instance_with<R: Rng + ?Sized>(cfg: &ExperimentConfig, rng: &mut R) -> Result<Partition> {
    generate_correlated(cfg, rng).map(|(p, _)| p)
}

/// As [`generate_instance_with`], also returning the modified
/// `(node 1 row, node 2 row)` pairs.
pub fn generate_correlated<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    rng: &mut R,
) -> Result<(Partition, Vec<(usize, usize)>)> {
    let (h, n) = (cfg.half(), cfg.n);
    let mut a1 = normal_matrix(rng, h, n);
    let mut a2 = normal_matrix(rng, h, n);
    let rows1 = index::sample(rng, h, cfg.num_correlated_pairs);
    let rows2 = index::sample(rng, h, cfg.num_correlated_pairs);
    let common = (1.0 - cfg.sigma_corr * cfg.sigma_corr).sqrt();
    let pairs: Vec<(usize, usize)> = rows1.iter().zip(rows2.iter()).collect();
    for &(i, j) in &pairs {
        let b = normal_row(rng, n);
        let wi = normal_row(rng, n);
        let wj = normal_row(rng, n);
        a1.set_row(i, &(&b * common + wi * cfg.sigma_corr));
        a2.set_row(j, &(&b * common + wj * cfg.sigma_corr));
    }
    let p = Partition::new(MeasurementMatrix::new(a1)?, MeasurementMatrix::new(a2)?)?;
    Ok((p, pairs))
}

fn normal_row<R: Rng + ?Sized>(rng: &mut R, n: usize) -> RowDVector<f64> {
    RowDVector::from_iterator(n, (0..n).map(|_| rng.sample(StandardNormal)))
}

fn normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let values: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(rows, cols, &values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    /// Rounded selection has a singular information matrix (`L = -inf`).
    InfeasibleRounding,
    /// `|U_cen|` too small for a relative gap.
    DegenerateReference,
    Timeout,
    SolverFailure,
    InstanceError,
}

impl TrialStatus {
    fn from_error(e: &Error) -> Self {
        match e {
            Error::DeadlineExceeded => TrialStatus::Timeout,
            Error::DegenerateReference { .. } => TrialStatus::DegenerateReference,
            _ => TrialStatus::SolverFailure,
        }
    }
}

/// One row of the per-trial CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub strategy: Strategy,
    #[serde(rename = "N")]
    pub n_shared: usize,
    #[serde(rename = "U_cen")]
    pub upper: Option<f64>,
    #[serde(rename = "L")]
    pub lower: Option<f64>,
    pub gap_rel_percent: Option<f64>,
    pub status: TrialStatus,
    /// `f_cen` of the stacked relaxed solution; not part of the CSV.
    #[serde(skip)]
    pub relaxed_value: Option<f64>,
}

impl TrialRecord {
    fn failed(trial: usize, strategy: Strategy, n_shared: usize, upper: Option<f64>, status: TrialStatus) -> Self {
        Self {
            trial,
            strategy,
            n_shared,
            upper,
            lower: None,
            gap_rel_percent: None,
            status,
            relaxed_value: None,
        }
    }

    fn from_outcome(trial: usize, n_shared: usize, outcome: &StrategyOutcome) -> Self {
        let b = &outcome.bounds;
        let status = if !b.is_feasible() {
            TrialStatus::InfeasibleRounding
        } else if b.relative_gap_percent.is_none() {
            TrialStatus::DegenerateReference
        } else {
            TrialStatus::Ok
        };
        Self {
            trial,
            strategy: outcome.strategy,
            n_shared,
            upper: Some(b.upper),
            lower: Some(b.lower),
            gap_rel_percent: b.relative_gap_percent,
            status,
            relaxed_value: Some(outcome.relaxed_value),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == TrialStatus::Ok
    }
}

/// Aggregate of one (strategy, N) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    #[serde(rename = "N")]
    pub n_shared: usize,
    pub mean_gap: Option<f64>,
    pub std_gap: Option<f64>,
    pub trials_ok: usize,
    pub trials_failed: usize,
    /// Trials whose lower bound beat the centralized rounding.
    #[serde(skip)]
    pub exceeds_centralized: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub records: Vec<TrialRecord>,
    pub summaries: Vec<StrategySummary>,
    /// Records where `f_cen(z*_dec) > U_cen + INCLUSION_TOLERANCE`.
    pub inclusion_violations: usize,
    pub max_inclusion_excess: f64,
}

impl TrialStats {
    pub fn summary(&self, strategy: Strategy, n_shared: usize) -> Option<&StrategySummary> {
        self.summaries
            .iter()
            .find(|s| s.strategy == strategy && s.n_shared == n_shared)
    }

    pub fn records_for(&self, strategy: Strategy, n_shared: usize) -> impl Iterator<Item = &TrialRecord> {
        self.records
            .iter()
            .filter(move |r| r.strategy == strategy && r.n_shared == n_shared)
    }

    fn from_records(records: Vec<TrialRecord>, order: &[usize], strategies: &[Strategy]) -> Self {
        let mut cells: BTreeMap<(usize, Strategy), Vec<&TrialRecord>> = BTreeMap::new();
        for r in &records {
            cells.entry((r.n_shared, r.strategy)).or_default().push(r);
        }
        let mut central_lower: BTreeMap<usize, f64> = BTreeMap::new();
        for r in records.iter().filter(|r| r.strategy == Strategy::Centralized && r.is_ok()) {
            if let Some(l) = r.lower {
                central_lower.insert(r.trial, l);
            }
        }

        let mut summaries = Vec::new();
        for &n_shared in order {
            for &strategy in strategies {
                let cell = cells.get(&(n_shared, strategy)).map(Vec::as_slice).unwrap_or(&[]);
                let gaps: Vec<f64> = cell
                    .iter()
                    .filter(|r| r.is_ok())
                    .filter_map(|r| r.gap_rel_percent)
                    .collect();
                let exceeds_centralized = if strategy == Strategy::Centralized {
                    0
                } else {
                    cell.iter()
                        .filter(|r| r.is_ok())
                        .filter(|r| match (r.lower, central_lower.get(&r.trial)) {
                            (Some(l), Some(c)) => l > *c,
                            _ => false,
                        })
                        .count()
                };
                let (mean_gap, std_gap) = mean_std(&gaps);
                summaries.push(StrategySummary {
                    strategy,
                    n_shared,
                    mean_gap,
                    std_gap,
                    trials_ok: gaps.len(),
                    trials_failed: cell.len() - gaps.len(),
                    exceeds_centralized,
                });
            }
        }

        let mut inclusion_violations = 0;
        let mut max_inclusion_excess = f64::NEG_INFINITY;
        for r in records.iter().filter(|r| r.strategy != Strategy::Centralized) {
            if let (Some(v), Some(u)) = (r.relaxed_value, r.upper) {
                let excess = v - u;
                max_inclusion_excess = max_inclusion_excess.max(excess);
                if excess > INCLUSION_TOLERANCE {
                    inclusion_violations += 1;
                }
            }
        }

        Self {
            records,
            summaries,
            inclusion_violations,
            max_inclusion_excess,
        }
    }
}

/// Arithmetic mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0)).sqrt()
    };
    (Some(mean), Some(std))
}

/// Runs `cfg.trials` trials at `N = cfg.n_shared`.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<TrialStats> {
    sweep_shared_vectors(cfg, &[cfg.n_shared])
}

/// Runs every trial once per value in `n_values` on the same instances.
/// Centralized and naive results do not depend on `N`; they are computed
/// once per trial and repeated for each `N`.
pub fn sweep_shared_vectors(cfg: &ExperimentConfig, n_values: &[usize]) -> Result<TrialStats> {
    cfg.validate()?;
    if n_values.is_empty() {
        return Err(Error::Config("empty list of shared-vector counts".into()));
    }
    if let Some(bad) = n_values.iter().find(|&&v| v > cfg.n) {
        return Err(Error::Config(format!("N = {bad} exceeds n = {}", cfg.n)));
    }
    let per_trial: Vec<Vec<TrialRecord>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, t, n_values))
        .collect();
    let records = per_trial.into_iter().flatten().collect();
    Ok(TrialStats::from_records(records, n_values, &cfg.strategies))
}

/// Runs `f` on a dedicated pool of `jobs` threads (all cores when `None`).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn run_trial(cfg: &ExperimentConfig, trial: usize, n_values: &[usize]) -> Vec<TrialRecord> {
    let params = SolverParams {
        deadline: Some(Instant::now() + Duration::from_secs_f64(cfg.trial_timeout_secs)),
        ..cfg.solver.clone()
    };
    let all_failed = |upper: Option<f64>, status: TrialStatus| -> Vec<TrialRecord> {
        n_values
            .iter()
            .flat_map(|&n_shared| {
                cfg.strategies
                    .iter()
                    .map(move |&s| TrialRecord::failed(trial, s, n_shared, upper, status))
            })
            .collect()
    };

    let mut rng = trial_rng(cfg.master_seed, trial as u64);
    let partition = match generate_instance_with(cfg, &mut rng) {
        Ok(p) => p,
        Err(_) => return all_failed(None, TrialStatus::InstanceError),
    };
    let k = cfg.k_s;
    let central = match strategies::select_centralized(&partition.stacked(), k, &params) {
        Ok(c) => c,
        Err(e) => return all_failed(None, TrialStatus::from_error(&e)),
    };
    let upper = central.bounds.upper;
    if upper.abs() <= GAP_REFERENCE_GUARD {
        return all_failed(Some(upper), TrialStatus::DegenerateReference);
    }

    let decentralized = cfg.strategies.iter().any(|s| *s != Strategy::Centralized);
    let node1 = decentralized.then(|| strategies::leader_one(&partition, k, &params));
    let mut naive: Option<TrialRecord> = None;

    let mut records = Vec::new();
    for &n_shared in n_values {
        let shared = match &node1 {
            Some(Ok(d)) if cfg.strategies.iter().any(|s| s.shares_vectors()) => Some(
                strategies::extract_shared_vectors(partition.a1(), &d.selection, n_shared),
            ),
            _ => None,
        };
        for &strategy in &cfg.strategies {
            let record = match strategy {
                Strategy::Centralized => TrialRecord::from_outcome(trial, n_shared, &central),
                Strategy::NaiveDecentralized => {
                    let base = naive.get_or_insert_with(|| {
                        decentralized_record(trial, 0, upper, &partition, k, node1.as_ref(), &params, strategy, |_| {
                            Ok(Coupling::Independent)
                        })
                    });
                    TrialRecord {
                        n_shared,
                        ..base.clone()
                    }
                }
                Strategy::Fdm | Strategy::Lpm => {
                    decentralized_record(trial, n_shared, upper, &partition, k, node1.as_ref(), &params, strategy, |_| {
                        match shared.as_ref().expect("computed when sharing strategies run") {
                            Ok(set) if strategy == Strategy::Fdm => Ok(Coupling::FocusedDiversity(set)),
                            Ok(set) => Ok(Coupling::LinearPenalty(set)),
                            Err(e) => Err(TrialStatus::from_error(e)),
                        }
                    })
                }
            };
            records.push(record);
        }
    }
    records
}

#[allow(clippy::too_many_arguments)]
fn decentralized_record<'s>(
    trial: usize,
    n_shared: usize,
    upper: f64,
    partition: &Partition,
    k: usize,
    node1: Option<&Result<NodeDecision>>,
    params: &SolverParams,
    strategy: Strategy,
    coupling: impl FnOnce(&NodeDecision) -> std::result::Result<Coupling<'s>, TrialStatus>,
) -> TrialRecord {
    let fail = |status| TrialRecord::failed(trial, strategy, n_shared, Some(upper), status);
    let node1 = match node1 {
        Some(Ok(d)) => d,
        Some(Err(e)) => return fail(TrialStatus::from_error(e)),
        None => unreachable!("node 1 runs whenever a decentralized strategy is configured"),
    };
    let coupling = match coupling(node1) {
        Ok(c) => c,
        Err(status) => return fail(status),
    };
    let sent = match coupling {
        Coupling::Independent => 0,
        Coupling::FocusedDiversity(s) | Coupling::LinearPenalty(s) => s.len(),
    };
    let outcome = strategies::leader_two(partition, k, coupling, params).and_then(|node2| {
        strategies::assemble_decentralized(strategy, partition, upper, node1, &node2, sent)
    });
    match outcome {
        Ok(o) => TrialRecord::from_outcome(trial, n_shared, &o),
        Err(e) => fail(TrialStatus::from_error(&e)),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_sig10(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9e}")).unwrap_or_default()
}

pub const TRIALS_HEADER: [&str; 7] = ["trial", "strategy", "N", "U_cen", "L", "gap_rel_percent", "status"];
pub const SUMMARY_HEADER: [&str; 6] = ["strategy", "N", "mean_gap", "std_gap", "trials_ok", "trials_failed"];

/// Per-trial CSV. Values use the shortest round-trip decimal form; an
/// infeasible rounding appears as `L = -inf`.
pub fn write_trials_csv(records: &[TrialRecord], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRIALS_HEADER)?;
    for r in records {
        let status = serde_json::to_value(r.status)?;
        w.write_record([
            r.trial.to_string(),
            r.strategy.name().to_string(),
            r.n_shared.to_string(),
            fmt_opt(r.upper),
            fmt_opt(r.lower),
            fmt_opt(r.gap_rel_percent),
            status.as_str().unwrap_or_default().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trials_csv(reader: impl Read) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != TRIALS_HEADER {
        return Err(Error::Config(format!("unexpected trial CSV header {header:?}")));
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<TrialRecord>, _>>()?)
}

/// Summary CSV with 10 significant digits.
pub fn write_summary_csv(summaries: &[StrategySummary], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER)?;
    for s in summaries {
        w.write_record([
            s.strategy.name().to_string(),
            s.n_shared.to_string(),
            fmt_sig10(s.mean_gap),
            fmt_sig10(s.std_gap),
            s.trials_ok.to_string(),
            s.trials_failed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(reader: impl Read) -> Result<Vec<StrategySummary>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != SUMMARY_HEADER {
        return Err(Error::Config(format!("unexpected summary CSV header {header:?}")));
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<StrategySummary>, _>>()?)
}
