//! Linear measurement model: measurement matrices, selection vectors, the
//! log-det objective and bound/gap arithmetic.
//!
//! All objective values are natural logarithms (nats).

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky};

/// Absolute tolerance on `sum(z) = k` for relaxed selections.
pub const BUDGET_TOLERANCE: f64 = 1e-8;

/// Guard below which `|U|` is too small to normalize a gap by.
pub const GAP_REFERENCE_GUARD: f64 = 1e-9;

/// An `m x n` matrix whose rows `a_i^T` are the candidate sensors.
///
/// Construction enforces `m >= n >= 1` and full column rank. Each node's
/// half may be square; the full matrix of a partition then has `m > n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    rows: DMatrix<f64>,
    noise_variance: Option<f64>,
}

impl MeasurementMatrix {
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        let (m, n) = rows.shape();
        if n == 0 || m < n {
            return Err(Error::InvalidShape(format!(
                "measurement matrix must satisfy m >= n >= 1, got {m} x {n}"
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidShape("non-finite entry".into()));
        }
        let rank = linalg::numerical_rank(&rows);
        if rank < n {
            return Err(Error::RankDeficient { rank, n });
        }
        Ok(Self {
            rows,
            noise_variance: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::InvalidShape(format!(
                "row {i} has {} entries, expected {n}",
                r.len()
            )));
        }
        Self::new(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
    }

    /// Attaches the noise variance. It is metadata only: it shifts the
    /// log-volume by a constant and never influences selection.
    pub fn with_noise_variance(mut self, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::InvalidShape(format!(
                "noise variance must be positive, got {variance}"
            )));
        }
        self.noise_variance = Some(variance);
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n(&self) -> usize {
        self.rows.ncols()
    }

    pub fn noise_variance(&self) -> Option<f64> {
        self.noise_variance
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.rows.row(i).transpose()
    }

    pub fn information(
        &self,
        z: &SelectionVector,
        augmentation: Option<&DMatrix<f64>>,
    ) -> Result<DMatrix<f64>> {
        information_matrix(&self.rows, z.entries(), augmentation)
    }

    pub fn log_det(
        &self,
        z: &SelectionVector,
        augmentation: Option<&DMatrix<f64>>,
    ) -> Result<f64> {
        log_det_objective(&self.rows, z.entries(), augmentation)
    }

    /// Reads a headerless CSV with one sensor row per line.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv_from(File::open(path)?)
    }

    pub fn read_csv_from(reader: impl Read) -> Result<Self> {
        let rows = read_float_rows(reader)?;
        Self::from_rows(&rows)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv_to(File::create(path)?)
    }

    pub fn write_csv_to(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        for i in 0..self.m() {
            w.write_record(self.rows.row(i).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn read_float_rows(reader: impl Read) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| {
                    Error::InvalidShape(format!("line {}: cannot parse '{field}'", line + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// The two leader nodes' halves `A = [A1; A2]`, each with full column rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    a1: MeasurementMatrix,
    a2: MeasurementMatrix,
}

impl Partition {
    pub fn new(a1: MeasurementMatrix, a2: MeasurementMatrix) -> Result<Self> {
        if a1.n() != a2.n() {
            return Err(Error::DimensionMismatch {
                what: "partition column count",
                expected: a1.n(),
                actual: a2.n(),
            });
        }
        if a1.m() != a2.m() {
            return Err(Error::DimensionMismatch {
                what: "partition half size",
                expected: a1.m(),
                actual: a2.m(),
            });
        }
        Ok(Self { a1, a2 })
    }

    /// Splits `A` into its first and second halves.
    pub fn split(a: &MeasurementMatrix) -> Result<Self> {
        let m = a.m();
        if !m.is_multiple_of(2) {
            return Err(Error::InvalidShape(format!(
                "cannot split an odd number of rows ({m}) between two nodes"
            )));
        }
        let h = m / 2;
        let a1 = MeasurementMatrix::new(a.matrix().rows(0, h).into_owned())?;
        let a2 = MeasurementMatrix::new(a.matrix().rows(h, h).into_owned())?;
        Self::new(a1, a2)
    }

    pub fn a1(&self) -> &MeasurementMatrix {
        &self.a1
    }

    pub fn a2(&self) -> &MeasurementMatrix {
        &self.a2
    }

    pub fn m(&self) -> usize {
        self.a1.m() + self.a2.m()
    }

    pub fn n(&self) -> usize {
        self.a1.n()
    }

    /// Full matrix `[A1; A2]` as seen by the central collector.
    pub fn stacked(&self) -> MeasurementMatrix {
        let (h, n) = self.a1.rows.shape();
        let mut full = DMatrix::zeros(2 * h, n);
        full.rows_mut(0, h).copy_from(&self.a1.rows);
        full.rows_mut(h, h).copy_from(&self.a2.rows);
        // A1 already has full column rank.
        MeasurementMatrix {
            rows: full,
            noise_variance: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionKind {
    Relaxed,
    Boolean,
}

/// A selection `z` over `m` sensors with budget `k = sum(z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSelection")]
pub struct SelectionVector {
    kind: SelectionKind,
    budget: usize,
    entries: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSelection {
    kind: SelectionKind,
    budget: usize,
    entries: Vec<f64>,
}

impl TryFrom<RawSelection> for SelectionVector {
    type Error = Error;

    fn try_from(raw: RawSelection) -> Result<Self> {
        match raw.kind {
            SelectionKind::Relaxed => Self::relaxed(raw.entries, raw.budget),
            SelectionKind::Boolean => Self::boolean(raw.entries, raw.budget),
        }
    }
}

impl SelectionVector {
    pub fn relaxed(entries: Vec<f64>, budget: usize) -> Result<Self> {
        check_budget(budget)?;
        if let Some((i, v)) = entries
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidSelection(format!(
                "entry {i} = {v} is outside [0, 1]"
            )));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - budget as f64).abs() > BUDGET_TOLERANCE {
            return Err(Error::InvalidSelection(format!(
                "entries sum to {sum}, budget is {budget}"
            )));
        }
        Ok(Self {
            kind: SelectionKind::Relaxed,
            budget,
            entries,
        })
    }

    pub fn boolean(entries: Vec<f64>, budget: usize) -> Result<Self> {
        check_budget(budget)?;
        if let Some((i, v)) = entries
            .iter()
            .enumerate()
            .find(|(_, v)| **v != 0.0 && **v != 1.0)
        {
            return Err(Error::InvalidSelection(format!(
                "entry {i} = {v} is not boolean"
            )));
        }
        let count = entries.iter().filter(|v| **v == 1.0).count();
        if count != budget {
            return Err(Error::InvalidSelection(format!(
                "{count} sensors selected, budget is {budget}"
            )));
        }
        Ok(Self {
            kind: SelectionKind::Boolean,
            budget,
            entries,
        })
    }

    /// Boolean selection of the given sensor indices.
    pub fn from_indices(m: usize, selected: &[usize]) -> Result<Self> {
        let mut entries = vec![0.0; m];
        for &i in selected {
            if i >= m {
                return Err(Error::InvalidSelection(format!("index {i} out of range {m}")));
            }
            entries[i] = 1.0;
        }
        Self::boolean(entries, selected.len())
    }

    pub fn kind(&self) -> SelectionKind {
        self.kind
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Indices of selected sensors (non-zero entries).
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.entries[i] != 0.0).collect()
    }

    pub fn to_csv_row(&self) -> String {
        let fields: Vec<String> = self.entries.iter().map(|v| v.to_string()).collect();
        fields.join(",")
    }

    /// Parses a single CSV row. All-0/1 rows become boolean selections, any
    /// other row a relaxed one whose budget is the rounded sum.
    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let rows = read_float_rows(line.as_bytes())?;
        let entries = match rows.as_slice() {
            [row] => row.clone(),
            _ => return Err(Error::InvalidSelection("expected exactly one CSV row".into())),
        };
        let sum: f64 = entries.iter().sum();
        let budget = sum.round().max(0.0) as usize;
        if entries.iter().all(|v| *v == 0.0 || *v == 1.0) {
            Self::boolean(entries, budget)
        } else {
            Self::relaxed(entries, budget)
        }
    }
}

fn check_budget(budget: usize) -> Result<()> {
    if budget == 0 {
        return Err(Error::InvalidSelection("budget must be positive".into()));
    }
    Ok(())
}

/// `Σ_i w_i a_i a_i^T + S`, accumulated row by row in index order.
///
/// Weights are taken as plain reals so that arbitrary rows and weights (not
/// only budget-feasible selections) can be evaluated.
pub fn information_matrix(
    rows: &DMatrix<f64>,
    weights: &[f64],
    augmentation: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    let (m, n) = rows.shape();
    if weights.len() != m {
        return Err(Error::DimensionMismatch {
            what: "selection length",
            expected: m,
            actual: weights.len(),
        });
    }
    let mut info = match augmentation {
        Some(s) => {
            if s.shape() != (n, n) {
                return Err(Error::DimensionMismatch {
                    what: "augmentation size",
                    expected: n,
                    actual: s.nrows(),
                });
            }
            s.clone()
        }
        None => DMatrix::zeros(n, n),
    };
    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for c in 0..n {
            let wac = w * rows[(i, c)];
            for r in c..n {
                info[(r, c)] += wac * rows[(i, r)];
            }
        }
    }
    info.fill_upper_triangle_with_lower_triangle();
    Ok(info)
}

/// `log det(Σ_i w_i a_i a_i^T + S)` through a Cholesky factorization.
pub fn log_det_objective(
    rows: &DMatrix<f64>,
    weights: &[f64],
    augmentation: Option<&DMatrix<f64>>,
) -> Result<f64> {
    let info = information_matrix(rows, weights, augmentation)?;
    let chol = Cholesky::new(&info).map_err(|p| Error::SingularInformation {
        index: p.index,
        pivot: p.value,
    })?;
    Ok(chol.log_det())
}

/// Concatenates the two nodes' selections, node 1 first.
pub fn stack_selections(z1: &SelectionVector, z2: &SelectionVector) -> Result<SelectionVector> {
    if z1.kind != z2.kind {
        return Err(Error::MixedKinds);
    }
    let entries: Vec<f64> = z1.entries.iter().chain(&z2.entries).copied().collect();
    let budget = z1.budget + z2.budget;
    match z1.kind {
        SelectionKind::Relaxed => SelectionVector::relaxed(entries, budget),
        SelectionKind::Boolean => SelectionVector::boolean(entries, budget),
    }
}

/// `100 |U - L| / |U|` in percent.
pub fn relative_gap(upper: f64, lower: f64) -> Result<f64> {
    if !(upper.abs() > GAP_REFERENCE_GUARD) {
        return Err(Error::DegenerateReference { upper });
    }
    Ok(100.0 * (upper - lower).abs() / upper.abs())
}

/// Upper bound `U`, lower bound `L` and the derived gaps.
///
/// An infeasible (rank-deficient) rounding is recorded as `lower = -inf`;
/// it serializes as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub upper: f64,
    #[serde(with = "null_as_neg_inf")]
    pub lower: f64,
    #[serde(with = "null_as_pos_inf")]
    pub gap: f64,
    pub relative_gap_percent: Option<f64>,
}

impl BoundsReport {
    pub fn new(upper: f64, lower: f64) -> Self {
        let gap = upper - lower;
        let relative_gap_percent = if lower.is_finite() {
            relative_gap(upper, lower).ok()
        } else {
            None
        };
        Self {
            upper,
            lower,
            gap,
            relative_gap_percent,
        }
    }

    pub fn infeasible(upper: f64) -> Self {
        Self::new(upper, f64::NEG_INFINITY)
    }

    /// False when the rounded selection had a singular information matrix.
    pub fn is_feasible(&self) -> bool {
        self.lower.is_finite()
    }
}

macro_rules! nonfinite_as_null {
    ($name:ident, $fallback:expr) => {
        mod $name {
            use serde::{Deserialize, Deserializer, Serializer};

            pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
                if v.is_finite() {
                    s.serialize_some(v)
                } else {
                    s.serialize_none()
                }
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
                Ok(Option::<f64>::deserialize(d)?.unwrap_or($fallback))
            }
        }
    };
}

nonfinite_as_null!(null_as_neg_inf, f64::NEG_INFINITY);
nonfinite_as_null!(null_as_pos_inf, f64::INFINITY);
