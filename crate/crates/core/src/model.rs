//! State spaces, value functions, rate and transition matrices, and the
//! interval-bounded set of rate matrices that parameterises a model.
//!
//! All types are immutable once built. Diagonal entries of rate matrices are
//! never taken from user input; they are always the negated off-diagonal row
//! sum.

use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::structure;

/// Absolute tolerance for row-sum checks on rate and transition matrices.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Finite, ordered set of labelled states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl StateSpace {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(Error::TooFewStates(labels.len()));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if index.insert(label.clone(), i).is_some() {
                return Err(Error::DuplicateLabel(label.clone()));
            }
        }
        Ok(Self { labels, index })
    }

    /// States named `s0, s1, ...`.
    pub fn numbered(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| format!("s{i}")))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownState(label.to_string()))
    }
}

/// Non-empty proper subset `A` of the state space that the chain should hit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSet {
    mask: Vec<bool>,
}

impl TargetSet {
    pub fn new(n_states: usize, members: &[usize]) -> Result<Self> {
        let mut mask = vec![false; n_states];
        for &m in members {
            if m >= n_states {
                return Err(Error::IndexOutOfRange {
                    index: m,
                    len: n_states,
                });
            }
            mask[m] = true;
        }
        let count = mask.iter().filter(|&&b| b).count();
        if count == 0 || count == n_states {
            return Err(Error::InvalidTarget);
        }
        Ok(Self { mask })
    }

    pub fn n_states(&self) -> usize {
        self.mask.len()
    }

    pub fn contains(&self, state: usize) -> bool {
        self.mask[state]
    }

    pub fn members(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }

    /// Indices of `A^c`, in increasing order.
    pub fn complement(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| !self.mask[i]).collect()
    }

    /// Indicator `1_A` as a value function.
    pub fn indicator(&self) -> ValueFunction {
        ValueFunction(self.mask.iter().map(|&b| f64::from(u8::from(b))).collect())
    }

    /// Indicator of the complement `1_{A^c}`.
    pub fn complement_indicator(&self) -> ValueFunction {
        ValueFunction(self.mask.iter().map(|&b| f64::from(u8::from(!b))).collect())
    }
}

/// Real-valued function on the state space.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ValueFunction(Vec<f64>);

impl ValueFunction {
    /// Wraps `values`, rejecting NaN and infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
        Ok(Self(values))
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self(vec![value; n])
    }

    /// Indicator `1_y` of a single state.
    pub fn unit(n: usize, state: usize) -> Self {
        let mut v = vec![0.0; n];
        v[state] = 1.0;
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.0)
    }
}

impl Deref for ValueFunction {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<ValueFunction> for Vec<f64> {
    fn from(v: ValueFunction) -> Self {
        v.0
    }
}

pub fn sup_norm(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Sup-norm distance between two vectors of equal length.
pub fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn check_square_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if !m[(r, c)].is_finite() {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

/// Generator of a homogeneous continuous-time Markov chain.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix(DMatrix<f64>);

impl RateMatrix {
    /// Validates an explicit matrix: non-negative off-diagonals and zero row
    /// sums within [`ROW_SUM_TOL`].
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        for x in 0..m.nrows() {
            let mut sum = 0.0;
            for y in 0..m.ncols() {
                if x != y && m[(x, y)] < 0.0 {
                    return Err(Error::NotRateMatrix(format!(
                        "negative off-diagonal entry at ({x}, {y})"
                    )));
                }
                sum += m[(x, y)];
            }
            if sum.abs() > ROW_SUM_TOL {
                return Err(Error::NotRateMatrix(format!("row {x} sums to {sum:e}")));
            }
        }
        Ok(Self(m))
    }

    /// Builds a rate matrix from its off-diagonal entries; the diagonal of
    /// `off` is ignored and replaced by the negated row sum.
    pub fn from_off_diagonal(off: &DMatrix<f64>) -> Result<Self> {
        check_square_finite(off)?;
        let n = off.nrows();
        let mut m = DMatrix::zeros(n, n);
        for x in 0..n {
            let mut sum = 0.0;
            for y in 0..n {
                if x == y {
                    continue;
                }
                let q = off[(x, y)];
                if q < 0.0 {
                    return Err(Error::NotRateMatrix(format!(
                        "negative off-diagonal entry at ({x}, {y})"
                    )));
                }
                m[(x, y)] = q;
                sum += q;
            }
            m[(x, x)] = -sum;
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let mut m = DMatrix::zeros(n, n);
        for (x, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: row.len(),
                });
            }
            for (y, v) in row.iter().enumerate() {
                m[(x, y)] = *v;
            }
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0[(x, y)]
    }

    /// Total rate of leaving `x`, i.e. `-Q(x,x)`.
    pub fn exit_rate(&self, x: usize) -> f64 {
        -self.0[(x, x)]
    }

    /// `Qf` evaluated as `sum_{y != x} Q(x,y) (f(y) - f(x))`.
    ///
    /// This form avoids the cancellation between the diagonal and the
    /// off-diagonal terms, and matches the arithmetic of the rate operators.
    pub fn apply(&self, f: &[f64]) -> ValueFunction {
        let n = self.dim();
        assert_eq!(f.len(), n, "value function has wrong length");
        let out = (0..n)
            .map(|x| {
                let fx = f[x];
                (0..n)
                    .filter(|&y| y != x)
                    .map(|y| self.0[(x, y)] * (f[y] - fx))
                    .sum()
            })
            .collect();
        ValueFunction(out)
    }

    /// Induced sup-norm `max_x sum_y |Q(x,y)|`.
    pub fn norm(&self) -> f64 {
        crate::ops::op_norm(&self.0)
    }
}

/// Row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix(DMatrix<f64>);

impl TransitionMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        for x in 0..m.nrows() {
            let mut sum = 0.0;
            for y in 0..m.ncols() {
                if m[(x, y)] < 0.0 {
                    return Err(Error::NotTransitionMatrix(format!(
                        "negative entry at ({x}, {y})"
                    )));
                }
                sum += m[(x, y)];
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotTransitionMatrix(format!(
                    "row {x} sums to 1 + {:e}",
                    sum - 1.0
                )));
            }
        }
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0[(x, y)]
    }

    pub fn apply(&self, f: &[f64]) -> ValueFunction {
        let n = self.dim();
        assert_eq!(f.len(), n, "value function has wrong length");
        let out = (0..n)
            .map(|x| (0..n).map(|y| self.0[(x, y)] * f[y]).sum())
            .collect();
        ValueFunction(out)
    }
}

/// Row-wise interval bounds on off-diagonal rates.
///
/// The induced set contains every rate matrix whose off-diagonal entries lie
/// within the bounds. It is non-empty, compact and convex, and has separately
/// specified rows, as long as `lower <= upper` entrywise (see
/// [`Model::validate`]).
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRateSet {
    lower: DMatrix<f64>,
    upper: DMatrix<f64>,
}

impl IntervalRateSet {
    /// Diagonals of `lower` and `upper` are ignored. Bounds must be finite
    /// and non-negative; the ordering `lower <= upper` is left to validation.
    pub fn new(lower: DMatrix<f64>, upper: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&lower)?;
        check_square_finite(&upper)?;
        if lower.nrows() != upper.nrows() {
            return Err(Error::Dimension {
                expected: lower.nrows(),
                found: upper.nrows(),
            });
        }
        let n = lower.nrows();
        let mut lower = lower;
        let mut upper = upper;
        for x in 0..n {
            lower[(x, x)] = 0.0;
            upper[(x, x)] = 0.0;
            for y in 0..n {
                for v in [lower[(x, y)], upper[(x, y)]] {
                    if v < 0.0 {
                        return Err(Error::NegativeBound {
                            row: x,
                            col: y,
                            value: v,
                        });
                    }
                }
            }
        }
        Ok(Self { lower, upper })
    }

    /// The set `{Q}` containing a single rate matrix.
    pub fn singleton(q: &RateMatrix) -> Self {
        let mut m = q.matrix().clone();
        for x in 0..m.nrows() {
            m[(x, x)] = 0.0;
        }
        Self {
            lower: m.clone(),
            upper: m,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self, x: usize, y: usize) -> f64 {
        self.lower[(x, y)]
    }

    pub fn upper(&self, x: usize, y: usize) -> f64 {
        self.upper[(x, y)]
    }

    pub fn lower_matrix(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn upper_matrix(&self) -> &DMatrix<f64> {
        &self.upper
    }

    pub fn is_degenerate(&self, x: usize, y: usize) -> bool {
        self.lower[(x, y)] == self.upper[(x, y)]
    }

    /// The member with off-diagonal entries `off` (its diagonal is ignored).
    pub fn member(&self, off: &DMatrix<f64>) -> Result<RateMatrix> {
        let n = self.dim();
        if off.nrows() != n || off.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                found: off.nrows(),
            });
        }
        for x in 0..n {
            for y in 0..n {
                if x == y {
                    continue;
                }
                let v = off[(x, y)];
                let (lo, up) = (self.lower[(x, y)], self.upper[(x, y)]);
                if !(lo..=up).contains(&v) {
                    return Err(Error::BoundViolation {
                        from: x,
                        to: y,
                        value: v,
                        lower: lo,
                        upper: up,
                    });
                }
            }
        }
        let q = RateMatrix::from_off_diagonal(off)?;
        debug_assert!(RateMatrix::new(q.matrix().clone()).is_ok());
        Ok(q)
    }

    /// Checks that `q` belongs to the set, up to `tol` on each entry.
    pub fn check_member(&self, q: &RateMatrix, tol: f64) -> Result<()> {
        let n = self.dim();
        if q.dim() != n {
            return Err(Error::Dimension {
                expected: n,
                found: q.dim(),
            });
        }
        for x in 0..n {
            for y in 0..n {
                if x == y {
                    continue;
                }
                let v = q.get(x, y);
                let (lo, up) = (self.lower[(x, y)], self.upper[(x, y)]);
                if v < lo - tol || v > up + tol {
                    return Err(Error::BoundViolation {
                        from: x,
                        to: y,
                        value: v,
                        lower: lo,
                        upper: up,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, q: &RateMatrix) -> bool {
        self.check_member(q, 0.0).is_ok()
    }

    /// Member built from all lower bounds.
    pub fn all_lower(&self) -> RateMatrix {
        RateMatrix::from_off_diagonal(&self.lower).expect("bounds are non-negative and finite")
    }

    /// Member built from all upper bounds.
    pub fn all_upper(&self) -> RateMatrix {
        RateMatrix::from_off_diagonal(&self.upper).expect("bounds are non-negative and finite")
    }

    /// Extreme member: entry `(x,y)` takes the upper bound where
    /// `pick_upper(x, y)` is true, the lower bound elsewhere.
    pub fn extreme<F: Fn(usize, usize) -> bool>(&self, pick_upper: F) -> RateMatrix {
        let n = self.dim();
        let off = DMatrix::from_fn(n, n, |x, y| {
            if x == y {
                0.0
            } else if pick_upper(x, y) {
                self.upper[(x, y)]
            } else {
                self.lower[(x, y)]
            }
        });
        RateMatrix::from_off_diagonal(&off).expect("bounds are non-negative and finite")
    }

    /// Upper bound on `sup_{Q} ||Q||`, namely twice the largest upper row sum.
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim())
            .map(|x| 2.0 * self.upper.row(x).iter().sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// State space, target set and rate bounds, with consistent dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    space: StateSpace,
    target: TargetSet,
    rates: IntervalRateSet,
}

impl Model {
    pub fn new(space: StateSpace, target: TargetSet, rates: IntervalRateSet) -> Result<Self> {
        let n = space.len();
        if target.n_states() != n {
            return Err(Error::Dimension {
                expected: n,
                found: target.n_states(),
            });
        }
        if rates.dim() != n {
            return Err(Error::Dimension {
                expected: n,
                found: rates.dim(),
            });
        }
        Ok(Self {
            space,
            target,
            rates,
        })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn target(&self) -> &TargetSet {
        &self.target
    }

    pub fn rates(&self) -> &IntervalRateSet {
        &self.rates
    }

    pub fn n_states(&self) -> usize {
        self.space.len()
    }

    /// Bound ordering, absorbing target and lower reachability.
    pub fn validate(&self) -> ValidationReport {
        validate_model(self)
    }

    pub fn validated(self) -> Result<ValidatedModel> {
        let report = self.validate();
        if report.is_valid() {
            Ok(ValidatedModel(self))
        } else {
            Err(Error::Invalid(report))
        }
    }
}

/// A [`Model`] that passed [`Model::validate`]. Solvers only accept these.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedModel(Model);

impl ValidatedModel {
    pub fn model(&self) -> &Model {
        &self.0
    }

    pub fn into_inner(self) -> Model {
        self.0
    }
}

impl Deref for ValidatedModel {
    type Target = Model;

    fn deref(&self) -> &Model {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// `lower(from, to) > upper(from, to)`.
    BoundOrder {
        from: usize,
        to: usize,
        lower: f64,
        upper: f64,
    },
    /// A target state has a positive upper rate out of it.
    NotAbsorbing { state: usize, to: usize, upper: f64 },
    /// No lower-reachable path from this state into the target.
    Unreachable { state: usize },
}

impl Violation {
    pub fn describe(&self, space: &StateSpace) -> String {
        match *self {
            Violation::BoundOrder {
                from,
                to,
                lower,
                upper,
            } => format!(
                "bound ordering: lower({}, {}) = {} > upper = {}",
                space.label(from),
                space.label(to),
                lower,
                upper
            ),
            Violation::NotAbsorbing { state, to, upper } => format!(
                "target state {} is not absorbing: upper({}, {}) = {}",
                space.label(state),
                space.label(state),
                space.label(to),
                upper
            ),
            Violation::Unreachable { state } => format!(
                "target is not lower reachable from {}",
                space.label(state)
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn unreachable_states(&self) -> Vec<usize> {
        self.violations
            .iter()
            .filter_map(|v| match v {
                Violation::Unreachable { state } => Some(*state),
                _ => None,
            })
            .collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  {v:?}")?;
        }
        Ok(())
    }
}

/// Lists every violated invariant; the model is acceptable iff the list is
/// empty. Reachability is only checked once the bounds are well ordered.
pub fn validate_model(model: &Model) -> ValidationReport {
    let set = model.rates();
    let n = model.n_states();
    let mut violations = Vec::new();
    for x in 0..n {
        for y in 0..n {
            if x != y && set.lower(x, y) > set.upper(x, y) {
                violations.push(Violation::BoundOrder {
                    from: x,
                    to: y,
                    lower: set.lower(x, y),
                    upper: set.upper(x, y),
                });
            }
        }
    }
    let absorbing = structure::check_absorbing(model);
    violations.extend(
        absorbing
            .violations
            .iter()
            .map(|&(state, to)| Violation::NotAbsorbing {
                state,
                to,
                upper: set.upper(state, to),
            }),
    );
    if violations.is_empty() {
        let cert = structure::check_lower_reachability(model);
        violations.extend(
            cert.unreachable_states()
                .into_iter()
                .map(|state| Violation::Unreachable { state }),
        );
    }
    ValidationReport { violations }
}
