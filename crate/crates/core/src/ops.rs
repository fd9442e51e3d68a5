//! Lower and upper rate operators of an [`IntervalRateSet`], the members that
//! attain them, the non-linear transition semigroups they generate, the
//! matrix exponential, and restriction to the non-target states.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sup_norm, IntervalRateSet, RateMatrix, TargetSet, TransitionMatrix, ValueFunction};

/// Hard cap on the number of Euler factors in [`EulerSemigroup`].
pub const MAX_EULER_STEPS: usize = 1 << 24;

/// Which envelope of the rate-matrix set an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Lower,
    Upper,
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::Lower => "lower",
            Orientation::Upper => "upper",
        }
    }
}

/// Row-major copy of the bounds, used by the inner loops.
#[derive(Debug, Clone)]
pub(crate) struct Bounds {
    n: usize,
    lo: Vec<f64>,
    up: Vec<f64>,
}

impl Bounds {
    pub(crate) fn new(set: &IntervalRateSet) -> Self {
        let n = set.dim();
        let mut lo = Vec::with_capacity(n * n);
        let mut up = Vec::with_capacity(n * n);
        for x in 0..n {
            for y in 0..n {
                lo.push(set.lower(x, y));
                up.push(set.upper(x, y));
            }
        }
        Self { n, lo, up }
    }

    /// Rate chosen for pair `(x,y)` when the increment `f(y) - f(x)` is `d`.
    /// Ties take the lower bound.
    #[inline]
    fn pick(&self, idx: usize, d: f64, orientation: Orientation) -> f64 {
        let take_upper = match orientation {
            Orientation::Lower => d < 0.0,
            Orientation::Upper => d > 0.0,
        };
        if take_upper {
            self.up[idx]
        } else {
            self.lo[idx]
        }
    }

    #[inline]
    pub(crate) fn apply_into(&self, f: &[f64], orientation: Orientation, out: &mut [f64]) {
        let n = self.n;
        for x in 0..n {
            let fx = f[x];
            let row = x * n;
            let mut acc = 0.0;
            for y in 0..n {
                if y != x {
                    let d = f[y] - fx;
                    acc += self.pick(row + y, d, orientation) * d;
                }
            }
            out[x] = acc;
        }
    }

    fn selection(&self, f: &[f64], orientation: Orientation) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |x, y| {
            if x == y {
                0.0
            } else {
                self.pick(x * n + y, f[y] - f[x], orientation)
            }
        })
    }
}

/// `Q_lower f` (or `Q_upper f`): the pointwise infimum (supremum) of `Qf`
/// over the members of `set`.
pub fn apply_rate(set: &IntervalRateSet, f: &[f64], orientation: Orientation) -> ValueFunction {
    assert_eq!(f.len(), set.dim(), "value function has wrong length");
    let mut out = vec![0.0; f.len()];
    Bounds::new(set).apply_into(f, orientation, &mut out);
    ValueFunction::from_raw(out)
}

pub fn apply_lower(set: &IntervalRateSet, f: &[f64]) -> ValueFunction {
    apply_rate(set, f, Orientation::Lower)
}

pub fn apply_upper(set: &IntervalRateSet, f: &[f64]) -> ValueFunction {
    apply_rate(set, f, Orientation::Upper)
}

/// A member `Q` of `set` with `Qf` equal to the lower (or upper) rate
/// operator at `f`, using the same tie rule as [`apply_rate`].
pub fn extremal_matrix(set: &IntervalRateSet, f: &[f64], orientation: Orientation) -> RateMatrix {
    assert_eq!(f.len(), set.dim(), "value function has wrong length");
    let off = Bounds::new(set).selection(f, orientation);
    RateMatrix::from_off_diagonal(&off).expect("bounds are non-negative and finite")
}

pub fn argmin_matrix(set: &IntervalRateSet, f: &[f64]) -> RateMatrix {
    extremal_matrix(set, f, Orientation::Lower)
}

pub fn argmax_matrix(set: &IntervalRateSet, f: &[f64]) -> RateMatrix {
    extremal_matrix(set, f, Orientation::Upper)
}

/// The rate operator as a value, for use with [`Operator`] and [`restrict`].
#[derive(Debug, Clone)]
pub struct RateOperator {
    bounds: Bounds,
    orientation: Orientation,
}

impl RateOperator {
    pub fn new(set: &IntervalRateSet, orientation: Orientation) -> Self {
        Self {
            bounds: Bounds::new(set),
            orientation,
        }
    }
}

/// `(I + (t/n) Q_lower)^n`, the Euler product approximating the lower (or
/// upper) transition semigroup at time `t`.
///
/// Each factor is a lower (upper) transition operator provided that
/// `(t/n) * ||Q|| <= 1`; [`IntervalRateSet::norm_bound`] stands in for the
/// operator norm. For `f` with `||f|| <= 1` the distance to the limit
/// semigroup is at most `t^2 ||Q||^2 / n`.
#[derive(Debug, Clone)]
pub struct EulerSemigroup {
    bounds: Bounds,
    orientation: Orientation,
    t: f64,
    steps: usize,
    norm: f64,
    capped: bool,
}

impl EulerSemigroup {
    pub fn with_steps(
        set: &IntervalRateSet,
        orientation: Orientation,
        t: f64,
        steps: usize,
    ) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("time must be >= 0, got {t}")));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("step count must be >= 1".into()));
        }
        let norm = set.norm_bound();
        let ratio = t / steps as f64 * norm;
        if ratio > 1.0 {
            return Err(Error::StepSize(ratio));
        }
        Ok(Self {
            bounds: Bounds::new(set),
            orientation,
            t,
            steps,
            norm,
            capped: false,
        })
    }

    /// Chooses `n` so that the a-priori error bound is at most `tol`, capped
    /// at [`MAX_EULER_STEPS`]; [`Self::capped`] reports when the cap applied.
    pub fn with_tolerance(
        set: &IntervalRateSet,
        orientation: Orientation,
        t: f64,
        tol: f64,
    ) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be > 0, got {tol}")));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("time must be >= 0, got {t}")));
        }
        let norm = set.norm_bound();
        let tn = t * norm;
        let wanted = ((tn * tn) / tol).ceil().max(tn.ceil()).max(1.0);
        let (steps, capped) = if wanted > MAX_EULER_STEPS as f64 {
            log::warn!(
                "Euler step count {wanted:e} exceeds cap {MAX_EULER_STEPS}; error bound will exceed {tol:e}"
            );
            (MAX_EULER_STEPS, true)
        } else {
            (wanted as usize, false)
        };
        let mut out = Self::with_steps(set, orientation, t, steps)?;
        out.capped = capped;
        Ok(out)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn step_size(&self) -> f64 {
        self.t / self.steps as f64
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn capped(&self) -> bool {
        self.capped
    }

    /// A-priori bound on `||e^{Qt} f - (I + t/n Q)^n f||` for `||f|| <= 1`.
    pub fn error_bound(&self) -> f64 {
        let tn = self.t * self.norm;
        tn * tn / self.steps as f64
    }

    pub fn apply(&self, f: &[f64]) -> ValueFunction {
        let mut g = f.to_vec();
        self.apply_in_place(&mut g);
        ValueFunction::from_raw(g)
    }

    pub(crate) fn apply_in_place(&self, g: &mut [f64]) {
        assert_eq!(g.len(), self.bounds.n, "value function has wrong length");
        let delta = self.step_size();
        let mut rate = vec![0.0; g.len()];
        for _ in 0..self.steps {
            self.bounds.apply_into(g, self.orientation, &mut rate);
            for (gx, rx) in g.iter_mut().zip(&rate) {
                *gx += delta * rx;
            }
        }
    }
}

/// `e^{Q_lower t}` with step count chosen for the requested tolerance.
pub fn lower_exp(set: &IntervalRateSet, t: f64, tol: f64) -> Result<EulerSemigroup> {
    EulerSemigroup::with_tolerance(set, Orientation::Lower, t, tol)
}

/// `e^{Q_upper t}` with step count chosen for the requested tolerance.
pub fn upper_exp(set: &IntervalRateSet, t: f64, tol: f64) -> Result<EulerSemigroup> {
    EulerSemigroup::with_tolerance(set, Orientation::Upper, t, tol)
}

/// Matrix exponential `e^{Qt}` of a rate matrix.
///
/// Uniformisation on a scaled time step combined with repeated squaring:
/// with `lambda = max_x -Q(x,x)` and `P = I + Q/lambda`, `e^{Q tau}` is the
/// Poisson mixture `sum_k e^{-lambda tau} (lambda tau)^k / k! P^k`, which
/// only adds non-negative terms. `tau = t / 2^s` keeps `lambda tau <= 1/2`.
pub fn matrix_exp(q: &RateMatrix, t: f64) -> Result<TransitionMatrix> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("time must be >= 0, got {t}")));
    }
    let n = q.dim();
    let lambda = (0..n).map(|x| q.exit_rate(x)).fold(0.0, f64::max);
    if t == 0.0 || lambda == 0.0 {
        return Ok(TransitionMatrix::identity(n));
    }
    let mut squarings = 0u32;
    let mut tau = t;
    while lambda * tau > 0.5 {
        tau *= 0.5;
        squarings += 1;
    }
    let p = DMatrix::from_fn(n, n, |x, y| {
        if x == y {
            1.0 - q.exit_rate(x) / lambda
        } else {
            q.get(x, y) / lambda
        }
    });
    let a = lambda * tau;
    let weight0 = (-a).exp();
    let mut term = DMatrix::<f64>::identity(n, n) * weight0;
    let mut sum = term.clone();
    let mut weight = weight0;
    for k in 1..64 {
        weight *= a / k as f64;
        term = (&term * &p) * (a / k as f64);
        sum += &term;
        if weight < 1e-20 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    TransitionMatrix::new(sum)
}

/// Anything that maps value functions to value functions.
pub trait Operator {
    fn dim(&self) -> usize;
    fn apply_to(&self, f: &[f64]) -> Vec<f64>;
}

impl Operator for RateMatrix {
    fn dim(&self) -> usize {
        RateMatrix::dim(self)
    }

    fn apply_to(&self, f: &[f64]) -> Vec<f64> {
        self.apply(f).into_vec()
    }
}

impl Operator for TransitionMatrix {
    fn dim(&self) -> usize {
        TransitionMatrix::dim(self)
    }

    fn apply_to(&self, f: &[f64]) -> Vec<f64> {
        self.apply(f).into_vec()
    }
}

impl Operator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply_to(&self, f: &[f64]) -> Vec<f64> {
        (self * nalgebra::DVector::from_column_slice(f))
            .iter()
            .copied()
            .collect()
    }
}

impl Operator for RateOperator {
    fn dim(&self) -> usize {
        self.bounds.n
    }

    fn apply_to(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.bounds.apply_into(f, self.orientation, &mut out);
        out
    }
}

impl Operator for EulerSemigroup {
    fn dim(&self) -> usize {
        self.bounds.n
    }

    fn apply_to(&self, f: &[f64]) -> Vec<f64> {
        self.apply(f).into_vec()
    }
}

/// An operator on `X` seen as an operator on `A^c`: zero-extend, apply,
/// restrict.
#[derive(Debug, Clone)]
pub struct Restricted<'a, O: ?Sized> {
    inner: &'a O,
    keep: Vec<usize>,
}

pub fn restrict<'a, O: Operator + ?Sized>(op: &'a O, target: &TargetSet) -> Restricted<'a, O> {
    assert_eq!(op.dim(), target.n_states(), "operator and target disagree on |X|");
    Restricted {
        inner: op,
        keep: target.complement(),
    }
}

impl<O: Operator + ?Sized> Restricted<'_, O> {
    pub fn extend(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.keep.len(), "value function has wrong length");
        let mut full = vec![0.0; self.inner.dim()];
        for (&i, &v) in self.keep.iter().zip(f) {
            full[i] = v;
        }
        full
    }
}

impl<O: Operator + ?Sized> Operator for Restricted<'_, O> {
    fn dim(&self) -> usize {
        self.keep.len()
    }

    fn apply_to(&self, f: &[f64]) -> Vec<f64> {
        let full = self.inner.apply_to(&self.extend(f));
        self.keep.iter().map(|&i| full[i]).collect()
    }
}

/// Sub-matrix on the coordinates of `A^c`.
pub fn restrict_matrix(m: &DMatrix<f64>, target: &TargetSet) -> DMatrix<f64> {
    let keep = target.complement();
    DMatrix::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])])
}

/// Subgenerator `G = Q|_{A^c}`.
pub fn subgenerator(q: &RateMatrix, target: &TargetSet) -> DMatrix<f64> {
    restrict_matrix(q.matrix(), target)
}

/// Induced sup-norm `max_x sum_y |M(x,y)|`.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `||M 1||`, which equals the induced norm for monotone, positively
/// homogeneous operators that map non-negative functions to non-negative
/// functions (`|Mf| <= M|f|`).
pub fn monotone_norm<O: Operator + ?Sized>(op: &O) -> f64 {
    sup_norm(&op.apply_to(&vec![1.0; op.dim()]))
}
