//! Expected hitting times: exact solves for a single rate matrix, and the
//! lower/upper hitting times of the whole set via value iteration, policy
//! iteration, and the discretised (step `delta`) systems.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{sup_dist, sup_norm, RateMatrix, TargetSet, ValidatedModel, ValueFunction};
use crate::ops::{
    apply_rate, extremal_matrix, matrix_exp, restrict_matrix, subgenerator, Bounds, EulerSemigroup,
    Orientation,
};

/// Residual bound enforced on exact linear solves.
pub const LINEAR_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ValueIteration,
    PolicyIteration,
    DiscretizationLimit,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ValueIteration => "value-iteration",
            Method::PolicyIteration => "policy-iteration",
            Method::DiscretizationLimit => "discretization-limit",
        }
    }
}

/// Lower or upper hitting times from one solver run.
#[derive(Debug, Clone)]
pub struct HittingSolution {
    pub orientation: Orientation,
    /// Zero on the target.
    pub values: ValueFunction,
    /// Sup-norm residual of the system the solver targets.
    pub residual: f64,
    pub iterations: usize,
    pub method: Method,
    pub delta_used: Option<f64>,
    /// Member of the set whose hitting times equal `values` (policy iteration).
    pub certificate: Option<RateMatrix>,
}

/// Lower and upper hitting times of a model.
#[derive(Debug, Clone)]
pub struct HittingTimeResult {
    pub lower: HittingSolution,
    pub upper: HittingSolution,
}

impl HittingTimeResult {
    /// `lower <= upper + tol` pointwise.
    pub fn is_ordered(&self, tol: f64) -> bool {
        self.lower
            .values
            .iter()
            .zip(self.upper.values.iter())
            .all(|(l, u)| *l <= u + tol)
    }
}

fn expand(target: &TargetSet, restricted: &[f64]) -> Vec<f64> {
    let mut full = vec![0.0; target.n_states()];
    for (&i, &v) in target.complement().iter().zip(restricted) {
        full[i] = v;
    }
    full
}

fn lu_solve(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::Infeasible(format!("{what} is singular")))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Infeasible(format!("{what} produced non-finite values")));
    }
    // One step of iterative refinement.
    let r = b - a * &x;
    let dx = lu.solve(&r).unwrap_or_else(|| DVector::zeros(x.len()));
    Ok(x + dx)
}

fn cont_residual(q: &RateMatrix, target: &TargetSet, h: &[f64]) -> f64 {
    let qh = q.apply(h);
    target
        .complement()
        .into_iter()
        .map(|x| (1.0 + qh[x]).abs())
        .fold(0.0, f64::max)
}

/// Expected hitting times of the homogeneous chain with generator `q`:
/// `h = 0` on the target and `G h = -1` on its complement.
pub fn precise_continuous(q: &RateMatrix, target: &TargetSet) -> Result<ValueFunction> {
    if q.dim() != target.n_states() {
        return Err(Error::Dimension {
            expected: target.n_states(),
            found: q.dim(),
        });
    }
    let g = subgenerator(q, target);
    let rhs = DVector::from_element(g.nrows(), -1.0);
    let sol = lu_solve(&g, &rhs, "subgenerator")?;
    let h = expand(target, sol.as_slice());
    if h.iter().any(|&v| v < 0.0) {
        return Err(Error::Infeasible(
            "negative hitting time; the target is not reachable".into(),
        ));
    }
    let res = cont_residual(q, target, &h);
    if res > LINEAR_RESIDUAL_TOL {
        return Err(Error::Infeasible(format!(
            "hitting-time system residual {res:e} exceeds {LINEAR_RESIDUAL_TOL:e}"
        )));
    }
    Ok(ValueFunction::from_raw(h))
}

/// Hitting times, measured in time units, of the discrete-time chain with
/// transition matrix `e^{q delta}`: `h = (I - e^{G delta})^{-1} delta 1` on
/// the complement of the target.
pub fn precise_discrete(q: &RateMatrix, target: &TargetSet, delta: f64) -> Result<ValueFunction> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta must be > 0, got {delta}")));
    }
    let t = matrix_exp(q, delta)?;
    let e = restrict_matrix(t.matrix(), target);
    let k = e.nrows();
    let a = DMatrix::<f64>::identity(k, k) - &e;
    let rhs = DVector::from_element(k, delta);
    let sol = lu_solve(&a, &rhs, "I - exp(G delta)")?;
    if sol.iter().any(|&v| v < 0.0) {
        return Err(Error::Infeasible(
            "negative hitting time; the target is not reachable".into(),
        ));
    }
    let res = (&rhs - &a * &sol).amax();
    if res > LINEAR_RESIDUAL_TOL * sol.amax().max(1.0) {
        return Err(Error::Infeasible(format!("discrete system residual {res:e} too large")));
    }
    Ok(ValueFunction::from_raw(expand(target, sol.as_slice())))
}

/// Sup-norm of `1_A h - 1_{A^c} - 1_{A^c} Q h`, with `Q` the lower or upper
/// rate operator. Zero iff `h` solves the non-linear hitting-time system.
pub fn residual(model: &ValidatedModel, h: &[f64], orientation: Orientation) -> f64 {
    let qh = apply_rate(model.rates(), h, orientation);
    let target = model.target();
    (0..h.len())
        .map(|x| {
            if target.contains(x) {
                h[x].abs()
            } else {
                (1.0 + qh[x]).abs()
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy)]
pub struct ValueIterationOptions {
    /// Step size; defaults to `0.9 / norm_bound`.
    pub delta: Option<f64>,
    /// Stop once `||h_{k+1} - h_k|| / delta <= tol`.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for ValueIterationOptions {
    fn default() -> Self {
        Self {
            delta: None,
            tol: 1e-9,
            max_sweeps: 10_000_000,
        }
    }
}

/// Default value-iteration step for a model.
pub fn default_delta(model: &ValidatedModel) -> f64 {
    0.9 / model.rates().norm_bound()
}

/// Iterates `h <- delta 1_{A^c} + 1_{A^c} (I + delta Q) h` from `h = 0`,
/// with `Q` the lower or upper rate operator. The iterates increase
/// monotonically to the minimal non-negative solution of
/// `1_A h = 1_{A^c} + 1_{A^c} Q h`.
pub fn solve_value_iteration(
    model: &ValidatedModel,
    orientation: Orientation,
    opts: &ValueIterationOptions,
) -> Result<HittingSolution> {
    let set = model.rates();
    let norm = set.norm_bound();
    let delta = opts.delta.unwrap_or(0.9 / norm);
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta must be > 0, got {delta}")));
    }
    if delta * norm > 1.0 {
        return Err(Error::StepSize(delta * norm));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be > 0".into()));
    }
    let n = model.n_states();
    let free = model.target().complement();
    let bounds = Bounds::new(set);
    let mut h = vec![0.0; n];
    let mut rate = vec![0.0; n];
    let mut last_change = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        bounds.apply_into(&h, orientation, &mut rate);
        let mut change = 0.0f64;
        for &x in &free {
            let step = delta * (1.0 + rate[x]);
            debug_assert!(
                step >= -1e-12 * h[x].abs().max(1.0),
                "value iteration lost monotonicity at sweep {sweep}"
            );
            h[x] += step;
            change = change.max(step.abs());
        }
        last_change = change / delta;
        if last_change <= opts.tol {
            return Ok(HittingSolution {
                orientation,
                residual: residual(model, &h, orientation),
                values: ValueFunction::from_raw(h),
                iterations: sweep,
                method: Method::ValueIteration,
                delta_used: Some(delta),
                certificate: None,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_sweeps,
        residual: last_change,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct PolicyIterationOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PolicyIterationOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

/// Alternates `Q_{k+1} = argmin_Q Q h_k` (argmax for the upper orientation)
/// with the exact solve `h_{k+1} = -G_{k+1}^{-1} 1`, starting from the
/// all-lower (all-upper) member. The returned certificate is the final
/// member, whose hitting times are the returned values.
pub fn solve_policy_iteration(
    model: &ValidatedModel,
    orientation: Orientation,
    opts: &PolicyIterationOptions,
) -> Result<HittingSolution> {
    let set = model.rates();
    let target = model.target();
    let mut q = match orientation {
        Orientation::Lower => set.all_lower(),
        Orientation::Upper => set.all_upper(),
    };
    let mut h = precise_continuous(&q, target)?;
    let mut seen = vec![q.clone()];
    for it in 1..=opts.max_iter {
        let q_next = extremal_matrix(set, &h, orientation);
        let h_next = precise_continuous(&q_next, target)?;
        let change = sup_dist(&h, &h_next);
        if q_next == q || change <= opts.tol {
            return Ok(HittingSolution {
                orientation,
                residual: residual(model, &h_next, orientation),
                values: h_next,
                iterations: it,
                method: Method::PolicyIteration,
                delta_used: None,
                certificate: Some(q_next),
            });
        }
        if seen.contains(&q_next) {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: residual(model, &h_next, orientation),
            });
        }
        seen.push(q_next.clone());
        q = q_next;
        h = h_next;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: residual(model, &h, orientation),
    })
}

/// Lower and upper hitting times with the requested method.
pub fn solve_bounds(
    model: &ValidatedModel,
    method: Method,
    vi: &ValueIterationOptions,
    pi: &PolicyIterationOptions,
) -> Result<HittingTimeResult> {
    let solve = |o| match method {
        Method::ValueIteration => solve_value_iteration(model, o, vi),
        Method::PolicyIteration => solve_policy_iteration(model, o, pi),
        Method::DiscretizationLimit => Err(Error::InvalidArgument(
            "use solve_discretized for the discretised systems".into(),
        )),
    };
    Ok(HittingTimeResult {
        lower: solve(Orientation::Lower)?,
        upper: solve(Orientation::Upper)?,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct DiscretizedOptions {
    /// Outer stop: `||h_{k+1} - h_k|| <= tol * delta`.
    pub tol: f64,
    /// A-priori error bound for each application of `e^{Q delta}`.
    pub inner_tol: f64,
    pub max_iter: usize,
}

impl Default for DiscretizedOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            inner_tol: 1e-6,
            max_iter: 10_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiscretizedSolution {
    pub solution: HittingSolution,
    /// Euler factors per application of the non-linear transition operator.
    pub inner_steps: usize,
    /// A-priori error of one application on unit-norm inputs.
    pub operator_error_bound: f64,
    pub capped: bool,
}

/// Minimal non-negative solution of
/// `h = delta 1_{A^c} + 1_{A^c} e^{Q delta} h`, with `e^{Q delta}` the lower
/// (upper) transition operator, by fixed-point iteration from zero.
pub fn solve_discretized(
    model: &ValidatedModel,
    orientation: Orientation,
    delta: f64,
    opts: &DiscretizedOptions,
) -> Result<DiscretizedSolution> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta must be > 0, got {delta}")));
    }
    let op = EulerSemigroup::with_tolerance(model.rates(), orientation, delta, opts.inner_tol)?;
    let n = model.n_states();
    let free = model.target().complement();
    let mut h = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut last = f64::INFINITY;
    for it in 1..=opts.max_iter {
        g.copy_from_slice(&h);
        op.apply_in_place(&mut g);
        let mut change = 0.0f64;
        for &x in &free {
            let next = delta + g[x];
            change = change.max((next - h[x]).abs());
            h[x] = next;
        }
        last = change / delta;
        if change <= opts.tol * delta {
            let th = op.apply(&h);
            let res = free
                .iter()
                .map(|&x| (h[x] - delta - th[x]).abs())
                .fold(0.0, f64::max);
            return Ok(DiscretizedSolution {
                solution: HittingSolution {
                    orientation,
                    values: ValueFunction::from_raw(h),
                    residual: res,
                    iterations: it,
                    method: Method::DiscretizationLimit,
                    delta_used: Some(delta),
                    certificate: None,
                },
                inner_steps: op.steps(),
                operator_error_bound: op.error_bound(),
                capped: op.capped(),
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: last,
    })
}

/// What a convergence study discretises.
#[derive(Debug, Clone)]
pub enum StudySubject {
    /// A single member, compared against its exact hitting times.
    Member(RateMatrix),
    /// The lower or upper hitting times of the whole set, compared against
    /// policy iteration.
    Imprecise(Orientation),
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub deltas: Vec<f64>,
    /// `||h_delta - h||` per delta.
    pub errors: Vec<f64>,
    /// `error / (delta ||h||)` per delta.
    pub ratios: Vec<f64>,
    /// Least-squares slope of `log error` against `log delta`; `None` with
    /// fewer than two positive errors.
    pub fitted_order: Option<f64>,
    /// Largest ratio over the grid.
    pub fitted_l: f64,
    pub reference: Vec<f64>,
}

impl ConvergenceStudy {
    pub fn errors_decreasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }
}

fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, &y)| y > 0.0)
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Discretisation error over a strictly decreasing grid of positive step
/// sizes, with a log-log order fit. Grid points are solved in parallel.
pub fn convergence_study(
    model: &ValidatedModel,
    subject: &StudySubject,
    deltas: &[f64],
    opts: &DiscretizedOptions,
) -> Result<ConvergenceStudy> {
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("empty delta grid".into()));
    }
    if deltas.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
        return Err(Error::InvalidArgument("delta grid must be positive".into()));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("delta grid must be strictly decreasing".into()));
    }
    let target = model.target();
    let reference: Vec<f64> = match subject {
        StudySubject::Member(q) => {
            model.rates().check_member(q, 0.0)?;
            precise_continuous(q, target)?.into_vec()
        }
        StudySubject::Imprecise(o) => {
            solve_policy_iteration(model, *o, &PolicyIterationOptions::default())?
                .values
                .into_vec()
        }
    };
    let scale = sup_norm(&reference);
    let approx: Vec<Vec<f64>> = deltas
        .par_iter()
        .map(|&d| -> Result<Vec<f64>> {
            Ok(match subject {
                StudySubject::Member(q) => precise_discrete(q, target, d)?.into_vec(),
                StudySubject::Imprecise(o) => solve_discretized(model, *o, d, opts)?
                    .solution
                    .values
                    .into_vec(),
            })
        })
        .collect::<Result<_>>()?;
    let errors: Vec<f64> = approx.iter().map(|h| sup_dist(h, &reference)).collect();
    let ratios: Vec<f64> = errors
        .iter()
        .zip(deltas)
        .map(|(e, d)| e / (d * scale))
        .collect();
    Ok(ConvergenceStudy {
        deltas: deltas.to_vec(),
        fitted_order: loglog_slope(deltas, &errors),
        fitted_l: ratios.iter().copied().fold(0.0, f64::max),
        errors,
        ratios,
        reference,
    })
}
