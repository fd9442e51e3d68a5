//! Stability constants of the upper sub-semigroup on the complement of the
//! target, the re-norm built from them, and quasicontractivity checks.
//!
//! All semigroups here are Euler products `(I + delta Q)^k` with one dyadic
//! step `delta` shared by the upper operator and every member. For these
//! discrete semigroups domination of members by the upper operator and the
//! quasicontractivity bounds hold exactly at multiples of the star-norm grid
//! spacing, so the checks only need a rounding slack. The distance to the
//! continuous-time semigroup is reported separately.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Model, RateMatrix, TargetSet};
use crate::ops::{matrix_exp, subgenerator, Bounds, Orientation};
use crate::random::random_vector;

/// Times at which the envelope is checked: `2^-6, ..., 2^3`.
pub fn default_time_grid() -> Vec<f64> {
    (-6..=3).map(|k| 2f64.powi(k)).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsOptions {
    /// Euler step is `2^-step_exponent`; by default the smallest exponent
    /// `>= 6` with `delta * norm_bound <= 2^-8`.
    pub step_exponent: Option<u32>,
    /// Star-norm grid on `[0, 1]` has `star_points + 1` points.
    pub star_points: usize,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self {
            step_exponent: None,
            star_points: 64,
        }
    }
}

fn step_exponent(norm_bound: f64, opts: &DiagnosticsOptions) -> u32 {
    opts.step_exponent.unwrap_or_else(|| {
        let need = (norm_bound.max(1.0).log2().ceil() as i64 + 8).max(6);
        need as u32
    })
}

/// Number of Euler steps of size `delta` in `t`; `t` must be a multiple.
fn steps_in(t: f64, delta: f64) -> Result<usize> {
    let k = t / delta;
    if !(k >= 0.0) || (k - k.round()).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "time {t} is not a multiple of the step {delta}"
        )));
    }
    Ok(k.round() as usize)
}

/// Discrete semigroup on the complement of the target.
#[derive(Debug, Clone)]
enum Generator {
    Upper(Bounds),
    Member(DMatrix<f64>),
}

#[derive(Debug, Clone)]
struct SubSemigroup {
    generator: Generator,
    free: Vec<usize>,
    n: usize,
    delta: f64,
}

impl SubSemigroup {
    fn step(&self, g: &mut [f64], scratch: &mut [f64]) {
        match &self.generator {
            Generator::Upper(b) => b.apply_into(g, Orientation::Upper, scratch),
            Generator::Member(q) => {
                for x in 0..self.n {
                    scratch[x] = (0..self.n)
                        .filter(|&y| y != x)
                        .map(|y| q[(x, y)] * (g[y] - g[x]))
                        .sum();
                }
            }
        }
        for &x in &self.free {
            g[x] += self.delta * scratch[x];
        }
    }

    fn advance(&self, g: &mut [f64], steps: usize) {
        let mut scratch = vec![0.0; self.n];
        for _ in 0..steps {
            self.step(g, &mut scratch);
        }
    }

    /// Full-space vector equal to `f` on the complement, zero on the target.
    fn extend(&self, f: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n];
        for (&x, &v) in self.free.iter().zip(f) {
            g[x] = v;
        }
        g
    }

    fn restrict(&self, g: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&x| g[x]).collect()
    }

    fn sup(&self, g: &[f64]) -> f64 {
        self.free.iter().map(|&x| g[x].abs()).fold(0.0, f64::max)
    }

    /// `||S^t||` at each requested time (ascending, multiples of delta),
    /// evaluated as `||S^t 1||`.
    fn norms_at(&self, times: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.extend(&vec![1.0; self.free.len()]);
        let mut done = 0usize;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            let k = steps_in(t, self.delta)?;
            if k < done {
                return Err(Error::InvalidArgument("time grid must be ascending".into()));
            }
            self.advance(&mut g, k - done);
            done = k;
            out.push(self.sup(&g));
        }
        Ok(out)
    }
}

fn upper_semigroup(model: &Model, delta: f64) -> SubSemigroup {
    SubSemigroup {
        generator: Generator::Upper(Bounds::new(model.rates())),
        free: model.target().complement(),
        n: model.n_states(),
        delta,
    }
}

fn member_semigroup(q: &RateMatrix, target: &TargetSet, delta: f64) -> SubSemigroup {
    SubSemigroup {
        generator: Generator::Member(q.matrix().clone()),
        free: target.complement(),
        n: q.dim(),
        delta,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    /// `||e^{G_upper}||` at `t = 1`.
    pub q: f64,
    /// `-ln q`.
    pub xi: f64,
    /// `1 / q`.
    #[serde(rename = "M")]
    pub m: f64,
    pub grid: Vec<f64>,
    /// `||e^{G_upper t}||` per grid point.
    pub norms: Vec<f64>,
    /// `M e^{-xi t}` per grid point.
    pub envelope: Vec<f64>,
    pub envelope_holds: bool,
    /// Every grid norm is below one.
    pub contractive: bool,
    pub euler_step: f64,
    /// A-priori distance between the Euler product and the exact operator at
    /// `t = 1`, in operator norm.
    pub euler_error_bound: f64,
}

/// `q = ||e^{G_upper}||`, `xi = -ln q`, `M = 1/q`, and the norms on
/// `grid` checked against the envelope `M e^{-xi t}`.
pub fn stability_constants(model: &Model, opts: &DiagnosticsOptions) -> Result<StabilityReport> {
    let norm = model.rates().norm_bound();
    let p = step_exponent(norm, opts);
    let delta = 2f64.powi(-(p as i32));
    if delta * norm > 1.0 {
        return Err(Error::StepSize(delta * norm));
    }
    let s = upper_semigroup(model, delta);
    let grid = default_time_grid();
    let norms = s.norms_at(&grid)?;
    let q = norms[grid.iter().position(|&t| t == 1.0).expect("grid contains 1")];
    if !(q < 1.0) || q <= 0.0 {
        return Err(Error::AssumptionViolated(format!(
            "upper sub-semigroup is not contractive at t = 1 (norm {q}); \
             the target is not lower reachable from every state"
        )));
    }
    let xi = -q.ln();
    let m = 1.0 / q;
    let envelope: Vec<f64> = grid.iter().map(|t| m * (-xi * t).exp()).collect();
    let rounding = 1e-12;
    Ok(StabilityReport {
        q,
        xi,
        m,
        envelope_holds: norms.iter().zip(&envelope).all(|(a, b)| *a <= b + rounding),
        contractive: norms.iter().all(|&v| v < 1.0),
        grid,
        norms,
        envelope,
        euler_step: delta,
        euler_error_bound: norm * norm * delta,
    })
}

/// The re-norm `||f||_* = sup_t e^{xi t} ||e^{G_upper t} |f|||` evaluated on
/// the grid `{0, tau, ..., 1}`. Since `||e^{G_upper}|| = q = e^{-xi}`, times
/// beyond one never increase the sup, so only the spacing limits accuracy.
#[derive(Debug, Clone)]
pub struct StarNorm {
    semigroup: SubSemigroup,
    xi: f64,
    m: f64,
    points: usize,
    steps_per_point: usize,
}

impl StarNorm {
    pub fn new(model: &Model, report: &StabilityReport, opts: &DiagnosticsOptions) -> Result<Self> {
        let delta = report.euler_step;
        let points = opts.star_points.max(1);
        let per_unit = steps_in(1.0, delta)?;
        if per_unit % points != 0 {
            return Err(Error::InvalidArgument(format!(
                "{points} star-norm points do not divide {per_unit} Euler steps"
            )));
        }
        Ok(Self {
            semigroup: upper_semigroup(model, delta),
            xi: report.xi,
            m: report.m,
            points,
            steps_per_point: per_unit / points,
        })
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// Grid spacing.
    pub fn tau(&self) -> f64 {
        1.0 / self.points as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..=self.points).map(|j| j as f64 * self.tau()).collect()
    }

    /// `||f||_*` on the grid, for `f` indexed by the complement of the target.
    pub fn eval(&self, f: &[f64]) -> f64 {
        let s = &self.semigroup;
        let abs: Vec<f64> = f.iter().map(|v| v.abs()).collect();
        let mut g = s.extend(&abs);
        let mut best = s.sup(&g);
        for j in 1..=self.points {
            s.advance(&mut g, self.steps_per_point);
            best = best.max((self.xi * j as f64 * self.tau()).exp() * s.sup(&g));
        }
        best
    }

    /// Envelope upper bound `M ||f||`.
    pub fn upper_bound(&self, f: &[f64]) -> f64 {
        self.m * f.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

pub fn star_norm(norm: &StarNorm, f: &[f64]) -> f64 {
    norm.eval(f)
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasiFailure {
    /// `"upper"` or `"member <index>"`.
    pub subject: String,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasiReport {
    pub checks: usize,
    pub failures: Vec<QuasiFailure>,
    /// Largest `||S^t f||_* / (e^{-xi t} ||f||_*)` seen.
    pub max_ratio: f64,
    /// Member norms never exceed the upper norms on the stability grid.
    pub members_dominated: bool,
    /// Largest gap between exact member norms and their Euler products on
    /// the stability grid.
    pub member_euler_gap: f64,
}

impl QuasiReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.members_dominated
    }
}

/// Checks `||S^t f||_* <= e^{-xi t} ||f||_* (1 + slack)` for the upper
/// sub-semigroup and every member sub-semigroup, at each `t` in `times`
/// (multiples of the star-norm spacing) and `n_functions` random `f`.
pub fn quasicontractivity_check(
    model: &Model,
    report: &StabilityReport,
    star: &StarNorm,
    members: &[RateMatrix],
    times: &[f64],
    n_functions: usize,
    seed: u64,
    slack: f64,
) -> Result<QuasiReport> {
    let delta = report.euler_step;
    let target = model.target();
    for q in members {
        model.rates().check_member(q, 0.0)?;
    }
    for &t in times {
        steps_in(t, star.tau())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = target.complement().len();
    let fs: Vec<Vec<f64>> = (0..n_functions).map(|_| random_vector(&mut rng, k, 1.0)).collect();

    let mut subjects = vec![("upper".to_string(), upper_semigroup(model, delta))];
    for (i, q) in members.iter().enumerate() {
        subjects.push((format!("member {i}"), member_semigroup(q, target, delta)));
    }

    let mut checks = 0;
    let mut failures = Vec::new();
    let mut max_ratio = 0.0f64;
    for (name, s) in &subjects {
        for f in &fs {
            let base = star.eval(f);
            for &t in times {
                let mut g = s.extend(f);
                s.advance(&mut g, steps_in(t, delta)?);
                let lhs = star.eval(&s.restrict(&g));
                let rhs = (-star.xi() * t).exp() * base;
                checks += 1;
                if rhs > 0.0 {
                    max_ratio = max_ratio.max(lhs / rhs);
                }
                if lhs > rhs * (1.0 + slack) {
                    failures.push(QuasiFailure {
                        subject: name.clone(),
                        t,
                        lhs,
                        rhs,
                    });
                }
            }
        }
    }

    let mut members_dominated = true;
    let mut gap = 0.0f64;
    for (_, s) in subjects.iter().skip(1) {
        let norms = s.norms_at(&report.grid)?;
        members_dominated &= norms.iter().zip(&report.norms).all(|(a, b)| *a <= b + 1e-12);
    }
    for q in members {
        let euler = member_semigroup(q, target, delta).norms_at(&report.grid)?;
        for (&t, e) in report.grid.iter().zip(euler) {
            let exact = restricted_exp_norm(q, target, t)?;
            gap = gap.max((exact - e).abs());
        }
    }

    Ok(QuasiReport {
        checks,
        failures,
        max_ratio,
        members_dominated,
        member_euler_gap: gap,
    })
}

/// `||e^{G t}||` for the subgenerator of `q`, from the exact exponential.
pub fn restricted_exp_norm(q: &RateMatrix, target: &TargetSet, t: f64) -> Result<f64> {
    let p = matrix_exp(q, t)?;
    Ok(target
        .complement()
        .into_iter()
        .map(|x| target.complement().into_iter().map(|y| p.get(x, y)).sum::<f64>())
        .fold(0.0, f64::max))
}

/// Largest real part among the eigenvalues of the subgenerator of `q`.
pub fn spectral_abscissa(q: &RateMatrix, target: &TargetSet) -> f64 {
    subgenerator(q, target)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}
