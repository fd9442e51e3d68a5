//! Path samplers for homogeneous, piecewise-homogeneous and history-dependent
//! chains whose rates stay inside the set, and the empirical hitting-time
//! estimator used to check that simulated means fall between the bounds.
//!
//! Each path owns a ChaCha stream keyed by `(seed, path index)`, so results
//! do not depend on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{IntervalRateSet, Model, RateMatrix, TargetSet};
use crate::ops::{extremal_matrix, Orientation};
use crate::random::{random_extreme_member, uniform_member};

pub type PathRng = ChaCha8Rng;

/// Generator for path `index` of a run seeded with `seed`.
pub fn path_rng(seed: u64, index: u64) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySample {
    /// Visited states; `states[0]` is the start.
    pub states: Vec<usize>,
    /// `jump_times[i]` is the entry time into `states[i + 1]`.
    pub jump_times: Vec<f64>,
    /// First entry time into the target, or the horizon when censored.
    pub hit_time: f64,
    pub censored: bool,
}

impl TrajectorySample {
    pub fn start(&self) -> usize {
        self.states[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Homogeneous,
    Inhomogeneous,
    HistoryDependent,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Homogeneous => "homogeneous",
            Regime::Inhomogeneous => "inhomogeneous",
            Regime::HistoryDependent => "history-dependent",
        }
    }
}

fn check_start(target: &TargetSet, start: usize, horizon: f64) -> Result<()> {
    if start >= target.n_states() {
        return Err(Error::IndexOutOfRange {
            index: start,
            len: target.n_states(),
        });
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be > 0, got {horizon}")));
    }
    Ok(())
}

/// Next state from row `x` of `q`, given `u` uniform on `[0, exit rate)`.
fn pick_next(q: &RateMatrix, x: usize, u: f64) -> usize {
    let n = q.dim();
    let mut acc = 0.0;
    let mut last = x;
    for y in (0..n).filter(|&y| y != x) {
        let r = q.get(x, y);
        if r <= 0.0 {
            continue;
        }
        acc += r;
        last = y;
        if u < acc {
            return y;
        }
    }
    last
}

/// Core loop. `rates(t, state, jumps, rng)` returns the matrix in force and
/// the time at which it expires; a holding time crossing that time is
/// discarded and redrawn from the next matrix (memorylessness).
fn run_path<F>(
    target: &TargetSet,
    start: usize,
    horizon: f64,
    rng: &mut PathRng,
    mut rates: F,
) -> Result<TrajectorySample>
where
    F: FnMut(f64, usize, usize, &mut PathRng) -> Result<(RateMatrix, f64)>,
{
    let mut states = vec![start];
    let mut jump_times = Vec::new();
    let mut t = 0.0;
    let mut x = start;
    loop {
        if target.contains(x) {
            return Ok(TrajectorySample {
                states,
                jump_times,
                hit_time: t,
                censored: false,
            });
        }
        let (q, expires) = rates(t, x, jump_times.len(), rng)?;
        let exit = q.exit_rate(x);
        let limit = expires.min(horizon);
        if exit <= 0.0 {
            if limit >= horizon {
                break;
            }
            t = limit;
            continue;
        }
        let hold = Exp::new(exit).expect("positive rate").sample(rng);
        if t + hold >= limit {
            if limit >= horizon {
                break;
            }
            t = limit;
            continue;
        }
        t += hold;
        let u = rng.random::<f64>() * exit;
        x = pick_next(&q, x, u);
        states.push(x);
        jump_times.push(t);
    }
    Ok(TrajectorySample {
        states,
        jump_times,
        hit_time: horizon,
        censored: true,
    })
}

/// One path of the homogeneous chain with generator `q`.
pub fn sample_homogeneous(
    q: &RateMatrix,
    target: &TargetSet,
    start: usize,
    horizon: f64,
    rng: &mut PathRng,
) -> Result<TrajectorySample> {
    check_start(target, start, horizon)?;
    if q.dim() != target.n_states() {
        return Err(Error::Dimension {
            expected: target.n_states(),
            found: q.dim(),
        });
    }
    run_path(target, start, horizon, rng, |_, _, _, _| {
        Ok((q.clone(), f64::INFINITY))
    })
}

/// Piecewise-constant choice of members over time.
#[derive(Debug, Clone)]
pub struct Schedule {
    /// Strictly increasing positive switch times.
    breakpoints: Vec<f64>,
    /// One more member than breakpoints.
    members: Vec<RateMatrix>,
    /// When set, the pattern repeats with this period.
    period: Option<f64>,
}

impl Schedule {
    /// `members[i]` is in force on `[breakpoints[i-1], breakpoints[i])`; the
    /// last member stays in force forever.
    pub fn new(breakpoints: Vec<f64>, members: Vec<RateMatrix>) -> Result<Self> {
        if members.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} breakpoints need {} members, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                members.len()
            )));
        }
        if breakpoints.iter().any(|b| !(*b > 0.0 && b.is_finite()))
            || breakpoints.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidArgument(
                "breakpoints must be positive, finite and strictly increasing".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            members,
            period: None,
        })
    }

    /// A single member for all time.
    pub fn constant(q: RateMatrix) -> Self {
        Self {
            breakpoints: Vec::new(),
            members: vec![q],
            period: None,
        }
    }

    /// Cycles through `members`, switching every `dwell` time units.
    pub fn cyclic(dwell: f64, members: Vec<RateMatrix>) -> Result<Self> {
        if !(dwell > 0.0 && dwell.is_finite()) {
            return Err(Error::InvalidArgument(format!("dwell must be > 0, got {dwell}")));
        }
        if members.is_empty() {
            return Err(Error::InvalidArgument("empty schedule".into()));
        }
        let k = members.len();
        Ok(Self {
            breakpoints: (1..k).map(|i| i as f64 * dwell).collect(),
            members,
            period: Some(k as f64 * dwell),
        })
    }

    pub fn members(&self) -> &[RateMatrix] {
        &self.members
    }

    /// Every piece must be a member of `set`.
    pub fn check(&self, set: &IntervalRateSet) -> Result<()> {
        self.members.iter().try_for_each(|q| set.check_member(q, 0.0))
    }

    /// Member in force at `t` and the time it expires.
    pub fn at(&self, t: f64) -> (&RateMatrix, f64) {
        let (offset, local) = match self.period {
            Some(p) => {
                let k = (t / p).floor();
                (k * p, t - k * p)
            }
            None => (0.0, t),
        };
        let i = self.breakpoints.partition_point(|&b| b <= local);
        let end = match (self.breakpoints.get(i), self.period) {
            (Some(b), _) => offset + b,
            (None, Some(p)) => offset + p,
            (None, None) => f64::INFINITY,
        };
        // Guard against `end <= t` from rounding in the periodic offset.
        let end = if end > t { end } else { t + f64::EPSILON * t.max(1.0) };
        (&self.members[i], end)
    }
}

fn sample_schedule_unchecked(
    target: &TargetSet,
    schedule: &Schedule,
    start: usize,
    horizon: f64,
    rng: &mut PathRng,
) -> Result<TrajectorySample> {
    run_path(target, start, horizon, rng, |t, _, _, _| {
        let (q, end) = schedule.at(t);
        Ok((q.clone(), end))
    })
}

/// One path of the piecewise-homogeneous chain following `schedule`.
pub fn sample_inhomogeneous(
    model: &Model,
    schedule: &Schedule,
    start: usize,
    horizon: f64,
    rng: &mut PathRng,
) -> Result<TrajectorySample> {
    check_start(model.target(), start, horizon)?;
    schedule.check(model.rates())?;
    sample_schedule_unchecked(model.target(), schedule, start, horizon, rng)
}

/// Chooses the member governing the next holding time and jump from the
/// current state and the number of jumps so far.
pub trait JumpPolicy: Sync {
    fn select(&self, state: usize, jumps: usize, rng: &mut PathRng) -> RateMatrix;

    fn name(&self) -> String;
}

/// Always the same member.
#[derive(Debug, Clone)]
pub struct ConstantPolicy(pub RateMatrix);

impl JumpPolicy for ConstantPolicy {
    fn select(&self, _: usize, _: usize, _: &mut PathRng) -> RateMatrix {
        self.0.clone()
    }

    fn name(&self) -> String {
        "constant".into()
    }
}

/// A fresh random extreme member at every jump.
#[derive(Debug, Clone)]
pub struct RandomExtremePolicy(pub IntervalRateSet);

impl JumpPolicy for RandomExtremePolicy {
    fn select(&self, _: usize, _: usize, rng: &mut PathRng) -> RateMatrix {
        random_extreme_member(rng, &self.0)
    }

    fn name(&self) -> String {
        "random-extreme".into()
    }
}

/// A fresh uniformly drawn member at every jump.
#[derive(Debug, Clone)]
pub struct UniformMemberPolicy(pub IntervalRateSet);

impl JumpPolicy for UniformMemberPolicy {
    fn select(&self, _: usize, _: usize, rng: &mut PathRng) -> RateMatrix {
        uniform_member(rng, &self.0)
    }

    fn name(&self) -> String {
        "uniform-member".into()
    }
}

/// The member minimising (or maximising) `Q h` for a given hitting-time
/// vector `h`. With `h` the lower (upper) hitting times this attains the
/// bound.
#[derive(Debug, Clone)]
pub struct AdversarialPolicy {
    q: RateMatrix,
    orientation: Orientation,
}

impl AdversarialPolicy {
    pub fn new(set: &IntervalRateSet, h: &[f64], orientation: Orientation) -> Self {
        Self {
            q: extremal_matrix(set, h, orientation),
            orientation,
        }
    }

    pub fn matrix(&self) -> &RateMatrix {
        &self.q
    }
}

impl JumpPolicy for AdversarialPolicy {
    fn select(&self, _: usize, _: usize, _: &mut PathRng) -> RateMatrix {
        self.q.clone()
    }

    fn name(&self) -> String {
        format!("adversarial-{}", self.orientation.as_str())
    }
}

/// Alternates between two members by jump parity.
#[derive(Debug, Clone)]
pub struct AlternatingPolicy {
    pub even: RateMatrix,
    pub odd: RateMatrix,
}

impl JumpPolicy for AlternatingPolicy {
    fn select(&self, _: usize, jumps: usize, _: &mut PathRng) -> RateMatrix {
        if jumps.is_multiple_of(2) {
            self.even.clone()
        } else {
            self.odd.clone()
        }
    }

    fn name(&self) -> String {
        "alternating".into()
    }
}

/// One path where the member is re-chosen by `policy` after every jump.
/// Every returned member is checked against the set.
pub fn sample_history_dependent(
    model: &Model,
    policy: &dyn JumpPolicy,
    start: usize,
    horizon: f64,
    rng: &mut PathRng,
) -> Result<TrajectorySample> {
    check_start(model.target(), start, horizon)?;
    let set = model.rates();
    // Matrices never expire, so the closure runs exactly once per jump.
    run_path(model.target(), start, horizon, rng, |_, x, jumps, rng| {
        let q = policy.select(x, jumps, rng);
        set.check_member(&q, 0.0)?;
        Ok((q, f64::INFINITY))
    })
}

#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub paths: usize,
    pub seed: u64,
    pub start: usize,
    pub horizon: f64,
}

/// Runs `paths` independent paths in parallel; output order is path order.
pub fn run_paths<F>(cfg: &RunConfig, sample: F) -> Result<Vec<TrajectorySample>>
where
    F: Fn(&mut PathRng) -> Result<TrajectorySample> + Sync,
{
    (0..cfg.paths as u64)
        .into_par_iter()
        .map(|i| sample(&mut path_rng(cfg.seed, i)))
        .collect()
}

pub fn simulate_homogeneous(
    q: &RateMatrix,
    target: &TargetSet,
    cfg: &RunConfig,
) -> Result<Vec<TrajectorySample>> {
    check_start(target, cfg.start, cfg.horizon)?;
    run_paths(cfg, |rng| sample_homogeneous(q, target, cfg.start, cfg.horizon, rng))
}

pub fn simulate_inhomogeneous(
    model: &Model,
    schedule: &Schedule,
    cfg: &RunConfig,
) -> Result<Vec<TrajectorySample>> {
    check_start(model.target(), cfg.start, cfg.horizon)?;
    schedule.check(model.rates())?;
    run_paths(cfg, |rng| {
        sample_schedule_unchecked(model.target(), schedule, cfg.start, cfg.horizon, rng)
    })
}

pub fn simulate_history_dependent(
    model: &Model,
    policy: &dyn JumpPolicy,
    cfg: &RunConfig,
) -> Result<Vec<TrajectorySample>> {
    run_paths(cfg, |rng| {
        sample_history_dependent(model, policy, cfg.start, cfg.horizon, rng)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalEstimate {
    pub mean: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci_halfwidth: f64,
    pub std_dev: f64,
    pub n_paths: usize,
    pub censored_fraction: f64,
}

impl EmpiricalEstimate {
    /// `lower - k ci <= mean <= upper + k ci`.
    pub fn within(&self, lower: f64, upper: f64, k: f64) -> bool {
        let slack = k * self.ci_halfwidth;
        self.mean >= lower - slack && self.mean <= upper + slack
    }
}

const Z_95: f64 = 1.959_963_984_540_054;

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Sample mean of hit times with a 95% normal interval. Censored paths
/// enter with their horizon, which biases the mean down; keep the horizon
/// at 20 times the upper hitting time or more.
pub fn estimate_hitting(samples: &[TrajectorySample]) -> Result<EmpiricalEstimate> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {n}")));
    }
    let start = samples[0].start();
    if samples.iter().any(|s| s.start() != start) {
        return Err(Error::InvalidArgument("samples have different start states".into()));
    }
    let censored = samples.iter().filter(|s| s.censored).count();
    if censored == n {
        return Err(Error::AllCensored(n));
    }
    let nf = n as f64;
    let mean = compensated_sum(samples.iter().map(|s| s.hit_time)) / nf;
    let ss = compensated_sum(samples.iter().map(|s| (s.hit_time - mean).powi(2)));
    let std_dev = (ss / (nf - 1.0)).sqrt();
    Ok(EmpiricalEstimate {
        mean,
        ci_halfwidth: Z_95 * std_dev / nf.sqrt(),
        std_dev,
        n_paths: n,
        censored_fraction: censored as f64 / nf,
    })
}

/// Recommended censoring horizon: `20 h_upper(start)` when known, otherwise
/// `1000 /` the smallest positive lower rate.
pub fn default_horizon(set: &IntervalRateSet, upper_at_start: Option<f64>) -> f64 {
    if let Some(h) = upper_at_start.filter(|h| *h > 0.0) {
        return 20.0 * h;
    }
    let n = set.dim();
    let min_rate = (0..n)
        .flat_map(|x| (0..n).map(move |y| (x, y)))
        .filter(|&(x, y)| x != y)
        .map(|(x, y)| set.lower(x, y))
        .filter(|&r| r > 0.0)
        .fold(f64::INFINITY, f64::min);
    if min_rate.is_finite() {
        1e3 / min_rate
    } else {
        1e3
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::running_example;

    fn two_state(lambda: f64) -> (RateMatrix, TargetSet) {
        (
            RateMatrix::from_rows(&[&[-lambda, lambda], &[0.0, 0.0]]).unwrap(),
            TargetSet::new(2, &[1]).unwrap(),
        )
    }

    #[test]
    fn start_in_target_hits_at_zero() {
        let m = running_example();
        let q = m.rates().all_lower();
        let s = sample_homogeneous(&q, m.target(), 2, 10.0, &mut path_rng(0, 0)).unwrap();
        assert_eq!(s.hit_time, 0.0);
        assert!(!s.censored);
        assert_eq!(s.states, vec![2]);
    }

    #[test]
    fn path_invariants() {
        let m = running_example();
        let q = m.rates().all_upper();
        for i in 0..200 {
            let s = sample_homogeneous(&q, m.target(), 0, 50.0, &mut path_rng(7, i)).unwrap();
            assert!(s.jump_times.windows(2).all(|w| w[0] < w[1]));
            assert!(s.states.windows(2).all(|w| w[0] != w[1]));
            assert_eq!(s.states.len(), s.jump_times.len() + 1);
            let first = s.states.iter().position(|&x| x == 2).unwrap();
            assert_eq!(first, s.states.len() - 1);
            assert_eq!(s.hit_time, s.jump_times[first - 1]);
        }
    }

    #[test]
    fn exponential_mean() {
        let (q, t) = two_state(2.0);
        let cfg = RunConfig {
            paths: 100_000,
            seed: 11,
            start: 0,
            horizon: 100.0,
        };
        let e = estimate_hitting(&simulate_homogeneous(&q, &t, &cfg).unwrap()).unwrap();
        assert!((e.mean - 0.5).abs() <= 3.0 * e.ci_halfwidth / Z_95);
        assert_eq!(e.censored_fraction, 0.0);
    }

    #[test]
    fn short_horizon_censors() {
        let m = running_example();
        let cfg = RunConfig {
            paths: 1000,
            seed: 3,
            start: 0,
            horizon: 0.01,
        };
        let e = estimate_hitting(&simulate_homogeneous(&m.rates().all_lower(), m.target(), &cfg).unwrap())
            .unwrap();
        assert!(e.censored_fraction > 0.0);
    }

    #[test]
    fn all_zero_hit_times() {
        let m = running_example();
        let cfg = RunConfig {
            paths: 10,
            seed: 3,
            start: 2,
            horizon: 1.0,
        };
        let e = estimate_hitting(&simulate_homogeneous(&m.rates().all_lower(), m.target(), &cfg).unwrap())
            .unwrap();
        assert_eq!((e.mean, e.ci_halfwidth), (0.0, 0.0));
    }

    #[test]
    fn all_censored_is_an_error() {
        let q = RateMatrix::from_rows(&[&[0.0, 0.0], &[0.0, 0.0]]).unwrap();
        let t = TargetSet::new(2, &[1]).unwrap();
        let cfg = RunConfig {
            paths: 5,
            seed: 0,
            start: 0,
            horizon: 1.0,
        };
        let s = simulate_homogeneous(&q, &t, &cfg).unwrap();
        assert!(matches!(estimate_hitting(&s), Err(Error::AllCensored(5))));
        assert!(estimate_hitting(&s[..1]).is_err());
    }

    #[test]
    fn constant_policy_and_single_piece_match_homogeneous() {
        let m = running_example();
        let q = m.rates().all_lower();
        let policy = ConstantPolicy(q.clone());
        let schedule = Schedule::constant(q.clone());
        for i in 0..100 {
            let a = sample_homogeneous(&q, m.target(), 0, 30.0, &mut path_rng(5, i)).unwrap();
            let b = sample_history_dependent(&m, &policy, 0, 30.0, &mut path_rng(5, i)).unwrap();
            let c = sample_inhomogeneous(&m, &schedule, 0, 30.0, &mut path_rng(5, i)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a, c);
        }
    }

    #[test]
    fn out_of_bounds_selections_rejected() {
        let m = running_example();
        let bad = RateMatrix::from_rows(&[&[-10.0, 9.0, 1.0], &[0.0, -1.0, 1.0], &[0.0, 0.0, 0.0]])
            .unwrap();
        let schedule = Schedule::cyclic(0.1, vec![m.rates().all_lower(), bad.clone()]).unwrap();
        assert!(matches!(
            sample_inhomogeneous(&m, &schedule, 0, 10.0, &mut path_rng(0, 0)),
            Err(Error::BoundViolation { .. })
        ));
        assert!(sample_history_dependent(&m, &ConstantPolicy(bad), 0, 10.0, &mut path_rng(0, 0))
            .is_err());
    }

    #[test]
    fn schedule_lookup() {
        let m = running_example();
        let (a, b) = (m.rates().all_lower(), m.rates().all_upper());
        let s = Schedule::cyclic(0.5, vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(s.at(0.0), (&a, 0.5));
        assert_eq!(s.at(0.7), (&b, 1.0));
        assert_eq!(s.at(1.2), (&a, 1.5));
        let s = Schedule::new(vec![1.0], vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(s.at(3.0), (&b, f64::INFINITY));
        assert!(Schedule::new(vec![1.0, 0.5], vec![a.clone(), b.clone(), a]).is_err());
    }

    #[test]
    fn reproducible_runs() {
        let m = running_example();
        let cfg = RunConfig {
            paths: 2000,
            seed: 42,
            start: 0,
            horizon: 30.0,
        };
        let p = RandomExtremePolicy(m.rates().clone());
        let a = simulate_history_dependent(&m, &p, &cfg).unwrap();
        let b = simulate_history_dependent(&m, &p, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16];
        assert_eq!(compensated_sum(v.into_iter()), 1.0);
    }

    #[test]
    fn horizon_defaults() {
        let m = running_example();
        assert_eq!(default_horizon(m.rates(), Some(1.5)), 30.0);
        assert_eq!(default_horizon(m.rates(), None), 2000.0);
    }
}
