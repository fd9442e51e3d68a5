//! Random models and members for tests, acceptance runs and randomised
//! simulation policies.

use nalgebra::DMatrix;
use rand::Rng;

use crate::model::{IntervalRateSet, Model, RateMatrix, StateSpace, TargetSet, ValidatedModel};

/// Shape of the random bound generator.
#[derive(Debug, Clone, Copy)]
pub struct ModelSpec {
    pub min_states: usize,
    pub max_states: usize,
    /// Probability that an off-diagonal lower bound is zero.
    pub zero_lower: f64,
    /// Probability that an interval collapses to a point.
    pub degenerate: f64,
    /// Lower bounds are drawn from `[0.1, max_rate]`, widths from `[0, max_rate]`.
    pub max_rate: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            min_states: 3,
            max_states: 6,
            zero_lower: 0.35,
            degenerate: 0.2,
            max_rate: 2.0,
        }
    }
}

fn random_target<R: Rng + ?Sized>(rng: &mut R, n: usize) -> TargetSet {
    let k = rng.random_range(1..=(n / 2).max(1));
    let mut states: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        states.swap(i, j);
    }
    TargetSet::new(n, &states[..k]).expect("1 <= k < n")
}

/// Random model with absorbing target; may fail lower reachability.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, spec: &ModelSpec) -> Model {
    let n = rng.random_range(spec.min_states..=spec.max_states);
    let target = random_target(rng, n);
    let mut lower = DMatrix::zeros(n, n);
    let mut upper = DMatrix::zeros(n, n);
    for x in target.complement() {
        for y in (0..n).filter(|&y| y != x) {
            let l = if rng.random_bool(spec.zero_lower) {
                0.0
            } else {
                rng.random_range(0.1..spec.max_rate)
            };
            let w = if rng.random_bool(spec.degenerate) {
                0.0
            } else {
                rng.random_range(0.0..spec.max_rate)
            };
            lower[(x, y)] = l;
            upper[(x, y)] = l + w;
        }
    }
    let rates = IntervalRateSet::new(lower, upper).expect("finite non-negative bounds");
    Model::new(StateSpace::numbered(n).expect("n >= 2"), target, rates).expect("matching dimensions")
}

/// Random model that passes validation, by rejection.
pub fn random_validated_model<R: Rng + ?Sized>(rng: &mut R, spec: &ModelSpec) -> ValidatedModel {
    loop {
        if let Ok(m) = random_model(rng, spec).validated() {
            return m;
        }
    }
}

/// Member with each off-diagonal rate uniform on its interval.
pub fn uniform_member<R: Rng + ?Sized>(rng: &mut R, set: &IntervalRateSet) -> RateMatrix {
    let n = set.dim();
    let off = DMatrix::from_fn(n, n, |x, y| {
        let (l, u) = (set.lower(x, y), set.upper(x, y));
        if x == y || l == u {
            l
        } else {
            rng.random_range(l..=u)
        }
    });
    set.member(&off).expect("sampled inside the bounds")
}

/// Member with each off-diagonal rate at its lower or upper bound, chosen by
/// a fair coin.
pub fn random_extreme_member<R: Rng + ?Sized>(rng: &mut R, set: &IntervalRateSet) -> RateMatrix {
    let n = set.dim();
    let coins: Vec<bool> = (0..n * n).map(|_| rng.random_bool(0.5)).collect();
    set.extreme(|x, y| coins[x * n + y])
}

/// Vector with entries uniform on `[-scale, scale]`.
pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
}
