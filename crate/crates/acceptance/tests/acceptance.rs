//! Acceptance suite. Each test prints one `PASS`/`FAIL` line for its
//! criterion and then asserts it.

use std::io::Write;
use std::time::{Duration, Instant};

use imc_hitting::diagnostics::{quasicontractivity_check, stability_constants, DiagnosticsOptions, StarNorm};
use imc_hitting::hitting::{
    convergence_study, precise_continuous, residual, solve_policy_iteration, solve_value_iteration,
    DiscretizedOptions, PolicyIterationOptions, StudySubject, ValueIterationOptions,
};
use imc_hitting::mc::{
    estimate_hitting, simulate_history_dependent, simulate_homogeneous, simulate_inhomogeneous,
    AdversarialPolicy, AlternatingPolicy, EmpiricalEstimate, JumpPolicy, RandomExtremePolicy,
    RunConfig, Schedule, UniformMemberPolicy,
};
use imc_hitting::model::{sup_dist, sup_norm, IntervalRateSet, Model, StateSpace, TargetSet};
use imc_hitting::ops::{
    apply_lower, apply_upper, argmin_matrix, matrix_exp, EulerSemigroup, Operator, Orientation,
};
use imc_hitting::random::{random_extreme_member, random_validated_model, random_vector, uniform_member, ModelSpec};
use imc_hitting::structure::check_lower_reachability;
use imc_hitting::{RateMatrix, ValidatedModel};
use nalgebra::DMatrix;
use num_rational::Ratio;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn report(id: u32, ok: bool, what: &str, detail: String) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    // Written past the test harness capture so every verdict is shown.
    let _ = writeln!(std::io::stderr(), "{verdict} criterion {id}: {what} [{detail}]");
}

fn running_example() -> ValidatedModel {
    let lower = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    let upper = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 1.0, 0.0, 3.0, 0.0, 0.0, 0.0]);
    Model::new(
        StateSpace::numbered(3).unwrap(),
        TargetSet::new(3, &[2]).unwrap(),
        IntervalRateSet::new(lower, upper).unwrap(),
    )
    .unwrap()
    .validated()
    .unwrap()
}

fn random_models(seed: u64, count: usize) -> Vec<ValidatedModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| random_validated_model(&mut rng, &ModelSpec::default()))
        .collect()
}

fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    sup_dist(a, b) / sup_norm(b).max(1e-300)
}

fn singleton(model: &ValidatedModel, q: &RateMatrix) -> ValidatedModel {
    Model::new(
        model.space().clone(),
        model.target().clone(),
        IntervalRateSet::singleton(q),
    )
    .unwrap()
    .validated()
    .unwrap()
}

fn vi_opts(tol: f64) -> ValueIterationOptions {
    ValueIterationOptions {
        tol,
        ..Default::default()
    }
}

#[test]
fn criterion_01_singleton_oracle_recovery() {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_vi = 0.0f64;
    let mut worst_pi = 0.0f64;
    for model in random_models(1, 50) {
        let q = uniform_member(&mut rng, model.rates());
        let single = singleton(&model, &q);
        let oracle = precise_continuous(&q, model.target()).unwrap();
        for o in [Orientation::Lower, Orientation::Upper] {
            let vi = solve_value_iteration(&single, o, &vi_opts(1e-9)).unwrap();
            let pi = solve_policy_iteration(&single, o, &PolicyIterationOptions::default()).unwrap();
            worst_vi = worst_vi.max(relative_gap(&vi.values, &oracle));
            worst_pi = worst_pi.max(relative_gap(&pi.values, &oracle));
        }
    }
    let elapsed = clock.elapsed();
    let ok = worst_vi <= 1e-6 && worst_pi <= 1e-6 && elapsed < Duration::from_secs(10);
    report(
        1,
        ok,
        "singleton sets recover the exact hitting times",
        format!("vi {worst_vi:.2e}, pi {worst_pi:.2e}, {elapsed:.2?}"),
    );
    assert!(ok);
}

type Q = Ratio<i64>;

/// Exact hitting times of the 2x2 subgenerator with off-diagonal rates
/// `(q01, q02, q10, q12)`, by Cramer's rule on `-G h = 1`.
fn exact_two_state(q01: Q, q02: Q, q10: Q, q12: Q) -> (Q, Q) {
    let (a, b) = (q01 + q02, -q01);
    let (c, d) = (-q10, q10 + q12);
    let det = a * d - b * c;
    let one = Q::from_integer(1);
    ((one * d - b * one) / det, (a * one - c * one) / det)
}

/// Brute force over the 16 extreme selections of the running example.
/// Returns the pointwise minimum (maximum) of all 16 solutions together with
/// the solutions whose selection is self-consistent.
fn extreme_policy_oracle(lower: bool) -> ((Q, Q), Vec<(Q, Q)>) {
    let r = |n: i64, d: i64| Q::new(n, d);
    let bounds = [(r(1, 1), r(2, 1)), (r(1, 2), r(1, 1)), (r(0, 1), r(1, 1)), (r(1, 1), r(3, 1))];
    let mut best: Option<(Q, Q)> = None;
    let mut consistent = Vec::new();
    for mask in 0..16u32 {
        let pick = |i: usize| {
            if mask >> i & 1 == 1 {
                bounds[i].1
            } else {
                bounds[i].0
            }
        };
        let (h0, h1) = exact_two_state(pick(0), pick(1), pick(2), pick(3));
        best = Some(match best {
            None => (h0, h1),
            Some((b0, b1)) if lower => (b0.min(h0), b1.min(h1)),
            Some((b0, b1)) => (b0.max(h0), b1.max(h1)),
        });
        // Entry i moves f from its row state to `dest`; the minimiser takes
        // the upper bound iff the difference is negative.
        let diffs = [h1 - h0, -h0, h0 - h1, -h1];
        let zero = Q::from_integer(0);
        let ok = (0..4).all(|i| {
            let d = if lower { diffs[i] } else { -diffs[i] };
            let upper = mask >> i & 1 == 1;
            d == zero || (d < zero) == upper
        });
        if ok {
            consistent.push((h0, h1));
        }
    }
    (best.unwrap(), consistent)
}

#[test]
fn criterion_02_running_example_bounds() {
    let clock = Instant::now();
    let model = running_example();
    let (min, lo_cons) = extreme_policy_oracle(true);
    let (max, up_cons) = extreme_policy_oracle(false);
    let oracle_ok = min == (Q::new(5, 9), Q::new(1, 3))
        && max == (Q::new(3, 2), Q::new(5, 4))
        && !lo_cons.is_empty()
        && lo_cons.iter().all(|&h| h == min)
        && !up_cons.is_empty()
        && up_cons.iter().all(|&h| h == max);
    let f = |q: Q| *q.numer() as f64 / *q.denom() as f64;
    let lo_ref = [f(min.0), f(min.1), 0.0];
    let up_ref = [f(max.0), f(max.1), 0.0];
    let opts = vi_opts(1e-9);
    let lo = solve_value_iteration(&model, Orientation::Lower, &opts).unwrap();
    let up = solve_value_iteration(&model, Orientation::Upper, &opts).unwrap();
    let pi_lo = solve_policy_iteration(&model, Orientation::Lower, &Default::default()).unwrap();
    let pi_up = solve_policy_iteration(&model, Orientation::Upper, &Default::default()).unwrap();
    let gaps = [
        sup_dist(&lo.values, &lo_ref),
        sup_dist(&up.values, &up_ref),
        sup_dist(&pi_lo.values, &lo_ref),
        sup_dist(&pi_up.values, &up_ref),
    ];
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    let elapsed = clock.elapsed();
    let ok = oracle_ok && worst <= 1e-6 && elapsed < Duration::from_secs(1);
    report(
        2,
        ok,
        "running example lower (5/9, 1/3, 0) and upper (3/2, 5/4, 0)",
        format!("oracle {oracle_ok}, max gap {worst:.2e}, {elapsed:.2?}"),
    );
    assert!(ok);
}

#[test]
fn criterion_03_nonlinear_system_residual() {
    let mut worst = 0.0f64;
    for model in random_models(3, 50) {
        for o in [Orientation::Lower, Orientation::Upper] {
            let s = solve_value_iteration(&model, o, &vi_opts(1e-9)).unwrap();
            worst = worst.max(residual(&model, &s.values, o));
        }
    }
    let ok = worst <= 1e-8;
    report(3, ok, "residual of the non-linear system after solving at 1e-9", format!("max {worst:.2e}"));
    assert!(ok);
}

#[test]
fn criterion_04_solver_equivalence() {
    let mut worst = 0.0f64;
    for model in random_models(3, 50) {
        for o in [Orientation::Lower, Orientation::Upper] {
            let vi = solve_value_iteration(&model, o, &vi_opts(1e-9)).unwrap();
            let pi = solve_policy_iteration(&model, o, &Default::default()).unwrap();
            worst = worst.max(relative_gap(&vi.values, &pi.values));
        }
    }
    let ok = worst <= 1e-6;
    report(4, ok, "value and policy iteration agree", format!("max relative gap {worst:.2e}"));
    assert!(ok);
}

#[test]
fn criterion_05_monte_carlo_sandwich() {
    let clock = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let model = running_example();
    let set = model.rates();
    let h_lo = solve_policy_iteration(&model, Orientation::Lower, &Default::default()).unwrap().values;
    let h_up = solve_policy_iteration(&model, Orientation::Upper, &Default::default()).unwrap().values;
    let (lo, up) = (h_lo[0], h_up[0]);
    let cfg = |seed| RunConfig {
        paths: 100_000,
        seed,
        start: 0,
        horizon: 20.0 * up,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut estimates: Vec<(String, EmpiricalEstimate)> = Vec::new();
    pool.install(|| {
        for i in 0..20 {
            let q = uniform_member(&mut rng, set);
            let s = simulate_homogeneous(&q, model.target(), &cfg(1000 + i)).unwrap();
            estimates.push((format!("member {i}"), estimate_hitting(&s).unwrap()));
        }
        let mut schedules = vec![Schedule::cyclic(0.1, vec![set.all_lower(), set.all_upper()]).unwrap()];
        while schedules.len() < 10 {
            let k = rng.random_range(2..=4);
            let members = (0..k).map(|_| random_extreme_member(&mut rng, set)).collect();
            schedules.push(Schedule::cyclic(rng.random_range(0.05..0.5), members).unwrap());
        }
        for (i, sch) in schedules.iter().enumerate() {
            let s = simulate_inhomogeneous(&model, sch, &cfg(2000 + i as u64)).unwrap();
            estimates.push((format!("schedule {i}"), estimate_hitting(&s).unwrap()));
        }
        let policies: Vec<Box<dyn JumpPolicy>> = vec![
            Box::new(RandomExtremePolicy(set.clone())),
            Box::new(UniformMemberPolicy(set.clone())),
            Box::new(AlternatingPolicy {
                even: argmin_matrix(set, &h_lo),
                odd: imc_hitting::ops::argmax_matrix(set, &h_up),
            }),
            Box::new(AdversarialPolicy::new(set, &h_up, Orientation::Upper)),
            Box::new(AdversarialPolicy::new(set, &h_lo, Orientation::Lower)),
        ];
        for (i, p) in policies.iter().enumerate() {
            let s = simulate_history_dependent(&model, p.as_ref(), &cfg(3000 + i as u64)).unwrap();
            estimates.push((p.name(), estimate_hitting(&s).unwrap()));
        }
    });
    let outside: Vec<&str> = estimates
        .iter()
        .filter(|(_, e)| !e.within(lo, up, 3.0))
        .map(|(n, _)| n.as_str())
        .collect();
    let adv = estimates.last().unwrap().1;
    let adv_ok = (adv.mean - lo).abs() <= 3.0 * adv.ci_halfwidth;
    let elapsed = clock.elapsed();
    let ok = outside.is_empty() && adv_ok && elapsed < Duration::from_secs(60);
    report(
        5,
        ok,
        "simulated means lie between the bounds",
        format!(
            "{} estimates in [{lo:.4}, {up:.4}], outside {outside:?}, adversarial {:.4} +- {:.4}, {elapsed:.2?}",
            estimates.len(),
            adv.mean,
            adv.ci_halfwidth
        ),
    );
    assert!(ok);
}

const GRID: [f64; 5] = [0.2, 0.1, 0.05, 0.025, 0.0125];

#[test]
fn criterion_06_discretization_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut slopes = Vec::new();
    let mut spreads = Vec::new();
    for model in random_models(6, 10) {
        let q = uniform_member(&mut rng, model.rates());
        let study = convergence_study(&model, &StudySubject::Member(q), &GRID, &DiscretizedOptions::default())
            .unwrap();
        slopes.push(study.fitted_order.unwrap());
        let min = study.ratios.iter().copied().fold(f64::INFINITY, f64::min);
        spreads.push(study.fitted_l / min);
    }
    // A single constant bounds every ratio; the ratios also stay within a
    // factor of two of each other as delta shrinks.
    let ok = slopes.iter().all(|s| (0.8..=1.2).contains(s)) && spreads.iter().all(|s| *s <= 2.0);
    report(
        6,
        ok,
        "member discretisation error is first order",
        format!(
            "slopes {:.3}..{:.3}, max ratio spread {:.3}",
            slopes.iter().copied().fold(f64::INFINITY, f64::min),
            slopes.iter().copied().fold(0.0, f64::max),
            spreads.iter().copied().fold(0.0, f64::max)
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_07_imprecise_discretization_limit() {
    let model = running_example();
    let study = convergence_study(
        &model,
        &StudySubject::Imprecise(Orientation::Lower),
        &GRID,
        &DiscretizedOptions::default(),
    )
    .unwrap();
    let finest = *study.errors.last().unwrap();
    let ok = study.errors_decreasing() && finest < 1e-3;
    report(
        7,
        ok,
        "lower discretised hitting times converge below 1e-3",
        format!("errors {:?}, decreasing {}", study.errors, study.errors_decreasing()),
    );
    assert!(ok);
}

fn interval_set(max_n: usize) -> impl Strategy<Value = IntervalRateSet> {
    (2..=max_n).prop_flat_map(|n| {
        let entry = (prop_oneof![Just(0.0), 0.0..3.0f64], prop_oneof![Just(0.0), 0.0..3.0f64]);
        prop::collection::vec(entry, n * n).prop_map(move |v| {
            let lower = DMatrix::from_fn(n, n, |x, y| v[x * n + y].0);
            let upper = DMatrix::from_fn(n, n, |x, y| v[x * n + y].0 + v[x * n + y].1);
            IntervalRateSet::new(lower, upper).unwrap()
        })
    })
}

fn set_and_vectors(count: usize) -> impl Strategy<Value = (IntervalRateSet, Vec<Vec<f64>>)> {
    interval_set(5).prop_flat_map(move |s| {
        let n = s.dim();
        (Just(s), prop::collection::vec(prop::collection::vec(-10.0..10.0f64, n), count))
    })
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-12 * scale.max(1.0)
}

#[test]
fn criterion_08_operator_axioms() {
    let mut cases = 0usize;
    let mut failures = Vec::new();
    let mut run = |name: &str, n: u32, strategy: BoxedStrategy<(IntervalRateSet, Vec<Vec<f64>>)>, check: &dyn Fn(&IntervalRateSet, &[Vec<f64>]) -> Result<(), TestCaseError>| {
        let mut runner = TestRunner::new(Config {
            cases: n,
            failure_persistence: None,
            ..Config::default()
        });
        if let Err(e) = runner.run(&strategy, |(s, fs)| check(&s, &fs)) {
            failures.push(format!("{name}: {e}"));
        }
        cases += n as usize;
    };

    run("axioms", 3000, set_and_vectors(2).boxed(), &|s, fs| {
        let (f, g) = (&fs[0], &fs[1]);
        let n = s.dim();
        let fg: Vec<f64> = f.iter().zip(g).map(|(a, b)| a + b).collect();
        let (lf, lg, lfg) = (apply_lower(s, f), apply_lower(s, g), apply_lower(s, &fg));
        let scale = 10.0 * s.norm_bound();
        for x in 0..n {
            prop_assert!(lf[x] + lg[x] <= lfg[x] + 1e-12 * scale.max(1.0));
        }
        let lam = g[0].abs();
        let lf_scaled = apply_lower(s, &f.iter().map(|v| lam * v).collect::<Vec<_>>());
        for x in 0..n {
            prop_assert!(close(lf_scaled[x], lam * lf[x], scale * lam));
        }
        prop_assert!(apply_lower(s, &vec![f[0]; n]).iter().all(|v| *v == 0.0));
        for y in 0..n {
            let mut unit = vec![0.0; n];
            unit[y] = 1.0;
            let col = apply_lower(s, &unit);
            for x in (0..n).filter(|&x| x != y) {
                prop_assert!(col[x] >= 0.0);
            }
        }
        Ok(())
    });

    run("conjugacy", 2000, set_and_vectors(1).boxed(), &|s, fs| {
        let f = &fs[0];
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let up = apply_upper(s, f);
        let lo = apply_lower(s, &neg);
        for x in 0..s.dim() {
            prop_assert_eq!(up[x], -lo[x]);
        }
        Ok(())
    });

    run("argmin realisation", 2000, set_and_vectors(1).boxed(), &|s, fs| {
        let f = &fs[0];
        let q = argmin_matrix(s, f);
        prop_assert!(s.contains(&q));
        prop_assert_eq!(q.apply(f), apply_lower(s, f));
        let mut rng = ChaCha8Rng::seed_from_u64(f[0].to_bits());
        let member = uniform_member(&mut rng, s);
        let (qf, lf) = (member.apply(f), apply_lower(s, f));
        for x in 0..s.dim() {
            prop_assert!(lf[x] <= qf[x] + 1e-12 * 10.0 * s.norm_bound().max(1.0));
        }
        Ok(())
    });

    run("semigroup law", 2000, set_and_vectors(1).boxed(), &|s, fs| {
        let f = &fs[0];
        let norm = s.norm_bound().max(1.0);
        let h = 1.0 / (4.0 * norm).ceil();
        let (a, b) = (1 + (f[0].abs() * 3.0) as usize, 1 + (f[1 % f.len()].abs() * 3.0) as usize);
        let (ts, tt) = (a as f64 * h, b as f64 * h);
        let whole = EulerSemigroup::with_steps(s, Orientation::Lower, ts + tt, a + b).unwrap();
        let first = EulerSemigroup::with_steps(s, Orientation::Lower, ts, a).unwrap();
        let second = EulerSemigroup::with_steps(s, Orientation::Lower, tt, b).unwrap();
        let composed = first.apply(&second.apply(f));
        prop_assert!(sup_dist(&whole.apply(f), &composed) <= 1e-8);
        // Different step sizes: all three approximate the exact semigroup,
        // so they agree up to the sum of their error bounds.
        let coarse = EulerSemigroup::with_steps(s, Orientation::Lower, ts + tt, 2 * (a + b) + 1).unwrap();
        let budget = (coarse.error_bound() + first.error_bound() + second.error_bound()) * sup_norm(f);
        prop_assert!(sup_dist(&coarse.apply(f), &composed) <= budget + 1e-12);
        Ok(())
    });

    run("domination", 1000, set_and_vectors(1).boxed(), &|s, fs| {
        let f = &fs[0];
        let mut rng = ChaCha8Rng::seed_from_u64(f[0].to_bits() ^ 0x5eed);
        let q = uniform_member(&mut rng, s);
        let norm = s.norm_bound().max(1.0);
        let t = 0.5;
        let steps = (64.0 * norm).ceil() as usize;
        let lo = EulerSemigroup::with_steps(s, Orientation::Lower, t, steps).unwrap();
        let up = EulerSemigroup::with_steps(s, Orientation::Upper, t, steps).unwrap();
        let singleton = IntervalRateSet::singleton(&q);
        let member = EulerSemigroup::with_steps(&singleton, Orientation::Lower, t, steps).unwrap();
        let (l, m, u) = (lo.apply(f), member.apply(f), up.apply(f));
        let tol = 1e-12 * sup_norm(f).max(1.0) * steps as f64;
        for x in 0..s.dim() {
            prop_assert!(l[x] <= m[x] + tol && m[x] <= u[x] + tol);
        }
        let exact = matrix_exp(&q, t).unwrap().apply_to(f);
        let eb = lo.error_bound() * sup_norm(f);
        for x in 0..s.dim() {
            prop_assert!(l[x] <= exact[x] + eb + 1e-10 && exact[x] <= u[x] + eb + 1e-10);
        }
        Ok(())
    });

    let ok = failures.is_empty() && cases >= 10_000;
    report(8, ok, "rate-operator axioms, semigroup law and domination", format!("{cases} cases, failures {failures:?}"));
    assert!(ok);
}

#[test]
fn criterion_09_contractivity_and_constants() {
    let opts = DiagnosticsOptions::default();
    let results: Vec<Result<(), String>> = random_models(9, 20)
        .into_par_iter()
        .enumerate()
        .map(|(i, model)| {
            let fail = |m: &str| Err(format!("model {i}: {m}"));
            let r = stability_constants(&model, &opts).map_err(|e| e.to_string())?;
            for t in [0.5, 1.0, 2.0] {
                let k = r.grid.iter().position(|&g| g == t).unwrap();
                if !(r.norms[k] < 1.0) {
                    return fail(&format!("norm {} at t = {t}", r.norms[k]));
                }
            }
            if !r.envelope_holds {
                return fail("envelope");
            }
            let star = StarNorm::new(&model, &r, &opts).map_err(|e| e.to_string())?;
            let mut rng = ChaCha8Rng::seed_from_u64(900 + i as u64);
            let k = model.target().complement().len();
            for _ in 0..100 {
                let f = random_vector(&mut rng, k, 5.0);
                let g = random_vector(&mut rng, k, 5.0);
                let fg: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
                let (sf, sg, sfg) = (star.eval(&f), star.eval(&g), star.eval(&fg));
                if sf < sup_norm(&f) || sf > star.upper_bound(&f) * (1.0 + 1e-12) {
                    return fail("star norm outside [||f||, M ||f||]");
                }
                if sfg > (sf + sg) * (1.0 + 1e-12) {
                    return fail("triangle inequality");
                }
            }
            let members: Vec<RateMatrix> = (0..5).map(|_| uniform_member(&mut rng, model.rates())).collect();
            let qc = quasicontractivity_check(&model, &r, &star, &members, &[0.5, 1.0, 2.0], 10, i as u64, 1e-6)
                .map_err(|e| e.to_string())?;
            if !qc.passed() {
                return fail(&format!("quasicontractivity {:?}", qc.failures.first()));
            }
            Ok(())
        })
        .collect();
    let failures: Vec<String> = results.into_iter().filter_map(Result::err).collect();
    let ok = failures.is_empty();
    report(9, ok, "contractivity, envelope, star norm and quasicontractivity", format!("20 models, failures {failures:?}"));
    assert!(ok);
}

/// States reachable from `x` along positive lower bounds in at most
/// `n` steps, by explicit enumeration of every path.
fn reaches_by_paths(lower: &[[f64; 4]; 4], target: &[bool; 4], x: usize, depth: usize) -> bool {
    if target[x] {
        return true;
    }
    if depth == 0 {
        return false;
    }
    (0..4).any(|y| y != x && lower[x][y] > 0.0 && reaches_by_paths(lower, target, y, depth - 1))
}

fn reachability_agrees(lower: [[f64; 4]; 4], upper: [[f64; 4]; 4], target: [bool; 4], space: &StateSpace) -> bool {
    let members: Vec<usize> = (0..4).filter(|&i| target[i]).collect();
    let model = Model::new(
        space.clone(),
        TargetSet::new(4, &members).unwrap(),
        IntervalRateSet::new(
            DMatrix::from_fn(4, 4, |x, y| lower[x][y]),
            DMatrix::from_fn(4, 4, |x, y| upper[x][y]),
        )
        .unwrap(),
    )
    .unwrap();
    let cert = check_lower_reachability(&model);
    (0..4).all(|x| cert.reachable[x] == reaches_by_paths(&lower, &target, x, 4))
        && cert.witnesses.iter().flatten().all(|w| {
            target[*w.last().unwrap()] && w.windows(2).all(|p| lower[p[0]][p[1]] > 0.0)
        })
}

#[test]
fn criterion_10_reachability_enumeration() {
    const PAIRS: [(f64, f64); 6] = [(0.0, 0.0), (0.0, 0.5), (0.0, 1.0), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)];
    let space = StateSpace::numbered(4).unwrap();
    let slots: Vec<(usize, usize)> = (0..3)
        .flat_map(|x| (0..4).filter(move |&y| y != x).map(move |y| (x, y)))
        .collect();
    let total = 6usize.pow(9);
    let target = [false, false, false, true];
    let mismatches: usize = (0..total)
        .into_par_iter()
        .filter(|&code| {
            let (mut lower, mut upper) = ([[0.0; 4]; 4], [[0.0; 4]; 4]);
            let mut c = code;
            for &(x, y) in &slots {
                let (l, u) = PAIRS[c % 6];
                c /= 6;
                lower[x][y] = l;
                upper[x][y] = u;
            }
            !reachability_agrees(lower, upper, target, &space)
        })
        .count();

    let mut subset_mismatches = 0usize;
    for mask in 1u32..15 {
        let target: [bool; 4] = std::array::from_fn(|i| mask >> i & 1 == 1);
        for pattern in 0u32..(1 << 12) {
            let mut lower = [[0.0; 4]; 4];
            let mut bit = 0;
            for x in 0..4 {
                for y in (0..4).filter(|&y| y != x) {
                    lower[x][y] = if pattern >> bit & 1 == 1 { 0.5 } else { 0.0 };
                    bit += 1;
                }
            }
            if !reachability_agrees(lower, lower, target, &space) {
                subset_mismatches += 1;
            }
        }
    }

    let counterexample = Model::new(
        StateSpace::numbered(3).unwrap(),
        TargetSet::new(3, &[2]).unwrap(),
        IntervalRateSet::new(
            DMatrix::zeros(3, 3),
            DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 1.0, 0.0, 3.0, 0.0, 0.0, 0.0]),
        )
        .unwrap(),
    )
    .unwrap();
    let rejected = check_lower_reachability(&counterexample).unreachable_states() == vec![0, 1]
        && counterexample.clone().validated().is_err();

    let ok = mismatches == 0 && subset_mismatches == 0 && rejected;
    report(
        10,
        ok,
        "lower reachability matches path enumeration",
        format!(
            "{total} models with target {{s3}}: {mismatches} mismatches; 14 targets x 4096 patterns: {subset_mismatches} mismatches; counterexample rejected {rejected}"
        ),
    );
    assert!(ok);
}
