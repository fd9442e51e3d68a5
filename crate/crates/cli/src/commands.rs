//! One function per subcommand. Each returns the text summary, the JSON
//! results and, for commands that report before failing, the failure.

use std::fmt::Write as _;

use imc_hitting::diagnostics::{
    quasicontractivity_check, spectral_abscissa, stability_constants, DiagnosticsOptions, StarNorm,
};
use imc_hitting::hitting::{
    convergence_study, solve_bounds, DiscretizedOptions, HittingSolution, HittingTimeResult,
    Method, PolicyIterationOptions, StudySubject, ValueIterationOptions,
};
use imc_hitting::mc::{
    estimate_hitting, path_rng, simulate_history_dependent, simulate_homogeneous,
    simulate_inhomogeneous, AdversarialPolicy, AlternatingPolicy, JumpPolicy, RandomExtremePolicy,
    RunConfig, Schedule,
};
use imc_hitting::model::sup_dist;
use imc_hitting::random::uniform_member;
use imc_hitting::structure::{check_absorbing, check_lower_reachability};
use imc_hitting::{Model, Orientation, RateMatrix, ValidatedModel};
use serde_json::{json, Value};

use crate::args::{
    CheckArgs, ConvergeArgs, DiagnoseArgs, MethodArg, OrientationArg, RegimeArg, SimulateArgs,
    SolveArgs, StrategyArg, SubjectArg,
};
use crate::error::CliError;
use crate::report::{fmt12, sig12_vec};

/// Stream index reserved for drawing members, disjoint from path streams.
const MEMBER_STREAM: u64 = u64::MAX;

pub struct Output {
    pub text: String,
    /// Always written to stderr.
    pub notes: Vec<String>,
    pub results: Value,
    pub seed: Option<u64>,
    /// Reported after the summary and the JSON report are written.
    pub failure: Option<CliError>,
}

impl Output {
    fn new(text: String, results: Value) -> Self {
        Self {
            text,
            notes: Vec::new(),
            results,
            seed: None,
            failure: None,
        }
    }
}

fn label(model: &Model, x: usize) -> &str {
    model.space().label(x)
}

fn labels(model: &Model, xs: &[usize]) -> Vec<String> {
    xs.iter().map(|&x| label(model, x).to_string()).collect()
}

fn describe_violations(model: &Model) -> Option<String> {
    let report = model.validate();
    if report.is_valid() {
        return None;
    }
    let lines: Vec<String> = report
        .violations
        .iter()
        .map(|v| format!("  {}", v.describe(model.space())))
        .collect();
    Some(lines.join("\n"))
}

pub fn require_valid(model: Model) -> Result<ValidatedModel, CliError> {
    if let Some(text) = describe_violations(&model) {
        return Err(CliError::Invalid(text));
    }
    Ok(model.validated()?)
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))?;
    Ok(pool.install(f))
}

fn matrix_rows(q: &RateMatrix) -> Vec<Vec<f64>> {
    (0..q.dim())
        .map(|x| sig12_vec(&(0..q.dim()).map(|y| q.get(x, y)).collect::<Vec<_>>()))
        .collect()
}

fn write_matrix(text: &mut String, model: &Model, q: &RateMatrix) {
    for x in 0..q.dim() {
        let row: Vec<String> = (0..q.dim()).map(|y| fmt12(q.get(x, y))).collect();
        writeln!(text, "  {}: {}", label(model, x), row.join(" ")).unwrap();
    }
}

pub fn check(model: Model, _: &CheckArgs) -> Result<Output, CliError> {
    let mut text = String::new();
    let absorbing = check_absorbing(&model);
    let reach = check_lower_reachability(&model);
    let target = model.target().members();
    writeln!(text, "states: {}", model.space().labels().join(", ")).unwrap();
    writeln!(text, "target: {}", labels(&model, &target).join(", ")).unwrap();
    if absorbing.absorbing {
        writeln!(text, "absorbing: yes").unwrap();
    } else {
        writeln!(text, "absorbing: no").unwrap();
        for &(x, y) in &absorbing.violations {
            writeln!(
                text,
                "  upper({}, {}) = {} > 0",
                label(&model, x),
                label(&model, y),
                fmt12(model.rates().upper(x, y))
            )
            .unwrap();
        }
    }
    let unreachable = reach.unreachable_states();
    if unreachable.is_empty() {
        writeln!(text, "lower reachability: every state reaches the target").unwrap();
    } else {
        writeln!(text, "lower reachability: fails").unwrap();
        writeln!(text, "unreachable: {}", labels(&model, &unreachable).join(", ")).unwrap();
    }
    let mut witnesses = serde_json::Map::new();
    for (x, w) in reach.witnesses.iter().enumerate() {
        if let Some(w) = w.as_ref().filter(|_| !model.target().contains(x)) {
            let path = labels(&model, w);
            writeln!(text, "witness {}: {}", label(&model, x), path.join(" -> ")).unwrap();
            witnesses.insert(label(&model, x).to_string(), json!(path));
        }
    }
    let violations = describe_violations(&model);
    writeln!(text, "verdict: {}", if violations.is_none() { "valid" } else { "invalid" }).unwrap();
    let results = json!({
        "valid": violations.is_none(),
        "absorbing": absorbing.absorbing,
        "absorbing_violations": absorbing
            .violations
            .iter()
            .map(|&(x, y)| [label(&model, x), label(&model, y)])
            .collect::<Vec<_>>(),
        "unreachable": labels(&model, &unreachable),
        "witnesses": witnesses,
        "violations": model
            .validate()
            .violations
            .iter()
            .map(|v| v.describe(model.space()))
            .collect::<Vec<_>>(),
    });
    let mut out = Output::new(text, results);
    out.failure = violations.map(CliError::Invalid);
    Ok(out)
}

fn solution_json(s: &HittingSolution) -> Value {
    json!({
        "values": sig12_vec(s.values.as_slice()),
        "residual": s.residual,
        "iterations": s.iterations,
        "delta": s.delta_used,
        "certificate": s.certificate.as_ref().map(matrix_rows),
    })
}

fn write_bounds(text: &mut String, model: &Model, r: &HittingTimeResult) {
    writeln!(text, "method: {}", r.lower.method.as_str()).unwrap();
    writeln!(text, "{:<12} {:>20} {:>20}", "state", "lower", "upper").unwrap();
    for x in 0..model.n_states() {
        writeln!(
            text,
            "{:<12} {:>20} {:>20}",
            label(model, x),
            fmt12(r.lower.values[x]),
            fmt12(r.upper.values[x])
        )
        .unwrap();
    }
    writeln!(
        text,
        "residual: lower {} upper {}",
        fmt12(r.lower.residual),
        fmt12(r.upper.residual)
    )
    .unwrap();
    writeln!(
        text,
        "iterations: lower {} upper {}",
        r.lower.iterations, r.upper.iterations
    )
    .unwrap();
    for s in [&r.lower, &r.upper] {
        if let Some(q) = &s.certificate {
            writeln!(text, "certificate {} (member attaining the bound):", s.orientation.as_str()).unwrap();
            write_matrix(text, model, q);
        }
    }
}

/// Relative agreement tolerance between value and policy iteration.
pub fn agreement_tolerance(tol: f64) -> f64 {
    (100.0 * tol).max(1e-6)
}

pub fn solve(model: Model, args: &SolveArgs) -> Result<Output, CliError> {
    if !(args.tol > 0.0 && args.tol.is_finite()) {
        return Err(CliError::Usage(format!("--tol must be positive, got {}", args.tol)));
    }
    let model = require_valid(model)?;
    let vi = ValueIterationOptions {
        delta: args.delta,
        tol: args.tol,
        ..Default::default()
    };
    let pi = PolicyIterationOptions {
        tol: args.tol.min(PolicyIterationOptions::default().tol),
        ..Default::default()
    };
    let methods: &[Method] = match args.method {
        MethodArg::Vi => &[Method::ValueIteration],
        MethodArg::Pi => &[Method::PolicyIteration],
        MethodArg::Both => &[Method::PolicyIteration, Method::ValueIteration],
    };
    let mut text = String::new();
    let mut solved = Vec::new();
    let mut by_method = serde_json::Map::new();
    for &m in methods {
        let r = solve_bounds(&model, m, &vi, &pi)?;
        if !text.is_empty() {
            text.push('\n');
        }
        write_bounds(&mut text, &model, &r);
        by_method.insert(
            m.as_str().to_string(),
            json!({ "lower": solution_json(&r.lower), "upper": solution_json(&r.upper) }),
        );
        solved.push(r);
    }
    let mut results = json!({
        "states": model.space().labels(),
        "lower": sig12_vec(solved[0].lower.values.as_slice()),
        "upper": sig12_vec(solved[0].upper.values.as_slice()),
        "methods": by_method,
    });
    let mut failure = None;
    if let [a, b] = &solved[..] {
        let scale = a.upper.values.sup_norm().max(1.0);
        let diff = sup_dist(a.lower.values.as_slice(), b.lower.values.as_slice())
            .max(sup_dist(a.upper.values.as_slice(), b.upper.values.as_slice()))
            / scale;
        let tol = agreement_tolerance(args.tol);
        let agree = diff <= tol;
        writeln!(
            text,
            "\nagreement: value and policy iteration {} (relative difference {}, tolerance {})",
            if agree { "agree" } else { "DISAGREE" },
            fmt12(diff),
            fmt12(tol)
        )
        .unwrap();
        results["agreement"] = json!({ "agree": agree, "relative_difference": diff, "tolerance": tol });
        if !agree {
            failure = Some(CliError::Numerical(format!(
                "value and policy iteration differ by {} relative, above {}",
                fmt12(diff),
                fmt12(tol)
            )));
        }
    }
    let mut out = Output::new(text, results);
    out.failure = failure;
    Ok(out)
}

pub fn converge(model: Model, args: &ConvergeArgs) -> Result<Output, CliError> {
    let model = require_valid(model)?;
    let orientation = match args.orientation {
        OrientationArg::Lower => Orientation::Lower,
        OrientationArg::Upper => Orientation::Upper,
    };
    let (subject, name) = match args.member {
        SubjectArg::AllLower => (StudySubject::Member(model.rates().all_lower()), "all-lower"),
        SubjectArg::AllUpper => (StudySubject::Member(model.rates().all_upper()), "all-upper"),
        SubjectArg::Imprecise => (StudySubject::Imprecise(orientation), "imprecise"),
    };
    let opts = DiscretizedOptions {
        tol: args.tol,
        inner_tol: args.inner_tol,
        ..Default::default()
    };
    let study = with_threads(args.threads, || {
        convergence_study(&model, &subject, &args.deltas, &opts)
    })??;
    let mut text = String::from("delta,error,ratio\n");
    for i in 0..study.deltas.len() {
        writeln!(
            text,
            "{},{},{}",
            fmt12(study.deltas[i]),
            fmt12(study.errors[i]),
            fmt12(study.ratios[i])
        )
        .unwrap();
    }
    let mut notes = Vec::new();
    match study.fitted_order {
        Some(p) => notes.push(format!(
            "order fit: {} (largest ratio {})",
            fmt12(p),
            fmt12(study.fitted_l)
        )),
        None => notes.push("fit skipped: a slope needs at least two step sizes with positive error".into()),
    }
    if study.deltas.len() > 1 {
        notes.push(format!(
            "errors decrease monotonically: {}",
            if study.errors_decreasing() { "yes" } else { "no" }
        ));
    }
    let mut results = serde_json::to_value(&study).expect("study serialises");
    results["subject"] = json!(name);
    if matches!(args.member, SubjectArg::Imprecise) {
        results["orientation"] = json!(orientation.as_str());
    }
    results["errors_decreasing"] = json!(study.errors_decreasing());
    let mut out = Output::new(text, results);
    out.notes = notes;
    Ok(out)
}

pub fn simulate(model: Model, args: &SimulateArgs) -> Result<Output, CliError> {
    let model = require_valid(model)?;
    let target = model.target();
    let start = match &args.start {
        Some(l) => model.space().index_of(l)?,
        None => target.complement()[0],
    };
    if target.contains(start) {
        return Err(CliError::Usage(format!(
            "start state {} is in the target",
            label(&model, start)
        )));
    }
    let bounds = solve_bounds(
        &model,
        Method::PolicyIteration,
        &Default::default(),
        &Default::default(),
    )?;
    let (lo, up) = (bounds.lower.values[start], bounds.upper.values[start]);
    let horizon = args
        .horizon
        .unwrap_or_else(|| imc_hitting::mc::default_horizon(model.rates(), Some(up)));
    let cfg = RunConfig {
        paths: args.paths,
        seed: args.seed,
        start,
        horizon,
    };
    let lower_q = bounds.lower.certificate.clone().expect("policy iteration certifies");
    let upper_q = bounds.upper.certificate.clone().expect("policy iteration certifies");
    let mut member_rng = path_rng(args.seed, MEMBER_STREAM);
    let set = model.rates();

    let (description, samples) = with_threads(args.threads, || match (args.regime, args.strategy) {
        (RegimeArg::Hm, StrategyArg::Alternating) => Err(CliError::Usage(
            "the hm regime keeps one member; use --strategy random, lower or upper".into(),
        )),
        (RegimeArg::Hm, s) => {
            let (q, what) = match s {
                StrategyArg::Lower => (lower_q.clone(), "member attaining the lower bound"),
                StrategyArg::Upper => (upper_q.clone(), "member attaining the upper bound"),
                _ => (uniform_member(&mut member_rng, set), "uniformly sampled member"),
            };
            Ok((what.to_string(), simulate_homogeneous(&q, target, &cfg)?))
        }
        (RegimeArg::M, s) => {
            let (members, what) = match s {
                StrategyArg::Lower => (vec![lower_q.clone()], "constant lower-attaining member".to_string()),
                StrategyArg::Upper => (vec![upper_q.clone()], "constant upper-attaining member".to_string()),
                StrategyArg::Alternating => (
                    vec![lower_q.clone(), upper_q.clone()],
                    format!("lower and upper attaining members, switching every {}", fmt12(args.switch_every)),
                ),
                StrategyArg::Random => (
                    (0..10).map(|_| uniform_member(&mut member_rng, set)).collect(),
                    format!("10 sampled members, switching every {}", fmt12(args.switch_every)),
                ),
            };
            let schedule = Schedule::cyclic(args.switch_every, members)?;
            Ok((what, simulate_inhomogeneous(&model, &schedule, &cfg)?))
        }
        (RegimeArg::I, s) => {
            let policy: Box<dyn JumpPolicy> = match s {
                StrategyArg::Lower => Box::new(AdversarialPolicy::new(
                    set,
                    bounds.lower.values.as_slice(),
                    Orientation::Lower,
                )),
                StrategyArg::Upper => Box::new(AdversarialPolicy::new(
                    set,
                    bounds.upper.values.as_slice(),
                    Orientation::Upper,
                )),
                StrategyArg::Alternating => Box::new(AlternatingPolicy {
                    even: lower_q.clone(),
                    odd: upper_q.clone(),
                }),
                StrategyArg::Random => Box::new(RandomExtremePolicy(set.clone())),
            };
            Ok((
                format!("policy {}", policy.name()),
                simulate_history_dependent(&model, policy.as_ref(), &cfg)?,
            ))
        }
    })??;
    let est = estimate_hitting(&samples)?;
    let inside = est.within(lo, up, 3.0);
    let near_lower = (args.strategy == StrategyArg::Lower).then(|| est.within(lo, lo, 3.0));
    let near_upper = (args.strategy == StrategyArg::Upper).then(|| est.within(up, up, 3.0));

    let mut text = String::new();
    let regime = match args.regime {
        RegimeArg::Hm => "hm",
        RegimeArg::M => "m",
        RegimeArg::I => "i",
    };
    writeln!(text, "regime: {regime} ({description})").unwrap();
    writeln!(text, "start: {}", label(&model, start)).unwrap();
    writeln!(
        text,
        "paths: {} (seed {}, horizon {})",
        est.n_paths,
        args.seed,
        fmt12(horizon)
    )
    .unwrap();
    writeln!(
        text,
        "estimate: {} +/- {} (95% interval half-width)",
        fmt12(est.mean),
        fmt12(est.ci_halfwidth)
    )
    .unwrap();
    writeln!(text, "std dev: {}", fmt12(est.std_dev)).unwrap();
    writeln!(text, "censored fraction: {}", fmt12(est.censored_fraction)).unwrap();
    writeln!(text, "bounds: [{}, {}]", fmt12(lo), fmt12(up)).unwrap();
    writeln!(
        text,
        "verdict: {} [lower - 3 CI, upper + 3 CI]",
        if inside { "inside" } else { "OUTSIDE" }
    )
    .unwrap();
    for (flag, which) in [(near_lower, "lower"), (near_upper, "upper")] {
        if let Some(ok) = flag {
            writeln!(
                text,
                "{which} bound: estimate {} within 3 CI",
                if ok { "is" } else { "is NOT" }
            )
            .unwrap();
        }
    }
    let mut notes = Vec::new();
    if est.censored_fraction > 0.0 {
        notes.push(format!(
            "{} of paths were censored at the horizon; the estimate is biased low",
            fmt12(est.censored_fraction)
        ));
    }
    let results = json!({
        "regime": regime,
        "strategy": format!("{:?}", args.strategy).to_lowercase(),
        "description": description,
        "start": label(&model, start),
        "horizon": horizon,
        "estimate": est,
        "bounds": { "lower": lo, "upper": up },
        "inside_band": inside,
        "near_lower": near_lower,
        "near_upper": near_upper,
    });
    let mut out = Output::new(text, results);
    out.seed = Some(args.seed);
    out.notes = notes;
    Ok(out)
}

pub fn diagnose(model: Model, args: &DiagnoseArgs) -> Result<Output, CliError> {
    let model = require_valid(model)?;
    let opts = DiagnosticsOptions::default();
    let report = stability_constants(&model, &opts)?;
    let star = StarNorm::new(&model, &report, &opts)?;
    let set = model.rates();
    let mut rng = path_rng(args.seed, MEMBER_STREAM);
    let mut members = vec![set.all_lower(), set.all_upper()];
    members.extend((0..args.members).map(|_| uniform_member(&mut rng, set)));
    let times: Vec<f64> = [1.0, 4.0, 16.0, 64.0, 128.0].iter().map(|k| k * star.tau()).collect();
    let quasi = quasicontractivity_check(
        &model,
        &report,
        &star,
        &members,
        &times,
        args.functions,
        args.seed,
        args.slack,
    )?;
    let target = model.target();
    let abscissa_lower = spectral_abscissa(&members[0], target);
    let abscissa_upper = spectral_abscissa(&members[1], target);

    let yes = |b: bool| if b { "holds" } else { "FAILS" };
    let mut text = String::new();
    writeln!(text, "q: {}", fmt12(report.q)).unwrap();
    writeln!(text, "xi: {}", fmt12(report.xi)).unwrap();
    writeln!(text, "M: {}", fmt12(report.m)).unwrap();
    writeln!(text, "envelope ||e^(Gt)|| <= M e^(-xi t) on the grid: {}", yes(report.envelope_holds)).unwrap();
    writeln!(text, "contractive (norms decrease, q < 1): {}", yes(report.contractive)).unwrap();
    writeln!(
        text,
        "quasicontractivity: {} checks, {} failures, largest ratio {}",
        quasi.checks,
        quasi.failures.len(),
        fmt12(quasi.max_ratio)
    )
    .unwrap();
    writeln!(text, "member norms dominated by the upper norms: {}", yes(quasi.members_dominated)).unwrap();
    writeln!(
        text,
        "spectral abscissa: all-lower {} all-upper {}",
        fmt12(abscissa_lower),
        fmt12(abscissa_upper)
    )
    .unwrap();
    let results = json!({
        "stability": report,
        "quasicontractivity": quasi,
        "quasicontractivity_passed": quasi.passed(),
        "star_norm": { "tau": star.tau(), "points": opts.star_points },
        "spectral_abscissa": { "all_lower": abscissa_lower, "all_upper": abscissa_upper },
    });
    let mut out = Output::new(text, results);
    out.seed = Some(args.seed);
    if !quasi.passed() {
        out.failure = Some(CliError::Numerical("quasicontractivity check failed".into()));
    }
    Ok(out)
}
