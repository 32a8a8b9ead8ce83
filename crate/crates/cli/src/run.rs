use std::io::Write;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;
use drawdown_core::closedform::{bes3_drawdown_lt, bm_drawdown_lt};
use drawdown_core::law::{Method, Solver};
use drawdown_core::model::Family;
use drawdown_core::passage::Route;
use drawdown_mc::{estimate_many, ks_critical, ks_two_sample, sample, Functional, Scheme, SimConfig, SimEstimate};
use rayon::prelude::*;

use crate::args::{expand_config, Cli, Command, Format, GridArgs, LawArgs, McArgs, ModelKind, OutputArgs, SchemeArg, SimulateArgs, Suite, VerifyArgs};
use crate::error::{invalid, CliError, Result};
use crate::grid::{parse_values, product};
use crate::model::{build, BuiltModel};
use crate::output::{to_csv, to_json, to_table, Report, Row, SCHEMA};
use crate::target::{Inputs, McMap, Target};
use crate::{EXIT_FAIL, EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK};

/// Every grid flag, used to reject flags a target does not read.
const GRID_FLAGS: [&str; 13] = ["x", "q", "p", "y", "z", "a", "b", "level", "t", "k", "r", "alpha", "cap"];

/// What a command produced, before it is written out.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    pub report: Report,
}

/// Parses, runs and writes; returns the process exit code.
pub fn main_with(args: Vec<String>) -> i32 {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let outcome = match execute(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match emit(&outcome.report, output_args(&cli)) {
        Ok(()) => outcome.code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_NUMERICAL
        }
    }
}

fn output_args(cli: &Cli) -> &OutputArgs {
    match &cli.command {
        Command::Law(a) | Command::Price(a) => &a.output,
        Command::Simulate(a) => &a.output,
        Command::Verify(a) => &a.output,
    }
}

/// Renders the report in the requested format.
pub fn render(report: &Report, format: Format) -> Result<String> {
    match format {
        Format::Table => Ok(to_table(report)),
        Format::Csv => to_csv(report),
        Format::Json => to_json(report),
    }
}

fn emit(report: &Report, out: &OutputArgs) -> Result<()> {
    let text = render(report, out.format)?;
    match &out.output {
        Some(path) => {
            std::fs::write(path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|source| CliError::Io { path: "standard output".into(), source })?;
        }
    }
    if out.format != Format::Table || out.output.is_some() {
        for row in report.rows.iter().filter(|r| !r.is_ok()) {
            eprintln!("{}: {}", row.status, row.message.as_deref().unwrap_or(""));
        }
        if let Some(v) = &report.verdict {
            eprintln!("{}: {v}", report.target);
        }
    }
    Ok(())
}

/// Runs a parsed command. Validation problems are returned as errors before anything is
/// evaluated; failures of individual rows are recorded in the rows.
pub fn execute(cli: &Cli) -> Result<Outcome> {
    let threads = output_args(cli).threads;
    if threads == Some(0) {
        return Err(invalid("threads must be positive"));
    }
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| invalid(format!("cannot start worker threads: {e}")))?
    };
    pool.install(|| match &cli.command {
        Command::Law(a) => law(a, "law", false),
        Command::Price(a) => law(a, "price", true),
        Command::Simulate(a) => simulate(a, threads),
        Command::Verify(a) => verify(a, threads),
    })
}

struct Session {
    built: BuiltModel,
    tol: Option<f64>,
}

impl Session {
    fn new(args: &crate::args::ModelArgs) -> Result<Self> {
        Ok(Session { built: build(args)?, tol: args.tol })
    }

    fn solver(&self) -> Solver<'_> {
        let s = Solver::new(&*self.built.model);
        match self.tol {
            Some(t) => s.with_tol(t),
            None => s,
        }
    }

    fn report(&self, command: &str, target: String, parameters: Vec<String>, seed: Option<u64>) -> Report {
        Report {
            schema: SCHEMA.into(),
            command: command.into(),
            target,
            model: self.built.label.clone(),
            parameters,
            seed,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            verdict: None,
            rows: Vec::new(),
        }
    }
}

/// Grid points for the named parameters, all of which must be given unless they have a
/// default; `x` falls back to the model's default start.
fn grid_points(
    grid: &GridArgs,
    names: &[(&'static str, Option<f64>, bool)],
    default_x: f64,
    owner: &str,
) -> Result<Vec<Inputs>> {
    for flag in GRID_FLAGS {
        if grid.get(flag).is_some() && !names.iter().any(|(n, _, _)| *n == flag) {
            return Err(invalid(format!("--{flag} is not a parameter of {owner}")));
        }
    }
    let mut axes = Vec::new();
    for &(name, default, optional) in names {
        let values = match grid.get(name) {
            Some(src) => parse_values(name, src)?,
            None if name == "x" => vec![default_x],
            None => match default {
                Some(d) => vec![d],
                None if optional => continue,
                None => return Err(invalid(format!("{owner} needs --{name}"))),
            },
        };
        axes.push((name, values));
    }
    Ok(product(&axes, grid.max_evals)?.into_iter().map(Inputs).collect())
}

fn target_points(target: Target, grid: &GridArgs, default_x: f64) -> Result<Vec<Inputs>> {
    let names: Vec<_> = target.params().iter().map(|p| (p.name, p.default, p.optional)).collect();
    grid_points(grid, &names, default_x, &target.name())
}

fn columns(target: Target, grid: &GridArgs) -> Vec<String> {
    target
        .params()
        .iter()
        .filter(|p| !p.optional || grid.get(p.name).is_some())
        .map(|p| p.name.to_string())
        .collect()
}

fn input_map(i: &Inputs) -> std::collections::BTreeMap<String, f64> {
    i.0.iter().map(|(n, v)| (n.to_string(), *v)).collect()
}

fn failed_row(i: &Inputs, e: &CliError, elapsed_ms: f64) -> Row {
    Row {
        inputs: input_map(i),
        status: e.kind().into(),
        message: Some(e.to_string()),
        elapsed_ms,
        ..Row::default()
    }
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Validation failures outrank numerical ones, which outrank failed comparisons.
fn exit_code(rows: &[Row], failures: &[CliError]) -> i32 {
    if failures.iter().any(CliError::is_validation) {
        EXIT_INVALID
    } else if !failures.is_empty() || rows.iter().any(|r| !r.is_ok()) {
        EXIT_NUMERICAL
    } else if rows.iter().any(|r| r.pass == Some(false)) {
        EXIT_FAIL
    } else {
        EXIT_OK
    }
}

fn law(args: &LawArgs, command: &str, products: bool) -> Result<Outcome> {
    if products != args.target.is_product() {
        let hint = if products { "law" } else { "price" };
        return Err(invalid(format!("{} is evaluated by the {hint} command", args.target.name())));
    }
    let session = Session::new(&args.model)?;
    let points = target_points(args.target, &args.grid, session.built.default_x)?;
    for p in &points {
        args.target.validate(&*session.built.model, p)?;
    }
    let solver = session.solver();
    let results: Vec<(Row, Option<CliError>)> = points
        .par_iter()
        .map(|p| {
            let start = Instant::now();
            match args.target.analytic(&solver, p) {
                Ok(v) if v.value.is_finite() => (
                    Row {
                        inputs: input_map(p),
                        value: Some(v.value),
                        error: Some(v.error),
                        method: Some(v.method.as_str().into()),
                        status: "ok".into(),
                        elapsed_ms: ms(start),
                        branch: v.branch,
                        ..Row::default()
                    },
                    None,
                ),
                Ok(_) => {
                    let e = CliError::NonFinite("value".into());
                    (failed_row(p, &e, ms(start)), Some(e))
                }
                Err(e) => {
                    let e = CliError::Core(e);
                    (failed_row(p, &e, ms(start)), Some(e))
                }
            }
        })
        .collect();
    let mut report = session.report(command, args.target.name(), columns(args.target, &args.grid), None);
    let (rows, failures): (Vec<Row>, Vec<Option<CliError>>) = results.into_iter().unzip();
    let failures: Vec<CliError> = failures.into_iter().flatten().collect();
    report.rows = rows;
    Ok(Outcome { code: exit_code(&report.rows, &failures), report })
}

fn sim_config(mc: &McArgs, kind: ModelKind, threads: Option<usize>) -> Result<SimConfig> {
    let scheme = match (mc.scheme, kind) {
        (SchemeArg::Auto, ModelKind::Bm) | (SchemeArg::ExactGaussian, _) => Scheme::ExactGaussian,
        (SchemeArg::Auto, ModelKind::Bes3) | (SchemeArg::ExactNorm3d, _) => Scheme::ExactNorm3d,
        (SchemeArg::Auto, ModelKind::Custom) | (SchemeArg::Euler, _) => Scheme::Euler,
    };
    let mut cfg = SimConfig::new(mc.dt, mc.paths, mc.seed)
        .with_scheme(scheme)
        .with_bridge(mc.bridge)
        .with_horizon(mc.horizon);
    if let Some(n) = mc.richardson {
        cfg = cfg.with_richardson(n);
    }
    if let Some(n) = threads {
        cfg = cfg.with_threads(n);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Monte Carlo estimates for each point, sharing paths among points with the same start.
fn mc_estimates(
    session: &Session,
    points: &[Inputs],
    functionals: &[Functional],
    cfg: &SimConfig,
) -> Vec<std::result::Result<SimEstimate, CliError>> {
    let mut out: Vec<Option<std::result::Result<SimEstimate, CliError>>> = points.iter().map(|_| None).collect();
    let mut done = vec![false; points.len()];
    for i in 0..points.len() {
        if done[i] {
            continue;
        }
        let x = points[i].get("x");
        let group: Vec<usize> = (i..points.len()).filter(|&j| !done[j] && points[j].get("x") == x).collect();
        let fs: Vec<Functional> = group.iter().map(|&j| functionals[j]).collect();
        match estimate_many(&*session.built.model, x, &fs, cfg) {
            Ok(est) => {
                for (&j, e) in group.iter().zip(est) {
                    out[j] = Some(Ok(e));
                }
            }
            Err(e) => {
                let e = CliError::Mc(e);
                for &j in &group {
                    out[j] = Some(Err(clone_error(&e)));
                }
            }
        }
        for &j in &group {
            done[j] = true;
        }
    }
    out.into_iter().map(|o| o.expect("every point estimated")).collect()
}

fn clone_error(e: &CliError) -> CliError {
    match e {
        CliError::Mc(m) => CliError::Mc(m.clone()),
        CliError::Core(c) => CliError::Core(c.clone()),
        other => CliError::Invalid(other.to_string()),
    }
}

fn richardson_fields(row: &mut Row, est: &SimEstimate, map: McMap) {
    if let Some(r) = &est.richardson {
        let (shift, se) = match map {
            McMap::Identity => (r.shift, r.shift_se),
            McMap::Complement => (-r.shift, r.shift_se),
            McMap::Discount(d) => (d * r.shift, d * r.shift_se),
        };
        row.richardson_shift = Some(shift);
        row.richardson_se = Some(se);
    }
}

fn simulate(args: &SimulateArgs, threads: Option<usize>) -> Result<Outcome> {
    let session = Session::new(&args.model)?;
    let cfg = sim_config(&args.mc, args.model.model, threads)?;
    let points = target_points(args.target, &args.grid, session.built.default_x)?;
    for p in &points {
        args.target.validate(&*session.built.model, p)?;
    }
    let mapped: Vec<(Functional, McMap)> = points.iter().map(|p| args.target.functional(p)).collect();
    let fs: Vec<Functional> = mapped.iter().map(|m| m.0).collect();
    let start = Instant::now();
    let estimates = mc_estimates(&session, &points, &fs, &cfg);
    let per_row = ms(start) / points.len().max(1) as f64;
    let mut failures = Vec::new();
    let mut rows = Vec::with_capacity(points.len());
    for ((p, est), (_, map)) in points.iter().zip(estimates).zip(&mapped) {
        match est {
            Ok(est) => {
                let (value, se) = map.apply(est.estimate, est.se);
                let mut row = Row {
                    inputs: input_map(p),
                    value: Some(value),
                    error: Some(se),
                    method: Some(Method::Mc.as_str().into()),
                    status: "ok".into(),
                    elapsed_ms: per_row,
                    n_effective: Some(est.n_effective),
                    ..Row::default()
                };
                richardson_fields(&mut row, &est, *map);
                rows.push(row);
            }
            Err(e) => {
                rows.push(failed_row(p, &e, per_row));
                failures.push(e);
            }
        }
    }
    let mut report = session.report("simulate", args.target.name(), columns(args.target, &args.grid), Some(cfg.seed));
    report.rows = rows;
    Ok(Outcome { code: exit_code(&report.rows, &failures), report })
}

fn verify(args: &VerifyArgs, threads: Option<usize>) -> Result<Outcome> {
    if !(args.rel_tol > 0.0 && args.abs_tol > 0.0 && args.sigmas > 0.0) {
        return Err(invalid("tolerances must be positive"));
    }
    if !(args.ks_level > 0.0 && args.ks_level < 1.0) {
        return Err(invalid("ks-level must lie in (0, 1)"));
    }
    if args.target.is_some() && args.suite != Suite::Mc {
        return Err(invalid("--target only applies to the mc suite"));
    }
    let session = Session::new(&args.model)?;
    let (target, rows, failures, seed) = match args.suite {
        Suite::IdentityInLaw => {
            let (rows, failures, seed) = identity_in_law(args, &session, threads)?;
            ("identity-in-law".to_string(), rows, failures, seed)
        }
        Suite::BranchContinuity => {
            let (rows, failures) = branch_continuity(args, &session)?;
            ("branch-continuity".to_string(), rows, failures, None)
        }
        Suite::Mc => {
            let Some(target) = args.target else {
                return Err(invalid("the mc suite needs --target"));
            };
            let (rows, failures, seed) = mc_suite(args, &session, target, threads)?;
            (format!("mc:{}", target.name()), rows, failures, Some(seed))
        }
        Suite::Partition => {
            let (rows, failures, seed) = partition(args, &session, threads)?;
            ("partition".to_string(), rows, failures, Some(seed))
        }
    };
    let parameters = rows
        .first()
        .map(|_| {
            let mut names: Vec<String> = Vec::new();
            for r in &rows {
                for k in GRID_FLAGS {
                    if r.inputs.contains_key(k) && !names.iter().any(|n| n == k) {
                        names.push(k.to_string());
                    }
                }
            }
            names
        })
        .unwrap_or_default();
    let mut report = session.report("verify", target, parameters, seed);
    let all_pass = rows.iter().all(|r| r.is_ok() && r.pass == Some(true));
    report.verdict = Some(if all_pass { "PASS" } else { "FAIL" }.into());
    report.rows = rows;
    Ok(Outcome { code: exit_code(&report.rows, &failures), report })
}

fn comparison(p: &Inputs, value: f64, reference: f64, deviation: f64, tolerance: f64) -> Row {
    Row {
        inputs: input_map(p),
        value: Some(value),
        reference: Some(reference),
        deviation: Some(deviation),
        tolerance: Some(tolerance),
        pass: Some(deviation <= tolerance),
        status: "ok".into(),
        ..Row::default()
    }
}

type Rows = (Vec<Row>, Vec<CliError>);

fn collect_rows(results: Vec<(Row, Option<CliError>)>) -> Rows {
    let (rows, failures): (Vec<Row>, Vec<Option<CliError>>) = results.into_iter().unzip();
    (rows, failures.into_iter().flatten().collect())
}

fn identity_in_law(args: &VerifyArgs, session: &Session, threads: Option<usize>) -> Result<(Vec<Row>, Vec<CliError>, Option<u64>)> {
    let names = [("x", None, false), ("q", None, false), ("y", None, false), ("a", None, false)];
    let points = grid_points(&args.grid, &names, session.built.default_x, "identity-in-law")?;
    let model = &*session.built.model;
    for p in &points {
        let (x, q, y, a) = (p.get("x"), p.get("q"), p.get("y"), p.get("a"));
        Functional::OccDdAboveUntilDd { q, y, a }.validate(model, x).map_err(|e| invalid(e.to_string()))?;
        if !(q > 0.0) {
            return Err(invalid("q must be positive"));
        }
        if !(y < a) {
            return Err(invalid("y must be below a"));
        }
        if !model.contains(x - a) {
            return Err(invalid("x - a must lie inside the state interval"));
        }
    }
    let solver = session.solver();
    let results: Vec<(Row, Option<CliError>)> = points
        .par_iter()
        .map(|p| {
            let start = Instant::now();
            let (x, q, y, a) = (p.get("x"), p.get("q"), p.get("y"), p.get("a"));
            let occ = solver.occ_dd_above_until_dd(q, x, y, a);
            let reference = match model.family() {
                Some(Family::Brownian(params)) => bm_drawdown_lt(params, q, a - y).map(|v| (v, 0.0, Method::ClosedForm)),
                Some(Family::Bessel3) => bes3_drawdown_lt(x, q, a - y).map(|v| (v, 0.0, Method::ClosedForm)),
                None => solver.drawdown_transform(q, x, a - y).map(|r| (r.value, r.error, r.method)),
            };
            match (occ, reference) {
                (Ok(o), Ok((r, r_err, r_method))) => {
                    let dev = ((o.value - r) / r).abs();
                    let mut row = comparison(p, o.value, r, dev, args.rel_tol);
                    row.error = Some(o.error);
                    row.method = Some(o.method.as_str().into());
                    row.reference_error = Some(r_err);
                    row.reference_method = Some(r_method.as_str().into());
                    row.elapsed_ms = ms(start);
                    (row, None)
                }
                (Err(e), _) | (_, Err(e)) => {
                    let e = CliError::Core(e);
                    (failed_row(p, &e, ms(start)), Some(e))
                }
            }
        })
        .collect();
    let (mut rows, mut failures) = collect_rows(results);
    let mut seed = None;
    if args.ks {
        let cfg = sim_config(&args.mc, args.model.model, threads)?;
        seed = Some(cfg.seed);
        let mut seen: Vec<(f64, f64, f64)> = Vec::new();
        for p in &points {
            let key = (p.get("x"), p.get("y"), p.get("a"));
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            let (x, y, a) = key;
            let start = Instant::now();
            let inputs = Inputs(vec![("x", x), ("y", y), ("a", a)]);
            let other = SimConfig { seed: cfg.seed.wrapping_add(1), ..cfg.clone() };
            let occ = sample(model, x, Functional::DrawdownOccupation { y, a }, &cfg);
            let time = sample(model, x, Functional::DrawdownTime { a: a - y }, &other);
            match (occ, time) {
                (Ok(s1), Ok(s2)) => {
                    let ks = ks_two_sample(&s1, &s2);
                    let crit = ks_critical(args.ks_level, s1.len(), s2.len());
                    let mut row = comparison(&inputs, ks.statistic, crit, ks.statistic, crit);
                    row.method = Some(Method::Mc.as_str().into());
                    row.reference_method = Some("ks-critical".into());
                    row.n_effective = Some(s1.len().min(s2.len()) as u64);
                    row.elapsed_ms = ms(start);
                    rows.push(row);
                }
                (Err(e), _) | (_, Err(e)) => {
                    let e = CliError::Mc(e);
                    rows.push(failed_row(&inputs, &e, ms(start)));
                    failures.push(e);
                }
            }
        }
    }
    Ok((rows, failures, seed))
}

fn branch_continuity(args: &VerifyArgs, session: &Session) -> Result<Rows> {
    let names = [("x", None, false), ("q", None, false), ("a", None, false)];
    let points = grid_points(&args.grid, &names, session.built.default_x, "branch-continuity")?;
    for p in &points {
        let (q, a) = (p.get("q"), p.get("a"));
        Functional::DrawdownFirst { q, a, b: a }.validate(&*session.built.model, p.get("x")).map_err(|e| invalid(e.to_string()))?;
    }
    let solver = session.solver();
    let results = points
        .par_iter()
        .map(|p| {
            let start = Instant::now();
            let (x, q, a) = (p.get("x"), p.get("q"), p.get("a"));
            let direct = solver.dd_before_du_via(Route::Direct, q, x, a, a);
            let complement = solver.dd_before_du_via(Route::Complement, q, x, a, a);
            match (direct, complement) {
                (Ok(d), Ok(c)) => {
                    let mut row = comparison(p, d.value, c.value, (d.value - c.value).abs(), args.abs_tol);
                    row.error = Some(d.error);
                    row.method = Some(d.method.as_str().into());
                    row.branch = d.diagnostics.branch;
                    row.reference_error = Some(c.error);
                    row.reference_method = c.diagnostics.branch.or(Some(c.method.as_str().into()));
                    row.elapsed_ms = ms(start);
                    (row, None)
                }
                (Err(e), _) | (_, Err(e)) => {
                    let e = CliError::Core(e);
                    (failed_row(p, &e, ms(start)), Some(e))
                }
            }
        })
        .collect();
    Ok(collect_rows(results))
}

fn mc_suite(args: &VerifyArgs, session: &Session, target: Target, threads: Option<usize>) -> Result<(Vec<Row>, Vec<CliError>, u64)> {
    let cfg = sim_config(&args.mc, args.model.model, threads)?;
    let points = target_points(target, &args.grid, session.built.default_x)?;
    for p in &points {
        target.validate(&*session.built.model, p)?;
    }
    let solver = session.solver();
    let analytic: Vec<(std::result::Result<crate::target::Value, CliError>, f64)> = points
        .par_iter()
        .map(|p| {
            let start = Instant::now();
            (target.analytic(&solver, p).map_err(CliError::Core), ms(start))
        })
        .collect();
    let mapped: Vec<(Functional, McMap)> = points.iter().map(|p| target.functional(p)).collect();
    let fs: Vec<Functional> = mapped.iter().map(|m| m.0).collect();
    let start = Instant::now();
    let estimates = mc_estimates(session, &points, &fs, &cfg);
    let per_row = ms(start) / points.len().max(1) as f64;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (((p, (value, t)), est), (_, map)) in points.iter().zip(analytic).zip(estimates).zip(&mapped) {
        match (value, est) {
            (Ok(v), _) if !v.value.is_finite() => {
                let e = CliError::NonFinite("value".into());
                rows.push(failed_row(p, &e, t + per_row));
                failures.push(e);
            }
            (Ok(v), Ok(est)) => {
                let (mc, se) = map.apply(est.estimate, est.se);
                let mut row = comparison(p, v.value, mc, (v.value - mc).abs(), args.sigmas * se);
                row.error = Some(v.error);
                row.method = Some(v.method.as_str().into());
                row.branch = v.branch;
                row.reference_error = Some(se);
                row.reference_method = Some(Method::Mc.as_str().into());
                row.n_effective = Some(est.n_effective);
                richardson_fields(&mut row, &est, *map);
                if let Some(shift) = row.richardson_shift {
                    // halving the step must not move the estimate by two standard errors
                    row.pass = Some(row.pass == Some(true) && shift.abs() < 2.0 * se);
                }
                row.elapsed_ms = t + per_row;
                rows.push(row);
            }
            (Err(e), _) | (_, Err(e)) => {
                rows.push(failed_row(p, &e, t + per_row));
                failures.push(e);
            }
        }
    }
    Ok((rows, failures, cfg.seed))
}

fn partition(args: &VerifyArgs, session: &Session, threads: Option<usize>) -> Result<(Vec<Row>, Vec<CliError>, u64)> {
    let cfg = sim_config(&args.mc, args.model.model, threads)?;
    let names = [("x", None, false), ("q", None, false), ("a", None, false), ("b", None, false)];
    let points = grid_points(&args.grid, &names, session.built.default_x, "partition")?;
    for p in &points {
        Target::ClockFirst.validate(&*session.built.model, p)?;
    }
    let solver = session.solver();
    let analytic: Vec<(drawdown_core::Result<(f64, f64)>, f64)> = points
        .par_iter()
        .map(|p| {
            let start = Instant::now();
            let (x, q, a, b) = (p.get("x"), p.get("q"), p.get("a"), p.get("b"));
            let v = solver
                .dd_before_du(q, x, a, b)
                .and_then(|dd| solver.du_before_dd(q, x, a, b).map(|du| (dd.value + du.value, dd.error + du.error)));
            (v, ms(start))
        })
        .collect();
    let fs: Vec<Functional> = points.iter().map(|p| Target::ClockFirst.functional(p).0).collect();
    let start = Instant::now();
    let estimates = mc_estimates(session, &points, &fs, &cfg);
    let per_row = ms(start) / points.len().max(1) as f64;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for ((p, (sum, t)), est) in points.iter().zip(analytic).zip(estimates) {
        match (sum.map_err(CliError::Core), est) {
            (Ok((sum, err)), Ok(est)) => {
                let total = sum + est.estimate;
                let mut row = comparison(p, total, 1.0, (total - 1.0).abs(), args.sigmas * est.se);
                row.error = Some(err + est.se);
                row.method = Some(Method::Mc.as_str().into());
                row.reference_method = Some("exact".into());
                row.n_effective = Some(est.n_effective);
                row.elapsed_ms = t + per_row;
                rows.push(row);
            }
            (Err(e), _) | (_, Err(e)) => {
                rows.push(failed_row(p, &e, t + per_row));
                failures.push(e);
            }
        }
    }
    Ok((rows, failures, cfg.seed))
}
