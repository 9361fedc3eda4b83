//! The three commands: solve (produce artifacts), verify (run the inequality
//! battery), bench (timed run).

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use reps_core::agd::{accelerated_solve, AgdConfig};
use reps_core::diagnostics::{
    accelerated_rate_check, certificate_check, dispersion_report, extraction_gap_check,
    policy_suboptimality, random_value_in_ball, reference_solution, smoothness_envelope_check,
    value_iteration, weak_duality_check, GapReport,
};
use reps_core::dual::{candidate_primal, dual_gradient, dual_value};
use reps_core::logging::{IterateLog, SgdLog};
use reps_core::mdp::{
    policy_from_visitation, policy_value, primal_return, visitation_of_policy, ValueVector,
};
use reps_core::sgd::{sgd_solve, SgdConfig};

use crate::config::{ResolvedExperiment, SolverConfig};
use crate::parallel;
use crate::CliError;

fn num(e: reps_core::Error) -> CliError {
    CliError::Numerical(e.to_string())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[derive(Serialize)]
struct ConstantsOut {
    smoothness: f64,
    radius_bound: f64,
    c: f64,
    c_prime: f64,
    c_double_prime: f64,
}

#[derive(Serialize)]
struct FinalOut {
    jd: f64,
    grad_l1: f64,
    v_linf: f64,
}

#[derive(Serialize)]
struct SolveSummary {
    config_sha256: String,
    seed: u64,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    regularizer: &'static str,
    eta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    beta: f64,
    rho_hat: f64,
    radius: f64,
    constants: ConstantsOut,
    solver: &'static str,
    iterations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    total_samples: Option<u64>,
    #[serde(rename = "final")]
    final_metrics: FinalOut,
    policy_return: f64,
    suboptimality: f64,
}

#[derive(Serialize)]
struct PolicyOut {
    probs: Vec<Vec<f64>>,
    value: Vec<f64>,
}

#[derive(Serialize)]
struct VerifySummary {
    config_sha256: String,
    seed: u64,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    regularizer: &'static str,
    eta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    beta: f64,
    rho_hat: f64,
    radius: f64,
    constants: ConstantsOut,
    reference_jd: f64,
    reference_grad_l1: f64,
    checks_passed: usize,
    checks_total: usize,
}

fn constants_out(rx: &ResolvedExperiment) -> ConstantsOut {
    ConstantsOut {
        smoothness: rx.constants.smoothness,
        radius_bound: rx.constants.radius,
        c: rx.constants.c,
        c_prime: rx.constants.c_prime,
        c_double_prime: rx.constants.c_double_prime,
    }
}

fn reg_name(rx: &ResolvedExperiment) -> &'static str {
    match rx.alpha {
        None => "kl",
        Some(_) => "tsallis",
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes")
}

enum RunArtifacts {
    Exact(ValueVector<f64>, IterateLog<f64>),
    Sampled(ValueVector<f64>, SgdLog<f64>),
}

fn run_solver(rx: &ResolvedExperiment) -> Result<RunArtifacts, CliError> {
    match &rx.config.solver {
        SolverConfig::Agd { max_iters, grad_tol_l1, record_every, .. } => {
            let cfg = AgdConfig::new(*max_iters, *grad_tol_l1, rx.radius, *record_every)
                .map_err(num)?;
            let (v, log) = accelerated_solve(&rx.problem, &cfg).map_err(num)?;
            Ok(RunArtifacts::Exact(v, log))
        }
        SolverConfig::Sgd { total_steps, delta, record_every, multipliers, .. } => {
            let cfg = SgdConfig::new(*total_steps, *delta, rx.radius, *record_every)
                .map_err(num)?
                .with_multipliers(multipliers.xi, multipliers.tau, multipliers.n)
                .map_err(num)?;
            let (v, log) = sgd_solve(&rx.problem, &cfg, rx.seed).map_err(num)?;
            Ok(RunArtifacts::Sampled(v, log))
        }
    }
}

/// Solve per the config and write `iterates.csv`, `policy.json`, and
/// `summary.json` into `out`. Deterministic: identical inputs give
/// byte-identical artifacts.
pub fn cmd_solve(
    rx: &ResolvedExperiment,
    config_bytes: &[u8],
    out: &Path,
    strict: bool,
) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let artifacts = run_solver(rx)?;
    let p = &rx.problem;
    let (v, csv, iterations, total_samples, solver_name) = match &artifacts {
        RunArtifacts::Exact(v, log) => {
            let last = log.records.last().map(|r| r.t).unwrap_or(0);
            (v, log.csv_string(true), last, None, "agd")
        }
        RunArtifacts::Sampled(v, log) => {
            let last = log.records.last().map(|r| r.t).unwrap_or(0);
            (v, log.csv_string(true), last, Some(log.diagnostics.total_samples), "sgd")
        }
    };
    let jd = dual_value(p, v).map_err(num)?;
    let grad = dual_gradient(p, v).map_err(num)?;

    let candidate = candidate_primal(p, v).map_err(num)?;
    let pi = policy_from_visitation(&candidate).map_err(num)?;
    let v_pi = policy_value(&p.mdp, &pi).map_err(num)?;
    let lam_pi = visitation_of_policy(&p.mdp, &pi).map_err(num)?;
    let policy_return = primal_return(&p.mdp, &lam_pi).map_err(num)?;
    let oracle = value_iteration(&p.mdp, 1e-10).map_err(num)?;
    let suboptimality = policy_suboptimality(&p.mdp, &pi, &oracle).map_err(num)?;

    let summary = SolveSummary {
        config_sha256: sha256_hex(config_bytes),
        seed: rx.seed,
        n_states: p.n_states(),
        n_actions: p.n_actions(),
        gamma: p.mdp.discount,
        regularizer: reg_name(rx),
        eta: rx.eta,
        alpha: rx.alpha,
        beta: rx.beta,
        rho_hat: rx.rho_hat,
        radius: rx.radius,
        constants: constants_out(rx),
        solver: solver_name,
        iterations,
        total_samples,
        final_metrics: FinalOut { jd, grad_l1: grad.norm_l1(), v_linf: v.norm_linf() },
        policy_return,
        suboptimality,
    };
    let policy = PolicyOut {
        probs: (0..p.n_states())
            .map(|s| (0..p.n_actions()).map(|a| pi.probs[[s, a]]).collect())
            .collect(),
        value: v_pi.values.to_vec(),
    };
    write_text(&out.join("iterates.csv"), &csv)?;
    write_text(&out.join("policy.json"), &(to_pretty_json(&policy) + "\n"))?;
    write_text(&out.join("summary.json"), &(to_pretty_json(&summary) + "\n"))?;
    println!(
        "solve: {} {}x{} eta={:.6} -> jd {:.9}, grad_l1 {:.3e}, suboptimality {:.3e}",
        solver_name,
        p.n_states(),
        p.n_actions(),
        rx.eta,
        jd,
        grad.norm_l1(),
        suboptimality
    );
    if strict {
        let battery = run_battery(rx)?;
        write_reports(out, &battery.reports)?;
        finish_battery(&battery.reports, true)?;
    }
    Ok(())
}

fn write_reports(out: &Path, reports: &[GapReport]) -> Result<(), CliError> {
    let mut text = String::new();
    for r in reports {
        text.push_str(&r.json_line());
        text.push('\n');
    }
    write_text(&out.join("reports.jsonl"), &text)
}

fn is_warning(r: &GapReport) -> bool {
    r.check == "reference_convergence" || r.check == "sample_coverage"
}

/// Print one line per report and decide the exit status. Inequality failures
/// are always fatal; the auxiliary warning reports (reference convergence,
/// sample coverage) are fatal only under `strict`.
fn finish_battery(reports: &[GapReport], strict: bool) -> Result<(), CliError> {
    let mut fatal = false;
    for r in reports {
        if is_warning(r) {
            println!("warning {}: {}", r.check, r.context);
            fatal |= strict;
        } else {
            println!(
                "check {}: {} (gap {:.3e}, bound {:.3e})",
                r.check,
                if r.passed { "pass" } else { "FAIL" },
                r.gap,
                r.bound
            );
            fatal |= !r.passed;
        }
    }
    if fatal {
        return Err(CliError::Verification);
    }
    Ok(())
}

struct BatteryOutcome {
    reports: Vec<GapReport>,
    reference_jd: f64,
    reference_grad_l1: f64,
}

/// The inequality battery: weak duality, smoothness envelope, accelerated
/// rate, gradient certificate, extraction bound, and (for sampled runs)
/// estimator dispersion. Returns the reports in a fixed order.
fn run_battery(rx: &ResolvedExperiment) -> Result<BatteryOutcome, CliError> {
    let p = &rx.problem;
    let vc = &rx.config.verify;
    let (v_ref, jd_ref, grad_ref) = reference_solution(p, rx.radius, vc.ref_max_iters, vc.ref_grad_tol)
        .map_err(num)?;
    let radius = rx.radius;
    let rho = rx.rho_hat;
    // The certificate run must stop once converged: iterates past the
    // reference's own precision have a certified gap at the float-noise
    // floor while their gradient norm is still measurable, which would fail
    // the check spuriously.
    let (agd_iters, agd_tol, agd_every) = match &rx.config.solver {
        SolverConfig::Agd { max_iters, grad_tol_l1, record_every, .. } => {
            (*max_iters, grad_tol_l1.max(vc.ref_grad_tol), *record_every)
        }
        SolverConfig::Sgd { .. } => (100_000, vc.ref_grad_tol.max(1e-9), 50),
    };

    type Task<'a> = Box<dyn FnOnce() -> Result<GapReport, reps_core::Error> + Send + 'a>;
    let mut tasks: Vec<Task> = Vec::new();
    tasks.push(Box::new(move || weak_duality_check(p, radius, vc.duality_pairs, vc.seed)));
    tasks.push(Box::new(move || {
        smoothness_envelope_check(
            p,
            vc.envelope_radius,
            vc.envelope_trials,
            vc.seed,
            vc.smoothness_factor,
        )
    }));
    {
        let v_ref = v_ref.clone();
        tasks.push(Box::new(move || {
            accelerated_rate_check(p, radius, &vc.rate_horizons, &v_ref, jd_ref)
        }));
    }
    tasks.push(Box::new(move || {
        let cfg = AgdConfig::new(agd_iters, agd_tol, radius, agd_every)?;
        let (_, log) = accelerated_solve(p, &cfg)?;
        certificate_check(p, &log, jd_ref)
    }));
    {
        let v_ref = v_ref.clone();
        tasks.push(Box::new(move || {
            let mut worst: Option<GapReport> = None;
            let points = vc.extraction_points.max(1);
            for i in 0..points {
                let v = if i == 0 {
                    v_ref.clone()
                } else {
                    random_value_in_ball(
                        p.n_states(),
                        radius,
                        vc.seed,
                        "extraction-probe",
                        i as u64,
                    )
                };
                let rep = extraction_gap_check(p, &v, rho, &v_ref)?;
                let keep = match &worst {
                    None => true,
                    Some(w) => rep.gap > w.gap,
                };
                if keep {
                    worst = Some(rep);
                }
            }
            let mut rep = worst.expect("at least one point probed");
            rep.context = format!("worst of {points} dual points: {}", rep.context);
            Ok(rep)
        }));
    }
    let sgd_run = match &rx.config.solver {
        SolverConfig::Sgd { total_steps, delta, record_every, multipliers, .. } => {
            Some((*total_steps, *delta, *record_every, *multipliers))
        }
        SolverConfig::Agd { .. } => None,
    };
    let mut zero_count_warning = false;
    if let Some((steps, delta, every, mults)) = sgd_run {
        let cfg = SgdConfig::new(steps, delta, radius, every)
            .map_err(num)?
            .with_multipliers(mults.xi, mults.tau, mults.n)
            .map_err(num)?;
        let (_, log) = sgd_solve(p, &cfg, rx.seed).map_err(num)?;
        zero_count_warning = log.diagnostics.zero_count_steps > 0;
        tasks.push(Box::new(move || Ok(dispersion_report(&log))));
    }

    let results = parallel::run_all(tasks.into_iter().map(|t| move || t()).collect::<Vec<_>>());
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        reports.push(r.map_err(num)?);
    }
    // Stash convergence/coverage facts for the strict path via context-free
    // report inspection downstream.
    if grad_ref > vc.ref_grad_tol {
        reports.push(GapReport {
            check: "reference_convergence".into(),
            gap: grad_ref,
            bound: vc.ref_grad_tol,
            passed: false,
            context: format!(
                "reference solve stopped at grad_l1 {grad_ref:.3e} > {:.3e} after {} iterations",
                vc.ref_grad_tol, vc.ref_max_iters
            ),
        });
    }
    if zero_count_warning {
        reports.push(GapReport {
            check: "sample_coverage".into(),
            gap: 1.0,
            bound: 0.0,
            passed: false,
            context: "some logged steps had state-action pairs with zero samples".into(),
        });
    }
    Ok(BatteryOutcome { reports, reference_jd: jd_ref, reference_grad_l1: grad_ref })
}

/// Run the battery and write `reports.jsonl` plus a verify summary.
///
/// Exit semantics: any failed inequality is fatal. The two auxiliary reports
/// (reference convergence, sample coverage) are warnings unless `strict`.
pub fn cmd_verify(
    rx: &ResolvedExperiment,
    config_bytes: &[u8],
    out: &Path,
    strict: bool,
) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let p = &rx.problem;
    let battery = run_battery(rx)?;
    let checks: Vec<&GapReport> =
        battery.reports.iter().filter(|r| !is_warning(r)).collect();
    let summary = VerifySummary {
        config_sha256: sha256_hex(config_bytes),
        seed: rx.seed,
        n_states: p.n_states(),
        n_actions: p.n_actions(),
        gamma: p.mdp.discount,
        regularizer: reg_name(rx),
        eta: rx.eta,
        alpha: rx.alpha,
        beta: rx.beta,
        rho_hat: rx.rho_hat,
        radius: rx.radius,
        constants: constants_out(rx),
        reference_jd: battery.reference_jd,
        reference_grad_l1: battery.reference_grad_l1,
        checks_passed: checks.iter().filter(|r| r.passed).count(),
        checks_total: checks.len(),
    };
    write_reports(out, &battery.reports)?;
    write_text(&out.join("summary.json"), &(to_pretty_json(&summary) + "\n"))?;
    finish_battery(&battery.reports, strict)
}

/// Timed run: same artifacts as solve but with real per-record timings in
/// the CSV and a throughput line on stdout. Not byte-reproducible.
pub fn cmd_bench(rx: &ResolvedExperiment, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let started = std::time::Instant::now();
    let artifacts = run_solver(rx)?;
    let elapsed = started.elapsed();
    let (csv, iterations, label) = match &artifacts {
        RunArtifacts::Exact(_, log) => {
            (log.csv_string(false), log.records.last().map(|r| r.t).unwrap_or(0), "agd")
        }
        RunArtifacts::Sampled(_, log) => {
            (log.csv_string(false), log.records.last().map(|r| r.t).unwrap_or(0), "sgd")
        }
    };
    write_text(&out.join("iterates.csv"), &csv)?;
    let per_iter = if iterations > 0 {
        elapsed.as_nanos() as f64 / iterations as f64
    } else {
        f64::NAN
    };
    println!(
        "bench: {label} {} iterations in {:.3} s ({:.0} ns/iteration)",
        iterations,
        elapsed.as_secs_f64(),
        per_iter
    );
    Ok(())
}
