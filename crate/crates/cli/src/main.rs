mod output;
mod scenario;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use exchange_qvi::economy::{check_concavity, check_growth_condition, NegUtilityGradient};
use exchange_qvi::qvi::{qvi_residuals, solve_qvi_product, solve_qvi_truncated};
use exchange_qvi::verify::{
    budget_residuals, coercivity_probe, market_clearing_residual, pseudomonotonicity_probe, walras_residual,
};
use exchange_qvi::{
    assemble_qvi, certify_equilibrium, default_caps, solve_qvi, CertParams, CertReport, Economy, Error,
    GridFunction, QviSolveReport, SetDescriptor, Verdict,
};
use serde::Serialize;

use crate::output::*;
use crate::scenario::{load_scenario, Method, Scenario};

#[derive(Parser)]
#[command(name = "exqvi", version, about = "Equilibria of time-dependent exchange economies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for an equilibrium and write report, series CSVs and a JSON ledger.
    Solve(RunArgs),
    /// Certify a candidate equilibrium read from series CSVs.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Directory holding prices.csv and allocations.csv.
        #[arg(long)]
        candidate: PathBuf,
    },
    /// Run the structural probes on the scenario.
    Probes(RunArgs),
    /// Print the scenario with every default filled in.
    EchoScenario {
        #[arg(long)]
        scenario: PathBuf,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Single-threaded, bitwise reproducible run.
    #[arg(long)]
    sequential: bool,
    /// Outer tolerance (solve) or certification tolerance (verify).
    #[arg(long)]
    tol: Option<f64>,
    /// Outer iteration budget.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Comma-separated truncation radii.
    #[arg(long, value_delimiter = ',')]
    radius_schedule: Option<Vec<f64>>,
}

struct Run {
    scn: Scenario,
    eco: Economy,
    out: PathBuf,
    parallel: bool,
    label: String,
}

impl RunArgs {
    fn load(&self, verify: bool) -> Result<Run> {
        let mut scn = load_scenario(&self.scenario)?;
        if let Some(s) = self.seed {
            scn.seed = s;
        }
        if let Some(t) = self.tol {
            if verify {
                scn.solver.cert_tol = t;
            } else {
                scn.solver.outer_tol = t;
            }
        }
        if let Some(n) = self.max_iter {
            scn.solver.outer_max_iter = n;
        }
        if let Some(r) = &self.radius_schedule {
            scn.solver.truncation_radii = r.clone();
        }
        scn.validate()?;
        let eco = scn.economy()?;
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        std::fs::write(self.out.join("scenario.toml"), scn.to_toml()?)?;
        Ok(Run { eco, scn, out: self.out.clone(), parallel: !self.sequential, label: self.scenario.display().to_string() })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => args.load(false).and_then(|r| run_solve(&r)),
        Command::Verify { run, candidate } => run.load(true).and_then(|r| run_verify(&r, &candidate)),
        Command::Probes(args) => args.load(false).and_then(|r| run_probes(&r)),
        Command::EchoScenario { scenario, out } => echo(&scenario, out.as_deref()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn echo(path: &Path, out: Option<&Path>) -> Result<bool> {
    let text = load_scenario(path)?.to_toml()?;
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(true)
}

#[derive(Serialize)]
struct SolveLedger<'a> {
    scenario: &'a str,
    method: &'static str,
    converged: bool,
    iterations: usize,
    outer_residual: f64,
    inner_residuals: &'a [f64],
    truncation_radius_used: Option<f64>,
    truncation_check: Option<&'a exchange_qvi::qvi::TruncationCheck>,
    step: f64,
    step_halvings: usize,
    caps: &'a [f64],
    clearing: Vec<f64>,
    budgets: Vec<f64>,
    walras: f64,
    seed: u64,
    parallel: bool,
    solver: &'a scenario::SolverSpec,
    notes: &'a [String],
}

fn run_solve(run: &Run) -> Result<bool> {
    let Run { scn, eco, out, parallel, .. } = run;
    let caps = default_caps(eco, scn.cap_slack)?;
    let prob = assemble_qvi(eco, &caps)?;
    let params = scn.params(*parallel);
    let radii = &scn.solver.truncation_radii;
    let mut notes = Vec::new();

    let rep = match (scn.solver.method, radii.is_empty()) {
        (Method::TwoLevel, true) => solve_qvi(&prob, &params)?,
        (Method::Product, true) => solve_qvi_product(&prob, &params)?,
        (Method::TwoLevel, false) => match solve_qvi_truncated(&prob, radii, &params) {
            Ok(r) => r,
            Err(Error::TruncationExhausted { radii, last: Some(last) }) => {
                notes.push(format!("no radius in {radii:?} gave an interior solution; last attempt reported"));
                let mut r = *last;
                r.converged = false;
                r
            }
            Err(e) => return Err(e.into()),
        },
        (Method::Product, false) => bail!("truncation radii are only supported by the two-level method"),
    };
    if !rep.converged {
        notes.push("solver did not converge; best iterate reported".into());
    }

    let clearing = market_clearing_residual(eco, &rep.allocation)?;
    let budgets = budget_residuals(eco, &rep.price, &rep.allocation)?;
    let walras = walras_residual(eco, &rep.price, &rep.allocation)?;
    let excess = prob.outer(&rep.allocation)?.scaled(-1.0);
    let res = qvi_residuals(&prob, &rep.price, &rep.allocation, params.outer_gamma)?;

    write_prices(&out.join(PRICES_CSV), &rep.price)?;
    write_allocations(&out.join(ALLOCATIONS_CSV), scn, &rep.allocation)?;
    write_excess(&out.join(EXCESS_CSV), &excess)?;
    write_json(
        &out.join("solve.json"),
        &SolveLedger {
            scenario: &run.label,
            method: rep.method,
            converged: rep.converged,
            iterations: rep.iterations,
            outer_residual: rep.outer_residual,
            inner_residuals: &rep.inner_residuals,
            truncation_radius_used: rep.truncation_radius_used,
            truncation_check: rep.truncation_check.as_ref(),
            step: rep.step,
            step_halvings: rep.step_halvings,
            caps: &caps,
            clearing: clearing.clone(),
            budgets: budgets.clone(),
            walras,
            seed: scn.seed,
            parallel: *parallel,
            solver: &scn.solver,
            notes: &notes,
        },
    )?;

    let mut text = String::new();
    let _ = writeln!(text, "exqvi solve: {}", run.label);
    let _ = writeln!(text, "method: {}", rep.method);
    let _ = writeln!(text, "converged: {}", rep.converged);
    let _ = writeln!(text, "iterations: {}", rep.iterations);
    let _ = writeln!(
        text,
        "truncation radius: {}",
        rep.truncation_radius_used.map_or("none (capped sets are bounded)".to_string(), |r| r.to_string())
    );
    let _ = writeln!(text, "caps: {caps:?}");
    echo_settings(&mut text, scn, *parallel);
    text.push_str("\nprices\n");
    table(&mut text, &rep.price);
    text.push_str("\nallocations\n");
    for (i, x) in rep.allocation.iter().enumerate() {
        let _ = writeln!(text, " {}", scn.agent_label(i));
        table(&mut text, x);
    }
    text.push_str("\nresidual ledger\n");
    write_solve_ledger(&mut text, scn, &rep, res.outer, &clearing, &budgets, walras);
    for n in &notes {
        let _ = writeln!(text, "note: {n}");
    }
    std::fs::write(out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(rep.converged)
}

fn write_solve_ledger(
    text: &mut String,
    scn: &Scenario,
    rep: &QviSolveReport,
    outer: f64,
    clearing: &[f64],
    budgets: &[f64],
    walras: f64,
) {
    let _ = writeln!(text, "  outer natural residual: {:e} (solver reported {:e})", outer, rep.outer_residual);
    for (i, r) in rep.inner_residuals.iter().enumerate() {
        let _ = writeln!(text, "  inner residual {}: {r:e}", scn.agent_label(i));
    }
    for (j, c) in clearing.iter().enumerate() {
        let _ = writeln!(text, "  clearing good{j}: {c:e}");
    }
    for (i, b) in budgets.iter().enumerate() {
        let _ = writeln!(text, "  budget {}: {b:e}", scn.agent_label(i));
    }
    let _ = writeln!(text, "  walras: {walras:e}");
}

fn verdict_word(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::VacuousPass => "vacuous pass",
        Verdict::Fail => "fail",
    }
}

fn describe(text: &mut String, title: &str, rep: &CertReport) {
    let _ = writeln!(
        text,
        "{title}: {} (tolerance {:e}, samples {}, seed {})",
        verdict_word(rep.verdict),
        rep.tolerance,
        rep.samples_used,
        rep.seed
    );
    for (k, v) in &rep.residuals {
        let _ = writeln!(text, "  {k}: {v:e}");
    }
    for n in &rep.notes {
        let _ = writeln!(text, "  note: {n}");
    }
    if let Some(w) = &rep.witness {
        let _ = writeln!(text, "  witness: {} {:?}", w.description, w.values);
    }
}

fn run_verify(run: &Run, candidate: &Path) -> Result<bool> {
    let Run { scn, eco, out, parallel, .. } = run;
    let (price, x) = read_candidate(candidate, scn)?;
    let params = CertParams {
        tol: scn.solver.cert_tol,
        samples: scn.solver.cert_samples,
        seed: scn.seed,
        parallel: *parallel,
    };
    let rep = certify_equilibrium(eco, &price, &x, &params)?;
    write_json(&out.join("certificate.json"), &rep)?;
    let mut text = String::new();
    let _ = writeln!(text, "exqvi verify: {} against {}", run.label, candidate.display());
    describe(&mut text, "equilibrium", &rep);
    std::fs::write(out.join("certificate.txt"), &text)?;
    print!("{text}");
    Ok(rep.passed())
}

fn run_probes(run: &Run) -> Result<bool> {
    let Run { scn, eco, out, .. } = run;
    let samples = scn.solver.probe_samples;
    let caps = default_caps(eco, scn.cap_slack)?;
    let grid = *eco.grid();
    let price = GridFunction::constant(grid, &vec![1.0 / eco.goods() as f64; eco.goods()])?;
    let mut reports: Vec<(String, CertReport)> = Vec::new();
    let mut notes = Vec::new();

    for (i, a) in eco.agents().iter().enumerate() {
        let label = scn.agent_label(i);
        let seed = scn.seed.wrapping_add(i as u64);
        let set = SetDescriptor::Intersection(vec![
            SetDescriptor::budget(price.clone(), a.endowment.clone())?,
            SetDescriptor::cap_box(caps.clone())?,
        ]);
        let op = NegUtilityGradient::new(a.clone());
        reports.push((format!("{label} pseudomonotonicity"), pseudomonotonicity_probe(&op, &set, &a.endowment, samples, seed)?));
        reports.push((format!("{label} concavity"), check_concavity(a, samples, seed)?));
        reports.push((format!("{label} growth"), check_growth_condition(a, samples, seed)?));
    }

    match assemble_qvi(eco, &caps) {
        Ok(prob) => {
            // Above the cap-box bound no feasible point is far, so the check
            // is vacuous unless a smaller radius is requested.
            let radius = scn
                .solver
                .truncation_radii
                .first()
                .copied()
                .unwrap_or_else(|| eco.allocation_norm_bound(&caps) * (1.0 + 1e-9));
            reports.push(("coercivity".into(), coercivity_probe(&prob, &price, radius, samples, scn.seed)?));
        }
        Err(e) => notes.push(format!("coercivity not probed: {e}")),
    }

    #[derive(Serialize)]
    struct Entry<'a> {
        probe: &'a str,
        #[serde(flatten)]
        report: &'a CertReport,
    }
    let entries: Vec<Entry> = reports.iter().map(|(p, r)| Entry { probe: p, report: r }).collect();
    write_json(&out.join("probes.json"), &entries)?;

    let mut text = String::new();
    let _ = writeln!(text, "exqvi probes: {}", run.label);
    for (title, rep) in &reports {
        describe(&mut text, title, rep);
    }
    for n in &notes {
        let _ = writeln!(text, "note: {n}");
    }
    let all = reports.iter().all(|(_, r)| r.passed());
    let _ = writeln!(text, "overall: {}", if all { "pass" } else { "fail" });
    std::fs::write(out.join("probes.txt"), &text)?;
    print!("{text}");
    Ok(all)
}
