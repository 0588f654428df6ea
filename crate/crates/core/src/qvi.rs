//! Special-structure QVI: find a price `d̃ ∈ D` and allocation `x̃ ∈ K(d̃)`
//! with `⟨f(x̃), d − d̃⟩ ≥ 0` on `D` and `⟨F(x̃), z − x̃⟩ ≥ 0` on `K(d̃)`.
//!
//! [`solve_qvi`] runs a projected price iteration on `H = f ∘ Γ`, where
//! `Γ(d)` solves every agent's inner VI on `K_i(d)`. [`solve_qvi_product`]
//! instead treats `(d, x)` as one variable and is kept as a cross-check.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sets::{membership_residual, project, sample_near, SetDescriptor};
use crate::timegrid::{GridFunction, TimeGrid};
use crate::vi::{evaluate, natural_residual, solve_vi_extragradient, Operator, SolveReport, ViParams};

pub type ConstraintMap = Arc<dyn Fn(&GridFunction) -> Result<Vec<SetDescriptor>> + Send + Sync>;
pub type OuterMap = Arc<dyn Fn(&[GridFunction]) -> Result<GridFunction> + Send + Sync>;

/// Feasibility slack for a price handed to [`gamma_map`].
const PRICE_MEMBERSHIP_TOL: f64 = 1e-9;
/// Guard band of the truncation interiority test.
const INTERIOR_GUARD: f64 = 1e-9;

#[derive(Clone)]
pub struct QviProblem {
    grid: TimeGrid,
    price_components: usize,
    price_set: SetDescriptor,
    constraint_map: ConstraintMap,
    operators: Vec<Arc<dyn Operator>>,
    outer_map: OuterMap,
    warm_start: Vec<GridFunction>,
    truncation: Option<f64>,
}

impl fmt::Debug for QviProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QviProblem")
            .field("cells", &self.grid.cells())
            .field("price_components", &self.price_components)
            .field("price_set", &self.price_set)
            .field("agents", &self.operators.len())
            .field("truncation", &self.truncation)
            .finish()
    }
}

impl QviProblem {
    /// Checks shapes and probes that every warm start lies in its constraint
    /// set at the centre of the price set.
    pub fn new(
        grid: TimeGrid,
        price_components: usize,
        price_set: SetDescriptor,
        constraint_map: ConstraintMap,
        operators: Vec<Arc<dyn Operator>>,
        outer_map: OuterMap,
        warm_start: Vec<GridFunction>,
    ) -> Result<Self> {
        if operators.is_empty() || operators.len() != warm_start.len() {
            return Err(Error::shape(format!(
                "{} operators for {} warm starts",
                operators.len(),
                warm_start.len()
            )));
        }
        if let Some(w) = warm_start.iter().find(|w| *w.grid() != grid) {
            return Err(Error::shape(format!("warm start on {} cells, problem on {}", w.cells(), grid.cells())));
        }
        let prob = QviProblem {
            grid,
            price_components,
            price_set,
            constraint_map,
            operators,
            outer_map,
            warm_start,
            truncation: None,
        };
        let centre = prob.default_price()?;
        let sets = prob.constraint_sets(&centre)?;
        if sets.len() != prob.agents() {
            return Err(Error::shape(format!("constraint map returned {} sets for {} agents", sets.len(), prob.agents())));
        }
        for (i, (w, set)) in prob.warm_start.iter().zip(&sets).enumerate() {
            let v = membership_residual(w, set)?;
            if v > PRICE_MEMBERSHIP_TOL {
                return Err(Error::DegenerateSet(format!("warm start of agent {i} violates its constraint set by {v:e}")));
            }
        }
        let h = (prob.outer_map)(&prob.warm_start)?;
        if h.grid() != &grid || h.components() != price_components {
            return Err(Error::shape("outer map does not return a price-space function"));
        }
        Ok(prob)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn price_components(&self) -> usize {
        self.price_components
    }

    pub fn price_set(&self) -> &SetDescriptor {
        &self.price_set
    }

    pub fn agents(&self) -> usize {
        self.operators.len()
    }

    pub fn operators(&self) -> &[Arc<dyn Operator>] {
        &self.operators
    }

    pub fn warm_start(&self) -> &[GridFunction] {
        &self.warm_start
    }

    pub fn truncation(&self) -> Option<f64> {
        self.truncation
    }

    /// `(K_i(d))_i`, intersected with `B̄(0, r)` when truncated.
    pub fn constraint_sets(&self, price: &GridFunction) -> Result<Vec<SetDescriptor>> {
        let sets = (self.constraint_map)(price)?;
        match self.truncation {
            None => Ok(sets),
            Some(r) => sets
                .into_iter()
                .map(|s| SetDescriptor::intersection(vec![s, SetDescriptor::ball(r)?]))
                .collect(),
        }
    }

    pub fn outer(&self, allocation: &[GridFunction]) -> Result<GridFunction> {
        if allocation.len() != self.agents() {
            return Err(Error::shape(format!("{} allocations for {} agents", allocation.len(), self.agents())));
        }
        (self.outer_map)(allocation)
    }

    /// Same problem with every agent's set intersected with `B̄(0, r)`.
    pub fn truncated(&self, radius: f64) -> Result<Self> {
        SetDescriptor::ball(radius)?;
        let mut p = self.clone();
        p.truncation = Some(radius);
        Ok(p)
    }

    /// The same problem without truncation.
    pub fn untruncated(&self) -> Self {
        let mut p = self.clone();
        p.truncation = None;
        p
    }

    /// Projection of the constant `1/m` curve onto the price set.
    pub fn default_price(&self) -> Result<GridFunction> {
        let m = self.price_components as f64;
        let uniform = GridFunction::constant(self.grid, &vec![1.0 / m; self.price_components])?;
        project(&uniform, &self.price_set)
    }

    fn check_price(&self, price: &GridFunction) -> Result<()> {
        if price.grid() != &self.grid || price.components() != self.price_components {
            return Err(Error::shape("price curve does not match the problem"));
        }
        let v = membership_residual(price, &self.price_set)?;
        if v > PRICE_MEMBERSHIP_TOL {
            return Err(Error::Precondition(format!("price violates the price set by {v:e}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QviParams {
    pub inner: ViParams,
    /// Initial tâtonnement step `σ`.
    pub outer_step: f64,
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    /// Gauge of the outer natural-map residual.
    pub outer_gamma: f64,
    /// Outer iterations without a 1% improvement before `σ` is halved.
    pub oscillation_window: usize,
    /// `σ` stays above `outer_step / 2^max_step_halvings`.
    pub max_step_halvings: usize,
    /// Solve the inner VIs concurrently.
    pub parallel: bool,
    /// Start each outer iteration's inner solves from the previous
    /// allocation instead of the endowments.
    pub inner_warm_start: bool,
    /// Starting price; the centre of the price set when `None`.
    pub initial_price: Option<GridFunction>,
    /// Initial step of the product-space extragradient (1 when `None`).
    pub product_step: Option<f64>,
    pub product_max_iter: usize,
    /// Relative step of the price block in the product-space iteration;
    /// halved when the iteration stalls for `20 · oscillation_window` steps.
    pub product_price_scale: f64,
}

impl Default for QviParams {
    fn default() -> Self {
        QviParams {
            inner: ViParams::default(),
            outer_step: 0.5,
            outer_tol: 1e-7,
            outer_max_iter: 2_000,
            outer_gamma: 1.0,
            oscillation_window: 25,
            max_step_halvings: 12,
            parallel: true,
            inner_warm_start: true,
            initial_price: None,
            product_step: None,
            product_max_iter: 50_000,
            product_price_scale: 0.03,
        }
    }
}

/// Result of the sampled untruncated check after a truncated solve.
#[derive(Debug, Clone, Serialize)]
pub struct TruncationCheck {
    pub radius: f64,
    pub samples: usize,
    pub samples_outside_ball: usize,
    /// Smallest `⟨F(x̃), z − x̃⟩` over the samples `z ∈ K(d̃)`.
    pub worst_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QviSolveReport {
    pub method: &'static str,
    pub price: GridFunction,
    pub allocation: Vec<GridFunction>,
    pub inner_reports: Vec<SolveReport>,
    pub outer_residual: f64,
    pub inner_residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub truncation_radius_used: Option<f64>,
    pub truncation_check: Option<TruncationCheck>,
    /// Final tâtonnement step, or the product-space step.
    pub step: f64,
    pub step_halvings: usize,
    /// Outer residual per accepted iterate.
    pub history: Vec<f64>,
}

impl QviSolveReport {
    pub fn max_inner_residual(&self) -> f64 {
        self.inner_residuals.iter().cloned().fold(0.0, f64::max)
    }

    pub fn allocation_norm(&self) -> f64 {
        stacked_norm(&self.allocation)
    }
}

pub(crate) fn stacked_norm(x: &[GridFunction]) -> f64 {
    x.iter().map(|xi| xi.dot(xi)).sum::<f64>().sqrt()
}

fn solve_agents(
    prob: &QviProblem,
    sets: &[SetDescriptor],
    starts: &[GridFunction],
    params: &QviParams,
) -> Result<Vec<SolveReport>> {
    let solve = |i: usize| solve_vi_extragradient(prob.operators[i].as_ref(), &sets[i], &starts[i], &params.inner);
    let reports: Vec<SolveReport> = if params.parallel {
        (0..prob.agents()).into_par_iter().map(solve).collect::<Result<_>>()?
    } else {
        (0..prob.agents()).map(solve).collect::<Result<_>>()?
    };
    let failing: Vec<usize> = reports.iter().enumerate().filter(|(_, r)| !r.converged).map(|(i, _)| i).collect();
    if !failing.is_empty() {
        return Err(Error::GammaEvaluation {
            failing_agents: failing,
            residuals: reports.iter().map(|r| r.final_residual).collect(),
        });
    }
    Ok(reports)
}

/// Per-agent inner solves at `price`, warm-started from the problem's
/// fixed starting allocations.
pub fn gamma_reports(price: &GridFunction, prob: &QviProblem, params: &QviParams) -> Result<Vec<SolveReport>> {
    prob.check_price(price)?;
    let sets = prob.constraint_sets(price)?;
    solve_agents(prob, &sets, &prob.warm_start, params)
}

/// One element of `Γ(d) = S(F, K(d))`.
pub fn gamma_map(price: &GridFunction, prob: &QviProblem, params: &QviParams) -> Result<Vec<GridFunction>> {
    Ok(gamma_reports(price, prob, params)?.into_iter().map(|r| r.solution).collect())
}

/// `H(d) = f(Γ(d))`.
pub fn eval_outer_map(price: &GridFunction, prob: &QviProblem, params: &QviParams) -> Result<GridFunction> {
    prob.outer(&gamma_map(price, prob, params)?)
}

/// Natural-map residuals of a candidate pair, recomputed from scratch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QviResiduals {
    pub outer: f64,
    pub inner: Vec<f64>,
}

impl QviResiduals {
    pub fn max_inner(&self) -> f64 {
        self.inner.iter().cloned().fold(0.0, f64::max)
    }
}

/// `‖d − P_D(d − γ f(x))‖` and `‖x_i − P_{K_i(d)}(x_i − γ F_i(x_i))‖`.
pub fn qvi_residuals(prob: &QviProblem, price: &GridFunction, allocation: &[GridFunction], gamma: f64) -> Result<QviResiduals> {
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("residual gauge must be positive, got {gamma}")));
    }
    let h = prob.outer(allocation)?;
    price.check_shape(&h)?;
    let outer = natural_residual(price, &h, &prob.price_set, gamma)?;
    let sets = prob.constraint_sets(price)?;
    let inner = prob
        .operators
        .iter()
        .zip(allocation)
        .zip(&sets)
        .map(|((op, xi), set)| natural_residual(xi, &evaluate(op.as_ref(), xi)?, set, gamma))
        .collect::<Result<Vec<_>>>()?;
    Ok(QviResiduals { outer, inner })
}

struct Iterate {
    price: GridFunction,
    reports: Vec<SolveReport>,
    residual: f64,
    h: GridFunction,
}

fn evaluate_iterate(
    prob: &QviProblem,
    price: GridFunction,
    starts: Option<&[GridFunction]>,
    params: &QviParams,
) -> Result<Iterate> {
    prob.check_price(&price)?;
    let sets = prob.constraint_sets(&price)?;
    let reports = solve_agents(prob, &sets, starts.unwrap_or(&prob.warm_start), params)?;
    let x: Vec<GridFunction> = reports.iter().map(|r| r.solution.clone()).collect();
    let h = prob.outer(&x)?;
    let residual = natural_residual(&price, &h, &prob.price_set, params.outer_gamma)?;
    Ok(Iterate { price, reports, residual, h })
}

fn initial_price(prob: &QviProblem, params: &QviParams) -> Result<GridFunction> {
    match &params.initial_price {
        Some(p) => {
            if p.grid() != prob.grid() || p.components() != prob.price_components {
                return Err(Error::shape("initial price does not match the problem"));
            }
            project(p, &prob.price_set)
        }
        None => prob.default_price(),
    }
}

fn check_params(params: &QviParams) -> Result<()> {
    if !(params.outer_step > 0.0 && params.outer_tol > 0.0 && params.outer_gamma > 0.0) {
        return Err(Error::invalid("outer step, tolerance and gauge must be positive"));
    }
    if params.oscillation_window == 0 {
        return Err(Error::invalid("oscillation window must be positive"));
    }
    Ok(())
}

/// Two-level solve: `d ← P_D(d − σ H(d))` with `Γ` evaluated by inner
/// extragradient solves.
///
/// A trial step that increases the residual is rejected and `σ` halved;
/// `σ` is also halved after `oscillation_window` accepted iterations
/// without a 1% improvement, and grows back by 1.5 (never above
/// `outer_step`) after three consecutive improvements. `σ` never drops
/// below `outer_step / 2^max_step_halvings`. When the budget runs out, the
/// best iterate is returned with `converged = false`.
pub fn solve_qvi(prob: &QviProblem, params: &QviParams) -> Result<QviSolveReport> {
    check_params(params)?;
    let sigma_max = params.outer_step;
    let sigma_min = sigma_max * 0.5f64.powi(params.max_step_halvings as i32);
    let mut sigma = sigma_max;
    let mut current = evaluate_iterate(prob, initial_price(prob, params)?, None, params)?;
    let mut history = vec![current.residual];
    let mut best_residual = current.residual;
    let mut best_index = 0usize;
    let mut best: Option<Iterate> = None;
    let mut halvings = 0usize;
    let mut stall = 0usize;
    let mut streak = 0usize;
    let mut window_best = current.residual;
    let mut iterations = 0usize;

    while current.residual > params.outer_tol && iterations < params.outer_max_iter {
        iterations += 1;
        let trial_price = project(&current.price.plus_scaled(-sigma, &current.h), &prob.price_set)?;
        let trial = if params.inner_warm_start {
            let starts: Vec<GridFunction> = current.reports.iter().map(|r| r.solution.clone()).collect();
            evaluate_iterate(prob, trial_price, Some(&starts), params)?
        } else {
            evaluate_iterate(prob, trial_price, None, params)?
        };
        if trial.residual > current.residual && sigma > sigma_min {
            sigma = (0.5 * sigma).max(sigma_min);
            halvings += 1;
            streak = 0;
            continue;
        }
        let improved = trial.residual < current.residual;
        let previous = std::mem::replace(&mut current, trial);
        history.push(current.residual);
        if current.residual < best_residual {
            best_residual = current.residual;
            best_index = history.len() - 1;
            best = None;
        } else if best_index == history.len() - 2 {
            best = Some(previous);
        }
        streak = if improved { streak + 1 } else { 0 };
        if streak >= 3 {
            sigma = (1.5 * sigma).min(sigma_max);
            streak = 0;
        }
        if current.residual < 0.99 * window_best {
            window_best = current.residual;
            stall = 0;
        } else {
            stall += 1;
            if stall >= params.oscillation_window && sigma > sigma_min {
                sigma = (0.5 * sigma).max(sigma_min);
                halvings += 1;
                stall = 0;
                window_best = current.residual;
            }
        }
    }

    let converged = current.residual <= params.outer_tol;
    let chosen = match best {
        Some(b) if !converged => b,
        _ => current,
    };
    Ok(two_level_report(prob, chosen, converged, iterations, sigma, halvings, history))
}

fn two_level_report(
    prob: &QviProblem,
    it: Iterate,
    converged: bool,
    iterations: usize,
    step: f64,
    step_halvings: usize,
    history: Vec<f64>,
) -> QviSolveReport {
    let inner_residuals: Vec<f64> = it.reports.iter().map(|r| r.final_residual).collect();
    let inner_ok = it.reports.iter().all(|r| r.converged);
    QviSolveReport {
        method: "two_level",
        allocation: it.reports.iter().map(|r| r.solution.clone()).collect(),
        price: it.price,
        inner_reports: it.reports,
        outer_residual: it.residual,
        inner_residuals,
        iterations,
        converged: converged && inner_ok,
        truncation_radius_used: prob.truncation,
        truncation_check: None,
        step,
        step_halvings,
        history,
    }
}

/// `true` iff the stacked allocation norm is below `r − 1e-9`.
pub fn check_truncation_interior(report: &QviSolveReport, radius: f64) -> bool {
    report.allocation_norm() < radius - INTERIOR_GUARD
}

/// `r_k = 2^k (1 + Σ_j caps_j)` for `k < len`.
pub fn default_radius_schedule(caps: &[f64], len: usize) -> Vec<f64> {
    let base = 1.0 + caps.iter().sum::<f64>();
    (0..len).map(|k| base * 2f64.powi(k as i32)).collect()
}

/// Solves on `K(d) ∩ B̄(0, r)` for each radius in turn and returns the first
/// solution that is interior to its ball, re-checked on the untruncated
/// sets.
pub fn solve_qvi_truncated(prob: &QviProblem, radii: &[f64], params: &QviParams) -> Result<QviSolveReport> {
    if radii.is_empty() {
        return Err(Error::invalid("empty radius schedule"));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) || !(radii[0] > 0.0) {
        return Err(Error::invalid("radii must be positive and strictly increasing"));
    }
    let base = prob.untruncated();
    let mut last = None;
    for &r in radii {
        let truncated = base.truncated(r)?;
        let report = match solve_qvi(&truncated, params) {
            Ok(rep) => rep,
            Err(Error::GammaEvaluation { .. }) => continue,
            Err(e) => return Err(e),
        };
        if report.converged && check_truncation_interior(&report, r) {
            return recheck_untruncated(&base, report, r, params);
        }
        last = Some(Box::new(report));
    }
    Err(Error::TruncationExhausted { radii: radii.to_vec(), last })
}

fn recheck_untruncated(prob: &QviProblem, mut report: QviSolveReport, radius: f64, params: &QviParams) -> Result<QviSolveReport> {
    let res = qvi_residuals(prob, &report.price, &report.allocation, params.outer_gamma)?;
    let sets = prob.constraint_sets(&report.price)?;
    let fx: Vec<GridFunction> = prob
        .operators
        .iter()
        .zip(&report.allocation)
        .map(|(op, xi)| evaluate(op.as_ref(), xi))
        .collect::<Result<_>>()?;

    // Far samples of K(d̃), several multiples of the radius out.
    let samples = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(params.inner.seed);
    let mut outside = 0usize;
    let mut worst = f64::INFINITY;
    for s in 0..samples {
        let spread = radius * [0.5, 2.0, 8.0, 32.0][s % 4];
        let z: Vec<GridFunction> = sets
            .iter()
            .zip(&report.allocation)
            .map(|(set, xi)| sample_near(set, xi, spread, &mut rng))
            .collect::<Result<_>>()?;
        if stacked_norm(&z) > radius {
            outside += 1;
        }
        let gap: f64 = fx
            .iter()
            .zip(z.iter().zip(&report.allocation))
            .map(|(f, (zi, xi))| f.dot(&zi.plus_scaled(-1.0, xi)))
            .sum();
        worst = worst.min(gap);
    }

    report.outer_residual = res.outer;
    report.converged = report.converged
        && res.outer <= params.outer_tol
        && res.inner.iter().all(|&r| r <= params.inner.tol.max(1e-9));
    report.inner_residuals = res.inner;
    report.truncation_radius_used = Some(radius);
    report.truncation_check = Some(TruncationCheck {
        radius,
        samples,
        samples_outside_ball: outside,
        worst_gap: worst,
    });
    Ok(report)
}

/// Extragradient on the product variable `(d, x)` with operator
/// `(f(x), F(x))`; each iteration projects the allocation block onto
/// `K(d)` at the iteration's current price. The price block moves with the
/// step scaled by `product_price_scale`, so allocations track their best
/// responses while prices adjust.
///
/// Converges when the outer residual is within `outer_tol` and every inner
/// residual within `inner.tol`. Moving-set contraction is not guaranteed,
/// so failure is reported as `converged = false`.
pub fn solve_qvi_product(prob: &QviProblem, params: &QviParams) -> Result<QviSolveReport> {
    check_params(params)?;
    let n = prob.agents();
    let mut d = initial_price(prob, params)?;
    let sets0 = prob.constraint_sets(&d)?;
    let mut x: Vec<GridFunction> = prob
        .warm_start
        .iter()
        .zip(&sets0)
        .map(|(w, s)| project(w, s))
        .collect::<Result<_>>()?;

    let op_all = |x: &[GridFunction]| -> Result<(GridFunction, Vec<GridFunction>)> {
        let h = prob.outer(x)?;
        let fx = prob
            .operators
            .iter()
            .zip(x)
            .map(|(op, xi)| evaluate(op.as_ref(), xi))
            .collect::<Result<Vec<_>>>()?;
        Ok((h, fx))
    };
    let dist = |d1: &GridFunction, x1: &[GridFunction], d2: &GridFunction, x2: &[GridFunction]| -> f64 {
        let s: f64 = x1.iter().zip(x2).map(|(a, b)| {
            let r = a.distance(b);
            r * r
        }).sum();
        (d1.distance(d2).powi(2) + s).sqrt()
    };
    let op_dist = |a: &(GridFunction, Vec<GridFunction>), b: &(GridFunction, Vec<GridFunction>)| dist(&a.0, &a.1, &b.0, &b.1);

    let mut step = match params.product_step {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::invalid(format!("product step must be positive, got {s}"))),
        None => 1.0,
    };
    let mut history = Vec::new();
    let mut best: Option<(f64, GridFunction, Vec<GridFunction>, QviResiduals)> = None;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut final_iterate = None;
    let mut kappa = params.product_price_scale;
    let mut halvings = 0usize;
    let mut stall = 0usize;
    let mut window_best = f64::INFINITY;
    let stall_window = 20 * params.oscillation_window;

    for iter in 0..=params.product_max_iter {
        iterations = iter;
        let sets = prob.constraint_sets(&d)?;
        let t = op_all(&x)?;
        let outer = natural_residual(&d, &t.0, &prob.price_set, params.outer_gamma)?;
        let inner = x
            .iter()
            .zip(&t.1)
            .zip(&sets)
            .map(|((xi, fi), set)| natural_residual(xi, fi, set, params.outer_gamma))
            .collect::<Result<Vec<_>>>()?;
        let res = QviResiduals { outer, inner };
        let merit = res.outer.max(res.max_inner());
        history.push(merit);
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, d.clone(), x.clone(), res.clone()));
        }
        if res.outer <= params.outer_tol && res.max_inner() <= params.inner.tol {
            converged = true;
            final_iterate = Some((merit, d, x, res));
            break;
        }
        if iter == params.product_max_iter || !merit.is_finite() {
            break;
        }
        if merit < 0.99 * window_best {
            window_best = merit;
            stall = 0;
        } else {
            stall += 1;
            if stall >= stall_window && halvings < params.max_step_halvings {
                kappa *= 0.5;
                halvings += 1;
                stall = 0;
                window_best = merit;
            }
        }

        let ty = loop {
            let yd = project(&d.plus_scaled(-step * kappa, &t.0), &prob.price_set)?;
            let yx = x
                .iter()
                .zip(&t.1)
                .zip(&sets)
                .map(|((xi, fi), set)| project(&xi.plus_scaled(-step, fi), set))
                .collect::<Result<Vec<_>>>()?;
            let ty = op_all(&yx)?;
            let dz = dist(&d, &x, &yd, &yx);
            let dt = op_dist(&t, &ty);
            if step * dt <= 0.95 * dz || dz == 0.0 {
                break ty;
            }
            step = 0.9 * dz / dt;
        };
        d = project(&d.plus_scaled(-step * kappa, &ty.0), &prob.price_set)?;
        x = x
            .iter()
            .zip(&ty.1)
            .zip(&sets)
            .map(|((xi, fi), set)| project(&xi.plus_scaled(-step, fi), set))
            .collect::<Result<Vec<_>>>()?;
    }

    let (_, d, x, res) = match final_iterate {
        Some(f) => f,
        None => best.expect("at least one iterate"),
    };
    let inner_reports = x
        .iter()
        .zip(&res.inner)
        .map(|(xi, &r)| SolveReport {
            solution: xi.clone(),
            iterations,
            final_residual: r,
            residual_history: Vec::new(),
            converged: r <= params.inner.tol,
            step,
            halvings: 0,
        })
        .collect();
    debug_assert_eq!(x.len(), n);
    Ok(QviSolveReport {
        method: "product",
        price: d,
        allocation: x,
        inner_reports,
        outer_residual: res.outer,
        inner_residuals: res.inner,
        iterations,
        converged,
        truncation_radius_used: prob.truncation,
        truncation_check: None,
        step,
        step_halvings: halvings,
        history,
    })
}
