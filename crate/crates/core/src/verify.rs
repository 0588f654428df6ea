//! Certification of candidate equilibria and sampled probes of the
//! structural hypotheses (pseudomonotonicity, coercivity).
//!
//! A candidate `(p̄, x̄)` is a dynamic competitive equilibrium when every
//! `x̄_i` is affordable and utility-maximising over the *full* budget set
//! `M_i(p̄)` and every market clears in time-integral. Optimality is
//! certified by the natural-map residual on `M_i(p̄)` together with a
//! sampled utility comparison; no finite procedure proves the claim
//! exactly, so verdicts are always tolerance-parameterised and every raw
//! residual is reported.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::economy::{utility_gradient, utility_value, Economy};
use crate::error::{Error, Result};
use crate::qvi::{stacked_norm, QviProblem};
use crate::sets::{full_budget_set, membership_residual, project, sample_near, SetDescriptor};
use crate::timegrid::GridFunction;
use crate::vi::{evaluate, natural_residual, Operator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    /// Nothing to check (e.g. no sample fell outside the coercivity radius).
    VacuousPass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub description: String,
    pub values: Vec<f64>,
}

impl Witness {
    pub fn new(description: impl Into<String>, values: Vec<f64>) -> Self {
        Witness { description: description.into(), values }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertReport {
    pub name: String,
    pub verdict: Verdict,
    pub residuals: BTreeMap<String, f64>,
    pub witness: Option<Witness>,
    pub tolerance: f64,
    pub samples_used: usize,
    pub seed: u64,
    pub notes: Vec<String>,
}

impl CertReport {
    pub fn new(name: impl Into<String>, tolerance: f64, samples_used: usize, seed: u64) -> Self {
        CertReport {
            name: name.into(),
            verdict: Verdict::Pass,
            residuals: BTreeMap::new(),
            witness: None,
            tolerance,
            samples_used,
            seed,
            notes: Vec::new(),
        }
    }

    /// `true` for pass and vacuous pass.
    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }

    pub(crate) fn fail_with(&mut self, witness: Option<Witness>) {
        self.verdict = Verdict::Fail;
        if witness.is_some() {
            self.witness = witness;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertParams {
    pub tol: f64,
    pub samples: usize,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for CertParams {
    fn default() -> Self {
        CertParams { tol: 1e-6, samples: 200, seed: 0, parallel: true }
    }
}

/// Allowed sampled utility improvement over the candidate.
pub const UTILITY_SLACK: f64 = 1e-8;

fn check_allocation(eco: &Economy, x: &[GridFunction]) -> Result<()> {
    if x.len() != eco.agents().len() {
        return Err(Error::shape(format!(
            "{} allocations for {} agents",
            x.len(),
            eco.agents().len()
        )));
    }
    for (xi, a) in x.iter().zip(eco.agents()) {
        xi.check_shape(&a.endowment)?;
    }
    Ok(())
}

/// `∫₀ᵀ Σ_i (x_i^j − e_i^j) dt` per good; clearing requires `≤ 0`.
pub fn market_clearing_residual(eco: &Economy, x: &[GridFunction]) -> Result<Vec<f64>> {
    check_allocation(eco, x)?;
    let mut out = vec![0.0; eco.goods()];
    for (xi, a) in x.iter().zip(eco.agents()) {
        for (j, o) in out.iter_mut().enumerate() {
            *o += xi.integral(j) - a.endowment.integral(j);
        }
    }
    Ok(out)
}

/// `⟨⟨p, x_i − e_i⟩⟩` per agent; affordability requires `≤ 0`.
pub fn budget_residuals(eco: &Economy, price: &GridFunction, x: &[GridFunction]) -> Result<Vec<f64>> {
    check_allocation(eco, x)?;
    let mut out = Vec::with_capacity(x.len());
    for (xi, a) in x.iter().zip(eco.agents()) {
        price.check_shape(xi)?;
        out.push(price.dot(xi) - price.dot(&a.endowment));
    }
    Ok(out)
}

/// `Σ_i ⟨⟨p, x_i − e_i⟩⟩`, reported with its sign.
pub fn walras_residual(eco: &Economy, price: &GridFunction, x: &[GridFunction]) -> Result<f64> {
    Ok(budget_residuals(eco, price, x)?.iter().sum())
}

#[derive(Debug, Clone, Serialize)]
pub struct BestResponse {
    /// `‖x_i − P_{M_i(p)}(x_i + ∇u_i(x_i))‖`.
    pub residual: f64,
    /// Largest `U_i(y) − U_i(x_i)` over sampled affordable `y`.
    pub utility_gain: f64,
    pub witness: Option<GridFunction>,
    pub samples: usize,
}

/// Optimality of `x_i` for agent `i` over the full budget set `M_i(p)`,
/// not the truncated one used while solving.
pub fn best_response_residual(
    eco: &Economy,
    price: &GridFunction,
    xi: &GridFunction,
    agent: usize,
    samples: usize,
    seed: u64,
) -> Result<BestResponse> {
    let a = eco
        .agents()
        .get(agent)
        .ok_or_else(|| Error::invalid(format!("agent {agent} out of range")))?;
    xi.check_shape(&a.endowment)?;
    let set = full_budget_set(price, &a.endowment)?;
    let viol = membership_residual(xi, &set)?;
    if viol > 1e-9 {
        return Err(Error::Precondition(format!(
            "allocation of agent {agent} violates its budget set by {viol:e}"
        )));
    }
    let neg_grad = utility_gradient(a, xi)?.scaled(-1.0);
    let residual = natural_residual(xi, &neg_grad, &set, 1.0)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = xi.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let radii = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];
    let u0 = utility_value(a, xi)?;
    let mut best_gain = f64::NEG_INFINITY;
    let mut witness = None;
    for s in 0..samples {
        let y = sample_near(&set, xi, base * radii[s % radii.len()], &mut rng)?;
        let gain = utility_value(a, &y)? - u0;
        if gain > best_gain {
            best_gain = gain;
            witness = Some(y);
        }
    }
    if samples == 0 {
        best_gain = 0.0;
    }
    Ok(BestResponse { residual, utility_gain: best_gain, witness, samples })
}

/// Full equilibrium check: price membership, affordability, optimality on
/// `M_i(p)`, and market clearing. Walras' law is recorded but never decides
/// the verdict, since satiated agents may leave budget slack.
pub fn certify_equilibrium(
    eco: &Economy,
    price: &GridFunction,
    x: &[GridFunction],
    params: &CertParams,
) -> Result<CertReport> {
    check_allocation(eco, x)?;
    price.check_shape(&x[0])?;
    let tol = params.tol;
    let mut rep = CertReport::new("equilibrium", tol, params.samples * x.len(), params.seed);

    let price_viol = membership_residual(price, &SetDescriptor::PointwiseSimplex)?;
    rep.residuals.insert("price_simplex".into(), price_viol);
    if price_viol > tol {
        rep.fail_with(Some(Witness::new("price curve outside the simplex", price.values().to_vec())));
        rep.notes.push("price curve is not in the discretised price set".into());
    }

    let budgets = budget_residuals(eco, price, x)?;
    for (i, (b, xi)) in budgets.iter().zip(x).enumerate() {
        let neg = xi.values().iter().fold(0.0f64, |m, &v| m.max(-v));
        rep.residuals.insert(format!("budget[{i}]"), *b);
        rep.residuals.insert(format!("negativity[{i}]"), neg);
        if *b > tol || neg > tol {
            rep.fail_with(Some(Witness::new(format!("allocation of agent {i} is unaffordable"), xi.values().to_vec())));
            rep.notes.push(format!("agent {i} violates the budget set"));
        }
    }

    let run = |i: usize| best_response_residual(eco, price, &x[i], i, params.samples, params.seed.wrapping_add(i as u64));
    let responses: Vec<Result<BestResponse>> = if params.parallel {
        (0..x.len()).into_par_iter().map(run).collect()
    } else {
        (0..x.len()).map(run).collect()
    };
    for (i, r) in responses.into_iter().enumerate() {
        match r {
            Ok(br) => {
                rep.residuals.insert(format!("best_response[{i}]"), br.residual);
                rep.residuals.insert(format!("utility_gain[{i}]"), br.utility_gain);
                if br.residual > tol || br.utility_gain > UTILITY_SLACK {
                    rep.notes.push(format!("agent {i} is not optimising on its budget set"));
                    rep.fail_with(br.witness.map(|w| {
                        Witness::new(format!("affordable bundle improving on agent {i}"), w.into_values())
                    }));
                }
            }
            Err(Error::Precondition(msg)) => {
                rep.residuals.insert(format!("best_response[{i}]"), f64::INFINITY);
                rep.notes.push(msg);
                rep.verdict = Verdict::Fail;
            }
            Err(e) => return Err(e),
        }
    }

    let clearing = market_clearing_residual(eco, x)?;
    for (j, c) in clearing.iter().enumerate() {
        rep.residuals.insert(format!("clearing[{j}]"), *c);
        if *c > tol {
            rep.notes.push(format!("market for good {j} is over-demanded by {c:e}"));
            rep.verdict = Verdict::Fail;
        }
    }
    rep.residuals.insert("walras".into(), budgets.iter().sum());
    Ok(rep)
}

/// Sampled coercivity check: every sampled `x ∈ K(d)` with `‖x‖ > r_d`
/// must admit a sampled `y ∈ K(d)` with `‖y‖ < ‖x‖` and
/// `⟨⟨F(x), x − y⟩⟩ ≥ 0`.
pub fn coercivity_probe(
    prob: &QviProblem,
    price: &GridFunction,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<CertReport> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("coercivity radius must be positive, got {radius}")));
    }
    let sets = prob.constraint_sets(price)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = CertReport::new("coercivity", 0.0, samples, seed);
    let clouds = [0.1, 1.0, 10.0, 100.0];
    let mut outside = 0usize;
    let mut worst_margin = f64::INFINITY;

    for s in 0..samples {
        let spread = clouds[s % clouds.len()] * (1.0 + radius);
        let x: Vec<GridFunction> = sets
            .iter()
            .zip(prob.warm_start())
            .map(|(set, c)| sample_near(set, c, spread * rng.random::<f64>(), &mut rng))
            .collect::<Result<_>>()?;
        let norm_x = stacked_norm(&x);
        if norm_x <= radius {
            continue;
        }
        outside += 1;
        let fx: Vec<GridFunction> = prob
            .operators()
            .iter()
            .zip(&x)
            .map(|(op, xi)| evaluate(op.as_ref(), xi))
            .collect::<Result<_>>()?;

        let mut candidates: Vec<Vec<GridFunction>> = Vec::new();
        for t in [0.999, 0.99, 0.9, 0.5, 0.1, 0.0] {
            candidates.push(x.iter().map(|xi| xi.scaled(t)).collect());
        }
        for eps in [1e-3, 1e-2, 1e-1, 1.0] {
            candidates.push(x.iter().zip(&fx).map(|(xi, f)| xi.plus_scaled(-eps, f)).collect());
        }
        let mut found = f64::NEG_INFINITY;
        for cand in candidates {
            let y: Vec<GridFunction> = cand
                .iter()
                .zip(&sets)
                .map(|(c, set)| project(c, set))
                .collect::<Result<_>>()?;
            if stacked_norm(&y) >= norm_x {
                continue;
            }
            let v: f64 = fx.iter().zip(x.iter().zip(&y)).map(|(f, (xi, yi))| f.dot(&xi.plus_scaled(-1.0, yi))).sum();
            found = found.max(v);
        }
        let margin = found;
        worst_margin = worst_margin.min(margin);
        if margin < -1e-12 * (1.0 + norm_x * norm_x) {
            rep.residuals.insert("worst_margin".into(), margin);
            rep.residuals.insert("outside_samples".into(), outside as f64);
            let flat: Vec<f64> = x.iter().flat_map(|xi| xi.values().to_vec()).collect();
            rep.fail_with(Some(Witness::new("sample outside the radius without a descent witness", flat)));
            return Ok(rep);
        }
    }
    rep.residuals.insert("outside_samples".into(), outside as f64);
    if outside == 0 {
        rep.verdict = Verdict::VacuousPass;
        rep.notes.push(format!("no sample exceeded radius {radius}"));
    } else {
        rep.residuals.insert("worst_margin".into(), worst_margin);
    }
    Ok(rep)
}

/// Sampled pseudomonotonicity: whenever `⟨⟨F(x), y − x⟩⟩ ≥ 0` on a sampled
/// feasible pair, require `⟨⟨F(y), y − x⟩⟩ ≥ −1e-9`.
pub fn pseudomonotonicity_probe(
    op: &dyn Operator,
    set: &SetDescriptor,
    center: &GridFunction,
    pairs: usize,
    seed: u64,
) -> Result<CertReport> {
    if pairs == 0 {
        return Err(Error::invalid("pseudomonotonicity probe needs at least one pair"));
    }
    let slack = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = set
        .scale_hint()
        .unwrap_or_else(|| center.values().iter().fold(1.0f64, |m, v| m.max(v.abs())));
    let center = project(center, set)?;
    let clouds = [0.01, 0.1, 0.5, 1.0];
    let mut rep = CertReport::new("pseudomonotonicity", slack, pairs, seed);
    let mut triggered = 0usize;
    let mut worst = f64::INFINITY;
    for s in 0..pairs {
        let spread = base * clouds[s % clouds.len()];
        let a = sample_near(set, &center, spread, &mut rng)?;
        let b = sample_near(set, &center, spread, &mut rng)?;
        let fa = evaluate(op, &a)?;
        let fb = evaluate(op, &b)?;
        for (x, fx, y, fy) in [(&a, &fa, &b, &fb), (&b, &fb, &a, &fa)] {
            let d = y.plus_scaled(-1.0, x);
            if fx.dot(&d) >= 0.0 {
                triggered += 1;
                let v = fy.dot(&d);
                worst = worst.min(v);
                if v < -slack {
                    rep.residuals.insert("violation".into(), v);
                    rep.residuals.insert("triggered_pairs".into(), triggered as f64);
                    let mut flat = x.values().to_vec();
                    flat.extend_from_slice(y.values());
                    rep.fail_with(Some(Witness::new("pair (x, y): <F(x), y-x> >= 0 but <F(y), y-x> < 0", flat)));
                    return Ok(rep);
                }
            }
        }
    }
    rep.residuals.insert("triggered_pairs".into(), triggered as f64);
    if worst.is_finite() {
        rep.residuals.insert("worst_followup".into(), worst);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economy::{Agent, UtilitySpec};
    use crate::timegrid::TimeGrid;
    use crate::vi::{FnOperator, Monotonicity};

    fn g1() -> TimeGrid {
        TimeGrid::new(1.0, 1).unwrap()
    }

    fn gf(v: &[f64]) -> GridFunction {
        GridFunction::constant(g1(), v).unwrap()
    }

    fn quad_agent(b: &[f64], e: &[f64]) -> Agent {
        Agent::new(gf(e), UtilitySpec::quadratic(gf(b), vec![1.0; b.len()]).unwrap()).unwrap()
    }

    fn two_agent() -> Economy {
        Economy::new(g1(), 2, vec![quad_agent(&[2.0, 1.0], &[1.0, 0.2]), quad_agent(&[1.0, 2.0], &[0.2, 1.0])]).unwrap()
    }

    #[test]
    fn clearing_examples() {
        let eco = two_agent();
        let e: Vec<GridFunction> = eco.agents().iter().map(|a| a.endowment.clone()).collect();
        assert_eq!(market_clearing_residual(&eco, &e).unwrap(), vec![0.0, 0.0]);
        let half: Vec<GridFunction> = e.iter().map(|v| v.scaled(0.5)).collect();
        assert!(market_clearing_residual(&eco, &half).unwrap().iter().all(|&c| c < 0.0));
        let mut over = e.clone();
        let v = over[0].get(0, 1) + 0.3;
        over[0].set(0, 1, v);
        let c = market_clearing_residual(&eco, &over).unwrap();
        assert!((c[1] - 0.3).abs() < 1e-15 && c[0] == 0.0);
    }

    #[test]
    fn budget_examples() {
        let eco = two_agent();
        let p = gf(&[0.3, 0.7]);
        let e: Vec<GridFunction> = eco.agents().iter().map(|a| a.endowment.clone()).collect();
        assert_eq!(budget_residuals(&eco, &p, &e).unwrap(), vec![0.0, 0.0]);
        let zero = vec![gf(&[0.0, 0.0]), gf(&[0.0, 0.0])];
        let r = budget_residuals(&eco, &p, &zero).unwrap();
        assert!((r[0] + p.dot(&e[0])).abs() < 1e-15);
        let x = vec![gf(&[1.5, 0.0]), gf(&[0.0, 0.0])];
        let r1 = budget_residuals(&eco, &p, &x).unwrap();
        let r3 = budget_residuals(&eco, &p.scaled(3.0), &x).unwrap();
        assert!((r3[0] - 3.0 * r1[0]).abs() < 1e-14);
        assert_eq!(walras_residual(&eco, &p, &e).unwrap(), 0.0);
    }

    #[test]
    fn walras_negative_for_satiated_agent() {
        // bliss point (0.2, 0.2) costs less than the endowment (1, 1)
        let eco = Economy::new(g1(), 2, vec![quad_agent(&[0.2, 0.2], &[1.0, 1.0])]).unwrap();
        let p = gf(&[0.5, 0.5]);
        let w = walras_residual(&eco, &p, &[gf(&[0.2, 0.2])]).unwrap();
        assert!(w < 0.0);
    }

    #[test]
    fn best_response_examples() {
        let eco = Economy::new(g1(), 2, vec![quad_agent(&[0.2, 0.3], &[1.0, 1.0])]).unwrap();
        let p = gf(&[0.5, 0.5]);
        let br = best_response_residual(&eco, &p, &gf(&[0.2, 0.3]), 0, 100, 0).unwrap();
        assert!(br.residual < 1e-14);
        assert!(br.utility_gain <= UTILITY_SLACK);

        let sym = Economy::new(g1(), 2, vec![quad_agent(&[2.0, 2.0], &[0.5, 0.5]), quad_agent(&[2.0, 2.0], &[0.5, 0.5])]).unwrap();
        let br = best_response_residual(&sym, &p, &gf(&[0.5, 0.5]), 1, 100, 0).unwrap();
        assert!(br.residual < 1e-14);

        // perturb the no-trade optimum along the budget line
        let br = best_response_residual(&sym, &p, &gf(&[0.6, 0.4]), 0, 200, 5).unwrap();
        assert!(br.residual > 1e-3);
        assert!(br.utility_gain > 0.0);
    }

    #[test]
    fn best_response_rejects_unaffordable() {
        let eco = two_agent();
        let p = gf(&[0.5, 0.5]);
        let r = best_response_residual(&eco, &p, &gf(&[5.0, 5.0]), 0, 10, 0);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn certify_rejects_non_equilibrium_no_trade() {
        let eco = two_agent();
        let e: Vec<GridFunction> = eco.agents().iter().map(|a| a.endowment.clone()).collect();
        let rep = certify_equilibrium(&eco, &gf(&[0.5, 0.5]), &e, &CertParams::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Fail);
        assert!(rep.residuals["best_response[0]"] > 1e-3);
        assert!(rep.witness.is_some());
    }

    #[test]
    fn certify_symmetric_no_trade() {
        let sym = Economy::new(g1(), 2, vec![quad_agent(&[2.0, 2.0], &[0.5, 0.5]), quad_agent(&[2.0, 2.0], &[0.5, 0.5])]).unwrap();
        let e: Vec<GridFunction> = sym.agents().iter().map(|a| a.endowment.clone()).collect();
        let params = CertParams { tol: 1e-8, ..Default::default() };
        let rep = certify_equilibrium(&sym, &gf(&[0.5, 0.5]), &e, &params).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass, "{rep:?}");
    }

    #[test]
    fn known_equilibrium_certifies() {
        // symmetric-by-swap equilibrium of the two-agent quadratic economy
        let eco = two_agent();
        let x = vec![gf(&[1.1, 0.1]), gf(&[0.1, 1.1])];
        let rep = certify_equilibrium(&eco, &gf(&[0.5, 0.5]), &x, &CertParams { tol: 1e-10, ..Default::default() }).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass, "{rep:?}");
    }

    #[test]
    fn clearing_walras_identity() {
        let grid = TimeGrid::new(2.0, 3).unwrap();
        let p = GridFunction::from_fn(grid, 2, |t, j| if j == 0 { 0.3 + 0.1 * t } else { 0.7 - 0.1 * t }).unwrap();
        let e1 = GridFunction::from_fn(grid, 2, |t, j| 1.0 + t + j as f64).unwrap();
        let e2 = GridFunction::from_fn(grid, 2, |t, _| 0.5 + 0.2 * t).unwrap();
        let mk = |e: &GridFunction| Agent::new(e.clone(), UtilitySpec::log_shift(GridFunction::constant(grid, &[1.0, 1.0]).unwrap(), 1.0).unwrap()).unwrap();
        let eco = Economy::new(grid, 2, vec![mk(&e1), mk(&e2)]).unwrap();
        // two allocations on the budget hyperplanes
        let shift = GridFunction::from_fn(grid, 2, |t, j| if j == 0 { 0.7 - 0.1 * t } else { -(0.3 + 0.1 * t) }).unwrap();
        let x = vec![e1.plus_scaled(0.2, &shift), e2.plus_scaled(-0.1, &shift)];
        let b = budget_residuals(&eco, &p, &x).unwrap();
        assert!(b.iter().all(|v| v.abs() < 1e-10));
        let mut agg = GridFunction::zeros(grid, 2);
        for (xi, a) in x.iter().zip(eco.agents()) {
            agg.axpy(1.0, xi);
            agg.axpy(-1.0, &a.endowment);
        }
        let lhs = p.dot(&agg);
        assert!((lhs - walras_residual(&eco, &p, &x).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn pseudomonotone_fixtures() {
        let box2 = SetDescriptor::pointwise_box(vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
        let c = gf(&[1.5, 1.5]);
        let id = FnOperator::new(Monotonicity::Monotone, |x: &GridFunction| Ok(x.clone()));
        assert!(pseudomonotonicity_probe(&id, &box2, &c, 500, 0).unwrap().passed());

        // a quarter-turn rotation is skew, hence monotone and pseudomonotone
        let rot = FnOperator::new(Monotonicity::Monotone, |x: &GridFunction| {
            GridFunction::constant(*x.grid(), &[-x.get(0, 1), x.get(0, 0)])
        });
        assert!(pseudomonotonicity_probe(&rot, &box2, &c, 500, 1).unwrap().passed());

        let obtuse = obtuse_rotation(c.clone());
        let rep = pseudomonotonicity_probe(&obtuse, &box2, &c, 500, 2).unwrap();
        assert_eq!(rep.verdict, Verdict::Fail);
        assert_eq!(rep.witness.unwrap().values.len(), 4);
    }

    fn obtuse_rotation(c: GridFunction) -> impl Operator {
        let (s, co) = (150f64.to_radians().sin(), 150f64.to_radians().cos());
        FnOperator::new(Monotonicity::Unknown, move |x: &GridFunction| {
            let (u, v) = (x.get(0, 0) - c.get(0, 0), x.get(0, 1) - c.get(0, 1));
            GridFunction::constant(*x.grid(), &[co * u - s * v, s * u + co * v])
        })
    }

    #[test]
    fn obtuse_rotation_has_violating_pair_on_grid() {
        // brute force over a coarse grid of the box confirms the fixture
        let c = gf(&[1.5, 1.5]);
        let op = obtuse_rotation(c);
        let pts: Vec<GridFunction> = (0..=10)
            .flat_map(|i| (0..=10).map(move |j| gf(&[1.0 + i as f64 / 10.0, 1.0 + j as f64 / 10.0])))
            .collect();
        let mut found = false;
        'outer: for x in &pts {
            let fx = op.apply(x).unwrap();
            for y in &pts {
                let d = y.plus_scaled(-1.0, x);
                if fx.dot(&d) >= 0.0 && op.apply(y).unwrap().dot(&d) < -1e-9 {
                    found = true;
                    break 'outer;
                }
            }
        }
        assert!(found);
    }
}
