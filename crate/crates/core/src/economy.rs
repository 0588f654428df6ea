//! Time-dependent pure exchange economy and its assembly into a QVI.
//!
//! Agents hold endowment curves `e_i` and maximise the mean-value utility
//! `U_i(x) = ∫₀ᵀ u_i(t, x(t)) dt` over the budget set
//! `M_i(p) = {x ≥ 0 : ⟨⟨p, x − e_i⟩⟩ ≤ 0}`. For solving, budgets are
//! truncated by the cap box `H = Π_j {α ≥ 0, ∫α ≤ r_j}` with
//! `r_j > ∫ Σ_i e_i^j`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::qvi::QviProblem;
use crate::sets::SetDescriptor;
use crate::timegrid::{GridFunction, TimeGrid};
use crate::verify::{CertReport, Witness};
use crate::vi::{Monotonicity, Operator};

/// Per-instant utility families.
///
/// `Quadratic` and `LogShift` are concave with linearly bounded gradients
/// and are the only families accepted by [`assemble_qvi`]. `Power` and
/// `Log` exist to exercise the structural probes.
#[derive(Debug, Clone, PartialEq)]
pub enum UtilitySpec {
    /// `u(t, w) = Σ_j b_j(t)·w_j − ½·q_j·w_j²`.
    Quadratic { bliss: GridFunction, weights: Vec<f64> },
    /// `u(t, w) = Σ_j a_j(t)·log(s + w_j)`.
    LogShift { weights: GridFunction, shift: f64 },
    /// `u(w) = c·Σ_j w_j^k` on `w ≥ 0`.
    Power { coeff: f64, exponent: f64 },
    /// `u(t, w) = Σ_j a_j(t)·log(w_j)` on `w ≥ floor`.
    Log { weights: GridFunction, floor: f64 },
}

impl UtilitySpec {
    pub fn quadratic(bliss: GridFunction, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != bliss.components() {
            return Err(Error::shape("quadratic weights must match the number of goods"));
        }
        if weights.iter().any(|q| !(q.is_finite() && *q > 0.0)) {
            return Err(Error::invalid("quadratic weights must be strictly positive"));
        }
        Ok(UtilitySpec::Quadratic { bliss, weights })
    }

    pub fn log_shift(weights: GridFunction, shift: f64) -> Result<Self> {
        if !(shift.is_finite() && shift > 0.0) {
            return Err(Error::invalid(format!("log shift must be positive, got {shift}")));
        }
        if weights.values().iter().any(|a| *a <= 0.0) {
            return Err(Error::invalid("log-shift weights must be strictly positive"));
        }
        Ok(UtilitySpec::LogShift { weights, shift })
    }

    pub fn power(coeff: f64, exponent: f64) -> Result<Self> {
        if !(coeff.is_finite() && exponent.is_finite() && exponent >= 1.0) {
            return Err(Error::invalid("power utility needs a finite coefficient and exponent >= 1"));
        }
        Ok(UtilitySpec::Power { coeff, exponent })
    }

    pub fn log(weights: GridFunction, floor: f64) -> Result<Self> {
        if !(floor.is_finite() && floor > 0.0) {
            return Err(Error::invalid("log utility needs a positive domain floor"));
        }
        if weights.values().iter().any(|a| *a <= 0.0) {
            return Err(Error::invalid("log weights must be strictly positive"));
        }
        Ok(UtilitySpec::Log { weights, floor })
    }

    pub fn family(&self) -> &'static str {
        match self {
            UtilitySpec::Quadratic { .. } => "quadratic",
            UtilitySpec::LogShift { .. } => "log_shift",
            UtilitySpec::Power { .. } => "power",
            UtilitySpec::Log { .. } => "log",
        }
    }

    /// Whether the family is accepted for solving.
    pub fn is_admissible(&self) -> bool {
        matches!(self, UtilitySpec::Quadratic { .. } | UtilitySpec::LogShift { .. })
    }

    fn coefficients(&self) -> Option<&GridFunction> {
        match self {
            UtilitySpec::Quadratic { bliss, .. } => Some(bliss),
            UtilitySpec::LogShift { weights, .. } | UtilitySpec::Log { weights, .. } => Some(weights),
            UtilitySpec::Power { .. } => None,
        }
    }

    fn check_against(&self, grid: &TimeGrid, goods: usize) -> Result<()> {
        if let Some(c) = self.coefficients() {
            if c.grid() != grid || c.components() != goods {
                return Err(Error::shape(format!(
                    "{} coefficients have {} cells x {} goods, economy has {} x {}",
                    self.family(),
                    c.cells(),
                    c.components(),
                    grid.cells(),
                    goods
                )));
            }
        }
        Ok(())
    }

    /// Smallest admissible bundle component.
    pub fn domain_floor(&self) -> f64 {
        match self {
            UtilitySpec::LogShift { shift, .. } => -shift,
            UtilitySpec::Log { floor, .. } => *floor,
            UtilitySpec::Power { .. } => 0.0,
            UtilitySpec::Quadratic { .. } => f64::NEG_INFINITY,
        }
    }

    fn check_domain(&self, w: &[f64]) -> Result<()> {
        let floor = self.domain_floor();
        let strict = matches!(self, UtilitySpec::LogShift { .. });
        for &v in w {
            if v < floor || (strict && v <= floor) || v.is_nan() {
                return Err(Error::Domain(format!(
                    "{} utility undefined at consumption {v}",
                    self.family()
                )));
            }
        }
        Ok(())
    }

    /// `u(t_k, w)`.
    pub fn cell_value(&self, k: usize, w: &[f64]) -> Result<f64> {
        self.check_domain(w)?;
        Ok(match self {
            UtilitySpec::Quadratic { bliss, weights } => bliss
                .cell(k)
                .iter()
                .zip(weights)
                .zip(w)
                .map(|((b, q), x)| b * x - 0.5 * q * x * x)
                .sum(),
            UtilitySpec::LogShift { weights, shift } => {
                weights.cell(k).iter().zip(w).map(|(a, x)| a * (shift + x).ln()).sum()
            }
            UtilitySpec::Power { coeff, exponent } => w.iter().map(|x| coeff * x.powf(*exponent)).sum(),
            UtilitySpec::Log { weights, .. } => weights.cell(k).iter().zip(w).map(|(a, x)| a * x.ln()).sum(),
        })
    }

    /// `∇_w u(t_k, w)` written into `out`.
    pub fn cell_gradient(&self, k: usize, w: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_domain(w)?;
        match self {
            UtilitySpec::Quadratic { bliss, weights } => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = bliss.get(k, j) - weights[j] * w[j];
                }
            }
            UtilitySpec::LogShift { weights, shift } => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = weights.get(k, j) / (shift + w[j]);
                }
            }
            UtilitySpec::Power { coeff, exponent } => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = coeff * exponent * w[j].powf(exponent - 1.0);
                }
            }
            UtilitySpec::Log { weights, .. } => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = weights.get(k, j) / w[j];
                }
            }
        }
        Ok(())
    }

    /// Declared growth constants `(C, g(t_k))` with
    /// `‖∇u(t_k, w)‖ ≤ C‖w‖ + g(t_k)` claimed for all `w ≥ 0`.
    pub fn growth_bound(&self, k: usize) -> (f64, f64) {
        match self {
            UtilitySpec::Quadratic { bliss, weights } => {
                let c = weights.iter().cloned().fold(0.0, f64::max);
                let g = bliss.cell(k).iter().map(|b| b * b).sum::<f64>().sqrt();
                (c, g)
            }
            UtilitySpec::LogShift { weights, shift } => (0.0, weights.cell(k).iter().sum::<f64>() / shift),
            UtilitySpec::Power { coeff, exponent } => (coeff.abs() * exponent, coeff.abs() * exponent),
            UtilitySpec::Log { weights, floor } => (0.0, weights.cell(k).iter().sum::<f64>() / floor),
        }
    }

    fn refined(&self, factor: usize) -> Result<Self> {
        Ok(match self {
            UtilitySpec::Quadratic { bliss, weights } => {
                UtilitySpec::Quadratic { bliss: bliss.refined(factor)?, weights: weights.clone() }
            }
            UtilitySpec::LogShift { weights, shift } => {
                UtilitySpec::LogShift { weights: weights.refined(factor)?, shift: *shift }
            }
            UtilitySpec::Log { weights, floor } => UtilitySpec::Log { weights: weights.refined(factor)?, floor: *floor },
            UtilitySpec::Power { .. } => self.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub endowment: GridFunction,
    pub utility: UtilitySpec,
}

impl Agent {
    pub fn new(endowment: GridFunction, utility: UtilitySpec) -> Result<Self> {
        if let Some(v) = endowment.values().iter().find(|v| **v < 0.0) {
            return Err(Error::invalid(format!("endowments must be non-negative, found {v}")));
        }
        utility.check_against(endowment.grid(), endowment.components())?;
        Ok(Agent { endowment, utility })
    }

    /// Strictly positive endowment in every good and cell (beyond `1e-12`).
    pub fn survives(&self) -> bool {
        self.endowment.values().iter().all(|&v| v > 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Economy {
    grid: TimeGrid,
    goods: usize,
    agents: Vec<Agent>,
}

impl Economy {
    pub fn new(grid: TimeGrid, goods: usize, agents: Vec<Agent>) -> Result<Self> {
        if goods == 0 {
            return Err(Error::invalid("economy needs at least one good"));
        }
        if agents.is_empty() {
            return Err(Error::invalid("economy needs at least one agent"));
        }
        for (i, a) in agents.iter().enumerate() {
            if *a.endowment.grid() != grid || a.endowment.components() != goods {
                return Err(Error::shape(format!("agent {i} does not match the economy's grid and goods")));
            }
        }
        Ok(Economy { grid, goods, agents })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn goods(&self) -> usize {
        self.goods
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn endowments(&self) -> Vec<GridFunction> {
        self.agents.iter().map(|a| a.endowment.clone()).collect()
    }

    /// `∫₀ᵀ Σ_i e_i^j dt` per good.
    pub fn aggregate_endowment(&self) -> Vec<f64> {
        (0..self.goods)
            .map(|j| self.agents.iter().map(|a| a.endowment.integral(j)).sum())
            .collect()
    }

    /// Same economy with every cell split `factor` ways.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let agents = self
            .agents
            .iter()
            .map(|a| Agent::new(a.endowment.refined(factor)?, a.utility.refined(factor)?))
            .collect::<Result<Vec<_>>>()?;
        Economy::new(self.grid.refined(factor)?, self.goods, agents)
    }

    /// Upper bound on `‖x‖` for stacked allocations inside the cap box.
    pub fn allocation_norm_bound(&self, caps: &[f64]) -> f64 {
        let per_agent: f64 = caps.iter().map(|r| r * r).sum::<f64>() / self.grid.dt();
        (self.agents.len() as f64 * per_agent).sqrt()
    }
}

fn check_agent_shape(agent: &Agent, x: &GridFunction) -> Result<()> {
    x.check_shape(&agent.endowment)
}

/// `U_i(x) = ∫₀ᵀ u_i(t, x(t)) dt` as an exact cell sum.
pub fn utility_value(agent: &Agent, x: &GridFunction) -> Result<f64> {
    check_agent_shape(agent, x)?;
    let mut total = 0.0;
    for k in 0..x.cells() {
        total += agent.utility.cell_value(k, x.cell(k))?;
    }
    Ok(total * x.grid().dt())
}

/// Cellwise `∇u_i(t, x(t))`, the `L²` gradient of `U_i`.
pub fn utility_gradient(agent: &Agent, x: &GridFunction) -> Result<GridFunction> {
    check_agent_shape(agent, x)?;
    let mut out = GridFunction::zeros(*x.grid(), x.components());
    for k in 0..x.cells() {
        agent.utility.cell_gradient(k, x.cell(k), out.cell_mut(k))?;
    }
    Ok(out)
}

/// `F_i(x) = −∇u_i(x)`.
#[derive(Debug, Clone)]
pub struct NegUtilityGradient {
    agent: Agent,
}

impl NegUtilityGradient {
    pub fn new(agent: Agent) -> Self {
        NegUtilityGradient { agent }
    }
}

impl Operator for NegUtilityGradient {
    fn apply(&self, x: &GridFunction) -> Result<GridFunction> {
        let mut g = utility_gradient(&self.agent, x)?;
        g.values_mut().iter_mut().for_each(|v| *v = -*v);
        Ok(g)
    }

    fn monotonicity(&self) -> Monotonicity {
        if self.agent.utility.is_admissible() {
            Monotonicity::Monotone
        } else {
            Monotonicity::Unknown
        }
    }
}

/// `r_j = slack · ∫ Σ_i e_i^j`; `slack` must exceed 1 for strictness.
pub fn default_caps(eco: &Economy, slack: f64) -> Result<Vec<f64>> {
    if !(slack.is_finite() && slack > 1.0) {
        return Err(Error::invalid(format!("cap slack must exceed 1, got {slack}")));
    }
    let agg = eco.aggregate_endowment();
    if let Some(j) = agg.iter().position(|v| *v <= 0.0) {
        return Err(Error::DegenerateEconomy(format!("good {j} has zero aggregate endowment")));
    }
    Ok(agg.iter().map(|v| slack * v).collect())
}

/// Builds the price/allocation QVI: prices in the cellwise simplex,
/// `K(p) = Π_i (budget_i(p) ∩ H)`, `F = (−∇u_i)_i`, `f(x) = Σ_i (e_i − x_i)`.
pub fn assemble_qvi(eco: &Economy, caps: &[f64]) -> Result<QviProblem> {
    if caps.len() != eco.goods() {
        return Err(Error::shape(format!("{} caps for {} goods", caps.len(), eco.goods())));
    }
    for (i, a) in eco.agents().iter().enumerate() {
        if !a.utility.is_admissible() {
            return Err(Error::invalid(format!(
                "agent {i} uses the {} family, which is not accepted for solving",
                a.utility.family()
            )));
        }
    }
    let agg = eco.aggregate_endowment();
    for (j, (r, e)) in caps.iter().zip(&agg).enumerate() {
        if !(r > e) {
            return Err(Error::invalid(format!(
                "cap {r} for good {j} must strictly exceed the aggregate endowment {e}"
            )));
        }
    }

    let endowments = Arc::new(eco.endowments());
    let caps = caps.to_vec();
    let map_endowments = Arc::clone(&endowments);
    let constraint_map = move |p: &GridFunction| -> Result<Vec<SetDescriptor>> {
        map_endowments
            .iter()
            .map(|e| {
                SetDescriptor::intersection(vec![
                    SetDescriptor::budget(p.clone(), e.clone())?,
                    SetDescriptor::CapBox { caps: caps.clone() },
                ])
            })
            .collect()
    };
    let outer_endowments = Arc::clone(&endowments);
    let outer_map = move |x: &[GridFunction]| -> Result<GridFunction> {
        if x.len() != outer_endowments.len() {
            return Err(Error::shape("allocation count differs from agent count"));
        }
        let mut h = GridFunction::zeros(*outer_endowments[0].grid(), outer_endowments[0].components());
        for (xi, e) in x.iter().zip(outer_endowments.iter()) {
            xi.check_shape(e)?;
            h.axpy(1.0, e);
            h.axpy(-1.0, xi);
        }
        Ok(h)
    };
    let operators: Vec<Arc<dyn Operator>> = eco
        .agents()
        .iter()
        .map(|a| Arc::new(NegUtilityGradient::new(a.clone())) as Arc<dyn Operator>)
        .collect();
    QviProblem::new(
        *eco.grid(),
        eco.goods(),
        SetDescriptor::PointwiseSimplex,
        Arc::new(constraint_map),
        operators,
        Arc::new(outer_map),
        eco.endowments(),
    )
}

fn sample_bundle(rng: &mut ChaCha8Rng, m: usize, floor: f64, log_lo: f64, log_hi: f64) -> Vec<f64> {
    let scale = 10f64.powf(rng.random_range(log_lo..log_hi));
    (0..m)
        .map(|_| {
            let n: f64 = rng.sample(StandardNormal);
            floor.max(0.0) + scale * n.abs()
        })
        .collect()
}

/// Sampled check of `‖∇u(t, w)‖ ≤ C‖w‖ + g(t)` with the family's declared
/// constants, over bundles spanning several orders of magnitude.
pub fn check_growth_condition(agent: &Agent, samples: usize, seed: u64) -> Result<CertReport> {
    if samples == 0 {
        return Err(Error::invalid("growth check needs at least one sample"));
    }
    let m = agent.endowment.components();
    let cells = agent.endowment.cells();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = CertReport::new("growth", 1e-9, samples, seed);
    let floor = match agent.utility.domain_floor() {
        f if f.is_finite() && f > 0.0 => f,
        _ => 0.0,
    };
    let mut grad = vec![0.0; m];
    let mut worst: (f64, Option<(usize, Vec<f64>)>) = (f64::NEG_INFINITY, None);
    for _ in 0..samples {
        let k = rng.random_range(0..cells);
        let w = sample_bundle(&mut rng, m, floor, -3.0, 4.0);
        agent.utility.cell_gradient(k, &w, &mut grad)?;
        let (c, g) = agent.utility.growth_bound(k);
        let lhs = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = c * w.iter().map(|v| v * v).sum::<f64>().sqrt() + g;
        let margin = (lhs - bound) / (1.0 + bound);
        if margin > worst.0 {
            worst = (margin, Some((k, w)));
        }
    }
    rep.residuals.insert("worst_relative_excess".into(), worst.0);
    if worst.0 > rep.tolerance {
        let (k, w) = worst.1.expect("at least one sample");
        let mut vals = vec![k as f64];
        vals.extend(w);
        rep.fail_with(Some(Witness::new("(cell, w) with gradient above the declared bound", vals)));
    }
    Ok(rep)
}

/// Sampled midpoint concavity `u((w₁+w₂)/2) ≥ (u(w₁)+u(w₂))/2 − 1e-10`
/// (the slack scales with `|u|` above one).
pub fn check_concavity(agent: &Agent, samples: usize, seed: u64) -> Result<CertReport> {
    if samples == 0 {
        return Err(Error::invalid("concavity check needs at least one sample"));
    }
    let m = agent.endowment.components();
    let cells = agent.endowment.cells();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = CertReport::new("concavity", 1e-10, samples, seed);
    let floor = match agent.utility.domain_floor() {
        f if f.is_finite() && f > 0.0 => f,
        _ => 0.0,
    };
    let mut worst: (f64, Option<Vec<f64>>) = (f64::NEG_INFINITY, None);
    for _ in 0..samples {
        let k = rng.random_range(0..cells);
        let w1 = sample_bundle(&mut rng, m, floor, -2.0, 1.0);
        let w2 = sample_bundle(&mut rng, m, floor, -2.0, 1.0);
        let mid: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| 0.5 * (a + b)).collect();
        let u1 = agent.utility.cell_value(k, &w1)?;
        let u2 = agent.utility.cell_value(k, &w2)?;
        let um = agent.utility.cell_value(k, &mid)?;
        let avg = 0.5 * (u1 + u2);
        let gap = (avg - um) / avg.abs().max(1.0);
        if gap > worst.0 {
            let mut vals = vec![k as f64];
            vals.extend(&w1);
            vals.extend(&w2);
            worst = (gap, Some(vals));
        }
    }
    rep.residuals.insert("worst_midpoint_gap".into(), worst.0);
    if worst.0 > rep.tolerance {
        rep.fail_with(worst.1.map(|v| Witness::new("(cell, w1, w2) violating midpoint concavity", v)));
    }
    Ok(rep)
}

/// One flag per agent: endowment strictly positive everywhere.
pub fn survivability_check(eco: &Economy) -> Vec<bool> {
    eco.agents().iter().map(Agent::survives).collect()
}

/// `(1/T) ∫ Σ_j p^j dt`; equals one on the mean-normalised price set.
pub fn mean_price_level(price: &GridFunction) -> f64 {
    let total: f64 = (0..price.components()).map(|j| price.integral(j)).sum();
    total / price.grid().horizon()
}
