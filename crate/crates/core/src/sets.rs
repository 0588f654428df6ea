//! Convex constraint sets over grid functions and their `L²` projections.
//!
//! All projections are with respect to the `L²` metric of
//! [`GridFunction::inner_product`]. The price set is the cellwise unit
//! simplex; an agent's truncated budget set is the intersection of a budget
//! halfspace with a cap box (the box already carries non-negativity).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::timegrid::GridFunction;

/// Violations at or below this level count as membership.
pub const MEMBERSHIP_EPS: f64 = 1e-12;

pub const DYKSTRA_TOL: f64 = 1e-10;
pub const DYKSTRA_MAX_ITER: usize = 10_000;

/// Budget halfspace `{x : ⟨⟨p, x − e⟩⟩ ≤ 0}`.
#[derive(Debug, Clone)]
pub struct Budget {
    price: GridFunction,
    endowment: GridFunction,
    wealth: f64,
    price_norm_sq: f64,
}

impl Budget {
    pub fn new(price: GridFunction, endowment: GridFunction) -> Result<Self> {
        price.check_shape(&endowment)?;
        let price_norm_sq = price.dot(&price);
        if price_norm_sq <= 0.0 {
            return Err(Error::DegenerateSet("budget with zero price curve".into()));
        }
        let wealth = price.dot(&endowment);
        Ok(Budget { price, endowment, wealth, price_norm_sq })
    }

    pub fn price(&self) -> &GridFunction {
        &self.price
    }

    pub fn endowment(&self) -> &GridFunction {
        &self.endowment
    }

    /// `⟨⟨p, e⟩⟩`.
    pub fn wealth(&self) -> f64 {
        self.wealth
    }

    /// `⟨⟨p, x − e⟩⟩`.
    pub fn excess(&self, x: &GridFunction) -> f64 {
        self.price.dot(x) - self.wealth
    }

    fn nonnegative_price(&self) -> bool {
        self.price.values().iter().all(|&v| v >= 0.0)
    }
}

#[derive(Debug, Clone)]
pub enum SetDescriptor {
    /// Cellwise unit simplex `{p_k ≥ 0, Σ_j p_k^j = 1}`.
    PointwiseSimplex,
    BudgetHalfspace(Budget),
    /// `Π_j {α ≥ 0, ∫α ≤ r_j}`.
    CapBox { caps: Vec<f64> },
    /// Closed ball of the given radius around the origin.
    Ball { radius: f64 },
    /// The non-negative cone.
    NonNegative,
    /// Per-component bounds applied in every cell.
    PointwiseBox { lower: Vec<f64>, upper: Vec<f64> },
    Intersection(Vec<SetDescriptor>),
}

impl SetDescriptor {
    pub fn budget(price: GridFunction, endowment: GridFunction) -> Result<Self> {
        Ok(SetDescriptor::BudgetHalfspace(Budget::new(price, endowment)?))
    }

    pub fn cap_box(caps: Vec<f64>) -> Result<Self> {
        check_caps(&caps)?;
        Ok(SetDescriptor::CapBox { caps })
    }

    pub fn ball(radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid(format!("ball radius must be positive, got {radius}")));
        }
        Ok(SetDescriptor::Ball { radius })
    }

    pub fn pointwise_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid("box bounds must be non-empty and of equal length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u) || l.is_nan() || u.is_nan()) {
            return Err(Error::invalid("box needs lower <= upper in every component"));
        }
        Ok(SetDescriptor::PointwiseBox { lower, upper })
    }

    pub fn intersection(parts: Vec<SetDescriptor>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::invalid("intersection of no sets"));
        }
        Ok(SetDescriptor::Intersection(parts))
    }

    /// Rough size of the set, used to scale sampling clouds.
    pub fn scale_hint(&self) -> Option<f64> {
        match self {
            SetDescriptor::PointwiseSimplex => Some(1.0),
            SetDescriptor::Ball { radius } => Some(2.0 * radius),
            SetDescriptor::CapBox { caps } => Some(caps.iter().cloned().fold(0.0, f64::max)),
            SetDescriptor::PointwiseBox { lower, upper } => {
                let w = lower.iter().zip(upper).map(|(l, u)| u - l).fold(0.0, f64::max);
                w.is_finite().then_some(w)
            }
            SetDescriptor::BudgetHalfspace(_) | SetDescriptor::NonNegative => None,
            SetDescriptor::Intersection(parts) => parts
                .iter()
                .filter_map(|p| p.scale_hint())
                .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.min(s)))),
        }
    }
}

fn check_caps(caps: &[f64]) -> Result<()> {
    if let Some(bad) = caps.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
        return Err(Error::invalid(format!("caps must be strictly positive, got {bad}")));
    }
    Ok(())
}

fn check_components(x: &GridFunction, len: usize, what: &str) -> Result<()> {
    if x.components() != len {
        return Err(Error::shape(format!(
            "{what} has {len} components but the point has {}",
            x.components()
        )));
    }
    Ok(())
}

/// Euclidean projection of `v` onto the unit simplex (sort and threshold).
pub(crate) fn simplex_project_slice(v: &mut [f64]) {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

pub fn project_pointwise_simplex(q: &GridFunction) -> GridFunction {
    let mut out = q.clone();
    for k in 0..out.cells() {
        simplex_project_slice(out.cell_mut(k));
    }
    out
}

pub fn project_budget_halfspace(
    x: &GridFunction,
    price: &GridFunction,
    endowment: &GridFunction,
) -> Result<GridFunction> {
    let budget = Budget::new(price.clone(), endowment.clone())?;
    x.check_shape(price)?;
    Ok(project_halfspace(x, &budget))
}

fn project_halfspace(x: &GridFunction, budget: &Budget) -> GridFunction {
    let excess = budget.excess(x);
    if excess <= 0.0 {
        x.clone()
    } else {
        x.plus_scaled(-excess / budget.price_norm_sq, &budget.price)
    }
}

/// Water-filling onto `{α ≥ 0, dt·Σα ≤ cap}` for one component column.
fn cap_column(column: &mut [f64], dt: f64, cap: f64) {
    let mass: f64 = column.iter().map(|v| v.max(0.0)).sum::<f64>() * dt;
    if mass <= cap {
        column.iter_mut().for_each(|v| *v = v.max(0.0));
        return;
    }
    let mut u: Vec<f64> = column.iter().copied().filter(|v| *v > 0.0).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let target = cap / dt;
    let mut cum = 0.0;
    let mut level = 0.0;
    for i in 0..u.len() {
        cum += u[i];
        level = (cum - target) / (i + 1) as f64;
        if i + 1 == u.len() || u[i + 1] <= level {
            break;
        }
    }
    column.iter_mut().for_each(|v| *v = (*v - level).max(0.0));
}

fn cap_project_in_place(x: &mut GridFunction, caps: &[f64]) {
    let dt = x.grid().dt();
    let mut column = vec![0.0; x.cells()];
    for (j, &cap) in caps.iter().enumerate() {
        for (k, c) in column.iter_mut().enumerate() {
            *c = x.get(k, j);
        }
        cap_column(&mut column, dt, cap);
        for (k, c) in column.iter().enumerate() {
            x.set(k, j, *c);
        }
    }
}

pub fn project_cap_box(x: &GridFunction, caps: &[f64]) -> Result<GridFunction> {
    check_caps(caps)?;
    check_components(x, caps.len(), "cap box")?;
    let mut out = x.clone();
    cap_project_in_place(&mut out, caps);
    Ok(out)
}

pub fn project_ball(x: &GridFunction, radius: f64) -> GridFunction {
    let n = x.norm();
    if n <= radius {
        x.clone()
    } else {
        x.scaled(radius / n)
    }
}

pub fn project_nonnegative(x: &GridFunction) -> GridFunction {
    x.map(|v| v.max(0.0))
}

fn project_box(x: &GridFunction, lower: &[f64], upper: &[f64]) -> Result<GridFunction> {
    check_components(x, lower.len(), "box")?;
    let mut out = x.clone();
    for k in 0..out.cells() {
        for (j, v) in out.cell_mut(k).iter_mut().enumerate() {
            *v = v.clamp(lower[j], upper[j]);
        }
    }
    Ok(out)
}

/// Exact projection onto `budget ∩ caps` (or `budget ∩ C_L` when `caps` is
/// `None`) for a non-negative price curve.
///
/// The minimiser is `P_caps(x − μp)` for the budget multiplier `μ ≥ 0`;
/// the budget value along that path is non-increasing and piecewise linear
/// in `μ`, so a bracketed secant search locates it to rounding precision.
pub fn project_budget_capped(
    x: &GridFunction,
    budget: &Budget,
    caps: Option<&[f64]>,
) -> Result<GridFunction> {
    x.check_shape(&budget.price)?;
    if let Some(c) = caps {
        check_caps(c)?;
        check_components(x, c.len(), "cap box")?;
    }
    if !budget.nonnegative_price() {
        return Err(Error::invalid("exact budget projection needs a non-negative price curve"));
    }
    let lower = |v: &GridFunction| -> GridFunction {
        let mut out = v.clone();
        match caps {
            Some(c) => cap_project_in_place(&mut out, c),
            None => out.values_mut().iter_mut().for_each(|s| *s = s.max(0.0)),
        }
        out
    };
    let at = |mu: f64| -> (GridFunction, f64) {
        let a = lower(&x.plus_scaled(-mu, &budget.price));
        let g = budget.excess(&a);
        (a, g)
    };

    let (a0, g0) = at(0.0);
    if g0 <= 0.0 {
        return Ok(a0);
    }
    if budget.wealth < 0.0 {
        return Err(Error::DegenerateSet("budget set misses the non-negative cone".into()));
    }
    if budget.wealth == 0.0 {
        let mut v = x.clone();
        for (s, p) in v.values_mut().iter_mut().zip(budget.price.values()) {
            if *p > 0.0 {
                *s = 0.0;
            }
        }
        return Ok(lower(&v));
    }

    let (mut lo, mut g_lo) = (0.0, g0);
    let mut hi = g0 / budget.price_norm_sq;
    let (mut a_hi, mut g_hi) = at(hi);
    let mut doublings = 0;
    while g_hi > 0.0 {
        lo = hi;
        g_lo = g_hi;
        hi *= 2.0;
        (a_hi, g_hi) = at(hi);
        doublings += 1;
        if doublings > 2000 {
            return Err(Error::Numeric("budget multiplier search failed to bracket".into()));
        }
    }
    // Illinois variant of regula falsi on the bracket [lo, hi].
    let mut side = 0i8;
    for _ in 0..300 {
        if g_hi == 0.0 || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let mut mid = hi - g_hi * (hi - lo) / (g_hi - g_lo);
        if !(mid > lo && mid < hi) {
            mid = 0.5 * (lo + hi);
        }
        let (a_mid, g_mid) = at(mid);
        if g_mid > 0.0 {
            lo = mid;
            g_lo = g_mid;
            if side == -1 {
                g_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = mid;
            g_hi = g_mid;
            a_hi = a_mid;
            if side == 1 {
                g_lo *= 0.5;
            }
            side = 1;
        }
    }
    Ok(a_hi)
}

/// The full budget set `M(p) = {x ≥ 0 : ⟨⟨p, x − e⟩⟩ ≤ 0}`.
pub fn full_budget_set(price: &GridFunction, endowment: &GridFunction) -> Result<SetDescriptor> {
    SetDescriptor::intersection(vec![
        SetDescriptor::budget(price.clone(), endowment.clone())?,
        SetDescriptor::NonNegative,
    ])
}

/// Dykstra's alternating projections onto the intersection of `parts`.
pub fn project_intersection(
    x: &GridFunction,
    parts: &[SetDescriptor],
    tol: f64,
    max_iter: usize,
) -> Result<GridFunction> {
    if parts.is_empty() {
        return Err(Error::invalid("intersection of no sets"));
    }
    let mut current = x.clone();
    let mut increments: Vec<GridFunction> =
        parts.iter().map(|_| GridFunction::zeros(*x.grid(), x.components())).collect();
    let mut residuals = vec![f64::INFINITY; parts.len()];
    for _ in 0..max_iter {
        let previous = current.clone();
        for (part, inc) in parts.iter().zip(increments.iter_mut()) {
            let shifted = current.plus_scaled(1.0, inc);
            let projected = project(&shifted, part)?;
            *inc = shifted.plus_scaled(-1.0, &projected);
            current = projected;
        }
        for (r, part) in residuals.iter_mut().zip(parts) {
            *r = raw_violation(&current, part)?;
        }
        let change = current.distance(&previous);
        if residuals.iter().all(|&r| r <= tol) && change <= tol {
            return Ok(current);
        }
    }
    Err(Error::NonConvergence {
        what: "dykstra projection",
        iterations: max_iter,
        residuals,
        last: Box::new(current),
    })
}

fn exact_pair(parts: &[SetDescriptor]) -> Option<(&Budget, Option<&[f64]>)> {
    if parts.len() != 2 {
        return None;
    }
    let (budget, other) = match (&parts[0], &parts[1]) {
        (SetDescriptor::BudgetHalfspace(b), o) | (o, SetDescriptor::BudgetHalfspace(b)) => (b, o),
        _ => return None,
    };
    if !budget.nonnegative_price() {
        return None;
    }
    match other {
        SetDescriptor::CapBox { caps } => Some((budget, Some(caps.as_slice()))),
        SetDescriptor::NonNegative => Some((budget, None)),
        _ => None,
    }
}

/// Metric projection onto any descriptor. Intersections of a budget with a
/// cap box or the non-negative cone use the exact solver; other
/// intersections fall back to Dykstra with default tolerances.
pub fn project(x: &GridFunction, set: &SetDescriptor) -> Result<GridFunction> {
    match set {
        SetDescriptor::PointwiseSimplex => Ok(project_pointwise_simplex(x)),
        SetDescriptor::BudgetHalfspace(b) => {
            x.check_shape(&b.price)?;
            Ok(project_halfspace(x, b))
        }
        SetDescriptor::CapBox { caps } => project_cap_box(x, caps),
        SetDescriptor::Ball { radius } => Ok(project_ball(x, *radius)),
        SetDescriptor::NonNegative => Ok(project_nonnegative(x)),
        SetDescriptor::PointwiseBox { lower, upper } => project_box(x, lower, upper),
        SetDescriptor::Intersection(parts) => {
            if parts.len() == 1 {
                return project(x, &parts[0]);
            }
            if let Some((budget, caps)) = exact_pair(parts) {
                return project_budget_capped(x, budget, caps);
            }
            project_intersection(x, parts, DYKSTRA_TOL, DYKSTRA_MAX_ITER)
        }
    }
}

fn raw_violation(x: &GridFunction, set: &SetDescriptor) -> Result<f64> {
    let neg = |x: &GridFunction| x.values().iter().fold(0.0f64, |m, &v| m.max(-v));
    Ok(match set {
        SetDescriptor::PointwiseSimplex => {
            let mut worst = 0.0f64;
            for k in 0..x.cells() {
                let cell = x.cell(k);
                let sum: f64 = cell.iter().sum();
                let low = cell.iter().fold(0.0f64, |m, &v| m.max(-v));
                worst = worst.max((sum - 1.0).abs()).max(low);
            }
            worst
        }
        SetDescriptor::BudgetHalfspace(b) => {
            x.check_shape(&b.price)?;
            b.excess(x).max(0.0)
        }
        SetDescriptor::CapBox { caps } => {
            check_components(x, caps.len(), "cap box")?;
            caps.iter()
                .enumerate()
                .fold(neg(x), |m, (j, &r)| m.max(x.integral(j) - r))
        }
        SetDescriptor::Ball { radius } => (x.norm() - radius).max(0.0),
        SetDescriptor::NonNegative => neg(x),
        SetDescriptor::PointwiseBox { lower, upper } => {
            check_components(x, lower.len(), "box")?;
            let mut worst = 0.0f64;
            for k in 0..x.cells() {
                for (j, &v) in x.cell(k).iter().enumerate() {
                    worst = worst.max(lower[j] - v).max(v - upper[j]);
                }
            }
            worst
        }
        SetDescriptor::Intersection(parts) => {
            let mut worst = 0.0f64;
            for p in parts {
                worst = worst.max(raw_violation(x, p)?);
            }
            worst
        }
    })
}

/// Largest constraint violation of `x` in natural units; zero for members
/// (violations up to [`MEMBERSHIP_EPS`] are treated as zero).
pub fn membership_residual(x: &GridFunction, set: &SetDescriptor) -> Result<f64> {
    let v = raw_violation(x, set)?;
    Ok(if v <= MEMBERSHIP_EPS { 0.0 } else { v })
}

/// Feasible point obtained by projecting a Gaussian perturbation of
/// `center` with per-entry standard deviation `scale`.
pub fn sample_near<R: Rng + ?Sized>(
    set: &SetDescriptor,
    center: &GridFunction,
    scale: f64,
    rng: &mut R,
) -> Result<GridFunction> {
    let mut z = center.clone();
    for v in z.values_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *v += scale * n;
    }
    let y = project(&z, set).map_err(|e| Error::Sampling(format!("projection failed: {e}")))?;
    let viol = raw_violation(&y, set)?;
    if viol > 1e-8 {
        return Err(Error::Sampling(format!("projected sample violates the set by {viol:e}")));
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timegrid::TimeGrid;
    use proptest::prelude::*;

    fn g1() -> TimeGrid {
        TimeGrid::new(1.0, 1).unwrap()
    }

    fn gf(v: &[f64]) -> GridFunction {
        GridFunction::constant(g1(), v).unwrap()
    }

    #[test]
    fn simplex_examples() {
        let member = gf(&[0.3, 0.7]);
        assert_eq!(project_pointwise_simplex(&member), member);
        assert_eq!(project_pointwise_simplex(&gf(&[2.0, 0.0])).values(), &[1.0, 0.0]);
        let p = project_pointwise_simplex(&gf(&[0.8, 0.6]));
        assert!((p.get(0, 0) - 0.6).abs() < 1e-15 && (p.get(0, 1) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn simplex_matches_grid_search() {
        // brute force over a 1e-4 grid of the 1-simplex
        let q = [0.8, 0.6];
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=10_000 {
            let a = i as f64 * 1e-4;
            let d = (a - q[0]).powi(2) + (1.0 - a - q[1]).powi(2);
            if d < best.0 {
                best = (d, a);
            }
        }
        let p = project_pointwise_simplex(&gf(&q));
        assert!((p.get(0, 0) - best.1).abs() <= 1e-4);
    }

    #[test]
    fn budget_examples() {
        let p = gf(&[1.0]);
        let e = gf(&[1.0]);
        assert_eq!(project_budget_halfspace(&e, &p, &e).unwrap(), e);
        let inside = gf(&[0.5]);
        assert_eq!(project_budget_halfspace(&inside, &p, &e).unwrap(), inside);
        let out = project_budget_halfspace(&gf(&[3.0]), &p, &e).unwrap();
        assert_eq!(out.values(), &[1.0]);
        assert_eq!(p.dot(&out) - p.dot(&e), 0.0);
    }

    #[test]
    fn budget_rejects_zero_price() {
        let z = gf(&[0.0, 0.0]);
        let e = gf(&[1.0, 1.0]);
        assert!(matches!(project_budget_halfspace(&e, &z, &e), Err(Error::DegenerateSet(_))));
    }

    #[test]
    fn cap_box_examples() {
        assert_eq!(project_cap_box(&gf(&[0.0]), &[2.0]).unwrap().values(), &[0.0]);
        assert_eq!(project_cap_box(&gf(&[1.5]), &[2.0]).unwrap().values(), &[1.5]);
        // brute force on [0,5]
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=50_000 {
            let a = i as f64 * 1e-4;
            if a <= 2.0 && (a - 5.0f64).powi(2) < best.0 {
                best = ((a - 5.0f64).powi(2), a);
            }
        }
        let out = project_cap_box(&gf(&[5.0]), &[2.0]).unwrap();
        assert_eq!(out.values(), &[2.0]);
        assert!((out.get(0, 0) - best.1).abs() < 1e-4);
        assert!(matches!(project_cap_box(&gf(&[1.0]), &[0.0]), Err(Error::InvalidArgument(_))));
        assert!(matches!(SetDescriptor::cap_box(vec![-1.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn cap_box_water_filling_multi_cell() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let x = GridFunction::new(grid, 1, vec![4.0, 2.0, -1.0, 1.0]).unwrap();
        let out = project_cap_box(&x, &[1.0]).unwrap();
        // level λ solves 0.25·((4−λ)+(2−λ)) = 1 → λ = 1
        assert_eq!(out.values(), &[3.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn intersection_examples() {
        let x = gf(&[3.0]);
        let cap = SetDescriptor::cap_box(vec![1.0]).unwrap();
        let budget = SetDescriptor::budget(gf(&[1.0]), gf(&[0.5])).unwrap();
        let parts = vec![cap.clone(), budget.clone()];
        let out = project_intersection(&x, &parts, DYKSTRA_TOL, DYKSTRA_MAX_ITER).unwrap();
        assert!((out.get(0, 0) - 0.5).abs() < 1e-9);

        let member = gf(&[0.25]);
        let same = project_intersection(&member, &parts, DYKSTRA_TOL, DYKSTRA_MAX_ITER).unwrap();
        assert_eq!(same, member);

        let single = project_intersection(&x, &[budget], DYKSTRA_TOL, DYKSTRA_MAX_ITER).unwrap();
        assert_eq!(single, project_budget_halfspace(&x, &gf(&[1.0]), &gf(&[0.5])).unwrap());
    }

    #[test]
    fn dykstra_non_convergence_carries_iterate() {
        let x = gf(&[3.0, -2.0]);
        let parts = vec![
            SetDescriptor::ball(1.0).unwrap(),
            SetDescriptor::pointwise_box(vec![2.0, 2.0], vec![3.0, 3.0]).unwrap(),
        ];
        match project_intersection(&x, &parts, DYKSTRA_TOL, 50) {
            Err(Error::NonConvergence { residuals, last, .. }) => {
                assert_eq!(residuals.len(), 2);
                assert!(last.is_finite());
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn membership_examples() {
        assert_eq!(membership_residual(&gf(&[0.5, 0.5]), &SetDescriptor::PointwiseSimplex).unwrap(), 0.0);
        let r = membership_residual(&gf(&[0.7, 0.7]), &SetDescriptor::PointwiseSimplex).unwrap();
        assert!((r - 0.4).abs() < 1e-15);
        let cap = SetDescriptor::cap_box(vec![2.0]).unwrap();
        assert_eq!(membership_residual(&gf(&[3.0]), &cap).unwrap(), 1.0);
    }

    #[test]
    fn exact_budget_cap_matches_dykstra() {
        let grid = TimeGrid::new(2.0, 5).unwrap();
        let price =
            project_pointwise_simplex(&GridFunction::from_fn(grid, 3, |t, j| 1.0 + (t * (j + 1) as f64).sin()).unwrap());
        let e = GridFunction::from_fn(grid, 3, |t, j| 0.5 + 0.2 * j as f64 + 0.1 * t).unwrap();
        let budget = Budget::new(price.clone(), e.clone()).unwrap();
        let caps = vec![1.5, 2.0, 3.0];
        let x = GridFunction::from_fn(grid, 3, |t, j| 3.0 * (t + j as f64).cos() + 1.0).unwrap();
        let exact = project_budget_capped(&x, &budget, Some(&caps)).unwrap();
        let parts = vec![
            SetDescriptor::BudgetHalfspace(budget.clone()),
            SetDescriptor::CapBox { caps: caps.clone() },
        ];
        let dyk = project_intersection(&x, &parts, 1e-13, 200_000).unwrap();
        assert!(exact.distance(&dyk) < 1e-8, "distance {}", exact.distance(&dyk));
        assert!(budget.excess(&exact) <= 1e-12);
    }

    #[test]
    fn exact_projection_with_zero_wealth() {
        let price = gf(&[1.0, 0.0]);
        let e = gf(&[0.0, 2.0]);
        let budget = Budget::new(price, e).unwrap();
        let out = project_budget_capped(&gf(&[3.0, 5.0]), &budget, Some(&[4.0, 4.0])).unwrap();
        assert_eq!(out.values(), &[0.0, 4.0]);
    }

    fn random_gf(vals: Vec<f64>, cells: usize, m: usize) -> GridFunction {
        GridFunction::new(TimeGrid::new(1.5, cells).unwrap(), m, vals).unwrap()
    }

    fn check_projection(
        set: &SetDescriptor,
        x: &GridFunction,
        y: &GridFunction,
        z: &GridFunction,
    ) -> std::result::Result<(), TestCaseError> {
        let px = project(x, set).unwrap();
        let ppx = project(&px, set).unwrap();
        prop_assert!(ppx.distance(&px) <= 1e-10, "idempotence {}", ppx.distance(&px));
        let py = project(y, set).unwrap();
        prop_assert!(px.distance(&py) <= x.distance(y) + 1e-10, "non-expansive");
        let feasible = project(z, set).unwrap();
        let lhs = x.plus_scaled(-1.0, &px).dot(&feasible.plus_scaled(-1.0, &px));
        let scale = 1.0 + x.norm() + feasible.norm();
        prop_assert!(lhs <= 1e-10 * scale * scale, "variational inequality {lhs}");
        Ok(())
    }

    fn budget_set(pv: Vec<f64>, ev: Vec<f64>) -> Budget {
        let p = project_pointwise_simplex(&random_gf(pv, 3, 2));
        let e = random_gf(ev, 3, 2).map(|v| v.abs());
        Budget::new(p, e).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn simplex_projection_properties(
            x in proptest::collection::vec(-3.0f64..3.0, 6),
            y in proptest::collection::vec(-3.0f64..3.0, 6),
            z in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let (x, y, z) = (random_gf(x, 3, 2), random_gf(y, 3, 2), random_gf(z, 3, 2));
            check_projection(&SetDescriptor::PointwiseSimplex, &x, &y, &z)?;
        }

        #[test]
        fn cap_projection_properties(
            x in proptest::collection::vec(-3.0f64..3.0, 6),
            y in proptest::collection::vec(-3.0f64..3.0, 6),
            z in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let set = SetDescriptor::cap_box(vec![0.7, 2.0]).unwrap();
            let (x, y, z) = (random_gf(x, 3, 2), random_gf(y, 3, 2), random_gf(z, 3, 2));
            check_projection(&set, &x, &y, &z)?;
        }

        #[test]
        fn truncated_budget_projection_properties(
            pv in proptest::collection::vec(0.0f64..1.0, 6),
            ev in proptest::collection::vec(0.1f64..1.0, 6),
            x in proptest::collection::vec(-3.0f64..3.0, 6),
            y in proptest::collection::vec(-3.0f64..3.0, 6),
            z in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let budget = budget_set(pv, ev);
            let set = SetDescriptor::intersection(vec![
                SetDescriptor::BudgetHalfspace(budget),
                SetDescriptor::cap_box(vec![2.0, 2.5]).unwrap(),
            ]).unwrap();
            let (x, y, z) = (random_gf(x, 3, 2), random_gf(y, 3, 2), random_gf(z, 3, 2));
            check_projection(&set, &x, &y, &z)?;
        }
    }
}
