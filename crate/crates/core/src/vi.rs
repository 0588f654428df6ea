//! Stampacchia variational inequalities over projectable convex sets.
//!
//! Find `x ∈ C` with `⟨⟨F(x), y − x⟩⟩ ≥ 0` for all `y ∈ C`. Solutions are
//! the zeros of the natural map `x − P_C(x − γF(x))`, which doubles as the
//! convergence measure of the extragradient solver below.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sets::{project, sample_near, SetDescriptor};
use crate::timegrid::GridFunction;
use crate::verify::{CertReport, Verdict, Witness};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Monotonicity {
    Monotone,
    Pseudomonotone,
    Unknown,
}

/// A single-valued map from grid functions to grid functions of the same
/// shape. Implementations must be deterministic and reentrant.
pub trait Operator: Send + Sync {
    fn apply(&self, x: &GridFunction) -> Result<GridFunction>;

    fn monotonicity(&self) -> Monotonicity {
        Monotonicity::Unknown
    }
}

/// Operator backed by a closure.
pub struct FnOperator<F> {
    f: F,
    tag: Monotonicity,
}

impl<F> FnOperator<F>
where
    F: Fn(&GridFunction) -> Result<GridFunction> + Send + Sync,
{
    pub fn new(tag: Monotonicity, f: F) -> Self {
        FnOperator { f, tag }
    }
}

impl<F> Operator for FnOperator<F>
where
    F: Fn(&GridFunction) -> Result<GridFunction> + Send + Sync,
{
    fn apply(&self, x: &GridFunction) -> Result<GridFunction> {
        (self.f)(x)
    }

    fn monotonicity(&self) -> Monotonicity {
        self.tag
    }
}

/// `F(x) = A·vec(x) + b` acting on the flattened values of `x`.
#[derive(Debug, Clone)]
pub struct AffineOperator {
    matrix: Vec<f64>,
    offset: GridFunction,
    tag: Monotonicity,
}

impl AffineOperator {
    /// `matrix` is row-major with side equal to the number of values in `offset`.
    pub fn new(matrix: Vec<f64>, offset: GridFunction, tag: Monotonicity) -> Result<Self> {
        let d = offset.values().len();
        if matrix.len() != d * d {
            return Err(Error::shape(format!("affine operator needs a {d}x{d} matrix")));
        }
        Ok(AffineOperator { matrix, offset, tag })
    }
}

impl Operator for AffineOperator {
    fn apply(&self, x: &GridFunction) -> Result<GridFunction> {
        x.check_shape(&self.offset)?;
        let d = self.offset.values().len();
        let mut out = self.offset.clone();
        let xv = x.values();
        for (i, o) in out.values_mut().iter_mut().enumerate() {
            let row = &self.matrix[i * d..(i + 1) * d];
            *o += row.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(out)
    }

    fn monotonicity(&self) -> Monotonicity {
        self.tag
    }
}

/// Evaluates `op` and enforces the shape and finiteness contract.
pub fn evaluate(op: &dyn Operator, x: &GridFunction) -> Result<GridFunction> {
    let fx = op.apply(x)?;
    x.check_shape(&fx)?;
    if !fx.is_finite() {
        return Err(Error::Numeric("operator returned a non-finite value".into()));
    }
    Ok(fx)
}

/// `‖x − P_C(x − γF(x))‖`.
pub fn vi_residual(x: &GridFunction, op: &dyn Operator, set: &SetDescriptor, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("residual gauge must be positive, got {gamma}")));
    }
    if !x.is_finite() {
        return Err(Error::Numeric("residual requested at a non-finite point".into()));
    }
    let fx = evaluate(op, x)?;
    natural_residual(x, &fx, set, gamma)
}

pub(crate) fn natural_residual(x: &GridFunction, fx: &GridFunction, set: &SetDescriptor, gamma: f64) -> Result<f64> {
    let p = project(&x.plus_scaled(-gamma, fx), set)?;
    Ok(x.distance(&p))
}

#[derive(Debug, Clone, Serialize)]
pub struct ViParams {
    /// Extragradient step; estimated from the operator when `None`.
    pub step: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Gauge `γ` of the natural-map residual used for convergence.
    pub residual_gamma: f64,
    pub max_halvings: usize,
    /// Iterations without a 0.1% improvement before the step is halved.
    pub stagnation_window: usize,
    pub seed: u64,
}

impl Default for ViParams {
    fn default() -> Self {
        ViParams {
            step: None,
            tol: 1e-10,
            max_iter: 20_000,
            residual_gamma: 1.0,
            max_halvings: 6,
            stagnation_window: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub solution: GridFunction,
    pub iterations: usize,
    pub final_residual: f64,
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub step: f64,
    pub halvings: usize,
}

/// Finite-difference Lipschitz estimate from `pairs` random feasible pairs
/// near `x0`.
pub fn estimate_lipschitz(
    op: &dyn Operator,
    set: &SetDescriptor,
    x0: &GridFunction,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = 0.1 * x0.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut best = 0.0f64;
    for _ in 0..pairs {
        let a = sample_near(set, x0, spread, &mut rng)?;
        let b = sample_near(set, &a, 0.1 * spread, &mut rng)?;
        let gap = a.distance(&b);
        if gap <= 1e-14 {
            continue;
        }
        let fa = evaluate(op, &a)?;
        let fb = evaluate(op, &b)?;
        best = best.max(fa.distance(&fb) / gap);
    }
    Ok(best)
}

/// Korpelevich extragradient: `y = P_C(x − γF(x))`, `x⁺ = P_C(x − γF(y))`.
///
/// The step shrinks to `0.9·‖x − y‖/‖F(x) − F(y)‖` whenever it exceeds the
/// local inverse Lipschitz ratio, and halves (at most `max_halvings` times)
/// when the residual stagnates. On budget exhaustion the best iterate seen
/// is returned with `converged = false`.
pub fn solve_vi_extragradient(
    op: &dyn Operator,
    set: &SetDescriptor,
    x0: &GridFunction,
    params: &ViParams,
) -> Result<SolveReport> {
    if !x0.is_finite() {
        return Err(Error::Numeric("non-finite starting point".into()));
    }
    let mut x = project(x0, set)?;
    let mut step = match params.step {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::invalid(format!("step must be positive, got {s}"))),
        None => {
            let l = estimate_lipschitz(op, set, &x, 8, params.seed)?;
            if l > 0.0 {
                0.9 / l
            } else {
                1.0
            }
        }
    };

    let mut history = Vec::new();
    let mut best = (f64::INFINITY, x.clone());
    let mut since_improvement = 0usize;
    let mut window_best = f64::INFINITY;
    let mut halvings = 0usize;

    for iter in 0..=params.max_iter {
        let fx = evaluate(op, &x)?;
        let res = natural_residual(&x, &fx, set, params.residual_gamma)?;
        history.push(res);
        if res < best.0 {
            best = (res, x.clone());
        }
        if res <= params.tol {
            return Ok(SolveReport {
                solution: x,
                iterations: iter,
                final_residual: res,
                residual_history: history,
                converged: true,
                step,
                halvings,
            });
        }
        if iter == params.max_iter {
            break;
        }

        if res < 0.999 * window_best {
            window_best = res;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= params.stagnation_window && halvings < params.max_halvings {
                step *= 0.5;
                halvings += 1;
                since_improvement = 0;
                window_best = res;
            }
        }

        let fy = loop {
            let y = project(&x.plus_scaled(-step, &fx), set)?;
            let fy = evaluate(op, &y)?;
            let dx = x.distance(&y);
            let df = fx.distance(&fy);
            if step * df <= 0.95 * dx || dx == 0.0 {
                break fy;
            }
            step = 0.9 * dx / df;
        };
        x = project(&x.plus_scaled(-step, &fy), set)?;
    }

    Ok(SolveReport {
        solution: best.1,
        iterations: params.max_iter,
        final_residual: best.0,
        residual_history: history,
        converged: false,
        step,
        halvings,
    })
}

/// Minty slack allowed before a sampled inequality counts as violated.
pub const MINTY_SLACK: f64 = 1e-9;

/// Sampled check of `⟨⟨F(y), y − x⟩⟩ ≥ 0` over feasible `y` drawn as
/// projected Gaussian clouds around `x` at several radii.
pub fn minty_certificate(
    x: &GridFunction,
    op: &dyn Operator,
    set: &SetDescriptor,
    samples: usize,
    seed: u64,
) -> Result<CertReport> {
    if samples == 0 {
        return Err(Error::invalid("minty certificate needs at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = set
        .scale_hint()
        .unwrap_or_else(|| x.values().iter().fold(1.0f64, |m, v| m.max(v.abs())));
    let radii = [1e-3, 1e-2, 1e-1, 1.0, 10.0];
    let mut worst = (f64::INFINITY, None);
    for s in 0..samples {
        let y = sample_near(set, x, base * radii[s % radii.len()], &mut rng)?;
        let fy = evaluate(op, &y)?;
        let v = fy.dot(&y.plus_scaled(-1.0, x));
        if v < worst.0 {
            worst = (v, Some(y));
        }
    }
    let mut report = CertReport::new("minty", MINTY_SLACK, samples, seed);
    report.residuals.insert("min_inner_product".into(), worst.0);
    if worst.0 >= -MINTY_SLACK {
        report.verdict = Verdict::Pass;
    } else {
        report.verdict = Verdict::Fail;
        report.witness = worst.1.map(|y| Witness::new("sample y minimising <F(y), y - x>", y.into_values()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timegrid::TimeGrid;

    fn g1() -> TimeGrid {
        TimeGrid::new(1.0, 1).unwrap()
    }

    fn gf(v: &[f64]) -> GridFunction {
        GridFunction::constant(g1(), v).unwrap()
    }

    fn shifted_identity(c: f64) -> impl Operator {
        FnOperator::new(Monotonicity::Monotone, move |x: &GridFunction| Ok(x.map(|v| v - c)))
    }

    fn interval(lo: f64, hi: f64) -> SetDescriptor {
        SetDescriptor::pointwise_box(vec![lo], vec![hi]).unwrap()
    }

    #[test]
    fn residual_examples() {
        let ball = SetDescriptor::ball(1.0).unwrap();
        let id = shifted_identity(0.0);
        assert_eq!(vi_residual(&gf(&[0.0, 0.0]), &id, &ball, 1.0).unwrap(), 0.0);
        assert_eq!(vi_residual(&gf(&[1.0]), &id, &interval(1.0, 2.0), 0.5).unwrap(), 0.0);
        let r = vi_residual(&gf(&[0.0]), &shifted_identity(2.0), &interval(0.0, 1.0), 1.0).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn residual_rejects_bad_gauge() {
        let id = shifted_identity(0.0);
        assert!(vi_residual(&gf(&[0.0]), &id, &SetDescriptor::NonNegative, 0.0).is_err());
    }

    #[test]
    fn extragradient_identity_on_ball() {
        let ball = SetDescriptor::ball(1.0).unwrap();
        let rep = solve_vi_extragradient(&shifted_identity(0.0), &ball, &gf(&[0.6, -0.3, 0.2]), &ViParams::default()).unwrap();
        assert!(rep.converged);
        assert!(rep.solution.norm() < 1e-9);
    }

    #[test]
    fn extragradient_upper_bound_solution() {
        let set = interval(0.0, 1.0);
        let op = shifted_identity(3.0);
        let rep = solve_vi_extragradient(&op, &set, &gf(&[0.2]), &ViParams::default()).unwrap();
        assert!(rep.converged);
        assert!((rep.solution.get(0, 0) - 1.0).abs() < 1e-10);
        // ⟨F(1), z − 1⟩ = −2(z − 1) ≥ 0 on [0,1]
        for i in 0..=10 {
            let z = i as f64 / 10.0;
            assert!(-2.0 * (z - 1.0) >= 0.0);
        }
        let again = vi_residual(&rep.solution, &op, &set, 1.0).unwrap();
        assert!(again <= ViParams::default().tol);
    }

    #[test]
    fn nan_operator_is_numeric_error() {
        let op = FnOperator::new(Monotonicity::Unknown, |x: &GridFunction| Ok(x.map(|_| f64::NAN)));
        let err = solve_vi_extragradient(&op, &interval(0.0, 1.0), &gf(&[0.5]), &ViParams { step: Some(0.1), ..Default::default() });
        assert!(matches!(err, Err(Error::Numeric(_))));
    }

    #[test]
    fn budget_exhaustion_keeps_best_iterate() {
        let op = shifted_identity(3.0);
        let params = ViParams { step: Some(1e-3), max_iter: 5, ..Default::default() };
        let rep = solve_vi_extragradient(&op, &interval(0.0, 1.0), &gf(&[0.0]), &params).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.residual_history.len(), 6);
        let min = rep.residual_history.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(rep.final_residual, min);
    }

    #[test]
    fn minty_examples() {
        let ball = SetDescriptor::ball(1.0).unwrap();
        let id = shifted_identity(0.0);
        let rep = minty_certificate(&gf(&[0.0, 0.0]), &id, &ball, 200, 1).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass);

        let op = shifted_identity(3.0);
        let set = interval(0.0, 1.0);
        assert_eq!(minty_certificate(&gf(&[1.0]), &op, &set, 200, 2).unwrap().verdict, Verdict::Pass);

        let fail = minty_certificate(&gf(&[0.0]), &op, &set, 200, 3).unwrap();
        assert_eq!(fail.verdict, Verdict::Fail);
        let w = fail.witness.unwrap();
        assert!(w.values[0] > 0.9, "witness {:?}", w.values);
    }

    #[test]
    fn minty_rejects_zero_samples() {
        let id = shifted_identity(0.0);
        assert!(minty_certificate(&gf(&[0.0]), &id, &SetDescriptor::NonNegative, 0, 0).is_err());
    }
}
