#![allow(dead_code)]

use std::f64::consts::PI;

use exchange_qvi::{Agent, Economy, GridFunction, TimeGrid, UtilitySpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn single_cell() -> TimeGrid {
    TimeGrid::new(1.0, 1).unwrap()
}

pub fn constant(grid: TimeGrid, v: &[f64]) -> GridFunction {
    GridFunction::constant(grid, v).unwrap()
}

pub fn quad_agent(grid: TimeGrid, bliss: &[f64], endowment: &[f64]) -> Agent {
    let u = UtilitySpec::quadratic(constant(grid, bliss), vec![1.0; bliss.len()]).unwrap();
    Agent::new(constant(grid, endowment), u).unwrap()
}

pub const CD_B1: [f64; 2] = [2.0, 1.0];
pub const CD_B2: [f64; 2] = [1.0, 2.0];
pub const CD_E1: [f64; 2] = [1.0, 0.2];
pub const CD_E2: [f64; 2] = [0.2, 1.0];

/// Two agents, two goods, one unit cell, `u_i(w) = b_i·w − ½‖w‖²`.
pub fn oracle_cd_quad() -> Economy {
    let g = single_cell();
    Economy::new(g, 2, vec![quad_agent(g, &CD_B1, &CD_E1), quad_agent(g, &CD_B2, &CD_E2)]).unwrap()
}

/// Maximiser of `b·x − ½Σ q_j x_j²` over `p·x ≤ w`, `0 ≤ x ≤ cap`, from the
/// KKT conditions: `x_j(λ) = clamp((b_j − λ p_j)/q_j, 0, cap_j)` with the
/// multiplier found by bisection on the monotone spending curve.
pub fn kkt_quadratic_demand(b: &[f64], q: &[f64], p: &[f64], wealth: f64, cap: &[f64]) -> Vec<f64> {
    let demand = |lam: f64| -> Vec<f64> {
        (0..b.len()).map(|j| ((b[j] - lam * p[j]) / q[j]).clamp(0.0, cap[j])).collect()
    };
    let spend = |x: &[f64]| -> f64 { x.iter().zip(p).map(|(a, b)| a * b).sum() };
    let free = demand(0.0);
    if spend(&free) <= wealth {
        return free;
    }
    let mut hi = 1.0;
    while spend(&demand(hi)) > wealth {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if spend(&demand(mid)) > wealth {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    demand(hi)
}

/// Excess demand for good 1 in the oracle economy at price `(t, 1 − t)`.
pub fn cd_excess_good0(t: f64, caps: &[f64]) -> (f64, [Vec<f64>; 2]) {
    let p = [t, 1.0 - t];
    let w1 = p[0] * CD_E1[0] + p[1] * CD_E1[1];
    let w2 = p[0] * CD_E2[0] + p[1] * CD_E2[1];
    let x1 = kkt_quadratic_demand(&CD_B1, &[1.0, 1.0], &p, w1, caps);
    let x2 = kkt_quadratic_demand(&CD_B2, &[1.0, 1.0], &p, w2, caps);
    let z = x1[0] + x2[0] - CD_E1[0] - CD_E2[0];
    (z, [x1, x2])
}

/// Equilibrium of the oracle economy: a `1e-3` scan of the price simplex for
/// sign changes of the excess demand for good 1, refined by bisection.
pub fn cd_oracle(caps: &[f64]) -> (Vec<f64>, [Vec<f64>; 2]) {
    let steps = 1000;
    let mut bracket = None;
    let mut prev = (1e-9, cd_excess_good0(1e-9, caps).0);
    for k in 1..=steps {
        let t = (k as f64 / steps as f64).min(1.0 - 1e-9);
        let z = cd_excess_good0(t, caps).0;
        if prev.1 > 0.0 && z <= 0.0 {
            bracket = Some((prev.0, t));
            break;
        }
        prev = (t, z);
    }
    let (mut lo, mut hi) = bracket.expect("excess demand changes sign on the simplex");
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cd_excess_good0(mid, caps).0 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    (vec![t, 1.0 - t], cd_excess_good0(t, caps).1)
}

fn endowment_curve(rng: &mut ChaCha8Rng, grid: TimeGrid, goods: usize) -> GridFunction {
    let kind = rng.random_range(0..3);
    let params: Vec<(f64, f64, f64)> = (0..goods)
        .map(|_| (rng.random_range(0.4..2.0), rng.random_range(-0.3..0.3), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let horizon = grid.horizon();
    GridFunction::from_fn(grid, goods, |t, j| {
        let (level, slope, phase) = params[j];
        match kind {
            0 => level,
            1 => level + slope * (t / horizon - 0.5),
            _ => level * (1.0 + 0.3 * (2.0 * PI * t / horizon + phase).sin()),
        }
    })
    .unwrap()
}

/// Randomised economy for seed `seed`: 2 to 4 agents, 1 to 3 goods, at most
/// 16 cells, a mix of quadratic and log-shift utilities. Quadratic bliss
/// points sit well above any feasible consumption so nobody is satiated.
pub fn random_economy(seed: u64) -> Economy {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + seed);
    let agents = rng.random_range(2..=4);
    let goods = [1, 2, 2, 3, 3][rng.random_range(0..5)];
    let cells = [1, 2, 4, 8, 16][rng.random_range(0..5)];
    let horizon = rng.random_range(0.5..2.0);
    let grid = TimeGrid::new(horizon, cells).unwrap();
    let endowments: Vec<GridFunction> = (0..agents).map(|_| endowment_curve(&mut rng, grid, goods)).collect();
    let peak: f64 = endowments.iter().map(|e| e.values().iter().cloned().fold(0.0, f64::max)).sum();
    let out = endowments
        .into_iter()
        .map(|e| {
            let u = if rng.random_bool(0.5) {
                let q: Vec<f64> = (0..goods).map(|_| rng.random_range(0.5..2.0)).collect();
                let lift: Vec<f64> = (0..goods).map(|_| rng.random_range(1.0..3.0)).collect();
                let bliss = GridFunction::from_fn(grid, goods, |t, j| {
                    q[j] * (3.0 * peak + lift[j] * (1.0 + 0.2 * (t / horizon * PI).cos()))
                })
                .unwrap();
                UtilitySpec::quadratic(bliss, q).unwrap()
            } else {
                let a: Vec<f64> = (0..goods).map(|_| rng.random_range(0.5..2.0)).collect();
                let weights = GridFunction::from_fn(grid, goods, |t, j| a[j] * (1.0 + 0.25 * (t / horizon + j as f64).sin())).unwrap();
                UtilitySpec::log_shift(weights, rng.random_range(0.3..1.5)).unwrap()
            };
            Agent::new(e, u).unwrap()
        })
        .collect();
    Economy::new(grid, goods, out).unwrap()
}

/// Two agents with out-of-phase sinusoidal endowments of two goods.
pub fn sinusoid_economy(cells: usize) -> Economy {
    let grid = TimeGrid::new(1.0, cells).unwrap();
    let e1 = GridFunction::from_fn(grid, 2, |t, j| 1.0 + 0.5 * (2.0 * PI * t + j as f64).sin()).unwrap();
    let e2 = GridFunction::from_fn(grid, 2, |t, j| 1.0 - 0.4 * (2.0 * PI * t + 0.5 * j as f64).sin()).unwrap();
    let a = GridFunction::from_fn(grid, 2, |t, j| 1.0 + 0.3 * (2.0 * PI * t).cos() + 0.2 * j as f64).unwrap();
    let b = GridFunction::from_fn(grid, 2, |t, j| 6.0 + (2.0 * PI * t).sin() - j as f64).unwrap();
    Economy::new(
        grid,
        2,
        vec![
            Agent::new(e1, UtilitySpec::log_shift(a, 0.5).unwrap()).unwrap(),
            Agent::new(e2, UtilitySpec::quadratic(b, vec![1.0, 1.5]).unwrap()).unwrap(),
        ],
    )
    .unwrap()
}
