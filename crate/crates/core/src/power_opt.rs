//! Post-admission refinement of a vehicle's power profile.
//!
//! Once a vehicle is admitted, its profile is reshaped to make the station
//! load over the service window as flat as possible: minimise the RMS
//! deviation of `z_t + e_t` from the window mean, keeping the requested
//! energy, the class power box and the battery band.
//!
//! Because the energy total is fixed, the window mean `z̄ = (Σz + E)/n` is a
//! constant and the objective reduces to `‖e − y‖²` with `y_t = z̄ − z_t`.
//! The solver runs projected gradient descent on that quadratic; each
//! projection onto the feasible set (hyperplane ∩ box ∩ prefix band) is
//! computed with Dykstra's alternating projection algorithm.

use crate::error::{Error, Result};
use crate::model::{CostParams, EvClass};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 10_000;

/// Largest constraint violation accepted from a projection, in kWh.
const PROJECTION_TOL: f64 = 1e-9;
const MAX_DYKSTRA_SWEEPS: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// Station load over the window before this vehicle, kW.
    pub pre_loads: Vec<f64>,
    /// Required `Σe`, kWh.
    pub energy_target: f64,
    /// State of charge when service starts.
    pub soc_init: f64,
    pub capacity: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl QpProblem {
    pub fn for_class(
        class: EvClass,
        costs: &CostParams,
        pre_loads: Vec<f64>,
        energy_target: f64,
        soc_init: f64,
        capacity: f64,
    ) -> Self {
        let (lo, hi) = class.power_bounds(costs);
        let n = pre_loads.len();
        QpProblem {
            pre_loads,
            energy_target,
            soc_init,
            capacity,
            lower: vec![lo; n],
            upper: vec![hi; n],
        }
    }

    pub fn len(&self) -> usize {
        self.pre_loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pre_loads.is_empty()
    }

    /// Window mean of the load after this vehicle is added.
    pub fn mean_load(&self) -> f64 {
        (self.pre_loads.iter().sum::<f64>() + self.energy_target) / self.len() as f64
    }

    /// `Σ (z_t + e_t − z̄)²`.
    pub fn objective(&self, e: &[f64]) -> f64 {
        let zbar = self.mean_load();
        self.pre_loads
            .iter()
            .zip(e)
            .map(|(z, x)| (z + x - zbar).powi(2))
            .sum()
    }

    pub fn rmsd(&self, e: &[f64]) -> f64 {
        (self.objective(e) / self.len() as f64).sqrt()
    }

    /// Checks that some profile satisfies every constraint, by propagating the
    /// reachable state-of-charge interval slot by slot.
    pub fn check_feasible(&self) -> Result<()> {
        let n = self.len();
        if n == 0 || self.lower.len() != n || self.upper.len() != n {
            return Err(Error::contract("bounds and loads must have the same non-zero length"));
        }
        if let Some(i) = (0..n).find(|&i| self.lower[i] > self.upper[i]) {
            return Err(Error::Infeasible(format!("empty power box at slot {i}")));
        }
        if !(0.0..=self.capacity).contains(&self.soc_init) {
            return Err(Error::Infeasible(format!(
                "initial state of charge {} outside [0, {}]",
                self.soc_init, self.capacity
            )));
        }
        let goal = self.soc_init + self.energy_target;
        let (mut lo, mut hi) = (self.soc_init, self.soc_init);
        for i in 0..n {
            lo = (lo + self.lower[i]).max(0.0);
            hi = (hi + self.upper[i]).min(self.capacity);
            if lo > hi + PROJECTION_TOL {
                return Err(Error::Infeasible(format!("battery band unreachable at slot {i}")));
            }
        }
        if goal < lo - PROJECTION_TOL || goal > hi + PROJECTION_TOL {
            return Err(Error::Infeasible(format!(
                "final energy {goal} outside the reachable range [{lo}, {hi}]"
            )));
        }
        Ok(())
    }

    fn max_violation(&self, e: &[f64]) -> f64 {
        let mut worst = (e.iter().sum::<f64>() - self.energy_target).abs();
        let mut soc = self.soc_init;
        for i in 0..e.len() {
            worst = worst
                .max(self.lower[i] - e[i])
                .max(e[i] - self.upper[i]);
            soc += e[i];
            worst = worst.max(-soc).max(soc - self.capacity);
        }
        worst
    }

    /// Euclidean projection of `x` onto the feasible set.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        // sets: 0 = energy hyperplane, 1 = box, 2.. = prefix band per slot
        let sets = n + 2;
        let mut increments = vec![vec![0.0; n]; sets];
        let mut cur = x.to_vec();
        let mut y = vec![0.0; n];
        for _ in 0..MAX_DYKSTRA_SWEEPS {
            let start = cur.clone();
            for (s, inc) in increments.iter_mut().enumerate() {
                for i in 0..n {
                    y[i] = cur[i] + inc[i];
                }
                cur.copy_from_slice(&y);
                match s {
                    0 => {
                        let shift = (self.energy_target - cur.iter().sum::<f64>()) / n as f64;
                        cur.iter_mut().for_each(|v| *v += shift);
                    }
                    1 => {
                        for i in 0..n {
                            cur[i] = cur[i].clamp(self.lower[i], self.upper[i]);
                        }
                    }
                    _ => {
                        let upto = s - 2;
                        let prefix: f64 = cur[..=upto].iter().sum();
                        let (lo, hi) = (-self.soc_init, self.capacity - self.soc_init);
                        let excess = if prefix > hi {
                            prefix - hi
                        } else if prefix < lo {
                            prefix - lo
                        } else {
                            0.0
                        };
                        if excess != 0.0 {
                            let d = excess / (upto + 1) as f64;
                            cur[..=upto].iter_mut().for_each(|v| *v -= d);
                        }
                    }
                }
                for i in 0..n {
                    inc[i] = y[i] - cur[i];
                }
            }
            let moved = start
                .iter()
                .zip(&cur)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if moved < 1e-13 && self.max_violation(&cur) < PROJECTION_TOL {
                return Ok(cur);
            }
        }
        let residual = self.max_violation(&cur);
        Err(Error::NotConverged {
            iterations: MAX_DYKSTRA_SWEEPS,
            residual,
            last_iterate: cur,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub powers: Vec<f64>,
    pub iterations: usize,
    /// Objective at the start point and after every iteration.
    pub objective_history: Vec<f64>,
}

/// Flattest feasible profile, started from the even split projected onto the
/// feasible set.
pub fn solve_rmsd(p: &QpProblem, tol: f64, max_iters: usize) -> Result<QpSolution> {
    p.check_feasible()?;
    let even = vec![p.energy_target / p.len() as f64; p.len()];
    let start = p.project(&even)?;
    descend(p, start, tol, max_iters)
}

/// As [`solve_rmsd`], warm-started from a feasible profile such as a quote.
pub fn solve_rmsd_from(p: &QpProblem, warm: &[f64], tol: f64, max_iters: usize) -> Result<QpSolution> {
    p.check_feasible()?;
    if warm.len() != p.len() {
        return Err(Error::contract("warm start has the wrong length"));
    }
    let start = if p.max_violation(warm) <= PROJECTION_TOL {
        warm.to_vec()
    } else {
        p.project(warm)?
    };
    descend(p, start, tol, max_iters)
}

fn descend(p: &QpProblem, mut e: Vec<f64>, tol: f64, max_iters: usize) -> Result<QpSolution> {
    let zbar = p.mean_load();
    // gradient of ‖e − y‖² is 2(e − y); its Lipschitz constant is 2
    const STEP: f64 = 0.5;
    let mut history = vec![p.objective(&e)];
    for it in 1..=max_iters {
        let trial: Vec<f64> = e
            .iter()
            .zip(&p.pre_loads)
            .map(|(x, z)| x - STEP * 2.0 * (z + x - zbar))
            .collect();
        let next = p.project(&trial)?;
        let f_prev = *history.last().unwrap();
        let f_next = p.objective(&next);
        let step_size = next
            .iter()
            .zip(&e)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        history.push(f_next);
        e = next;
        if (f_prev - f_next).abs() <= tol * f_prev.max(1.0) && step_size <= 1e-7 {
            return Ok(QpSolution {
                powers: e,
                iterations: it,
                objective_history: history,
            });
        }
    }
    let residual = history[history.len() - 2] - history[history.len() - 1];
    Err(Error::NotConverged {
        iterations: max_iters,
        residual: residual.abs(),
        last_iterate: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn problem(pre: Vec<f64>, target: f64, lo: f64, hi: f64, soc0: f64, cap: f64) -> QpProblem {
        let n = pre.len();
        QpProblem {
            pre_loads: pre,
            energy_target: target,
            soc_init: soc0,
            capacity: cap,
            lower: vec![lo; n],
            upper: vec![hi; n],
        }
    }

    fn solve(p: &QpProblem) -> Vec<f64> {
        solve_rmsd(p, DEFAULT_TOL, DEFAULT_MAX_ITERS).unwrap().powers
    }

    #[test]
    fn symmetric_loads_split_evenly() {
        let e = solve(&problem(vec![10.0, 10.0], 10.0, 0.0, 15.0, 20.0, 100.0));
        assert!((e[0] - 5.0).abs() < 1e-4 && (e[1] - 5.0).abs() < 1e-4, "{e:?}");
    }

    #[test]
    fn valley_is_filled_first() {
        let e = solve(&problem(vec![10.0, 20.0], 10.0, 0.0, 15.0, 20.0, 100.0));
        assert!((e[0] - 10.0).abs() < 1e-4 && e[1].abs() < 1e-4, "{e:?}");
    }

    #[test]
    fn bidirectional_shaves_the_peak_into_the_valley() {
        let p = problem(vec![10.0, 20.0], 0.0, -10.0, 15.0, 50.0, 100.0);
        let e = solve(&p);
        assert!((e[0] - 5.0).abs() < 1e-4 && (e[1] + 5.0).abs() < 1e-4, "{e:?}");
        assert!(p.objective(&e) < 1e-8);
    }

    #[test]
    fn battery_band_binds() {
        // flattening wants [10, -10] but only 5 kWh of headroom exists
        let p = problem(vec![10.0, 30.0], 0.0, -10.0, 15.0, 95.0, 100.0);
        let e = solve(&p);
        assert!((e[0] - 5.0).abs() < 1e-5 && (e[1] + 5.0).abs() < 1e-5, "{e:?}");
    }

    #[test]
    fn unreachable_energy_is_infeasible() {
        let p = problem(vec![10.0, 10.0], 40.0, 0.0, 15.0, 0.0, 100.0);
        assert!(matches!(solve_rmsd(&p, DEFAULT_TOL, 10), Err(Error::Infeasible(_))));
        let p = problem(vec![10.0, 10.0], 20.0, 0.0, 15.0, 90.0, 100.0);
        assert!(matches!(solve_rmsd(&p, DEFAULT_TOL, 10), Err(Error::Infeasible(_))));
    }

    #[test]
    fn iteration_budget_is_enforced() {
        let p = problem(vec![10.0, 20.0, 5.0], 12.0, 0.0, 15.0, 20.0, 100.0);
        match solve_rmsd(&p, DEFAULT_TOL, 1) {
            Err(Error::NotConverged { last_iterate, .. }) => assert_eq!(last_iterate.len(), 3),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn warm_start_only_improves(
            pre in prop::collection::vec(0.0..80.0f64, 1..10),
            soc0 in 0.0..100.0f64, frac in 0.0..1.0f64,
        ) {
            let n = pre.len();
            let target = frac * (100.0 - soc0).min(15.0 * n as f64);
            let p = problem(pre, target, 0.0, 15.0, soc0, 100.0);
            let warm = vec![target / n as f64; n];
            let sol = solve_rmsd_from(&p, &warm, DEFAULT_TOL, DEFAULT_MAX_ITERS).unwrap();
            for w in sol.objective_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
            prop_assert!(p.max_violation(&sol.powers) < 1e-8);
            prop_assert!((sol.powers.iter().sum::<f64>() - target).abs() < 1e-6);
        }
    }
}
