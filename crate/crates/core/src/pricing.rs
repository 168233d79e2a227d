//! Real-time price, per-slot revenue and cost terms, and the δ-weighted
//! profit of a service plan.
//!
//! All profit figures are marginal: a plan is priced against the station
//! load *before* it is added, so vehicles admitted earlier raise the price
//! seen by later ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CostParams, PricingParams, ServicePlan, StationConfig};

/// Profit split between vehicle owners and stations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProfitBreakdown {
    pub ev_profit: f64,
    pub cs_profit: f64,
    pub weighted_total: f64,
}

impl ProfitBreakdown {
    pub fn new(ev_profit: f64, cs_profit: f64, delta: f64) -> Result<Self> {
        Ok(ProfitBreakdown {
            ev_profit,
            cs_profit,
            weighted_total: weighted_total(ev_profit, cs_profit, delta)?,
        })
    }
}

/// `c0 + c1 · load`.
pub fn price(pp: &PricingParams, load: f64) -> Result<f64> {
    if !(load >= 0.0) {
        return Err(Error::contract(format!("load must be non-negative, got {load}")));
    }
    Ok(pp.price_at(load))
}

/// Negated integral of the price while the load moves from `base` to
/// `final_load`. Valid for any real loads.
pub fn revenue_between(pp: &PricingParams, base: f64, final_load: f64) -> f64 {
    let d = final_load - base;
    -(pp.intercept * d + 0.5 * pp.slope * d * (final_load + base))
}

/// Vehicle revenue for one slot: negative while charging (the load rises),
/// positive while discharging.
pub fn ev_revenue_slot(pp: &PricingParams, base: f64, final_load: f64) -> Result<f64> {
    if !(base >= 0.0 && final_load >= 0.0) {
        return Err(Error::contract(format!(
            "loads must be non-negative, got base {base} and final {final_load}"
        )));
    }
    Ok(revenue_between(pp, base, final_load))
}

/// Maintenance fee plus battery degradation and fluctuation for one slot.
/// `e_prev` is 0 on the first slot of a plan.
pub fn ev_cost_slot(maintenance: f64, costs: &CostParams, e_now: f64, e_prev: f64) -> f64 {
    let ramp = e_now - e_prev;
    maintenance + costs.degradation * e_now * e_now + costs.fluctuation * ramp * ramp
}

/// Net cost a hosted vehicle causes the station per slot: labour paid out
/// minus maintenance collected. Negative when maintenance exceeds labour.
pub fn cs_cost_slot(station: &StationConfig) -> f64 {
    station.labor_cost - station.maintenance_cost
}

/// `(1 - δ)·ev + δ·cs`.
pub fn weighted_total(ev_profit: f64, cs_profit: f64, delta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::contract(format!("delta must lie in [0, 1], got {delta}")));
    }
    Ok((1.0 - delta) * ev_profit + delta * cs_profit)
}

/// `(ev_profit, cs_profit)` of a power profile laid over `pre_loads`.
pub fn profile_profit(
    powers: &[f64],
    pre_loads: &[f64],
    pp: &PricingParams,
    costs: &CostParams,
    station: &StationConfig,
) -> Result<(f64, f64)> {
    if powers.len() != pre_loads.len() {
        return Err(Error::contract(format!(
            "{} powers priced against {} loads",
            powers.len(),
            pre_loads.len()
        )));
    }
    let cs_cost = cs_cost_slot(station);
    let mut p_ev = 0.0;
    let mut p_cs = 0.0;
    let mut prev = 0.0;
    for (&e, &base) in powers.iter().zip(pre_loads) {
        let revenue = revenue_between(pp, base, base + e);
        p_ev += revenue - ev_cost_slot(station.maintenance_cost, costs, e, prev);
        p_cs += -revenue - cs_cost;
        prev = e;
    }
    Ok((p_ev, p_cs))
}

pub fn plan_profit(
    plan: &ServicePlan,
    pre_loads: &[f64],
    pp: &PricingParams,
    costs: &CostParams,
    station: &StationConfig,
) -> Result<(f64, f64)> {
    if plan.powers.len() != plan.window.len() {
        return Err(Error::contract("plan powers do not match its window"));
    }
    profile_profit(&plan.powers, pre_loads, pp, costs, station)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures;
    use crate::model::{SlotWindow, StationConfig};
    use proptest::prelude::*;

    const PP: PricingParams = PricingParams {
        intercept: 0.001,
        slope: 0.002,
    };

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    /// Composite Simpson rule; exact for the affine price up to rounding.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn price_examples() {
        assert!(close(price(&PP, 0.0).unwrap(), 0.001));
        assert!(close(price(&PP, 70.0).unwrap(), 0.141));
        let free = PricingParams { intercept: 0.0, slope: 0.0 };
        assert_eq!(price(&free, 50.0).unwrap(), 0.0);
        assert!(price(&PP, -1.0).is_err());
    }

    #[test]
    fn revenue_examples() {
        assert!(close(ev_revenue_slot(&PP, 10.0, 15.0).unwrap(), -0.130));
        assert_eq!(ev_revenue_slot(&PP, 12.0, 12.0).unwrap(), 0.0);
        assert!(close(ev_revenue_slot(&PP, 15.0, 10.0).unwrap(), 0.130));
        assert!(ev_revenue_slot(&PP, -1.0, 3.0).is_err());
    }

    #[test]
    fn ev_cost_examples() {
        let costs = fixtures::costs();
        assert!(close(ev_cost_slot(0.4, &costs, 5.0, 0.0), 0.475));
        assert_eq!(ev_cost_slot(0.4, &costs, 0.0, 0.0), 0.4);
        let off = CostParams { degradation: 0.0, fluctuation: 0.0, ..costs };
        assert_eq!(ev_cost_slot(0.4, &off, 12.0, 3.0), 0.4);
    }

    #[test]
    fn cs_cost_examples() {
        let st = |lc: f64, mc: f64| StationConfig {
            labor_cost: lc,
            maintenance_cost: mc,
            ..fixtures::station(1, vec![])
        };
        assert!(close(cs_cost_slot(&st(0.3, 0.4)), -0.1));
        assert_eq!(cs_cost_slot(&st(0.35, 0.35)), 0.0);
        assert!(close(cs_cost_slot(&st(0.4, 0.2)), 0.2));
    }

    #[test]
    fn weighted_total_examples() {
        assert_eq!(weighted_total(100.0, 50.0, 0.0).unwrap(), 100.0);
        assert_eq!(weighted_total(100.0, 50.0, 1.0).unwrap(), 50.0);
        assert_eq!(weighted_total(100.0, 50.0, 0.5).unwrap(), 75.0);
        assert!(weighted_total(1.0, 1.0, 1.2).is_err());
    }

    #[test]
    fn single_slot_plan_profit() {
        let st = fixtures::station(1, vec![10.0]);
        let plan = ServicePlan {
            ev_id: 1,
            station: 0,
            window: SlotWindow::new(1, 1).unwrap(),
            powers: vec![5.0],
        };
        let (p_ev, p_cs) = plan_profit(&plan, &[10.0], &PP, &fixtures::costs(), &st).unwrap();
        assert!(close(p_ev, -0.605), "{p_ev}");
        assert!(close(p_cs, 0.230), "{p_cs}");
    }

    #[test]
    fn idle_plan_only_pays_fixed_costs() {
        let st = fixtures::station(1, vec![10.0; 3]);
        let (p_ev, p_cs) =
            profile_profit(&[0.0; 3], &[10.0, 20.0, 30.0], &PP, &fixtures::costs(), &st).unwrap();
        assert!(close(p_ev, -1.2));
        assert!(close(p_cs, 0.3));
    }

    #[test]
    fn discharge_mirrors_charge_revenue() {
        let costs = CostParams { degradation: 0.0, fluctuation: 0.0, ..fixtures::costs() };
        let st = StationConfig { maintenance_cost: 0.0, labor_cost: 0.0, ..fixtures::station(1, vec![]) };
        let base = [30.0, 40.0];
        let (c_ev, c_cs) = profile_profit(&[5.0, 3.0], &base, &PP, &costs, &st).unwrap();
        // discharging from the post-charge load back down undoes the integral
        let raised = [35.0, 43.0];
        let (d_ev, d_cs) = profile_profit(&[-5.0, -3.0], &raised, &PP, &costs, &st).unwrap();
        assert!(close(c_ev, -d_ev) && close(c_cs, -d_cs));
    }

    #[test]
    fn length_mismatch_is_a_contract_error() {
        let st = fixtures::station(1, vec![]);
        assert!(profile_profit(&[1.0, 2.0], &[1.0], &PP, &fixtures::costs(), &st).is_err());
    }

    proptest! {
        #[test]
        fn revenue_is_antisymmetric(b in 0.0..200.0f64, f in 0.0..200.0f64) {
            let fwd = ev_revenue_slot(&PP, b, f).unwrap();
            let back = ev_revenue_slot(&PP, f, b).unwrap();
            prop_assert!((fwd + back).abs() < 1e-12);
        }

        #[test]
        fn revenue_is_path_additive(b in 0.0..200.0f64, m in 0.0..200.0f64, f in 0.0..200.0f64) {
            let whole = revenue_between(&PP, b, f);
            let split = revenue_between(&PP, b, m) + revenue_between(&PP, m, f);
            prop_assert!((whole - split).abs() < 1e-9);
            let quad = -simpson(|z| PP.price_at(z), b, f, 64);
            prop_assert!((whole - quad).abs() < 1e-9);
        }

        #[test]
        fn system_leak_is_labour(powers in prop::collection::vec(-10.0..15.0f64, 1..8),
                                  lc in 0.0..1.0f64, mc in 0.0..1.0f64) {
            let costs = CostParams { degradation: 0.0, fluctuation: 0.0, ..fixtures::costs() };
            let st = StationConfig { labor_cost: lc, maintenance_cost: mc, ..fixtures::station(1, vec![]) };
            let base: Vec<f64> = (0..powers.len()).map(|i| 20.0 + i as f64).collect();
            let (p_ev, p_cs) = profile_profit(&powers, &base, &PP, &costs, &st).unwrap();
            prop_assert!((p_ev + p_cs + lc * powers.len() as f64).abs() < 1e-9);
        }

        #[test]
        fn breakdown_weights_are_affine(ev in -1e3..1e3f64, cs in -1e3..1e3f64, d in 0.0..=1.0f64) {
            let b = ProfitBreakdown::new(ev, cs, d).unwrap();
            let expect = (1.0 - d) * ev + d * cs;
            prop_assert!((b.weighted_total - expect).abs() <= 1e-9 * expect.abs().max(1.0));
        }
    }
}
