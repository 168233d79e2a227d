//! Exhaustive offline reference for tiny instances.
//!
//! Every assignment of vehicles to stations, rejection included, is tried.
//! For each one the per-vehicle profiles are found on a 0.1 kWh power grid by
//! dynamic programming, and the vehicles are coupled through the station
//! price by best-response rounds in id order until no profile changes. The
//! assignment with the largest δ-weighted profit wins; ties keep the first
//! one in enumeration order.
//!
//! The grid resolution means the result is an optimum up to about a cent on
//! the instances [`tiny_instances`] produces, which is what the greedy gap
//! check needs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{
    validate_scenario, CostParams, Ev, EvClass, EvStation, PricingParams, Scenario, ServicePlan,
    StationConfig, TimeGrid,
};
use crate::pricing::{profile_profit, revenue_between, ProfitBreakdown};
use crate::rng;
use crate::scheduler::{Algorithm, CommittedPlan, MessageLog, RunReport};

/// Power grid resolution, kWh per slot.
pub const GRID_STEP_KWH: f64 = 0.1;
/// Slack, in dollars, by which a continuous schedule may beat the grid.
pub const GRID_SLACK_USD: f64 = 0.01;
/// Best-response rounds after the initial sequential pass.
pub const MAX_ROUNDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_evs: usize,
    pub max_stations: usize,
    pub max_slots: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_evs: 4,
            max_stations: 2,
            max_slots: 8,
        }
    }
}

pub fn solve_offline_exact(s: &Scenario, limits: OracleLimits) -> Result<RunReport> {
    if s.evs.len() > limits.max_evs
        || s.stations.len() > limits.max_stations
        || s.grid.slot_count > limits.max_slots
    {
        return Err(Error::contract(format!(
            "instance with {} vehicles, {} stations and {} slots exceeds the oracle limits {limits:?}",
            s.evs.len(),
            s.stations.len(),
            s.grid.slot_count
        )));
    }
    let violations = validate_scenario(s);
    if !violations.is_empty() {
        return Err(Error::InvalidScenario(violations));
    }

    let mut order: Vec<usize> = (0..s.evs.len()).collect();
    order.sort_by_key(|&a| s.evs[a].id);
    let k_count = s.stations.len();

    // choice[i] for order[i]: 0 = rejected, k + 1 = station k
    let mut choice = vec![0usize; order.len()];
    let mut best: Option<(f64, Vec<Option<Vec<f64>>>, Vec<usize>)> = None;
    loop {
        if let Some((value, profiles)) = evaluate(s, &order, &choice)? {
            if best.as_ref().map_or(true, |b| value > b.0) {
                best = Some((value, profiles, choice.clone()));
            }
        }
        // odometer
        let mut i = 0;
        while i < choice.len() {
            choice[i] += 1;
            if choice[i] <= k_count {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
        if i == choice.len() {
            break;
        }
    }
    let (_, profiles, choice) = best.expect("rejecting everyone is always feasible");
    report(s, &order, &choice, &profiles)
}

/// Weighted profit of one assignment with its best-response profiles, or
/// `None` if the assignment breaks capacity or some target is unreachable.
fn evaluate(
    s: &Scenario,
    order: &[usize],
    choice: &[usize],
) -> Result<Option<(f64, Vec<Option<Vec<f64>>>)>> {
    let mut states = s.station_states();
    for (&a, &c) in order.iter().zip(choice) {
        if c == 0 {
            continue;
        }
        let k = c - 1;
        let ev = &s.evs[a];
        if !states[k].has_room(&s.grid, &ev.stations[k]) {
            return Ok(None);
        }
        states[k].reserve(ev.window(k).expect("validated"));
    }

    let mut loads: Vec<Vec<f64>> = s.stations.iter().map(|st| st.base_load_kw.clone()).collect();
    let mut profiles: Vec<Option<Vec<f64>>> = vec![None; order.len()];

    for round in 0..=MAX_ROUNDS {
        let mut changed = false;
        for (i, (&a, &c)) in order.iter().zip(choice).enumerate() {
            if c == 0 {
                continue;
            }
            let k = c - 1;
            let ev = &s.evs[a];
            let window = ev.window(k).expect("validated");
            if let Some(old) = &profiles[i] {
                for (t, e) in window.indices().zip(old) {
                    loads[k][t] -= e;
                }
            }
            let pre = &loads[k][window.indices()];
            let Some(new) = best_response(ev, k, pre, &s.pricing, &s.costs) else {
                return Ok(None);
            };
            for (t, e) in window.indices().zip(&new) {
                loads[k][t] += e;
            }
            if profiles[i].as_ref() != Some(&new) {
                changed = true;
                profiles[i] = Some(new);
            }
        }
        if !changed || round == MAX_ROUNDS {
            break;
        }
    }

    let (ev_total, cs_total) = sequential_profit(s, order, choice, &profiles)?;
    let value = (1.0 - s.costs.delta) * ev_total + s.costs.delta * cs_total;
    Ok(Some((value, profiles)))
}

fn sequential_profit(
    s: &Scenario,
    order: &[usize],
    choice: &[usize],
    profiles: &[Option<Vec<f64>>],
) -> Result<(f64, f64)> {
    let mut states = s.station_states();
    let (mut ev_total, mut cs_total) = (0.0, 0.0);
    for ((&a, &c), p) in order.iter().zip(choice).zip(profiles) {
        let (Some(k), Some(p)) = (c.checked_sub(1), p) else {
            continue;
        };
        let window = s.evs[a].window(k).expect("validated");
        let pre = states[k].loads_over(window).to_vec();
        let (pe, pc) = profile_profit(p, &pre, &s.pricing, &s.costs, &s.stations[k])?;
        ev_total += pe;
        cs_total += pc;
        states[k].commit(window, p);
    }
    Ok((ev_total, cs_total))
}

fn report(
    s: &Scenario,
    order: &[usize],
    choice: &[usize],
    profiles: &[Option<Vec<f64>>],
) -> Result<RunReport> {
    let mut states = s.station_states();
    let mut plans = Vec::new();
    let mut rejected = Vec::new();
    for ((&a, &c), p) in order.iter().zip(choice).zip(profiles) {
        let ev = &s.evs[a];
        let (Some(k), Some(p)) = (c.checked_sub(1), p) else {
            rejected.push(ev.id);
            continue;
        };
        let window = ev.window(k).expect("validated");
        states[k].reserve(window);
        let pre = states[k].loads_over(window).to_vec();
        let (p_ev, p_cs) = profile_profit(p, &pre, &s.pricing, &s.costs, &s.stations[k])?;
        states[k].commit(window, p);
        plans.push(CommittedPlan {
            plan: ServicePlan {
                ev_id: ev.id,
                station: k,
                window,
                powers: p.clone(),
            },
            p_ev,
            p_cs,
            refined: false,
        });
    }
    let ev_profit = plans.iter().map(|p| p.p_ev).sum();
    let cs_profit = plans.iter().map(|p| p.p_cs).sum();
    Ok(RunReport {
        algorithm: Algorithm::Oracle,
        profit: ProfitBreakdown::new(ev_profit, cs_profit, s.costs.delta)?,
        loads: states.iter().map(|st| st.load.clone()).collect(),
        occupancy: states.into_iter().map(|st| st.occupancy).collect(),
        plans,
        rejected,
        messages: MessageLog::default(),
    })
}

/// Grid-optimal profile for one vehicle at station `k` over loads `pre`,
/// maximising its δ-weighted contribution. `None` when the target cannot be
/// reached on the grid.
fn best_response(
    ev: &Ev,
    k: usize,
    pre: &[f64],
    pp: &PricingParams,
    costs: &CostParams,
) -> Option<Vec<f64>> {
    const EPS: f64 = 1e-9;
    let n = pre.len();
    let need = ev.energy_need(k);
    let steps = (need.abs() / GRID_STEP_KWH).round();
    let h = if steps > 0.0 { need.abs() / steps } else { GRID_STEP_KWH };
    let target = (need / h).round() as i64;

    let (lo, hi) = ev.class.power_bounds(costs);
    let jlo = (lo / h - EPS).ceil() as i64;
    let jhi = (hi / h + EPS).floor() as i64;
    let soc0 = ev.arrival_energy(k);
    let cmin = (-soc0 / h - EPS).ceil() as i64;
    let cmax = ((ev.battery_capacity_kwh - soc0) / h + EPS).floor() as i64;
    if target < cmin || target > cmax {
        return None;
    }

    let nj = (jhi - jlo + 1) as usize;
    let nc = (cmax - cmin + 1) as usize;
    let cell = |c: i64, j: i64| (c - cmin) as usize * nj + (j - jlo) as usize;
    let delta = costs.delta;
    let ramp_w = (1.0 - delta) * costs.fluctuation * h * h;

    // gain[t][j]: slot value of power j·h ignoring the ramp term
    let gain: Vec<Vec<f64>> = pre
        .iter()
        .map(|&base| {
            (jlo..=jhi)
                .map(|j| {
                    let e = j as f64 * h;
                    let r = revenue_between(pp, base, base + e);
                    (1.0 - delta) * (r - costs.degradation * e * e) - delta * r
                })
                .collect()
        })
        .collect();

    let mut value = vec![f64::NEG_INFINITY; nc * nj];
    value[cell(0, 0)] = 0.0;
    let mut back: Vec<Vec<u32>> = Vec::with_capacity(n);
    for t in 0..n {
        let remaining = (n - t - 1) as i64;
        let mut next = vec![f64::NEG_INFINITY; nc * nj];
        let mut from = vec![u32::MAX; nc * nj];
        for c in cmin..=cmax {
            for jp in jlo..=jhi {
                let v = value[cell(c, jp)];
                if v == f64::NEG_INFINITY {
                    continue;
                }
                for j in jlo..=jhi {
                    let c2 = c + j;
                    if c2 < cmin || c2 > cmax {
                        continue;
                    }
                    let left = target - c2;
                    if left < remaining * jlo || left > remaining * jhi {
                        continue;
                    }
                    let d = (j - jp) as f64;
                    let cand = v + gain[t][(j - jlo) as usize] - ramp_w * d * d;
                    let idx = cell(c2, j);
                    if cand > next[idx] {
                        next[idx] = cand;
                        from[idx] = cell(c, jp) as u32;
                    }
                }
            }
        }
        value = next;
        back.push(from);
    }

    let mut end = None;
    for j in jlo..=jhi {
        let idx = cell(target, j);
        if value[idx] > f64::NEG_INFINITY && end.map_or(true, |(_, v)| value[idx] > v) {
            end = Some((idx, value[idx]));
        }
    }
    let (mut idx, _) = end?;
    let mut out = vec![0.0; n];
    for t in (0..n).rev() {
        let j = (idx % nj) as i64 + jlo;
        out[t] = j as f64 * h;
        idx = back[t][idx] as usize;
    }
    Some(out)
}

/// Random instances small enough for [`solve_offline_exact`]: 8 hourly
/// slots, up to 4 vehicles and 2 stations, 10 kWh batteries, energies on
/// 0.1 kWh multiples and service windows of 1 to 4 slots.
pub fn tiny_instances(seed: u64, count: usize) -> Vec<Scenario> {
    let mut rng = rng::substream(seed, rng::TINY_INSTANCES);
    (0..count).map(|i| tiny_instance(&mut rng, seed.wrapping_add(i as u64))).collect()
}

fn tiny_instance(rng: &mut impl Rng, seed: u64) -> Scenario {
    const SLOTS: usize = 8;
    const CAP_TENTHS: i64 = 100;
    let costs = CostParams {
        degradation: 1e-3,
        fluctuation: 2e-3,
        delta: rng.gen_range(0..=4) as f64 / 4.0,
        p_charge_max: 3.0,
        p_discharge_max: 2.0,
    };
    let k_count = rng.gen_range(1..=2);
    let m = rng.gen_range(1..=4);
    let stations = (0..k_count)
        .map(|k| StationConfig {
            id: k as u32 + 1,
            capacity: rng.gen_range(1..=2),
            maintenance_cost: rng.gen_range(0.3..=0.5),
            labor_cost: rng.gen_range(0.2..=0.4),
            base_load_kw: (0..SLOTS).map(|_| rng.gen_range(10.0..=70.0)).collect(),
        })
        .collect();

    let mut evs: Vec<Ev> = (0..m)
        .map(|_| {
            let class = EvClass::ALL[rng.gen_range(0..3)];
            let timing: Vec<EvStation> = (0..k_count)
                .map(|_| {
                    let first = rng.gen_range(1..=SLOTS);
                    let last = (first + rng.gen_range(0..4)).min(SLOTS);
                    EvStation {
                        distance_km: 0.0,
                        arrival_h: (first as f64 - 1.0 - rng.gen_range(0.0..1.0)).max(0.0),
                        departure_h: last as f64 + rng.gen_range(0.0..1.0),
                        first_slot: first,
                        last_slot: last,
                    }
                })
                .collect();
            let shortest = timing.iter().map(|t| t.last_slot - t.first_slot + 1).min().unwrap() as i64;
            let init = rng.gen_range(40..=80i64);
            let target = match class {
                EvClass::ChargeOnly => init + rng.gen_range(1..=(shortest * 30).min(CAP_TENTHS - init)),
                EvClass::DischargeOnly => init - rng.gen_range(1..=(shortest * 20).min(init - 1)),
                EvClass::Bidirectional => rng.gen_range((init - shortest * 20).max(1)..=(init + shortest * 30).min(CAP_TENTHS)),
            };
            let arrival = timing.iter().map(|t| t.arrival_h).fold(f64::INFINITY, f64::min);
            Ev {
                id: 0,
                class,
                system_arrival_h: arrival,
                battery_capacity_kwh: 10.0,
                initial_energy_kwh: init as f64 / 10.0,
                final_fraction: target as f64 / CAP_TENTHS as f64,
                motor_force_kwh_per_km: 3.0,
                stations: timing,
            }
        })
        .collect();
    evs.sort_by(|a, b| a.system_arrival_h.total_cmp(&b.system_arrival_h));
    for (i, ev) in evs.iter_mut().enumerate() {
        ev.id = i as u32 + 1;
    }
    Scenario {
        seed,
        grid: TimeGrid {
            slot_count: SLOTS,
            slot_hours: 1.0,
        },
        pricing: PricingParams {
            intercept: 1e-3,
            slope: 2e-3,
        },
        costs,
        stations,
        evs,
    }
}
