//! Online allocation engines.
//!
//! Vehicles are processed one at a time in arrival order. For each one every
//! station is asked for a quote (one broadcast and one reply per station),
//! one station is chosen and sent a reservation, the station's occupancy is
//! bumped over the service window, and the quoted profile is refined for a
//! flatter station load before it is committed.
//!
//! [`run_greedy`] picks the station with the largest δ-weighted quote;
//! [`run_random`] picks uniformly among stations able to serve the vehicle.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heuristics::{quote, Offer, ProfitQuote};
use crate::model::{check_plan_feasible, validate_scenario, Scenario, ServicePlan, StationState, ENERGY_TOL};
use crate::power_opt::{solve_rmsd_from, QpProblem, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::pricing::{profile_profit, ProfitBreakdown};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Greedy,
    Random,
    Oracle,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Greedy => "greedy",
            Algorithm::Random => "random",
            Algorithm::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MessageLog {
    pub broadcasts: u64,
    pub replies: u64,
    pub reservations: u64,
}

impl MessageLog {
    pub fn total(&self) -> u64 {
        self.broadcasts + self.replies + self.reservations
    }
}

/// A committed plan with the profit it earned against the loads in place
/// when it was committed.
#[derive(Debug, Clone, PartialEq)]
pub struct CommittedPlan {
    pub plan: ServicePlan,
    pub p_ev: f64,
    pub p_cs: f64,
    /// Whether the refinement step replaced the quoted profile.
    pub refined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub algorithm: Algorithm,
    /// In commit order.
    pub plans: Vec<CommittedPlan>,
    pub rejected: Vec<u32>,
    pub profit: ProfitBreakdown,
    /// Final load per station and slot, kW.
    pub loads: Vec<Vec<f64>>,
    pub occupancy: Vec<Vec<u32>>,
    pub messages: MessageLog,
}

/// Index of the offer with the largest weighted profit; ties go to the
/// lowest station index.
pub fn select_station(offers: &[&Offer], delta: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, o) in offers.iter().enumerate() {
        let w = o.weighted(delta);
        match best {
            Some((_, bw)) if w <= bw => {}
            _ => best = Some((i, w)),
        }
    }
    best.map(|(i, _)| i)
}

pub fn run_greedy(s: &Scenario) -> Result<RunReport> {
    let delta = s.costs.delta;
    run(s, Algorithm::Greedy, |offers| {
        select_station(offers, delta).map(|i| offers[i].station)
    })
}

pub fn run_random(s: &Scenario) -> Result<RunReport> {
    let mut rng = rng::substream(s.seed, rng::RANDOM_CHOICE);
    run(s, Algorithm::Random, move |offers| {
        (!offers.is_empty()).then(|| offers[rng.gen_range(0..offers.len())].station)
    })
}

fn run(
    s: &Scenario,
    algorithm: Algorithm,
    mut choose: impl FnMut(&[&Offer]) -> Option<usize>,
) -> Result<RunReport> {
    let violations = validate_scenario(s);
    if !violations.is_empty() {
        return Err(Error::InvalidScenario(violations));
    }
    let k_count = s.stations.len() as u64;
    let mut stations = s.station_states();
    let mut messages = MessageLog::default();
    let mut plans = Vec::new();
    let mut rejected = Vec::new();

    for a in s.arrival_order() {
        let ev = &s.evs[a];
        messages.broadcasts += k_count;
        let quotes: Vec<ProfitQuote> = stations
            .iter()
            .map(|st| quote(ev, st, &s.grid, &s.pricing, &s.costs))
            .collect();
        messages.replies += k_count;

        let offers: Vec<&Offer> = quotes.iter().filter_map(ProfitQuote::offer).collect();
        let Some(k) = choose(&offers) else {
            rejected.push(ev.id);
            continue;
        };
        messages.reservations += 1;
        let offer = offers
            .iter()
            .find(|o| o.station == k)
            .expect("chosen station has an offer");

        let station = &mut stations[k];
        let window = ev.window(k).expect("offer implies a window");
        station.reserve(window);
        let pre = station.loads_over(window).to_vec();
        let (powers, refined) = refine(s, a, k, &pre, &offer.powers);
        let (p_ev, p_cs) = profile_profit(&powers, &pre, &s.pricing, &s.costs, &station.config)?;
        station.commit(window, &powers);
        plans.push(CommittedPlan {
            plan: ServicePlan {
                ev_id: ev.id,
                station: k,
                window,
                powers,
            },
            p_ev,
            p_cs,
            refined,
        });
    }

    let ev_profit: f64 = plans.iter().map(|p| p.p_ev).sum();
    let cs_profit: f64 = plans.iter().map(|p| p.p_cs).sum();
    Ok(RunReport {
        algorithm,
        profit: ProfitBreakdown::new(ev_profit, cs_profit, s.costs.delta)?,
        loads: stations.iter().map(|st| st.load.clone()).collect(),
        occupancy: stations.into_iter().map(|st| st.occupancy).collect(),
        plans,
        rejected,
        messages,
    })
}

/// Flatten the station load under the vehicle's constraints, keeping the
/// quoted profile if the solver fails or returns something infeasible.
fn refine(s: &Scenario, a: usize, k: usize, pre: &[f64], quoted: &[f64]) -> (Vec<f64>, bool) {
    let ev = &s.evs[a];
    let problem = QpProblem::for_class(
        ev.class,
        &s.costs,
        pre.to_vec(),
        ev.energy_need(k),
        ev.arrival_energy(k),
        ev.battery_capacity_kwh,
    );
    let Ok(sol) = solve_rmsd_from(&problem, quoted, DEFAULT_TOL, DEFAULT_MAX_ITERS) else {
        return (quoted.to_vec(), false);
    };
    let candidate = ServicePlan {
        ev_id: ev.id,
        station: k,
        window: ev.window(k).expect("window checked by the quote"),
        powers: sol.powers,
    };
    match check_plan_feasible(&candidate, ev, &s.costs, ENERGY_TOL) {
        Ok(true) => (candidate.powers, true),
        _ => (quoted.to_vec(), false),
    }
}

/// Rebuild station loads from base loads plus committed plans.
pub fn replay_loads(s: &Scenario, plans: &[CommittedPlan]) -> Vec<Vec<f64>> {
    let mut states: Vec<StationState> = s.station_states();
    for p in plans {
        states[p.plan.station].commit(p.plan.window, &p.plan.powers);
    }
    states.into_iter().map(|st| st.load).collect()
}
