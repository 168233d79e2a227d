//! Domain types for fleets, stations, prices and service plans, plus the
//! standalone constraint validator.
//!
//! Slots are numbered from 1. Slot `t` covers the half-open hour range
//! `((t - 1)·Δt, t·Δt]`, so a vehicle served on slots `first..=last` at a
//! station must have arrived by `(first - 1)·Δt` and may leave no earlier
//! than `last·Δt`. Vectors indexed by slot (base loads, live loads,
//! occupancy) are 0-based: slot `t` lives at index `t - 1`.
//!
//! The allocation matrix is never stored. A [`ServicePlan`] binds one vehicle
//! to one station over one contiguous window, which makes "at most one
//! station", "only inside the window" and "non-preemptive" hold by
//! construction.

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance, in kWh, for the terminal-energy equality.
pub const ENERGY_TOL: f64 = 1e-6;

/// Slack used when comparing real-valued arrival/departure times with slot
/// boundaries.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub slot_count: usize,
    pub slot_hours: f64,
}

impl TimeGrid {
    pub fn new(slot_count: usize, slot_hours: f64) -> Result<Self> {
        let grid = TimeGrid {
            slot_count,
            slot_hours,
        };
        match grid.problems().into_iter().next() {
            Some(msg) => Err(Error::contract(msg)),
            None => Ok(grid),
        }
    }

    /// One hour per slot over a full day.
    pub fn hourly() -> Self {
        TimeGrid {
            slot_count: 24,
            slot_hours: 1.0,
        }
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.slot_count == 0 {
            out.push("slot_count must be at least 1".to_string());
        }
        if !(self.slot_hours > 0.0) || !self.slot_hours.is_finite() {
            out.push(format!("slot_hours must be positive, got {}", self.slot_hours));
        }
        if self.slot_count as f64 * self.slot_hours > 24.0 + TIME_EPS {
            out.push(format!(
                "grid spans {} h, more than one day",
                self.slot_count as f64 * self.slot_hours
            ));
        }
        out
    }

    /// Slot whose number is `floor(hours / Δt)`, clamped into the grid.
    pub fn floor_slot(&self, hours: f64) -> usize {
        let raw = (hours / self.slot_hours + TIME_EPS).floor();
        (raw.max(1.0) as usize).min(self.slot_count)
    }

    /// Inclusive window covering the hour range `[start_h, end_h]`.
    pub fn window_for_hours(&self, start_h: f64, end_h: f64) -> Result<SlotWindow> {
        if !(end_h > start_h) {
            return Err(Error::contract(format!(
                "empty hour interval [{start_h}, {end_h}]"
            )));
        }
        let first = (start_h / self.slot_hours + TIME_EPS).floor() as usize + 1;
        let last = ((end_h / self.slot_hours - TIME_EPS).ceil() as usize).min(self.slot_count);
        SlotWindow::new(first, last)
            .filter(|w| w.last <= self.slot_count)
            .ok_or_else(|| {
                Error::contract(format!(
                    "hours [{start_h}, {end_h}] fall outside the {}-slot grid",
                    self.slot_count
                ))
            })
    }
}

/// Which direction(s) of energy exchange a vehicle takes part in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvClass {
    ChargeOnly,
    DischargeOnly,
    Bidirectional,
}

impl EvClass {
    pub const ALL: [EvClass; 3] = [
        EvClass::ChargeOnly,
        EvClass::DischargeOnly,
        EvClass::Bidirectional,
    ];

    /// Signed per-slot power bounds `(lower, upper)` in kWh per slot.
    pub fn power_bounds(self, costs: &CostParams) -> (f64, f64) {
        match self {
            EvClass::ChargeOnly => (0.0, costs.p_charge_max),
            EvClass::DischargeOnly => (-costs.p_discharge_max, 0.0),
            EvClass::Bidirectional => (-costs.p_discharge_max, costs.p_charge_max),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EvClass::ChargeOnly => "CG",
            EvClass::DischargeOnly => "DG",
            EvClass::Bidirectional => "V2G",
        }
    }
}

impl fmt::Display for EvClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Inclusive range of 1-based slot numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotWindow {
    pub first: usize,
    pub last: usize,
}

impl SlotWindow {
    pub fn new(first: usize, last: usize) -> Option<Self> {
        (first >= 1 && first <= last).then_some(SlotWindow { first, last })
    }

    pub fn len(&self) -> usize {
        self.last + 1 - self.first
    }

    pub fn is_empty(&self) -> bool {
        self.last < self.first
    }

    pub fn contains_window(&self, other: &SlotWindow) -> bool {
        self.first <= other.first && other.last <= self.last
    }

    /// 0-based vector indices covered by the window.
    pub fn indices(&self) -> Range<usize> {
        self.first - 1..self.last
    }
}

impl fmt::Display for SlotWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.first, self.last)
    }
}

/// A vehicle's trip to, and stay at, one particular station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvStation {
    pub distance_km: f64,
    pub arrival_h: f64,
    pub departure_h: f64,
    pub first_slot: usize,
    pub last_slot: usize,
}

impl EvStation {
    pub fn window(&self) -> Option<SlotWindow> {
        SlotWindow::new(self.first_slot, self.last_slot)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ev {
    pub id: u32,
    pub class: EvClass,
    /// Hour at which the vehicle leaves home and contacts the stations.
    pub system_arrival_h: f64,
    pub battery_capacity_kwh: f64,
    /// Energy in the battery when leaving home.
    pub initial_energy_kwh: f64,
    /// Requested final state of charge as a fraction of capacity.
    pub final_fraction: f64,
    pub motor_force_kwh_per_km: f64,
    /// One entry per station, aligned with `Scenario::stations`.
    pub stations: Vec<EvStation>,
}

impl Ev {
    /// Energy left on arrival at station `k`, after the trip from home.
    pub fn arrival_energy(&self, k: usize) -> f64 {
        self.initial_energy_kwh - self.stations[k].distance_km * self.motor_force_kwh_per_km
    }

    pub fn target_energy(&self) -> f64 {
        self.final_fraction * self.battery_capacity_kwh
    }

    /// Net energy the vehicle must take (positive) or give (negative) at `k`.
    pub fn energy_need(&self, k: usize) -> f64 {
        self.target_energy() - self.arrival_energy(k)
    }

    pub fn window(&self, k: usize) -> Option<SlotWindow> {
        self.stations.get(k).and_then(EvStation::window)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationConfig {
    pub id: u32,
    /// Vehicles the station can host in any one slot.
    pub capacity: u32,
    /// Paid by each vehicle to the station, per slot.
    pub maintenance_cost: f64,
    /// Paid by the station to its staff, per hosted vehicle and slot.
    pub labor_cost: f64,
    pub base_load_kw: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingParams {
    /// $/kWh at zero load.
    pub intercept: f64,
    /// $/kWh added per kW of load.
    pub slope: f64,
}

impl PricingParams {
    /// Price at `load` without the non-negativity check; loads below zero
    /// occur when discharging vehicles outweigh the base load.
    pub fn price_at(&self, load: f64) -> f64 {
        self.intercept + self.slope * load
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Battery degradation, $/kWh².
    pub degradation: f64,
    /// Battery power fluctuation, $/kWh².
    pub fluctuation: f64,
    /// Weight of station profit against vehicle profit, in `[0, 1]`.
    pub delta: f64,
    /// kWh per slot.
    pub p_charge_max: f64,
    /// kWh per slot (magnitude).
    pub p_discharge_max: f64,
}

/// A vehicle's admission: station, contiguous window and per-slot energy.
/// Positive entries charge the battery, negative entries discharge it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServicePlan {
    pub ev_id: u32,
    /// Index into `Scenario::stations`.
    pub station: usize,
    pub window: SlotWindow,
    pub powers: Vec<f64>,
}

impl ServicePlan {
    pub fn energy(&self) -> f64 {
        self.powers.iter().sum()
    }
}

/// Live view of one station during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct StationState {
    pub index: usize,
    pub config: StationConfig,
    /// Base load plus every committed plan, kW per slot.
    pub load: Vec<f64>,
    /// Vehicles reserved per slot.
    pub occupancy: Vec<u32>,
}

impl StationState {
    pub fn new(index: usize, config: StationConfig) -> Self {
        let n = config.base_load_kw.len();
        StationState {
            index,
            load: config.base_load_kw.clone(),
            occupancy: vec![0; n],
            config,
        }
    }

    /// Capacity precheck over the slots `floor(A/Δt)..=floor(D/Δt)`.
    pub fn has_room(&self, grid: &TimeGrid, timing: &EvStation) -> bool {
        let from = grid.floor_slot(timing.arrival_h);
        let to = grid.floor_slot(timing.departure_h);
        (from..=to).all(|t| self.occupancy[t - 1] + 1 <= self.config.capacity)
    }

    pub fn reserve(&mut self, window: SlotWindow) {
        for i in window.indices() {
            self.occupancy[i] += 1;
        }
    }

    pub fn commit(&mut self, window: SlotWindow, powers: &[f64]) {
        for (i, e) in window.indices().zip(powers) {
            self.load[i] += e;
        }
    }

    pub fn loads_over(&self, window: SlotWindow) -> &[f64] {
        &self.load[window.indices()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub grid: TimeGrid,
    pub pricing: PricingParams,
    pub costs: CostParams,
    pub stations: Vec<StationConfig>,
    /// Ordered by `system_arrival_h`, ties by id.
    pub evs: Vec<Ev>,
}

impl Scenario {
    pub fn station_states(&self) -> Vec<StationState> {
        self.stations
            .iter()
            .cloned()
            .enumerate()
            .map(|(k, c)| StationState::new(k, c))
            .collect()
    }

    /// Vehicles in online processing order: arrival epoch, then id.
    pub fn arrival_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.evs.len()).collect();
        order.sort_by(|&a, &b| {
            let (ea, eb) = (&self.evs[a], &self.evs[b]);
            ea.system_arrival_h
                .total_cmp(&eb.system_arrival_h)
                .then(ea.id.cmp(&eb.id))
        });
        order
    }
}

/// Which rule a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constraint {
    GridShape,
    /// Arrival before the first served slot, departure after the last.
    ServiceWindow,
    SlotRange,
    /// Energy left after driving to a station is non-negative.
    TravelEnergy,
    InitialEnergy,
    TargetEnergy,
    BatteryCapacity,
    StationCapacity,
    StationCosts,
    BaseLoad,
    Pricing,
    CostWeights,
    Delta,
    PowerCap,
    StationCount,
    UniqueIds,
    ArrivalOrder,
    Timing,
}

impl Constraint {
    pub fn name(self) -> &'static str {
        match self {
            Constraint::GridShape => "grid-shape",
            Constraint::ServiceWindow => "service-window",
            Constraint::SlotRange => "slot-range",
            Constraint::TravelEnergy => "travel-energy",
            Constraint::InitialEnergy => "initial-energy",
            Constraint::TargetEnergy => "target-energy",
            Constraint::BatteryCapacity => "battery-capacity",
            Constraint::StationCapacity => "station-capacity",
            Constraint::StationCosts => "station-costs",
            Constraint::BaseLoad => "base-load",
            Constraint::Pricing => "pricing",
            Constraint::CostWeights => "cost-weights",
            Constraint::Delta => "delta-range",
            Constraint::PowerCap => "power-cap",
            Constraint::StationCount => "station-count",
            Constraint::UniqueIds => "unique-ids",
            Constraint::ArrivalOrder => "arrival-order",
            Constraint::Timing => "timing",
        }
    }
}

/// One broken invariant: where, which rule, and the offending value.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Field path, e.g. `CostParams.delta` or `evs[3].stations[1].first_slot`.
    pub field: String,
    pub constraint: Constraint,
    pub value: f64,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] value {}: {}",
            self.field,
            self.constraint.name(),
            self.value,
            self.detail
        )
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn check(
        &mut self,
        ok: bool,
        field: impl Into<String>,
        constraint: Constraint,
        value: f64,
        detail: impl FnOnce() -> String,
    ) {
        if !ok {
            self.0.push(Violation {
                field: field.into(),
                constraint,
                value,
                detail: detail(),
            });
        }
    }
}

fn non_negative(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

/// Every broken invariant of `s`. Empty means the scenario is well formed.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut c = Collector(Vec::new());
    let grid = &s.grid;

    for msg in grid.problems() {
        c.check(false, "TimeGrid", Constraint::GridShape, grid.slot_count as f64, || msg);
    }
    let grid_ok = c.0.is_empty();

    let pp = &s.pricing;
    c.check(non_negative(pp.intercept), "PricingParams.intercept", Constraint::Pricing, pp.intercept, || {
        "intercept must be non-negative".into()
    });
    c.check(non_negative(pp.slope), "PricingParams.slope", Constraint::Pricing, pp.slope, || {
        "slope must be non-negative".into()
    });

    let costs = &s.costs;
    c.check(non_negative(costs.degradation), "CostParams.degradation", Constraint::CostWeights, costs.degradation, || {
        "must be non-negative".into()
    });
    c.check(non_negative(costs.fluctuation), "CostParams.fluctuation", Constraint::CostWeights, costs.fluctuation, || {
        "must be non-negative".into()
    });
    c.check((0.0..=1.0).contains(&costs.delta), "CostParams.delta", Constraint::Delta, costs.delta, || {
        "must lie in [0, 1]".into()
    });
    for (name, v) in [
        ("CostParams.p_charge_max", costs.p_charge_max),
        ("CostParams.p_discharge_max", costs.p_discharge_max),
    ] {
        c.check(v.is_finite() && v > 0.0, name, Constraint::PowerCap, v, || "must be positive".into());
    }

    c.check(!s.stations.is_empty(), "stations", Constraint::StationCount, 0.0, || {
        "at least one station is required".into()
    });
    let mut station_ids = HashSet::new();
    for (k, st) in s.stations.iter().enumerate() {
        let at = |f: &str| format!("stations[{k}].{f}");
        c.check(station_ids.insert(st.id), at("id"), Constraint::UniqueIds, st.id as f64, || {
            "duplicate station id".into()
        });
        c.check(st.capacity >= 1, at("capacity"), Constraint::StationCapacity, st.capacity as f64, || {
            "capacity must be at least 1".into()
        });
        c.check(non_negative(st.maintenance_cost), at("maintenance_cost"), Constraint::StationCosts, st.maintenance_cost, || {
            "must be non-negative".into()
        });
        c.check(non_negative(st.labor_cost), at("labor_cost"), Constraint::StationCosts, st.labor_cost, || {
            "must be non-negative".into()
        });
        c.check(st.base_load_kw.len() == grid.slot_count, at("base_load_kw"), Constraint::BaseLoad, st.base_load_kw.len() as f64, || {
            format!("expected {} values", grid.slot_count)
        });
        if let Some((t, &v)) = st.base_load_kw.iter().enumerate().find(|(_, v)| !non_negative(**v)) {
            c.check(false, at(&format!("base_load_kw[{t}]")), Constraint::BaseLoad, v, || {
                "base load must be non-negative".into()
            });
        }
    }

    let mut ev_ids = HashSet::new();
    let mut prev_arrival = f64::NEG_INFINITY;
    for (a, ev) in s.evs.iter().enumerate() {
        let at = |f: &str| format!("evs[{a}].{f}");
        c.check(ev_ids.insert(ev.id), at("id"), Constraint::UniqueIds, ev.id as f64, || {
            "duplicate vehicle id".into()
        });
        c.check(ev.system_arrival_h >= prev_arrival, at("system_arrival_h"), Constraint::ArrivalOrder, ev.system_arrival_h, || {
            format!("earlier than the preceding vehicle ({prev_arrival})")
        });
        prev_arrival = prev_arrival.max(ev.system_arrival_h);

        let cap = ev.battery_capacity_kwh;
        c.check(cap.is_finite() && cap > 0.0, at("battery_capacity_kwh"), Constraint::BatteryCapacity, cap, || {
            "must be positive".into()
        });
        c.check(non_negative(ev.initial_energy_kwh) && ev.initial_energy_kwh <= cap, at("initial_energy_kwh"), Constraint::InitialEnergy, ev.initial_energy_kwh, || {
            format!("must lie in [0, {cap}]")
        });
        c.check(ev.final_fraction > 0.0 && ev.final_fraction <= 1.0, at("final_fraction"), Constraint::TargetEnergy, ev.final_fraction, || {
            "must lie in (0, 1]".into()
        });
        c.check(non_negative(ev.motor_force_kwh_per_km), at("motor_force_kwh_per_km"), Constraint::TravelEnergy, ev.motor_force_kwh_per_km, || {
            "must be non-negative".into()
        });
        c.check(ev.stations.len() == s.stations.len(), at("stations"), Constraint::Timing, ev.stations.len() as f64, || {
            format!("expected one entry per station ({})", s.stations.len())
        });

        for (k, st) in ev.stations.iter().enumerate() {
            let at = |f: &str| format!("evs[{a}].stations[{k}].{f}");
            c.check(non_negative(st.distance_km), at("distance_km"), Constraint::TravelEnergy, st.distance_km, || {
                "must be non-negative".into()
            });
            c.check(st.arrival_h <= st.departure_h, at("departure_h"), Constraint::Timing, st.departure_h, || {
                format!("departure before arrival ({})", st.arrival_h)
            });
            let e_arr = ev.arrival_energy(k);
            c.check(e_arr >= 0.0, at("distance_km"), Constraint::TravelEnergy, e_arr, || {
                format!(
                    "arrival energy {e_arr:.4} kWh is negative ({} km at {} kWh/km from {} kWh)",
                    st.distance_km, ev.motor_force_kwh_per_km, ev.initial_energy_kwh
                )
            });

            let (f, l) = (st.first_slot, st.last_slot);
            let in_grid = f >= 1 && l <= grid.slot_count;
            c.check(in_grid, at("first_slot"), Constraint::SlotRange, f as f64, || {
                format!("window {f}..={l} outside 1..={}", grid.slot_count)
            });
            c.check(f <= l, at("last_slot"), Constraint::ServiceWindow, l as f64, || {
                format!("last slot precedes first slot {f}")
            });
            if grid_ok {
                let dt = grid.slot_hours;
                let start = (f as f64 - 1.0) * dt;
                c.check(st.arrival_h <= start + TIME_EPS, at("first_slot"), Constraint::ServiceWindow, f as f64, || {
                    format!("service starts at {start} h, before arrival at {} h", st.arrival_h)
                });
                let end = l as f64 * dt;
                c.check(end <= st.departure_h + TIME_EPS, at("last_slot"), Constraint::ServiceWindow, l as f64, || {
                    format!("service ends at {end} h, after departure at {} h", st.departure_h)
                });
            }
        }
    }
    c.0
}

/// Whether `plan` is a feasible schedule for `ev`: class power bounds, state
/// of charge inside `[0, B]` after every slot, and the requested final
/// energy reached within `tol`.
pub fn check_plan_feasible(plan: &ServicePlan, ev: &Ev, costs: &CostParams, tol: f64) -> Result<bool> {
    if plan.ev_id != ev.id {
        return Err(Error::contract(format!(
            "plan for vehicle {} checked against vehicle {}",
            plan.ev_id, ev.id
        )));
    }
    let Some(window) = ev.window(plan.station) else {
        return Err(Error::contract(format!(
            "vehicle {} has no service window at station index {}",
            ev.id, plan.station
        )));
    };
    if !window.contains_window(&plan.window) {
        return Err(Error::contract(format!(
            "plan window {} outside vehicle {} window {}",
            plan.window, ev.id, window
        )));
    }
    if plan.powers.len() != plan.window.len() {
        return Ok(false);
    }
    let (lo, hi) = ev.class.power_bounds(costs);
    if plan.powers.iter().any(|&e| !(e >= lo - tol && e <= hi + tol)) {
        return Ok(false);
    }
    let cap = ev.battery_capacity_kwh;
    let mut soc = ev.arrival_energy(plan.station);
    for e in &plan.powers {
        soc += e;
        if soc < -tol || soc > cap + tol {
            return Ok(false);
        }
    }
    Ok((soc - ev.target_energy()).abs() <= tol)
}
