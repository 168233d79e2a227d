//! Per-station profit quotes.
//!
//! When a vehicle announces itself, every station shapes a tentative power
//! profile for it over the station's service window and replies with the
//! vehicle-side and station-side profit of that profile. The shaping starts
//! from an even split of the required energy and then walks the window slot
//! by slot, scaling each slot against the average price of the window, fixing
//! it, and spreading whatever energy is still owed over the remaining slots.
//! Prices are refreshed from the provisional loads after every step.
//!
//! Quotes never touch the live [`StationState`]; provisional loads live in a
//! private buffer.

use crate::model::{CostParams, Ev, EvClass, PricingParams, StationState, TimeGrid};
use crate::pricing::profile_profit;

/// Tolerance on reachability of the requested energy.
const REACH_TOL: f64 = 1e-9;
/// Relative price gap below which a slot counts as average-priced.
const PRICE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Offer {
    pub station: usize,
    pub p_ev: f64,
    pub p_cs: f64,
    pub powers: Vec<f64>,
}

impl Offer {
    pub fn weighted(&self, delta: f64) -> f64 {
        (1.0 - delta) * self.p_ev + delta * self.p_cs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decline {
    /// Some slot between arrival and departure is already full.
    NoCapacity,
    /// The requested energy cannot be delivered within the power limits.
    Unreachable,
    /// The vehicle's class does not match the procedure, or it has no
    /// usable window at this station.
    NotApplicable,
}

/// A station's reply to a vehicle.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfitQuote {
    Offer(Offer),
    Declined { station: usize, reason: Decline },
}

impl ProfitQuote {
    pub fn station(&self) -> usize {
        match self {
            ProfitQuote::Offer(o) => o.station,
            ProfitQuote::Declined { station, .. } => *station,
        }
    }

    pub fn offer(&self) -> Option<&Offer> {
        match self {
            ProfitQuote::Offer(o) => Some(o),
            ProfitQuote::Declined { .. } => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.offer().is_some()
    }
}

/// Quote with the procedure matching the vehicle's class.
pub fn quote(
    ev: &Ev,
    station: &StationState,
    grid: &TimeGrid,
    pp: &PricingParams,
    costs: &CostParams,
) -> ProfitQuote {
    match ev.class {
        EvClass::ChargeOnly => quote_charge(ev, station, grid, pp, costs),
        EvClass::DischargeOnly => quote_discharge(ev, station, grid, pp, costs),
        EvClass::Bidirectional => quote_v2g(ev, station, grid, pp, costs),
    }
}

pub fn quote_charge(
    ev: &Ev,
    station: &StationState,
    grid: &TimeGrid,
    pp: &PricingParams,
    costs: &CostParams,
) -> ProfitQuote {
    quote_with(ev, EvClass::ChargeOnly, station, grid, pp, costs, |need, pre| {
        shape_one_way(Direction::Charge, need, costs.p_charge_max, pre, pp, None)
    })
}

pub fn quote_discharge(
    ev: &Ev,
    station: &StationState,
    grid: &TimeGrid,
    pp: &PricingParams,
    costs: &CostParams,
) -> ProfitQuote {
    quote_with(ev, EvClass::DischargeOnly, station, grid, pp, costs, |need, pre| {
        shape_one_way(Direction::Discharge, -need, costs.p_discharge_max, pre, pp, None)
            .map(|u| u.into_iter().map(|x| -x).collect())
    })
}

pub fn quote_v2g(
    ev: &Ev,
    station: &StationState,
    grid: &TimeGrid,
    pp: &PricingParams,
    costs: &CostParams,
) -> ProfitQuote {
    let soc0 = ev.arrival_energy(station.index);
    quote_with(ev, EvClass::Bidirectional, station, grid, pp, costs, |need, pre| {
        let limits = V2gLimits {
            soc0,
            capacity: ev.battery_capacity_kwh,
            p_charge: costs.p_charge_max,
            p_discharge: costs.p_discharge_max,
        };
        shape_v2g(need, &limits, pre, pp, None)
    })
}

fn quote_with(
    ev: &Ev,
    class: EvClass,
    station: &StationState,
    grid: &TimeGrid,
    pp: &PricingParams,
    costs: &CostParams,
    shape: impl FnOnce(f64, &[f64]) -> Option<Vec<f64>>,
) -> ProfitQuote {
    let k = station.index;
    let declined = |reason| ProfitQuote::Declined { station: k, reason };
    let (Some(timing), Some(window)) = (ev.stations.get(k), ev.window(k)) else {
        return declined(Decline::NotApplicable);
    };
    if ev.class != class || window.last > station.load.len() {
        return declined(Decline::NotApplicable);
    }
    if !station.has_room(grid, timing) {
        return declined(Decline::NoCapacity);
    }
    let pre = station.loads_over(window);
    let Some(powers) = shape(ev.energy_need(k), pre) else {
        return declined(Decline::Unreachable);
    };
    match profile_profit(&powers, pre, pp, costs, &station.config) {
        Ok((p_ev, p_cs)) => ProfitQuote::Offer(Offer {
            station: k,
            p_ev,
            p_cs,
            powers,
        }),
        Err(_) => declined(Decline::NotApplicable),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Charge,
    Discharge,
}

impl Direction {
    /// Load sign of a unit of magnitude.
    fn sign(self) -> f64 {
        match self {
            Direction::Charge => 1.0,
            Direction::Discharge => -1.0,
        }
    }

    /// Multiplier applied to a slot's magnitude given its price and the
    /// window average. Charging backs off expensive slots; discharging leans
    /// into them.
    fn rescale(self, price: f64, avg: f64) -> f64 {
        if !(avg > 0.0) {
            return 1.0;
        }
        match self {
            Direction::Charge => (2.0 * avg - price) / avg,
            Direction::Discharge => price / avg,
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn refresh_prices(prices: &mut [f64], pre: &[f64], signed: impl Fn(usize) -> f64, pp: &PricingParams) {
    for (i, p) in prices.iter_mut().enumerate() {
        *p = pp.price_at(pre[i] + signed(i));
    }
}

/// Add `amount` (either sign) across `slots`, evenly among entries that
/// still have room inside `[lo, hi]`. Returns the part that did not fit.
fn spread(slots: &mut [f64], mut amount: f64, lo: f64, hi: f64) -> f64 {
    for _ in 0..=slots.len() {
        let open: Vec<usize> = (0..slots.len())
            .filter(|&i| if amount > 0.0 { slots[i] < hi } else { slots[i] > lo })
            .collect();
        if amount.abs() <= 1e-15 || open.is_empty() {
            break;
        }
        let share = amount / open.len() as f64;
        for i in open {
            let moved = (slots[i] + share).clamp(lo, hi) - slots[i];
            slots[i] += moved;
            amount -= moved;
        }
    }
    amount
}

/// Shape a single-direction profile of non-negative magnitudes summing to
/// `need`, each at most `cap`. `None` when `need` is out of reach.
fn shape_one_way(
    dir: Direction,
    need: f64,
    cap: f64,
    pre: &[f64],
    pp: &PricingParams,
    mut trace: Option<&mut Vec<Vec<f64>>>,
) -> Option<Vec<f64>> {
    let n = pre.len();
    if n == 0 || need < -REACH_TOL || need > n as f64 * cap + REACH_TOL {
        return None;
    }
    let need = need.clamp(0.0, n as f64 * cap);
    let mut e = vec![need / n as f64; n];
    let mut prices: Vec<f64> = pre.iter().map(|&z| pp.price_at(z)).collect();
    if let Some(t) = trace.as_deref_mut() {
        t.push(e.clone());
    }

    for i in 0..n - 1 {
        let avg = mean(&prices);
        e[i] = (dir.rescale(prices[i], avg) * e[i]).clamp(0.0, cap);

        let fixed: f64 = e[..=i].iter().sum();
        let remaining = (n - 1 - i) as f64;
        let mut per_slot = (need - fixed) / remaining;
        if per_slot > cap {
            // owed energy no longer fits ahead: pull it back into fixed slots
            let overflow = remaining * (per_slot - cap);
            spread(&mut e[..=i], overflow, 0.0, cap);
            per_slot = cap;
        } else if per_slot < 0.0 {
            let surplus = -remaining * per_slot;
            spread(&mut e[..=i], -surplus, 0.0, cap);
            per_slot = 0.0;
        }
        e[i + 1..].fill(per_slot);

        refresh_prices(&mut prices, pre, |j| dir.sign() * e[j], pp);
        if let Some(t) = trace.as_deref_mut() {
            t.push(e.clone());
        }
    }
    Some(e)
}

struct V2gLimits {
    soc0: f64,
    capacity: f64,
    p_charge: f64,
    p_discharge: f64,
}

/// Signed profile for a bidirectional vehicle. Slots priced above the window
/// average are pushed towards discharging, slots below it towards charging,
/// by the relative price gap times the power cap on that side. Each slot is
/// then clamped so that the state of charge stays in `[0, B]` and the energy
/// still owed remains deliverable by the slots ahead.
fn shape_v2g(
    need: f64,
    lim: &V2gLimits,
    pre: &[f64],
    pp: &PricingParams,
    mut trace: Option<&mut Vec<Vec<f64>>>,
) -> Option<Vec<f64>> {
    let n = pre.len();
    let (pc, pd) = (lim.p_charge, lim.p_discharge);
    let target = lim.soc0 + need;
    if n == 0
        || need < -(n as f64) * pd - REACH_TOL
        || need > n as f64 * pc + REACH_TOL
        || lim.soc0 < 0.0
        || lim.soc0 > lim.capacity
        || target < -REACH_TOL
        || target > lim.capacity + REACH_TOL
    {
        return None;
    }
    let need = need.clamp(-(n as f64) * pd, n as f64 * pc);
    let mut e = vec![need / n as f64; n];
    let mut prices: Vec<f64> = pre.iter().map(|&z| pp.price_at(z)).collect();
    if let Some(t) = trace.as_deref_mut() {
        t.push(e.clone());
    }

    let mut soc = lim.soc0;
    for i in 0..n - 1 {
        let avg = mean(&prices);
        let mut v = e[i];
        if avg > 0.0 {
            let gap = (prices[i] - avg) / avg;
            if gap > PRICE_EPS {
                v = (v - gap * pd).min(0.0);
            } else if gap < -PRICE_EPS {
                v = (v - gap * pc).max(0.0);
            }
        }
        let remaining = (n - 1 - i) as f64;
        let owed = target - soc;
        let lo = (-pd).max(-soc).max(owed - remaining * pc);
        let hi = pc.min(lim.capacity - soc).min(owed + remaining * pd);
        // lo can exceed hi by round-off when a bound is exactly tight
        v = v.max(lo).min(hi);

        e[i] = v;
        soc += v;
        e[i + 1..].fill((target - soc) / remaining);

        refresh_prices(&mut prices, pre, |j| e[j], pp);
        if let Some(t) = trace.as_deref_mut() {
            t.push(e.clone());
        }
    }
    Some(e)
}
