//! Seeded scenario generation and scenario/base-load file I/O.
//!
//! Generation draws every vehicle from its own RNG sub-stream (see
//! [`crate::rng`]), so changing the class mix or the number of stations only
//! changes the draws that depend on it.
//!
//! Scenario files are TOML with units spelled out in the field names. See
//! `docs/scenario-format.md` at the repository root for the schema.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    validate_scenario, CostParams, Ev, EvClass, EvStation, PricingParams, Scenario, StationConfig,
    TimeGrid,
};
use crate::rng;

pub const FORMAT_VERSION: u32 = 1;

/// Base load stays within this band, kW.
pub const BASE_LOAD_MIN_KW: f64 = 10.0;
pub const BASE_LOAD_MAX_KW: f64 = 70.0;

const MAX_WINDOW_REDRAWS: usize = 100;
const MAX_TARGET_REDRAWS: usize = 100;
const MAX_EV_ATTEMPTS: usize = 100;

/// Fractions of the fleet per class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMix {
    pub charge_only: f64,
    pub discharge_only: f64,
    pub bidirectional: f64,
}

impl ClassMix {
    /// Bidirectional share `p`, the rest split evenly between the two
    /// single-direction classes.
    pub fn with_penetration(p: f64) -> Self {
        ClassMix {
            charge_only: (1.0 - p) / 2.0,
            discharge_only: (1.0 - p) / 2.0,
            bidirectional: p,
        }
    }

    /// Bidirectional share `p`, everyone else an ordinary charge-only vehicle.
    pub fn charging_rest(p: f64) -> Self {
        ClassMix {
            charge_only: 1.0 - p,
            discharge_only: 0.0,
            bidirectional: p,
        }
    }

    /// New bidirectional share, keeping the charge:discharge ratio of the rest.
    pub fn with_bidirectional(&self, p: f64) -> Self {
        let rest = self.charge_only + self.discharge_only;
        if rest <= 0.0 {
            return ClassMix::with_penetration(p);
        }
        ClassMix {
            charge_only: (1.0 - p) * self.charge_only / rest,
            discharge_only: (1.0 - p) * self.discharge_only / rest,
            bidirectional: p,
        }
    }

    /// Exact class counts for `m` vehicles, by largest remainder.
    pub fn counts(&self, m: usize) -> [(EvClass, usize); 3] {
        let fracs = [
            (EvClass::Bidirectional, self.bidirectional),
            (EvClass::ChargeOnly, self.charge_only),
            (EvClass::DischargeOnly, self.discharge_only),
        ];
        let mut out = fracs.map(|(c, f)| (c, (f * m as f64 + 1e-9).floor() as usize));
        let mut left = m - out.iter().map(|c| c.1).sum::<usize>();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let ra = fracs[a].1 * m as f64 - out[a].1 as f64;
            let rb = fracs[b].1 * m as f64 - out[b].1 as f64;
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for i in order.into_iter().cycle() {
            if left == 0 {
                break;
            }
            out[i].1 += 1;
            left -= 1;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseLoadSpec {
    /// Synthetic summer-day curve with per-station multiplicative jitter.
    Diurnal { jitter: f64 },
    /// Same explicit profile at every station, kW per slot.
    Explicit { values_kw: Vec<f64> },
}

/// Everything needed to draw a scenario. Intervals are `(low, high)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub m: usize,
    pub k: usize,
    pub class_mix: ClassMix,
    pub seed: u64,
    pub delta: f64,
    pub slot_count: usize,
    pub slot_hours: f64,
    pub leave_window_h: (f64, f64),
    pub stay_window_h: (f64, f64),
    pub distance_km: (f64, f64),
    pub motor_force_kwh_per_km: (f64, f64),
    pub speed_kmh: (f64, f64),
    pub battery_kwh: f64,
    pub initial_fraction: (f64, f64),
    pub charge_target_fraction: (f64, f64),
    pub discharge_target_fraction: (f64, f64),
    pub p_charge_max_kwh: f64,
    pub p_discharge_max_kwh: f64,
    pub degradation: f64,
    pub fluctuation: f64,
    pub price_intercept: f64,
    pub price_slope: f64,
    /// Station capacity is `floor(m / K)` plus a uniform integer in this range.
    pub capacity_extra: (u32, u32),
    pub maintenance_cost: (f64, f64),
    pub labor_cost: (f64, f64),
    pub base_load: BaseLoadSpec,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            m: 1000,
            k: 10,
            class_mix: ClassMix::with_penetration(0.5),
            seed: 1,
            delta: 0.5,
            slot_count: 24,
            slot_hours: 1.0,
            leave_window_h: (5.0, 12.0),
            stay_window_h: (3.0, 6.0),
            distance_km: (2.0, 5.0),
            motor_force_kwh_per_km: (3.0, 5.0),
            speed_kmh: (50.0, 60.0),
            battery_kwh: 100.0,
            initial_fraction: (0.7, 0.9),
            charge_target_fraction: (0.7, 0.9),
            discharge_target_fraction: (0.4, 0.6),
            p_charge_max_kwh: 15.0,
            p_discharge_max_kwh: 10.0,
            degradation: 1e-3,
            fluctuation: 2e-3,
            price_intercept: 1e-3,
            price_slope: 2e-3,
            capacity_extra: (5, 10),
            maintenance_cost: (0.3, 0.5),
            labor_cost: (0.2, 0.4),
            base_load: BaseLoadSpec::Diurnal { jitter: 0.05 },
        }
    }
}

impl GenSpec {
    /// Peak-shaving study: late-morning departures, long stays, δ = 0, and
    /// `penetration` of the fleet bidirectional, the rest charge-only.
    pub fn peak_shaving(penetration: f64) -> Self {
        GenSpec {
            class_mix: ClassMix::charging_rest(penetration),
            delta: 0.0,
            leave_window_h: (8.0, 10.0),
            stay_window_h: (6.0, 9.0),
            ..GenSpec::default()
        }
    }

    /// Load-shifting study: half charge-only, half discharge-only, δ = 0.
    pub fn valley_filling() -> Self {
        GenSpec {
            class_mix: ClassMix::with_penetration(0.0),
            delta: 0.0,
            leave_window_h: (10.0, 12.0),
            stay_window_h: (6.0, 9.0),
            ..GenSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, value: f64, expected: &str| {
            Err(Error::Range {
                field: format!("GenSpec.{field}"),
                value,
                expected: expected.to_string(),
            })
        };
        if self.m == 0 {
            return bad("m", 0.0, "at least 1");
        }
        if self.k == 0 {
            return bad("k", 0.0, "at least 1");
        }
        let mix = &self.class_mix;
        let parts = [mix.charge_only, mix.discharge_only, mix.bidirectional];
        let sum: f64 = parts.iter().sum();
        if parts.iter().any(|&f| !(0.0..=1.0).contains(&f)) || (sum - 1.0).abs() > 1e-9 {
            return bad("class_mix", sum, "three fractions in [0, 1] summing to 1");
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return bad("delta", self.delta, "in [0, 1]");
        }
        for (name, (lo, hi)) in [
            ("leave_window_h", self.leave_window_h),
            ("stay_window_h", self.stay_window_h),
            ("distance_km", self.distance_km),
            ("motor_force_kwh_per_km", self.motor_force_kwh_per_km),
            ("speed_kmh", self.speed_kmh),
            ("initial_fraction", self.initial_fraction),
            ("charge_target_fraction", self.charge_target_fraction),
            ("discharge_target_fraction", self.discharge_target_fraction),
            ("maintenance_cost", self.maintenance_cost),
            ("labor_cost", self.labor_cost),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0) {
                return bad(name, lo, "ordered non-negative pair");
            }
        }
        if self.speed_kmh.0 <= 0.0 {
            return bad("speed_kmh", self.speed_kmh.0, "positive");
        }
        if self.capacity_extra.0 > self.capacity_extra.1 {
            return bad("capacity_extra", self.capacity_extra.0 as f64, "ordered pair");
        }
        if self.initial_fraction.1 > 1.0 || self.charge_target_fraction.1 > 1.0 {
            return bad("initial_fraction", self.initial_fraction.1, "fractions at most 1");
        }
        if let BaseLoadSpec::Explicit { values_kw } = &self.base_load {
            if values_kw.len() != self.slot_count {
                return bad("base_load", values_kw.len() as f64, "one value per slot");
            }
        }
        TimeGrid::new(self.slot_count, self.slot_hours).map(|_| ())
    }

    /// Apply a `key=value` override as given on the command line.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| {
            v.parse::<f64>().map_err(|_| Error::Range {
                field: format!("GenSpec.{key}"),
                value: f64::NAN,
                expected: format!("a number, got {v:?}"),
            })
        };
        let pair = |v: &str| -> Result<(f64, f64)> {
            let (a, b) = v.split_once(':').ok_or_else(|| Error::Range {
                field: format!("GenSpec.{key}"),
                value: f64::NAN,
                expected: format!("low:high, got {v:?}"),
            })?;
            Ok((num(a)?, num(b)?))
        };
        match key {
            "m" => self.m = num(value)? as usize,
            "K" | "k" => self.k = num(value)? as usize,
            "seed" => self.seed = num(value)? as u64,
            "delta" => self.delta = num(value)?,
            "v2g" | "penetration" => self.class_mix = self.class_mix.with_bidirectional(num(value)?),
            "cg" => self.class_mix.charge_only = num(value)?,
            "dg" => self.class_mix.discharge_only = num(value)?,
            "slots" => self.slot_count = num(value)? as usize,
            "slot_hours" => self.slot_hours = num(value)?,
            "leave" => self.leave_window_h = pair(value)?,
            "stay" => self.stay_window_h = pair(value)?,
            "jitter" => self.base_load = BaseLoadSpec::Diurnal { jitter: num(value)? },
            "battery" => self.battery_kwh = num(value)?,
            "pc" => self.p_charge_max_kwh = num(value)?,
            "pd" => self.p_discharge_max_kwh = num(value)?,
            "c0" => self.price_intercept = num(value)?,
            "c1" => self.price_slope = num(value)?,
            "alpha" => self.degradation = num(value)?,
            "beta" => self.fluctuation = num(value)?,
            _ => {
                return Err(Error::Range {
                    field: format!("GenSpec.{key}"),
                    value: f64::NAN,
                    expected: "a known generator key".into(),
                })
            }
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Hour-of-day anchor points of the synthetic summer base-load curve, kW.
const DIURNAL_ANCHORS: [(f64, f64); 13] = [
    (0.0, 14.0),
    (3.0, 10.0),
    (5.0, 11.0),
    (7.0, 18.0),
    (9.0, 28.0),
    (11.0, 40.0),
    (13.0, 52.0),
    (15.0, 63.0),
    (16.5, 70.0),
    (18.0, 64.0),
    (20.0, 48.0),
    (22.0, 30.0),
    (24.0, 14.0),
];

fn diurnal_at(hour: f64) -> f64 {
    let h = hour.rem_euclid(24.0);
    DIURNAL_ANCHORS
        .windows(2)
        .find(|w| h <= w[1].0)
        .map(|w| {
            let (h0, v0) = w[0];
            let (h1, v1) = w[1];
            v0 + (v1 - v0) * (h - h0) / (h1 - h0)
        })
        .unwrap_or(DIURNAL_ANCHORS[0].1)
}

/// Synthetic summer-day base load sampled at slot midpoints: a night
/// plateau near 10 kW rising to a 70 kW peak in the late afternoon, with
/// each slot scaled by `1 + U[-jitter, jitter]` and kept within 10–70 kW.
pub fn default_base_load(grid: &TimeGrid, rng: &mut impl Rng, jitter: f64) -> Vec<f64> {
    (1..=grid.slot_count)
        .map(|t| {
            let v = diurnal_at((t as f64 - 0.5) * grid.slot_hours);
            let scale = if jitter > 0.0 {
                1.0 + rng.gen_range(-jitter..=jitter)
            } else {
                1.0
            };
            (v * scale).clamp(BASE_LOAD_MIN_KW, BASE_LOAD_MAX_KW)
        })
        .collect()
}

/// Draw a service window per the operator rule; `None` when the draw
/// breaks the arrival/departure bounds.
fn draw_window(rng: &mut impl Rng, grid: &TimeGrid, arrival_h: f64, departure_h: f64) -> Option<(usize, usize)> {
    let a = arrival_h / grid.slot_hours;
    let d = departure_h / grid.slot_hours;
    let ca = a.ceil() as i64;
    let fd = d.floor() as i64;
    let span = fd - ca;
    if span < 0 {
        return None;
    }
    let first = rng.gen_range(ca..=ca + span / 2);
    let last = rng.gen_range(fd - (span + 1) / 2..=fd);
    let ok = first >= 1
        && last as usize <= grid.slot_count
        && a <= (first - 1) as f64 + 1e-9
        && first <= last
        && last as f64 <= d + 1e-9;
    ok.then_some((first as usize, last as usize))
}

fn draw_ev(spec: &GenSpec, grid: &TimeGrid, index: usize, class: EvClass) -> Result<Ev> {
    let mut rng = rng::ev_stream(spec.seed, index);
    let b = spec.battery_kwh;
    'attempt: for _ in 0..MAX_EV_ATTEMPTS {
        let leave = uniform(&mut rng, spec.leave_window_h);
        let speed = uniform(&mut rng, spec.speed_kmh);
        let force = uniform(&mut rng, spec.motor_force_kwh_per_km);
        let initial = uniform(&mut rng, spec.initial_fraction) * b;
        let stay = uniform(&mut rng, spec.stay_window_h);

        let mut stations = Vec::with_capacity(spec.k);
        for _ in 0..spec.k {
            let distance = uniform(&mut rng, spec.distance_km);
            let arrival = leave + distance / speed;
            let departure = arrival + stay;
            let window = (0..MAX_WINDOW_REDRAWS).find_map(|_| draw_window(&mut rng, grid, arrival, departure));
            let Some((first, last)) = window else {
                continue 'attempt;
            };
            stations.push(EvStation {
                distance_km: distance,
                arrival_h: arrival,
                departure_h: departure,
                first_slot: first,
                last_slot: last,
            });
        }
        let arrival_energy: Vec<f64> = stations.iter().map(|s| initial - s.distance_km * force).collect();
        if arrival_energy.iter().any(|&e| e < 0.0) {
            continue;
        }
        let most = arrival_energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let least = arrival_energy.iter().cloned().fold(f64::INFINITY, f64::min);

        let target = match class {
            EvClass::ChargeOnly => {
                let drawn = (0..MAX_TARGET_REDRAWS)
                    .map(|_| uniform(&mut rng, spec.charge_target_fraction) * b)
                    .find(|&t| t > most);
                match drawn {
                    Some(t) => t,
                    None => continue,
                }
            }
            EvClass::DischargeOnly => {
                let (lo, hi) = spec.discharge_target_fraction;
                uniform(&mut rng, ((lo * b).min(least), (hi * b).min(least)))
            }
            EvClass::Bidirectional => uniform(&mut rng, spec.charge_target_fraction) * b,
        };
        if !(target > 0.0) {
            continue;
        }
        return Ok(Ev {
            id: index as u32 + 1,
            class,
            system_arrival_h: leave,
            battery_capacity_kwh: b,
            initial_energy_kwh: initial,
            final_fraction: target / b,
            motor_force_kwh_per_km: force,
            stations,
        });
    }
    Err(Error::Generation(format!(
        "vehicle {index} ({class}) could not satisfy its service windows or energy targets after \
         {MAX_EV_ATTEMPTS} attempts (leave {:?} h, stay {:?} h, {} slots of {} h)",
        spec.leave_window_h, spec.stay_window_h, spec.slot_count, spec.slot_hours
    )))
}

pub fn generate(spec: &GenSpec) -> Result<Scenario> {
    spec.validate()?;
    let grid = TimeGrid::new(spec.slot_count, spec.slot_hours)?;

    let mut st_rng = rng::substream(spec.seed, rng::STATIONS);
    let per = (spec.m / spec.k) as u32;
    let stations: Vec<StationConfig> = (0..spec.k)
        .map(|k| {
            let capacity = per + st_rng.gen_range(spec.capacity_extra.0..=spec.capacity_extra.1);
            let maintenance_cost = uniform(&mut st_rng, spec.maintenance_cost);
            let labor_cost = uniform(&mut st_rng, spec.labor_cost);
            let base_load_kw = match &spec.base_load {
                BaseLoadSpec::Diurnal { jitter } => default_base_load(&grid, &mut st_rng, *jitter),
                BaseLoadSpec::Explicit { values_kw } => values_kw.clone(),
            };
            StationConfig {
                id: k as u32 + 1,
                capacity,
                maintenance_cost,
                labor_cost,
                base_load_kw,
            }
        })
        .collect();

    let mut classes: Vec<EvClass> = spec
        .class_mix
        .counts(spec.m)
        .iter()
        .flat_map(|&(c, n)| std::iter::repeat(c).take(n))
        .collect();
    classes.shuffle(&mut rng::substream(spec.seed, rng::CLASSES));

    let mut evs = classes
        .into_iter()
        .enumerate()
        .map(|(i, class)| draw_ev(spec, &grid, i, class))
        .collect::<Result<Vec<_>>>()?;
    evs.sort_by(|a, b| a.system_arrival_h.total_cmp(&b.system_arrival_h).then(a.id.cmp(&b.id)));

    let scenario = Scenario {
        seed: spec.seed,
        grid,
        pricing: PricingParams {
            intercept: spec.price_intercept,
            slope: spec.price_slope,
        },
        costs: CostParams {
            degradation: spec.degradation,
            fluctuation: spec.fluctuation,
            delta: spec.delta,
            p_charge_max: spec.p_charge_max_kwh,
            p_discharge_max: spec.p_discharge_max_kwh,
        },
        stations,
        evs,
    };
    let violations = validate_scenario(&scenario);
    if let Some(v) = violations.first() {
        return Err(Error::Generation(format!("generated scenario is invalid: {v}")));
    }
    Ok(scenario)
}

// ---- file schema -------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    format_version: u32,
    seed: u64,
    grid: GridFile,
    pricing: PricingFile,
    costs: CostsFile,
    stations: Vec<StationFile>,
    #[serde(default)]
    evs: Vec<EvFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    slot_count: usize,
    slot_hours: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PricingFile {
    intercept_usd_per_kwh: f64,
    slope_usd_per_kwh_per_kw: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostsFile {
    degradation_usd_per_kwh2: f64,
    fluctuation_usd_per_kwh2: f64,
    delta: f64,
    p_charge_max_kwh: f64,
    p_discharge_max_kwh: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StationFile {
    id: u32,
    capacity_evs: u32,
    maintenance_cost_usd_per_slot: f64,
    labor_cost_usd_per_slot: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_load_kw: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvFile {
    id: u32,
    class: EvClass,
    system_arrival_h: f64,
    battery_capacity_kwh: f64,
    initial_energy_kwh: f64,
    final_fraction: f64,
    motor_force_kwh_per_km: f64,
    stations: Vec<EvStationFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvStationFile {
    distance_km: f64,
    arrival_h: f64,
    departure_h: f64,
    first_slot: usize,
    last_slot: usize,
}

/// A scenario read from disk, with notes on any defaults that were applied.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub notes: Vec<String>,
}

pub fn to_toml(s: &Scenario) -> Result<String> {
    let file = ScenarioFile {
        format_version: FORMAT_VERSION,
        seed: s.seed,
        grid: GridFile {
            slot_count: s.grid.slot_count,
            slot_hours: s.grid.slot_hours,
        },
        pricing: PricingFile {
            intercept_usd_per_kwh: s.pricing.intercept,
            slope_usd_per_kwh_per_kw: s.pricing.slope,
        },
        costs: CostsFile {
            degradation_usd_per_kwh2: s.costs.degradation,
            fluctuation_usd_per_kwh2: s.costs.fluctuation,
            delta: s.costs.delta,
            p_charge_max_kwh: s.costs.p_charge_max,
            p_discharge_max_kwh: s.costs.p_discharge_max,
        },
        stations: s
            .stations
            .iter()
            .map(|st| StationFile {
                id: st.id,
                capacity_evs: st.capacity,
                maintenance_cost_usd_per_slot: st.maintenance_cost,
                labor_cost_usd_per_slot: st.labor_cost,
                base_load_kw: Some(st.base_load_kw.clone()),
            })
            .collect(),
        evs: s
            .evs
            .iter()
            .map(|ev| EvFile {
                id: ev.id,
                class: ev.class,
                system_arrival_h: ev.system_arrival_h,
                battery_capacity_kwh: ev.battery_capacity_kwh,
                initial_energy_kwh: ev.initial_energy_kwh,
                final_fraction: ev.final_fraction,
                motor_force_kwh_per_km: ev.motor_force_kwh_per_km,
                stations: ev
                    .stations
                    .iter()
                    .map(|t| EvStationFile {
                        distance_km: t.distance_km,
                        arrival_h: t.arrival_h,
                        departure_h: t.departure_h,
                        first_slot: t.first_slot,
                        last_slot: t.last_slot,
                    })
                    .collect(),
            })
            .collect(),
    };
    toml::to_string(&file).map_err(|e| Error::contract(format!("cannot serialise scenario: {e}")))
}

/// Parse a scenario document. `origin` only labels error messages.
pub fn from_toml(text: &str, origin: &Path) -> Result<LoadedScenario> {
    let parse_err = |message: String| Error::Parse {
        path: origin.to_path_buf(),
        message,
    };
    let file: ScenarioFile = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(parse_err(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let grid = TimeGrid {
        slot_count: file.grid.slot_count,
        slot_hours: file.grid.slot_hours,
    };
    let mut notes = Vec::new();
    let stations = file
        .stations
        .into_iter()
        .map(|st| {
            let base_load_kw = match st.base_load_kw {
                Some(v) => v,
                None => {
                    notes.push(format!(
                        "station {}: base_load_kw missing, using the diurnal default profile without jitter",
                        st.id
                    ));
                    default_base_load(&grid, &mut rand::rngs::mock::StepRng::new(0, 0), 0.0)
                }
            };
            StationConfig {
                id: st.id,
                capacity: st.capacity_evs,
                maintenance_cost: st.maintenance_cost_usd_per_slot,
                labor_cost: st.labor_cost_usd_per_slot,
                base_load_kw,
            }
        })
        .collect();
    let scenario = Scenario {
        seed: file.seed,
        grid,
        pricing: PricingParams {
            intercept: file.pricing.intercept_usd_per_kwh,
            slope: file.pricing.slope_usd_per_kwh_per_kw,
        },
        costs: CostParams {
            degradation: file.costs.degradation_usd_per_kwh2,
            fluctuation: file.costs.fluctuation_usd_per_kwh2,
            delta: file.costs.delta,
            p_charge_max: file.costs.p_charge_max_kwh,
            p_discharge_max: file.costs.p_discharge_max_kwh,
        },
        stations,
        evs: file
            .evs
            .into_iter()
            .map(|ev| Ev {
                id: ev.id,
                class: ev.class,
                system_arrival_h: ev.system_arrival_h,
                battery_capacity_kwh: ev.battery_capacity_kwh,
                initial_energy_kwh: ev.initial_energy_kwh,
                final_fraction: ev.final_fraction,
                motor_force_kwh_per_km: ev.motor_force_kwh_per_km,
                stations: ev
                    .stations
                    .into_iter()
                    .map(|t| EvStation {
                        distance_km: t.distance_km,
                        arrival_h: t.arrival_h,
                        departure_h: t.departure_h,
                        first_slot: t.first_slot,
                        last_slot: t.last_slot,
                    })
                    .collect(),
            })
            .collect(),
    };
    let violations = validate_scenario(&scenario);
    if let Some(first) = violations.first() {
        let mut expected = first.detail.clone();
        if violations.len() > 1 {
            let _ = write!(expected, " (and {} more violation(s))", violations.len() - 1);
        }
        return Err(Error::Range {
            field: first.field.clone(),
            value: first.value,
            expected,
        });
    }
    Ok(LoadedScenario { scenario, notes })
}

pub fn read_scenario(path: &Path) -> Result<LoadedScenario> {
    let text = fs::read_to_string(path)?;
    from_toml(&text, path)
}

pub fn write_scenario(s: &Scenario, path: &Path) -> Result<()> {
    fs::write(path, to_toml(s)?)?;
    Ok(())
}

/// Base-load override: one kW value per line, `slot_count` lines. Blank
/// lines and `#` comments are skipped.
pub fn read_base_load(path: &Path, grid: &TimeGrid) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: expected a kW value, got {line:?}", lineno + 1),
        })?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: base load must be non-negative, got {v}", lineno + 1),
            });
        }
        values.push(v);
    }
    if values.len() != grid.slot_count {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("expected {} values, found {}", grid.slot_count, values.len()),
        });
    }
    Ok(values)
}
