//! Load-shape and profit metrics.
//!
//! Interval metrics take full-day vectors (index `t - 1` for slot `t`) and an
//! inclusive [`SlotWindow`]; use [`TimeGrid::window_for_hours`] to turn a
//! clock interval such as 3 p.m. to 8 p.m. into slots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SlotWindow, TimeGrid};
use crate::scenario::{generate, GenSpec};
use crate::scheduler::{run_greedy, run_random, Algorithm, RunReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    PeakReductionPct,
    ValleyRmsd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalMetric {
    pub station_id: u32,
    pub slot_interval: (usize, usize),
    pub value: f64,
    pub kind: MetricKind,
}

fn span<'a>(v: &'a [f64], interval: SlotWindow, what: &str) -> Result<&'a [f64]> {
    if interval.first == 0 || interval.first > interval.last {
        return Err(Error::contract(format!("empty interval {interval}")));
    }
    v.get(interval.indices()).ok_or_else(|| {
        Error::contract(format!("{what} has {} slots, interval {interval} is outside", v.len()))
    })
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// `100 · (max base − max final) / max base` over `interval`. Negative when
/// the schedule raised the peak.
pub fn peak_reduction_pct(base: &[f64], final_load: &[f64], interval: SlotWindow) -> Result<f64> {
    let b = max_of(span(base, interval, "base load")?);
    let f = max_of(span(final_load, interval, "final load")?);
    if b == 0.0 {
        return Err(Error::contract("base load peak is zero over the interval"));
    }
    Ok(100.0 * (b - f) / b)
}

/// Root mean-square distance of the final load from `base_max` over
/// `interval`. Zero means the valley was filled exactly to the peak.
pub fn valley_rmsd(final_load: &[f64], base_max: f64, interval: SlotWindow) -> Result<f64> {
    let v = span(final_load, interval, "final load")?;
    let ss: f64 = v.iter().map(|&z| (z - base_max).powi(2)).sum();
    Ok((ss / v.len() as f64).sqrt())
}

/// Base-load peak over `interval`, the reference level for [`valley_rmsd`].
pub fn base_max(base: &[f64], interval: SlotWindow) -> Result<f64> {
    Ok(max_of(span(base, interval, "base load")?))
}

/// Both interval metrics for one station of a finished run.
pub fn station_metrics(
    base: &[f64],
    report: &RunReport,
    station: usize,
    station_id: u32,
    interval: SlotWindow,
) -> Result<[IntervalMetric; 2]> {
    let final_load = report
        .loads
        .get(station)
        .ok_or_else(|| Error::contract(format!("no station at index {station}")))?;
    let slot_interval = (interval.first, interval.last);
    Ok([
        IntervalMetric {
            station_id,
            slot_interval,
            value: peak_reduction_pct(base, final_load, interval)?,
            kind: MetricKind::PeakReductionPct,
        },
        IntervalMetric {
            station_id,
            slot_interval,
            value: valley_rmsd(final_load, base_max(base, interval)?, interval)?,
            kind: MetricKind::ValleyRmsd,
        },
    ])
}

/// Clock interval in hours mapped to slots.
pub fn hours_to_slots(grid: &TimeGrid, start_h: f64, end_h: f64) -> Result<SlotWindow> {
    grid.window_for_hours(start_h, end_h)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    Delta(Vec<f64>),
    Stations(Vec<usize>),
}

impl Sweep {
    pub fn var_name(&self) -> &'static str {
        match self {
            Sweep::Delta(_) => "delta",
            Sweep::Stations(_) => "K",
        }
    }

    pub fn points(&self) -> Vec<f64> {
        match self {
            Sweep::Delta(v) => v.clone(),
            Sweep::Stations(v) => v.iter().map(|&k| k as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep_var: &'static str,
    pub sweep_value: f64,
    pub seed: u64,
    pub algorithm: &'static str,
    pub ev_profit: f64,
    pub cs_profit: f64,
    pub weighted_total: f64,
    pub served: usize,
    pub rejected: usize,
}

/// Runs greedy and random on the same generated scenario for every sweep
/// point and seed. A δ sweep draws one scenario per seed and only changes
/// the weight; a K sweep draws a fresh scenario per station count.
pub fn profit_sweep(spec: &GenSpec, sweep: &Sweep, seeds: &[u64]) -> Result<Vec<SweepRow>> {
    let points = sweep.points();
    if points.is_empty() {
        return Err(Error::contract("sweep grid is empty"));
    }
    let mut rows = Vec::with_capacity(points.len() * seeds.len() * 2);
    for &seed in seeds {
        let base = match sweep {
            Sweep::Delta(_) => Some(generate(&GenSpec { seed, ..spec.clone() })?),
            Sweep::Stations(_) => None,
        };
        for &x in &points {
            let scenario = match (&base, sweep) {
                (Some(s), _) => {
                    let mut s = s.clone();
                    s.costs.delta = x;
                    s
                }
                (None, _) => generate(&GenSpec {
                    seed,
                    k: x as usize,
                    ..spec.clone()
                })?,
            };
            for report in [run_greedy(&scenario)?, run_random(&scenario)?] {
                rows.push(SweepRow {
                    sweep_var: sweep.var_name(),
                    sweep_value: x,
                    seed,
                    algorithm: report.algorithm.name(),
                    ev_profit: report.profit.ev_profit,
                    cs_profit: report.profit.cs_profit,
                    weighted_total: report.profit.weighted_total,
                    served: report.plans.len(),
                    rejected: report.rejected.len(),
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        a.sweep_value
            .total_cmp(&b.sweep_value)
            .then(a.seed.cmp(&b.seed))
            .then(a.algorithm.cmp(b.algorithm))
    });
    Ok(rows)
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MedianRow {
    pub sweep_var: &'static str,
    pub sweep_value: f64,
    pub algorithm: &'static str,
    pub seeds: usize,
    pub median_ev_profit: f64,
    pub median_cs_profit: f64,
    pub median_weighted_total: f64,
    /// Share of seeds where greedy's weighted total is at least random's.
    /// Only filled on greedy rows.
    pub greedy_win_rate: Option<f64>,
}

/// Per (sweep point, algorithm) medians of a [`profit_sweep`] table.
pub fn sweep_medians(rows: &[SweepRow]) -> Vec<MedianRow> {
    let mut points: Vec<f64> = rows.iter().map(|r| r.sweep_value).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut out = Vec::new();
    for x in points {
        for alg in [Algorithm::Greedy, Algorithm::Random] {
            let sel: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.sweep_value == x && r.algorithm == alg.name())
                .collect();
            if sel.is_empty() {
                continue;
            }
            let col = |f: fn(&SweepRow) -> f64| {
                let mut v: Vec<f64> = sel.iter().map(|r| f(r)).collect();
                median(&mut v).unwrap_or(f64::NAN)
            };
            let win_rate = (alg == Algorithm::Greedy).then(|| {
                let wins = sel
                    .iter()
                    .filter(|g| {
                        rows.iter().any(|r| {
                            r.sweep_value == x
                                && r.seed == g.seed
                                && r.algorithm == Algorithm::Random.name()
                                && g.weighted_total >= r.weighted_total
                        })
                    })
                    .count();
                wins as f64 / sel.len() as f64
            });
            out.push(MedianRow {
                sweep_var: sel[0].sweep_var,
                sweep_value: x,
                algorithm: alg.name(),
                seeds: sel.len(),
                median_ev_profit: col(|r| r.ev_profit),
                median_cs_profit: col(|r| r.cs_profit),
                median_weighted_total: col(|r| r.weighted_total),
                greedy_win_rate: win_rate,
            });
        }
    }
    out
}
