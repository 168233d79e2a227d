//! Experiment commands behind the `v2g` binary: single runs, profit sweeps
//! and the oracle gap check, each writing CSV artifacts.
//!
//! Every CSV starts with one `#` line carrying the tool version and the
//! flags that shaped the result, followed by a header row.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{profit_sweep, station_metrics, sweep_medians, IntervalMetric, MetricKind, Sweep};
use crate::model::{Scenario, SlotWindow};
use crate::oracle::{solve_offline_exact, tiny_instances, OracleLimits, GRID_SLACK_USD};
use crate::scenario::{generate, read_base_load, read_scenario, write_scenario, GenSpec};
use crate::scheduler::{run_greedy, run_random, RunReport};

/// Environment variable consulted when no output directory is given.
pub const OUT_DIR_ENV: &str = "V2G_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "v2g-out";

/// `--out`, else `$V2G_OUT_DIR`, else `./v2g-out`.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Reproducibility line written at the top of every CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stamp(pub String);

impl Stamp {
    /// Version plus `args`, minus output-location flags (they do not change
    /// the numbers, and dropping them keeps reruns into a fresh directory
    /// byte-identical).
    pub fn from_args<I: IntoIterator<Item = String>>(args: I) -> Self {
        let mut kept = Vec::new();
        let mut skip_next = false;
        for a in args {
            if skip_next {
                skip_next = false;
                continue;
            }
            if a == "--out" {
                skip_next = true;
                continue;
            }
            if a.starts_with("--out=") {
                continue;
            }
            kept.push(a);
        }
        Stamp(format!("v2g {} {}", env!("CARGO_PKG_VERSION"), kept.join(" ")))
    }
}

fn csv_file<T: Serialize>(path: &Path, stamp: &Stamp, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# {}", stamp.0)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgoChoice {
    Greedy,
    Random,
    Both,
}

#[derive(Debug, Clone)]
pub enum ScenarioSource {
    File(PathBuf),
    Generated(GenSpec),
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub source: ScenarioSource,
    pub base_load: Option<PathBuf>,
    pub algo: AlgoChoice,
    pub out_dir: PathBuf,
    /// Station id and slot interval for the load-shape metrics.
    pub metrics: Option<(u32, SlotWindow)>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub scenario: Scenario,
    pub reports: Vec<RunReport>,
    pub metrics: Vec<(String, IntervalMetric)>,
    pub notes: Vec<String>,
}

#[derive(Serialize)]
struct PlanRow<'a> {
    ev_id: u32,
    class: &'a str,
    station: String,
    first_slot: Option<usize>,
    last_slot: Option<usize>,
    energy_kwh: f64,
    p_ev: f64,
    p_cs: f64,
    refined: bool,
}

#[derive(Serialize)]
struct LoadRow {
    station_id: u32,
    slot: usize,
    base_load_kw: f64,
    final_load_kw: f64,
    occupancy: u32,
}

#[derive(Serialize)]
struct MessageRow<'a> {
    algorithm: &'a str,
    evs: usize,
    served: usize,
    rejected: usize,
    broadcasts: u64,
    replies: u64,
    reservations: u64,
    total: u64,
}

#[derive(Serialize)]
struct MetricRow<'a> {
    algorithm: &'a str,
    station_id: u32,
    first_slot: usize,
    last_slot: usize,
    metric: &'a str,
    value: f64,
}

fn load_source(opts: &RunOptions) -> Result<(Scenario, Vec<String>)> {
    let (mut s, mut notes) = match &opts.source {
        ScenarioSource::File(p) => {
            let loaded = read_scenario(p)?;
            (loaded.scenario, loaded.notes)
        }
        ScenarioSource::Generated(spec) => (generate(spec)?, Vec::new()),
    };
    if let Some(path) = &opts.base_load {
        let values = read_base_load(path, &s.grid)?;
        for st in &mut s.stations {
            st.base_load_kw = values.clone();
        }
        notes.push(format!("base load of every station replaced from {}", path.display()));
    }
    Ok((s, notes))
}

fn write_report(s: &Scenario, r: &RunReport, dir: &Path, stamp: &Stamp) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut rows: Vec<PlanRow> = r
        .plans
        .iter()
        .map(|p| {
            let ev = s.evs.iter().find(|e| e.id == p.plan.ev_id).expect("plan for a known vehicle");
            PlanRow {
                ev_id: ev.id,
                class: ev.class.label(),
                station: s.stations[p.plan.station].id.to_string(),
                first_slot: Some(p.plan.window.first),
                last_slot: Some(p.plan.window.last),
                energy_kwh: p.plan.energy(),
                p_ev: p.p_ev,
                p_cs: p.p_cs,
                refined: p.refined,
            }
        })
        .collect();
    for id in &r.rejected {
        let ev = s.evs.iter().find(|e| e.id == *id).expect("known vehicle");
        rows.push(PlanRow {
            ev_id: *id,
            class: ev.class.label(),
            station: "NONE".into(),
            first_slot: None,
            last_slot: None,
            energy_kwh: 0.0,
            p_ev: 0.0,
            p_cs: 0.0,
            refined: false,
        });
    }
    rows.sort_by_key(|r| r.ev_id);
    csv_file(&dir.join("run_report.csv"), stamp, rows)?;

    let loads = s.stations.iter().enumerate().flat_map(|(k, st)| {
        (0..s.grid.slot_count).map(move |i| LoadRow {
            station_id: st.id,
            slot: i + 1,
            base_load_kw: st.base_load_kw[i],
            final_load_kw: r.loads[k][i],
            occupancy: r.occupancy[k][i],
        })
    });
    csv_file(&dir.join("loads.csv"), stamp, loads)?;

    let m = &r.messages;
    csv_file(
        &dir.join("messages.csv"),
        stamp,
        [MessageRow {
            algorithm: r.algorithm.name(),
            evs: s.evs.len(),
            served: r.plans.len(),
            rejected: r.rejected.len(),
            broadcasts: m.broadcasts,
            replies: m.replies,
            reservations: m.reservations,
            total: m.total(),
        }],
    )
}

pub fn summary_line(s: &Scenario, r: &RunReport) -> String {
    format!(
        "{}: served {}/{} ev_profit={:.4} cs_profit={:.4} weighted_total={:.4} (delta={}) messages={}",
        r.algorithm.name(),
        r.plans.len(),
        s.evs.len(),
        r.profit.ev_profit,
        r.profit.cs_profit,
        r.profit.weighted_total,
        s.costs.delta,
        r.messages.total()
    )
}

/// Run one or both schedulers on a scenario and write their artifacts.
/// With [`AlgoChoice::Both`] the outputs go to `greedy/` and `random/`
/// under the output directory; the scenario itself is saved alongside.
pub fn cmd_run(opts: &RunOptions, stamp: &Stamp) -> Result<RunOutcome> {
    let (s, notes) = load_source(opts)?;
    let reports = match opts.algo {
        AlgoChoice::Greedy => vec![run_greedy(&s)?],
        AlgoChoice::Random => vec![run_random(&s)?],
        AlgoChoice::Both => vec![run_greedy(&s)?, run_random(&s)?],
    };
    fs::create_dir_all(&opts.out_dir)?;
    write_scenario(&s, &opts.out_dir.join("scenario.toml"))?;

    let mut metrics = Vec::new();
    for r in &reports {
        let dir = match opts.algo {
            AlgoChoice::Both => opts.out_dir.join(r.algorithm.name()),
            _ => opts.out_dir.clone(),
        };
        write_report(&s, r, &dir, stamp)?;
        if let Some((station_id, interval)) = opts.metrics {
            let k = s
                .stations
                .iter()
                .position(|st| st.id == station_id)
                .ok_or_else(|| Error::contract(format!("no station with id {station_id}")))?;
            let pair = station_metrics(&s.stations[k].base_load_kw, r, k, station_id, interval)?;
            let rows = pair.iter().map(|m| MetricRow {
                algorithm: r.algorithm.name(),
                station_id,
                first_slot: interval.first,
                last_slot: interval.last,
                metric: match m.kind {
                    MetricKind::PeakReductionPct => "peak_reduction_pct",
                    MetricKind::ValleyRmsd => "valley_rmsd_kw",
                },
                value: m.value,
            });
            csv_file(&dir.join("metrics.csv"), stamp, rows)?;
            metrics.extend(pair.map(|m| (r.algorithm.name().to_string(), m)));
        }
    }
    Ok(RunOutcome {
        scenario: s,
        reports,
        metrics,
        notes,
    })
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: usize,
    pub medians: Vec<crate::metrics::MedianRow>,
}

/// Profit sweep over `seeds` consecutive seeds starting at `spec.seed`.
pub fn cmd_sweep(spec: &GenSpec, sweep: &Sweep, seeds: u64, out_dir: &Path, stamp: &Stamp) -> Result<SweepOutcome> {
    if sweep.points().is_empty() {
        return Err(Error::contract("sweep grid is empty"));
    }
    if seeds == 0 {
        return Err(Error::contract("--seeds must be at least 1"));
    }
    let seed_list: Vec<u64> = (0..seeds).map(|i| spec.seed.wrapping_add(i)).collect();
    let rows = profit_sweep(spec, sweep, &seed_list)?;
    let medians = sweep_medians(&rows);
    fs::create_dir_all(out_dir)?;
    csv_file(&out_dir.join("sweep.csv"), stamp, &rows)?;
    csv_file(&out_dir.join("medians.csv"), stamp, &medians)?;
    Ok(SweepOutcome {
        rows: rows.len(),
        medians,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub instance: usize,
    pub evs: usize,
    pub stations: usize,
    pub delta: f64,
    pub greedy_total: f64,
    pub oracle_total: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub rows: Vec<GapRow>,
    /// Instances where greedy beat the oracle by more than the grid slack.
    pub failures: usize,
    pub min_gap: f64,
    /// Mean greedy/oracle over instances with a positive oracle total.
    pub mean_ratio: Option<f64>,
}

pub fn cmd_verify(limits: OracleLimits, instances: usize, seed: u64, out_dir: &Path, stamp: &Stamp) -> Result<VerifyOutcome> {
    let mut rows = Vec::with_capacity(instances);
    for (i, s) in tiny_instances(seed, instances).iter().enumerate() {
        let g = run_greedy(s)?;
        let o = solve_offline_exact(s, limits)?;
        rows.push(GapRow {
            instance: i,
            evs: s.evs.len(),
            stations: s.stations.len(),
            delta: s.costs.delta,
            greedy_total: g.profit.weighted_total,
            oracle_total: o.profit.weighted_total,
            gap: o.profit.weighted_total - g.profit.weighted_total,
        });
    }
    fs::create_dir_all(out_dir)?;
    csv_file(&out_dir.join("gap.csv"), stamp, &rows)?;
    let failures = rows.iter().filter(|r| r.gap < -GRID_SLACK_USD).count();
    let min_gap = rows.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);
    let ratios: Vec<f64> = rows
        .iter()
        .filter(|r| r.oracle_total > 1e-9)
        .map(|r| r.greedy_total / r.oracle_total)
        .collect();
    let mean_ratio = (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64);
    Ok(VerifyOutcome {
        rows,
        failures,
        min_gap,
        mean_ratio,
    })
}

/// `start:step:end` (inclusive, end snapped) or a comma list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::contract(format!("cannot parse grid {text:?}; use start:step:end or a,b,c"));
    let text = text.trim();
    if text.is_empty() {
        return Err(bad());
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    if let [a, st, b] = text.split(':').collect::<Vec<_>>()[..] {
        let (a, st, b) = (num(a)?, num(st)?, num(b)?);
        if !(st > 0.0) || b < a {
            return Err(bad());
        }
        let n = ((b - a) / st + 1e-9).floor() as usize;
        // round to the step's decimals so 0:0.1:1 gives 0.3, not 0.30000000000000004
        let scale = 1e9;
        return Ok((0..=n).map(|i| ((a + i as f64 * st) * scale).round() / scale).collect());
    }
    text.split(',').map(num).collect()
}
