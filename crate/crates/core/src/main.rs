use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use v2g_sched::experiment::{
    cmd_run, cmd_sweep, cmd_verify, parse_grid, resolve_out_dir, summary_line, AlgoChoice,
    RunOptions, ScenarioSource, Stamp,
};
use v2g_sched::metrics::Sweep;
use v2g_sched::oracle::OracleLimits;
use v2g_sched::scenario::GenSpec;
use v2g_sched::{Error, TimeGrid};

#[derive(Parser)]
#[command(name = "v2g", version, about = "Multi-station V2G scheduling experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Schedule one scenario and write run_report.csv, loads.csv and messages.csv.
    Run(RunArgs),
    /// Sweep δ or the station count and write sweep.csv and medians.csv.
    Sweep(SweepArgs),
    /// Compare greedy with the exhaustive oracle on tiny instances; writes gap.csv.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Generator overrides, e.g. `--gen m=100 K=10 delta=0.3 v2g=0.2 leave=8:10`.
    #[arg(long = "gen", value_name = "KEY=VALUE", num_args = 1..)]
    gen: Vec<String>,
    /// Start from a preset instead of the default fleet.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    /// Weighting between vehicle (0) and station (1) profit.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Long stays from mid-morning, δ = 0, 10% bidirectional and the rest charge-only; pair with `--gen v2g=0.2`.
    PeakShaving,
    /// Half charge-only, half discharge-only, δ = 0.
    ValleyFilling,
}

impl GenArgs {
    fn spec(&self) -> anyhow::Result<GenSpec> {
        let mut spec = match self.preset {
            None => GenSpec::default(),
            Some(Preset::PeakShaving) => GenSpec::peak_shaving(0.1),
            Some(Preset::ValleyFilling) => GenSpec::valley_filling(),
        };
        for kv in &self.gen {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--gen expects KEY=VALUE, got {kv:?}"))?;
            spec.apply_override(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(d) = self.delta {
            spec.delta = d;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Greedy,
    Random,
    Both,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    gen: GenArgs,
    /// Read the scenario from a file instead of generating one.
    #[arg(long, conflicts_with_all = ["gen", "preset"])]
    scenario: Option<PathBuf>,
    /// Replace every station's base load with this file (one kW value per line).
    #[arg(long)]
    base_load: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "greedy")]
    algo: Algo,
    /// Output directory (default: $V2G_OUT_DIR, else ./v2g-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Station id for the peak/valley metrics.
    #[arg(long, requires = "interval")]
    station: Option<u32>,
    /// Clock interval for the metrics, in hours, e.g. `15:20`.
    #[arg(long, requires = "station")]
    interval: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    gen: GenArgs,
    /// δ values, `start:step:end` or a comma list.
    #[arg(long, conflicts_with = "k_grid", required_unless_present = "k_grid")]
    delta_grid: Option<String>,
    /// Station counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    k_grid: Option<Vec<usize>>,
    /// Consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 200)]
    instances: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    max_evs: usize,
    #[arg(long, default_value_t = 2)]
    max_stations: usize,
    #[arg(long, default_value_t = 8)]
    max_slots: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_interval(text: &str, spec_grid: &TimeGrid) -> anyhow::Result<v2g_sched::SlotWindow> {
    let (a, b) = text
        .split_once(':')
        .with_context(|| format!("--interval expects START:END hours, got {text:?}"))?;
    Ok(spec_grid.window_for_hours(a.trim().parse()?, b.trim().parse()?)?)
}

fn run(cli: Cli, stamp: Stamp) -> anyhow::Result<ExitCode> {
    match cli.cmd {
        Cmd::Run(a) => {
            let source = match &a.scenario {
                Some(p) => ScenarioSource::File(p.clone()),
                None => ScenarioSource::Generated(a.gen.spec()?),
            };
            let grid = match &source {
                ScenarioSource::Generated(spec) => TimeGrid::new(spec.slot_count, spec.slot_hours)?,
                ScenarioSource::File(p) => v2g_sched::scenario::read_scenario(p)?.scenario.grid,
            };
            let metrics = match (a.station, &a.interval) {
                (Some(id), Some(iv)) => Some((id, parse_interval(iv, &grid)?)),
                _ => None,
            };
            let opts = RunOptions {
                source,
                base_load: a.base_load,
                algo: match a.algo {
                    Algo::Greedy => AlgoChoice::Greedy,
                    Algo::Random => AlgoChoice::Random,
                    Algo::Both => AlgoChoice::Both,
                },
                out_dir: resolve_out_dir(a.out),
                metrics,
            };
            let outcome = cmd_run(&opts, &stamp)?;
            for note in &outcome.notes {
                eprintln!("note: {note}");
            }
            for r in &outcome.reports {
                println!("{}", summary_line(&outcome.scenario, r));
            }
            for (alg, m) in &outcome.metrics {
                println!(
                    "{alg}: station {} slots {}-{} {:?} = {:.4}",
                    m.station_id, m.slot_interval.0, m.slot_interval.1, m.kind, m.value
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Sweep(a) => {
            let spec = a.gen.spec()?;
            let sweep = match (&a.delta_grid, &a.k_grid) {
                (Some(g), None) => Sweep::Delta(parse_grid(g)?),
                (None, Some(k)) => Sweep::Stations(k.clone()),
                _ => bail!("give exactly one of --delta-grid or --k-grid"),
            };
            if sweep.points().is_empty() {
                bail!("the sweep grid is empty");
            }
            let out = resolve_out_dir(a.out);
            let outcome = cmd_sweep(&spec, &sweep, a.seeds, &out, &stamp)?;
            println!("{} rows written to {}", outcome.rows, out.join("sweep.csv").display());
            for m in &outcome.medians {
                println!(
                    "{}={} {}: median weighted_total={:.4} ev={:.4} cs={:.4}",
                    m.sweep_var, m.sweep_value, m.algorithm, m.median_weighted_total, m.median_ev_profit, m.median_cs_profit
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Verify(a) => {
            let limits = OracleLimits {
                max_evs: a.max_evs,
                max_stations: a.max_stations,
                max_slots: a.max_slots,
            };
            let out = resolve_out_dir(a.out);
            let v = cmd_verify(limits, a.instances, a.seed, &out, &stamp)?;
            println!(
                "{} instances, min gap {:.6}, mean greedy/oracle {}",
                v.rows.len(),
                v.min_gap,
                v.mean_ratio.map_or("n/a".to_string(), |r| format!("{r:.4}"))
            );
            if v.failures > 0 {
                eprintln!("greedy beat the oracle on {} instance(s); see gap.csv", v.failures);
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let stamp = Stamp::from_args(std::env::args().skip(1));
    let cli = Cli::parse();
    match run(cli, stamp) {
        Ok(code) => code,
        Err(e) => {
            match e.downcast_ref::<Error>() {
                Some(Error::InvalidScenario(vs)) => {
                    eprintln!("error: scenario has {} violation(s):", vs.len());
                    for v in vs {
                        eprintln!("  {v}");
                    }
                }
                _ => eprintln!("error: {e:#}"),
            }
            ExitCode::from(2)
        }
    }
}
