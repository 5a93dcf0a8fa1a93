use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use evcs_core::bnp::{self, BnpConfig, SolveStats, Status};
use evcs_core::instgen::{self, BenchmarkParams, CaseStudyParams, TinyParams};
use evcs_core::model::{fleet_cost, validate_fleet, Instance, Solution};
use evcs_core::oracle::{self, OracleError, DEFAULT_STATE_LIMIT};
use evcs_core::pricing::DominanceMode;
use log::info;

const EXIT_INFEASIBLE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_LIMIT: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

/// Marks an error caused by bad user input (exit code 2).
#[derive(Debug)]
struct BadInput(String);

impl fmt::Display for BadInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BadInput {}

fn bad(msg: impl Into<String>) -> anyhow::Error {
    BadInput(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "evcs", version, about = "Charge and service scheduling for electric fleets")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Family {
    Small,
    Base,
    Benchmark,
    Casestudy,
    Tiny,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Dominance {
    Set,
    Pairwise,
    Off,
}

impl From<Dominance> for DominanceMode {
    fn from(d: Dominance) -> Self {
        match d {
            Dominance::Set => DominanceMode::Set,
            Dominance::Pairwise => DominanceMode::Pairwise,
            Dominance::Off => DominanceMode::Off,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a random instance.
    Generate {
        #[arg(long, value_enum)]
        family: Family,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        vehicles: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
        /// Window length in periods (benchmark families).
        #[arg(long)]
        tw: Option<usize>,
        #[arg(long)]
        chargers: Option<usize>,
        /// Total charger capacity (fast charger capacity for the case study).
        #[arg(long)]
        capacity: Option<u32>,
        /// Price CSV with `timestamp,price` rows (case study).
        #[arg(long)]
        prices: Option<PathBuf>,
        /// Total window length in hours (case study).
        #[arg(long)]
        flexibility: Option<f64>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Solve an instance by branch-and-price.
    Solve {
        instance: PathBuf,
        #[arg(long, default_value_t = 3600.0)]
        time_limit: f64,
        #[arg(long, default_value_t = 1e-4)]
        gap: f64,
        /// Improving columns per iteration, `auto` or a count.
        #[arg(long, default_value = "auto")]
        nu: String,
        #[arg(long)]
        no_heuristic: bool,
        #[arg(long, value_enum, default_value_t = Dominance::Set)]
        dominance: Dominance,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Check a solution against an instance.
    Validate { instance: PathBuf, solution: PathBuf },
    /// Solve by exhaustive DP on an SoC grid (tiny instances only).
    Oracle {
        instance: PathBuf,
        /// Grid resolution: the step is `q_max / grid`.
        #[arg(long, default_value_t = 64)]
        grid: u32,
        #[arg(long, default_value_t = DEFAULT_STATE_LIMIT)]
        state_limit: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write the compact MIP in MPS format.
    ExportMps {
        instance: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Aggregate stats files of a directory into one CSV.
    Report {
        dir: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_instance(path: &Path) -> Result<Instance> {
    let text = read(path)?;
    let inst = Instance::from_json(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    inst.validate().map_err(|e| bad(format!("{}: {e}", path.display())))?;
    Ok(inst)
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

#[allow(clippy::too_many_arguments)]
fn generate(
    family: Family,
    seed: u64,
    vehicles: Option<usize>,
    days: Option<usize>,
    tw: Option<usize>,
    chargers: Option<usize>,
    capacity: Option<u32>,
    prices: Option<PathBuf>,
    flexibility: Option<f64>,
) -> Result<Instance> {
    let inst = match family {
        Family::Small | Family::Base | Family::Benchmark => {
            let mut p = match family {
                Family::Small => BenchmarkParams::small(),
                _ => BenchmarkParams::base(),
            };
            p.fleet_size = vehicles.unwrap_or(p.fleet_size);
            p.days = days.unwrap_or(p.days);
            p.tw_length = tw.unwrap_or(p.tw_length);
            p.charger_count = chargers.unwrap_or(p.charger_count);
            p.total_capacity = capacity.unwrap_or(p.total_capacity);
            instgen::generate_benchmark(&p, seed).map_err(|e| bad(e.to_string()))?
        }
        Family::Casestudy => {
            let path = prices.ok_or_else(|| bad("the case study needs --prices"))?;
            let csv = read(&path)?;
            let mut p = CaseStudyParams::default();
            p.vehicles = vehicles.unwrap_or(p.vehicles);
            p.days = days.unwrap_or(p.days);
            p.fast_capacity = capacity.unwrap_or(p.fast_capacity);
            p.flexibility_hours = flexibility.unwrap_or(p.flexibility_hours);
            instgen::generate_casestudy(&csv, &p, seed).map_err(|e| bad(e.to_string()))?
        }
        Family::Tiny => {
            let mut p = TinyParams::default();
            p.vehicles = vehicles.unwrap_or(p.vehicles);
            p.capacity = capacity.unwrap_or(p.capacity);
            instgen::generate_tiny(&p, seed).map_err(|e| bad(e.to_string()))?
        }
    };
    Ok(inst)
}

fn status_code(status: Status) -> u8 {
    match status {
        Status::Optimal => 0,
        Status::Infeasible => EXIT_INFEASIBLE,
        Status::TimeLimit | Status::NoSolution => EXIT_LIMIT,
    }
}

fn validate(inst_path: &Path, sol_path: &Path) -> Result<u8> {
    let inst = load_instance(inst_path)?;
    let text = read(sol_path)?;
    let sol: Solution = serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", sol_path.display())))?;
    let report = validate_fleet(&sol.schedules, &inst);
    if !report.is_ok() {
        for v in &report.violations {
            eprintln!("violation: {}", serde_json::to_string(v).expect("serializable"));
        }
        return Ok(EXIT_INFEASIBLE);
    }
    let cost = fleet_cost(&sol.schedules, &inst).map_err(|e| bad(e.to_string()))?;
    if (cost - sol.objective).abs() > 1e-6 * (1.0 + cost.abs()) {
        eprintln!("objective {} does not match the schedule cost {cost}", sol.objective);
        return Ok(EXIT_INFEASIBLE);
    }
    println!("valid, cost {cost}");
    Ok(0)
}

fn parse_stats(path: &Path) -> Result<SolveStats> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// One CSV row per stats file, sorted by file name.
fn report(dir: &Path) -> Result<String> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| bad(format!("cannot list {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut out = String::from("instance,runtime_s,objective,bound,gap,nodes,status\n");
    for path in files {
        let s = parse_stats(&path)?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let status = serde_json::to_value(s.status).expect("serializable");
        out.push_str(&format!(
            "{name},{:.3},{},{},{},{},{}\n",
            s.time_ms as f64 / 1000.0,
            fmt_opt(s.objective),
            fmt_opt(s.bound),
            fmt_opt(s.gap),
            s.nodes,
            status.as_str().unwrap_or_default()
        ));
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Generate { family, seed, vehicles, days, tw, chargers, capacity, prices, flexibility, output } => {
            let inst = generate(family, seed, vehicles, days, tw, chargers, capacity, prices, flexibility)?;
            write(&output, &(inst.to_json() + "\n"))?;
            info!("wrote {} vehicles, {} periods to {}", inst.n_vehicles(), inst.n_periods(), output.display());
            Ok(0)
        }
        Cmd::Solve { instance, time_limit, gap, nu, no_heuristic, dominance, threads, output, stats } => {
            let inst = load_instance(&instance)?;
            let mut cfg = BnpConfig { gap, time_limit_s: time_limit, heuristic: !no_heuristic, ..BnpConfig::default() };
            cfg.master.nu = match nu.as_str() {
                "auto" => None,
                s => Some(s.parse().ok().filter(|&n: &usize| n > 0).ok_or_else(|| bad(format!("bad --nu {s}")))?),
            };
            if threads == 0 {
                return Err(bad("--threads must be positive"));
            }
            cfg.master.threads = threads;
            cfg.master.pricing.dominance = dominance.into();
            let r = bnp::solve(&inst, &cfg).map_err(|e| anyhow!(e))?;
            if let (Some(path), Some(sol)) = (&output, &r.solution) {
                write(path, &to_json(sol))?;
            }
            if let Some(path) = &stats {
                write(path, &to_json(&r.stats))?;
            }
            println!("{}", serde_json::to_string(&r.stats).expect("serializable"));
            Ok(status_code(r.stats.status))
        }
        Cmd::Validate { instance, solution } => validate(&instance, &solution),
        Cmd::Oracle { instance, grid, state_limit, output } => {
            let inst = load_instance(&instance)?;
            if grid == 0 {
                return Err(bad("--grid must be positive"));
            }
            let dq = inst.battery.q_max / grid as f64;
            match oracle::dp_solve(&inst, dq, state_limit) {
                Ok(r) => {
                    if let Some(path) = &output {
                        write(path, &to_json(&r.solution))?;
                    }
                    let tol = oracle::lipschitz_tolerance(&inst, dq);
                    println!(
                        "{}",
                        serde_json::json!({ "objective": r.solution.objective, "tolerance": tol, "states": r.states })
                    );
                    Ok(0)
                }
                Err(OracleError::Infeasible) => {
                    println!("{}", serde_json::json!({ "objective": null }));
                    Ok(EXIT_INFEASIBLE)
                }
                Err(e) => Err(anyhow!(e)),
            }
        }
        Cmd::ExportMps { instance, output } => {
            let inst = load_instance(&instance)?;
            write(&output, &oracle::export_compact_mip(&inst))?;
            Ok(0)
        }
        Cmd::Report { dir, output } => {
            write(&output, &report(&dir)?)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EVCS_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.is::<BadInput>() { EXIT_INPUT } else { EXIT_INTERNAL })
        }
    }
}
