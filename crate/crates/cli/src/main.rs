//! `failcost`: settle scenario files, export sweep tables and run simulations.

mod scenario;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use failcost::censorship::{self, CensorshipScenario, RivalOp};
use failcost::equilibrium;
use failcost::simulation::{self, SimConfig, ThroughputSweep};
use failcost::{guaranteed_minimum, settle, Amount, AuctionTransaction, Gas, SettlementResult};

#[derive(Parser)]
#[command(
    name = "failcost",
    version,
    about = "Failure-cost auction settlement, sweeps and simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Settle a scenario file and print the result as JSON
    Settle { file: PathBuf },
    /// Emit a sweep table as CSV
    Sweep {
        #[command(subcommand)]
        kind: SweepKind,
        /// Write to this file instead of stdout
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Run a simulation config file and print the report as JSON
    Simulate {
        file: PathBuf,
        /// Worker threads; results do not depend on it
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Subcommand)]
enum SweepKind {
    /// Censorship resistance over gamma × gas price
    Censorship(CensorshipArgs),
    /// Expected failure cost of a median bid over gamma
    Throughput(ThroughputArgs),
    /// Optimal bid ratio over n × sigma
    Equilibrium(EquilibriumArgs),
}

#[derive(Args)]
struct CensorshipArgs {
    #[arg(long, value_delimiter = ',', default_value = "1000000,2000000,5000000,10000000")]
    gammas: Vec<Gas>,
    #[arg(long, value_delimiter = ',', default_value = "0,2.5e-7,5e-7,7.5e-7,1e-6")]
    gas_prices: Vec<Amount>,
    /// Rival operation as BID:GAS; repeatable
    #[arg(long = "rival", value_parser = parse_rival, default_value = "100:100000")]
    rivals: Vec<RivalOp>,
    #[arg(long, default_value = "0")]
    attacker_value: Amount,
}

#[derive(Args)]
struct ThroughputArgs {
    #[arg(long, value_delimiter = ',', default_value = "1000000,2000000,5000000,10000000")]
    gammas: Vec<Gas>,
    #[arg(long, default_value_t = 100_000)]
    gas_per_op: Gas,
    #[arg(long, default_value = "0")]
    bid_low: Amount,
    #[arg(long, default_value = "100")]
    bid_high: Amount,
    #[arg(long, default_value_t = 0.5)]
    failure_prob: f64,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct EquilibriumArgs {
    #[arg(long, default_value_t = 3500.0)]
    v: f64,
    #[arg(long, value_delimiter = ',', default_value = "2,5,10,25,50")]
    ns: Vec<u32>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.5,1,1.5,2,2.5,3,3.5,4,4.5,5,5.5,6,6.5,7,7.5,8,8.5,9,9.5,10,10.5,11,11.5,12"
    )]
    sigmas: Vec<f64>,
}

fn parse_rival(s: &str) -> Result<RivalOp, String> {
    let (bid, gas) = s
        .split_once(':')
        .ok_or_else(|| format!("expected BID:GAS, got {s:?}"))?;
    Ok(RivalOp {
        bid: bid.parse().map_err(|e| format!("bid {bid:?}: {e}"))?,
        gas_reserved: gas.parse().map_err(|e| format!("gas {gas:?}: {e}"))?,
    })
}

#[derive(Serialize)]
struct SettleReport<'a> {
    guaranteed_minimum: Amount,
    settlement: &'a SettlementResult,
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn cmd_settle(path: &Path) -> Result<Vec<u8>> {
    let file = scenario::load_settle(path)?;
    let tx = AuctionTransaction::new(file.schedule, file.solver_ops)
        .map_err(|e| anyhow!("constraint {} violated: {e}", e.constraint()))?
        .with_private_values(file.private_values);
    let result = settle(&tx);
    to_json(&SettleReport {
        guaranteed_minimum: guaranteed_minimum(&tx),
        settlement: &result,
    })
}

fn cmd_sweep(kind: &SweepKind) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match kind {
        SweepKind::Censorship(a) => {
            let template = CensorshipScenario {
                gamma: a.gammas.first().copied().unwrap_or_default(),
                gas_price: Amount::ZERO,
                rival_ops: a.rivals.clone(),
                attacker_value: a.attacker_value,
            };
            let grid = censorship::resistance_sweep(&a.gammas, &a.gas_prices, &template)?;
            censorship::write_sweep_csv(&grid, &mut out)?;
        }
        SweepKind::Throughput(a) => {
            let model = ThroughputSweep {
                gammas: a.gammas.clone(),
                gas_per_op: a.gas_per_op,
                bid_low: a.bid_low,
                bid_high: a.bid_high,
                failure_prob: a.failure_prob,
            };
            if a.trials == 0 {
                bail!("trials must be positive");
            }
            let rows = simulation::run_throughput_sweep(&model, a.trials, a.seed, a.jobs)?;
            simulation::write_throughput_csv(&rows, &mut out)?;
        }
        SweepKind::Equilibrium(a) => {
            if a.ns.is_empty() || a.sigmas.is_empty() {
                bail!("ns and sigmas must be non-empty");
            }
            let points = equilibrium::equilibrium_sweep(a.v, &a.ns, &a.sigmas)?;
            equilibrium::write_sweep_csv(&points, &mut out)?;
        }
    }
    Ok(out)
}

fn cmd_simulate(path: &Path, jobs: Option<usize>) -> Result<Vec<u8>> {
    let config: SimConfig = scenario::load_simulate(path)?.into();
    to_json(&simulation::run(&config, jobs)?)
}

fn run(cli: Cli) -> Result<()> {
    let (bytes, out) = match &cli.command {
        Command::Settle { file } => (cmd_settle(file)?, None),
        Command::Sweep { kind, out } => (cmd_sweep(kind)?, out.as_deref()),
        Command::Simulate { file, jobs } => (cmd_simulate(file, *jobs)?, None),
    };
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?,
        None => io::stdout().lock().write_all(&bytes)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
