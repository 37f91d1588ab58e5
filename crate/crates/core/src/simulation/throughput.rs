//! Expected failure cost of a median bid as the solver gas budget grows.

use std::io;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::games::check_conservation;
use super::{map_trials, SimulationError, Stat};
use crate::amount::{Amount, Gas};
use crate::auction::{AuctionTransaction, Behavior, GasSchedule, SolverOperation};
use crate::settlement::settle;

const MICRO: i128 = 1_000_000_000_000;

/// Each rung packs `Γ / gas_per_op` operations with bids uniform on
/// `[bid_low, bid_high]` (1e-6 resolution). The median-rank operation and
/// everything above it revert; operations below it fail with `failure_prob`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThroughputSweep {
    pub gammas: Vec<Gas>,
    pub gas_per_op: Gas,
    pub bid_low: Amount,
    pub bid_high: Amount,
    pub failure_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputRow {
    pub gamma: Gas,
    pub ops_per_tx: u64,
    /// `bid_high · g / Γ`, the most a single operation can be charged.
    pub max_failure_cost: Amount,
    /// Failure cost of the median-bid operation, given that it reverts.
    pub mean_failure_cost: Stat,
    /// Probability that some operation below the median succeeds.
    pub success_probability: Stat,
}

impl ThroughputSweep {
    fn validate(&self) -> Result<(), SimulationError> {
        if self.gammas.is_empty() {
            return Err(SimulationError::InvalidConfig("gammas must be non-empty"));
        }
        if self.gammas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SimulationError::InvalidConfig("gammas must be strictly increasing"));
        }
        if self.gas_per_op == 0 || self.gammas[0] < self.gas_per_op {
            return Err(SimulationError::InvalidConfig("every gamma must fit at least one op"));
        }
        if self.bid_low.is_negative() || self.bid_low > self.bid_high {
            return Err(SimulationError::InvalidConfig("need 0 <= bid_low <= bid_high"));
        }
        if !(0.0..=1.0).contains(&self.failure_prob) {
            return Err(SimulationError::InvalidConfig("failure_prob must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Rung `r` of the ladder uses seed `seed + r`.
pub fn run_throughput_sweep(
    model: &ThroughputSweep,
    trials: u64,
    seed: u64,
    jobs: Option<usize>,
) -> Result<Vec<ThroughputRow>, SimulationError> {
    model.validate()?;
    let low = (model.bid_low.atto() + MICRO - 1) / MICRO;
    let high = model.bid_high.atto() / MICRO;
    if low > high {
        return Err(SimulationError::InvalidConfig("bid range contains no 1e-6 grid point"));
    }
    let mut rows = Vec::with_capacity(model.gammas.len());
    for (rung, &gamma) in model.gammas.iter().enumerate() {
        let ops_per_tx = gamma / model.gas_per_op;
        let median = ops_per_tx.div_ceil(2) as usize - 1;
        let schedule = GasSchedule::with_budget(gamma, Amount::ZERO)?;
        let samples = map_trials(trials, seed.wrapping_add(rung as u64), jobs, |rng: &mut ChaCha8Rng| {
            let ops = (0..ops_per_tx)
                .map(|i| {
                    let bid = Amount::from_atto(rng.random_range(low..=high) * MICRO);
                    SolverOperation::new(format!("s{i}"), bid, model.gas_per_op, Behavior::Revert)
                })
                .collect();
            let tx = AuctionTransaction::new(schedule, ops).expect("ops fit the budget by construction");
            let behaviors: Vec<Behavior> = (0..tx.len())
                .map(|slot| {
                    if slot > median && !rng.random_bool(model.failure_prob) {
                        Behavior::Succeed
                    } else {
                        Behavior::Revert
                    }
                })
                .collect();
            let tx = tx.with_behaviors(behaviors);
            let result = settle(&tx);
            check_conservation(&result);
            let median_id = &tx.solver_ops()[median].solver_id;
            (result.failure_costs[median_id].to_f64(), result.winner.is_some())
        })?;
        let costs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let wins: Vec<f64> = samples.iter().map(|s| if s.1 { 1.0 } else { 0.0 }).collect();
        rows.push(ThroughputRow {
            gamma,
            ops_per_tx,
            max_failure_cost: model.bid_high.mul_div(model.gas_per_op, gamma),
            mean_failure_cost: Stat::from_samples(&costs),
            success_probability: Stat::from_samples(&wins),
        });
    }
    Ok(rows)
}

/// Writes `gamma,ops_per_tx,max_failure_cost,mean_failure_cost,failure_cost_std_error,success_probability,success_std_error,trials`.
pub fn write_throughput_csv<W: io::Write>(rows: &[ThroughputRow], out: W) -> Result<(), SimulationError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "gamma",
        "ops_per_tx",
        "max_failure_cost",
        "mean_failure_cost",
        "failure_cost_std_error",
        "success_probability",
        "success_std_error",
        "trials",
    ])?;
    for r in rows {
        writer.write_record([
            r.gamma.to_string(),
            r.ops_per_tx.to_string(),
            r.max_failure_cost.to_string(),
            r.mean_failure_cost.mean.to_string(),
            r.mean_failure_cost.std_error.to_string(),
            r.success_probability.mean.to_string(),
            r.success_probability.std_error.to_string(),
            r.mean_failure_cost.trials.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
