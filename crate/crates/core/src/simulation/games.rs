//! Empirical utilities for the iid-failure and normal-valuation bidding games.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{map_trials, SimulationError, Stat};
use crate::amount::{Amount, Gas};
use crate::auction::{AuctionTransaction, Behavior, GasSchedule, SolverId, SolverOperation};
use crate::settlement::{settle, Outcome, SettlementResult};

const GAS_PER_OP: Gas = 100_000;

/// `n` solvers, each failing independently with probability `q`.
/// `bids` holds one bid per solver, or a single bid shared by all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IidFailure {
    pub n: usize,
    pub q: f64,
    pub value: Amount,
    pub bids: Vec<Amount>,
}

/// Solver `i` realizes `Xᵢ ~ N(v, σ²)` and cancels when `Xᵢ ≤ bᵢ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalValuation {
    pub n: usize,
    pub v: f64,
    pub sigma: f64,
    pub bids: Vec<Amount>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverStat {
    pub solver_id: SolverId,
    pub bid: Amount,
    pub payoff: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameReport {
    pub per_solver: Vec<SolverStat>,
    /// Sum of all solvers' payoffs in a trial.
    pub aggregate_payoff: Stat,
    pub beneficiary_payout: Stat,
    /// Fraction of trials in which some operation succeeded.
    pub success_rate: Stat,
}

/// Uniform-gas transaction at zero gas price, so payoffs reduce to bids and
/// failure costs `b·g/Γ = b/n`.
struct Table {
    tx: AuctionTransaction,
    ids: Vec<SolverId>,
    bids: Vec<Amount>,
    /// Solver index of each execution slot.
    slots: Vec<usize>,
}

impl Table {
    fn new(n: usize, bids: &[Amount]) -> Result<Table, SimulationError> {
        if n == 0 {
            return Err(SimulationError::InvalidConfig("n must be positive"));
        }
        let bids = match bids.len() {
            1 => vec![bids[0]; n],
            len if len == n => bids.to_vec(),
            _ => {
                return Err(SimulationError::InvalidConfig(
                    "bids must hold one entry or one per solver",
                ))
            }
        };
        let ids: Vec<SolverId> = (0..n).map(|i| SolverId::new(format!("s{i}"))).collect();
        let schedule = GasSchedule::with_budget(GAS_PER_OP * n as Gas, Amount::ZERO)?;
        let ops = ids
            .iter()
            .zip(&bids)
            .map(|(id, &bid)| SolverOperation::new(id.clone(), bid, GAS_PER_OP, Behavior::Revert))
            .collect();
        let tx = AuctionTransaction::new(schedule, ops)?;
        let slots = tx
            .solver_ops()
            .iter()
            .map(|op| {
                ids.iter()
                    .position(|id| *id == op.solver_id)
                    .expect("every op comes from ids")
            })
            .collect();
        Ok(Table { tx, ids, bids, slots })
    }

    fn play(&self, succeeds: &[bool], values: &[Amount]) -> Trial {
        let behaviors = self.slots.iter().map(|&i| {
            if succeeds[i] {
                Behavior::Succeed
            } else {
                Behavior::Revert
            }
        });
        let private = self
            .ids
            .iter()
            .cloned()
            .zip(values.iter().copied())
            .collect::<BTreeMap<_, _>>();
        let result = settle(&self.tx.with_behaviors(behaviors).with_private_values(private));
        check_conservation(&result);
        Trial {
            payoffs: self.ids.iter().map(|id| result.solver_payoffs[id].to_f64()).collect(),
            beneficiary: result.beneficiary_payout.to_f64(),
            success: result.winner.is_some(),
        }
    }

    fn report(&self, trials: Vec<Trial>) -> GameReport {
        let column = |f: &dyn Fn(&Trial) -> f64| Stat::from_samples(&trials.iter().map(f).collect::<Vec<_>>());
        GameReport {
            per_solver: (0..self.ids.len())
                .map(|i| SolverStat {
                    solver_id: self.ids[i].clone(),
                    bid: self.bids[i],
                    payoff: column(&|t| t.payoffs[i]),
                })
                .collect(),
            aggregate_payoff: column(&|t| t.payoffs.iter().sum()),
            beneficiary_payout: column(&|t| t.beneficiary),
            success_rate: column(&|t| if t.success { 1.0 } else { 0.0 }),
        }
    }
}

struct Trial {
    payoffs: Vec<f64>,
    beneficiary: f64,
    success: bool,
}

pub(super) fn check_conservation(result: &SettlementResult) {
    assert_eq!(
        result.beneficiary_payout,
        result.winning_bid().unwrap_or_default() + result.total_failure_costs(),
        "beneficiary payout must equal winning bid plus failure costs"
    );
    debug_assert!(result
        .executed
        .iter()
        .all(|e| (e.outcome == Outcome::Reverted) == result.failure_costs.contains_key(&e.solver_id)));
}

pub fn run_iid_failure(
    model: &IidFailure,
    trials: u64,
    seed: u64,
    jobs: Option<usize>,
) -> Result<GameReport, SimulationError> {
    if !(0.0..=1.0).contains(&model.q) {
        return Err(SimulationError::InvalidConfig("q must lie in [0, 1]"));
    }
    let table = Table::new(model.n, &model.bids)?;
    let values = vec![model.value; model.n];
    let results = map_trials(trials, seed, jobs, |rng: &mut ChaCha8Rng| {
        let succeeds: Vec<bool> = (0..model.n).map(|_| !rng.random_bool(model.q)).collect();
        table.play(&succeeds, &values)
    })?;
    Ok(table.report(results))
}

pub fn run_normal_valuation(
    model: &NormalValuation,
    trials: u64,
    seed: u64,
    jobs: Option<usize>,
) -> Result<GameReport, SimulationError> {
    if !(model.sigma > 0.0 && model.sigma.is_finite() && model.v.is_finite()) {
        return Err(SimulationError::InvalidConfig("sigma must be positive and v finite"));
    }
    let table = Table::new(model.n, &model.bids)?;
    let normal =
        Normal::new(model.v, model.sigma).map_err(|_| SimulationError::InvalidConfig("bad normal parameters"))?;
    let results = map_trials(trials, seed, jobs, |rng: &mut ChaCha8Rng| {
        let draws: Vec<f64> = (0..model.n).map(|_| normal.sample(rng)).collect();
        let values: Vec<Amount> = draws
            .iter()
            .map(|&x| Amount::from_f64(x).expect("finite draw"))
            .collect();
        let succeeds: Vec<bool> = values.iter().zip(&table.bids).map(|(x, b)| x > b).collect();
        table.play(&succeeds, &values)
    })?;
    Ok(table.report(results))
}
