//! Settlement of an auction transaction under the failure-cost rule.
//!
//! Operations run in execution order until one succeeds. Every reverted
//! operation pays a failure cost proportional to its share of the solver gas
//! budget, measured against the winning bid (or the full bid when nothing
//! succeeds), plus its own gas. The beneficiary receives the winning bid and
//! all failure costs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::{Amount, Gas};
use crate::auction::{AuctionTransaction, Behavior, SolverId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SettlementError {
    #[error("solver gas budget must be positive")]
    ZeroGamma,
    #[error("reserved gas {reserved} exceeds the solver gas budget {gamma}")]
    GasExceedsBudget { reserved: Gas, gamma: Gas },
    #[error("successful bid {successful} exceeds failing bid {failing}; operations ran out of order")]
    OutOfOrder { failing: Amount, successful: Amount },
    #[error("solver {0} did not take part in this settlement")]
    UnknownSolver(SolverId),
}

/// Penalty for an operation that executed and reverted.
///
/// With a later success at `successful_bid` the charge is
/// `(failing_bid - successful_bid) * gas_reserved / gamma`, otherwise
/// `failing_bid * gas_reserved / gamma`. Truncated to 10^-18.
pub fn failure_cost(
    failing_bid: Amount,
    successful_bid: Option<Amount>,
    gas_reserved: Gas,
    gamma: Gas,
) -> Result<Amount, SettlementError> {
    if gamma == 0 {
        return Err(SettlementError::ZeroGamma);
    }
    if gas_reserved > gamma {
        return Err(SettlementError::GasExceedsBudget {
            reserved: gas_reserved,
            gamma,
        });
    }
    let spread = match successful_bid {
        Some(successful) if successful > failing_bid => {
            return Err(SettlementError::OutOfOrder {
                failing: failing_bid,
                successful,
            })
        }
        Some(successful) => failing_bid - successful,
        None => failing_bid,
    };
    Ok(spread.mul_div(gas_reserved, gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Succeeded,
    Reverted,
    Skipped,
}

/// One operation's line in the settlement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutedOp {
    pub solver_id: SolverId,
    pub bid: Amount,
    pub gas_reserved: Gas,
    /// Gas actually burned; zero for skipped operations.
    pub gas_used: Gas,
    pub outcome: Outcome,
    pub failure_cost: Amount,
    /// Gas fee charged to this solver.
    pub gas_charge: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettlementResult {
    pub winner: Option<SolverId>,
    pub executed: Vec<ExecutedOp>,
    pub failure_costs: BTreeMap<SolverId, Amount>,
    /// Payoffs using the transaction's private values (zero when absent).
    pub solver_payoffs: BTreeMap<SolverId, Amount>,
    pub beneficiary_payout: Amount,
    pub total_gas_used: Gas,
    pub reverted_set: Vec<SolverId>,
    pub gas_price: Amount,
    pub gamma: Gas,
}

impl SettlementResult {
    pub fn entry(&self, solver: &SolverId) -> Option<&ExecutedOp> {
        self.executed.iter().find(|e| &e.solver_id == solver)
    }

    pub fn winning_bid(&self) -> Option<Amount> {
        self.executed
            .iter()
            .find(|e| e.outcome == Outcome::Succeeded)
            .map(|e| e.bid)
    }

    pub fn total_failure_costs(&self) -> Amount {
        self.failure_costs.values().sum()
    }

    /// Gas fees paid by all solvers.
    pub fn total_gas_fees(&self) -> Amount {
        self.executed.iter().map(|e| e.gas_charge).sum()
    }
}

/// Runs `tx` in execution order under each operation's scripted behavior.
pub fn settle(tx: &AuctionTransaction) -> SettlementResult {
    let gamma = tx.gamma();
    let gas_price = tx.schedule().gas_price;

    let mut executed = Vec::with_capacity(tx.len());
    let mut winner_index = None;
    for op in tx.solver_ops() {
        let outcome = if winner_index.is_some() {
            Outcome::Skipped
        } else {
            match op.behavior {
                Behavior::Revert => Outcome::Reverted,
                Behavior::Succeed => {
                    winner_index = Some(executed.len());
                    Outcome::Succeeded
                }
            }
        };
        executed.push(ExecutedOp {
            solver_id: op.solver_id.clone(),
            bid: op.bid,
            gas_reserved: op.gas_reserved,
            gas_used: if outcome == Outcome::Skipped { 0 } else { op.gas_used },
            outcome,
            failure_cost: Amount::ZERO,
            gas_charge: Amount::ZERO,
        });
    }

    let winning_bid = winner_index.map(|i| executed[i].bid);
    let total_gas_used = tx.schedule().user_gas_consumed + executed.iter().map(|e| e.gas_used).sum::<Gas>();
    let reverted_gas: Gas = executed
        .iter()
        .filter(|e| e.outcome == Outcome::Reverted)
        .map(|e| e.gas_used)
        .sum();

    let mut failure_costs = BTreeMap::new();
    let mut reverted_set = Vec::new();
    for entry in &mut executed {
        match entry.outcome {
            Outcome::Reverted => {
                entry.failure_cost = failure_cost(entry.bid, winning_bid, entry.gas_reserved, gamma)
                    .expect("transaction invariants guarantee a well-formed failure cost");
                entry.gas_charge = gas_price.mul_gas(entry.gas_used);
                failure_costs.insert(entry.solver_id.clone(), entry.failure_cost);
                reverted_set.push(entry.solver_id.clone());
            }
            // The winner pays for everything that did not revert, user gas included.
            Outcome::Succeeded => entry.gas_charge = gas_price.mul_gas(total_gas_used - reverted_gas),
            Outcome::Skipped => {}
        }
    }

    let beneficiary_payout = winning_bid.unwrap_or(Amount::ZERO) + failure_costs.values().sum::<Amount>();

    let mut result = SettlementResult {
        winner: winner_index.map(|i| executed[i].solver_id.clone()),
        executed,
        failure_costs,
        solver_payoffs: BTreeMap::new(),
        beneficiary_payout,
        total_gas_used,
        reverted_set,
        gas_price,
        gamma,
    };
    let payoffs = result
        .executed
        .iter()
        .map(|e| {
            let value = tx.private_values().get(&e.solver_id).copied().unwrap_or_default();
            (e.solver_id.clone(), payoff_of(e, value))
        })
        .collect();
    result.solver_payoffs = payoffs;
    result
}

fn payoff_of(entry: &ExecutedOp, private_value: Amount) -> Amount {
    match entry.outcome {
        Outcome::Succeeded => private_value - entry.bid - entry.gas_charge,
        Outcome::Reverted => -entry.failure_cost - entry.gas_charge,
        Outcome::Skipped => Amount::ZERO,
    }
}

/// Payoff of `solver` given its private value for winning.
pub fn solver_payoff(
    result: &SettlementResult,
    solver: &SolverId,
    private_value: Amount,
) -> Result<Amount, SettlementError> {
    result
        .entry(solver)
        .map(|e| payoff_of(e, private_value))
        .ok_or_else(|| SettlementError::UnknownSolver(solver.clone()))
}

/// The beneficiary's worst-case payout: the gas-weighted sum of all bids.
///
/// Uses the same per-operation truncation as [`failure_cost`], so it equals
/// the all-revert payout exactly.
pub fn guaranteed_minimum(tx: &AuctionTransaction) -> Amount {
    let gamma = tx.gamma();
    tx.solver_ops()
        .iter()
        .map(|op| op.bid.mul_div(op.gas_reserved, gamma))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::{GasSchedule, SolverOperation};

    fn amt(s: &str) -> Amount {
        s.parse().unwrap()
    }

    fn tx(gamma: Gas, price: &str, ops: Vec<SolverOperation>) -> AuctionTransaction {
        AuctionTransaction::new(GasSchedule::with_budget(gamma, amt(price)).unwrap(), ops).unwrap()
    }

    fn op(id: &str, bid: &str, gas: Gas, behavior: Behavior) -> SolverOperation {
        SolverOperation::new(id, amt(bid), gas, behavior)
    }

    #[test]
    fn failure_cost_examples() {
        assert_eq!(failure_cost(amt("100"), None, 100_000, 1_000_000), Ok(amt("10")));
        assert_eq!(failure_cost(amt("100"), None, 100_000, 10_000_000), Ok(amt("1")));
        assert_eq!(
            failure_cost(amt("100"), Some(amt("100")), 100_000, 1_000_000),
            Ok(Amount::ZERO)
        );
        assert_eq!(
            failure_cost(amt("100"), Some(amt("80")), 100_000, 1_000_000),
            Ok(amt("2"))
        );
    }

    #[test]
    fn failure_cost_preconditions() {
        assert_eq!(failure_cost(amt("1"), None, 0, 0), Err(SettlementError::ZeroGamma));
        assert!(matches!(
            failure_cost(amt("1"), None, 11, 10),
            Err(SettlementError::GasExceedsBudget { .. })
        ));
        assert!(matches!(
            failure_cost(amt("1"), Some(amt("2")), 1, 10),
            Err(SettlementError::OutOfOrder { .. })
        ));
    }

    #[test]
    fn single_success_pays_its_bid() {
        let r = settle(&tx(1_000_000, "0", vec![op("a", "100", 100_000, Behavior::Succeed)]));
        assert_eq!(r.winner, Some(SolverId::from("a")));
        assert_eq!(r.beneficiary_payout, amt("100"));
        assert!(r.failure_costs.is_empty());
    }

    #[test]
    fn mixed_outcome_charges_the_spread() {
        let r = settle(&tx(
            1_000_000,
            "0",
            vec![
                op("a", "100", 100_000, Behavior::Revert),
                op("b", "80", 100_000, Behavior::Succeed),
            ],
        ));
        assert_eq!(r.failure_costs[&SolverId::from("a")], amt("2"));
        assert_eq!(r.beneficiary_payout, amt("82"));
        assert_eq!(r.reverted_set, vec![SolverId::from("a")]);
    }

    #[test]
    fn all_revert_pays_gas_weighted_bids() {
        let t = tx(
            1_000_000,
            "0",
            vec![
                op("a", "100", 100_000, Behavior::Revert),
                op("b", "80", 100_000, Behavior::Revert),
            ],
        );
        let r = settle(&t);
        assert_eq!(r.winner, None);
        assert_eq!(r.beneficiary_payout, amt("18"));
        assert_eq!(r.beneficiary_payout, guaranteed_minimum(&t));
    }

    #[test]
    fn empty_transaction_pays_nothing() {
        let r = settle(&tx(1_000_000, "0", vec![]));
        assert_eq!(r.winner, None);
        assert_eq!(r.beneficiary_payout, Amount::ZERO);
        assert!(r.executed.is_empty());
    }

    #[test]
    fn everything_after_the_winner_is_skipped() {
        let r = settle(&tx(
            1_000_000,
            "0",
            vec![
                op("a", "100", 100_000, Behavior::Revert),
                op("b", "90", 100_000, Behavior::Succeed),
                op("c", "80", 100_000, Behavior::Revert),
                op("d", "70", 100_000, Behavior::Succeed),
            ],
        ));
        let outcomes: Vec<_> = r.executed.iter().map(|e| e.outcome).collect();
        assert_eq!(
            outcomes,
            [
                Outcome::Reverted,
                Outcome::Succeeded,
                Outcome::Skipped,
                Outcome::Skipped
            ]
        );
        assert_eq!(r.executed[2].gas_used, 0);
        assert_eq!(r.executed[2].failure_cost, Amount::ZERO);
    }

    #[test]
    fn payoffs_follow_the_four_cases() {
        let mut values = BTreeMap::new();
        values.insert(SolverId::from("b"), amt("120"));
        let t = tx(
            1_000_000,
            "7.5e-7",
            vec![
                op("a", "150", 100_000, Behavior::Revert),
                op("b", "100", 200_000, Behavior::Succeed).with_gas_used(150_000),
                op("c", "50", 100_000, Behavior::Succeed),
            ],
        )
        .with_private_values(values);
        let r = settle(&t);
        // winner: 120 - 100 - 7.5e-7 * 150_000 (its own gas; no user gas here)
        assert_eq!(r.solver_payoffs[&SolverId::from("b")], amt("19.8875"));
        // reverted: -(150 - 100) * 0.1 - 0.075
        assert_eq!(r.solver_payoffs[&SolverId::from("a")], amt("-5.075"));
        assert_eq!(r.solver_payoffs[&SolverId::from("c")], Amount::ZERO);
        assert_eq!(r.total_gas_used, 250_000);
    }

    #[test]
    fn solver_payoff_examples() {
        let r = settle(&tx(1_000_000, "0", vec![op("w", "100", 100_000, Behavior::Succeed)]));
        assert_eq!(solver_payoff(&r, &"w".into(), amt("120")), Ok(amt("20")));

        let r = settle(&tx(
            1_000_000,
            "0",
            vec![
                op("w", "100", 100_000, Behavior::Succeed),
                op("s", "90", 100_000, Behavior::Succeed),
            ],
        ));
        assert_eq!(solver_payoff(&r, &"s".into(), amt("500")), Ok(Amount::ZERO));

        let r = settle(&tx(
            1_000_000,
            "7.5e-7",
            vec![op("x", "100", 100_000, Behavior::Revert)],
        ));
        assert_eq!(solver_payoff(&r, &"x".into(), amt("0")), Ok(amt("-10.075")));

        assert_eq!(
            solver_payoff(&r, &"nobody".into(), Amount::ZERO),
            Err(SettlementError::UnknownSolver("nobody".into()))
        );
    }

    #[test]
    fn winner_is_charged_the_user_gas() {
        let schedule = GasSchedule::new(2_000_000, 1_000_000, amt("1e-6")).unwrap();
        let t = AuctionTransaction::new(
            schedule,
            vec![
                op("a", "10", 100_000, Behavior::Revert),
                op("b", "5", 100_000, Behavior::Succeed),
            ],
        )
        .unwrap();
        let r = settle(&t);
        assert_eq!(r.total_gas_used, 1_200_000);
        assert_eq!(r.entry(&"b".into()).unwrap().gas_charge, amt("1.1"));
        assert_eq!(r.entry(&"a".into()).unwrap().gas_charge, amt("0.1"));
        assert_eq!(r.total_gas_fees(), r.gas_price.mul_gas(r.total_gas_used));
    }

    #[test]
    fn guaranteed_minimum_examples() {
        let ten: Vec<_> = (0..10)
            .map(|i| op(&format!("s{i}"), "100", 100_000, Behavior::Revert))
            .collect();
        assert_eq!(guaranteed_minimum(&tx(1_000_000, "0", ten)), amt("100"));
        assert_eq!(
            guaranteed_minimum(&tx(1_000_000, "0", vec![op("a", "100", 100_000, Behavior::Succeed)])),
            amt("10")
        );
        assert_eq!(guaranteed_minimum(&tx(1_000_000, "0", vec![])), Amount::ZERO);
    }
}
