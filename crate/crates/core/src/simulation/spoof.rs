//! A solver that bids above everyone and reserves enough gas to crowd out
//! every rival, settled against the same auction without it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::games::check_conservation;
use super::SimulationError;
use crate::amount::{Amount, Gas};
use crate::auction::{admit_operations, Behavior, GasSchedule, SolverId, SolverOperation};
use crate::censorship::{censorship_resistance, CensorshipScenario};
use crate::settlement::{settle, Outcome, SettlementResult};

const ATTACKER: &str = "attacker";

/// Rivals are scripted to succeed. Unset fields default to outbidding the top
/// rival by 1e-6 and reserving `Γ − min rival gas + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpoofAttack {
    pub scenario: CensorshipScenario,
    #[serde(default)]
    pub attacker_bid: Option<Amount>,
    #[serde(default)]
    pub attacker_gas: Option<Gas>,
    /// Gas burned when executing; defaults to the full reservation.
    #[serde(default)]
    pub attacker_gas_used: Option<Gas>,
    #[serde(default = "revert")]
    pub attacker_behavior: Behavior,
}

fn revert() -> Behavior {
    Behavior::Revert
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorldSummary {
    pub admitted: Vec<SolverId>,
    pub winner: Option<SolverId>,
    pub rivals_executed: usize,
    pub beneficiary_payout: Amount,
}

impl WorldSummary {
    fn of(admitted: Vec<SolverId>, result: &SettlementResult) -> WorldSummary {
        WorldSummary {
            admitted,
            winner: result.winner.clone(),
            rivals_executed: result
                .executed
                .iter()
                .filter(|e| e.solver_id.as_str() != ATTACKER && e.outcome != Outcome::Skipped)
                .count(),
            beneficiary_payout: result.beneficiary_payout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpoofReport {
    pub attacker_bid: Amount,
    pub attacker_gas: Gas,
    pub outbids_all: bool,
    /// Attacker reservation exceeds `Γ − min rival gas`.
    pub reserves_enough: bool,
    pub attacker_admitted: bool,
    pub rivals_admitted: usize,
    /// No rival made it into the transaction.
    pub censored: bool,
    /// Bid plus gas paid on success, failure cost plus gas on revert.
    pub attacker_cost: Amount,
    pub attacker_payoff: Amount,
    /// `Γ'·(φ + B/Γ) − v'` for the scenario.
    pub predicted_resistance: Amount,
    /// `attacker_cost − v'`, the realized counterpart of the prediction.
    pub realized_margin: Amount,
    pub attack: WorldSummary,
    pub no_attack: WorldSummary,
}

pub fn run_spoof_attack(model: &SpoofAttack) -> Result<SpoofReport, SimulationError> {
    let scenario = &model.scenario;
    let effective = scenario.effective_gas()?;
    let top = scenario.top_rival_bid()?;
    let attacker_bid = model.attacker_bid.unwrap_or(top + Amount::from_atto(1_000_000_000_000));
    let attacker_gas = model.attacker_gas.unwrap_or(effective + 1);
    if attacker_gas > scenario.gamma {
        return Err(SimulationError::InvalidConfig(
            "attacker gas exceeds the solver gas budget",
        ));
    }
    let schedule = GasSchedule::with_budget(scenario.gamma, scenario.gas_price)?;

    let rivals: Vec<SolverOperation> = scenario
        .rival_ops
        .iter()
        .enumerate()
        .map(|(i, r)| SolverOperation::new(format!("r{i}"), r.bid, r.gas_reserved, Behavior::Succeed))
        .collect();
    let attacker = SolverOperation::new(ATTACKER, attacker_bid, attacker_gas, model.attacker_behavior)
        .with_gas_used(model.attacker_gas_used.unwrap_or(attacker_gas));
    let attacker_id = attacker.solver_id.clone();

    let mut all = rivals.clone();
    all.push(attacker);
    let attack_tx = admit_operations(&all, &schedule)?
        .with_private_values(BTreeMap::from([(attacker_id.clone(), scenario.attacker_value)]));
    let calm_tx = admit_operations(&rivals, &schedule)?;
    let attack = settle(&attack_tx);
    let calm = settle(&calm_tx);
    check_conservation(&attack);
    check_conservation(&calm);

    let ids = |tx: &crate::auction::AuctionTransaction| -> Vec<SolverId> {
        tx.solver_ops().iter().map(|op| op.solver_id.clone()).collect()
    };
    let attack_ids = ids(&attack_tx);
    let rivals_admitted = attack_ids.iter().filter(|id| **id != attacker_id).count();
    let attacker_cost = attack.entry(&attacker_id).map_or(Amount::ZERO, |e| match e.outcome {
        Outcome::Succeeded => e.bid + e.gas_charge,
        Outcome::Reverted => e.failure_cost + e.gas_charge,
        Outcome::Skipped => Amount::ZERO,
    });
    let predicted_resistance = censorship_resistance(scenario)?;

    Ok(SpoofReport {
        attacker_bid,
        attacker_gas,
        outbids_all: scenario.rival_ops.iter().all(|r| attacker_bid > r.bid),
        reserves_enough: attacker_gas > effective,
        attacker_admitted: attack.entry(&attacker_id).is_some(),
        rivals_admitted,
        censored: rivals_admitted == 0,
        attacker_cost,
        attacker_payoff: attack.solver_payoffs.get(&attacker_id).copied().unwrap_or_default(),
        predicted_resistance,
        realized_margin: attacker_cost - scenario.attacker_value,
        attack: WorldSummary::of(attack_ids, &attack),
        no_attack: WorldSummary::of(ids(&calm_tx), &calm),
    })
}
