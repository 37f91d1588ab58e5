//! Cost of censoring an auction by exhausting the solver gas budget.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::{Amount, Gas};

#[derive(Debug, Error)]
pub enum CensorshipError {
    #[error("censorship resistance needs at least one rival operation")]
    NoRivals,
    #[error("solver gas budget must be positive")]
    ZeroGamma,
    #[error("rival reserves {gas} gas, more than the budget {gamma}")]
    RivalExceedsBudget { gas: Gas, gamma: Gas },
    #[error("sweep ranges must be non-empty")]
    EmptyRange,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RivalOp {
    pub bid: Amount,
    pub gas_reserved: Gas,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CensorshipScenario {
    pub gamma: Gas,
    pub gas_price: Amount,
    /// Operations of every solver other than the attacker.
    pub rival_ops: Vec<RivalOp>,
    /// What the attacker gains if no rival executes.
    pub attacker_value: Amount,
}

impl CensorshipScenario {
    /// Gas the attacker must occupy so that the smallest rival no longer fits
    /// (up to one gas unit): `gamma - min rival gas`.
    pub fn effective_gas(&self) -> Result<Gas, CensorshipError> {
        let min_gas = self
            .rival_ops
            .iter()
            .map(|r| r.gas_reserved)
            .min()
            .ok_or(CensorshipError::NoRivals)?;
        if min_gas > self.gamma {
            return Err(CensorshipError::RivalExceedsBudget {
                gas: min_gas,
                gamma: self.gamma,
            });
        }
        Ok(self.gamma - min_gas)
    }

    /// Largest competing bid.
    pub fn top_rival_bid(&self) -> Result<Amount, CensorshipError> {
        self.rival_ops
            .iter()
            .map(|r| r.bid)
            .max()
            .ok_or(CensorshipError::NoRivals)
    }
}

/// Cost of reverting an operation that burns the whole budget: `gas_price * gamma`.
pub fn naive_censorship_cost(gamma: Gas, gas_price: Amount) -> Result<Amount, CensorshipError> {
    if gamma == 0 {
        return Err(CensorshipError::ZeroGamma);
    }
    Ok(gas_price.mul_gas(gamma))
}

/// Signed surplus `Γ'·(φ + B/Γ) − v'`. Positive means censoring loses money.
///
/// `Γ'` is the budget minus the smallest rival reservation and `B` the top
/// rival bid; the attacker must outbid `B` and burn `Γ'` of gas.
pub fn censorship_resistance(scenario: &CensorshipScenario) -> Result<Amount, CensorshipError> {
    if scenario.gamma == 0 {
        return Err(CensorshipError::ZeroGamma);
    }
    let effective = scenario.effective_gas()?;
    let top_bid = scenario.top_rival_bid()?;
    Ok(scenario.gas_price.mul_gas(effective) + top_bid.mul_div(effective, scenario.gamma) - scenario.attacker_value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ResistancePoint {
    pub gamma: Gas,
    pub gas_price: Amount,
    pub resistance: Amount,
}

/// Evaluates resistance on the grid `gammas × gas_prices`, gamma-major.
/// The template's own gamma and gas price are overridden at each point.
pub fn resistance_sweep(
    gammas: &[Gas],
    gas_prices: &[Amount],
    template: &CensorshipScenario,
) -> Result<Vec<ResistancePoint>, CensorshipError> {
    if gammas.is_empty() || gas_prices.is_empty() {
        return Err(CensorshipError::EmptyRange);
    }
    let mut grid = Vec::with_capacity(gammas.len() * gas_prices.len());
    for &gamma in gammas {
        for &gas_price in gas_prices {
            let scenario = CensorshipScenario {
                gamma,
                gas_price,
                ..template.clone()
            };
            grid.push(ResistancePoint {
                gamma,
                gas_price,
                resistance: censorship_resistance(&scenario)?,
            });
        }
    }
    Ok(grid)
}

/// Writes `gamma,gas_price,resistance` rows.
pub fn write_sweep_csv<W: io::Write>(points: &[ResistancePoint], out: W) -> Result<(), CensorshipError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["gamma", "gas_price", "resistance"])?;
    for p in points {
        writer.write_record([p.gamma.to_string(), p.gas_price.to_string(), p.resistance.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}
