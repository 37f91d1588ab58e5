//! Auction transaction structure: gas schedule, solver operations and the
//! admission rule that packs operations into the solver gas budget.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::{Amount, Gas};

/// Opaque solver identity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SolverId(pub String);

impl SolverId {
    pub fn new(id: impl Into<String>) -> Self {
        SolverId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SolverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SolverId {
    fn from(s: &str) -> Self {
        SolverId(s.to_string())
    }
}

/// Structural violations of the auction model. Each variant names the
/// constraint it guards.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuctionError {
    #[error("tx_gas_limit_positive: transaction gas limit must be > 0")]
    ZeroGasLimit,
    #[error("gas_price_non_negative: gas price {0} is negative")]
    NegativeGasPrice(Amount),
    #[error("user_gas_within_limit: user operations consume {used} gas but the limit is {limit}")]
    UserGasExceedsLimit { used: Gas, limit: Gas },
    #[error("solver_gas_budget_positive: no gas left for solver operations")]
    EmptySolverBudget,
    #[error("bid_non_negative: solver {0} bids a negative amount")]
    NegativeBid(SolverId),
    #[error("gas_reserved_positive: solver {0} reserves no gas")]
    ZeroGasReserved(SolverId),
    #[error("gas_used_within_reserved: solver {solver} uses {used} gas but reserved {reserved}")]
    GasUsedExceedsReserved { solver: SolverId, used: Gas, reserved: Gas },
    #[error("one_operation_per_solver: solver {0} submitted more than one operation")]
    DuplicateSolver(SolverId),
    #[error("solver_gas_within_budget: operations reserve {reserved} gas but the budget is {budget}")]
    GasBudgetExceeded { reserved: Gas, budget: Gas },
}

impl AuctionError {
    /// Name of the violated constraint, as used in diagnostics.
    pub fn constraint(&self) -> &'static str {
        match self {
            AuctionError::ZeroGasLimit => "tx_gas_limit_positive",
            AuctionError::NegativeGasPrice(_) => "gas_price_non_negative",
            AuctionError::UserGasExceedsLimit { .. } => "user_gas_within_limit",
            AuctionError::EmptySolverBudget => "solver_gas_budget_positive",
            AuctionError::NegativeBid(_) => "bid_non_negative",
            AuctionError::ZeroGasReserved(_) => "gas_reserved_positive",
            AuctionError::GasUsedExceedsReserved { .. } => "gas_used_within_reserved",
            AuctionError::DuplicateSolver(_) => "one_operation_per_solver",
            AuctionError::GasBudgetExceeded { .. } => "solver_gas_within_budget",
        }
    }
}

/// Gas limit, user-operation consumption and gas price of one transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSchedule {
    pub tx_gas_limit: Gas,
    #[serde(default)]
    pub user_gas_consumed: Gas,
    pub gas_price: Amount,
}

impl GasSchedule {
    pub fn new(tx_gas_limit: Gas, user_gas_consumed: Gas, gas_price: Amount) -> Result<Self, AuctionError> {
        let schedule = GasSchedule {
            tx_gas_limit,
            user_gas_consumed,
            gas_price,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    /// A schedule with no user gas, so the solver budget equals `gamma`.
    pub fn with_budget(gamma: Gas, gas_price: Amount) -> Result<Self, AuctionError> {
        Self::new(gamma, 0, gas_price)
    }

    pub fn validate(&self) -> Result<(), AuctionError> {
        if self.tx_gas_limit == 0 {
            return Err(AuctionError::ZeroGasLimit);
        }
        if self.gas_price.is_negative() {
            return Err(AuctionError::NegativeGasPrice(self.gas_price));
        }
        if self.user_gas_consumed > self.tx_gas_limit {
            return Err(AuctionError::UserGasExceedsLimit {
                used: self.user_gas_consumed,
                limit: self.tx_gas_limit,
            });
        }
        if self.user_gas_consumed == self.tx_gas_limit {
            return Err(AuctionError::EmptySolverBudget);
        }
        Ok(())
    }

    /// Gas available to all solver operations (Γ).
    pub fn solver_gas_budget(&self) -> Result<Gas, AuctionError> {
        self.validate()?;
        Ok(self.tx_gas_limit - self.user_gas_consumed)
    }
}

/// Free-function form of [`GasSchedule::solver_gas_budget`].
pub fn solver_gas_budget(schedule: &GasSchedule) -> Result<Gas, AuctionError> {
    schedule.solver_gas_budget()
}

/// Scripted execution outcome of a solver operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Succeed,
    Revert,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOperation {
    pub solver_id: SolverId,
    pub bid: Amount,
    pub gas_reserved: Gas,
    pub gas_used: Gas,
    pub behavior: Behavior,
}

impl SolverOperation {
    /// An operation that uses all the gas it reserves.
    pub fn new(solver_id: impl Into<SolverId>, bid: Amount, gas: Gas, behavior: Behavior) -> Self {
        SolverOperation {
            solver_id: solver_id.into(),
            bid,
            gas_reserved: gas,
            gas_used: gas,
            behavior,
        }
    }

    pub fn with_gas_used(mut self, gas_used: Gas) -> Self {
        self.gas_used = gas_used;
        self
    }

    pub fn validate(&self) -> Result<(), AuctionError> {
        if self.bid.is_negative() {
            return Err(AuctionError::NegativeBid(self.solver_id.clone()));
        }
        if self.gas_reserved == 0 {
            return Err(AuctionError::ZeroGasReserved(self.solver_id.clone()));
        }
        if self.gas_used > self.gas_reserved {
            return Err(AuctionError::GasUsedExceedsReserved {
                solver: self.solver_id.clone(),
                used: self.gas_used,
                reserved: self.gas_reserved,
            });
        }
        Ok(())
    }

    /// Execution order: bid descending, then gas reserved ascending, then
    /// solver id. The remaining fields only make the order total.
    pub fn execution_order(&self, other: &Self) -> Ordering {
        other
            .bid
            .cmp(&self.bid)
            .then(self.gas_reserved.cmp(&other.gas_reserved))
            .then_with(|| self.solver_id.cmp(&other.solver_id))
            .then(self.gas_used.cmp(&other.gas_used))
            .then(self.behavior.cmp(&other.behavior))
    }
}

impl From<String> for SolverId {
    fn from(s: String) -> Self {
        SolverId(s)
    }
}

/// Solver operations packed into one transaction, in execution order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuctionTransaction {
    schedule: GasSchedule,
    solver_ops: Vec<SolverOperation>,
    private_values: BTreeMap<SolverId, Amount>,
}

impl AuctionTransaction {
    /// Validates and orders `ops`. Unlike [`admit_operations`] nothing is
    /// dropped: any violated constraint is an error.
    pub fn new(schedule: GasSchedule, mut ops: Vec<SolverOperation>) -> Result<Self, AuctionError> {
        let budget = schedule.solver_gas_budget()?;
        let mut seen = BTreeSet::new();
        for op in &ops {
            op.validate()?;
            if !seen.insert(op.solver_id.clone()) {
                return Err(AuctionError::DuplicateSolver(op.solver_id.clone()));
            }
        }
        let reserved: Gas = ops.iter().map(|op| op.gas_reserved).sum();
        if reserved > budget {
            return Err(AuctionError::GasBudgetExceeded { reserved, budget });
        }
        ops.sort_by(SolverOperation::execution_order);
        Ok(AuctionTransaction {
            schedule,
            solver_ops: ops,
            private_values: BTreeMap::new(),
        })
    }

    pub fn with_private_values(mut self, values: BTreeMap<SolverId, Amount>) -> Self {
        self.private_values = values;
        self
    }

    /// The same transaction with each operation's behavior replaced, in
    /// execution order. Extra behaviors are ignored; missing ones keep the
    /// original.
    pub fn with_behaviors<I: IntoIterator<Item = Behavior>>(&self, behaviors: I) -> Self {
        let mut tx = self.clone();
        for (op, behavior) in tx.solver_ops.iter_mut().zip(behaviors) {
            op.behavior = behavior;
        }
        tx
    }

    pub fn schedule(&self) -> &GasSchedule {
        &self.schedule
    }

    /// Γ. Always positive for a constructed transaction.
    pub fn gamma(&self) -> Gas {
        self.schedule.tx_gas_limit - self.schedule.user_gas_consumed
    }

    pub fn solver_ops(&self) -> &[SolverOperation] {
        &self.solver_ops
    }

    pub fn private_values(&self) -> &BTreeMap<SolverId, Amount> {
        &self.private_values
    }

    pub fn reserved_gas(&self) -> Gas {
        self.solver_ops.iter().map(|op| op.gas_reserved).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.solver_ops.is_empty()
    }

    pub fn len(&self) -> usize {
        self.solver_ops.len()
    }
}

/// Builds a transaction from candidate bids.
///
/// Keeps one operation per solver (its best under execution order), then
/// walks candidates in execution order and admits each whole operation that
/// still fits in the remaining gas budget. Invalid candidates are dropped.
pub fn admit_operations(
    candidates: &[SolverOperation],
    schedule: &GasSchedule,
) -> Result<AuctionTransaction, AuctionError> {
    let budget = schedule.solver_gas_budget()?;

    let mut best: BTreeMap<&SolverId, &SolverOperation> = BTreeMap::new();
    for op in candidates.iter().filter(|op| op.validate().is_ok()) {
        best.entry(&op.solver_id)
            .and_modify(|cur| {
                if op.execution_order(cur) == Ordering::Less {
                    *cur = op;
                }
            })
            .or_insert(op);
    }
    let mut ordered: Vec<&SolverOperation> = best.into_values().collect();
    ordered.sort_by(|a, b| a.execution_order(b));

    let mut remaining = budget;
    let mut admitted = Vec::new();
    for op in ordered {
        if op.gas_reserved <= remaining {
            remaining -= op.gas_reserved;
            admitted.push(op.clone());
        }
    }
    Ok(AuctionTransaction {
        schedule: *schedule,
        solver_ops: admitted,
        private_values: BTreeMap::new(),
    })
}
