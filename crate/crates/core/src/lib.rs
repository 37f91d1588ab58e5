//! Failure-cost settlement for on-chain order flow auctions.
//!
//! Solver operations are packed into one transaction, executed in bid order
//! until one succeeds, and every operation that executed and reverted pays a
//! penalty scaled by its share of the solver gas budget. On top of that core
//! the crate provides escrow bookkeeping, censorship-cost analysis,
//! equilibrium bidding solvers and Monte-Carlo / discrete-event simulation.

pub mod amount;
pub mod auction;
pub mod censorship;
pub mod equilibrium;
pub mod escrow;
pub mod settlement;
pub mod simulation;

pub use amount::{Amount, Gas};
pub use auction::{
    admit_operations, solver_gas_budget, AuctionError, AuctionTransaction, Behavior, GasSchedule, SolverId,
    SolverOperation,
};
pub use settlement::{failure_cost, guaranteed_minimum, settle, solver_payoff, Outcome, SettlementResult};
