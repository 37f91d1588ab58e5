//! Per-(solver, auctioneer) escrow with in-flight reservations.
//!
//! An auctioneer may only place a solver operation in an auction when the
//! solver's available escrow covers the operation's worst-case failure cost
//! plus its gas. Reservations stay pending until the outcome is known.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::{Amount, Gas};
use crate::auction::{SolverId, SolverOperation};
use crate::settlement::{Outcome, SettlementResult};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AuctioneerId(pub String);

impl AuctioneerId {
    pub fn new(id: impl Into<String>) -> Self {
        AuctioneerId(id.into())
    }
}

impl fmt::Display for AuctioneerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AuctioneerId {
    fn from(s: &str) -> Self {
        AuctioneerId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EscrowError {
    #[error("no escrow account for solver {solver} at auctioneer {auctioneer}")]
    UnknownAccount { solver: SolverId, auctioneer: AuctioneerId },
    #[error("insufficient escrow: {required} required, {available} available")]
    InsufficientEscrow { required: Amount, available: Amount },
    #[error("unknown or already settled reservation {0}")]
    UnknownReservation(ReservationHandle),
    #[error("charge {charged} exceeds reservation {reserved}")]
    ChargeExceedsReservation { charged: Amount, reserved: Amount },
    #[error("negative amount {0}")]
    NegativeAmount(Amount),
    #[error("solver gas budget must be positive and cover the operation")]
    InvalidGamma,
    #[error("escrow document: {0}")]
    Json(String),
}

/// Worst-case failure cost plus gas prepayment for one operation:
/// `bid * gas_reserved / gamma + gas_price * gas_reserved`.
pub fn required_escrow(bid: Amount, gas_reserved: Gas, gamma: Gas, gas_price: Amount) -> Result<Amount, EscrowError> {
    if gamma == 0 || gas_reserved > gamma {
        return Err(EscrowError::InvalidGamma);
    }
    Ok(bid.mul_div(gas_reserved, gamma) + gas_price.mul_gas(gas_reserved))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReservationHandle(u64);

impl fmt::Display for ReservationHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Escrow held back for one operation whose outcome is unknown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PendingReservation {
    pub handle: ReservationHandle,
    pub solver_id: SolverId,
    pub bid: Amount,
    pub gas_reserved: Gas,
    pub amount: Amount,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Account {
    balance: Amount,
    pending: Vec<PendingReservation>,
}

impl Account {
    fn in_flight(&self) -> Amount {
        self.pending.iter().map(|r| r.amount).sum()
    }

    fn available(&self) -> Amount {
        self.balance - self.in_flight()
    }
}

type AccountKey = (SolverId, AuctioneerId);

/// Escrow balances keyed by (solver, auctioneer).
///
/// Mutation goes through `&mut self`, so a shared ledger needs an outer lock;
/// every operation is all-or-nothing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EscrowLedger {
    accounts: BTreeMap<AccountKey, Account>,
    owners: BTreeMap<ReservationHandle, AccountKey>,
    next_handle: u64,
}

impl EscrowLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds funds, opening the account if needed.
    pub fn deposit(&mut self, solver: SolverId, auctioneer: AuctioneerId, amount: Amount) -> Result<(), EscrowError> {
        if amount.is_negative() {
            return Err(EscrowError::NegativeAmount(amount));
        }
        self.accounts.entry((solver, auctioneer)).or_default().balance += amount;
        Ok(())
    }

    pub fn balance(&self, solver: &SolverId, auctioneer: &AuctioneerId) -> Result<Amount, EscrowError> {
        Ok(self.account(solver, auctioneer)?.balance)
    }

    /// Balance minus all pending reservations.
    pub fn available(&self, solver: &SolverId, auctioneer: &AuctioneerId) -> Result<Amount, EscrowError> {
        Ok(self.account(solver, auctioneer)?.available())
    }

    pub fn pending(&self, solver: &SolverId, auctioneer: &AuctioneerId) -> Result<&[PendingReservation], EscrowError> {
        Ok(&self.account(solver, auctioneer)?.pending)
    }

    /// Reserves the required escrow for `op`, or rejects it leaving the
    /// ledger untouched.
    pub fn reserve(
        &mut self,
        auctioneer: &AuctioneerId,
        op: &SolverOperation,
        gamma: Gas,
        gas_price: Amount,
    ) -> Result<ReservationHandle, EscrowError> {
        let required = required_escrow(op.bid, op.gas_reserved, gamma, gas_price)?;
        let key = (op.solver_id.clone(), auctioneer.clone());
        let account = self.accounts.get_mut(&key).ok_or_else(|| EscrowError::UnknownAccount {
            solver: op.solver_id.clone(),
            auctioneer: auctioneer.clone(),
        })?;
        let available = account.available();
        if available < required {
            return Err(EscrowError::InsufficientEscrow { required, available });
        }
        let handle = ReservationHandle(self.next_handle);
        self.next_handle += 1;
        account.pending.push(PendingReservation {
            handle,
            solver_id: op.solver_id.clone(),
            bid: op.bid,
            gas_reserved: op.gas_reserved,
            amount: required,
        });
        self.owners.insert(handle, key);
        Ok(handle)
    }

    /// Releases a reservation and deducts the actual charge. The unused part
    /// of the reservation becomes available again.
    pub fn settle_reservation(&mut self, handle: ReservationHandle, charged: Amount) -> Result<(), EscrowError> {
        if charged.is_negative() {
            return Err(EscrowError::NegativeAmount(charged));
        }
        let key = self
            .owners
            .get(&handle)
            .ok_or(EscrowError::UnknownReservation(handle))?;
        let account = self
            .accounts
            .get_mut(key)
            .expect("owner index points at a live account");
        let index = account
            .pending
            .iter()
            .position(|r| r.handle == handle)
            .expect("owner index points at a pending reservation");
        let reserved = account.pending[index].amount;
        if charged > reserved {
            return Err(EscrowError::ChargeExceedsReservation { charged, reserved });
        }
        account.pending.remove(index);
        account.balance -= charged;
        self.owners.remove(&handle);
        Ok(())
    }

    /// Drops a reservation without charging, e.g. for an operation that
    /// never made it on chain.
    pub fn cancel_reservation(&mut self, handle: ReservationHandle) -> Result<(), EscrowError> {
        self.settle_reservation(handle, Amount::ZERO)
    }

    /// Drops every pending reservation held for `auctioneer`. Returns how many
    /// were released.
    pub fn cancel_auctioneer(&mut self, auctioneer: &AuctioneerId) -> usize {
        let mut released = 0;
        for ((_, a), account) in self.accounts.iter_mut() {
            if a == auctioneer {
                for r in account.pending.drain(..) {
                    self.owners.remove(&r.handle);
                    released += 1;
                }
            }
        }
        released
    }

    /// Read-only view of every solver's available escrow at `auctioneer`.
    pub fn prefetch_snapshot(&self, auctioneer: &AuctioneerId) -> EscrowSnapshot {
        let available = self
            .accounts
            .iter()
            .filter(|((_, a), _)| a == auctioneer)
            .map(|((s, _), account)| (s.clone(), account.available()))
            .collect();
        EscrowSnapshot {
            auctioneer: auctioneer.clone(),
            available,
        }
    }

    /// Exports balances as `{solver: {auctioneer: balance}}`. Pending
    /// reservations are not part of the document.
    pub fn to_json(&self) -> Result<String, EscrowError> {
        let mut doc: BTreeMap<&str, BTreeMap<&str, Amount>> = BTreeMap::new();
        for ((s, a), account) in &self.accounts {
            doc.entry(s.as_str()).or_default().insert(a.0.as_str(), account.balance);
        }
        serde_json::to_string_pretty(&doc).map_err(|e| EscrowError::Json(e.to_string()))
    }

    pub fn from_json(json: &str) -> Result<Self, EscrowError> {
        let doc: BTreeMap<String, BTreeMap<String, Amount>> =
            serde_json::from_str(json).map_err(|e| EscrowError::Json(e.to_string()))?;
        let mut ledger = EscrowLedger::new();
        for (solver, per_auctioneer) in doc {
            for (auctioneer, balance) in per_auctioneer {
                ledger.deposit(SolverId(solver.clone()), AuctioneerId(auctioneer), balance)?;
            }
        }
        Ok(ledger)
    }

    fn account(&self, solver: &SolverId, auctioneer: &AuctioneerId) -> Result<&Account, EscrowError> {
        self.accounts
            .get(&(solver.clone(), auctioneer.clone()))
            .ok_or_else(|| EscrowError::UnknownAccount {
                solver: solver.clone(),
                auctioneer: auctioneer.clone(),
            })
    }
}

/// What a solver's escrow pays once its operation settles: failure cost plus
/// own gas when reverted, own gas when it won, nothing when skipped.
///
/// The winner's bid and any user-operation gas attributed to it are paid from
/// execution proceeds rather than escrow.
pub fn escrow_charge(result: &SettlementResult, solver: &SolverId) -> Option<Amount> {
    let entry = result.entry(solver)?;
    let own_gas = result.gas_price.mul_gas(entry.gas_used);
    Some(match entry.outcome {
        Outcome::Reverted => entry.failure_cost + own_gas,
        Outcome::Succeeded => own_gas,
        Outcome::Skipped => Amount::ZERO,
    })
}

/// Cached balances for one auctioneer, taken before an auction starts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EscrowSnapshot {
    pub auctioneer: AuctioneerId,
    pub available: BTreeMap<SolverId, Amount>,
}

impl EscrowSnapshot {
    pub fn available(&self, solver: &SolverId) -> Amount {
        self.available.get(solver).copied().unwrap_or_default()
    }

    /// Starts local in-flight accounting against this snapshot.
    pub fn in_flight(&self) -> InFlight<'_> {
        InFlight {
            snapshot: self,
            committed: BTreeMap::new(),
        }
    }
}

/// Auctioneer-side accounting of escrow committed during a live auction.
/// Touches only the snapshot, never the ledger.
#[derive(Debug, Clone)]
pub struct InFlight<'a> {
    snapshot: &'a EscrowSnapshot,
    committed: BTreeMap<SolverId, Amount>,
}

impl InFlight<'_> {
    pub fn remaining(&self, solver: &SolverId) -> Amount {
        self.snapshot.available(solver) - self.committed.get(solver).copied().unwrap_or_default()
    }

    /// Commits the required escrow for `op` if the cached balance covers it.
    pub fn try_commit(&mut self, op: &SolverOperation, gamma: Gas, gas_price: Amount) -> Result<Amount, EscrowError> {
        let required = required_escrow(op.bid, op.gas_reserved, gamma, gas_price)?;
        let available = self.remaining(&op.solver_id);
        if available < required {
            return Err(EscrowError::InsufficientEscrow { required, available });
        }
        *self.committed.entry(op.solver_id.clone()).or_default() += required;
        Ok(required)
    }
}
