//! Discrete-event model of the auctioneer pipeline on a simulated clock.
//!
//! The order is placed at t = 0. Escrow is read from chain ahead of time, the
//! auction runs entirely off cached balances, and the guarantee leaves the
//! auctioneer before anything touches the chain again.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::SimulationError;
use crate::amount::Amount;
use crate::auction::{admit_operations, AuctionTransaction, GasSchedule, SolverId, SolverOperation};
use crate::escrow::{escrow_charge, AuctioneerId, EscrowLedger, EscrowSnapshot, ReservationHandle};
use crate::settlement::{guaranteed_minimum, settle, SettlementResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineConfig {
    /// One-way latency between user and auctioneer.
    pub user_latency_ms: u64,
    pub auction_duration_ms: u64,
    /// From guarantee issuance to block execution.
    pub execution_delay_ms: u64,
    /// How long before the order the escrow snapshot is taken.
    #[serde(default = "default_prefetch_lead")]
    pub prefetch_lead_ms: u64,
}

fn default_prefetch_lead() -> u64 {
    100
}

impl TimelineConfig {
    pub fn new(user_latency_ms: u64, auction_duration_ms: u64, execution_delay_ms: u64) -> Self {
        TimelineConfig {
            user_latency_ms,
            auction_duration_ms,
            execution_delay_ms,
            prefetch_lead_ms: default_prefetch_lead(),
        }
    }
}

/// Solver operations submitted during the auction and each solver's escrow
/// at the auctioneer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineAuction {
    pub schedule: GasSchedule,
    pub solver_ops: Vec<SolverOperation>,
    pub escrow: BTreeMap<SolverId, Amount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timeline {
    pub config: TimelineConfig,
    #[serde(default)]
    pub auction: Option<TimelineAuction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    EscrowPrefetched,
    OrderPlaced,
    OrderReceived,
    BidsCollected,
    GuaranteeIssued,
    GuaranteeDelivered,
    TxSubmitted,
    BlockExecuted,
    Settled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainAccess {
    Read,
    Write,
}

impl EventKind {
    pub fn chain_access(self) -> Option<ChainAccess> {
        match self {
            EventKind::EscrowPrefetched | EventKind::Settled => Some(ChainAccess::Read),
            EventKind::TxSubmitted | EventKind::BlockExecuted => Some(ChainAccess::Write),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TimelineEvent {
    pub at_ms: i64,
    pub kind: EventKind,
    pub chain_access: Option<ChainAccess>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineReport {
    pub events: Vec<TimelineEvent>,
    pub order_received_at_ms: i64,
    pub guarantee_issued_at_ms: i64,
    /// When the user holds the guarantee.
    pub guarantee_at_ms: i64,
    pub settled_at_ms: i64,
    /// Chain reads or writes strictly between order receipt and guarantee issuance.
    pub chain_events_during_auction: usize,
    pub admitted: Vec<SolverId>,
    pub guarantee_value: Option<Amount>,
    pub beneficiary_payout: Option<Amount>,
    pub escrow_after: BTreeMap<SolverId, Amount>,
}

struct Auctioneer<'a> {
    setup: &'a TimelineAuction,
    id: AuctioneerId,
    ledger: EscrowLedger,
    snapshot: Option<EscrowSnapshot>,
    tx: Option<AuctionTransaction>,
    reservations: Vec<(SolverId, ReservationHandle)>,
    result: Option<SettlementResult>,
}

impl<'a> Auctioneer<'a> {
    fn new(setup: &'a TimelineAuction) -> Result<Self, SimulationError> {
        let id = AuctioneerId::new("auctioneer");
        let mut ledger = EscrowLedger::new();
        for (solver, &amount) in &setup.escrow {
            ledger.deposit(solver.clone(), id.clone(), amount)?;
        }
        Ok(Auctioneer {
            setup,
            id,
            ledger,
            snapshot: None,
            tx: None,
            reservations: Vec::new(),
            result: None,
        })
    }

    /// Admission against cached escrow only: ops whose snapshot balance
    /// cannot cover the requirement are dropped.
    fn collect_bids(&mut self) -> Result<(), SimulationError> {
        let snapshot = self.snapshot.as_ref().expect("prefetch precedes bid collection");
        let schedule = &self.setup.schedule;
        let gamma = schedule.solver_gas_budget()?;
        let admitted = admit_operations(&self.setup.solver_ops, schedule)?;
        let mut in_flight = snapshot.in_flight();
        let funded: Vec<SolverOperation> = admitted
            .solver_ops()
            .iter()
            .filter(|op| in_flight.try_commit(op, gamma, schedule.gas_price).is_ok())
            .cloned()
            .collect();
        self.tx = Some(AuctionTransaction::new(*schedule, funded)?);
        Ok(())
    }

    fn submit(&mut self) -> Result<(), SimulationError> {
        let tx = self.tx.as_ref().expect("bids collected before submission");
        for op in tx.solver_ops() {
            let handle = self.ledger.reserve(&self.id, op, tx.gamma(), tx.schedule().gas_price)?;
            self.reservations.push((op.solver_id.clone(), handle));
        }
        Ok(())
    }

    fn execute(&mut self) {
        self.result = Some(settle(self.tx.as_ref().expect("submitted before execution")));
    }

    fn finish(&mut self) -> Result<(), SimulationError> {
        let result = self.result.as_ref().expect("executed before settlement");
        for (solver, handle) in self.reservations.drain(..) {
            let charge = escrow_charge(result, &solver).unwrap_or_default();
            self.ledger.settle_reservation(handle, charge)?;
        }
        Ok(())
    }
}

pub fn run_timeline(model: &Timeline) -> Result<TimelineReport, SimulationError> {
    let c = model.config;
    let latency = c.user_latency_ms as i64;
    let mut auctioneer = model.auction.as_ref().map(Auctioneer::new).transpose()?;

    let mut queue: BinaryHeap<Reverse<(i64, u64, EventKind)>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push = |queue: &mut BinaryHeap<_>, at: i64, kind: EventKind| {
        queue.push(Reverse((at, seq, kind)));
        seq += 1;
    };
    push(&mut queue, -(c.prefetch_lead_ms as i64), EventKind::EscrowPrefetched);
    push(&mut queue, 0, EventKind::OrderPlaced);

    let mut events = Vec::new();
    while let Some(Reverse((at, _, kind))) = queue.pop() {
        events.push(TimelineEvent {
            at_ms: at,
            kind,
            chain_access: kind.chain_access(),
        });
        match kind {
            EventKind::EscrowPrefetched => {
                if let Some(a) = auctioneer.as_mut() {
                    a.snapshot = Some(a.ledger.prefetch_snapshot(&a.id));
                }
            }
            EventKind::OrderPlaced => push(&mut queue, at + latency, EventKind::OrderReceived),
            EventKind::OrderReceived => push(&mut queue, at + c.auction_duration_ms as i64, EventKind::BidsCollected),
            EventKind::BidsCollected => {
                if let Some(a) = auctioneer.as_mut() {
                    a.collect_bids()?;
                }
                push(&mut queue, at, EventKind::GuaranteeIssued);
            }
            EventKind::GuaranteeIssued => {
                push(&mut queue, at + latency, EventKind::GuaranteeDelivered);
                push(&mut queue, at, EventKind::TxSubmitted);
            }
            EventKind::GuaranteeDelivered => {}
            EventKind::TxSubmitted => {
                if let Some(a) = auctioneer.as_mut() {
                    a.submit()?;
                }
                push(&mut queue, at + c.execution_delay_ms as i64, EventKind::BlockExecuted);
            }
            EventKind::BlockExecuted => {
                if let Some(a) = auctioneer.as_mut() {
                    a.execute();
                }
                push(&mut queue, at, EventKind::Settled);
            }
            EventKind::Settled => {
                if let Some(a) = auctioneer.as_mut() {
                    a.finish()?;
                }
            }
        }
    }

    let position = |kind: EventKind| {
        events
            .iter()
            .position(|e| e.kind == kind)
            .expect("every stage runs once")
    };
    let (received, issued) = (position(EventKind::OrderReceived), position(EventKind::GuaranteeIssued));
    let during_auction: Vec<&TimelineEvent> = events[received + 1..issued]
        .iter()
        .filter(|e| e.chain_access.is_some())
        .collect();
    if let Some(e) = during_auction.first() {
        return Err(SimulationError::ChainAccessDuringAuction {
            at_ms: e.at_ms,
            access: e.chain_access.expect("filtered on chain access"),
        });
    }

    let at = |kind: EventKind| events[position(kind)].at_ms;
    let (admitted, guarantee_value, beneficiary_payout, escrow_after) = match &auctioneer {
        Some(a) => {
            let tx = a.tx.as_ref().expect("auction ran");
            let result = a.result.as_ref().expect("auction settled");
            let guarantee = guaranteed_minimum(tx);
            assert!(
                result.beneficiary_payout >= guarantee,
                "payout fell below the guarantee"
            );
            let balances = a
                .setup
                .escrow
                .keys()
                .map(|s| (s.clone(), a.ledger.balance(s, &a.id).expect("account opened at start")))
                .collect();
            (
                tx.solver_ops().iter().map(|op| op.solver_id.clone()).collect(),
                Some(guarantee),
                Some(result.beneficiary_payout),
                balances,
            )
        }
        None => (Vec::new(), None, None, BTreeMap::new()),
    };

    Ok(TimelineReport {
        order_received_at_ms: at(EventKind::OrderReceived),
        guarantee_issued_at_ms: at(EventKind::GuaranteeIssued),
        guarantee_at_ms: at(EventKind::GuaranteeDelivered),
        settled_at_ms: at(EventKind::Settled),
        chain_events_during_auction: during_auction.len(),
        events,
        admitted,
        guarantee_value,
        beneficiary_payout,
        escrow_after,
    })
}
