use super::{Message, MessageClass, NewTransaction};
use crate::error::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TxnPattern {
    /// Request to home, response from home.
    TwoHop,
    /// Request to home, forward to owner, response from owner.
    ThreeHop,
}

/// Which message the transaction is waiting for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxnPhase {
    AwaitRequest,
    AwaitForward,
    AwaitResponse,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub id: u64,
    pub core: u32,
    pub pattern: TxnPattern,
    pub home_core: u32,
    pub owner_core: Option<u32>,
    pub phase: TxnPhase,
    pub issued_at: u64,
    pub completed_at: Option<u64>,
    /// Summed end-to-end delay of the transaction's messages.
    pub noc_delay: u64,
}

impl Transaction {
    pub fn new(id: u64, core: u32, new: NewTransaction, now: u64) -> Self {
        Transaction {
            id,
            core,
            pattern: new.pattern,
            home_core: new.home_core,
            owner_core: new.owner_core,
            phase: TxnPhase::AwaitRequest,
            issued_at: now,
            completed_at: None,
            noc_delay: 0,
        }
    }
}

/// Endpoints and class of a follow-up message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessageSpec {
    pub src_core: u32,
    pub dst_core: u32,
    pub class: MessageClass,
}

/// Step the transaction FSM on a delivered message and return the messages it
/// triggers. A response at the requester completes the transaction.
pub fn transaction_advance(tx: &mut Transaction, delivered: &Message, now: u64) -> Result<Vec<MessageSpec>, SimError> {
    let mismatch = |why: &str| {
        SimError::Protocol(format!(
            "transaction {} in phase {:?} cannot accept {:?} message {} ({} -> {}): {why}",
            tx.id, tx.phase, delivered.class, delivered.id, delivered.src_core, delivered.dst_core
        ))
    };
    if delivered.txn != Some(tx.id) {
        return Err(mismatch("message belongs to another transaction"));
    }
    match (tx.phase, delivered.class) {
        (TxnPhase::AwaitRequest, MessageClass::Request) => {
            if delivered.dst_core != tx.home_core {
                return Err(mismatch("request delivered away from home"));
            }
            match (tx.pattern, tx.owner_core) {
                (TxnPattern::TwoHop, _) => {
                    tx.phase = TxnPhase::AwaitResponse;
                    Ok(vec![MessageSpec {
                        src_core: tx.home_core,
                        dst_core: tx.core,
                        class: MessageClass::Response,
                    }])
                }
                (TxnPattern::ThreeHop, Some(owner)) => {
                    tx.phase = TxnPhase::AwaitForward;
                    Ok(vec![MessageSpec {
                        src_core: tx.home_core,
                        dst_core: owner,
                        class: MessageClass::Forward,
                    }])
                }
                (TxnPattern::ThreeHop, None) => Err(mismatch("three-hop transaction without owner")),
            }
        }
        (TxnPhase::AwaitForward, MessageClass::Forward) => {
            let owner = tx.owner_core.ok_or_else(|| mismatch("forward without owner"))?;
            if delivered.dst_core != owner {
                return Err(mismatch("forward delivered away from owner"));
            }
            tx.phase = TxnPhase::AwaitResponse;
            Ok(vec![MessageSpec {
                src_core: owner,
                dst_core: tx.core,
                class: MessageClass::Response,
            }])
        }
        (TxnPhase::AwaitResponse, MessageClass::Response) => {
            if delivered.dst_core != tx.core {
                return Err(mismatch("response delivered away from requester"));
            }
            if now <= tx.issued_at {
                return Err(mismatch("completion must follow issue"));
            }
            tx.phase = TxnPhase::Complete;
            tx.completed_at = Some(now);
            Ok(Vec::new())
        }
        _ => Err(mismatch("unexpected message for phase")),
    }
}
