//! Atomic crosschain transactions: a coordinator-driven two-phase commit
//! over the simulated chains, with a durable journal, fault injection and
//! restart recovery.

mod coordinator;
mod journal;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ledger::{Address, ChainId, ContractCall, LedgerError, PartyId, TxId, World};

pub use coordinator::{crosschain_read, Coordinator, Execution, Recovered};
pub use journal::{Journal, JournalRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Step {
    /// Read `key` from a contract; the value is bound to `bind` for later
    /// calls. `reader` needs group membership or a grant.
    Read {
        chain: ChainId,
        address: Address,
        key: String,
        reader: PartyId,
        bind: String,
    },
    /// Contract call; a [`CallHandler`] turns it into a concrete contract
    /// call once earlier reads are known.
    Call {
        chain: ChainId,
        address: Address,
        author: PartyId,
        method: String,
        #[serde(default)]
        args: serde_json::Value,
    },
    Transfer {
        from_chain: ChainId,
        to_chain: ChainId,
        from: PartyId,
        to: PartyId,
        amount: u64,
    },
}

impl Step {
    fn chains(&self) -> Vec<&ChainId> {
        match self {
            Step::Read { chain, .. } | Step::Call { chain, .. } => vec![chain],
            Step::Transfer {
                from_chain,
                to_chain,
                ..
            } => vec![from_chain, to_chain],
        }
    }

    fn lock_targets(&self) -> Vec<LockTarget> {
        match self {
            Step::Read { chain, address, .. } | Step::Call { chain, address, .. } => {
                vec![LockTarget {
                    chain: chain.clone(),
                    target: Target::Contract(address.clone()),
                }]
            }
            Step::Transfer {
                from_chain,
                to_chain,
                from,
                to,
                ..
            } => vec![
                LockTarget {
                    chain: from_chain.clone(),
                    target: Target::Account(from.clone()),
                },
                LockTarget {
                    chain: to_chain.clone(),
                    target: Target::Account(to.clone()),
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Target {
    Contract(Address),
    Account(PartyId),
}

/// Locks are taken in (chain, target) order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LockTarget {
    pub chain: ChainId,
    pub target: Target,
}

impl fmt::Display for LockTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.target {
            Target::Contract(a) => write!(f, "{}:{a}", self.chain),
            Target::Account(p) => write!(f, "{}:account/{p}", self.chain),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxStatus {
    Planned,
    Locking,
    Executing,
    Committed,
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrosschainTx {
    pub id: TxId,
    pub originator: PartyId,
    pub steps: Vec<Step>,
    pub status: TxStatus,
}

impl CrosschainTx {
    /// Every contract touched plus both accounts of each transfer, sorted.
    pub fn lock_set(&self) -> Vec<LockTarget> {
        let mut set: Vec<_> = self.steps.iter().flat_map(Step::lock_targets).collect();
        set.sort();
        set.dedup();
        set
    }
}

/// Where the coordinator halts. At most one per run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "at", content = "step", rename_all = "snake_case")]
pub enum CrashPoint {
    /// After the locks are taken, before the journal records it.
    Lock,
    /// Before staging the plan step with this zero-based index.
    Step(usize),
    /// After every step is staged, before the commit record.
    Stage,
    /// After the commit record and the first chain's application.
    Commit,
}

impl fmt::Display for CrashPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrashPoint::Lock => f.write_str("lock"),
            CrashPoint::Step(i) => write!(f, "step {i}"),
            CrashPoint::Stage => f.write_str("stage"),
            CrashPoint::Commit => f.write_str("commit"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IgnoreReason {
    LockConflict {
        lock: LockTarget,
        holder: TxId,
    },
    LockFailed {
        lock: LockTarget,
        cause: String,
    },
    StepFailed {
        step: usize,
        cause: String,
    },
    Rejected {
        step: usize,
        cause: String,
    },
    /// The coordinator restarted before the commit point.
    Recovered,
}

impl fmt::Display for IgnoreReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IgnoreReason::LockConflict { lock, holder } => {
                write!(f, "lock conflict on {lock} held by {holder}")
            }
            IgnoreReason::LockFailed { lock, cause } => write!(f, "cannot lock {lock}: {cause}"),
            IgnoreReason::StepFailed { step, cause } => write!(f, "step {step} failed: {cause}"),
            IgnoreReason::Rejected { step, cause } => write!(f, "step {step} rejected: {cause}"),
            IgnoreReason::Recovered => f.write_str("coordinator restarted before commit"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Committed { tx: TxId },
    Ignored { tx: TxId, reason: IgnoreReason },
}

impl Outcome {
    pub fn tx(&self) -> &TxId {
        match self {
            Outcome::Committed { tx } | Outcome::Ignored { tx, .. } => tx,
        }
    }

    pub fn is_committed(&self) -> bool {
        matches!(self, Outcome::Committed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum XchainError {
    #[error("crosschain plan has no steps")]
    EmptyPlan,
    #[error("plan references unknown chain `{0}`")]
    UnknownChain(ChainId),
    #[error("transaction {0} is not in the planned state")]
    NotPlanned(TxId),
    #[error("coordinator crashed at {point} while running {tx}")]
    Crashed { tx: TxId, point: CrashPoint },
    #[error("`{reader}` holds no read grant for `{key}`")]
    NoGrant { reader: PartyId, key: String },
    #[error("`{party}` may not read `{resource}`")]
    PrivacyViolation { party: PartyId, resource: String },
    #[error("transaction {tx} does not hold the lock on {lock}")]
    LockNotHeld { tx: TxId, lock: String },
    #[error("replay after the commit point failed: {0}")]
    ReplayFailed(String),
    #[error("journal: {0}")]
    Journal(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Values bound by earlier read steps.
pub type ReadSet = BTreeMap<String, Option<String>>;

/// Resolves a call step into a concrete contract call. An `Err` is a
/// business rejection and ignores the transaction.
pub trait CallHandler {
    fn handle(&mut self, step: usize, call: &Step, reads: &ReadSet)
        -> Result<ContractCall, String>;
}

/// Maps `record` and `grant_read` calls straight onto the contract methods.
#[derive(Debug, Default, Clone, Copy)]
pub struct StorageHandler;

impl CallHandler for StorageHandler {
    fn handle(
        &mut self,
        _step: usize,
        call: &Step,
        _reads: &ReadSet,
    ) -> Result<ContractCall, String> {
        let Step::Call { method, args, .. } = call else {
            return Err("not a call".into());
        };
        let field = |name: &str| {
            args.get(name)
                .and_then(|v| v.as_str())
                .map(str::to_string)
                .ok_or_else(|| format!("missing `{name}`"))
        };
        match method.as_str() {
            "record" => Ok(ContractCall::Record {
                key: field("key")?,
                value: field("value")?,
            }),
            "grant_read" => Ok(ContractCall::GrantRead {
                reader: field("reader")?.into(),
                key: field("key")?,
            }),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

/// Validate a step list against the world.
pub fn validate_steps(world: &World, steps: &[Step]) -> Result<(), XchainError> {
    if steps.is_empty() {
        return Err(XchainError::EmptyPlan);
    }
    for step in steps {
        for chain in step.chains() {
            if !world.has_chain(chain) {
                return Err(XchainError::UnknownChain(chain.clone()));
            }
        }
        if let Step::Read { chain, address, .. } | Step::Call { chain, address, .. } = step {
            world.chain(chain)?.contract(address)?;
        }
    }
    Ok(())
}
