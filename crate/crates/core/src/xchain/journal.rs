use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{IgnoreReason, LockTarget, Step, XchainError};
use crate::ledger::{ChainId, PartyId, SignedTx, TxId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum JournalRecord {
    Begin {
        tx: TxId,
        originator: PartyId,
        steps: Vec<Step>,
        locks: Vec<LockTarget>,
    },
    Locked {
        tx: TxId,
    },
    Staged {
        tx: TxId,
        step: usize,
        digest: String,
    },
    /// The commit point. Carries every effect so a restart can replay them.
    Commit {
        tx: TxId,
        effects: Vec<SignedTx>,
        digest: String,
    },
    Applied {
        tx: TxId,
        chain: ChainId,
    },
    Completed {
        tx: TxId,
    },
    Ignored {
        tx: TxId,
        reason: IgnoreReason,
    },
}

impl JournalRecord {
    pub fn tx(&self) -> &TxId {
        match self {
            JournalRecord::Begin { tx, .. }
            | JournalRecord::Locked { tx }
            | JournalRecord::Staged { tx, .. }
            | JournalRecord::Commit { tx, .. }
            | JournalRecord::Applied { tx, .. }
            | JournalRecord::Completed { tx }
            | JournalRecord::Ignored { tx, .. } => tx,
        }
    }
}

/// A transaction the journal shows as begun but not finished.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Unfinished {
    pub tx: TxId,
    pub locks: Vec<LockTarget>,
    pub effects: Option<Vec<SignedTx>>,
    pub applied: BTreeSet<ChainId>,
}

/// Append-only coordinator journal.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Journal {
    records: Vec<JournalRecord>,
}

impl Journal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, record: JournalRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[JournalRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("journal record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, XchainError> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| XchainError::Journal(format!("line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Journal { records })
    }

    /// Transactions in begin order that have neither completed nor been
    /// ignored.
    pub(crate) fn unfinished(&self) -> Vec<Unfinished> {
        let mut open: Vec<Unfinished> = Vec::new();
        for r in &self.records {
            match r {
                JournalRecord::Begin { tx, locks, .. } => open.push(Unfinished {
                    tx: tx.clone(),
                    locks: locks.clone(),
                    effects: None,
                    applied: BTreeSet::new(),
                }),
                JournalRecord::Commit { tx, effects, .. } => {
                    if let Some(u) = open.iter_mut().find(|u| &u.tx == tx) {
                        u.effects = Some(effects.clone());
                    }
                }
                JournalRecord::Applied { tx, chain } => {
                    if let Some(u) = open.iter_mut().find(|u| &u.tx == tx) {
                        u.applied.insert(chain.clone());
                    }
                }
                JournalRecord::Completed { tx } | JournalRecord::Ignored { tx, .. } => {
                    open.retain(|u| &u.tx != tx)
                }
                JournalRecord::Locked { .. } | JournalRecord::Staged { .. } => {}
            }
        }
        open
    }

    /// Number of transactions ever begun.
    /// Transactions begun but not yet completed or ignored.
    pub fn open_count(&self) -> usize {
        self.unfinished().len()
    }

    pub fn begun(&self) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r, JournalRecord::Begin { .. }))
            .count()
    }
}
