use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::journal::{Journal, JournalRecord};
use super::{
    validate_steps, CallHandler, CrashPoint, CrosschainTx, IgnoreReason, LockTarget, Outcome,
    ReadSet, Step, Target, TxStatus, XchainError,
};
use crate::ledger::{
    sha256_hex, Chain, ChainId, LedgerError, PartyId, SignedTx, TxBody, TxPayload, World,
};

/// Read committed state from another chain inside a crosschain transaction.
/// The transaction must hold the contract's lock, its originator must be in
/// the contract's privacy group, and `reader` must be in the group or hold a
/// grant for `key`.
pub fn crosschain_read(
    world: &World,
    tx: &CrosschainTx,
    chain: &ChainId,
    address: &str,
    key: &str,
    reader: &PartyId,
) -> Result<Option<String>, XchainError> {
    read_from(world.chain(chain)?, tx, address, key, reader)
}

fn read_from(
    chain: &Chain,
    tx: &CrosschainTx,
    address: &str,
    key: &str,
    reader: &PartyId,
) -> Result<Option<String>, XchainError> {
    let contract = chain.contract(address)?;
    if contract.lock.as_deref() != Some(tx.id.as_str()) {
        return Err(XchainError::LockNotHeld {
            tx: tx.id.clone(),
            lock: format!("{}:{address}", chain.id()),
        });
    }
    if !contract.in_group(&tx.originator) {
        return Err(XchainError::PrivacyViolation {
            party: tx.originator.clone(),
            resource: address.to_string(),
        });
    }
    if !contract.in_group(reader) && !contract.has_grant(reader, key) {
        return Err(XchainError::NoGrant {
            reader: reader.clone(),
            key: key.to_string(),
        });
    }
    Ok(contract.storage.get(key).cloned())
}

fn effects_digest(effects: &[SignedTx]) -> String {
    sha256_hex(&[
        b"chainvoice/effects/v1",
        &serde_json::to_vec(effects).expect("effects serialize"),
    ])
}

fn effect_chains(effects: &[SignedTx]) -> Vec<ChainId> {
    let set: BTreeSet<_> = effects.iter().map(|e| e.body.chain.clone()).collect();
    set.into_iter().collect()
}

fn release(world: &mut World, tx: &str, locks: &[LockTarget]) {
    let chains: BTreeSet<_> = locks.iter().map(|l| &l.chain).collect();
    for id in chains {
        if let Ok(chain) = world.chain_mut(id) {
            chain.release(tx);
        }
    }
}

/// Apply the effects destined for `chain`, skipping any already applied.
fn apply_effects(
    world: &mut World,
    chain: &ChainId,
    effects: &[SignedTx],
) -> Result<(), XchainError> {
    let keys = world.keys().clone();
    let target = world.chain_mut(chain)?;
    for e in effects.iter().filter(|e| &e.body.chain == chain) {
        if target.has_applied(&e.hash()) {
            continue;
        }
        target
            .submit(e, &keys)
            .map_err(|err| XchainError::ReplayFailed(format!("{chain}: {err}")))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recovered {
    pub tx: String,
    pub outcome: Outcome,
}

/// Single coordinator owning the journal.
#[derive(Debug, Clone, Default)]
pub struct Coordinator {
    journal: Journal,
    planned: u64,
}

impl Coordinator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Resume from an existing journal, e.g. after a restart.
    pub fn with_journal(journal: Journal) -> Self {
        let planned = journal.begun() as u64;
        Coordinator { journal, planned }
    }

    pub fn journal(&self) -> &Journal {
        &self.journal
    }

    pub fn plan(
        &mut self,
        world: &World,
        originator: PartyId,
        steps: Vec<Step>,
    ) -> Result<CrosschainTx, XchainError> {
        validate_steps(world, &steps)?;
        world.party(&originator)?;
        let digest = sha256_hex(&[
            b"chainvoice/xtx/v1",
            originator.as_str().as_bytes(),
            &serde_json::to_vec(&steps).expect("steps serialize"),
            &self.planned.to_le_bytes(),
        ]);
        self.planned += 1;
        Ok(CrosschainTx {
            id: format!("xtx-{}", &digest[..16]),
            originator,
            steps,
            status: TxStatus::Planned,
        })
    }

    /// Run `tx` to completion, or until the injected crash.
    pub fn execute(
        &mut self,
        world: &mut World,
        tx: CrosschainTx,
        handler: &mut dyn CallHandler,
        fault: Option<CrashPoint>,
    ) -> Result<Outcome, XchainError> {
        let mut exec = Execution::new(tx)?;
        loop {
            if let Some(outcome) = exec.advance(self, world, handler, fault)? {
                return Ok(outcome);
            }
        }
    }

    /// Finish every transaction the journal shows as unfinished: replay
    /// those past the commit point, ignore the rest. Locks are released
    /// either way.
    pub fn recover(&mut self, world: &mut World) -> Result<Vec<Recovered>, XchainError> {
        let mut out = Vec::new();
        for u in self.journal.unfinished() {
            let outcome = match &u.effects {
                Some(effects) => {
                    for chain in effect_chains(effects) {
                        if !u.applied.contains(&chain) {
                            apply_effects(world, &chain, effects)?;
                            self.journal.append(JournalRecord::Applied {
                                tx: u.tx.clone(),
                                chain,
                            });
                        }
                    }
                    release(world, &u.tx, &u.locks);
                    self.journal
                        .append(JournalRecord::Completed { tx: u.tx.clone() });
                    Outcome::Committed { tx: u.tx.clone() }
                }
                None => {
                    release(world, &u.tx, &u.locks);
                    let reason = IgnoreReason::Recovered;
                    self.journal.append(JournalRecord::Ignored {
                        tx: u.tx.clone(),
                        reason: reason.clone(),
                    });
                    Outcome::Ignored {
                        tx: u.tx.clone(),
                        reason,
                    }
                }
            };
            out.push(Recovered { tx: u.tx, outcome });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    Lock,
    Stage(usize),
    Commit,
    Apply(usize),
    Finish,
    Done,
}

/// One crosschain transaction in flight. Each [`Execution::advance`] call
/// performs one coordinator action, so a scheduler can interleave several.
#[derive(Debug, Clone)]
pub struct Execution {
    tx: CrosschainTx,
    locks: Vec<LockTarget>,
    next: Action,
    reads: ReadSet,
    shadow: BTreeMap<ChainId, Chain>,
    effects: Vec<SignedTx>,
    apply_order: Vec<ChainId>,
}

impl Execution {
    pub fn new(tx: CrosschainTx) -> Result<Self, XchainError> {
        if tx.status != TxStatus::Planned {
            return Err(XchainError::NotPlanned(tx.id));
        }
        let locks = tx.lock_set();
        Ok(Execution {
            tx,
            locks,
            next: Action::Lock,
            reads: ReadSet::new(),
            shadow: BTreeMap::new(),
            effects: Vec::new(),
            apply_order: Vec::new(),
        })
    }

    pub fn tx(&self) -> &CrosschainTx {
        &self.tx
    }

    pub fn reads(&self) -> &ReadSet {
        &self.reads
    }

    pub fn is_done(&self) -> bool {
        self.next == Action::Done
    }

    fn crash(&mut self, point: CrashPoint) -> Result<Option<Outcome>, XchainError> {
        self.next = Action::Done;
        Err(XchainError::Crashed {
            tx: self.tx.id.clone(),
            point,
        })
    }

    fn ignore(
        &mut self,
        coord: &mut Coordinator,
        world: &mut World,
        reason: IgnoreReason,
    ) -> Result<Option<Outcome>, XchainError> {
        release(world, &self.tx.id, &self.locks);
        self.shadow.clear();
        self.effects.clear();
        self.tx.status = TxStatus::Ignored;
        self.next = Action::Done;
        coord.journal.append(JournalRecord::Ignored {
            tx: self.tx.id.clone(),
            reason: reason.clone(),
        });
        Ok(Some(Outcome::Ignored {
            tx: self.tx.id.clone(),
            reason,
        }))
    }

    pub fn advance(
        &mut self,
        coord: &mut Coordinator,
        world: &mut World,
        handler: &mut dyn CallHandler,
        fault: Option<CrashPoint>,
    ) -> Result<Option<Outcome>, XchainError> {
        match self.next {
            Action::Lock => {
                self.tx.status = TxStatus::Locking;
                coord.journal.append(JournalRecord::Begin {
                    tx: self.tx.id.clone(),
                    originator: self.tx.originator.clone(),
                    steps: self.tx.steps.clone(),
                    locks: self.locks.clone(),
                });
                for lock in self.locks.clone() {
                    let chain = world.chain_mut(&lock.chain)?;
                    let taken = match &lock.target {
                        Target::Contract(a) => chain.lock_contract(a, &self.tx.id),
                        Target::Account(p) => chain.lock_account(p, &self.tx.id),
                    };
                    let reason = match taken {
                        Ok(()) => continue,
                        Err(
                            LedgerError::ContractLocked { holder, .. }
                            | LedgerError::AccountLocked { holder, .. },
                        ) => IgnoreReason::LockConflict { lock, holder },
                        Err(e) => IgnoreReason::LockFailed {
                            lock,
                            cause: e.to_string(),
                        },
                    };
                    return self.ignore(coord, world, reason);
                }
                if fault == Some(CrashPoint::Lock) {
                    return self.crash(CrashPoint::Lock);
                }
                coord.journal.append(JournalRecord::Locked {
                    tx: self.tx.id.clone(),
                });
                self.tx.status = TxStatus::Executing;
                self.next = Action::Stage(0);
                Ok(None)
            }
            Action::Stage(i) => {
                if fault == Some(CrashPoint::Step(i)) {
                    return self.crash(CrashPoint::Step(i));
                }
                if let Err(reason) = self.stage(i, world, handler) {
                    return self.ignore(coord, world, reason);
                }
                coord.journal.append(JournalRecord::Staged {
                    tx: self.tx.id.clone(),
                    step: i,
                    digest: effects_digest(&self.effects),
                });
                self.next = if i + 1 < self.tx.steps.len() {
                    Action::Stage(i + 1)
                } else {
                    Action::Commit
                };
                Ok(None)
            }
            Action::Commit => {
                if fault == Some(CrashPoint::Stage) {
                    return self.crash(CrashPoint::Stage);
                }
                coord.journal.append(JournalRecord::Commit {
                    tx: self.tx.id.clone(),
                    effects: self.effects.clone(),
                    digest: effects_digest(&self.effects),
                });
                self.tx.status = TxStatus::Committed;
                self.shadow.clear();
                self.apply_order = effect_chains(&self.effects);
                if self.apply_order.is_empty() {
                    if fault == Some(CrashPoint::Commit) {
                        return self.crash(CrashPoint::Commit);
                    }
                    self.next = Action::Finish;
                } else {
                    self.next = Action::Apply(0);
                }
                Ok(None)
            }
            Action::Apply(j) => {
                let chain = self.apply_order[j].clone();
                apply_effects(world, &chain, &self.effects)?;
                coord.journal.append(JournalRecord::Applied {
                    tx: self.tx.id.clone(),
                    chain,
                });
                if j == 0 && fault == Some(CrashPoint::Commit) {
                    return self.crash(CrashPoint::Commit);
                }
                self.next = if j + 1 < self.apply_order.len() {
                    Action::Apply(j + 1)
                } else {
                    Action::Finish
                };
                Ok(None)
            }
            Action::Finish => {
                release(world, &self.tx.id, &self.locks);
                coord.journal.append(JournalRecord::Completed {
                    tx: self.tx.id.clone(),
                });
                self.next = Action::Done;
                Ok(Some(Outcome::Committed {
                    tx: self.tx.id.clone(),
                }))
            }
            Action::Done => Err(XchainError::NotPlanned(self.tx.id.clone())),
        }
    }

    /// Stage step `i` against the shadow copies.
    fn stage(
        &mut self,
        i: usize,
        world: &World,
        handler: &mut dyn CallHandler,
    ) -> Result<(), IgnoreReason> {
        let failed = |cause: String| IgnoreReason::StepFailed { step: i, cause };
        let step = self.tx.steps[i].clone();
        let xtx = Some(self.tx.id.clone());
        let nonce = (i as u64) << 8;
        let mut bodies = Vec::new();
        match &step {
            Step::Read {
                chain,
                address,
                key,
                reader,
                bind,
            } => {
                let source = match self.shadow.get(chain) {
                    Some(c) => c,
                    None => world.chain(chain).map_err(|e| failed(e.to_string()))?,
                };
                let value = read_from(source, &self.tx, address, key, reader)
                    .map_err(|e| failed(e.to_string()))?;
                self.reads.insert(bind.clone(), value);
            }
            Step::Call {
                chain,
                address,
                author,
                ..
            } => {
                let call = handler
                    .handle(i, &step, &self.reads)
                    .map_err(|cause| IgnoreReason::Rejected { step: i, cause })?;
                bodies.push(TxBody {
                    chain: chain.clone(),
                    author: author.clone(),
                    nonce,
                    xtx,
                    payload: TxPayload::Call {
                        address: address.clone(),
                        call,
                    },
                });
            }
            Step::Transfer {
                from_chain,
                to_chain,
                from,
                to,
                amount,
            } => {
                if from_chain == to_chain {
                    bodies.push(TxBody {
                        chain: from_chain.clone(),
                        author: from.clone(),
                        nonce,
                        xtx,
                        payload: TxPayload::Transfer {
                            to: to.clone(),
                            amount: *amount,
                        },
                    });
                } else {
                    bodies.push(TxBody {
                        chain: from_chain.clone(),
                        author: from.clone(),
                        nonce,
                        xtx: xtx.clone(),
                        payload: TxPayload::CrosschainDebit {
                            to_chain: to_chain.clone(),
                            to: to.clone(),
                            amount: *amount,
                        },
                    });
                    bodies.push(TxBody {
                        chain: to_chain.clone(),
                        author: from.clone(),
                        nonce: nonce | 1,
                        xtx,
                        payload: TxPayload::CrosschainCredit {
                            from_chain: from_chain.clone(),
                            to: to.clone(),
                            amount: *amount,
                        },
                    });
                }
            }
        }
        for body in bodies {
            let effect = SignedTx::sign(body, world.keys()).map_err(|e| failed(e.to_string()))?;
            let chain = &effect.body.chain;
            if !self.shadow.contains_key(chain) {
                let copy = world
                    .chain(chain)
                    .map_err(|e| failed(e.to_string()))?
                    .clone();
                self.shadow.insert(chain.clone(), copy);
            }
            let shadow = self.shadow.get_mut(chain).expect("shadow inserted");
            shadow
                .submit(&effect, world.keys())
                .map_err(|e| failed(e.to_string()))?;
            self.effects.push(effect);
        }
        Ok(())
    }
}
