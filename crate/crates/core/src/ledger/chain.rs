use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::contract::{ContractCall, ContractKind, ContractState};
use super::crypto::{sha256_hex, KeyRing};
use super::{Address, ChainId, LedgerError, PartyId, TxId};

const GENESIS_PREV: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TxPayload {
    /// The deployer always joins the privacy group.
    Deploy {
        kind: ContractKind,
        privacy_group: BTreeSet<PartyId>,
    },
    Call {
        address: Address,
        call: ContractCall,
    },
    Transfer {
        to: PartyId,
        amount: u64,
    },
    /// Outgoing half of a crosschain transfer, authored by the payer.
    CrosschainDebit {
        to_chain: ChainId,
        to: PartyId,
        amount: u64,
    },
    /// Incoming half of a crosschain transfer, authored by the payer.
    CrosschainCredit {
        from_chain: ChainId,
        to: PartyId,
        amount: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxBody {
    pub chain: ChainId,
    pub author: PartyId,
    pub nonce: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xtx: Option<TxId>,
    pub payload: TxPayload,
}

impl TxBody {
    fn signing_bytes(&self) -> Vec<u8> {
        let mut out = b"chainvoice/tx/v1".to_vec();
        out.extend(serde_json::to_vec(self).expect("tx body serializes"));
        out
    }

    pub fn hash(&self) -> String {
        sha256_hex(&[b"tx", &self.signing_bytes()])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedTx {
    pub body: TxBody,
    pub signature: String,
}

impl SignedTx {
    pub fn sign(body: TxBody, keys: &KeyRing) -> Result<Self, LedgerError> {
        let signature = keys
            .sign(&body.author, &body.signing_bytes())
            .ok_or_else(|| LedgerError::UnknownParty(body.author.clone()))?;
        Ok(SignedTx { body, signature })
    }

    pub fn verify(&self, keys: &KeyRing) -> bool {
        keys.verify(
            &self.body.author,
            &self.body.signing_bytes(),
            &self.signature,
        )
    }

    pub fn hash(&self) -> String {
        self.body.hash()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum EntryBody {
    Genesis {
        chain: ChainId,
        members: BTreeSet<PartyId>,
        balances: BTreeMap<PartyId, u64>,
    },
    Tx(SignedTx),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedEntry {
    pub seq: u64,
    pub prev: String,
    pub body: EntryBody,
    pub digest: String,
}

impl SealedEntry {
    fn seal(seq: u64, prev: String, body: EntryBody) -> Self {
        let digest = entry_digest(seq, &prev, &body);
        SealedEntry {
            seq,
            prev,
            body,
            digest,
        }
    }
}

fn entry_digest(seq: u64, prev: &str, body: &EntryBody) -> String {
    let bytes = serde_json::to_vec(body).expect("entry serializes");
    sha256_hex(&[&seq.to_le_bytes(), prev.as_bytes(), &bytes])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub chain: ChainId,
    pub seq: u64,
    pub digest: String,
    pub tx_hash: String,
    /// Set for deployments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<Address>,
}

/// A log entry as shown to one viewer. Private entries keep their place in
/// the hash chain but lose author, payload and group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub seq: u64,
    pub prev: String,
    pub digest: String,
    pub redacted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<EntryBody>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    pub(crate) id: ChainId,
    pub(crate) members: BTreeSet<PartyId>,
    pub(crate) log: Vec<SealedEntry>,
    pub(crate) contracts: BTreeMap<Address, ContractState>,
    pub(crate) balances: BTreeMap<PartyId, u64>,
    pub(crate) account_locks: BTreeMap<PartyId, TxId>,
    seen: BTreeSet<String>,
}

impl Chain {
    pub fn genesis(
        id: ChainId,
        members: BTreeSet<PartyId>,
        balances: BTreeMap<PartyId, u64>,
    ) -> Result<Self, LedgerError> {
        if members.is_empty() {
            return Err(LedgerError::EmptyMembers(id));
        }
        if let Some(p) = balances.keys().find(|p| !members.contains(*p)) {
            return Err(LedgerError::NotAMember {
                party: p.clone(),
                chain: id,
            });
        }
        let body = EntryBody::Genesis {
            chain: id.clone(),
            members: members.clone(),
            balances: balances.clone(),
        };
        let entry = SealedEntry::seal(0, GENESIS_PREV.to_string(), body);
        Ok(Chain {
            id,
            members,
            log: vec![entry],
            contracts: BTreeMap::new(),
            balances,
            account_locks: BTreeMap::new(),
            seen: BTreeSet::new(),
        })
    }

    pub fn id(&self) -> &ChainId {
        &self.id
    }

    pub fn members(&self) -> &BTreeSet<PartyId> {
        &self.members
    }

    pub fn is_member(&self, party: &PartyId) -> bool {
        self.members.contains(party)
    }

    pub fn log(&self) -> &[SealedEntry] {
        &self.log
    }

    pub fn head(&self) -> &str {
        &self.log.last().expect("genesis present").digest
    }

    pub fn contracts(&self) -> &BTreeMap<Address, ContractState> {
        &self.contracts
    }

    pub fn contract(&self, address: &str) -> Result<&ContractState, LedgerError> {
        self.contracts
            .get(address)
            .ok_or_else(|| LedgerError::UnknownAddress(address.to_string()))
    }

    pub fn balances(&self) -> &BTreeMap<PartyId, u64> {
        &self.balances
    }

    pub fn balance(&self, party: &PartyId) -> u64 {
        self.balances.get(party).copied().unwrap_or(0)
    }

    pub fn total_balance(&self) -> u128 {
        self.balances.values().map(|&b| b as u128).sum()
    }

    pub fn has_applied(&self, tx_hash: &str) -> bool {
        self.seen.contains(tx_hash)
    }

    /// Address the next deployment on this chain will receive.
    pub fn next_address(&self) -> Address {
        let digest = sha256_hex(&[
            b"chainvoice/address/v1",
            self.id.as_str().as_bytes(),
            &(self.log.len() as u64).to_le_bytes(),
        ]);
        format!("0x{}", &digest[..40])
    }

    pub fn submit(&mut self, tx: &SignedTx, keys: &KeyRing) -> Result<Receipt, LedgerError> {
        self.apply(tx, keys, true)
    }

    fn apply(
        &mut self,
        tx: &SignedTx,
        keys: &KeyRing,
        check_locks: bool,
    ) -> Result<Receipt, LedgerError> {
        let body = &tx.body;
        if body.chain != self.id {
            return Err(LedgerError::WrongChain {
                expected: self.id.clone(),
                found: body.chain.clone(),
            });
        }
        if !tx.verify(keys) {
            return Err(LedgerError::BadSignature);
        }
        let author = &body.author;
        if !self.is_member(author) {
            return Err(LedgerError::NotAMember {
                party: author.clone(),
                chain: self.id.clone(),
            });
        }
        let tx_hash = tx.hash();
        if self.seen.contains(&tx_hash) {
            return Err(LedgerError::Replay(tx_hash));
        }
        let xtx = body.xtx.as_deref();
        let mut address = None;
        match &body.payload {
            TxPayload::Deploy {
                kind,
                privacy_group,
            } => {
                if let Some(p) = privacy_group.iter().find(|p| !self.is_member(p)) {
                    return Err(LedgerError::NotAMember {
                        party: p.clone(),
                        chain: self.id.clone(),
                    });
                }
                let mut group = privacy_group.clone();
                group.insert(author.clone());
                let addr = self.next_address();
                self.contracts.insert(
                    addr.clone(),
                    ContractState::new(*kind, addr.clone(), author.clone(), group),
                );
                address = Some(addr);
            }
            TxPayload::Call { address, call } => {
                let contract = self
                    .contracts
                    .get_mut(address)
                    .ok_or_else(|| LedgerError::UnknownAddress(address.clone()))?;
                if check_locks {
                    contract.check_lock(xtx)?;
                }
                contract.apply(author, call, keys)?;
            }
            TxPayload::Transfer { to, amount } => {
                self.require_member(to)?;
                if check_locks {
                    self.check_account(author, xtx)?;
                    self.check_account(to, xtx)?;
                }
                if author != to {
                    self.balance(to)
                        .checked_add(*amount)
                        .ok_or_else(|| LedgerError::InvalidCall("balance overflow".into()))?;
                }
                self.debit(author, *amount)?;
                self.credit(to, *amount)?;
            }
            TxPayload::CrosschainDebit { amount, .. } => {
                if check_locks {
                    self.require_held(author, xtx)?;
                }
                self.debit(author, *amount)?;
            }
            TxPayload::CrosschainCredit { to, amount, .. } => {
                self.require_member(to)?;
                if check_locks {
                    self.require_held(to, xtx)?;
                }
                self.credit(to, *amount)?;
            }
        }
        self.seen.insert(tx_hash.clone());
        let seq = self.log.len() as u64;
        let entry = SealedEntry::seal(seq, self.head().to_string(), EntryBody::Tx(tx.clone()));
        let digest = entry.digest.clone();
        self.log.push(entry);
        Ok(Receipt {
            chain: self.id.clone(),
            seq,
            digest,
            tx_hash,
            address,
        })
    }

    fn require_member(&self, party: &PartyId) -> Result<(), LedgerError> {
        if self.is_member(party) {
            Ok(())
        } else {
            Err(LedgerError::NotAMember {
                party: party.clone(),
                chain: self.id.clone(),
            })
        }
    }

    fn check_account(&self, party: &PartyId, xtx: Option<&str>) -> Result<(), LedgerError> {
        match self.account_locks.get(party) {
            Some(holder) if Some(holder.as_str()) != xtx => Err(LedgerError::AccountLocked {
                party: party.clone(),
                holder: holder.clone(),
            }),
            _ => Ok(()),
        }
    }

    fn require_held(&self, party: &PartyId, xtx: Option<&str>) -> Result<(), LedgerError> {
        match (self.account_locks.get(party), xtx) {
            (Some(holder), Some(x)) if holder == x => Ok(()),
            _ => Err(LedgerError::NotInCrosschainTx),
        }
    }

    fn debit(&mut self, party: &PartyId, amount: u64) -> Result<(), LedgerError> {
        let balance = self.balance(party);
        if balance < amount {
            return Err(LedgerError::InsufficientBalance {
                party: party.clone(),
                balance,
                amount,
            });
        }
        self.balances.insert(party.clone(), balance - amount);
        Ok(())
    }

    fn credit(&mut self, party: &PartyId, amount: u64) -> Result<(), LedgerError> {
        let balance = self.balance(party);
        let next = balance
            .checked_add(amount)
            .ok_or_else(|| LedgerError::InvalidCall("balance overflow".into()))?;
        self.balances.insert(party.clone(), next);
        Ok(())
    }

    /// Committed value of `key`, for members of the contract's privacy group.
    /// `xtx` identifies the crosschain transaction the caller acts within.
    pub fn read_state(
        &self,
        address: &str,
        key: &str,
        caller: &PartyId,
        xtx: Option<&str>,
    ) -> Result<Option<String>, LedgerError> {
        let contract = self.contract(address)?;
        if !contract.in_group(caller) {
            return Err(LedgerError::PrivacyViolation {
                party: caller.clone(),
                resource: address.to_string(),
            });
        }
        contract.check_lock(xtx)?;
        Ok(contract.storage.get(key).cloned())
    }

    pub fn lock_contract(&mut self, address: &str, xtx: &str) -> Result<(), LedgerError> {
        let contract = self
            .contracts
            .get_mut(address)
            .ok_or_else(|| LedgerError::UnknownAddress(address.to_string()))?;
        contract.check_lock(Some(xtx))?;
        contract.lock = Some(xtx.to_string());
        Ok(())
    }

    pub fn lock_account(&mut self, party: &PartyId, xtx: &str) -> Result<(), LedgerError> {
        self.require_member(party)?;
        self.check_account(party, Some(xtx))?;
        self.account_locks.insert(party.clone(), xtx.to_string());
        Ok(())
    }

    /// Release every lock `xtx` holds on this chain.
    pub fn release(&mut self, xtx: &str) {
        for c in self.contracts.values_mut() {
            if c.lock.as_deref() == Some(xtx) {
                c.lock = None;
            }
        }
        self.account_locks.retain(|_, holder| holder != xtx);
    }

    pub fn locks_held(&self) -> usize {
        self.contracts.values().filter(|c| c.lock.is_some()).count() + self.account_locks.len()
    }

    /// The log as `viewer` may see it.
    pub fn view(&self, viewer: &PartyId) -> Result<Vec<ViewEntry>, LedgerError> {
        if !self.is_member(viewer) {
            return Err(LedgerError::PrivacyViolation {
                party: viewer.clone(),
                resource: format!("chain {}", self.id),
            });
        }
        Ok(self
            .log
            .iter()
            .map(|e| {
                let visible = match &e.body {
                    EntryBody::Genesis { .. } => true,
                    EntryBody::Tx(tx) => match &tx.body.payload {
                        TxPayload::Deploy { privacy_group, .. } => {
                            &tx.body.author == viewer || privacy_group.contains(viewer)
                        }
                        TxPayload::Call { address, .. } => self
                            .contracts
                            .get(address)
                            .is_some_and(|c| c.in_group(viewer)),
                        _ => true,
                    },
                };
                ViewEntry {
                    seq: e.seq,
                    prev: e.prev.clone(),
                    digest: e.digest.clone(),
                    redacted: !visible,
                    body: visible.then(|| e.body.clone()),
                }
            })
            .collect())
    }

    /// One sealed entry per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.log {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }
}

pub fn parse_ledger_jsonl(text: &str) -> Result<Vec<SealedEntry>, LedgerError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| LedgerError::Parse(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

/// Rebuild a chain from its exported log, checking every hash link and
/// signature and re-running every transaction. Lock state is not part of
/// the log, so lock checks are skipped during replay.
pub fn verify_log(entries: &[SealedEntry], keys: &KeyRing) -> Result<Chain, LedgerError> {
    let first = entries
        .first()
        .ok_or_else(|| LedgerError::Parse("empty log".into()))?;
    let EntryBody::Genesis {
        chain,
        members,
        balances,
    } = &first.body
    else {
        return Err(LedgerError::Parse(
            "log does not start with a genesis entry".into(),
        ));
    };
    let corrupt = |seq: u64, reason: &str| LedgerError::Corrupt {
        chain: chain.clone(),
        seq,
        reason: reason.to_string(),
    };
    let mut rebuilt = Chain::genesis(chain.clone(), members.clone(), balances.clone())?;
    if rebuilt.log[0] != *first {
        return Err(corrupt(0, "genesis digest mismatch"));
    }
    for (i, e) in entries.iter().enumerate().skip(1) {
        if e.seq != i as u64 {
            return Err(corrupt(e.seq, "sequence gap"));
        }
        if e.prev != rebuilt.head() {
            return Err(corrupt(e.seq, "broken hash link"));
        }
        if e.digest != entry_digest(e.seq, &e.prev, &e.body) {
            return Err(corrupt(e.seq, "digest mismatch"));
        }
        let EntryBody::Tx(tx) = &e.body else {
            return Err(corrupt(e.seq, "second genesis entry"));
        };
        rebuilt
            .apply(tx, keys, false)
            .map_err(|err| corrupt(e.seq, &err.to_string()))?;
    }
    Ok(rebuilt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Chain, KeyRing) {
        let mut keys = KeyRing::new(3);
        let members: BTreeSet<PartyId> = ["FarmerFran".into(), "FinancierIlze".into()].into();
        for m in &members {
            keys.register(m);
        }
        keys.register(&"FarmerEric".into());
        let balances = [("FinancierIlze".into(), 100)].into();
        (
            Chain::genesis("T3Fin".into(), members, balances).unwrap(),
            keys,
        )
    }

    fn tx(chain: &Chain, author: &str, payload: TxPayload, keys: &KeyRing) -> SignedTx {
        let body = TxBody {
            chain: chain.id.clone(),
            author: author.into(),
            nonce: chain.log.len() as u64,
            xtx: None,
            payload,
        };
        SignedTx::sign(body, keys).unwrap()
    }

    #[test]
    fn empty_member_set_is_rejected() {
        assert_eq!(
            Chain::genesis("X".into(), BTreeSet::new(), BTreeMap::new()),
            Err(LedgerError::EmptyMembers("X".into()))
        );
    }

    #[test]
    fn overdraft_leaves_log_unchanged() {
        let (mut chain, keys) = setup();
        let t = tx(
            &chain,
            "FinancierIlze",
            TxPayload::Transfer {
                to: "FarmerFran".into(),
                amount: 101,
            },
            &keys,
        );
        assert!(matches!(
            chain.submit(&t, &keys),
            Err(LedgerError::InsufficientBalance { .. })
        ));
        assert_eq!(chain.log.len(), 1);
        let t = tx(
            &chain,
            "FinancierIlze",
            TxPayload::Transfer {
                to: "FarmerFran".into(),
                amount: 40,
            },
            &keys,
        );
        chain.submit(&t, &keys).unwrap();
        assert_eq!(chain.balance(&"FarmerFran".into()), 40);
        assert_eq!(chain.total_balance(), 100);
        assert!(matches!(
            chain.submit(&t, &keys),
            Err(LedgerError::Replay(_))
        ));
    }

    #[test]
    fn membership_and_signature_gates() {
        let (mut chain, keys) = setup();
        let t = tx(
            &chain,
            "FarmerEric",
            TxPayload::Transfer {
                to: "FarmerFran".into(),
                amount: 0,
            },
            &keys,
        );
        assert!(matches!(
            chain.submit(&t, &keys),
            Err(LedgerError::NotAMember { .. })
        ));
        let mut t = tx(
            &chain,
            "FinancierIlze",
            TxPayload::Transfer {
                to: "FarmerFran".into(),
                amount: 1,
            },
            &keys,
        );
        t.body.payload = TxPayload::Transfer {
            to: "FarmerFran".into(),
            amount: 99,
        };
        assert_eq!(chain.submit(&t, &keys), Err(LedgerError::BadSignature));
    }

    #[test]
    fn locked_contract_rejects_foreign_writers() {
        let (mut chain, keys) = setup();
        let deploy = TxPayload::Deploy {
            kind: ContractKind::FinanceContract,
            privacy_group: ["FarmerFran".into()].into(),
        };
        let addr = chain
            .submit(&tx(&chain, "FinancierIlze", deploy, &keys), &keys)
            .unwrap()
            .address
            .unwrap();
        chain.lock_contract(&addr, "x1").unwrap();
        let call = TxPayload::Call {
            address: addr.clone(),
            call: ContractCall::Record {
                key: "k".into(),
                value: "v".into(),
            },
        };
        let t = tx(&chain, "FarmerFran", call.clone(), &keys);
        assert!(matches!(
            chain.submit(&t, &keys),
            Err(LedgerError::ContractLocked { .. })
        ));
        assert!(matches!(
            chain.read_state(&addr, "k", &"FarmerFran".into(), None),
            Err(LedgerError::ContractLocked { .. })
        ));
        let mut body = t.body.clone();
        body.xtx = Some("x1".into());
        chain
            .submit(&SignedTx::sign(body, &keys).unwrap(), &keys)
            .unwrap();
        assert_eq!(
            chain
                .read_state(&addr, "k", &"FarmerFran".into(), Some("x1"))
                .unwrap()
                .as_deref(),
            Some("v")
        );
        chain.release("x1");
        assert_eq!(chain.locks_held(), 0);
        assert_eq!(
            chain
                .read_state(&addr, "missing", &"FarmerFran".into(), None)
                .unwrap(),
            None
        );
    }

    #[test]
    fn exported_log_verifies_and_detects_tampering() {
        let (mut chain, keys) = setup();
        for amount in [10, 20] {
            let t = tx(
                &chain,
                "FinancierIlze",
                TxPayload::Transfer {
                    to: "FarmerFran".into(),
                    amount,
                },
                &keys,
            );
            chain.submit(&t, &keys).unwrap();
        }
        let entries = parse_ledger_jsonl(&chain.to_jsonl()).unwrap();
        let rebuilt = verify_log(&entries, &keys).unwrap();
        assert_eq!(rebuilt.balances, chain.balances);
        assert_eq!(rebuilt.to_jsonl(), chain.to_jsonl());

        let tampered = chain.to_jsonl().replace("\"amount\":20", "\"amount\":25");
        let entries = parse_ledger_jsonl(&tampered).unwrap();
        assert!(matches!(
            verify_log(&entries, &keys),
            Err(LedgerError::Corrupt { seq: 2, .. })
        ));
    }

    #[test]
    fn private_entries_are_redacted_for_outsiders() {
        let (mut chain, keys) = setup();
        let deploy = TxPayload::Deploy {
            kind: ContractKind::FinanceContract,
            privacy_group: BTreeSet::new(),
        };
        chain
            .submit(&tx(&chain, "FinancierIlze", deploy, &keys), &keys)
            .unwrap();
        let fran = chain.view(&"FarmerFran".into()).unwrap();
        assert!(fran[1].redacted && fran[1].body.is_none());
        assert_eq!(fran[1].digest, chain.log[1].digest);
        assert!(!chain.view(&"FinancierIlze".into()).unwrap()[1].redacted);
        assert!(matches!(
            chain.view(&"FarmerEric".into()),
            Err(LedgerError::PrivacyViolation { .. })
        ));
    }
}
