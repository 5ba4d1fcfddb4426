//! Native contract state machines.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::crypto::KeyRing;
use super::{Address, LedgerError, PartyId};

/// Storage key holding a supply contract's agreement.
pub const AGREEMENT_KEY: &str = "agreement";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractKind {
    SupplyContract,
    FinanceContract,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartySignature {
    pub party: PartyId,
    pub signature: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupplyAgreement {
    pub supplier: PartyId,
    pub buyer: PartyId,
    pub item: String,
    pub quantity: u64,
    /// Base units per item.
    pub unit_price: u64,
    pub payment_terms_days: u32,
    #[serde(default)]
    pub signatures: Vec<PartySignature>,
}

#[derive(Serialize)]
struct AgreementTerms<'a> {
    supplier: &'a PartyId,
    buyer: &'a PartyId,
    item: &'a str,
    quantity: u64,
    unit_price: u64,
    payment_terms_days: u32,
}

impl SupplyAgreement {
    /// Bytes covered by each signature: every field except the signatures.
    pub fn terms_bytes(&self) -> Vec<u8> {
        let terms = AgreementTerms {
            supplier: &self.supplier,
            buyer: &self.buyer,
            item: &self.item,
            quantity: self.quantity,
            unit_price: self.unit_price,
            payment_terms_days: self.payment_terms_days,
        };
        let mut out = b"chainvoice/agreement/v1".to_vec();
        out.extend(serde_json::to_vec(&terms).expect("terms serialize"));
        out
    }

    pub fn value(&self) -> u128 {
        self.quantity as u128 * self.unit_price as u128
    }

    pub fn sign(&mut self, party: &PartyId, keys: &KeyRing) -> Result<(), LedgerError> {
        let signature = keys
            .sign(party, &self.terms_bytes())
            .ok_or_else(|| LedgerError::UnknownParty(party.clone()))?;
        self.signatures.retain(|s| &s.party != party);
        self.signatures.push(PartySignature {
            party: party.clone(),
            signature,
        });
        Ok(())
    }

    pub fn signed_by(&self, party: &PartyId, keys: &KeyRing) -> bool {
        let terms = self.terms_bytes();
        self.signatures
            .iter()
            .any(|s| &s.party == party && keys.verify(party, &terms, &s.signature))
    }

    /// Every listed signature must verify.
    pub fn signatures_valid(&self, keys: &KeyRing) -> bool {
        let terms = self.terms_bytes();
        self.signatures
            .iter()
            .all(|s| keys.verify(&s.party, &terms, &s.signature))
    }

    pub fn countersigned(&self, keys: &KeyRing) -> bool {
        self.signatures_valid(keys)
            && self.signed_by(&self.supplier, keys)
            && self.signed_by(&self.buyer, keys)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ContractCall {
    /// Supply contracts only. Signatures must verify and the uploader must
    /// be a party to the agreement.
    UploadAgreement { agreement: SupplyAgreement },
    /// Allow `reader` to read `key` from outside the privacy group.
    GrantRead { reader: PartyId, key: String },
    /// Finance contracts only: store a record under `key`.
    Record { key: String, value: String },
}

pub fn grant_key(reader: &PartyId, key: &str) -> String {
    format!("grant/{reader}/{key}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractState {
    pub kind: ContractKind,
    pub address: Address,
    pub owner: PartyId,
    pub privacy_group: BTreeSet<PartyId>,
    pub storage: BTreeMap<String, String>,
    /// Crosschain transaction currently holding the contract.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lock: Option<String>,
}

impl ContractState {
    pub fn new(
        kind: ContractKind,
        address: Address,
        owner: PartyId,
        privacy_group: BTreeSet<PartyId>,
    ) -> Self {
        ContractState {
            kind,
            address,
            owner,
            privacy_group,
            storage: BTreeMap::new(),
            lock: None,
        }
    }

    pub fn in_group(&self, party: &PartyId) -> bool {
        self.privacy_group.contains(party)
    }

    pub fn has_grant(&self, reader: &PartyId, key: &str) -> bool {
        self.storage.contains_key(&grant_key(reader, key))
    }

    /// Reject access while a different crosschain transaction holds the lock.
    pub fn check_lock(&self, xtx: Option<&str>) -> Result<(), LedgerError> {
        match &self.lock {
            Some(holder) if Some(holder.as_str()) != xtx => Err(LedgerError::ContractLocked {
                address: self.address.clone(),
                holder: holder.clone(),
            }),
            _ => Ok(()),
        }
    }

    pub fn apply(
        &mut self,
        author: &PartyId,
        call: &ContractCall,
        keys: &KeyRing,
    ) -> Result<(), LedgerError> {
        if !self.in_group(author) {
            return Err(LedgerError::PrivacyViolation {
                party: author.clone(),
                resource: self.address.clone(),
            });
        }
        match (self.kind, call) {
            (ContractKind::SupplyContract, ContractCall::UploadAgreement { agreement }) => {
                if author != &agreement.supplier && author != &agreement.buyer {
                    return Err(LedgerError::InvalidCall(
                        "uploader is not a party to the agreement".into(),
                    ));
                }
                if !agreement.signatures_valid(keys) || !agreement.signed_by(author, keys) {
                    return Err(LedgerError::BadSignature);
                }
                let text = serde_json::to_string(agreement).expect("agreement serializes");
                self.storage.insert(AGREEMENT_KEY.into(), text);
            }
            (_, ContractCall::GrantRead { reader, key }) => {
                self.storage
                    .insert(grant_key(reader, key), "granted".into());
            }
            (ContractKind::FinanceContract, ContractCall::Record { key, value }) => {
                if key.starts_with("grant/") {
                    return Err(LedgerError::InvalidCall("reserved key prefix".into()));
                }
                self.storage.insert(key.clone(), value.clone());
            }
            (kind, call) => {
                return Err(LedgerError::InvalidCall(format!(
                    "{kind:?} does not accept {call:?}"
                )));
            }
        }
        Ok(())
    }
}
