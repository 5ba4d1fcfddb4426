//! Simulated private blockchains: membership, privacy groups, native
//! contracts, signed transactions, hash-chained logs and Ether balances.

mod chain;
pub mod contract;
pub mod crypto;
mod world;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use chain::{
    parse_ledger_jsonl, verify_log, Chain, EntryBody, Receipt, SealedEntry, SignedTx, TxBody,
    TxPayload, ViewEntry,
};
pub use contract::{
    ContractCall, ContractKind, ContractState, PartySignature, SupplyAgreement, AGREEMENT_KEY,
};
pub use crypto::{sha256_hex, KeyRing};
pub use world::{
    BootstrapContract, ChainConfig, ChainExport, PartyConfig, World, WorldConfig, WorldExport,
};

/// Contract address, `0x` followed by 40 hex digits.
pub type Address = String;

/// Crosschain transaction id.
pub type TxId = String;

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                $name(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl PartialEq<str> for $name {
            fn eq(&self, other: &str) -> bool {
                self.0 == other
            }
        }

        impl PartialEq<&str> for $name {
            fn eq(&self, other: &&str) -> bool {
                self.0 == *other
            }
        }
    };
}

string_id!(PartyId);
string_id!(ChainId);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("chain `{0}` already exists")]
    DuplicateChainId(ChainId),
    #[error("chain `{0}` needs at least one member")]
    EmptyMembers(ChainId),
    #[error("unknown chain `{0}`")]
    UnknownChain(ChainId),
    #[error("unknown party `{0}`")]
    UnknownParty(PartyId),
    #[error("`{party}` is not a member of chain `{chain}`")]
    NotAMember { party: PartyId, chain: ChainId },
    #[error("signature does not verify")]
    BadSignature,
    #[error("`{party}` may not see `{resource}`")]
    PrivacyViolation { party: PartyId, resource: String },
    #[error("`{party}` holds {balance} but {amount} was requested")]
    InsufficientBalance {
        party: PartyId,
        balance: u64,
        amount: u64,
    },
    #[error("contract {address} is locked by crosschain tx {holder}")]
    ContractLocked { address: Address, holder: TxId },
    #[error("account `{party}` is locked by crosschain tx {holder}")]
    AccountLocked { party: PartyId, holder: TxId },
    #[error("no contract at {0}")]
    UnknownAddress(Address),
    #[error("transaction {0} was already applied")]
    Replay(String),
    #[error("transaction addressed to chain `{found}` submitted to `{expected}`")]
    WrongChain { expected: ChainId, found: ChainId },
    #[error("crosschain payload outside a crosschain transaction holding the lock")]
    NotInCrosschainTx,
    #[error("invalid call: {0}")]
    InvalidCall(String),
    #[error("ledger parse error: {0}")]
    Parse(String),
    #[error("log of `{chain}` is corrupt at entry {seq}: {reason}")]
    Corrupt {
        chain: ChainId,
        seq: u64,
        reason: String,
    },
}
