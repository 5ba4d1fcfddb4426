use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::chain::{Chain, Receipt, SealedEntry, SignedTx, TxBody, TxPayload, ViewEntry};
use super::contract::{ContractCall, ContractKind, ContractState, SupplyAgreement};
use super::crypto::KeyRing;
use super::{Address, ChainId, LedgerError, PartyId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyConfig {
    pub id: PartyId,
    pub name: String,
    /// Distance from the retailer; absent for financiers and authorities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub id: ChainId,
    pub members: BTreeSet<PartyId>,
    #[serde(default)]
    pub balances: BTreeMap<PartyId, u64>,
}

/// A contract deployed while bootstrapping. A supply agreement, if given,
/// is signed by both parties and uploaded by the deployer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapContract {
    pub chain: ChainId,
    pub kind: ContractKind,
    pub deployer: PartyId,
    #[serde(default)]
    pub privacy_group: BTreeSet<PartyId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement: Option<SupplyAgreement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub seed: u64,
    pub parties: Vec<PartyConfig>,
    pub chains: Vec<ChainConfig>,
    #[serde(default)]
    pub contracts: Vec<BootstrapContract>,
}

impl WorldConfig {
    pub fn from_json(text: &str) -> Result<Self, LedgerError> {
        serde_json::from_str(text).map_err(|e| LedgerError::Parse(e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("world config serializes")
    }

    /// The supply network used throughout the examples and tests.
    pub fn standard() -> Self {
        Self::from_json(include_str!("../../data/world.json")).expect("bundled world parses")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainExport {
    pub id: ChainId,
    pub members: BTreeSet<PartyId>,
    pub head: String,
    pub balances: BTreeMap<PartyId, u64>,
    pub account_locks: BTreeMap<PartyId, String>,
    pub contracts: Vec<ContractState>,
    pub log: Vec<SealedEntry>,
}

/// Complete world state. Serializes canonically: every map is ordered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldExport {
    pub seed: u64,
    pub parties: Vec<PartyConfig>,
    pub chains: Vec<ChainExport>,
}

impl WorldExport {
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("export serializes")
    }
}

#[derive(Debug, Clone)]
pub struct World {
    seed: u64,
    keys: KeyRing,
    parties: BTreeMap<PartyId, PartyConfig>,
    chains: BTreeMap<ChainId, Chain>,
}

impl World {
    pub fn new(seed: u64, parties: &[PartyConfig]) -> Self {
        let mut keys = KeyRing::new(seed);
        let mut map = BTreeMap::new();
        for p in parties {
            keys.register(&p.id);
            map.insert(p.id.clone(), p.clone());
        }
        World {
            seed,
            keys,
            parties: map,
            chains: BTreeMap::new(),
        }
    }

    pub fn bootstrap(config: &WorldConfig) -> Result<Self, LedgerError> {
        let mut world = World::new(config.seed, &config.parties);
        for c in &config.chains {
            world.create_chain(c.id.clone(), c.members.clone(), c.balances.clone())?;
        }
        for c in &config.contracts {
            let address =
                world.deploy_contract(&c.chain, c.kind, &c.deployer, c.privacy_group.clone())?;
            if let Some(agreement) = &c.agreement {
                let mut agreement = agreement.clone();
                let (supplier, buyer) = (agreement.supplier.clone(), agreement.buyer.clone());
                agreement.sign(&buyer, &world.keys)?;
                agreement.sign(&supplier, &world.keys)?;
                world.call(
                    &c.chain,
                    &c.deployer,
                    &address,
                    ContractCall::UploadAgreement { agreement },
                )?;
            }
        }
        Ok(world)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn keys(&self) -> &KeyRing {
        &self.keys
    }

    pub fn parties(&self) -> impl Iterator<Item = &PartyConfig> {
        self.parties.values()
    }

    pub fn party(&self, id: &PartyId) -> Result<&PartyConfig, LedgerError> {
        self.parties
            .get(id)
            .ok_or_else(|| LedgerError::UnknownParty(id.clone()))
    }

    pub fn chains(&self) -> impl Iterator<Item = &Chain> {
        self.chains.values()
    }

    pub fn has_chain(&self, id: &ChainId) -> bool {
        self.chains.contains_key(id)
    }

    pub fn chain(&self, id: &ChainId) -> Result<&Chain, LedgerError> {
        self.chains
            .get(id)
            .ok_or_else(|| LedgerError::UnknownChain(id.clone()))
    }

    pub fn chain_mut(&mut self, id: &ChainId) -> Result<&mut Chain, LedgerError> {
        self.chains
            .get_mut(id)
            .ok_or_else(|| LedgerError::UnknownChain(id.clone()))
    }

    pub fn create_chain(
        &mut self,
        id: ChainId,
        members: BTreeSet<PartyId>,
        balances: BTreeMap<PartyId, u64>,
    ) -> Result<&Chain, LedgerError> {
        if self.chains.contains_key(&id) {
            return Err(LedgerError::DuplicateChainId(id));
        }
        if let Some(p) = members.iter().find(|p| !self.parties.contains_key(*p)) {
            return Err(LedgerError::UnknownParty(p.clone()));
        }
        let chain = Chain::genesis(id.clone(), members, balances)?;
        Ok(self.chains.entry(id).or_insert(chain))
    }

    /// Sign `payload` as `author` and submit it to `chain`.
    pub fn transact(
        &mut self,
        chain: &ChainId,
        author: &PartyId,
        payload: TxPayload,
    ) -> Result<Receipt, LedgerError> {
        let target = self
            .chains
            .get_mut(chain)
            .ok_or_else(|| LedgerError::UnknownChain(chain.clone()))?;
        let body = TxBody {
            chain: chain.clone(),
            author: author.clone(),
            nonce: target.log.len() as u64,
            xtx: None,
            payload,
        };
        let tx = SignedTx::sign(body, &self.keys)?;
        target.submit(&tx, &self.keys)
    }

    pub fn deploy_contract(
        &mut self,
        chain: &ChainId,
        kind: ContractKind,
        deployer: &PartyId,
        privacy_group: BTreeSet<PartyId>,
    ) -> Result<Address, LedgerError> {
        let receipt = self.transact(
            chain,
            deployer,
            TxPayload::Deploy {
                kind,
                privacy_group,
            },
        )?;
        Ok(receipt.address.expect("deploy yields an address"))
    }

    pub fn call(
        &mut self,
        chain: &ChainId,
        author: &PartyId,
        address: &str,
        call: ContractCall,
    ) -> Result<Receipt, LedgerError> {
        self.transact(
            chain,
            author,
            TxPayload::Call {
                address: address.to_string(),
                call,
            },
        )
    }

    pub fn transfer(
        &mut self,
        chain: &ChainId,
        from: &PartyId,
        to: &PartyId,
        amount: u64,
    ) -> Result<Receipt, LedgerError> {
        self.transact(
            chain,
            from,
            TxPayload::Transfer {
                to: to.clone(),
                amount,
            },
        )
    }

    pub fn read_state(
        &self,
        chain: &ChainId,
        address: &str,
        key: &str,
        caller: &PartyId,
    ) -> Result<Option<String>, LedgerError> {
        self.chain(chain)?.read_state(address, key, caller, None)
    }

    pub fn view_log(
        &self,
        chain: &ChainId,
        viewer: &PartyId,
    ) -> Result<Vec<ViewEntry>, LedgerError> {
        self.chain(chain)?.view(viewer)
    }

    pub fn total_balance(&self) -> u128 {
        self.chains.values().map(Chain::total_balance).sum()
    }

    pub fn locks_held(&self) -> usize {
        self.chains.values().map(Chain::locks_held).sum()
    }

    pub fn export(&self) -> WorldExport {
        WorldExport {
            seed: self.seed,
            parties: self.parties.values().cloned().collect(),
            chains: self
                .chains
                .values()
                .map(|c| ChainExport {
                    id: c.id.clone(),
                    members: c.members.clone(),
                    head: c.head().to_string(),
                    balances: c.balances.clone(),
                    account_locks: c.account_locks.clone(),
                    contracts: c.contracts.values().cloned().collect(),
                    log: c.log.clone(),
                })
                .collect(),
        }
    }

    pub fn export_bytes(&self) -> Vec<u8> {
        self.export().to_bytes()
    }

    /// Per-chain JSON-lines ledger files, keyed by chain id.
    pub fn ledger_files(&self) -> BTreeMap<ChainId, String> {
        self.chains
            .iter()
            .map(|(id, c)| (id.clone(), c.to_jsonl()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::AGREEMENT_KEY;

    #[test]
    fn standard_world_has_seven_disjoint_chains() {
        let world = World::bootstrap(&WorldConfig::standard()).unwrap();
        let ids: Vec<_> = world
            .chains()
            .map(|c| c.id().as_str().to_string())
            .collect();
        assert_eq!(
            ids,
            ["Cert", "Fin", "T0T1", "T1T2", "T2T3", "T3Fin", "T3T3"]
        );
        let heads: BTreeSet<_> = world.chains().map(|c| c.head().to_string()).collect();
        assert_eq!(heads.len(), 7);
        let t3fin = world.chain(&"T3Fin".into()).unwrap();
        assert_eq!(t3fin.members().len(), 2);
        assert_eq!(world.locks_held(), 0);
    }

    #[test]
    fn bootstrap_agreements_are_countersigned() {
        let world = World::bootstrap(&WorldConfig::standard()).unwrap();
        let t1t2 = world.chain(&"T1T2".into()).unwrap();
        let mut seen = 0;
        for c in t1t2.contracts().values() {
            let reader = c.owner.clone();
            let text = world
                .read_state(t1t2.id(), &c.address, AGREEMENT_KEY, &reader)
                .unwrap()
                .unwrap();
            let agreement: SupplyAgreement = serde_json::from_str(&text).unwrap();
            assert!(agreement.countersigned(world.keys()));
            seen += 1;
        }
        assert_eq!(seen, 2);
    }

    #[test]
    fn duplicate_chain_and_outsider_deploy_are_rejected() {
        let mut world = World::bootstrap(&WorldConfig::standard()).unwrap();
        assert_eq!(
            world
                .create_chain(
                    "Fin".into(),
                    ["FinancierIlze".into()].into(),
                    BTreeMap::new()
                )
                .err(),
            Some(LedgerError::DuplicateChainId("Fin".into()))
        );
        let err = world.deploy_contract(
            &"Fin".into(),
            ContractKind::FinanceContract,
            &"FarmerEric".into(),
            BTreeSet::new(),
        );
        assert!(matches!(err, Err(LedgerError::NotAMember { .. })));
    }

    #[test]
    fn export_is_deterministic_per_seed() {
        let a = World::bootstrap(&WorldConfig::standard())
            .unwrap()
            .export_bytes();
        let b = World::bootstrap(&WorldConfig::standard())
            .unwrap()
            .export_bytes();
        assert_eq!(a, b);
        let mut config = WorldConfig::standard();
        config.seed += 1;
        assert_ne!(World::bootstrap(&config).unwrap().export_bytes(), a);
    }
}
