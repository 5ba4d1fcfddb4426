//! One simulated world plus the fitted models, behind the HTTP API.

use std::collections::BTreeMap;

use chainvoice_core::bn::{query, BnError, Evidence, NetworkSpec, Posterior};
use chainvoice_core::flow::{
    run_financing_sequence, DecisionOverride, FinancingRequest, Fixtures, FlowError, FlowFault,
    FlowOptions, FlowOutcome,
};
use chainvoice_core::ledger::{ChainId, LedgerError, PartyId, ViewEntry, World, WorldConfig};
use chainvoice_core::model::{FinanceModel, ModelKind, ScenarioSet};
use chainvoice_core::xchain::Coordinator;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("missing or invalid party token")]
    Unauthenticated,
    #[error(transparent)]
    Query(#[from] BnError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("`{party}` may not act on a request between `{supplier}` and `{financier}`")]
    NotAParty {
        party: PartyId,
        supplier: PartyId,
        financier: PartyId,
    },
    #[error("world is at version {current}, request expected {expected}")]
    StaleVersion { expected: u64, current: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyToken {
    pub party: PartyId,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<u8>,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub id: ChainId,
    /// Whether the caller may see the rest of the summary.
    pub member: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<PartyId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balances: Option<BTreeMap<PartyId, u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default)]
    pub evidence: Evidence,
    pub target: String,
    /// Reject the query if the world has moved past this version.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_version: Option<u64>,
}

fn default_model() -> ModelKind {
    ModelKind::Overall
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubmitRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<FinancingRequest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures: Option<Fixtures>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<DecisionOverride>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_version: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub fault: Option<FlowFault>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_version: Option<u64>,
}

pub struct Session {
    world: World,
    coord: Coordinator,
    model: FinanceModel,
    scenarios: ScenarioSet,
    fixtures: Fixtures,
    fault: Option<FlowFault>,
    version: u64,
}

fn token_message(seed: u64, party: &PartyId) -> Vec<u8> {
    format!("chainvoice-session/{seed}/{party}").into_bytes()
}

impl Session {
    pub fn new(
        config: &WorldConfig,
        model: FinanceModel,
        scenarios: ScenarioSet,
    ) -> Result<Self, SessionError> {
        Ok(Session {
            world: World::bootstrap(config)?,
            coord: Coordinator::new(),
            model,
            scenarios,
            fixtures: Fixtures::standard(),
            fault: None,
            version: 0,
        })
    }

    /// The bundled world, re-seeded.
    pub fn standard(seed: u64) -> Result<Self, SessionError> {
        let mut config = WorldConfig::standard();
        config.seed = seed;
        Self::new(
            &config,
            FinanceModel::golden(),
            chainvoice_core::model::published_scenarios(),
        )
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn coordinator(&self) -> &Coordinator {
        &self.coord
    }

    pub fn model(&self) -> &FinanceModel {
        &self.model
    }

    pub fn scenarios(&self) -> &ScenarioSet {
        &self.scenarios
    }

    pub fn armed_fault(&self) -> Option<FlowFault> {
        self.fault
    }

    /// A token per party: the party's own signature over the session seed.
    pub fn tokens(&self) -> Vec<PartyToken> {
        let seed = self.world.seed();
        self.world
            .parties()
            .map(|p| {
                let sig = self
                    .world
                    .keys()
                    .sign(&p.id, &token_message(seed, &p.id))
                    .expect("registered party");
                PartyToken {
                    party: p.id.clone(),
                    name: p.name.clone(),
                    tier: p.tier,
                    token: format!("{}.{sig}", p.id),
                }
            })
            .collect()
    }

    pub fn authenticate(&self, token: &str) -> Result<PartyId, SessionError> {
        let (party, sig) = token
            .rsplit_once('.')
            .ok_or(SessionError::Unauthenticated)?;
        let party = PartyId::from(party);
        if self
            .world
            .keys()
            .verify(&party, &token_message(self.world.seed(), &party), sig)
        {
            Ok(party)
        } else {
            Err(SessionError::Unauthenticated)
        }
    }

    fn check_version(&self, expected: Option<u64>) -> Result<(), SessionError> {
        match expected {
            Some(e) if e != self.version => Err(SessionError::StaleVersion {
                expected: e,
                current: self.version,
            }),
            _ => Ok(()),
        }
    }

    pub fn models(&self) -> BTreeMap<ModelKind, NetworkSpec> {
        [
            ModelKind::SupplierProfile,
            ModelKind::FinancialIncentive,
            ModelKind::Overall,
        ]
        .into_iter()
        .map(|k| (k, self.model.network(k).to_spec()))
        .collect()
    }

    pub fn query(&self, req: &QueryRequest) -> Result<Posterior, SessionError> {
        self.check_version(req.expected_version)?;
        Ok(query(
            self.model.network(req.model),
            &req.evidence,
            &req.target,
        )?)
    }

    /// Every chain id; details only for chains the caller belongs to.
    pub fn chains(&self, caller: Option<&PartyId>) -> Vec<ChainSummary> {
        self.world
            .chains()
            .map(|c| {
                let member = caller.is_some_and(|p| c.is_member(p));
                ChainSummary {
                    id: c.id().clone(),
                    member,
                    members: member.then(|| c.members().iter().cloned().collect()),
                    head: member.then(|| c.head().to_string()),
                    balances: member.then(|| c.balances().clone()),
                    entries: member.then(|| c.log().len()),
                }
            })
            .collect()
    }

    pub fn chain_log(
        &self,
        chain: &ChainId,
        caller: &PartyId,
    ) -> Result<Vec<ViewEntry>, SessionError> {
        Ok(self.world.view_log(chain, caller)?)
    }

    pub fn arm_fault(&mut self, plan: &FaultPlan) -> Result<u64, SessionError> {
        self.check_version(plan.expected_version)?;
        self.fault = plan.fault;
        self.version += 1;
        Ok(self.version)
    }

    /// Run the financing sequence on the session world. The armed fault,
    /// if any, applies to this run only.
    pub fn submit(
        &mut self,
        caller: &PartyId,
        submit: &SubmitRequest,
    ) -> Result<FlowOutcome, SessionError> {
        self.check_version(submit.expected_version)?;
        let request = submit
            .request
            .clone()
            .unwrap_or_else(FinancingRequest::standard);
        if caller != &request.supplier && caller != &request.financier {
            return Err(SessionError::NotAParty {
                party: caller.clone(),
                supplier: request.supplier,
                financier: request.financier,
            });
        }
        let fixtures = submit.fixtures.as_ref().unwrap_or(&self.fixtures);
        let options = FlowOptions {
            fault: self.fault.take(),
            decision_override: submit.decision,
        };
        let outcome = run_financing_sequence(
            &mut self.world,
            &mut self.coord,
            &self.model,
            &request,
            fixtures,
            &options,
        );
        // a failed run may still have completed setup steps
        self.version += 1;
        Ok(outcome?)
    }
}
