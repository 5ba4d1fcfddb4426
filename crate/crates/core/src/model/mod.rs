//! The invoice-financing decision networks.
//!
//! Two sub-network classes (supplier profile, financial incentive) feed an
//! overall master network. Conditional probability tables are reconstructed
//! from published scenario posteriors: the sub-models by an exact triangular
//! solve ([`derive`]), the overall model by a bounded least-squares fit
//! ([`fit`]).

pub mod derive;
pub mod fit;
pub mod scenario;

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::bn::{BnError, Evidence, Network, NetworkSpec, NodeSpec};
use crate::oobn::{self, Binding, Instance, MasterDocument, MasterSpec, OobnClass, OobnError};

pub use derive::{derive_submodel_cpts, SubmodelCpts};
pub use fit::{fit_model, fit_overall_cpts, FitOptions, FitReport, FitResidual, OverallCpts};
pub use scenario::{run_scenario, ModelKind, ScenarioDef, ScenarioReport, ScenarioSet, TargetSpec};

/// Node ids. Inside the overall network sub-model nodes are qualified with
/// their instance name, see [`flat`].
pub mod ids {
    pub const TIER1: &str = "Tier1";
    pub const GWAL: &str = "GWaL";
    pub const SUPPLIER_PROFILE: &str = "SupplierProfile";
    pub const CREDIT_RATING: &str = "CreditRating";
    pub const FINANCIAL_REWARDS: &str = "FinancialRewards";
    pub const FINANCIAL_INCENTIVE: &str = "FinancialIncentive";
    pub const PERCEPTION_OF_RISK: &str = "PerceptionOfRisk";
    pub const FINANCING_DECISION: &str = "FinancingDecision";
    pub const LOWER_TIER_FUNDED: &str = "LowerTierFunded";
    pub const SUPPLY_CHAIN_STABILITY: &str = "SupplyChainStability";

    pub const SP_INSTANCE: &str = "SupplierProfile";
    pub const FI_INSTANCE: &str = "FinancialIncentive";
}

/// Qualified ids of sub-model nodes in the flattened overall network.
pub mod flat {
    pub const TIER1: &str = "SupplierProfile.Tier1";
    pub const GWAL: &str = "SupplierProfile.GWaL";
    pub const SUPPLIER_PROFILE: &str = "SupplierProfile.SupplierProfile";
    pub const CREDIT_RATING: &str = "FinancialIncentive.CreditRating";
    pub const FINANCIAL_REWARDS: &str = "FinancialIncentive.FinancialRewards";
    pub const FINANCIAL_INCENTIVE: &str = "FinancialIncentive.FinancialIncentive";
}

pub const YES_NO: [&str; 2] = ["Yes", "No"];
pub const RISK_STATES: [&str; 2] = ["LowRisk", "HighRisk"];
pub const CREDIT_STATES: [&str; 2] = ["Passed", "Failed"];
pub const REWARD_STATES: [&str; 2] = ["Additional", "Standard"];
pub const INCENTIVE_STATES: [&str; 2] = ["Compelling", "NotCompelling"];
pub const PERCEPTION_STATES: [&str; 2] = ["AcceptableRisk", "UnacceptableRisk"];
pub const DECISION_STATES: [&str; 2] = ["Fund", "DoNotFund"];
pub const STABILITY_STATES: [&str; 2] = ["Stable", "Unstable"];

const UNIFORM: [f64; 2] = [0.5, 0.5];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Network(#[from] BnError),
    #[error(transparent)]
    Composition(#[from] OobnError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed document: {0}")]
    Parse(String),
    #[error("scenario targets are inconsistent: {0}")]
    InconsistentTargets(String),
    #[error("fit failed: max residual {:.4} exceeds tolerance\n{}", .0.max_abs_residual, .0.table())]
    FitFailed(Box<FitReport>),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
}

pub fn supplier_profile_class(low_risk: [f64; 4]) -> OobnClass {
    use ids::*;
    OobnClass::new(
        NetworkSpec::new(vec![
            NodeSpec::root(TIER1, "Tier 1 Supplier?", &YES_NO, &UNIFORM),
            NodeSpec::root(GWAL, "Golden Wait-a-Lot Supply Chain?", &YES_NO, &UNIFORM),
            NodeSpec::binary_child(
                SUPPLIER_PROFILE,
                "Supplier Profile",
                RISK_STATES,
                &[TIER1, GWAL],
                &low_risk,
            ),
        ]),
        &[TIER1, GWAL],
        &[SUPPLIER_PROFILE],
    )
}

pub fn financial_incentive_class(compelling: [f64; 4]) -> OobnClass {
    use ids::*;
    OobnClass::new(
        NetworkSpec::new(vec![
            NodeSpec::root(CREDIT_RATING, "Credit rating", &CREDIT_STATES, &UNIFORM),
            NodeSpec::root(
                FINANCIAL_REWARDS,
                "Financial rewards",
                &REWARD_STATES,
                &UNIFORM,
            ),
            NodeSpec::binary_child(
                FINANCIAL_INCENTIVE,
                "Financial incentive",
                INCENTIVE_STATES,
                &[CREDIT_RATING, FINANCIAL_REWARDS],
                &compelling,
            ),
        ]),
        &[CREDIT_RATING, FINANCIAL_REWARDS],
        &[FINANCIAL_INCENTIVE],
    )
}

/// Overall master network around the two sub-model instances.
pub fn overall_master(sp: OobnClass, fi: OobnClass, cpts: &OverallCpts) -> MasterSpec {
    use ids::*;
    MasterSpec {
        instances: vec![
            Instance {
                name: SP_INSTANCE.into(),
                class: sp,
            },
            Instance {
                name: FI_INSTANCE.into(),
                class: fi,
            },
        ],
        nodes: vec![
            NodeSpec::binary_child(
                PERCEPTION_OF_RISK,
                "Perception of risk",
                PERCEPTION_STATES,
                &[flat::SUPPLIER_PROFILE, flat::FINANCIAL_INCENTIVE],
                &cpts.acceptable_risk,
            ),
            NodeSpec::binary_child(
                FINANCING_DECISION,
                "Invoice financing decision",
                DECISION_STATES,
                &[PERCEPTION_OF_RISK],
                &cpts.fund,
            ),
            NodeSpec::root(
                LOWER_TIER_FUNDED,
                "Lower tier is funded by invoice finance company",
                &YES_NO,
                &UNIFORM,
            ),
            NodeSpec::binary_child(
                SUPPLY_CHAIN_STABILITY,
                "Supply Chain Stability",
                STABILITY_STATES,
                &[FINANCING_DECISION, LOWER_TIER_FUNDED],
                &cpts.stable,
            ),
        ],
        bindings: vec![
            Binding {
                output: flat::SUPPLIER_PROFILE.into(),
                target: PERCEPTION_OF_RISK.into(),
            },
            Binding {
                output: flat::FINANCIAL_INCENTIVE.into(),
                target: PERCEPTION_OF_RISK.into(),
            },
        ],
    }
}

/// The three networks, validated and ready for queries.
#[derive(Debug, Clone)]
pub struct FinanceModel {
    master: MasterSpec,
    supplier_profile: Network,
    financial_incentive: Network,
    overall: Network,
}

const GOLDEN_SP: &str = include_str!("../../data/models/supplier_profile.json");
const GOLDEN_FI: &str = include_str!("../../data/models/financial_incentive.json");
const GOLDEN_MASTER: &str = include_str!("../../data/models/master.json");
const PUBLISHED_SCENARIOS: &str = include_str!("../../data/scenarios.json");

pub const SP_FILE: &str = "supplier_profile.json";
pub const FI_FILE: &str = "financial_incentive.json";
pub const MASTER_FILE: &str = "master.json";
pub const OVERALL_FILE: &str = "overall.json";

/// The scenario fixture shipped with the crate.
pub fn published_scenarios() -> ScenarioSet {
    ScenarioSet::from_json(PUBLISHED_SCENARIOS).expect("bundled scenarios parse")
}

impl FinanceModel {
    pub fn from_master(master: MasterSpec) -> Result<Self, ModelError> {
        let overall = Network::build(&oobn::flatten(&master)?)?;
        let class = |name: &str| -> Result<Network, ModelError> {
            let inst = master
                .instances
                .iter()
                .find(|i| i.name == name)
                .ok_or_else(|| ModelError::Parse(format!("master has no `{name}` instance")))?;
            Ok(Network::build(&inst.class.spec)?)
        };
        let supplier_profile = class(ids::SP_INSTANCE)?;
        let financial_incentive = class(ids::FI_INSTANCE)?;
        Ok(FinanceModel {
            master,
            supplier_profile,
            financial_incentive,
            overall,
        })
    }

    /// The fitted model committed with the crate.
    pub fn golden() -> Self {
        Self::from_master_document(GOLDEN_MASTER, |file| match file {
            SP_FILE => Ok(GOLDEN_SP.to_string()),
            FI_FILE => Ok(GOLDEN_FI.to_string()),
            other => Err(ModelError::Parse(format!("unknown class file {other}"))),
        })
        .expect("golden model is valid")
    }

    pub fn from_master_document<F>(master_json: &str, mut read: F) -> Result<Self, ModelError>
    where
        F: FnMut(&str) -> Result<String, ModelError>,
    {
        let doc = MasterDocument::from_json(master_json)?;
        let mut failure = None;
        let master = doc.resolve(|file| match read(file) {
            Ok(text) => OobnClass::from_json(&text),
            Err(e) => {
                let msg = e.to_string();
                failure = Some(e);
                Err(OobnError::Parse(msg))
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        Self::from_master(master?)
    }

    pub fn load_dir(dir: &Path) -> Result<Self, ModelError> {
        let read = |file: &str| -> Result<String, ModelError> {
            let path = dir.join(file);
            fs::read_to_string(&path).map_err(|source| ModelError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        let master = read(MASTER_FILE)?;
        Self::from_master_document(&master, read)
    }

    /// Write the class files, the master file and the flattened network.
    pub fn write_dir(&self, dir: &Path) -> Result<(), ModelError> {
        let io = |path: &Path| {
            let p = path.display().to_string();
            move |source| ModelError::Io { path: p, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        for (file, text) in self.documents() {
            let path = dir.join(file);
            fs::write(&path, text).map_err(io(&path))?;
        }
        Ok(())
    }

    /// File name and contents of every model artifact.
    pub fn documents(&self) -> Vec<(&'static str, String)> {
        let class = |name: &str| {
            let inst = self
                .master
                .instances
                .iter()
                .find(|i| i.name == name)
                .expect("instance");
            serde_json::to_string_pretty(&inst.class).expect("class serializes") + "\n"
        };
        let doc = MasterDocument {
            instances: [(ids::SP_INSTANCE, SP_FILE), (ids::FI_INSTANCE, FI_FILE)]
                .into_iter()
                .map(|(name, file)| oobn::InstanceDoc {
                    name: name.into(),
                    class: oobn::ClassRef::File { file: file.into() },
                })
                .collect(),
            nodes: self.master.nodes.clone(),
            bindings: self.master.bindings.clone(),
        };
        vec![
            (SP_FILE, class(ids::SP_INSTANCE)),
            (FI_FILE, class(ids::FI_INSTANCE)),
            (
                MASTER_FILE,
                serde_json::to_string_pretty(&doc).expect("master serializes") + "\n",
            ),
            (OVERALL_FILE, self.overall.to_spec().to_json_pretty() + "\n"),
        ]
    }

    pub fn master(&self) -> &MasterSpec {
        &self.master
    }

    pub fn network(&self, kind: ModelKind) -> &Network {
        match kind {
            ModelKind::SupplierProfile => &self.supplier_profile,
            ModelKind::FinancialIncentive => &self.financial_incentive,
            ModelKind::Overall => &self.overall,
        }
    }

    pub fn overall(&self) -> &Network {
        &self.overall
    }

    /// P(Fund) on the overall network.
    pub fn fund_probability(&self, evidence: &Evidence) -> Result<f64, BnError> {
        let p = crate::bn::query(&self.overall, evidence, ids::FINANCING_DECISION)?;
        Ok(p.probability(DECISION_STATES[0]).expect("Fund state"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bn::{enumerate_joint, query};

    #[test]
    fn overall_flattens_to_ten_nodes() {
        let model = FinanceModel::golden();
        assert_eq!(model.overall().len(), 10);
        assert_eq!(model.network(ModelKind::SupplierProfile).len(), 3);
    }

    #[test]
    fn golden_artifacts_match_their_serialization() {
        let model = FinanceModel::golden();
        let docs = model.documents();
        let get = |f: &str| docs.iter().find(|(n, _)| *n == f).unwrap().1.clone();
        assert_eq!(get(SP_FILE), GOLDEN_SP);
        assert_eq!(get(FI_FILE), GOLDEN_FI);
        assert_eq!(get(MASTER_FILE), GOLDEN_MASTER);
        let overall = include_str!("../../data/models/overall.json");
        assert_eq!(get(OVERALL_FILE), overall);
    }

    #[test]
    fn golden_model_reproduces_every_published_scenario() {
        let model = FinanceModel::golden();
        for s in published_scenarios().scenarios() {
            let report = run_scenario(model.network(s.model), s).unwrap();
            assert!(report.pass, "{}", report.table());
        }
    }

    #[test]
    fn supplier_profile_gwal_evidence_matches_standalone_via_oracle() {
        let model = FinanceModel::golden();
        let alone = enumerate_joint(
            model.network(ModelKind::SupplierProfile),
            &Evidence::new().with(ids::GWAL, "Yes"),
            ids::SUPPLIER_PROFILE,
        )
        .unwrap();
        let flat = query(
            model.overall(),
            &Evidence::new().with(flat::GWAL, "Yes"),
            flat::SUPPLIER_PROFILE,
        )
        .unwrap();
        assert!((alone.probability("LowRisk").unwrap() - 0.795).abs() <= 0.01);
        for (a, b) in alone.probabilities().iter().zip(flat.probabilities()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn load_dir_round_trips() {
        let dir = std::env::temp_dir().join(format!("chainvoice-model-{}", std::process::id()));
        let model = FinanceModel::golden();
        model.write_dir(&dir).unwrap();
        let again = FinanceModel::load_dir(&dir).unwrap();
        assert_eq!(again.master(), model.master());
        std::fs::remove_dir_all(&dir).ok();
        assert!(matches!(
            FinanceModel::load_dir(&dir),
            Err(ModelError::Io { .. })
        ));
    }
}
