//! The invoice-financing sequence: agreement setup, the financing chain,
//! request validation, the decision network and atomic settlement.

mod sequence;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::bn::{BnError, Evidence, Posterior};
use crate::ledger::{Address, ChainId, KeyRing, LedgerError, PartyId, SupplyAgreement};
use crate::model::{flat, ids, CREDIT_STATES, REWARD_STATES, YES_NO};
use crate::xchain::{CrashPoint, Outcome, Recovered, XchainError};

pub use sequence::{run_financing_sequence, FlowOptions, STEP_TITLES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rewards {
    Additional,
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CreditResult {
    Passed,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Fund,
    DoNotFund,
}

/// A human decision that replaces the threshold rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionOverride {
    Approve,
    Decline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementLocator {
    pub chain: ChainId,
    /// Found or deployed during setup when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<Address>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinancingRequest {
    pub supplier: PartyId,
    pub financier: PartyId,
    pub amount: u64,
    pub payment_terms_days: u32,
    pub agreement: AgreementLocator,
    pub total_unpaid: u64,
    pub rewards: Rewards,
}

impl FinancingRequest {
    pub fn from_json(text: &str) -> Result<Self, FlowError> {
        serde_json::from_str(text).map_err(|e| FlowError::Parse(format!("request: {e}")))
    }

    pub fn standard() -> Self {
        Self::from_json(include_str!("../../data/request.json")).expect("bundled request parses")
    }
}

fn default_threshold() -> f64 {
    0.5
}

fn default_financing_chain() -> ChainId {
    "T3Fin".into()
}

fn default_financier_chain() -> ChainId {
    "Fin".into()
}

/// World facts the financier can look up, plus the agreement the sequence
/// starts from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixtures {
    /// Credit bureau results. A party missing here leaves the credit node
    /// unobserved.
    #[serde(default)]
    pub credit_bureau: BTreeMap<PartyId, CreditResult>,
    /// Parties whose invoices the financier already funds.
    #[serde(default)]
    pub customer_list: BTreeSet<PartyId>,
    /// Declared buyer relationships beyond the agreement being read.
    #[serde(default)]
    pub downstream: BTreeMap<PartyId, Vec<PartyId>>,
    /// Membership of a Golden Wait-a-Lot supply chain. Missing means unknown.
    #[serde(default)]
    pub gwal: BTreeMap<PartyId, bool>,
    /// Terms of the agreement set up by steps 1 to 3.
    pub agreement: SupplyAgreement,
    pub discount_rate: f64,
    #[serde(default = "default_threshold")]
    pub funding_threshold: f64,
    /// Chain the supplier establishes with the financier.
    #[serde(default = "default_financing_chain")]
    pub financing_chain: ChainId,
    /// The financier's own chain.
    #[serde(default = "default_financier_chain")]
    pub financier_chain: ChainId,
}

impl Fixtures {
    pub fn from_json(text: &str) -> Result<Self, FlowError> {
        serde_json::from_str(text).map_err(|e| FlowError::Parse(format!("fixtures: {e}")))
    }

    pub fn standard() -> Self {
        Self::from_json(include_str!("../../data/fixtures.json")).expect("bundled fixtures parse")
    }

    /// Everyone downstream of `buyer` through declared links, nearest first.
    pub fn downstream_of(&self, buyer: &PartyId) -> Vec<PartyId> {
        let mut seen = BTreeSet::from([buyer.clone()]);
        let mut queue = VecDeque::from([buyer.clone()]);
        let mut out = Vec::new();
        while let Some(p) = queue.pop_front() {
            for next in self.downstream.get(&p).into_iter().flatten() {
                if seen.insert(next.clone()) {
                    out.push(next.clone());
                    queue.push_back(next.clone());
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupplyLink {
    pub supplier: PartyId,
    pub buyer: PartyId,
    #[serde(default)]
    pub downstream: Vec<PartyId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    #[error("requested {requested} exceeds the agreement value {value}")]
    AmountExceedsAgreement { requested: u64, value: u128 },
    #[error("requested {requested} exceeds unpaid invoices of {unpaid}")]
    AmountExceedsUnpaid { requested: u64, unpaid: u64 },
    #[error("request terms {requested} days differ from agreed {agreed} days")]
    PaymentTermsMismatch { requested: u32, agreed: u32 },
    #[error("requester `{requester}` is not the agreement's supplier `{supplier}`")]
    SupplierMismatch {
        requester: PartyId,
        supplier: PartyId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error("agreement is not countersigned")]
    NotCountersigned,
    #[error(transparent)]
    Violation(#[from] Violation),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiscountError {
    #[error("discount rate {0} outside [0, 1)")]
    RateOutOfRange(f64),
}

#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error("{0}")]
    Parse(String),
    #[error("request rejected before submission: {0}")]
    ValidationFailed(#[from] ValidationError),
    #[error("step {step}: {source}")]
    Ledger { step: u8, source: LedgerError },
    #[error("step {step}: {source}")]
    Xchain { step: u8, source: XchainError },
    #[error(transparent)]
    Model(#[from] BnError),
    #[error(transparent)]
    Discount(#[from] DiscountError),
}

/// Check a financing request against the countersigned agreement.
pub fn validate_request(
    agreement: &SupplyAgreement,
    request: &FinancingRequest,
    keys: &KeyRing,
) -> Result<(), ValidationError> {
    if !agreement.countersigned(keys) {
        return Err(ValidationError::NotCountersigned);
    }
    if request.supplier != agreement.supplier {
        return Err(Violation::SupplierMismatch {
            requester: request.supplier.clone(),
            supplier: agreement.supplier.clone(),
        }
        .into());
    }
    if request.amount as u128 > agreement.value() {
        return Err(Violation::AmountExceedsAgreement {
            requested: request.amount,
            value: agreement.value(),
        }
        .into());
    }
    if request.payment_terms_days != agreement.payment_terms_days {
        return Err(Violation::PaymentTermsMismatch {
            requested: request.payment_terms_days,
            agreed: agreement.payment_terms_days,
        }
        .into());
    }
    Ok(())
}

/// Whether the financier already funds the supplier's buyer or anyone
/// further down the declared chain.
pub fn lower_tier_funded(customer_list: &BTreeSet<PartyId>, link: &SupplyLink) -> bool {
    customer_list.contains(&link.buyer) || link.downstream.iter().any(|p| customer_list.contains(p))
}

/// `amount * (1 - rate)`, rounded down to whole base units.
pub fn early_payment_discount(amount: u64, rate: f64) -> Result<u64, DiscountError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(DiscountError::RateOutOfRange(rate));
    }
    // rate in parts per million keeps the floor exact for fixture rates
    let ppm = (rate * 1e6).round() as u128;
    Ok((amount as u128 * (1_000_000 - ppm) / 1_000_000) as u64)
}

/// Amount transferred if the request is funded.
pub fn funded_amount(
    request: &FinancingRequest,
    fixtures: &Fixtures,
) -> Result<u64, DiscountError> {
    match request.rewards {
        Rewards::Additional => early_payment_discount(request.amount, fixtures.discount_rate),
        Rewards::Standard => Ok(request.amount),
    }
}

/// Facts the financier has about the supplier, each either known or not.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Facts {
    pub gwal: Option<bool>,
    pub tier: Option<u8>,
    pub credit: Option<CreditResult>,
    pub rewards: Rewards,
    pub lower_tier_funded: bool,
}

impl Facts {
    /// Map facts to findings on the flattened overall network. Unknown facts
    /// stay unobserved.
    pub fn evidence(&self) -> Evidence {
        let yes_no = |b: bool| if b { YES_NO[0] } else { YES_NO[1] };
        let mut ev = Evidence::new();
        if let Some(g) = self.gwal {
            ev.insert(flat::GWAL, yes_no(g));
        }
        if let Some(t) = self.tier {
            ev.insert(flat::TIER1, yes_no(t == 1));
        }
        if let Some(c) = self.credit {
            ev.insert(
                flat::CREDIT_RATING,
                if c == CreditResult::Passed {
                    CREDIT_STATES[0]
                } else {
                    CREDIT_STATES[1]
                },
            );
        }
        let rewards = if self.rewards == Rewards::Additional {
            REWARD_STATES[0]
        } else {
            REWARD_STATES[1]
        };
        ev.insert(flat::FINANCIAL_REWARDS, rewards);
        ev.insert(ids::LOWER_TIER_FUNDED, yes_no(self.lower_tier_funded));
        ev
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Done,
    Failed,
    Pending,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub number: u8,
    pub title: String,
    pub status: StepStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub facts: Facts,
    pub evidence: Evidence,
    pub p_fund: f64,
    pub risk: Posterior,
    pub decision: Posterior,
    pub stability: Posterior,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub override_applied: Option<DecisionOverride>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Settlement {
    pub from: PartyId,
    pub to: PartyId,
    pub chain: ChainId,
    pub amount: u64,
}

/// Injected crash for a whole sequence run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "at", content = "step", rename_all = "snake_case")]
pub enum FlowFault {
    /// Before numbered sequence step 1 to 12.
    Step(u8),
    Lock,
    Stage,
    Commit,
}

impl FlowFault {
    /// Every crash point of the sequence.
    pub fn all() -> Vec<FlowFault> {
        let mut v = vec![FlowFault::Lock, FlowFault::Stage, FlowFault::Commit];
        v.extend((1..=12).map(FlowFault::Step));
        v
    }

    /// The coordinator crash point, for faults inside the crosschain
    /// transaction.
    pub fn coordinator_point(self) -> Option<CrashPoint> {
        match self {
            FlowFault::Step(n) if n >= 7 => Some(CrashPoint::Step(n as usize - 7)),
            FlowFault::Step(_) => None,
            FlowFault::Lock => Some(CrashPoint::Lock),
            FlowFault::Stage => Some(CrashPoint::Stage),
            FlowFault::Commit => Some(CrashPoint::Commit),
        }
    }
}

impl std::fmt::Display for FlowFault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FlowFault::Step(n) => write!(f, "step {n}"),
            FlowFault::Lock => f.write_str("lock"),
            FlowFault::Stage => f.write_str("stage"),
            FlowFault::Commit => f.write_str("commit"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashReport {
    pub fault: FlowFault,
    pub recovered: Vec<Recovered>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowOutcome {
    pub steps: Vec<StepRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assessment: Option<Assessment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settlement: Option<Settlement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crash: Option<CrashReport>,
    /// Digest of the world export just before the crosschain transaction.
    pub pre_tx_digest: String,
    pub final_digest: String,
}

impl FlowOutcome {
    /// Human-readable trace, one line per numbered step.
    pub fn trace(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let mark = match s.status {
                StepStatus::Done => "done",
                StepStatus::Failed => "FAILED",
                StepStatus::Pending => "pending",
            };
            out.push_str(&format!("{:>2}. [{mark:^7}] {}", s.number, s.title));
            if let Some(d) = &s.detail {
                out.push_str(&format!(" ({d})"));
            }
            out.push('\n');
        }
        if let Some(a) = &self.assessment {
            out.push_str(&format!("P(Fund) = {:.4}\n", a.p_fund));
        }
        match &self.decision {
            Some(d) => out.push_str(&format!("decision: {d:?}\n")),
            None => out.push_str("decision: none\n"),
        }
        match &self.tx {
            Some(Outcome::Committed { tx }) => {
                out.push_str(&format!("transaction {tx}: committed\n"))
            }
            Some(Outcome::Ignored { tx, reason }) => {
                out.push_str(&format!("transaction {tx}: ignored, {reason}\n"))
            }
            None => out.push_str("transaction: not submitted\n"),
        }
        match &self.settlement {
            Some(s) => out.push_str(&format!(
                "settlement: {} -> {} on {}: {}\n",
                s.from, s.to, s.chain, s.amount
            )),
            None => out.push_str("settlement: none\n"),
        }
        if let Some(c) = &self.crash {
            out.push_str(&format!(
                "crash injected at {}; recovery finished {} transaction(s)\n",
                c.fault,
                c.recovered.len()
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discount_floors() {
        assert_eq!(early_payment_discount(10_000, 0.05), Ok(9_500));
        assert_eq!(early_payment_discount(999, 0.05), Ok(949));
        assert_eq!(early_payment_discount(1234, 0.0), Ok(1234));
        assert_eq!(
            early_payment_discount(1, 1.0),
            Err(DiscountError::RateOutOfRange(1.0))
        );
        assert!(early_payment_discount(1, f64::NAN).is_err());
        assert!(early_payment_discount(1, -0.1).is_err());
    }

    #[test]
    fn lower_tier_via_buyer_or_declared_link() {
        let link = SupplyLink {
            supplier: "FarmerFran".into(),
            buyer: "ReginaldRegional".into(),
            downstream: vec!["ManufacturerMark".into()],
        };
        assert!(lower_tier_funded(
            &["ManufacturerMark".into()].into(),
            &link
        ));
        assert!(!lower_tier_funded(&BTreeSet::new(), &link));
        assert!(!lower_tier_funded(&["FarmerEric".into()].into(), &link));
    }

    #[test]
    fn downstream_follows_declared_links_once() {
        let mut f = Fixtures::standard();
        f.downstream.insert(
            "ManufacturerMark".into(),
            vec!["GoldenWaitALot".into(), "ReginaldRegional".into()],
        );
        let d = f.downstream_of(&"ReginaldRegional".into());
        assert_eq!(
            d,
            vec![
                PartyId::from("ManufacturerMark"),
                PartyId::from("GoldenWaitALot")
            ]
        );
    }

    #[test]
    fn unknown_facts_stay_unobserved() {
        let facts = Facts {
            gwal: None,
            tier: None,
            credit: None,
            rewards: Rewards::Standard,
            lower_tier_funded: false,
        };
        let ev = facts.evidence();
        assert_eq!(ev.len(), 2);
        assert!(ev.get(flat::CREDIT_RATING).is_none());
    }

    #[test]
    fn fault_mapping() {
        assert_eq!(
            FlowFault::Step(11).coordinator_point(),
            Some(CrashPoint::Step(4))
        );
        assert_eq!(FlowFault::Step(6).coordinator_point(), None);
        assert_eq!(FlowFault::all().len(), 15);
    }
}
