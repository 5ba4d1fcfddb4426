use std::collections::BTreeSet;

use super::{
    funded_amount, lower_tier_funded, validate_request, Assessment, CrashReport, Decision,
    DecisionOverride, Facts, FinancingRequest, Fixtures, FlowError, FlowFault, FlowOutcome,
    Settlement, StepRecord, StepStatus, SupplyLink, ValidationError, Violation,
};
use crate::bn::query;
use crate::ledger::{
    sha256_hex, Address, ChainId, ContractCall, ContractKind, KeyRing, LedgerError, PartyId,
    SupplyAgreement, World, AGREEMENT_KEY,
};
use crate::model::{ids, FinanceModel, DECISION_STATES};
use crate::xchain::{
    CallHandler, Coordinator, CrashPoint, IgnoreReason, Outcome, ReadSet, Step, XchainError,
};

pub const STEP_TITLES: [&str; 12] = [
    "Buyer deploys the supply contract and uploads the agreement signed by him",
    "Supplier downloads the agreement",
    "Supplier countersigns the agreement and uploads it",
    "Supplier establishes the financing chain with the financier",
    "Financier deploys the finance contract on the financing chain",
    "Supplier submits the atomic crosschain financing request",
    "Crosschain read of the countersigned agreement",
    "Request validated against the agreement on the financing chain",
    "Request passed to the financier's chain",
    "Credit check, customer list and decision network evaluated",
    "Ether transferred from the financier's chain to the financing chain",
    "Ether transferred from the financier to the supplier",
];

/// Plan step index of the evaluation call.
const EVALUATE_STEP: usize = 3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlowOptions {
    pub fault: Option<FlowFault>,
    pub decision_override: Option<DecisionOverride>,
}

struct Tracker {
    steps: Vec<StepRecord>,
}

impl Tracker {
    fn new() -> Self {
        let steps = STEP_TITLES
            .iter()
            .enumerate()
            .map(|(i, t)| StepRecord {
                number: i as u8 + 1,
                title: t.to_string(),
                status: StepStatus::Pending,
                detail: None,
            })
            .collect();
        Tracker { steps }
    }

    fn set(&mut self, n: u8, status: StepStatus, detail: impl Into<String>) {
        let s = &mut self.steps[n as usize - 1];
        s.status = status;
        let d = detail.into();
        s.detail = (!d.is_empty()).then_some(d);
    }

    fn done(&mut self, n: u8, detail: impl Into<String>) {
        self.set(n, StepStatus::Done, detail);
    }

    fn fail(&mut self, n: u8, detail: impl Into<String>) {
        self.set(n, StepStatus::Failed, detail);
    }
}

struct Setup {
    agreement_chain: ChainId,
    supply: Address,
    finance: Address,
    desk: Address,
}

fn at(step: u8) -> impl Fn(LedgerError) -> FlowError {
    move |source| FlowError::Ledger { step, source }
}

fn parse_agreement(text: &str) -> Result<SupplyAgreement, String> {
    serde_json::from_str(text).map_err(|e| format!("stored agreement does not parse: {e}"))
}

/// Steps 1 to 5. Every step checks the world first, so re-running after a
/// crash picks up where the previous run stopped.
fn setup(
    world: &mut World,
    request: &FinancingRequest,
    fixtures: &Fixtures,
    crash_before: Option<u8>,
    tracker: Option<&mut Tracker>,
) -> Result<Result<Setup, u8>, FlowError> {
    let mut scratch = Tracker::new();
    let tracker = match tracker {
        Some(t) => t,
        None => &mut scratch,
    };
    let terms = &fixtures.agreement;
    let (supplier, buyer) = (terms.supplier.clone(), terms.buyer.clone());
    let chain = request.agreement.chain.clone();
    let crash = |n: u8| crash_before == Some(n);

    // 1
    if crash(1) {
        return Ok(Err(1));
    }
    let existing = match &request.agreement.address {
        Some(a) => Some(
            world
                .chain(&chain)
                .map_err(at(1))?
                .contract(a)
                .map_err(at(1))?
                .address
                .clone(),
        ),
        None => {
            let group: BTreeSet<PartyId> = [supplier.clone(), buyer.clone()].into();
            world
                .chain(&chain)
                .map_err(at(1))?
                .contracts()
                .values()
                .find_map(|c| {
                    let parties_match = match c.storage.get(AGREEMENT_KEY) {
                        Some(text) => parse_agreement(text)
                            .is_ok_and(|a| a.supplier == supplier && a.buyer == buyer),
                        None => true,
                    };
                    (c.kind == ContractKind::SupplyContract
                        && c.owner == buyer
                        && c.privacy_group == group
                        && parties_match)
                        .then(|| c.address.clone())
                })
        }
    };
    let (supply, mut detail) = match existing {
        Some(a) => (a, "contract already deployed".to_string()),
        None => {
            let a = world
                .deploy_contract(
                    &chain,
                    ContractKind::SupplyContract,
                    &buyer,
                    [supplier.clone()].into(),
                )
                .map_err(at(1))?;
            (a.clone(), format!("deployed {a} on {chain}"))
        }
    };
    let uploaded = world
        .chain(&chain)
        .map_err(at(1))?
        .contract(&supply)
        .map_err(at(1))?
        .storage
        .contains_key(AGREEMENT_KEY);
    if !uploaded {
        let mut agreement = terms.clone();
        agreement.signatures.clear();
        agreement.sign(&buyer, world.keys()).map_err(at(1))?;
        world
            .call(
                &chain,
                &buyer,
                &supply,
                ContractCall::UploadAgreement { agreement },
            )
            .map_err(at(1))?;
        detail.push_str("; agreement uploaded");
    }
    tracker.done(1, detail);

    // 2
    if crash(2) {
        return Ok(Err(2));
    }
    let text = world
        .read_state(&chain, &supply, AGREEMENT_KEY, &supplier)
        .map_err(at(2))?
        .ok_or_else(|| FlowError::Parse("agreement missing after upload".into()))?;
    let mut agreement = parse_agreement(&text).map_err(FlowError::Parse)?;
    tracker.done(
        2,
        format!(
            "{} x {} at {} per unit",
            agreement.quantity, agreement.item, agreement.unit_price
        ),
    );

    // 3
    if crash(3) {
        return Ok(Err(3));
    }
    if agreement.countersigned(world.keys()) {
        tracker.done(3, "already countersigned");
    } else {
        agreement.sign(&supplier, world.keys()).map_err(at(3))?;
        world
            .call(
                &chain,
                &supplier,
                &supply,
                ContractCall::UploadAgreement { agreement },
            )
            .map_err(at(3))?;
        tracker.done(3, "countersigned agreement uploaded");
    }

    // 4
    if crash(4) {
        return Ok(Err(4));
    }
    let fin_chain = fixtures.financing_chain.clone();
    let mut detail = if world.has_chain(&fin_chain) {
        format!("{fin_chain} already established")
    } else {
        let members = [request.supplier.clone(), request.financier.clone()].into();
        world
            .create_chain(fin_chain.clone(), members, Default::default())
            .map_err(at(4))?;
        format!("{fin_chain} created")
    };
    let granted = world
        .chain(&chain)
        .map_err(at(4))?
        .contract(&supply)
        .map_err(at(4))?
        .has_grant(&request.financier, AGREEMENT_KEY);
    if !granted {
        let grant = ContractCall::GrantRead {
            reader: request.financier.clone(),
            key: AGREEMENT_KEY.into(),
        };
        world
            .call(&chain, &request.supplier, &supply, grant)
            .map_err(at(4))?;
        detail.push_str(&format!("; {} may read the agreement", request.financier));
    }
    tracker.done(4, detail);

    // 5
    if crash(5) {
        return Ok(Err(5));
    }
    let find_finance =
        |world: &World, chain: &ChainId, member: &PartyId| -> Result<Option<Address>, FlowError> {
            Ok(world
                .chain(chain)
                .map_err(at(5))?
                .contracts()
                .values()
                .find_map(|c| {
                    (c.kind == ContractKind::FinanceContract
                        && c.owner == request.financier
                        && c.in_group(member))
                    .then(|| c.address.clone())
                }))
        };
    let mut detail = Vec::new();
    let finance = match find_finance(world, &fin_chain, &request.supplier)? {
        Some(a) => a,
        None => {
            let a = world
                .deploy_contract(
                    &fin_chain,
                    ContractKind::FinanceContract,
                    &request.financier,
                    [request.supplier.clone()].into(),
                )
                .map_err(at(5))?;
            detail.push(format!("deployed {a} on {fin_chain}"));
            a
        }
    };
    let desk_chain = fixtures.financier_chain.clone();
    let desk = match find_finance(world, &desk_chain, &request.financier)? {
        Some(a) => a,
        None => {
            let a = world
                .deploy_contract(
                    &desk_chain,
                    ContractKind::FinanceContract,
                    &request.financier,
                    BTreeSet::new(),
                )
                .map_err(at(5))?;
            detail.push(format!("deployed desk contract {a} on {desk_chain}"));
            a
        }
    };
    tracker.done(
        5,
        if detail.is_empty() {
            "contract already deployed".to_string()
        } else {
            detail.join("; ")
        },
    );

    Ok(Ok(Setup {
        agreement_chain: chain,
        supply,
        finance,
        desk,
    }))
}

struct FinancingHandler<'a> {
    request: &'a FinancingRequest,
    fixtures: &'a Fixtures,
    model: &'a FinanceModel,
    keys: KeyRing,
    tier: Option<u8>,
    decision_override: Option<DecisionOverride>,
    agreement: Option<SupplyAgreement>,
    violation: Option<ValidationError>,
    assessment: Option<Assessment>,
    decision: Option<Decision>,
}

impl FinancingHandler<'_> {
    fn assess(&mut self) -> Result<(), String> {
        let agreement = self.agreement.as_ref().ok_or("agreement was not read")?;
        let supplier = &self.request.supplier;
        let link = SupplyLink {
            supplier: supplier.clone(),
            buyer: agreement.buyer.clone(),
            downstream: self.fixtures.downstream_of(&agreement.buyer),
        };
        let facts = Facts {
            gwal: self.fixtures.gwal.get(supplier).copied(),
            tier: self.tier,
            credit: self.fixtures.credit_bureau.get(supplier).copied(),
            rewards: self.request.rewards,
            lower_tier_funded: lower_tier_funded(&self.fixtures.customer_list, &link),
        };
        let evidence = facts.evidence();
        let net = self.model.overall();
        let q = |node: &str| query(net, &evidence, node).map_err(|e| e.to_string());
        let decision_post = q(ids::FINANCING_DECISION)?;
        let p_fund = decision_post
            .probability(DECISION_STATES[0])
            .ok_or("no Fund state")?;
        let decision = match self.decision_override {
            Some(DecisionOverride::Approve) => Decision::Fund,
            Some(DecisionOverride::Decline) => Decision::DoNotFund,
            None if p_fund > self.fixtures.funding_threshold => Decision::Fund,
            None => Decision::DoNotFund,
        };
        self.assessment = Some(Assessment {
            facts,
            risk: q(ids::PERCEPTION_OF_RISK)?,
            stability: q(ids::SUPPLY_CHAIN_STABILITY)?,
            decision: decision_post,
            evidence,
            p_fund,
            override_applied: self.decision_override,
        });
        self.decision = Some(decision);
        Ok(())
    }
}

impl CallHandler for FinancingHandler<'_> {
    fn handle(
        &mut self,
        _step: usize,
        call: &Step,
        reads: &ReadSet,
    ) -> Result<ContractCall, String> {
        let Step::Call { method, .. } = call else {
            return Err("not a call".into());
        };
        let supplier = &self.request.supplier;
        match method.as_str() {
            "validate_request" => {
                let text = reads
                    .get("agreement")
                    .cloned()
                    .flatten()
                    .ok_or("no agreement at the locator")?;
                let agreement = parse_agreement(&text)?;
                if let Err(v) = validate_request(&agreement, self.request, &self.keys) {
                    let msg = v.to_string();
                    self.violation = Some(v);
                    return Err(msg);
                }
                self.agreement = Some(agreement);
                let value = serde_json::json!({
                    "supplier": supplier,
                    "amount": self.request.amount,
                    "payment_terms_days": self.request.payment_terms_days,
                    "status": "validated",
                });
                Ok(ContractCall::Record {
                    key: format!("request/{supplier}"),
                    value: value.to_string(),
                })
            }
            "submit_request" => Ok(ContractCall::Record {
                key: format!("request/{supplier}"),
                value: serde_json::to_string(self.request).expect("request serializes"),
            }),
            "evaluate" => {
                self.assess()?;
                let p_fund = self.assessment.as_ref().expect("assessed").p_fund;
                match self.decision {
                    Some(Decision::Fund) => {
                        let value = serde_json::json!({ "decision": "Fund", "p_fund": p_fund });
                        Ok(ContractCall::Record {
                            key: format!("decision/{supplier}"),
                            value: value.to_string(),
                        })
                    }
                    _ => Err(format!("funding declined, P(Fund) = {p_fund:.4}")),
                }
            }
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

fn plan_steps(
    request: &FinancingRequest,
    fixtures: &Fixtures,
    setup: &Setup,
    amount: u64,
) -> Vec<Step> {
    let args = serde_json::to_value(request).expect("request serializes");
    let call = |chain: &ChainId, address: &Address, author: &PartyId, method: &str| Step::Call {
        chain: chain.clone(),
        address: address.clone(),
        author: author.clone(),
        method: method.into(),
        args: args.clone(),
    };
    vec![
        Step::Read {
            chain: setup.agreement_chain.clone(),
            address: setup.supply.clone(),
            key: AGREEMENT_KEY.into(),
            reader: request.financier.clone(),
            bind: "agreement".into(),
        },
        call(
            &fixtures.financing_chain,
            &setup.finance,
            &request.supplier,
            "validate_request",
        ),
        call(
            &fixtures.financier_chain,
            &setup.desk,
            &request.financier,
            "submit_request",
        ),
        call(
            &fixtures.financier_chain,
            &setup.desk,
            &request.financier,
            "evaluate",
        ),
        Step::Transfer {
            from_chain: fixtures.financier_chain.clone(),
            to_chain: fixtures.financing_chain.clone(),
            from: request.financier.clone(),
            to: request.financier.clone(),
            amount,
        },
        Step::Transfer {
            from_chain: fixtures.financing_chain.clone(),
            to_chain: fixtures.financing_chain.clone(),
            from: request.financier.clone(),
            to: request.supplier.clone(),
            amount,
        },
    ]
}

fn digest(world: &World) -> String {
    sha256_hex(&[&world.export_bytes()])
}

/// Run the twelve-step financing sequence against `world`.
///
/// An injected crash halts the run at that point; the coordinator then
/// restarts from its journal and the outcome reports the recovered state.
pub fn run_financing_sequence(
    world: &mut World,
    coord: &mut Coordinator,
    model: &FinanceModel,
    request: &FinancingRequest,
    fixtures: &Fixtures,
    options: &FlowOptions,
) -> Result<FlowOutcome, FlowError> {
    if request.amount > request.total_unpaid {
        return Err(ValidationError::from(Violation::AmountExceedsUnpaid {
            requested: request.amount,
            unpaid: request.total_unpaid,
        })
        .into());
    }
    let amount = funded_amount(request, fixtures)?;
    let mut tracker = Tracker::new();
    let setup_crash = match options.fault {
        Some(FlowFault::Step(n)) if n <= 5 => Some(n),
        _ => None,
    };
    let setup = match setup(world, request, fixtures, setup_crash, Some(&mut tracker))? {
        Ok(s) => s,
        Err(n) => {
            // restart: setup is idempotent, the request is not resubmitted
            setup(world, request, fixtures, None, None)?.expect("no crash on restart");
            tracker.fail(n, "coordinator crashed before this step; restart completed setup, request not submitted");
            let d = digest(world);
            return Ok(FlowOutcome {
                steps: tracker.steps,
                decision: None,
                assessment: None,
                tx: None,
                settlement: None,
                crash: Some(CrashReport {
                    fault: options.fault.expect("fault"),
                    recovered: Vec::new(),
                }),
                pre_tx_digest: d.clone(),
                final_digest: d,
            });
        }
    };
    let pre_tx_digest = digest(world);

    // 6
    if options.fault == Some(FlowFault::Step(6)) {
        let recovered = coord
            .recover(world)
            .map_err(|source| FlowError::Xchain { step: 6, source })?;
        tracker.fail(6, "coordinator crashed before submission");
        return Ok(FlowOutcome {
            steps: tracker.steps,
            decision: None,
            assessment: None,
            tx: None,
            settlement: None,
            crash: Some(CrashReport {
                fault: FlowFault::Step(6),
                recovered,
            }),
            final_digest: digest(world),
            pre_tx_digest,
        });
    }
    let steps = plan_steps(request, fixtures, &setup, amount);
    let tx = coord
        .plan(world, request.supplier.clone(), steps)
        .map_err(|source| FlowError::Xchain { step: 6, source })?;
    let tx_id = tx.id.clone();
    let mut handler = FinancingHandler {
        request,
        fixtures,
        model,
        keys: world.keys().clone(),
        tier: world.party(&request.supplier).map_err(at(6))?.tier,
        decision_override: options.decision_override,
        agreement: None,
        violation: None,
        assessment: None,
        decision: None,
    };
    let point = options.fault.and_then(FlowFault::coordinator_point);
    let (outcome, crash) = match coord.execute(world, tx, &mut handler, point) {
        Ok(o) => (o, None),
        Err(XchainError::Crashed { point, .. }) => {
            let recovered = coord
                .recover(world)
                .map_err(|source| FlowError::Xchain { step: 6, source })?;
            let outcome = recovered
                .iter()
                .find(|r| r.tx == tx_id)
                .map(|r| r.outcome.clone())
                .ok_or_else(|| FlowError::Xchain {
                    step: 6,
                    source: XchainError::Journal("crashed tx not in journal".into()),
                })?;
            let fault = options.fault.expect("crash only when a fault is armed");
            (outcome, Some((point, CrashReport { fault, recovered })))
        }
        Err(source) => return Err(FlowError::Xchain { step: 6, source }),
    };

    // map plan progress onto the numbered steps
    tracker.done(6, format!("transaction {tx_id}"));
    let staged_done = |tracker: &mut Tracker, upto: usize| {
        for i in 0..upto {
            tracker.done(7 + i as u8, "");
        }
    };
    match (&outcome, &crash) {
        (Outcome::Committed { .. }, _) => staged_done(&mut tracker, 6),
        (_, Some((CrashPoint::Lock, _))) => tracker.fail(
            6,
            "coordinator crashed while taking locks; transaction ignored",
        ),
        (_, Some((CrashPoint::Step(i), _))) => {
            staged_done(&mut tracker, *i);
            tracker.fail(
                7 + *i as u8,
                "coordinator crashed before this step; transaction ignored",
            );
        }
        (_, Some((CrashPoint::Stage, _))) => {
            staged_done(&mut tracker, 5);
            tracker.fail(
                12,
                "coordinator crashed before the commit point; transaction ignored",
            );
        }
        (Outcome::Ignored { reason, .. }, _) => match reason {
            IgnoreReason::LockConflict { .. }
            | IgnoreReason::LockFailed { .. }
            | IgnoreReason::Recovered => tracker.fail(6, reason.to_string()),
            IgnoreReason::Rejected { step, cause } if *step == EVALUATE_STEP => {
                staged_done(&mut tracker, EVALUATE_STEP + 1);
                tracker.fail(11, format!("{cause}; transaction ignored"));
            }
            IgnoreReason::StepFailed { step, cause } | IgnoreReason::Rejected { step, cause } => {
                staged_done(&mut tracker, *step);
                tracker.fail(7 + *step as u8, format!("{cause}; transaction ignored"));
            }
        },
    }
    if let Some(a) = &handler.assessment {
        let s = &mut tracker.steps[9];
        if s.status == StepStatus::Done {
            let decision = handler.decision.expect("decided with assessment");
            s.detail = Some(format!("P(Fund) = {:.4}, decision {decision:?}", a.p_fund));
        }
    }
    if outcome.is_committed() {
        tracker.steps[11].detail = Some(format!("{amount} transferred"));
    }

    let settlement =
        (outcome.is_committed() && handler.decision == Some(Decision::Fund)).then(|| Settlement {
            from: request.financier.clone(),
            to: request.supplier.clone(),
            chain: fixtures.financing_chain.clone(),
            amount,
        });
    Ok(FlowOutcome {
        steps: tracker.steps,
        decision: handler.decision,
        assessment: handler.assessment,
        tx: Some(outcome),
        settlement,
        crash: crash.map(|(_, report)| report),
        final_digest: digest(world),
        pre_tx_digest,
    })
}
