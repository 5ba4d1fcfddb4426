use chainvoice_core::flow::{
    run_financing_sequence, validate_request, CreditResult, Decision, DecisionOverride,
    FinancingRequest, Fixtures, FlowError, FlowFault, FlowOptions, FlowOutcome, Rewards,
    StepStatus, ValidationError, Violation,
};
use chainvoice_core::ledger::{
    LedgerError, PartyId, SupplyAgreement, World, WorldConfig, AGREEMENT_KEY,
};
use chainvoice_core::model::FinanceModel;
use chainvoice_core::xchain::{Coordinator, IgnoreReason, Outcome};

fn p(s: &str) -> PartyId {
    s.into()
}

struct Run {
    world: World,
    coord: Coordinator,
    outcome: FlowOutcome,
}

fn run_with(request: &FinancingRequest, fixtures: &Fixtures, options: FlowOptions) -> Run {
    let model = FinanceModel::golden();
    let mut world = World::bootstrap(&WorldConfig::standard()).unwrap();
    let mut coord = Coordinator::new();
    let outcome =
        run_financing_sequence(&mut world, &mut coord, &model, request, fixtures, &options)
            .unwrap();
    Run {
        world,
        coord,
        outcome,
    }
}

fn run(options: FlowOptions) -> Run {
    run_with(
        &FinancingRequest::standard(),
        &Fixtures::standard(),
        options,
    )
}

fn statuses(o: &FlowOutcome) -> Vec<StepStatus> {
    o.steps.iter().map(|s| s.status).collect()
}

fn expect_prefix(o: &FlowOutcome, failed: usize) {
    for s in &o.steps {
        let want = match (s.number as usize).cmp(&failed) {
            std::cmp::Ordering::Less => StepStatus::Done,
            std::cmp::Ordering::Equal => StepStatus::Failed,
            std::cmp::Ordering::Greater => StepStatus::Pending,
        };
        assert_eq!(s.status, want, "step {} in\n{}", s.number, o.trace());
    }
}

fn declined_fixtures() -> Fixtures {
    let mut f = Fixtures::standard();
    f.credit_bureau
        .insert(p("FarmerFran"), CreditResult::Failed);
    f.customer_list.clear();
    f
}

#[test]
fn standard_request_is_funded_and_settled() {
    let r = run(FlowOptions::default());
    let o = &r.outcome;
    assert!(
        statuses(o).iter().all(|s| *s == StepStatus::Done),
        "{}",
        o.trace()
    );
    assert_eq!(o.decision, Some(Decision::Fund));
    assert!(matches!(o.tx, Some(Outcome::Committed { .. })));
    let a = o.assessment.as_ref().unwrap();
    assert!((a.p_fund - 0.7175).abs() < 5e-3, "P(Fund) = {}", a.p_fund);
    let s = o.settlement.as_ref().unwrap();
    assert_eq!(
        (s.from.as_str(), s.to.as_str(), s.amount),
        ("FinancierIlze", "FarmerFran", 10_000)
    );

    let t3fin = r.world.chain(&"T3Fin".into()).unwrap();
    assert_eq!(t3fin.balance(&p("FarmerFran")), 10_000);
    assert_eq!(t3fin.balance(&p("FinancierIlze")), 0);
    assert_eq!(
        r.world
            .chain(&"Fin".into())
            .unwrap()
            .balance(&p("FinancierIlze")),
        990_000
    );
    assert_eq!(r.world.locks_held(), 0);
    assert_ne!(o.pre_tx_digest, o.final_digest);
}

#[test]
fn additional_rewards_pay_the_discounted_amount() {
    let mut request = FinancingRequest::standard();
    request.rewards = Rewards::Additional;
    let r = run_with(&request, &Fixtures::standard(), FlowOptions::default());
    assert_eq!(r.outcome.settlement.as_ref().map(|s| s.amount), Some(9_500));
    assert_eq!(
        r.world
            .chain(&"T3Fin".into())
            .unwrap()
            .balance(&p("FarmerFran")),
        9_500
    );
}

#[test]
fn poor_credit_without_lower_tier_funding_is_declined() {
    let r = run_with(
        &FinancingRequest::standard(),
        &declined_fixtures(),
        FlowOptions::default(),
    );
    let o = &r.outcome;
    assert_eq!(o.decision, Some(Decision::DoNotFund));
    assert!(o.assessment.as_ref().unwrap().p_fund < 0.5);
    expect_prefix(o, 11);
    assert!(matches!(
        o.tx,
        Some(Outcome::Ignored {
            reason: IgnoreReason::Rejected { step: 3, .. },
            ..
        })
    ));
    assert!(o.settlement.is_none());
    assert_eq!(o.pre_tx_digest, o.final_digest);
}

#[test]
fn overrides_replace_the_threshold() {
    let approve = FlowOptions {
        decision_override: Some(DecisionOverride::Approve),
        ..Default::default()
    };
    let r = run_with(&FinancingRequest::standard(), &declined_fixtures(), approve);
    assert_eq!(r.outcome.decision, Some(Decision::Fund));
    assert!(r.outcome.settlement.is_some());

    let decline = FlowOptions {
        decision_override: Some(DecisionOverride::Decline),
        ..Default::default()
    };
    let r = run(decline);
    assert_eq!(r.outcome.decision, Some(Decision::DoNotFund));
    assert!(r.outcome.settlement.is_none());
    assert!(r.outcome.assessment.as_ref().unwrap().p_fund > 0.5);
}

#[test]
fn request_above_agreement_value_fails_validation_on_chain() {
    let mut request = FinancingRequest::standard();
    request.amount = 12_001;
    request.total_unpaid = 20_000;
    let r = run_with(&request, &Fixtures::standard(), FlowOptions::default());
    expect_prefix(&r.outcome, 8);
    assert!(r.outcome.decision.is_none());
    assert_eq!(r.outcome.pre_tx_digest, r.outcome.final_digest);
}

#[test]
fn mismatched_terms_fail_validation_on_chain() {
    let mut request = FinancingRequest::standard();
    request.payment_terms_days = 30;
    let r = run_with(&request, &Fixtures::standard(), FlowOptions::default());
    expect_prefix(&r.outcome, 8);
    let detail = r.outcome.steps[7].detail.as_deref().unwrap();
    assert!(detail.contains("30 days"), "{detail}");
}

#[test]
fn request_above_unpaid_is_rejected_before_submission() {
    let mut request = FinancingRequest::standard();
    request.amount = 12_500;
    let model = FinanceModel::golden();
    let mut world = World::bootstrap(&WorldConfig::standard()).unwrap();
    let before = world.export_bytes();
    let err = run_financing_sequence(
        &mut world,
        &mut Coordinator::new(),
        &model,
        &request,
        &Fixtures::standard(),
        &FlowOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(
        err,
        FlowError::ValidationFailed(ValidationError::Violation(
            Violation::AmountExceedsUnpaid { .. }
        ))
    ));
    assert_eq!(world.export_bytes(), before);
}

#[test]
fn validation_examples() {
    let world = World::bootstrap(&WorldConfig::standard()).unwrap();
    let keys = world.keys();
    let request = FinancingRequest::standard();
    let mut agreement: SupplyAgreement = Fixtures::standard().agreement;
    agreement.sign(&p("ReginaldRegional"), keys).unwrap();
    assert_eq!(
        validate_request(&agreement, &request, keys),
        Err(ValidationError::NotCountersigned)
    );

    agreement.sign(&p("FarmerFran"), keys).unwrap();
    assert_eq!(validate_request(&agreement, &request, keys), Ok(()));

    let mut other = request.clone();
    other.supplier = p("FarmerTom");
    assert!(matches!(
        validate_request(&agreement, &other, keys),
        Err(ValidationError::Violation(
            Violation::SupplierMismatch { .. }
        ))
    ));

    // tampering with the terms voids both signatures
    let mut tampered = agreement.clone();
    tampered.quantity = 10_000;
    assert_eq!(
        validate_request(&tampered, &request, keys),
        Err(ValidationError::NotCountersigned)
    );
}

#[test]
fn crash_before_step_11_leaves_pre_transaction_state() {
    let clean = run(FlowOptions::default());
    let r = run(FlowOptions {
        fault: Some(FlowFault::Step(11)),
        ..Default::default()
    });
    let o = &r.outcome;
    expect_prefix(o, 11);
    assert!(matches!(o.tx, Some(Outcome::Ignored { .. })));
    assert!(o.settlement.is_none());
    assert_eq!(o.final_digest, o.pre_tx_digest);
    assert_eq!(o.pre_tx_digest, clean.outcome.pre_tx_digest);
    assert_eq!(r.world.locks_held(), 0);
}

#[test]
fn every_fault_ends_in_pre_or_committed_state() {
    let clean = run(FlowOptions::default());
    let committed = clean.world.export_bytes();
    let genesis = World::bootstrap(&WorldConfig::standard())
        .unwrap()
        .total_balance();
    for fault in FlowFault::all() {
        let r = run(FlowOptions {
            fault: Some(fault),
            ..Default::default()
        });
        let o = &r.outcome;
        let end = r.world.export_bytes();
        assert_eq!(o.pre_tx_digest, clean.outcome.pre_tx_digest, "{fault}");
        let is_committed = end == committed;
        assert!(
            is_committed || o.final_digest == o.pre_tx_digest,
            "{fault}:\n{}",
            o.trace()
        );
        assert_eq!(is_committed, fault == FlowFault::Commit, "{fault}");
        assert_eq!(o.settlement.is_some(), is_committed, "{fault}");
        assert_eq!(r.world.locks_held(), 0, "{fault}");
        assert_eq!(r.world.total_balance(), genesis, "{fault}");
        assert_eq!(r.coord.journal().open_count(), 0, "{fault}");
        assert!(o.crash.is_some(), "{fault}");
    }
}

#[test]
fn eric_cannot_reach_the_agreement() {
    let r = run(FlowOptions::default());
    let eric = p("FarmerEric");
    for chain in r.world.chains() {
        for c in chain.contracts().values() {
            let got = r
                .world
                .read_state(chain.id(), &c.address, AGREEMENT_KEY, &eric);
            assert!(matches!(got, Err(LedgerError::PrivacyViolation { .. })));
        }
        assert!(matches!(
            r.world.view_log(chain.id(), &eric),
            Err(LedgerError::PrivacyViolation { .. })
        ));
    }
}

#[test]
fn financier_reads_only_through_the_grant() {
    let r = run(FlowOptions::default());
    let t2t3 = r.world.chain(&"T2T3".into()).unwrap();
    let supply = t2t3
        .contracts()
        .values()
        .find(|c| c.in_group(&p("FarmerFran")))
        .expect("Fran's supply contract");
    assert!(supply.has_grant(&p("FinancierIlze"), AGREEMENT_KEY));
    // the financier is not in the group, so a direct read is refused
    let direct = r.world.read_state(
        t2t3.id(),
        &supply.address,
        AGREEMENT_KEY,
        &p("FinancierIlze"),
    );
    assert!(matches!(direct, Err(LedgerError::PrivacyViolation { .. })));
}

#[test]
fn setup_is_idempotent_across_runs() {
    let model = FinanceModel::golden();
    let mut world = World::bootstrap(&WorldConfig::standard()).unwrap();
    let mut coord = Coordinator::new();
    let request = FinancingRequest::standard();
    let fixtures = Fixtures::standard();
    let opts = FlowOptions::default();
    let first =
        run_financing_sequence(&mut world, &mut coord, &model, &request, &fixtures, &opts).unwrap();
    let second =
        run_financing_sequence(&mut world, &mut coord, &model, &request, &fixtures, &opts).unwrap();
    assert_eq!(second.pre_tx_digest, first.final_digest);
    assert_eq!(
        second.steps[0].detail.as_deref(),
        Some("contract already deployed")
    );
    assert_eq!(
        world
            .chain(&"T3Fin".into())
            .unwrap()
            .balance(&p("FarmerFran")),
        20_000
    );
    let grant_calls = world
        .chain(&"T2T3".into())
        .unwrap()
        .log()
        .iter()
        .filter(|e| {
            serde_json::to_string(&e.body)
                .unwrap()
                .contains("grant_read")
        })
        .count();
    assert_eq!(grant_calls, 1);
}

#[test]
fn identical_inputs_give_identical_exports_and_journals() {
    for fault in [None, Some(FlowFault::Stage), Some(FlowFault::Commit)] {
        let a = run(FlowOptions {
            fault,
            ..Default::default()
        });
        let b = run(FlowOptions {
            fault,
            ..Default::default()
        });
        assert_eq!(a.world.export_bytes(), b.world.export_bytes());
        assert_eq!(a.coord.journal().to_jsonl(), b.coord.journal().to_jsonl());
        assert_eq!(a.outcome, b.outcome);
    }
}
