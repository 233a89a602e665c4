mod common;

use common::*;
use htlcgp_core::contract::ContractStatus;
use htlcgp_core::model::{total_funds, Amount, Minutes, NodeId};
use htlcgp_core::protocol::*;

fn honest(n: usize) -> Vec<NodeBehavior> {
    vec![NodeBehavior::Honest; n + 1]
}

fn run(plan: &htlcgp_core::penalty::PathPlan, behaviors: &[NodeBehavior], protocol: Protocol) -> PaymentReport {
    execute_payment(&roomy_graph(plan), plan, behaviors, protocol, &SimConfig::default()).unwrap()
}

#[test]
fn honest_gp_payment_pays_fees_and_returns_penalties() {
    let p = plan(3, &PlanSpec::default());
    let report = run(&p, &honest(3), Protocol::HtlcGp);
    assert_eq!(report.outcome, PaymentOutcome::Success);
    let d = |i: usize| report.ledger.delta(&p.path[i]);
    assert_eq!(d(0), -(p.amounts[0].msat() as i64));
    assert_eq!(d(1), 1_000);
    assert_eq!(d(2), 1_000);
    assert_eq!(d(3), 100_000);
    assert_eq!(report.ledger.imbalance(), 0);
    for hop in &report.hops {
        assert_eq!(hop.cancellation.as_ref().unwrap().status, ContractStatus::SettledPayment);
        assert_eq!(hop.payment.as_ref().unwrap().status, ContractStatus::SettledPayment);
    }
    assert!(report.ledger.compensation.is_empty());
}

#[test]
fn griefing_payee_funds_every_upstream_node() {
    let p = plan(4, &PlanSpec::default());
    let mut b = honest(4);
    b[4] = NodeBehavior::WithholdPreimage;
    let report = run(&p, &b, Protocol::HtlcGp);
    assert_eq!(report.outcome, PaymentOutcome::Griefed { position: 4 });
    assert_eq!(report.ledger.delta(&p.path[4]), -(p.tgp[3].msat() as i64));
    // The sender keeps γ(α_0+ψ)t_0, everyone else γα_i t_i, within rounding.
    assert_eq!(report.ledger.delta(&p.path[0]), p.tgp[0].msat() as i64);
    for i in 1..4 {
        let exact = p.gamma.as_rational() * p.amounts[i].to_rational() * p.timelocks[i].to_rational();
        let got = report.ledger.delta(&p.path[i]);
        let expect = Amount::round_half_up(&exact).msat() as i64;
        assert!((got - expect).abs() <= 1, "node {i}: {got} vs {expect}");
    }
    assert_eq!(report.ledger.imbalance(), 0);
}

#[test]
fn cancellation_unwinds_to_zero() {
    let p = plan(3, &PlanSpec::default());
    let config = SimConfig {
        faults: vec![Fault::AmountShortfall { hop: 2, msat: 10 }],
        ..SimConfig::default()
    };
    let report = execute_payment(&roomy_graph(&p), &p, &honest(3), Protocol::HtlcGp, &config).unwrap();
    assert_eq!(report.outcome, PaymentOutcome::Cancelled);
    assert!(report.ledger.deltas.values().all(|d| *d == 0));
}

#[test]
fn refused_cancellation_contract_aborts_without_losses() {
    let p = plan(4, &PlanSpec::default());
    let mut b = honest(4);
    b[1] = NodeBehavior::RefuseSign;
    let report = run(&p, &b, Protocol::HtlcGp);
    assert_eq!(report.outcome, PaymentOutcome::Aborted { phase: Phase::Round1, hop: 1 });
    assert!(report.ledger.deltas.values().all(|d| *d == 0));
    assert!(report.hops[0].cancellation.is_none());
    assert!(report.hops[3].cancellation.is_some());
}

#[test]
fn missing_payment_contract_triggers_r_after_wait() {
    let p = plan(3, &PlanSpec::default());
    let mut b = honest(3);
    b[2] = NodeBehavior::RefuseForward;
    let report = run(&p, &b, Protocol::HtlcGp);
    assert_eq!(report.outcome, PaymentOutcome::Aborted { phase: Phase::Round2, hop: 2 });
    let decide = report
        .trace
        .iter()
        .find(|e| e.action.to_string() == "decide:r")
        .expect("payee cancels");
    // C_{n-1} forms one latency after the request; δ = t_{n-1}/2.
    assert_eq!(decide.time_min, 1 + p.timelocks[2].get() / 2);
    assert!(report.ledger.deltas.values().all(|d| *d == 0));
}

#[test]
fn inflated_penalty_request_is_refused() {
    let p = plan(3, &PlanSpec::default());
    for hop in 0..3 {
        let config = SimConfig {
            faults: vec![Fault::PenaltyInflation { hop, msat: 2 }],
            ..SimConfig::default()
        };
        let report = execute_payment(&roomy_graph(&p), &p, &honest(3), Protocol::HtlcGp, &config).unwrap();
        if hop == 2 {
            // The payee is the requester on the last hop and U_2 checks it.
            assert_eq!(report.outcome, PaymentOutcome::Aborted { phase: Phase::Round1, hop: 2 });
        } else {
            assert_eq!(report.outcome, PaymentOutcome::Aborted { phase: Phase::Round1, hop });
        }
    }
}

#[test]
fn receiver_without_penalty_residual_aborts() {
    let p = plan(2, &PlanSpec::default());
    let mut g = roomy_graph(&p);
    let c = g.channel_mut(&htlcgp_core::model::ChannelId::new("c1")).unwrap();
    c.remain_ba = Amount::from_msat(p.tgp[1].msat() - 1);
    let report = execute_payment(&g, &p, &honest(2), Protocol::HtlcGp, &SimConfig::default()).unwrap();
    assert_eq!(report.outcome, PaymentOutcome::Aborted { phase: Phase::Round1, hop: 1 });
}

#[test]
fn infeasible_payment_direction_is_an_error() {
    let p = plan(2, &PlanSpec::default());
    let g = line_graph(&p, 1_000);
    assert!(matches!(
        execute_payment(&g, &p, &honest(2), Protocol::HtlcGp, &SimConfig::default()),
        Err(ProtocolError::PlanInfeasible { hop: 0, .. })
    ));
}

#[test]
fn htlc_griefing_costs_the_attacker_nothing() {
    let p = plan(3, &PlanSpec::default());
    let mut b = honest(3);
    b[3] = NodeBehavior::WithholdPreimage;
    let report = run(&p, &b, Protocol::Htlc);
    assert_eq!(report.outcome, PaymentOutcome::Griefed { position: 3 });
    assert_eq!(report.ledger.delta(&p.path[3]), 0);
    assert!(report.ledger.deltas.values().all(|d| *d == 0));
    // Every hop stays locked at least until the griefed hop expires.
    for (i, hop) in report.hops.iter().enumerate() {
        let settled = hop.payment.as_ref().unwrap().settled_at.unwrap();
        assert!(settled >= p.timelocks[2], "hop {i} released at {settled}");
        assert!(report.ledger.lockup[&hop.channel] > Minutes::ZERO);
    }
}

#[test]
fn htlc1_reverse_griefing_takes_the_victims_deposit() {
    let p = plan(3, &PlanSpec::default());
    let mut b = honest(3);
    b[2] = NodeBehavior::ReverseGrief;
    let config = SimConfig {
        faults: vec![Fault::AmountShortfall { hop: 2, msat: 500 }],
        ..SimConfig::default()
    };
    let g = roomy_graph(&p);
    let htlc1 = execute_payment(&g, &p, &b, Protocol::Htlc1, &config).unwrap();
    let bob = &p.path[3];
    assert_eq!(htlc1.ledger.delta(bob), -(p.tgp[2].msat() as i64));
    let gp = execute_payment(&g, &p, &b, Protocol::HtlcGp, &config).unwrap();
    assert_eq!(gp.ledger.delta(bob), 0);
    assert_eq!(gp.outcome, PaymentOutcome::Cancelled);
}

#[test]
fn htlc1_honest_success_and_grief() {
    let p = plan(3, &PlanSpec::default());
    let ok = run(&p, &honest(3), Protocol::Htlc1);
    assert_eq!(ok.outcome, PaymentOutcome::Success);
    assert_eq!(ok.ledger.delta(&p.path[3]), 100_000);
    let mut b = honest(3);
    b[3] = NodeBehavior::WithholdPreimage;
    let grief = run(&p, &b, Protocol::Htlc1);
    assert_eq!(grief.ledger.delta(&p.path[3]), -(p.tgp[2].msat() as i64));
    assert!(grief.ledger.delta(&p.path[0]) >= 0);
}

#[test]
fn conservation_after_every_event() {
    let p = plan(4, &PlanSpec::default());
    let g = roomy_graph(&p);
    let initial = total_funds(&g);
    let mut b = honest(4);
    b[3] = NodeBehavior::WithholdPreimage;
    b[1] = NodeBehavior::ReverseGrief;
    let config = SimConfig {
        onchain_fee: Amount::from_msat(50),
        ..SimConfig::default()
    };
    let mut events = 0;
    execute_payment_observed(&g, &p, &b, Protocol::HtlcGp, &config, |_, graph| {
        events += 1;
        assert_eq!(total_funds(graph) + graph.burned(), initial);
    })
    .unwrap();
    assert!(events > 10);
}

#[test]
fn trace_serializes_as_json_lines() {
    let p = plan(2, &PlanSpec::default());
    let report = run(&p, &honest(2), Protocol::HtlcGp);
    let line = serde_json::to_string(&report.trace[0]).unwrap();
    for key in ["time_min", "phase", "actor", "action", "channel", "contract_kind", "amount_msat"] {
        assert!(line.contains(key), "{line}");
    }
    let c = serde_json::to_string(&report.contract_events[0]).unwrap();
    for key in ["time_min", "channel", "kind", "transition", "credited_party", "amount_msat"] {
        assert!(c.contains(key), "{c}");
    }
}

#[test]
fn identical_inputs_give_identical_traces() {
    let p = plan(5, &PlanSpec::default());
    let mut b = honest(5);
    b[4] = NodeBehavior::WithholdPreimage;
    let config = SimConfig {
        seed: 17,
        ..SimConfig::default()
    };
    let g = roomy_graph(&p);
    let a = execute_payment(&g, &p, &b, Protocol::HtlcGp, &config).unwrap();
    let c = execute_payment(&g, &p, &b, Protocol::HtlcGp, &config).unwrap();
    assert_eq!(a, c);
}

#[test]
fn reused_preparation_matches_fresh_runs() {
    let p = plan(4, &PlanSpec::default());
    let config = SimConfig {
        seed: 3,
        ..SimConfig::default()
    };
    let prepared = Prepared::new(&p, config.seed).unwrap();
    let g = roomy_graph(&p);
    let behaviors = [NodeBehavior::Honest, NodeBehavior::WithholdPreimage, NodeBehavior::RefuseSign];
    for protocol in [Protocol::Htlc, Protocol::Htlc1, Protocol::HtlcGp] {
        for (pos, &behavior) in behaviors.iter().enumerate() {
            let mut b = honest(4);
            b[pos + 1] = behavior;
            let fresh = execute_payment(&g, &p, &b, protocol, &config).unwrap();
            let reused = execute_prepared(&g, &prepared, &b, protocol, &config, |_, _| {}).unwrap();
            assert_eq!(fresh, reused);
        }
    }
}

#[test]
fn scenario_file_runs() {
    let s: Scenario = serde_json::from_str(
        r#"{"protocol": "htlc-gp", "path": ["alice", "bob"], "alpha_msat": 1, "gamma": "0.001",
            "delta_min": 144, "t_base_min": 4320, "k": 0, "behaviors": {"bob": "withhold_preimage"}}"#,
    )
    .unwrap();
    let prep = s.prepare().unwrap();
    assert_eq!(prep.plan.timelocks[0], Minutes::days(3));
    let report = execute_payment(&prep.graph, &prep.plan, &prep.behaviors, s.protocol, &prep.config).unwrap();
    assert_eq!(report.ledger.delta(&NodeId::new("alice")), 4);
    assert_eq!(report.ledger.delta(&NodeId::new("bob")), -4);
}
