//! Exhaustive griefing scenarios: one withholding node, one honest node
//! upstream of it, and every combination of adversarial behaviours for the
//! remaining path nodes.

use rayon::prelude::*;
use serde::Serialize;

use htlcgp_core::model::{total_funds, Amount, Channel, ChannelId, FeePolicy, Minutes, NetworkGraph, NodeId};
use htlcgp_core::penalty::{PathPlan, PlanParams};
use htlcgp_core::protocol::{
    execute_payment, execute_prepared, Fault, NodeBehavior, PaymentReport, Prepared, Protocol, SimConfig,
};

/// Plan used by the suite: α = 100 000 msat, 1000 msat fee per intermediary,
/// γ = 0.001/min, Δ = 144 min, last locktime 1440 min, k = 4.
pub fn suite_plan(hops: usize) -> PathPlan {
    PathPlan::build(
        (0..=hops).map(|i| NodeId::new(format!("u{i}"))).collect(),
        &PlanParams {
            alpha: Amount::from_msat(100_000),
            fees: vec![Amount::from_msat(1_000); hops - 1],
            gamma: "0.001".parse().expect("valid rate"),
            delta: Minutes::new(144),
            t_base: Minutes::new(1440),
            k: 4,
            psi: None,
        },
    )
    .expect("valid suite plan")
}

/// Line graph over the plan's path with room on both sides of every channel
/// for any lock the plan can request.
pub fn suite_graph(plan: &PathPlan) -> NetworkGraph {
    let side = plan.amounts[0].msat() + plan.tgp.iter().map(|t| t.msat()).max().unwrap_or(0) + 1_000_000;
    let mut g = NetworkGraph::new();
    for node in &plan.path {
        g.add_node(node.clone(), FeePolicy::default());
    }
    for (i, pair) in plan.path.windows(2).enumerate() {
        g.add_channel(Channel::new(
            ChannelId::new(format!("c{i}")),
            pair[0].clone(),
            pair[1].clone(),
            Amount::from_msat(side),
            Amount::from_msat(side),
        ))
        .expect("fresh channel");
    }
    g
}

/// Net amount node `pos` is owed when its outgoing cancellation contract paid
/// out: the penalty it received minus the penalty it passed upstream. `None`
/// when that contract paid nothing.
pub fn prescribed_compensation(report: &PaymentReport, pos: usize) -> Option<i64> {
    let own = report.hops.get(pos)?.cancellation.as_ref()?;
    if own.penalty_paid.is_zero() {
        return None;
    }
    let owed = match pos {
        0 => 0,
        _ => report.hops[pos - 1]
            .cancellation
            .as_ref()
            .map_or(0, |c| c.penalty_paid.msat() as i64),
    };
    Some(own.penalty_paid.msat() as i64 - owed)
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub hops: usize,
    pub behaviors: Vec<NodeBehavior>,
    pub honest: usize,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SuiteSummary {
    pub cases: u64,
    /// Cases where the honest node held an expired contract and was paid.
    pub compensated: u64,
    pub events_checked: u64,
    pub delta_violations: u64,
    pub compensation_violations: u64,
    pub conservation_violations: u64,
    /// First few failing cases, for diagnosis.
    pub examples: Vec<Violation>,
}

impl SuiteSummary {
    pub fn passed(&self) -> bool {
        self.delta_violations == 0 && self.compensation_violations == 0 && self.conservation_violations == 0
    }

    fn merge(mut self, other: SuiteSummary) -> SuiteSummary {
        self.cases += other.cases;
        self.compensated += other.compensated;
        self.events_checked += other.events_checked;
        self.delta_violations += other.delta_violations;
        self.compensation_violations += other.compensation_violations;
        self.conservation_violations += other.conservation_violations;
        self.examples.extend(other.examples);
        self.examples.truncate(MAX_EXAMPLES);
        self
    }
}

const MAX_EXAMPLES: usize = 8;

/// Behaviour vector for case `index` of a path with `hops` hops, griefer at
/// `griefer` and honest node at `honest`; the remaining nodes read `index`
/// as base-4 digits over the adversarial behaviours.
fn behaviors_for(hops: usize, griefer: usize, honest: usize, mut index: usize) -> Vec<NodeBehavior> {
    (0..=hops)
        .map(|pos| {
            if pos == griefer {
                NodeBehavior::WithholdPreimage
            } else if pos == honest {
                NodeBehavior::Honest
            } else {
                let b = NodeBehavior::ADVERSARIAL[index % 4];
                index /= 4;
                b
            }
        })
        .collect()
}

/// Per-length inputs shared by every case.
struct Fixture {
    plan: PathPlan,
    graph: NetworkGraph,
    prepared: Prepared,
    initial: Amount,
    /// Unrounded `tgp_i`, for the compensation formula.
    tgp: Vec<f64>,
}

impl Fixture {
    fn new(hops: usize) -> Self {
        let plan = suite_plan(hops);
        let graph = suite_graph(&plan);
        let tgp = plan.tgp_exact_all().iter().map(htlcgp_core::penalty::rational_to_f64).collect();
        let prepared = Prepared::new(&plan, SimConfig::default().seed).expect("suite onion opens");
        Fixture {
            prepared,
            initial: total_funds(&graph),
            plan,
            graph,
            tgp,
        }
    }
}

fn check_case(fixture: &Fixture, behaviors: Vec<NodeBehavior>, honest: usize) -> SuiteSummary {
    let Fixture {
        plan,
        graph,
        prepared,
        initial,
        tgp,
    } = fixture;
    let initial = *initial;
    let mut summary = SuiteSummary {
        cases: 1,
        ..SuiteSummary::default()
    };
    let mut events = 0u64;
    let mut unbalanced = 0u64;
    let report = execute_prepared(graph, prepared, &behaviors, Protocol::HtlcGp, &SimConfig::default(), |_, g| {
        events += 1;
        if total_funds(g) + g.burned() != initial {
            unbalanced += 1;
        }
    });
    summary.events_checked = events;
    let fail = |summary: &mut SuiteSummary, detail: String| {
        if summary.examples.len() < MAX_EXAMPLES {
            summary.examples.push(Violation {
                hops: plan.hops(),
                behaviors: behaviors.clone(),
                honest,
                detail,
            });
        }
    };
    let report = match report {
        Ok(r) => r,
        Err(e) => {
            summary.delta_violations += 1;
            fail(&mut summary, format!("engine error: {e}"));
            return summary;
        }
    };
    if unbalanced > 0 || report.ledger.imbalance() != 0 {
        summary.conservation_violations += 1;
        fail(&mut summary, format!("{unbalanced} unbalanced events"));
    }
    let delta = report.ledger.delta(&plan.path[honest]);
    if delta < 0 {
        summary.delta_violations += 1;
        fail(&mut summary, format!("honest delta {delta}"));
    }
    if let Some(owed) = prescribed_compensation(&report, honest) {
        summary.compensated += 1;
        // downstream of an expired contract the net gain is γ·α_j·t_j
        // when it also paid upstream, the net gain is tgp_j − tgp_{j-1} = γ·α_j·t_j
        let paid_upstream = honest > 0
            && report.hops[honest - 1]
                .cancellation
                .as_ref()
                .is_some_and(|c| !c.penalty_paid.is_zero());
        let expected = match (honest, paid_upstream) {
            (0, _) | (_, false) => tgp[honest],
            (j, true) => tgp[j] - tgp[j - 1],
        };
        let off_formula = (owed as f64 - expected).abs() > 1.0;
        if delta != owed || off_formula {
            summary.compensation_violations += 1;
            fail(&mut summary, format!("delta {delta}, prescribed {owed}, formula {expected:.3}"));
        }
    }
    summary
}

/// Runs every case for path lengths `2..=max_hops`.
pub fn run_griefing_suite(max_hops: usize) -> SuiteSummary {
    let mut jobs = Vec::new();
    for hops in 2..=max_hops {
        for griefer in 1..=hops {
            for honest in 0..griefer {
                jobs.push((hops, griefer, honest));
            }
        }
    }
    let fixtures: Vec<Fixture> = (0..=max_hops).map(|h| Fixture::new(h.max(1))).collect();
    jobs.into_par_iter()
        .flat_map_iter(|(hops, griefer, honest)| {
            let combos = 4usize.pow(hops as u32 - 1);
            (0..combos).map(move |i| (hops, griefer, honest, i))
        })
        .map(|(hops, griefer, honest, i)| {
            check_case(&fixtures[hops], behaviors_for(hops, griefer, honest, i), honest)
        })
        .reduce(SuiteSummary::default, SuiteSummary::merge)
}

/// Victim's net delta under HTLC1.0 and HTLC-GP when the payee's upstream
/// neighbour underpays and the payee refuses to settle off-chain.
#[derive(Clone, Debug, Serialize)]
pub struct ReverseGriefOutcome {
    pub victim: NodeId,
    pub htlc1_delta: i64,
    pub htlcgp_delta: i64,
}

pub fn reverse_griefing_differential(hops: usize) -> ReverseGriefOutcome {
    let plan = suite_plan(hops);
    let graph = suite_graph(&plan);
    let mut behaviors = vec![NodeBehavior::Honest; hops + 1];
    behaviors[hops - 1] = NodeBehavior::ReverseGrief;
    let config = SimConfig {
        faults: vec![Fault::AmountShortfall {
            hop: hops - 1,
            msat: 500,
        }],
        ..SimConfig::default()
    };
    let run = |p| execute_payment(&graph, &plan, &behaviors, p, &config).expect("scenario runs");
    let victim = plan.receiver().clone();
    ReverseGriefOutcome {
        htlc1_delta: run(Protocol::Htlc1).ledger.delta(&victim),
        htlcgp_delta: run(Protocol::HtlcGp).ledger.delta(&victim),
        victim,
    }
}
