//! Jamming attack strategies and their return on investment.
//!
//! The attacker routes self-payments of `tx_value` around a cycle through
//! the victim and lets every one of them expire. The locked funds block the
//! victim's channels; payments that would have crossed them are redirected
//! through the attacker, which earns their routing fees. Under HTLC-GP each
//! griefed payment costs the attacker `tgp_{n-1}`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use htlcgp_core::model::{Amount, Channel, ChannelId, ContractId, FeePolicy, Minutes, NetworkGraph, NodeId, PenaltyRate, Side};
use htlcgp_core::penalty::{PathPlan, PenaltyError, PlanParams};
use htlcgp_core::protocol::Protocol;

use crate::flow::max_flow;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AttackError {
    #[error("victim {0} is not in the graph")]
    VictimNotFound(NodeId),
    #[error("attacker {0} is not in the graph or has no channels")]
    AttackerNotFound(NodeId),
    #[error("budget {budget} cannot fund a single payment (needs {needed})")]
    BudgetTooSmall { budget: Amount, needed: Amount },
    #[error("no cycle from {attacker} through {victim}")]
    NoCycleThroughVictim { attacker: NodeId, victim: NodeId },
    #[error("victim {0} needs at least two neighbours")]
    TooFewNeighbors(NodeId),
    #[error("protocol {0} is not supported by the attack model")]
    UnsupportedProtocol(Protocol),
    #[error("transaction value must be positive")]
    ZeroValue,
    #[error(transparent)]
    Penalty(#[from] PenaltyError),
}

/// Return on investment of one attack run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoIResult {
    pub n_tx: u64,
    pub profit_processed: Amount,
    pub total_griefing_penalty: Amount,
    /// msat; negative when penalties exceed routing income.
    pub roi: i64,
    pub log_modulus_roi: f64,
}

/// `sign(x)·log10(|x| + 1)`.
pub fn log_modulus(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    x.signum() * (x.abs() + 1.0).log10()
}

pub fn compute_roi(n_tx: u64, fee_policy: &FeePolicy, tx_value: Amount, total_penalty: Amount) -> RoIResult {
    let profit = Amount::from_msat(n_tx * fee_policy.fee_for(tx_value).msat());
    let roi = profit.msat() as i64 - total_penalty.msat() as i64;
    RoIResult {
        n_tx,
        profit_processed: profit,
        total_griefing_penalty: total_penalty,
        roi,
        log_modulus_roi: log_modulus(roi as f64),
    }
}

/// Everything an attack run needs besides the graph and the victim.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AttackParams {
    pub budget: Amount,
    pub tx_value: Amount,
    pub protocol: Protocol,
    pub gamma: PenaltyRate,
    pub delta: Minutes,
    pub t_base: Minutes,
    pub k: u32,
    /// Fee the attacker charges on every redirected transaction.
    pub attacker_fee: FeePolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackReport {
    pub strategy: u8,
    pub victim: NodeId,
    pub cycle: Vec<NodeId>,
    /// Full-size griefed payments.
    pub payments: u64,
    /// Value of the final, smaller payment that spends the leftover budget.
    pub partial_value: Amount,
    pub budget_spent: Amount,
    /// Max-flow gain from the attacker's presence on the jammed graph.
    pub redirected: Amount,
    pub roi: RoIResult,
}

/// Victim neighbours split into payers (`sources`: no other channel once
/// `exclude` is ignored) and receivers (`sinks`). When either side would be
/// empty, the sorted neighbour list is split in half instead.
pub fn classify_neighbors(graph: &NetworkGraph, victim: &NodeId, exclude: &[NodeId]) -> (Vec<NodeId>, Vec<NodeId>) {
    let neighbors: Vec<NodeId> = graph.neighbors(victim).into_iter().filter(|n| !exclude.contains(n)).collect();
    let (sources, sinks): (Vec<NodeId>, Vec<NodeId>) = neighbors.iter().cloned().partition(|n| {
        graph.neighbors(n).iter().filter(|m| !exclude.contains(m)).count() == 1
    });
    if sources.is_empty() || sinks.is_empty() {
        let half = neighbors.len() / 2;
        return (neighbors[..half].to_vec(), neighbors[half..].to_vec());
    }
    (sources, sinks)
}

/// Intermediary fees for delivering `alpha` along `path`, computed backwards
/// from the payee with each forwarder's own policy.
fn path_fees(graph: &NetworkGraph, path: &[NodeId], alpha: Amount) -> Vec<Amount> {
    let mut fees = vec![Amount::ZERO; path.len() - 2];
    let mut forwarded = alpha;
    for i in (1..path.len() - 1).rev() {
        let fee = graph.fee_policy(&path[i]).copied().unwrap_or_default().fee_for(forwarded);
        fees[i - 1] = fee;
        forwarded += fee;
    }
    fees
}

fn plan_for(graph: &NetworkGraph, path: &[NodeId], alpha: Amount, params: &AttackParams) -> Result<PathPlan, PenaltyError> {
    let gamma = match params.protocol {
        Protocol::Htlc => PenaltyRate::zero(),
        _ => params.gamma.clone(),
    };
    PathPlan::build(
        path.to_vec(),
        &PlanParams {
            alpha,
            fees: path_fees(graph, path, alpha),
            gamma,
            delta: params.delta,
            t_base: params.t_base,
            k: params.k,
            psi: None,
        },
    )
}

/// Budget consumed by one griefed payment.
fn payment_cost(plan: &PathPlan) -> Amount {
    plan.amounts[0] + plan.tgp[plan.hops() - 1]
}

struct Hop {
    channel: ChannelId,
    payer: Side,
}

fn cycle_hops(graph: &NetworkGraph, cycle: &[NodeId]) -> Vec<Hop> {
    cycle
        .windows(2)
        .map(|w| {
            let channel = graph
                .channels()
                .filter(|c| !c.disabled && !c.closed && c.side_of(&w[0]).is_some() && c.peer_of(&w[0]) == Some(&w[1]))
                .max_by(|a, b| {
                    let ra = a.remain(a.side_of(&w[0]).expect("endpoint"));
                    let rb = b.remain(b.side_of(&w[0]).expect("endpoint"));
                    ra.cmp(&rb).then_with(|| b.id.cmp(&a.id))
                })
                .expect("cycle follows existing channels");
            Hop {
                channel: channel.id.clone(),
                payer: channel.side_of(&w[0]).expect("endpoint"),
            }
        })
        .collect()
}

/// How many copies of `plan` fit into the residuals and `budget`.
fn fits(graph: &NetworkGraph, hops: &[Hop], plan: &PathPlan, budget: Amount) -> u64 {
    let mut m = budget.msat() / payment_cost(plan).msat().max(1);
    for (h, hop) in hops.iter().enumerate() {
        let c = graph.channel(&hop.channel).expect("hop channel");
        if !plan.amounts[h].is_zero() {
            m = m.min(c.remain(hop.payer).msat() / plan.amounts[h].msat());
        }
        if !plan.tgp[h].is_zero() {
            m = m.min(c.remain(hop.payer.other()).msat() / plan.tgp[h].msat());
        }
    }
    m
}

fn lock_copies(graph: &mut NetworkGraph, hops: &[Hop], plan: &PathPlan, copies: u64, next_id: &mut u64) {
    if copies == 0 {
        return;
    }
    for (h, hop) in hops.iter().enumerate() {
        for (side, unit) in [(hop.payer, plan.amounts[h]), (hop.payer.other(), plan.tgp[h])] {
            if unit.is_zero() {
                continue;
            }
            let amount = Amount::from_msat(unit.msat() * copies);
            graph
                .apply_lock(&hop.channel, ContractId(*next_id), side, amount)
                .expect("copies fit the residuals");
            *next_id += 1;
        }
    }
}

struct Jam {
    payments: u64,
    partial_value: Amount,
    spent: Amount,
    penalty: Amount,
}

/// Locks as many griefed payments on `cycle` as budget and residuals allow,
/// then one smaller payment sized to whatever remains.
fn jam(graph: &mut NetworkGraph, cycle: &[NodeId], params: &AttackParams) -> Result<Jam, AttackError> {
    if params.tx_value.is_zero() {
        return Err(AttackError::ZeroValue);
    }
    if !matches!(params.protocol, Protocol::Htlc | Protocol::HtlcGp) {
        return Err(AttackError::UnsupportedProtocol(params.protocol));
    }
    let smallest = plan_for(graph, cycle, Amount::from_msat(1), params)?;
    if payment_cost(&smallest) > params.budget {
        return Err(AttackError::BudgetTooSmall {
            budget: params.budget,
            needed: payment_cost(&smallest),
        });
    }
    let hops = cycle_hops(graph, cycle);
    let full = plan_for(graph, cycle, params.tx_value, params)?;
    let n = full.hops();
    let payments = fits(graph, &hops, &full, params.budget);
    let mut next_id = 0;
    lock_copies(graph, &hops, &full, payments, &mut next_id);
    let mut spent = Amount::from_msat(payments * payment_cost(&full).msat());
    let mut penalty = Amount::from_msat(payments * full.tgp[n - 1].msat());
    let left = params.budget.saturating_sub(spent);

    // largest value below tx_value that still fits
    let (mut lo, mut hi) = (0u64, params.tx_value.msat() - 1);
    let mut partial: Option<PathPlan> = None;
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        let plan = plan_for(graph, cycle, Amount::from_msat(mid), params)?;
        if fits(graph, &hops, &plan, left) >= 1 {
            lo = mid;
            partial = Some(plan);
        } else {
            hi = mid - 1;
        }
    }
    let mut partial_value = Amount::ZERO;
    if lo > 0 {
        let plan = match partial {
            Some(p) if p.alpha.msat() == lo => p,
            _ => plan_for(graph, cycle, Amount::from_msat(lo), params)?,
        };
        lock_copies(graph, &hops, &plan, 1, &mut next_id);
        spent += payment_cost(&plan);
        penalty += plan.tgp[n - 1];
        partial_value = plan.alpha;
    }
    Ok(Jam {
        payments,
        partial_value,
        spent,
        penalty,
    })
}

/// Flow between the victim's neighbours that only exists thanks to the
/// attacker, measured on the jammed graph.
fn redirected_flow(jammed: &NetworkGraph, attacker: &NodeId, sources: &[NodeId], sinks: &[NodeId]) -> Amount {
    let with = max_flow(jammed, sources, sinks).value;
    let mut without = jammed.clone();
    without.remove_node(attacker);
    with.saturating_sub(max_flow(&without, sources, sinks).value)
}

fn finish(
    strategy: u8,
    victim: &NodeId,
    cycle: Vec<NodeId>,
    jammed: &NetworkGraph,
    jam: Jam,
    sources: &[NodeId],
    sinks: &[NodeId],
    params: &AttackParams,
) -> AttackReport {
    let redirected = redirected_flow(jammed, &cycle[0], sources, sinks);
    let n_tx = redirected.msat() / params.tx_value.msat();
    let penalty = match params.protocol {
        Protocol::Htlc => Amount::ZERO,
        _ => jam.penalty,
    };
    AttackReport {
        strategy,
        victim: victim.clone(),
        cycle,
        payments: jam.payments,
        partial_value: jam.partial_value,
        budget_spent: jam.spent,
        redirected,
        roi: compute_roi(n_tx, &params.attacker_fee, params.tx_value, penalty),
    }
}

fn fresh_attacker_id(graph: &NetworkGraph) -> NodeId {
    let base = NodeId::new("mallory");
    if !graph.contains_node(&base) {
        return base;
    }
    (1..)
        .map(|i| NodeId::new(format!("mallory-{i}")))
        .find(|n| !graph.contains_node(n))
        .expect("unbounded search")
}

/// Strategy 1: a new attacker opens channels to the victim's busiest source
/// and sink, each funded with `budget` on both sides, and griefs payments
/// on `attacker → source → victim → sink → attacker`.
pub fn attack_strategy_new_channels(graph: &NetworkGraph, victim: &NodeId, params: &AttackParams) -> Result<AttackReport, AttackError> {
    if !graph.contains_node(victim) {
        return Err(AttackError::VictimNotFound(victim.clone()));
    }
    let (sources, sinks) = classify_neighbors(graph, victim, &[]);
    if sources.is_empty() || sinks.is_empty() {
        return Err(AttackError::TooFewNeighbors(victim.clone()));
    }
    let baseline = max_flow(graph, &sources, &sinks);
    let busiest = |candidates: &[NodeId], into_victim: bool| {
        candidates
            .iter()
            .map(|n| {
                let f = if into_victim { baseline.between(n, victim) } else { baseline.between(victim, n) };
                (f, n)
            })
            .max_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(a.1)))
            .map(|(_, n)| n.clone())
            .expect("non-empty")
    };
    let source = busiest(&sources, true);
    let sink = busiest(&sinks, false);

    let attacker = fresh_attacker_id(graph);
    let mut jammed = graph.clone();
    jammed.add_node(attacker.clone(), params.attacker_fee);
    for peer in [&source, &sink] {
        jammed
            .add_channel(Channel::new(
                ChannelId::new(format!("{attacker}-{peer}")),
                attacker.clone(),
                peer.clone(),
                params.budget,
                params.budget,
            ))
            .map_err(|_| AttackError::AttackerNotFound(attacker.clone()))?;
    }
    let cycle = vec![attacker.clone(), source, victim.clone(), sink, attacker];
    let jam = jam(&mut jammed, &cycle, params)?;
    Ok(finish(1, victim, cycle, &jammed, jam, &sources, &sinks, params))
}

/// Shortest path from `from` to `to` avoiding `blocked`, over enabled
/// channels; neighbours are visited in id order so the result is unique.
fn shortest_path(graph: &NetworkGraph, from: &NodeId, to: &NodeId, blocked: &BTreeSet<&NodeId>) -> Option<Vec<NodeId>> {
    let mut prev: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut queue = VecDeque::from([from.clone()]);
    let mut seen: BTreeSet<NodeId> = BTreeSet::from([from.clone()]);
    while let Some(u) = queue.pop_front() {
        if u == *to {
            let mut path = vec![u.clone()];
            let mut cur = u;
            while let Some(p) = prev.get(&cur) {
                path.push(p.clone());
                cur = p.clone();
            }
            path.reverse();
            return Some(path);
        }
        for v in open_neighbors(graph, &u) {
            if !blocked.contains(&v) && seen.insert(v.clone()) {
                prev.insert(v.clone(), u.clone());
                queue.push_back(v);
            }
        }
    }
    None
}

fn open_neighbors(graph: &NetworkGraph, node: &NodeId) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = graph
        .channels()
        .filter(|c| !c.disabled && !c.closed)
        .filter_map(|c| c.peer_of(node).cloned())
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Shortest simple cycle `attacker → h → victim → w → … → attacker` where
/// `h` is a common neighbour. Ties go to the smallest `h`, then `w`.
pub fn find_cycle_through(graph: &NetworkGraph, attacker: &NodeId, victim: &NodeId) -> Option<Vec<NodeId>> {
    let attacker_peers = open_neighbors(graph, attacker);
    let victim_peers = open_neighbors(graph, victim);
    let mut best: Option<Vec<NodeId>> = None;
    for h in attacker_peers.iter().filter(|h| victim_peers.contains(h) && *h != victim) {
        for w in victim_peers.iter().filter(|w| *w != h && *w != attacker) {
            let blocked: BTreeSet<&NodeId> = [victim, h].into_iter().collect();
            let Some(back) = shortest_path(graph, w, attacker, &blocked) else {
                continue;
            };
            let mut cycle = vec![attacker.clone(), h.clone(), victim.clone()];
            cycle.extend(back);
            if best.as_ref().is_none_or(|b| cycle.len() < b.len()) {
                best = Some(cycle);
            }
        }
    }
    best
}

/// Strategy 2: the attacker griefs payments over a cycle of its existing
/// channels that passes through the victim.
pub fn attack_strategy_existing_channels(
    graph: &NetworkGraph,
    attacker: &NodeId,
    victim: &NodeId,
    params: &AttackParams,
) -> Result<AttackReport, AttackError> {
    if !graph.contains_node(victim) {
        return Err(AttackError::VictimNotFound(victim.clone()));
    }
    if !graph.contains_node(attacker) || open_neighbors(graph, attacker).is_empty() {
        return Err(AttackError::AttackerNotFound(attacker.clone()));
    }
    let cycle = find_cycle_through(graph, attacker, victim).ok_or_else(|| AttackError::NoCycleThroughVictim {
        attacker: attacker.clone(),
        victim: victim.clone(),
    })?;
    let (sources, sinks) = classify_neighbors(graph, victim, std::slice::from_ref(attacker));
    let mut jammed = graph.clone();
    let jam = jam(&mut jammed, &cycle, params)?;
    Ok(finish(2, victim, cycle, &jammed, jam, &sources, &sinks, params))
}
