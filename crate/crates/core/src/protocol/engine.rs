use std::collections::BTreeMap;

use num_rational::BigRational;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use super::onion::{preprocess, HopPayload, OnionError, Rest};
use super::types::*;
use crate::contract::{
    new_contract, sample_preimage_pair, Contract, ContractError, ContractKind, ContractTerms, Digest, Preimage, Witness,
};
use crate::model::{Amount, ChannelId, ContractId, Minutes, ModelError, NetworkGraph, NodeId, Payout, Side};
use crate::penalty::{verify_incoming_tgp, verify_receiver_tgp, PathPlan};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("no channel between {0} and {1}")]
    MissingChannel(NodeId, NodeId),
    #[error("hop {hop} cannot carry {needed}: only {available} spendable")]
    PlanInfeasible { hop: usize, needed: Amount, available: Amount },
    #[error("expected {expected} behaviors, got {got}")]
    BehaviorCount { expected: usize, got: usize },
    #[error("message latency {latency} must be below the confirmation bound {delta}")]
    LatencyTooLarge { latency: Minutes, delta: Minutes },
    #[error("receiver wait {wait} exceeds the last locktime {locktime}")]
    ReceiverWaitTooLong { wait: Minutes, locktime: Minutes },
    #[error("onion: {0}")]
    Onion(#[from] OnionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Contract(#[from] ContractError),
}

/// Runs one payment over `plan.path` and reports the outcome and ledger.
pub fn execute_payment(
    graph: &NetworkGraph,
    plan: &PathPlan,
    behaviors: &[NodeBehavior],
    protocol: Protocol,
    config: &SimConfig,
) -> Result<PaymentReport, ProtocolError> {
    execute_payment_observed(graph, plan, behaviors, protocol, config, |_, _| {})
}

/// As [`execute_payment`], calling `observer` with the graph state after
/// every trace event.
pub fn execute_payment_observed<F>(
    graph: &NetworkGraph,
    plan: &PathPlan,
    behaviors: &[NodeBehavior],
    protocol: Protocol,
    config: &SimConfig,
    observer: F,
) -> Result<PaymentReport, ProtocolError>
where
    F: FnMut(&TraceEvent, &NetworkGraph),
{
    let prepared = Prepared::new(plan, config.seed)?;
    execute_prepared(graph, &prepared, behaviors, protocol, config, observer)
}

/// Secrets, onion and opened layers for one plan and seed.
///
/// None of it depends on node behaviour, so callers replaying the same
/// payment under many behaviour profiles build it once.
#[derive(Debug, Clone)]
pub struct Prepared {
    plan: PathPlan,
    seed: u64,
    /// Secrets the baselines use: the first pair drawn from the seed.
    baseline: Secrets,
    /// Secrets sampled by the payee during preprocessing.
    gp: Secrets,
    /// Payload each node `1..=n` read from its layer.
    payloads: Vec<HopPayload>,
    phi: BigRational,
    onion_hashes: (Digest, Digest),
}

#[derive(Debug, Clone, Copy)]
struct Secrets {
    x: Preimage,
    r: Preimage,
    h: Digest,
    y: Digest,
}

impl Secrets {
    fn new(x: Preimage, r: Preimage) -> Self {
        Secrets {
            x,
            r,
            h: x.digest(),
            y: r.digest(),
        }
    }
}

impl Prepared {
    pub fn new(plan: &PathPlan, seed: u64) -> Result<Self, ProtocolError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (bx, br) = sample_preimage_pair(&mut rng);
        let pre = preprocess(plan, &mut rng);
        // Each node opens its layer as the onion travels to the payee.
        let n = plan.hops();
        let mut payloads = Vec::with_capacity(n);
        let mut packet = pre.onion;
        let mut phi = None;
        for i in 1..=n {
            let peeled = packet.peel(pre.keys[i].secret)?;
            payloads.push(peeled.payload);
            match peeled.rest {
                Rest::Forward(next) => packet = next,
                Rest::Final(f) => {
                    phi = Some(f);
                    break;
                }
            }
        }
        let phi = phi.ok_or_else(|| OnionError::Malformed("payee layer missing".into()))?;
        if payloads.len() != n {
            return Err(OnionError::Malformed("payee layer reached early".into()).into());
        }
        Ok(Prepared {
            plan: plan.clone(),
            seed,
            baseline: Secrets::new(bx, br),
            gp: Secrets::new(pre.receiver.x, pre.receiver.r),
            payloads,
            phi,
            onion_hashes: (pre.payment_hash, pre.cancellation_hash),
        })
    }

    pub fn plan(&self) -> &PathPlan {
        &self.plan
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Runs the payment described by `prepared`. `config.seed` must match the
/// seed the preparation used.
pub fn execute_prepared<F>(
    graph: &NetworkGraph,
    prepared: &Prepared,
    behaviors: &[NodeBehavior],
    protocol: Protocol,
    config: &SimConfig,
    observer: F,
) -> Result<PaymentReport, ProtocolError>
where
    F: FnMut(&TraceEvent, &NetworkGraph),
{
    assert_eq!(prepared.seed, config.seed, "prepared with a different seed");
    let plan = &prepared.plan;
    let n = plan.hops();
    if behaviors.len() != n + 1 {
        return Err(ProtocolError::BehaviorCount {
            expected: n + 1,
            got: behaviors.len(),
        });
    }
    if config.latency >= plan.delta {
        return Err(ProtocolError::LatencyTooLarge {
            latency: config.latency,
            delta: plan.delta,
        });
    }
    let last_locktime = plan.timelocks[n - 1];
    let wait = config.receiver_wait.unwrap_or(Minutes::new(last_locktime.get() / 2));
    if wait > last_locktime {
        return Err(ProtocolError::ReceiverWaitTooLong {
            wait,
            locktime: last_locktime,
        });
    }
    let mut hops = Vec::with_capacity(n);
    for hop in 0..n {
        let (u, v) = (&plan.path[hop], &plan.path[hop + 1]);
        let channel = graph
            .channel_between(u, v)
            .ok_or_else(|| ProtocolError::MissingChannel(u.clone(), v.clone()))?;
        let payer_side = channel.side_of(u).expect("endpoint of its channel");
        let available = channel.remain(payer_side);
        if available < plan.amounts[hop] {
            return Err(ProtocolError::PlanInfeasible {
                hop,
                needed: plan.amounts[hop],
                available,
            });
        }
        hops.push(HopState {
            channel: channel.id.clone(),
            payer_side,
            cancel: None,
            payment: None,
        });
    }

    let mut run = Run {
        protocol,
        plan,
        prepared,
        behaviors,
        config,
        wait,
        graph: graph.clone(),
        hops,
        secrets: prepared.baseline,
        next_id: 0,
        trace: Vec::new(),
        contract_events: Vec::new(),
        compensation: BTreeMap::new(),
        griefer: None,
        abort: None,
        completed: false,
        clock: Minutes::ZERO,
        observer,
    };
    match protocol {
        Protocol::HtlcGp => run.run_gp()?,
        Protocol::Htlc | Protocol::Htlc1 => run.run_baseline()?,
    }
    Ok(run.finish(graph))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Cancel,
    Payment,
}

struct Live {
    contract: Contract,
    formed_at: Minutes,
    settled_at: Option<Minutes>,
    penalty_paid: Amount,
    on_chain: bool,
}

struct HopState {
    channel: ChannelId,
    payer_side: Side,
    cancel: Option<Live>,
    payment: Option<Live>,
}

impl HopState {
    fn slot(&self, slot: Slot) -> &Option<Live> {
        match slot {
            Slot::Cancel => &self.cancel,
            Slot::Payment => &self.payment,
        }
    }

    fn slot_mut(&mut self, slot: Slot) -> &mut Option<Live> {
        match slot {
            Slot::Cancel => &mut self.cancel,
            Slot::Payment => &mut self.payment,
        }
    }

    fn locktime(&self) -> Option<Minutes> {
        self.cancel
            .as_ref()
            .or(self.payment.as_ref())
            .map(|l| l.contract.terms.locktime)
    }
}

/// What the node acting on a hop can settle it with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Knowledge {
    Preimage(Secret),
    /// It has been paid a penalty and compensates upstream.
    Compensation,
    /// Baselines: no preimage, ask to fail the contract back.
    Cancel,
}

#[derive(Clone, Copy, Debug)]
enum Resolution {
    Preimage(Secret),
    Timeout,
    Terminate { compensate: bool },
}

#[derive(Clone, Copy, Debug)]
enum Mode {
    OffChain,
    OnChain { by: usize },
}

struct Run<'a, F> {
    protocol: Protocol,
    plan: &'a PathPlan,
    prepared: &'a Prepared,
    behaviors: &'a [NodeBehavior],
    config: &'a SimConfig,
    wait: Minutes,
    graph: NetworkGraph,
    hops: Vec<HopState>,
    secrets: Secrets,
    next_id: u64,
    trace: Vec<TraceEvent>,
    contract_events: Vec<ContractEvent>,
    compensation: BTreeMap<NodeId, Amount>,
    griefer: Option<usize>,
    abort: Option<(Phase, usize)>,
    /// Payee released `x`.
    completed: bool,
    clock: Minutes,
    observer: F,
}

type Check = Result<(), &'static str>;

fn require(cond: bool, reason: &'static str) -> Check {
    if cond {
        Ok(())
    } else {
        Err(reason)
    }
}

impl<F: FnMut(&TraceEvent, &NetworkGraph)> Run<'_, F> {
    fn node(&self, pos: usize) -> &NodeId {
        &self.plan.path[pos]
    }

    fn behavior(&self, pos: usize) -> NodeBehavior {
        self.behaviors[pos]
    }

    fn payment_hash(&self) -> Digest {
        self.secrets.h
    }

    fn cancellation_hash(&self) -> Digest {
        self.secrets.y
    }

    #[allow(clippy::too_many_arguments)]
    fn emit(
        &mut self,
        time: Minutes,
        phase: Phase,
        actor: usize,
        action: Action,
        hop: Option<usize>,
        kind: Option<ContractKind>,
        amount: Option<Amount>,
    ) {
        self.clock = self.clock.max(time);
        let event = TraceEvent {
            time_min: time.get(),
            phase,
            actor: self.node(actor).clone(),
            action,
            channel: hop.map(|h| self.hops[h].channel.clone()),
            contract_kind: kind,
            amount_msat: amount.map(Amount::msat),
        };
        (self.observer)(&event, &self.graph);
        self.trace.push(event);
    }

    fn abort(&mut self, time: Minutes, phase: Phase, actor: usize, hop: usize, reason: &'static str) {
        self.emit(time, phase, actor, Action::Abort(reason), Some(hop), None, None);
        self.abort = Some((phase, hop));
    }

    fn remain(&self, hop: usize, pos: usize) -> Amount {
        let state = &self.hops[hop];
        let side = if pos == hop { state.payer_side } else { state.payer_side.other() };
        self.graph.channel(&state.channel).expect("hop channel").remain(side)
    }

    /// Proposes and locks a contract on `hop`. The offerer is the payer for
    /// payment kinds and the downstream node for cancellations.
    #[allow(clippy::too_many_arguments)]
    fn form(
        &mut self,
        hop: usize,
        slot: Slot,
        kind: ContractKind,
        amount: Amount,
        deposit: Amount,
        locktime: Minutes,
        now: Minutes,
        phase: Phase,
    ) -> Check {
        let (offerer, counterparty) = match slot {
            Slot::Cancel => (hop + 1, hop),
            Slot::Payment => (hop, hop + 1),
        };
        let id = ContractId(self.next_id);
        let terms = ContractTerms {
            kind,
            channel: self.hops[hop].channel.clone(),
            offerer: self.node(offerer).clone(),
            counterparty: self.node(counterparty).clone(),
            amount,
            penalty: deposit,
            payment_hash: self.payment_hash(),
            cancellation_hash: (kind != ContractKind::Htlc && kind != ContractKind::Htlc1)
                .then(|| self.cancellation_hash()),
            locktime,
        };
        let mut contract = new_contract(id, terms, now).map_err(|_| "contract_terms")?;
        require(self.remain(hop, offerer) >= amount, "offerer_residual")?;
        require(self.remain(hop, counterparty) >= deposit, "counterparty_residual")?;
        self.next_id += 1;
        let channel = self.hops[hop].channel.clone();
        let payer_side = self.hops[hop].payer_side;
        let side_of = |pos: usize| if pos == hop { payer_side } else { payer_side.other() };
        self.graph
            .apply_lock(&channel, id, side_of(offerer), amount)
            .expect("residual checked");
        if !deposit.is_zero() {
            self.graph
                .apply_lock(&channel, id, side_of(counterparty), deposit)
                .expect("residual checked");
        }
        contract.accept().expect("fresh contract");
        let total = contract.locked_total();
        *self.hops[hop].slot_mut(slot) = Some(Live {
            contract,
            formed_at: now,
            settled_at: None,
            penalty_paid: Amount::ZERO,
            on_chain: false,
        });
        self.contract_events.push(ContractEvent {
            time_min: now.get(),
            channel,
            kind,
            transition: crate::contract::ContractStatus::Accepted,
            credited_party: None,
            amount_msat: total.msat(),
        });
        self.emit(now, phase, counterparty, Action::Accept, Some(hop), Some(kind), Some(total));
        Ok(())
    }

    fn witness(&self, contract: &Contract, resolution: Resolution) -> Witness {
        match resolution {
            Resolution::Preimage(Secret::X) => Witness::PreimageX(self.secrets.x),
            Resolution::Preimage(Secret::R) => Witness::PreimageR(self.secrets.r),
            Resolution::Timeout => Witness::TimeoutClaim,
            Resolution::Terminate { compensate } => Witness::MutualTermination {
                compensation: match (compensate, contract.kind()) {
                    (true, ContractKind::GpCancellation) => contract.terms.amount,
                    (true, ContractKind::Htlc1) => contract.terms.penalty,
                    _ => Amount::ZERO,
                },
            },
        }
    }

    /// Settles every live contract on `hop` the same way.
    fn settle_hop(&mut self, hop: usize, resolution: Resolution, now: Minutes, mode: Mode) -> Result<Amount, ProtocolError> {
        let mut fee_due = match mode {
            Mode::OnChain { .. } => self.config.onchain_fee,
            Mode::OffChain => Amount::ZERO,
        };
        let payer_side = self.hops[hop].payer_side;
        let channel = self.hops[hop].channel.clone();
        let mut settled = Amount::ZERO;
        for slot in [Slot::Cancel, Slot::Payment] {
            let Some(live) = self.hops[hop].slot(slot) else { continue };
            if live.contract.status.is_terminal() {
                continue;
            }
            let witness = self.witness(&live.contract, resolution);
            let live = self.hops[hop].slot_mut(slot).as_mut().expect("checked above");
            let outcome = live.contract.resolve(&witness, now)?;
            let kind = live.contract.kind();
            let (offerer, counterparty) = match slot {
                Slot::Cancel => (hop + 1, hop),
                Slot::Payment => (hop, hop + 1),
            };
            let side_of = |pos: usize| if pos == hop { payer_side } else { payer_side.other() };
            let mut credits = [(offerer, outcome.to_offerer), (counterparty, outcome.to_counterparty)];
            let mut burned = Amount::ZERO;
            if let Mode::OnChain { by } = mode {
                for (pos, credit) in credits.iter_mut() {
                    if *pos == by && !fee_due.is_zero() {
                        let fee = fee_due.min(*credit);
                        *credit = credit.checked_sub(fee).expect("fee within credit");
                        fee_due = fee_due.checked_sub(fee).expect("fee within due");
                        burned += fee;
                    }
                }
            }
            let mut payout = Payout {
                burned,
                ..Payout::default()
            };
            for (pos, credit) in credits {
                payout.credit(side_of(pos), credit);
            }
            self.graph.settle_lock(&channel, outcome.contract, &payout)?;
            live.settled_at = Some(now);
            live.penalty_paid = outcome.penalty;
            live.on_chain = matches!(mode, Mode::OnChain { .. });
            let status = outcome.status;
            if !outcome.penalty.is_zero() {
                let recipient = if kind == ContractKind::GpCancellation { counterparty } else { offerer };
                let node = self.plan.path[recipient].clone();
                *self.compensation.entry(node).or_default() += outcome.penalty;
            }
            let mut credited_any = false;
            for (pos, credit) in credits {
                if !credit.is_zero() {
                    credited_any = true;
                    self.contract_events.push(ContractEvent {
                        time_min: now.get(),
                        channel: channel.clone(),
                        kind,
                        transition: status,
                        credited_party: Some(self.plan.path[pos].clone()),
                        amount_msat: credit.msat(),
                    });
                }
            }
            if !credited_any {
                self.contract_events.push(ContractEvent {
                    time_min: now.get(),
                    channel: channel.clone(),
                    kind,
                    transition: status,
                    credited_party: None,
                    amount_msat: 0,
                });
            }
            settled += outcome.total();
        }
        if matches!(mode, Mode::OnChain { .. }) {
            self.graph.channel_mut(&channel).expect("hop channel").closed = true;
        }
        Ok(settled)
    }

    fn emit_settlement(&mut self, now: Minutes, actor: usize, hop: usize, action: Action, amount: Amount) {
        self.emit(now, Phase::Release, actor, action, Some(hop), None, Some(amount));
    }

    /// Locktime check shared by every forwarding step.
    fn not_near_expiry(&self, now: Minutes, locktime: Minutes) -> bool {
        now + self.plan.delta < locktime
    }

    fn run_gp(&mut self) -> Result<(), ProtocolError> {
        let plan = self.plan;
        let prepared = self.prepared;
        let n = plan.hops();
        let l = self.config.latency;
        let delta = plan.delta;
        self.secrets = prepared.gp;
        let payloads = &prepared.payloads;
        let phi = &prepared.phi;
        let (h, y) = prepared.onion_hashes;
        let hashes_ok = |z: &HopPayload| z.payment_hash == h && z.cancellation_hash == y;

        let mut now = Minutes::ZERO;
        let z_n = &payloads[n - 1];
        let receiver_check = require(hashes_ok(&z_n), "hash_mismatch")
            .and(require(z_n.timelock >= now + delta, "timelock_too_close"))
            .and(require(z_n.amount == plan.alpha, "amount_mismatch"))
            .and(require(
                verify_receiver_tgp(phi, plan.alpha, z_n.timelock, &plan.gamma, z_n.tgp),
                "penalty_mismatch",
            ))
            .and(require(self.remain(n - 1, n) >= z_n.tgp, "insufficient_residual"));
        if let Err(reason) = receiver_check {
            self.abort(now, Phase::Round1, n, n - 1, reason);
            return Ok(());
        }

        // Round 1: cancellation contracts from the payee back to the sender.
        let mut t_form = None;
        for hop in (0..n).rev() {
            let (requester, responder) = (hop + 1, hop);
            let z_req = &payloads[requester - 1];
            let (t_req, tgp_req) = (z_req.timelock, z_req.tgp + self.config.inflation(hop));
            self.emit(
                now,
                Phase::Round1,
                requester,
                Action::Request,
                Some(hop),
                Some(ContractKind::GpCancellation),
                Some(tgp_req),
            );
            now = now + l;
            if self.behavior(responder) == NodeBehavior::RefuseSign {
                self.emit(now, Phase::Round1, responder, Action::Refuse, Some(hop), Some(ContractKind::GpCancellation), None);
                self.abort = Some((Phase::Round1, hop));
                break;
            }
            let check = if responder == 0 {
                require(t_req == plan.timelocks[0], "timelock_mismatch")
                    .and(require(tgp_req == plan.tgp[0], "penalty_mismatch"))
                    .and(require(self.remain(0, 0) >= plan.amounts[0], "insufficient_residual"))
            } else {
                let z = &payloads[responder - 1];
                require(hashes_ok(z), "hash_mismatch")
                    .and(require(t_req + delta <= z.timelock, "timelock_gap"))
                    .and(require(
                        verify_incoming_tgp(tgp_req, z.amount, t_req, &plan.gamma, z.tgp),
                        "penalty_mismatch",
                    ))
                    .and(require(self.remain(hop, responder) >= z.amount, "insufficient_residual"))
                    .and(require(self.remain(hop - 1, responder) >= z.tgp, "insufficient_penalty_residual"))
                    .and(require(self.not_near_expiry(now, t_req), "near_expiry"))
            };
            let formed = check.and_then(|_| {
                self.form(hop, Slot::Cancel, ContractKind::GpCancellation, tgp_req, Amount::ZERO, t_req, now, Phase::Round1)
            });
            if let Err(reason) = formed {
                self.abort(now, Phase::Round1, responder, hop, reason);
                break;
            }
            if hop == n - 1 {
                t_form = Some(now);
            }
        }
        let Some(t_form) = t_form else { return Ok(()) };

        // Round 2: payment contracts from the sender to the payee.
        let mut p_formed_at = None;
        if self.abort.is_none() {
            for hop in 0..n {
                let (payer, payee) = (hop, hop + 1);
                let t_hop = plan.timelocks[hop];
                let mut check = Ok(());
                if payer > 0 {
                    let incoming = &self.hops[hop - 1].payment.as_ref().expect("formed in order").contract.terms;
                    let forwarded = incoming.amount.checked_sub(plan.fee_at(payer)).ok();
                    check = require(incoming.locktime >= t_hop + delta, "timelock_gap")
                        .and(require(forwarded == Some(plan.amounts[hop]), "amount_mismatch"));
                }
                if self.behavior(payer) == NodeBehavior::RefuseForward {
                    check = check.and(Err("no_forward"));
                }
                check = check.and(require(self.not_near_expiry(now, t_hop), "near_expiry"));
                if let Err(reason) = check {
                    self.abort(now, Phase::Round2, payer, hop, reason);
                    break;
                }
                let amount = plan.amounts[hop].saturating_sub(self.config.shortfall(hop));
                self.emit(now, Phase::Round2, payer, Action::Propose, Some(hop), Some(ContractKind::GpPayment), Some(amount));
                now = now + l;
                if self.behavior(payee) == NodeBehavior::RefuseSign {
                    self.emit(now, Phase::Round2, payee, Action::Refuse, Some(hop), Some(ContractKind::GpPayment), None);
                    self.abort = Some((Phase::Round2, hop));
                    break;
                }
                if payee == n && now > t_form + self.wait {
                    self.abort(now, Phase::Round2, payee, hop, "receiver_deadline");
                    break;
                }
                if let Err(reason) =
                    self.form(hop, Slot::Payment, ContractKind::GpPayment, amount, Amount::ZERO, t_hop, now, Phase::Round2)
                {
                    self.abort(now, Phase::Round2, payer, hop, reason);
                    break;
                }
                if payee == n {
                    p_formed_at = Some(now);
                }
            }
        }

        // Payee's decision: x only for a valid payment contract within δ.
        let (decided_at, secret) = match p_formed_at {
            Some(tp) => {
                let terms = &self.hops[n - 1].payment.as_ref().expect("formed").contract.terms;
                let valid = terms.amount == plan.alpha && terms.locktime >= tp + delta;
                (tp, if valid { Secret::X } else { Secret::R })
            }
            None => ((t_form + self.wait).max(now), Secret::R),
        };
        let knowledge = if self.behavior(n) == NodeBehavior::WithholdPreimage {
            None
        } else {
            self.emit(decided_at, Phase::Release, n, Action::Decide(secret), None, None, None);
            self.completed = secret == Secret::X;
            Some(Knowledge::Preimage(secret))
        };
        self.sweep(n - 1, knowledge, decided_at)
    }

    fn run_baseline(&mut self) -> Result<(), ProtocolError> {
        let plan = self.plan;
        let n = plan.hops();
        let l = self.config.latency;
        let delta = plan.delta;
        let kind = match self.protocol {
            Protocol::Htlc1 => ContractKind::Htlc1,
            _ => ContractKind::Htlc,
        };
        let mut now = Minutes::ZERO;
        let mut formed = 0;
        for hop in 0..n {
            let (payer, payee) = (hop, hop + 1);
            let t_hop = plan.timelocks[hop];
            let mut check = Ok(());
            if payer > 0 {
                let incoming = &self.hops[hop - 1].payment.as_ref().expect("formed in order").contract.terms;
                let forwarded = incoming.amount.checked_sub(plan.fee_at(payer)).ok();
                check = require(incoming.locktime >= t_hop + delta, "timelock_gap")
                    .and(require(forwarded == Some(plan.amounts[hop]), "amount_mismatch"));
            }
            if self.behavior(payer) == NodeBehavior::RefuseForward {
                check = check.and(Err("no_forward"));
            }
            check = check.and(require(self.not_near_expiry(now, t_hop), "near_expiry"));
            if let Err(reason) = check {
                self.abort(now, Phase::Locking, payer, hop, reason);
                break;
            }
            let amount = plan.amounts[hop].saturating_sub(self.config.shortfall(hop));
            let deposit = if kind == ContractKind::Htlc1 { plan.tgp[hop] } else { Amount::ZERO };
            self.emit(now, Phase::Locking, payer, Action::Propose, Some(hop), Some(kind), Some(amount));
            now = now + l;
            if self.behavior(payee) == NodeBehavior::RefuseSign {
                self.emit(now, Phase::Locking, payee, Action::Refuse, Some(hop), Some(kind), None);
                self.abort = Some((Phase::Locking, hop));
                break;
            }
            if let Err(reason) = self.form(hop, Slot::Payment, kind, amount, deposit, t_hop, now, Phase::Locking) {
                self.abort(now, Phase::Locking, payee, hop, reason);
                break;
            }
            formed += 1;
        }
        if formed == 0 {
            return Ok(());
        }
        let top = formed - 1;
        let end = top + 1;
        let mut knowledge = Knowledge::Cancel;
        if end == n {
            let terms = &self.hops[n - 1].payment.as_ref().expect("formed").contract.terms;
            let valid = terms.amount == plan.alpha && terms.locktime >= now + delta;
            if valid {
                knowledge = Knowledge::Preimage(Secret::X);
            }
        }
        let knowledge = if self.behavior(end) == NodeBehavior::WithholdPreimage {
            None
        } else {
            if end == n {
                let secret = if knowledge == Knowledge::Cancel { Secret::R } else { Secret::X };
                self.emit(now, Phase::Release, n, Action::Decide(secret), None, None, None);
                self.completed = secret == Secret::X;
            }
            Some(knowledge)
        };
        self.sweep(top, knowledge, now)
    }

    /// Backward settlement from hop `top` down to the sender. The node
    /// downstream of each hop acts with what it knows; `None` means the
    /// payee withholds.
    fn sweep(&mut self, top: usize, knowledge: Option<Knowledge>, start: Minutes) -> Result<(), ProtocolError> {
        let l = self.config.latency;
        let mut now = start;
        let mut knowledge = knowledge.unwrap_or(Knowledge::Cancel);
        let after_timeout = match self.protocol {
            Protocol::Htlc => Knowledge::Cancel,
            _ => Knowledge::Compensation,
        };
        for hop in (0..=top).rev() {
            let Some(locktime) = self.hops[hop].locktime() else { break };
            let (actor, counter) = (hop + 1, hop);
            let withholds = self.behavior(actor) == NodeBehavior::WithholdPreimage;
            if withholds || now + l >= locktime {
                if withholds {
                    self.emit(now, Phase::Release, actor, Action::Withhold, Some(hop), None, None);
                    self.griefer.get_or_insert(actor);
                }
                now = now.max(locktime);
                let paid = self.settle_hop(hop, Resolution::Timeout, now, Mode::OnChain { by: counter })?;
                self.emit_settlement(now, counter, hop, Action::ClaimTimeout, paid);
                knowledge = after_timeout;
                continue;
            }
            let reverse = self.behavior(counter) == NodeBehavior::ReverseGrief;
            match knowledge {
                Knowledge::Preimage(secret) => {
                    self.emit(now, Phase::Release, actor, Action::Release(secret), Some(hop), None, None);
                    now = now + l;
                    let resolution = Resolution::Preimage(secret);
                    if reverse {
                        self.emit(now, Phase::Release, counter, Action::RefuseTermination, Some(hop), None, None);
                        let paid = self.settle_hop(hop, resolution, now, Mode::OnChain { by: actor })?;
                        self.emit_settlement(now, actor, hop, Action::SettleOnChain, paid);
                    } else {
                        let paid = self.settle_hop(hop, resolution, now, Mode::OffChain)?;
                        self.emit_settlement(now, counter, hop, Action::SettleOffChain, paid);
                    }
                }
                Knowledge::Compensation | Knowledge::Cancel => {
                    let compensate = knowledge == Knowledge::Compensation;
                    let offer = self.offered_compensation(hop, compensate);
                    self.emit(now, Phase::Release, actor, Action::OfferCompensation, Some(hop), None, Some(offer));
                    now = now + l;
                    if reverse {
                        self.emit(now, Phase::Release, counter, Action::RefuseTermination, Some(hop), None, None);
                        now = now.max(locktime);
                        let paid = self.settle_hop(hop, Resolution::Timeout, now, Mode::OnChain { by: counter })?;
                        self.emit_settlement(now, counter, hop, Action::ClaimTimeout, paid);
                        knowledge = after_timeout;
                    } else {
                        let paid = self.settle_hop(hop, Resolution::Terminate { compensate }, now, Mode::OffChain)?;
                        self.emit_settlement(now, counter, hop, Action::SettleOffChain, paid);
                    }
                }
            }
        }
        Ok(())
    }

    fn offered_compensation(&self, hop: usize, compensate: bool) -> Amount {
        if !compensate {
            return Amount::ZERO;
        }
        let state = &self.hops[hop];
        match (&state.cancel, &state.payment) {
            (Some(c), _) => c.contract.terms.amount,
            (None, Some(p)) => p.contract.terms.penalty,
            _ => Amount::ZERO,
        }
    }

    fn finish(mut self, original: &NetworkGraph) -> PaymentReport {
        let mut nodes: Vec<&NodeId> = self.plan.path.iter().collect();
        nodes.sort();
        nodes.dedup();
        let deltas = nodes
            .into_iter()
            .map(|node| {
                let delta = self.graph.balance_of(node).msat() as i64 - original.balance_of(node).msat() as i64;
                (node.clone(), delta)
            })
            .collect();
        let summary = |live: &Live| ContractSummary {
            kind: live.contract.kind(),
            amount: live.contract.terms.amount,
            deposit: live.contract.terms.penalty,
            status: live.contract.status,
            penalty_paid: live.penalty_paid,
            formed_at: live.formed_at,
            settled_at: live.settled_at,
            on_chain: live.on_chain,
        };
        let mut lockup = BTreeMap::new();
        let hops = self
            .hops
            .iter()
            .map(|h| {
                let lives: Vec<&Live> = h.cancel.iter().chain(h.payment.iter()).collect();
                debug_assert!(lives.iter().all(|l| l.contract.status.is_terminal()));
                if let (Some(start), Some(end)) = (
                    lives.iter().map(|l| l.formed_at).min(),
                    lives.iter().filter_map(|l| l.settled_at).max(),
                ) {
                    lockup.insert(h.channel.clone(), end.saturating_sub(start));
                }
                HopReport {
                    channel: h.channel.clone(),
                    cancellation: h.cancel.as_ref().map(summary),
                    payment: h.payment.as_ref().map(summary),
                }
            })
            .collect();
        let outcome = match (self.griefer, self.abort) {
            (Some(position), _) => PaymentOutcome::Griefed { position },
            (None, Some((phase, hop))) => PaymentOutcome::Aborted { phase, hop },
            (None, None) if self.completed => PaymentOutcome::Success,
            (None, None) => PaymentOutcome::Cancelled,
        };
        let ledger = SettlementLedger {
            deltas,
            compensation: std::mem::take(&mut self.compensation),
            lockup,
            elapsed: self.clock,
            burned: self.graph.burned().saturating_sub(original.burned()),
        };
        PaymentReport {
            protocol: self.protocol,
            outcome,
            ledger,
            hops,
            trace: self.trace,
            contract_events: self.contract_events,
        }
    }
}
