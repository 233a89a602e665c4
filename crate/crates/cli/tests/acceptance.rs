//! Acceptance checks. Prints one `PASS`/`FAIL` line per criterion, then
//! fails if any criterion failed. Run with `--nocapture` to see the report.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use htlcgp_core::model::{Amount, Channel, ChannelId, FeePolicy, Minutes, NetworkGraph, NodeId, PenaltyRate, Side};
use htlcgp_core::penalty::{infer_position, PathPlan, PlanParams, PositionObservation};
use htlcgp_core::protocol::Protocol;
use htlcgp_experiments::adversary::{reverse_griefing_differential, run_griefing_suite, SuiteSummary};
use htlcgp_experiments::config::RoiRow;
use htlcgp_experiments::{
    attack_strategy_existing_channels, attack_strategy_new_channels, betweenness, betweenness_top, linear_fit,
    max_flow, run_ratio_sweeps, run_roi_sweeps, ExperimentConfig, RatioPoint,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

// Pinned limits.
const TELESCOPING_PLANS: usize = 1_000;
const TELESCOPING_BUDGET: Duration = Duration::from_secs(1);
const SUITE_MAX_HOPS: usize = 8;
const SUITE_BUDGET: Duration = Duration::from_secs(30);
const POSITION_PLANS: usize = 100;
const SWEEP_BUDGET: Duration = Duration::from_secs(5);
const MIN_R_SQUARED: f64 = 0.999;
const MULTIPLE_THRESHOLD: f64 = 500.0;
/// Published multiples at γ = 0.001, shown next to ours.
const PUBLISHED_MULTIPLE_N4: f64 = 4.7;
const PUBLISHED_MULTIPLE_N20: f64 = 12.0;
const ORACLE_GRAPHS: usize = 200;
const ORACLE_MAX_NODES: usize = 12;
/// Betweenness is compared as f64 against an exact rational oracle.
const BETWEENNESS_REL_TOL: f64 = 1e-9;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn criterion(id: u32, name: &str, check: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        verdict(false, format!("panicked: {msg}"))
    });
    let status = if v.pass { "PASS" } else { "FAIL" };
    println!("{status} {id:>2}. {name}: {} [{:.2}s]", v.detail, start.elapsed().as_secs_f64());
    v.pass
}

fn rat(n: u64, d: u64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn path(n: usize) -> Vec<NodeId> {
    (0..=n).map(|i| NodeId::new(format!("n{i}"))).collect()
}

fn random_plan(rng: &mut ChaCha20Rng, hops: usize, fees: bool, k: u32) -> PathPlan {
    let delta = rng.gen_range(1..500u64);
    let max_fee = if fees { 10_000 } else { 0 };
    let gd = rng.gen_range(1..1_000_000u64);
    PathPlan::build(
        path(hops),
        &PlanParams {
            alpha: Amount::from_msat(rng.gen_range(1_000..10_000_000)),
            fees: (0..hops - 1).map(|_| Amount::from_msat(rng.gen_range(0..=max_fee))).collect(),
            gamma: PenaltyRate::from_ratio(rng.gen_range(1..=gd.min(1_000)), gd).unwrap(),
            delta: Minutes::new(delta),
            t_base: Minutes::new(delta + rng.gen_range(1..5_000)),
            k,
            psi: None,
        },
    )
    .unwrap()
}

fn two_party_penalty() -> Verdict {
    let plan = PathPlan::build(
        path(1),
        &PlanParams {
            alpha: Amount::from_msat(1),
            fees: vec![],
            gamma: "0.001".parse().unwrap(),
            delta: Minutes::new(144),
            t_base: Minutes::days(3),
            k: 0,
            psi: None,
        },
    )
    .unwrap();
    let tgp = plan.tgp_exact(0).unwrap();
    verdict(tgp == rat(432, 100), format!("tgp = {tgp} msat, expected 432/100 exactly"))
}

fn telescoping() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut bad = 0;
    for _ in 0..TELESCOPING_PLANS {
        let hops = rng.gen_range(2..=20);
        let k = rng.gen_range(0..=10);
        let plan = random_plan(&mut rng, hops, true, k);
        for i in 1..hops {
            let step = plan.gamma.as_rational() * plan.amounts[i].to_rational() * plan.timelocks[i].to_rational();
            if plan.tgp_exact(i).unwrap() - step != plan.tgp_exact(i - 1).unwrap() {
                bad += 1;
            }
        }
    }
    let took = start.elapsed();
    verdict(
        bad == 0 && took < TELESCOPING_BUDGET,
        format!("{TELESCOPING_PLANS} plans, {bad} mismatches, {:.3}s (limit {:?})", took.as_secs_f64(), TELESCOPING_BUDGET),
    )
}

fn suite() -> &'static (SuiteSummary, Duration) {
    static SUITE: OnceLock<(SuiteSummary, Duration)> = OnceLock::new();
    SUITE.get_or_init(|| {
        let start = Instant::now();
        let s = run_griefing_suite(SUITE_MAX_HOPS);
        (s, start.elapsed())
    })
}

fn griefing_suite() -> Verdict {
    let (s, took) = suite();
    let expected: u64 = (2..=SUITE_MAX_HOPS as u64).map(|n| n * (n + 1) / 2 * 4u64.pow(n as u32 - 1)).sum();
    let pass = s.cases == expected
        && s.delta_violations == 0
        && s.compensation_violations == 0
        && s.compensated > 0
        && *took < SUITE_BUDGET;
    let mut detail = format!(
        "{} cases (expected {expected}), {} compensated, {} negative deltas, {} compensation mismatches, {:.1}s (limit {:?})",
        s.cases,
        s.compensated,
        s.delta_violations,
        s.compensation_violations,
        took.as_secs_f64(),
        SUITE_BUDGET
    );
    if let Some(v) = s.examples.first() {
        detail.push_str(&format!("; first: {v:?}"));
    }
    verdict(pass, detail)
}

fn conservation() -> Verdict {
    let (s, _) = suite();
    verdict(
        s.conservation_violations == 0 && s.events_checked > s.cases,
        format!("{} events checked, {} violations", s.events_checked, s.conservation_violations),
    )
}

fn reverse_griefing() -> Verdict {
    let outcomes: Vec<_> = (2..=SUITE_MAX_HOPS).map(reverse_griefing_differential).collect();
    let pass = outcomes.iter().all(|o| o.htlc1_delta < 0 && o.htlcgp_delta >= 0);
    let shown: Vec<String> = outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| format!("n={}: {}/{}", i + 2, o.htlc1_delta, o.htlcgp_delta))
        .collect();
    verdict(pass, format!("victim delta htlc1/htlc-gp msat: {}", shown.join(", ")))
}

fn position_blinding() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let mut bad = Vec::new();
    for _ in 0..POSITION_PLANS {
        let hops = rng.gen_range(2..=20);
        let k = rng.gen_range(4..=10);
        let plan = random_plan(&mut rng, hops, false, k);
        let position = rng.gen_range(1..hops);
        let obs = PositionObservation {
            tgp_incoming: plan.tgp[position - 1],
            incoming_amount: plan.amounts[position - 1],
            incoming_timelock: plan.timelocks[position - 1],
            gamma: plan.gamma.clone(),
            delta: plan.delta,
        };
        let inferred = infer_position(&obs);
        if inferred as i64 - position as i64 != k as i64 {
            bad.push((hops, position, k, inferred));
        }
    }
    verdict(bad.is_empty(), format!("{POSITION_PLANS} plans, offsets != k: {bad:?}"))
}

fn increasing(points: &[&RatioPoint]) -> bool {
    points.windows(2).all(|w| w[1].multiple > w[0].multiple)
}

fn sweeps() -> Verdict {
    let start = Instant::now();
    let config = ExperimentConfig::default();
    let (by_len, by_gamma) = run_ratio_sweeps(&config).unwrap();
    let took = start.elapsed();
    let mut pass = true;
    let mut worst_r2 = f64::INFINITY;
    for v in &config.ratio_values {
        let series: Vec<&RatioPoint> = by_len.iter().filter(|p| p.value == *v).collect();
        pass &= increasing(&series);
        let xs: Vec<f64> = series.iter().map(|p| p.hops as f64).collect();
        let ys: Vec<f64> = series.iter().map(|p| p.multiple).collect();
        worst_r2 = worst_r2.min(linear_fit(&xs, &ys).r_squared);
    }
    pass &= worst_r2 > MIN_R_SQUARED;
    for n in &config.ratio_path_lengths {
        let series: Vec<&RatioPoint> = by_gamma.iter().filter(|p| p.hops == *n).collect();
        pass &= increasing(&series);
    }
    let milli: PenaltyRate = "0.001".parse().unwrap();
    let peak = by_gamma
        .iter()
        .filter(|p| p.hops == 20 && p.gamma.as_rational() > milli.as_rational())
        .map(|p| p.multiple)
        .fold(0.0, f64::max);
    pass &= peak > MULTIPLE_THRESHOLD && took < SWEEP_BUDGET;
    let at = |n| by_len.iter().find(|p| p.hops == n && p.value == config.ratio_values[0]).map(|p| p.multiple).unwrap();
    verdict(
        pass,
        format!(
            "min R² {worst_r2:.6}; max multiple at n=20, γ>1e-3: {peak:.1}; calibrated (t_base={}, Δ={}, k={}, value={}) n=4: {:.2} vs published {PUBLISHED_MULTIPLE_N4}, n=20: {:.2} vs published {PUBLISHED_MULTIPLE_N20}",
            config.t_base,
            config.delta,
            config.k,
            config.ratio_values[0],
            at(4),
            at(20)
        ),
    )
}

fn rois(rows: &[RoiRow], protocol: Protocol) -> Vec<i64> {
    rows.iter().filter(|r| r.protocol == protocol).map(|r| r.report.roi.roi).collect()
}

fn roi_trends() -> Verdict {
    let config = ExperimentConfig::default();
    let graph = config.load_graph().unwrap();
    let mut pass = true;
    let mut notes = Vec::new();
    for strategy in [1u8, 2] {
        let t = run_roi_sweeps(&graph, &config, strategy).unwrap();
        let htlc_ok = [&t.by_value, &t.by_budget, &t.by_gamma]
            .iter()
            .all(|rows| rois(rows, Protocol::Htlc).iter().all(|&r| r >= 0));
        let non_inc = |xs: Vec<i64>| xs.windows(2).all(|w| w[1] <= w[0]);
        let budget_ok = non_inc(rois(&t.by_budget, Protocol::HtlcGp));
        let gamma_ok = non_inc(rois(&t.by_gamma, Protocol::HtlcGp));
        pass &= htlc_ok && budget_ok && gamma_ok;
        notes.push(format!("s{strategy}: htlc≥0 {htlc_ok}, gp↓budget {budget_ok}, gp↓γ {gamma_ok}"));
    }
    let victim = betweenness_top(&graph, 1).remove(0);
    let params = config.attack_params(
        Protocol::HtlcGp,
        "0.03btc".parse().unwrap(),
        Amount::from_sat(10_000),
        &"0.001".parse().unwrap(),
    );
    let one = attack_strategy_new_channels(&graph, &victim, &params).unwrap().roi.roi;
    let two = attack_strategy_existing_channels(&graph, &config.attacker, &victim, &params).unwrap().roi.roi;
    pass &= one < 0 && two < 0;
    notes.push(format!("gp roi at (10000 sat, 0.03 BTC, 0.001): s1 {one} msat, s2 {two} msat"));
    verdict(pass, notes.join("; "))
}

fn random_graph(rng: &mut ChaCha20Rng, nodes: usize) -> NetworkGraph {
    let mut g = NetworkGraph::new();
    let ids: Vec<NodeId> = (0..nodes).map(|i| NodeId::new(format!("v{i:02}"))).collect();
    for id in &ids {
        g.add_node(id.clone(), FeePolicy::default());
    }
    let mut serial = 0;
    for a in 0..nodes {
        for b in a + 1..nodes {
            if rng.gen_bool(0.3) {
                let mut c = Channel::new(
                    ChannelId::new(format!("c{serial}")),
                    ids[a].clone(),
                    ids[b].clone(),
                    Amount::from_msat(rng.gen_range(0..20)),
                    Amount::from_msat(rng.gen_range(0..20)),
                );
                c.disabled = rng.gen_bool(0.1);
                g.add_channel(c).unwrap();
                serial += 1;
            }
        }
    }
    g
}

/// Smallest directed cut separating `sources` from `sinks`, by enumerating
/// every assignment of the remaining nodes.
fn brute_min_cut(g: &NetworkGraph, sources: &[NodeId], sinks: &[NodeId]) -> u64 {
    let free: Vec<&NodeId> = g.nodes().filter(|n| !sources.contains(n) && !sinks.contains(n)).collect();
    let mut best = u64::MAX;
    for mask in 0u32..(1 << free.len()) {
        let in_s = |n: &NodeId| {
            sources.contains(n) || free.iter().position(|f| *f == n).is_some_and(|i| mask & (1 << i) != 0)
        };
        let mut cut = 0;
        for c in g.channels().filter(|c| !c.disabled && !c.closed) {
            if in_s(&c.node_a) && !in_s(&c.node_b) {
                cut += c.remain(Side::A).msat();
            }
            if in_s(&c.node_b) && !in_s(&c.node_a) {
                cut += c.remain(Side::B).msat();
            }
        }
        best = best.min(cut);
    }
    best
}

fn distances<'a>(adj: &BTreeMap<&'a NodeId, Vec<&'a NodeId>>, s: &'a NodeId) -> BTreeMap<&'a NodeId, usize> {
    let mut d: BTreeMap<&NodeId, usize> = BTreeMap::from([(s, 0)]);
    let mut frontier = vec![s];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for u in frontier {
            for &v in &adj[u] {
                if !d.contains_key(v) {
                    d.insert(v, d[u] + 1);
                    next.push(v);
                }
            }
        }
        frontier = next;
    }
    d
}

/// Betweenness by enumerating every shortest path between every unordered
/// pair, in exact rationals.
fn brute_betweenness(g: &NetworkGraph) -> BTreeMap<NodeId, BigRational> {
    let nodes: Vec<NodeId> = g.nodes().cloned().collect();
    let mut adj: BTreeMap<&NodeId, Vec<&NodeId>> = nodes.iter().map(|n| (n, Vec::new())).collect();
    for c in g.channels().filter(|c| !c.disabled && !c.closed) {
        adj.get_mut(&c.node_a).unwrap().push(&c.node_b);
        adj.get_mut(&c.node_b).unwrap().push(&c.node_a);
    }
    fn walk<'a>(
        u: &'a NodeId,
        t: &'a NodeId,
        dt: &BTreeMap<&NodeId, usize>,
        adj: &BTreeMap<&NodeId, Vec<&'a NodeId>>,
        stack: &mut Vec<&'a NodeId>,
        paths: &mut Vec<Vec<&'a NodeId>>,
    ) {
        if u == t {
            paths.push(stack.clone());
            return;
        }
        for &v in &adj[u] {
            if dt.get(v).is_some_and(|&dv| dv + 1 == dt[u]) {
                stack.push(v);
                walk(v, t, dt, adj, stack, paths);
                stack.pop();
            }
        }
    }
    let mut score: BTreeMap<NodeId, BigRational> = nodes.iter().map(|n| (n.clone(), BigRational::zero())).collect();
    for (i, s) in nodes.iter().enumerate() {
        for t in &nodes[i + 1..] {
            let dt = distances(&adj, t);
            if !dt.contains_key(s) {
                continue;
            }
            let mut paths = Vec::new();
            walk(s, t, &dt, &adj, &mut vec![s], &mut paths);
            let total = BigInt::from(paths.len());
            for p in &paths {
                for v in &p[1..p.len() - 1] {
                    *score.get_mut(*v).unwrap() += BigRational::new(BigInt::from(1), total.clone());
                }
            }
        }
    }
    score
}

fn oracles() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let (mut flow_bad, mut bc_bad) = (0, 0);
    for _ in 0..ORACLE_GRAPHS {
        let n = rng.gen_range(3..=ORACLE_MAX_NODES);
        let g = random_graph(&mut rng, n);
        let mut ids: Vec<NodeId> = g.nodes().cloned().collect();
        ids.shuffle(&mut rng);
        let k = rng.gen_range(1..=2.min(n / 2));
        let (sources, sinks) = (ids[..k].to_vec(), ids[k..2 * k].to_vec());
        if max_flow(&g, &sources, &sinks).value.msat() != brute_min_cut(&g, &sources, &sinks) {
            flow_bad += 1;
        }
        let fast = betweenness(&g);
        for (node, exact) in brute_betweenness(&g) {
            let exact = exact.to_f64().unwrap();
            if (fast[&node] - exact).abs() > BETWEENNESS_REL_TOL * exact.max(1.0) {
                bc_bad += 1;
            }
        }
    }
    verdict(
        flow_bad == 0 && bc_bad == 0,
        format!("{ORACLE_GRAPHS} graphs of 3..={ORACLE_MAX_NODES} nodes: {flow_bad} max-flow and {bc_bad} betweenness mismatches"),
    )
}

fn htlcgp(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_htlcgp")).env_remove("HTLCGP_SEED").args(args).output().unwrap();
    assert!(out.status.success(), "htlcgp {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn golden_scripts() -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    for (kind, file) in [("cancellation", "offered_cancellation.txt"), ("payment", "offered_payment.txt")] {
        let rendered = htlcgp(&["render-script", "--kind", kind]).stdout;
        let golden = std::fs::read(repo("crates/core/golden").join(file)).unwrap();
        let same = rendered == golden;
        pass &= same;
        notes.push(format!("{kind}: {} bytes, match {same}", rendered.len()));
    }
    verdict(pass, notes.join("; "))
}

fn files_in(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn determinism() -> Verdict {
    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&root);
    let scenario = repo("scenarios/griefing.toml");
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("simulate", vec!["simulate".into(), scenario.to_string_lossy().into_owned(), "--seed".into(), "5".into()]),
        (
            "attack-1",
            ["attack", "--strategy", "1", "--tx-values", "1sat,10000sat", "--budgets", "3000sat,0.03btc", "--gammas", "1e-5,1e-3"]
                .map(String::from)
                .to_vec(),
        ),
        (
            "attack-2",
            ["attack", "--strategy", "2", "--tx-values", "1sat,10000sat", "--budgets", "3000sat,0.03btc", "--gammas", "1e-5,1e-3"]
                .map(String::from)
                .to_vec(),
        ),
        ("sweep-len", ["sweep", "--ratio-vs", "pathlen"].map(String::from).to_vec()),
        ("sweep-gamma", ["sweep", "--ratio-vs", "gamma"].map(String::from).to_vec()),
    ];
    let mut differing = Vec::new();
    let mut files = 0;
    for (name, args) in &runs {
        let outputs: Vec<BTreeMap<String, Vec<u8>>> = ["a", "b"]
            .iter()
            .map(|rep| {
                let dir = root.join(rep).join(name);
                let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
                let dir_str = dir.to_string_lossy().into_owned();
                full.extend(["--out", &dir_str]);
                htlcgp(&full);
                files_in(&dir)
            })
            .collect();
        files += outputs[0].len();
        if outputs[0] != outputs[1] || outputs[0].is_empty() {
            differing.push(*name);
        }
    }
    verdict(differing.is_empty(), format!("{} runs, {files} files compared; differing: {differing:?}", runs.len()))
}

#[test]
fn acceptance_criteria() {
    let results = [
        criterion(1, "two-party penalty", two_party_penalty),
        criterion(2, "telescoping identity", telescoping),
        criterion(3, "honest nodes never lose (exhaustive)", griefing_suite),
        criterion(4, "conservation after every event", conservation),
        criterion(5, "reverse-griefing differential", reverse_griefing),
        criterion(6, "position blinding", position_blinding),
        criterion(7, "investment sweep trends", sweeps),
        criterion(8, "RoI trends", roi_trends),
        criterion(9, "oracle equivalence", oracles),
        criterion(10, "script golden files", golden_scripts),
        criterion(11, "CLI determinism", determinism),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
