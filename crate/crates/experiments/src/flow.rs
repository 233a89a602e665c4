//! Maximum flow over directional channel residuals (Dinic), with a
//! super-source feeding every source and a super-sink draining every sink.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use htlcgp_core::model::{Amount, ChannelId, NetworkGraph, NodeId};
use serde::Serialize;

/// Net flow carried by one channel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChannelFlow {
    pub from: NodeId,
    pub to: NodeId,
    pub amount: Amount,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FlowResult {
    pub value: Amount,
    /// Channels with non-zero net flow.
    pub channels: BTreeMap<ChannelId, ChannelFlow>,
}

impl FlowResult {
    /// Net flow from `u` to `v` summed over every channel between them.
    pub fn between(&self, u: &NodeId, v: &NodeId) -> Amount {
        self.channels
            .values()
            .filter(|f| f.from == *u && f.to == *v)
            .map(|f| f.amount)
            .sum()
    }
}

struct Arc {
    to: usize,
    cap: u64,
}

struct Dinic {
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
    level: Vec<i32>,
    next: Vec<usize>,
}

impl Dinic {
    fn new(n: usize) -> Self {
        Dinic {
            arcs: Vec::new(),
            adj: vec![Vec::new(); n],
            level: vec![0; n],
            next: vec![0; n],
        }
    }

    /// Adds `u → v` and its zero-capacity reverse; returns the forward index.
    fn add(&mut self, u: usize, v: usize, cap: u64) -> usize {
        let idx = self.arcs.len();
        self.arcs.push(Arc { to: v, cap });
        self.arcs.push(Arc { to: u, cap: 0 });
        self.adj[u].push(idx);
        self.adj[v].push(idx + 1);
        idx
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let arc = &self.arcs[e];
                if arc.cap > 0 && self.level[arc.to] < 0 {
                    self.level[arc.to] = self.level[u] + 1;
                    queue.push_back(arc.to);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, u: usize, t: usize, limit: u64) -> u64 {
        if u == t {
            return limit;
        }
        while self.next[u] < self.adj[u].len() {
            let e = self.adj[u][self.next[u]];
            let (to, cap) = (self.arcs[e].to, self.arcs[e].cap);
            if cap > 0 && self.level[to] == self.level[u] + 1 {
                let pushed = self.dfs(to, t, limit.min(cap));
                if pushed > 0 {
                    self.arcs[e].cap -= pushed;
                    self.arcs[e ^ 1].cap = self.arcs[e ^ 1].cap.saturating_add(pushed);
                    return pushed;
                }
            }
            self.next[u] += 1;
        }
        0
    }

    fn run(&mut self, s: usize, t: usize) -> u64 {
        let mut total: u64 = 0;
        while self.bfs(s, t) {
            self.next.iter_mut().for_each(|n| *n = 0);
            loop {
                let pushed = self.dfs(s, t, u64::MAX);
                if pushed == 0 {
                    break;
                }
                total = total.saturating_add(pushed);
            }
        }
        total
    }
}

/// Maximum flow from `sources` to `sinks` where each channel offers its two
/// residuals as independent directed capacities. Disabled and closed
/// channels carry nothing. Nodes absent from the graph are ignored.
pub fn max_flow(graph: &NetworkGraph, sources: &[NodeId], sinks: &[NodeId]) -> FlowResult {
    let index: BTreeMap<&NodeId, usize> = graph.nodes().enumerate().map(|(i, n)| (n, i)).collect();
    let n = index.len();
    let (s, t) = (n, n + 1);
    let mut dinic = Dinic::new(n + 2);
    let mut arcs = Vec::new();
    for c in graph.channels().filter(|c| !c.disabled && !c.closed) {
        let (a, b) = (index[&c.node_a], index[&c.node_b]);
        if a == b {
            continue;
        }
        let ab = dinic.add(a, b, c.remain_ab.msat());
        let ba = dinic.add(b, a, c.remain_ba.msat());
        arcs.push((c, ab, ba));
    }
    let sinks: BTreeSet<&NodeId> = sinks.iter().collect();
    for src in sources.iter().filter(|n| !sinks.contains(n)) {
        if let Some(&i) = index.get(src) {
            dinic.add(s, i, u64::MAX);
        }
    }
    for snk in &sinks {
        if let Some(&i) = index.get(*snk) {
            dinic.add(i, t, u64::MAX);
        }
    }
    let value = dinic.run(s, t);
    let mut channels = BTreeMap::new();
    for (c, ab, ba) in arcs {
        let used_ab = c.remain_ab.msat() - dinic.arcs[ab].cap.min(c.remain_ab.msat());
        let used_ba = c.remain_ba.msat() - dinic.arcs[ba].cap.min(c.remain_ba.msat());
        let flow = if used_ab > used_ba {
            Some((&c.node_a, &c.node_b, used_ab - used_ba))
        } else if used_ba > used_ab {
            Some((&c.node_b, &c.node_a, used_ba - used_ab))
        } else {
            None
        };
        if let Some((from, to, amount)) = flow {
            channels.insert(
                c.id.clone(),
                ChannelFlow {
                    from: from.clone(),
                    to: to.clone(),
                    amount: Amount::from_msat(amount),
                },
            );
        }
    }
    FlowResult {
        value: Amount::from_msat(value),
        channels,
    }
}
