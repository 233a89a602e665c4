//! Unweighted shortest-path betweenness (Brandes) used to pick the victim.

use std::collections::{BTreeMap, VecDeque};

use htlcgp_core::model::{NetworkGraph, NodeId};

/// Scores are compared after rounding to this many units, so floating-point
/// noise cannot reorder nodes with equal centrality.
const QUANTUM: f64 = 1e6;

/// Undirected adjacency over enabled, open channels; parallel channels count
/// once.
pub(crate) fn adjacency(graph: &NetworkGraph) -> (Vec<NodeId>, Vec<Vec<usize>>) {
    let nodes: Vec<NodeId> = graph.nodes().cloned().collect();
    let index: BTreeMap<&NodeId, usize> = nodes.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let mut adj = vec![Vec::new(); nodes.len()];
    for c in graph.channels().filter(|c| !c.disabled && !c.closed) {
        let (a, b) = (index[&c.node_a], index[&c.node_b]);
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    (nodes, adj)
}

/// Betweenness of every node, counting each unordered endpoint pair once.
pub fn betweenness(graph: &NetworkGraph) -> BTreeMap<NodeId, f64> {
    let (nodes, adj) = adjacency(graph);
    let n = nodes.len();
    let mut score = vec![0.0f64; n];
    let mut order = Vec::with_capacity(n);
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    let mut dep = vec![0.0f64; n];
    for s in 0..n {
        order.clear();
        preds.iter_mut().for_each(Vec::clear);
        sigma.iter_mut().for_each(|x| *x = 0.0);
        dist.iter_mut().for_each(|x| *x = -1);
        dep.iter_mut().for_each(|x| *x = 0.0);
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adj[v] {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                dep[v] += sigma[v] / sigma[w] * (1.0 + dep[w]);
            }
            if w != s {
                score[w] += dep[w];
            }
        }
    }
    nodes.into_iter().zip(score.into_iter().map(|x| x / 2.0)).collect()
}

/// The `k` most central nodes, highest first, ties broken by node id.
pub fn betweenness_top(graph: &NetworkGraph, k: usize) -> Vec<NodeId> {
    let mut ranked: Vec<(i64, NodeId)> = betweenness(graph)
        .into_iter()
        .map(|(n, s)| ((s * QUANTUM).round() as i64, n))
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    ranked.into_iter().take(k).map(|(_, n)| n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use htlcgp_core::model::{Amount, Channel, ChannelId, FeePolicy};
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{ToPrimitive, Zero};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn graph(n: usize, edges: &[(usize, usize)]) -> NetworkGraph {
        let mut g = NetworkGraph::new();
        for i in 0..n {
            g.add_node(NodeId::new(format!("v{i:02}")), FeePolicy::default());
        }
        for (i, (a, b)) in edges.iter().enumerate() {
            g.add_channel(Channel::with_split_capacity(
                ChannelId::new(i.to_string()),
                NodeId::new(format!("v{a:02}")),
                NodeId::new(format!("v{b:02}")),
                Amount::from_msat(10),
            ))
            .unwrap();
        }
        g
    }

    /// Enumerates every shortest path of every pair and credits each interior
    /// node with its exact share.
    fn oracle(graph: &NetworkGraph) -> BTreeMap<NodeId, BigRational> {
        let (nodes, adj) = adjacency(graph);
        let n = nodes.len();
        let mut score = vec![BigRational::zero(); n];
        for s in 0..n {
            // distances from s by BFS, then enumerate all shortest paths by DFS
            let mut dist = vec![usize::MAX; n];
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for &w in &adj[v] {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                }
            }
            for t in s + 1..n {
                if dist[t] == usize::MAX {
                    continue;
                }
                let mut paths: Vec<Vec<usize>> = Vec::new();
                let mut stack = vec![vec![s]];
                while let Some(p) = stack.pop() {
                    let last = *p.last().unwrap();
                    if last == t {
                        paths.push(p);
                        continue;
                    }
                    for &w in &adj[last] {
                        if dist[w] == dist[last] + 1 && dist[w] <= dist[t] {
                            let mut q = p.clone();
                            q.push(w);
                            stack.push(q);
                        }
                    }
                }
                let total = BigInt::from(paths.len());
                let mut through = vec![0usize; n];
                for p in &paths {
                    for &v in &p[1..p.len() - 1] {
                        through[v] += 1;
                    }
                }
                for v in 0..n {
                    if through[v] > 0 {
                        score[v] += BigRational::new(BigInt::from(through[v]), total.clone());
                    }
                }
            }
        }
        nodes.into_iter().zip(score).collect()
    }

    #[test]
    fn star_center_first() {
        let g = graph(6, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]);
        assert_eq!(betweenness_top(&g, 1), vec![NodeId::new("v00")]);
        assert_eq!(betweenness(&g)[&NodeId::new("v00")], 10.0);
    }

    #[test]
    fn path_middle_first() {
        let g = graph(3, &[(0, 1), (1, 2)]);
        assert_eq!(betweenness_top(&g, 3), ["v01", "v00", "v02"].map(NodeId::new).to_vec());
    }

    #[test]
    fn matches_exact_enumeration() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for round in 0..40 {
            let n = if round < 30 { rng.gen_range(3..=12) } else { 20 };
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen_bool(0.25) {
                        edges.push((i, j));
                    }
                }
            }
            let g = graph(n, &edges);
            let fast = betweenness(&g);
            let exact = oracle(&g);
            for (node, value) in &exact {
                let quantized = |x: f64| (x * QUANTUM).round() as i64;
                assert_eq!(quantized(fast[node]), quantized(value.to_f64().unwrap()), "node {node}");
            }
            let mut expected: Vec<(BigRational, NodeId)> = exact.into_iter().map(|(n, s)| (s, n)).collect();
            expected.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
            let expected: Vec<NodeId> = expected.into_iter().map(|(_, n)| n).collect();
            assert_eq!(betweenness_top(&g, n), expected);
        }
    }
}
