use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use htlcgp_core::model::snapshot::{graph_from_records, parse_records, ChannelRecord};
use htlcgp_core::model::{NetworkGraph, NodeId};

use crate::ExperimentError;

/// Reads a topology dump and applies [`preprocess_records`].
pub fn load_and_preprocess_snapshot(path: &Path) -> Result<NetworkGraph, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
    let records = parse_records(&text).map_err(|e| ExperimentError::Parse(e.to_string()))?;
    preprocess_records(&records)
}

/// Drops disabled channels, keeps the largest connected component and splits
/// every capacity equally between its two endpoints.
pub fn preprocess_records(records: &[ChannelRecord]) -> Result<NetworkGraph, ExperimentError> {
    let enabled: Vec<ChannelRecord> = records.iter().filter(|r| !r.disabled).cloned().collect();
    let graph = graph_from_records(&enabled).map_err(|e| ExperimentError::Parse(e.to_string()))?;
    let graph = largest_component(&graph);
    if graph.node_count() == 0 {
        return Err(ExperimentError::EmptyGraph);
    }
    Ok(graph)
}

/// Connected components of the undirected channel graph, each sorted, in
/// order of their smallest node.
pub fn connected_components(graph: &NetworkGraph) -> Vec<Vec<NodeId>> {
    let mut adjacency: BTreeMap<&NodeId, Vec<&NodeId>> = graph.nodes().map(|n| (n, Vec::new())).collect();
    for c in graph.channels() {
        adjacency.get_mut(&c.node_a).expect("endpoint registered").push(&c.node_b);
        adjacency.get_mut(&c.node_b).expect("endpoint registered").push(&c.node_a);
    }
    let mut seen = BTreeSet::new();
    let mut components = Vec::new();
    for start in adjacency.keys() {
        if !seen.insert(*start) {
            continue;
        }
        let mut component = vec![(*start).clone()];
        let mut queue = VecDeque::from([*start]);
        while let Some(u) = queue.pop_front() {
            for v in &adjacency[u] {
                if seen.insert(*v) {
                    component.push((*v).clone());
                    queue.push_back(v);
                }
            }
        }
        component.sort();
        components.push(component);
    }
    components
}

/// The component with the most nodes; ties go to the one holding the
/// smallest node id.
pub fn largest_component(graph: &NetworkGraph) -> NetworkGraph {
    let components = connected_components(graph);
    let Some(best) = components.iter().fold(None::<&Vec<NodeId>>, |best, c| match best {
        Some(b) if b.len() >= c.len() => Some(b),
        _ => Some(c),
    }) else {
        return NetworkGraph::new();
    };
    let keep: BTreeSet<&NodeId> = best.iter().collect();
    let mut out = graph.clone();
    let drop: Vec<NodeId> = graph.nodes().filter(|n| !keep.contains(n)).cloned().collect();
    for node in drop {
        out.remove_node(&node);
    }
    out
}
