//! Anti-bloat control: breadth-first search for subtrees whose removal does
//! not lower fitness, applied after learning finishes.
//!
//! The scan restarts from the first index after every committed removal, and
//! ties count as removable; that is what actually shrinks the tree, since a
//! dead branch usually leaves fitness exactly equal.

use crate::bt::BehaviorTree;
use crate::env::{run_episode, FitnessWeights, Level};
use crate::text;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::Arc;

#[derive(Debug, Clone, Serialize)]
pub struct RemovedSubtree {
    /// Compact s-expression of the removed subtree.
    pub subtree: String,
    /// Node-count difference of the whole tree, including cascaded parents.
    pub nodes_saved: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PruneReport {
    pub removed: Vec<RemovedSubtree>,
    pub initial_nodes: usize,
    pub final_nodes: usize,
    pub initial_fitness: f64,
    pub final_fitness: f64,
}

/// Prune with an arbitrary fitness oracle. Walks the breadth-first subtree
/// enumeration (root excluded), commits any removal whose fitness is at
/// least the current tree's, and restarts the scan after each commit;
/// terminates when a full scan commits nothing.
pub fn prune<F>(tree: &BehaviorTree, mut fitness: F) -> (BehaviorTree, PruneReport)
where
    F: FnMut(&BehaviorTree) -> f64,
{
    let initial_fitness = fitness(tree);
    let mut report = PruneReport {
        removed: Vec::new(),
        initial_nodes: tree.node_count(),
        final_nodes: tree.node_count(),
        initial_fitness,
        final_fitness: initial_fitness,
    };

    let mut current = tree.clone();
    let mut current_fitness = initial_fitness;
    'scan: loop {
        let order = current.enumerate_subtrees();
        for &node in order.iter().skip(1) {
            let Ok(candidate) = current.remove_subtree(node) else {
                continue; // removal would cascade the whole tree away
            };
            let candidate_fitness = fitness(&candidate);
            if candidate_fitness >= current_fitness {
                let removed = current.extract_subtree(node).expect("node in range");
                report.removed.push(RemovedSubtree {
                    subtree: text::print_compact(&removed),
                    nodes_saved: current.node_count() - candidate.node_count(),
                });
                current = candidate;
                current_fitness = candidate_fitness;
                continue 'scan;
            }
        }
        break;
    }

    // Hoist transparent single-child roots left behind by removals: a
    // selector, sequence, or parallel over exactly one child ticks
    // identically to that child, so no oracle call is needed.
    loop {
        let root = current.node(current.root()).expect("root in range");
        let wrapper = match root.kind() {
            crate::bt::NodeKind::Selector => "(sel)",
            crate::bt::NodeKind::Sequence => "(seq)",
            crate::bt::NodeKind::Parallel { .. } => "(par)",
            _ => break,
        };
        if root.children().len() != 1 {
            break;
        }
        let child = root.children()[0];
        report.removed.push(RemovedSubtree {
            subtree: wrapper.to_string(),
            nodes_saved: 1,
        });
        current = current.extract_subtree(child).expect("child in range");
    }

    report.final_nodes = current.node_count();
    report.final_fitness = current_fitness;
    debug_assert!(current.is_valid());
    (current, report)
}

/// Prune against episode fitness on a fixed level and seed, caching oracle
/// calls by canonical tree text.
pub fn prune_on_level(
    tree: &BehaviorTree,
    level: &Arc<Level>,
    weights: &FitnessWeights,
    seed: u64,
) -> (BehaviorTree, PruneReport) {
    let mut cache: HashMap<String, f64> = HashMap::new();
    prune(tree, |t| {
        let key = text::print_compact(t);
        if let Some(&gamma) = cache.get(&key) {
            return gamma;
        }
        let gamma = run_episode(t, level, weights, seed)
            .map(|r| r.gamma())
            .unwrap_or(0.0);
        cache.insert(key, gamma);
        gamma
    })
}
