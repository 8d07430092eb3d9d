//! The metaheuristic learning loop: grow a behavior tree one increment at a
//! time. Each increment pairs a trigger (the conditions that flipped in the
//! moving window around the point where fitness stopped improving) with a
//! behavior found by greedy single-action search, falling back to genetic
//! programming. Committed increments wrap the previous tree in a selector,
//! so earlier behavior stays as the default branch.

use crate::bloat::{prune_on_level, PruneReport};
use crate::bt::{ActionId, BehaviorTree, ConditionId, DecoratorPolicy};
use crate::env::{run_episode, FitnessWeights, Level, TraceStep};
use crate::genetics::{self, substream, GpConfig, Individual, Population};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Moving-window length in ticks.
    pub tau: u32,
    /// Minimum fitness gain that counts as an improvement.
    pub greedy_improvement_epsilon: f64,
    pub max_phases: u32,
    pub gp: GpConfig,
    pub rng_seed: u64,
    /// Run the anti-bloat pass on the final tree.
    pub prune: bool,
    pub weights: FitnessWeights,
}

impl Default for LearnerConfig {
    fn default() -> LearnerConfig {
        LearnerConfig {
            tau: 60,
            greedy_improvement_epsilon: 1e-3,
            max_phases: 64,
            gp: GpConfig::default(),
            rng_seed: 0,
            prune: true,
            weights: FitnessWeights::default(),
        }
    }
}

/// Net condition flips between the endpoints of a window: oscillation inside
/// the window cancels out, so the two sets are always disjoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionDelta {
    pub became_true: BTreeSet<ConditionId>,
    pub became_false: BTreeSet<ConditionId>,
    pub window_start_tick: u32,
    pub window_end_tick: u32,
}

impl ConditionDelta {
    pub fn is_empty(&self) -> bool {
        self.became_true.is_empty() && self.became_false.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct WindowVerdict {
    pub improving: bool,
    pub delta: ConditionDelta,
}

fn delta_between(trace: &[TraceStep], start: usize, end: usize) -> ConditionDelta {
    let mut became_true = BTreeSet::new();
    let mut became_false = BTreeSet::new();
    for condition in ConditionId::all() {
        let before = trace[start].conditions.get(condition);
        let after = trace[end].conditions.get(condition);
        match (before, after) {
            (false, true) => {
                became_true.insert(condition);
            }
            (true, false) => {
                became_false.insert(condition);
            }
            _ => {}
        }
    }
    ConditionDelta {
        became_true,
        became_false,
        window_start_tick: trace[start].tick,
        window_end_tick: trace[end].tick,
    }
}

/// Judge the trailing window of a trace: improving iff fitness rose by more
/// than `epsilon` between the window's endpoints. The window covers the last
/// `min(tau, len)` ticks.
pub fn monitor_window(trace: &[TraceStep], tau: u32, epsilon: f64) -> WindowVerdict {
    assert!(!trace.is_empty(), "monitor_window needs at least one tick");
    let len = trace.len();
    let window = (tau as usize).min(len).max(1);
    let start = len - window;
    let end = len - 1;
    let improving = trace[end].gamma - trace[start].gamma > epsilon;
    WindowVerdict {
        improving,
        delta: delta_between(trace, start, end),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot compose a trigger from an empty condition delta")]
pub struct EmptyDeltaError;

/// Build the trigger subtree: a sequence that succeeds exactly when the
/// blackboard matches the window-end snapshot of the flipped conditions.
/// Children are ordered deterministically: the became-true conditions by
/// (row, col, predicate), then the became-false ones wrapped in inverters.
pub fn compose_condition_tree(delta: &ConditionDelta) -> Result<BehaviorTree, EmptyDeltaError> {
    if delta.is_empty() {
        return Err(EmptyDeltaError);
    }
    let mut children = Vec::new();
    for &condition in &delta.became_true {
        children.push(BehaviorTree::condition(condition));
    }
    for &condition in &delta.became_false {
        children.push(BehaviorTree::decorator(
            DecoratorPolicy::Invert,
            BehaviorTree::condition(condition),
        ));
    }
    Ok(BehaviorTree::sequence(children))
}

// ---- candidate installation -------------------------------------------------------

/// Where a candidate behavior goes when evaluated: the whole tree (first
/// phase) or the action slot of a guarded increment over the incumbent.
#[derive(Debug, Clone, Copy)]
pub enum InsertionPoint<'a> {
    Root,
    Guarded {
        incumbent: &'a BehaviorTree,
        trigger: &'a BehaviorTree,
    },
}

impl<'a> InsertionPoint<'a> {
    /// The full tree that runs when `candidate` sits at this insertion point.
    pub fn install(&self, candidate: &BehaviorTree) -> BehaviorTree {
        match self {
            InsertionPoint::Root => candidate.clone(),
            InsertionPoint::Guarded { incumbent, trigger } => BehaviorTree::selector(vec![
                BehaviorTree::sequence(vec![(*trigger).clone(), candidate.clone()]),
                (*incumbent).clone(),
            ]),
        }
    }
}

pub struct SearchContext<'a> {
    pub insertion: InsertionPoint<'a>,
    /// Episode fitness of the incumbent tree; candidates must beat this.
    pub incumbent_gamma: f64,
}

/// Greedy order: rightward progress first, then the vertical escape, the
/// ranged attack, and the rarely useful leftover actions.
const GREEDY_ORDER: [ActionId; 5] = [
    ActionId::WalkRight,
    ActionId::Jump,
    ActionId::Shoot,
    ActionId::WalkLeft,
    ActionId::Crouch,
];

fn episode_gamma(
    tree: &BehaviorTree,
    level: &Arc<Level>,
    config: &LearnerConfig,
) -> f64 {
    run_episode(tree, level, &config.weights, config.rng_seed)
        .expect("learner trees are valid by construction")
        .gamma()
}

/// Try each action in the fixed greedy order; accept the first whose full
/// installed tree strictly improves on the incumbent's episode fitness.
/// Returns the accepted single-node action tree and the improved fitness.
pub fn learn_single_action(
    context: &SearchContext<'_>,
    level: &Arc<Level>,
    config: &LearnerConfig,
) -> Option<(BehaviorTree, f64)> {
    for action in GREEDY_ORDER {
        let candidate = BehaviorTree::action(action);
        let full = context.insertion.install(&candidate);
        let gamma = episode_gamma(&full, level, config);
        if gamma > context.incumbent_gamma + config.greedy_improvement_epsilon {
            return Some((candidate, gamma));
        }
    }
    None
}

#[derive(Debug, Clone)]
pub struct GpOutcome {
    pub tree: BehaviorTree,
    pub gamma: f64,
    /// False when the generation budget ran out without beating the
    /// incumbent; the best tree found is still returned.
    pub improved: bool,
}

fn random_gp_leaf<R: Rng>(rng: &mut R) -> BehaviorTree {
    // conditions and actions, uniform over the 55 execution nodes
    let pick = rng.gen_range(0..ActionId::ALL.len() + ConditionId::COUNT);
    if pick < ActionId::ALL.len() {
        BehaviorTree::action(ActionId::ALL[pick])
    } else {
        BehaviorTree::condition(
            ConditionId::all()
                .nth(pick - ActionId::ALL.len())
                .expect("in range"),
        )
    }
}

/// Genetic fallback when no single action improves: evolve small trees in
/// the same insertion slot, seeded with two-leaf sequences/selectors, until
/// one beats the incumbent or the generation budget runs out.
pub fn learn_bt_gp<R: Rng>(
    context: &SearchContext<'_>,
    level: &Arc<Level>,
    config: &LearnerConfig,
    rng: &mut R,
) -> GpOutcome {
    let gp = &config.gp;
    let mut population = Population {
        individuals: (0..gp.population_size)
            .map(|_| {
                let kind_is_seq: bool = rng.gen();
                let children = vec![random_gp_leaf(rng), random_gp_leaf(rng)];
                let tree = if kind_is_seq {
                    BehaviorTree::sequence(children)
                } else {
                    BehaviorTree::selector(children)
                };
                Individual::new(tree)
            })
            .collect(),
        generation: 0,
    };

    let mut best: Option<(BehaviorTree, f64)> = None;
    loop {
        for individual in population.individuals.iter_mut() {
            if individual.fitness.is_none() {
                let full = context.insertion.install(&individual.tree);
                individual.fitness = Some(episode_gamma(&full, level, config));
            }
        }
        for individual in &population.individuals {
            let gamma = individual.fitness.expect("evaluated above");
            if best.as_ref().map_or(true, |(_, g)| gamma > *g) {
                best = Some((individual.tree.clone(), gamma));
            }
        }
        let (_, best_gamma) = best.as_ref().expect("population is non-empty");
        if *best_gamma > context.incumbent_gamma + config.greedy_improvement_epsilon {
            break;
        }
        if population.generation >= gp.max_generations {
            break;
        }
        let selection = genetics::selection_probabilities(&population, gp.selection, None);
        let mut survivals = selection.probabilities.clone();
        for (individual, p) in population.individuals.iter_mut().zip(survivals.drain(..)) {
            individual.survival = Some(p);
        }
        population =
            genetics::select_next_population(&population, &selection.probabilities, gp, rng);
    }

    let (tree, gamma) = best.expect("population is non-empty");
    GpOutcome {
        improved: gamma > context.incumbent_gamma + config.greedy_improvement_epsilon,
        tree,
        gamma,
    }
}

// ---- the learning loop ---------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Greedy,
    Gp,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseRecord {
    pub phase: u32,
    pub method: Method,
    pub gamma: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub tree: BehaviorTree,
    /// Episode fitness of the returned tree.
    pub gamma: f64,
    pub achieved_goal: bool,
    pub phases: Vec<PhaseRecord>,
    pub gp_invocations: u32,
    pub prune_report: Option<PruneReport>,
}

/// Index of the last tick whose fitness improved on its predecessor: the
/// point where progress finally stalled. The trigger windows for the next
/// increment are anchored here.
fn last_improvement_index(trace: &[TraceStep]) -> usize {
    let mut last = if trace[0].gamma > 0.0 { 0 } else { 0 };
    for i in 1..trace.len() {
        if trace[i].gamma > trace[i - 1].gamma {
            last = i;
        }
    }
    last
}

/// Window endpoints to try for one phase, nearest the stall first. The exact
/// tick where the decisive conditions flipped varies by a step or two with
/// the failure mode (walls are visible while standing still, holes only from
/// the brink), so a few neighbors of the anchor are offered in order.
fn window_end_candidates(anchor: usize, len: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for offset in [0i64, -1, -2, -3, 1, 2, 3] {
        let e = anchor as i64 + offset;
        if e >= 0 && (e as usize) < len && !out.contains(&(e as usize)) {
            out.push(e as usize);
        }
    }
    out
}

/// Run the full loop on one level: learn the first behavior, then keep
/// adding condition-triggered increments while the goal is unreached, and
/// finish with the anti-bloat pass.
pub fn learn(level: &Arc<Level>, config: &LearnerConfig) -> LearnOutcome {
    let mut phases = Vec::new();
    let mut gp_invocations = 0u32;

    // first behavior: greedy over the bare actions, else GP at the root
    let root_context = SearchContext {
        insertion: InsertionPoint::Root,
        incumbent_gamma: 0.0,
    };
    let (first_tree, first_gamma, first_method) =
        match learn_single_action(&root_context, level, config) {
            Some((tree, gamma)) => (tree, gamma, Method::Greedy),
            None => {
                gp_invocations += 1;
                let mut rng = substream(config.rng_seed, "gp", 0);
                let outcome = learn_bt_gp(&root_context, level, config, &mut rng);
                (outcome.tree, outcome.gamma, Method::Gp)
            }
        };
    phases.push(PhaseRecord {
        phase: 0,
        method: first_method,
        gamma: first_gamma,
        nodes: first_tree.node_count(),
    });

    let mut committed = first_tree;
    let mut best_tree = committed.clone();
    let mut best_gamma = first_gamma;
    let mut achieved_goal = false;

    for phase in 1..=config.max_phases {
        let episode = run_episode(&committed, level, &config.weights, config.rng_seed)
            .expect("committed trees are valid");
        let gamma = episode.gamma();
        if gamma > best_gamma {
            best_gamma = gamma;
            best_tree = committed.clone();
        }
        if gamma >= 1.0 {
            achieved_goal = true;
            break;
        }

        let trace = &episode.trace;
        let anchor = last_improvement_index(trace);
        let windows = window_end_candidates(anchor, trace.len());
        let mut triggers = Vec::new();
        for &end in &windows {
            let start = (end + 1).saturating_sub(config.tau as usize);
            let delta = delta_between(trace, start, end);
            if !delta.is_empty() {
                triggers.push(compose_condition_tree(&delta).expect("delta is non-empty"));
            }
        }

        // Greedy pass over every trigger window: the decisive condition flip
        // may sit a tick or two off the stall anchor, so the phase commits
        // the best improvement found rather than the first.
        let mut accepted: Option<(BehaviorTree, f64, Method)> = None;
        for trigger in &triggers {
            let context = SearchContext {
                insertion: InsertionPoint::Guarded {
                    incumbent: &committed,
                    trigger,
                },
                incumbent_gamma: gamma,
            };
            if let Some((action_tree, improved_gamma)) =
                learn_single_action(&context, level, config)
            {
                if accepted.as_ref().map_or(true, |(_, g, _)| improved_gamma > *g) {
                    accepted = Some((
                        context.insertion.install(&action_tree),
                        improved_gamma,
                        Method::Greedy,
                    ));
                }
            }
        }
        // GP fallback only when greed found nothing anywhere.
        if accepted.is_none() {
            for (attempt, trigger) in triggers.iter().enumerate() {
                let context = SearchContext {
                    insertion: InsertionPoint::Guarded {
                        incumbent: &committed,
                        trigger,
                    },
                    incumbent_gamma: gamma,
                };
                gp_invocations += 1;
                let mut rng = substream(
                    config.rng_seed,
                    "gp",
                    phase as u64 * 16 + attempt as u64 + 1,
                );
                let outcome = learn_bt_gp(&context, level, config, &mut rng);
                if outcome.improved {
                    accepted = Some((
                        context.insertion.install(&outcome.tree),
                        outcome.gamma,
                        Method::Gp,
                    ));
                    break;
                }
            }
        }

        let Some((tree, new_gamma, method)) = accepted else {
            break; // no trigger window yields an improving increment
        };
        debug_assert!(tree.is_valid());
        committed = tree;
        phases.push(PhaseRecord {
            phase,
            method,
            gamma: new_gamma,
            nodes: committed.node_count(),
        });
        if new_gamma > best_gamma {
            best_gamma = new_gamma;
            best_tree = committed.clone();
        }
        if new_gamma >= 1.0 {
            achieved_goal = true;
            break;
        }
    }

    let final_tree = if achieved_goal { committed } else { best_tree };
    let (tree, gamma, prune_report) = if config.prune {
        let (pruned, report) = prune_on_level(&final_tree, level, &config.weights, config.rng_seed);
        let gamma = report.final_fitness;
        (pruned, gamma, Some(report))
    } else {
        let gamma = episode_gamma(&final_tree, level, config);
        (final_tree, gamma, None)
    };

    LearnOutcome {
        achieved_goal: gamma >= 1.0,
        tree,
        gamma,
        phases,
        gp_invocations,
        prune_report,
    }
}
