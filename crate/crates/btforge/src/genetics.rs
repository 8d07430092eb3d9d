//! Genetic-programming layer: populations, two-point subtree crossover,
//! same-type mutation with an annealing schedule, and the three selection
//! mechanisms (naive fitness-proportional, rank space, diversity rank).
//!
//! Every operator is pure given an explicit RNG, so a fixed seed reproduces
//! a run bit for bit.

use crate::bt::{ActionId, BehaviorTree, ConditionId, DecoratorPolicy, NodeIndex, NodeKind};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One genome: a tree plus its episode fitness and survival probability,
/// both unset until computed.
#[derive(Debug, Clone)]
pub struct Individual {
    pub tree: BehaviorTree,
    pub fitness: Option<f64>,
    pub survival: Option<f64>,
}

impl Individual {
    pub fn new(tree: BehaviorTree) -> Individual {
        Individual {
            tree,
            fitness: None,
            survival: None,
        }
    }

    pub fn with_fitness(tree: BehaviorTree, fitness: f64) -> Individual {
        debug_assert!((0.0..=1.0).contains(&fitness));
        Individual {
            tree,
            fitness: Some(fitness),
            survival: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Population {
    pub individuals: Vec<Individual>,
    pub generation: u32,
}

/// How survival probabilities are derived from fitness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SelectionMethod {
    /// p_i = f_i / sum(f).
    Naive,
    /// Geometric probabilities over the fitness ranking; the parameter is
    /// the survival probability of the top-ranked individual.
    RankSpace { highest_rank_probability: f64 },
    /// Distance to the (max diversity, max fitness) reference point.
    DiversityRank,
}

/// Which node kinds the search may generate. Actions and conditions are
/// always available; the learned trees in practice only need selectors and
/// sequences, so parallels and decorators stay off unless enabled.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NodePool {
    pub parallel: bool,
    pub decorator: bool,
}

impl Default for NodePool {
    fn default() -> NodePool {
        NodePool {
            parallel: false,
            decorator: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpConfig {
    pub population_size: usize,
    pub max_generations: u32,
    pub crossover_probability: f64,
    /// Nodes mutated per individual in generation 0.
    pub anneal_initial_mutations: u32,
    /// Per-generation decay of the mutation count, in (0,1).
    pub anneal_decay: f64,
    pub selection: SelectionMethod,
    pub elitism: usize,
    pub rng_seed: u64,
    pub node_pool: NodePool,
    /// Restrict mutation to action<->action and condition<->condition swaps.
    pub strict_mutation: bool,
    /// Crossover children above this size are rejected and re-drawn.
    pub max_tree_nodes: usize,
}

impl Default for GpConfig {
    fn default() -> GpConfig {
        GpConfig {
            population_size: 24,
            max_generations: 16,
            crossover_probability: 0.8,
            anneal_initial_mutations: 4,
            anneal_decay: 0.7,
            selection: SelectionMethod::RankSpace {
                highest_rank_probability: 2.0 / 3.0,
            },
            elitism: 1,
            rng_seed: 0,
            node_pool: NodePool::default(),
            strict_mutation: false,
            max_tree_nodes: 200,
        }
    }
}

/// Per-individual structural diversity, mean normalized tree distance to the
/// rest of the population.
#[derive(Debug, Clone)]
pub struct DiversityScores(pub Vec<f64>);

/// Survival probabilities plus a flag for the degenerate all-zero case where
/// the method fell back to a uniform distribution.
#[derive(Debug, Clone)]
pub struct SelectionProbabilities {
    pub probabilities: Vec<f64>,
    pub uniform_fallback: bool,
}

/// Deterministic RNG for a named consumer: new consumers get their own
/// stream, so adding one does not perturb the draws of the others.
pub fn substream(seed: u64, label: &str, salt: u64) -> ChaCha8Rng {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(hash ^ salt);
    rng
}

// ---- crossover -----------------------------------------------------------------

/// Swap a uniformly chosen subtree of each parent (the root is a legal pick).
/// Children larger than `max_nodes` cause a re-draw; after 10 failed draws
/// the parents are returned unchanged.
pub fn crossover<R: Rng>(
    parent_a: &BehaviorTree,
    parent_b: &BehaviorTree,
    max_nodes: usize,
    rng: &mut R,
) -> (BehaviorTree, BehaviorTree) {
    for _ in 0..10 {
        let node_a = rng.gen_range(0..parent_a.node_count());
        let node_b = rng.gen_range(0..parent_b.node_count());
        let sub_a = parent_a.extract_subtree(node_a).expect("index in range");
        let sub_b = parent_b.extract_subtree(node_b).expect("index in range");
        let child_a = parent_a
            .replace_subtree(node_a, &sub_b)
            .expect("valid replacement");
        let child_b = parent_b
            .replace_subtree(node_b, &sub_a)
            .expect("valid replacement");
        if child_a.node_count() <= max_nodes && child_b.node_count() <= max_nodes {
            return (child_a, child_b);
        }
    }
    (parent_a.clone(), parent_b.clone())
}

// ---- mutation -----------------------------------------------------------------

fn random_execution_kind<R: Rng>(rng: &mut R) -> NodeKind {
    // 5 actions + 50 conditions, uniform
    let pick = rng.gen_range(0..ActionId::ALL.len() + ConditionId::COUNT);
    if pick < ActionId::ALL.len() {
        NodeKind::Action(ActionId::ALL[pick])
    } else {
        let c = ConditionId::all()
            .nth(pick - ActionId::ALL.len())
            .expect("in range");
        NodeKind::Condition(c)
    }
}

fn random_action<R: Rng>(rng: &mut R) -> NodeKind {
    NodeKind::Action(ActionId::ALL[rng.gen_range(0..ActionId::ALL.len())])
}

fn random_condition<R: Rng>(rng: &mut R) -> NodeKind {
    let c = ConditionId::all()
        .nth(rng.gen_range(0..ConditionId::COUNT))
        .expect("in range");
    NodeKind::Condition(c)
}

fn random_policy<R: Rng>(rng: &mut R) -> DecoratorPolicy {
    match rng.gen_range(0..3) {
        0 => DecoratorPolicy::Invert,
        1 => DecoratorPolicy::ForceSuccess,
        _ => DecoratorPolicy::ForceFailure,
    }
}

/// Same-type mutation: execution nodes swap with execution nodes, control
/// nodes swap with control kinds compatible with their child count
/// (children are preserved). `k` distinct nodes are mutated, capped at the
/// tree size.
pub fn mutate<R: Rng>(
    tree: &BehaviorTree,
    k: u32,
    pool: &NodePool,
    strict: bool,
    rng: &mut R,
) -> BehaviorTree {
    let n = tree.node_count();
    let count = (k as usize).min(n);
    if count == 0 {
        return tree.clone();
    }
    let mut picked = rand::seq::index::sample(rng, n, count).into_vec();
    picked.sort_unstable();

    let mut replacements: Vec<(NodeIndex, NodeKind)> = Vec::with_capacity(count);
    for index in picked {
        let node = tree.node(index).expect("sampled in range");
        let new_kind = match node.kind() {
            NodeKind::Action(_) if strict => random_action(rng),
            NodeKind::Condition(_) if strict => random_condition(rng),
            NodeKind::Action(_) | NodeKind::Condition(_) => random_execution_kind(rng),
            control => {
                let children = node.children().len();
                let mut candidates = vec![NodeKind::Selector, NodeKind::Sequence];
                if pool.parallel {
                    candidates.push(NodeKind::Parallel {
                        success_threshold: rng.gen_range(1..=children),
                    });
                }
                if pool.decorator && children == 1 {
                    candidates.push(NodeKind::Decorator(random_policy(rng)));
                }
                // keep kinds that cannot hold the current children out
                let _ = control;
                candidates[rng.gen_range(0..candidates.len())]
            }
        };
        replacements.push((index, new_kind));
    }
    tree.with_kinds(&replacements)
}

impl BehaviorTree {
    /// Clone with the kind of selected nodes replaced; children untouched.
    fn with_kinds(&self, replacements: &[(NodeIndex, NodeKind)]) -> BehaviorTree {
        let mut nodes: Vec<crate::bt::Node> = self
            .nodes()
            .map(|(_, n)| {
                BehaviorTree::raw_node(n.kind(), n.children().to_vec(), n.parent())
            })
            .collect();
        for &(index, kind) in replacements {
            nodes[index] = BehaviorTree::raw_node(
                kind,
                nodes[index].children().to_vec(),
                nodes[index].parent(),
            );
        }
        BehaviorTree::from_parts(nodes, self.root())
    }
}

// ---- annealing -----------------------------------------------------------------

/// k = max(1, round(k0 * decay^generation)): many mutations early, settling
/// to one per individual as the population converges.
pub fn anneal_schedule(generation: u32, config: &GpConfig) -> u32 {
    let raw = config.anneal_initial_mutations as f64
        * config.anneal_decay.powi(generation.min(i32::MAX as u32) as i32);
    (raw.round() as u32).max(1)
}

// ---- selection -----------------------------------------------------------------

/// Deterministic fitness ordering: higher fitness first, ties broken by
/// smaller tree, then original index.
fn ranked_indices(population: &Population) -> Vec<usize> {
    let mut order: Vec<usize> = (0..population.individuals.len()).collect();
    order.sort_by(|&a, &b| {
        let ia = &population.individuals[a];
        let ib = &population.individuals[b];
        let fa = ia.fitness.expect("fitness set");
        let fb = ib.fitness.expect("fitness set");
        fb.partial_cmp(&fa)
            .expect("fitness is finite")
            .then(ia.tree.node_count().cmp(&ib.tree.node_count()))
            .then(a.cmp(&b))
    });
    order
}

pub fn selection_probabilities(
    population: &Population,
    method: SelectionMethod,
    diversity: Option<&DiversityScores>,
) -> SelectionProbabilities {
    let n = population.individuals.len();
    assert!(n > 0, "selection over an empty population");
    let fitness: Vec<f64> = population
        .individuals
        .iter()
        .map(|i| i.fitness.expect("fitness set before selection"))
        .collect();

    match method {
        SelectionMethod::Naive => {
            let total: f64 = fitness.iter().sum();
            if total <= 0.0 {
                return SelectionProbabilities {
                    probabilities: vec![1.0 / n as f64; n],
                    uniform_fallback: true,
                };
            }
            SelectionProbabilities {
                probabilities: fitness.iter().map(|f| f / total).collect(),
                uniform_fallback: false,
            }
        }
        SelectionMethod::RankSpace {
            highest_rank_probability: pc,
        } => {
            assert!((0.0..1.0).contains(&pc) && pc > 0.0, "P_c must lie in (0,1)");
            let order = ranked_indices(population);
            let mut probabilities = vec![0.0; n];
            for (rank, &index) in order.iter().enumerate() {
                // ranks are 1-based: p_k = (1-Pc)^(k-1) * Pc, and the last
                // rank takes the leftover (1-Pc)^(N-1) so the total is 1.
                probabilities[index] = if rank + 1 < n {
                    (1.0 - pc).powi(rank as i32) * pc
                } else {
                    (1.0 - pc).powi(rank as i32)
                };
            }
            SelectionProbabilities {
                probabilities,
                uniform_fallback: false,
            }
        }
        SelectionMethod::DiversityRank => {
            let computed;
            let scores = match diversity {
                Some(d) => &d.0,
                None => {
                    computed = diversity_scores(population);
                    &computed.0
                }
            };
            assert_eq!(scores.len(), n, "diversity scores must match population");
            let d_max = scores.iter().cloned().fold(0.0, f64::max);
            let f_max = fitness.iter().cloned().fold(0.0, f64::max);
            let ref_norm = (d_max * d_max + f_max * f_max).sqrt();
            if ref_norm <= 0.0 {
                return SelectionProbabilities {
                    probabilities: vec![1.0 / n as f64; n],
                    uniform_fallback: true,
                };
            }
            let raw: Vec<f64> = scores
                .iter()
                .zip(fitness.iter())
                .map(|(&d, &f)| {
                    let dist = ((d - d_max).powi(2) + (f - f_max).powi(2)).sqrt();
                    (1.0 - dist / ref_norm).max(0.0)
                })
                .collect();
            let total: f64 = raw.iter().sum();
            if total <= 0.0 {
                return SelectionProbabilities {
                    probabilities: vec![1.0 / n as f64; n],
                    uniform_fallback: true,
                };
            }
            SelectionProbabilities {
                probabilities: raw.iter().map(|r| r / total).collect(),
                uniform_fallback: false,
            }
        }
    }
}

/// Node-label multiset distance, averaged over the rest of the population:
/// d_i = mean_{j != i} |labels(T_i) symdiff labels(T_j)| / (|T_i| + |T_j|).
pub fn diversity_scores(population: &Population) -> DiversityScores {
    let n = population.individuals.len();
    assert!(n > 0, "diversity over an empty population");
    if n == 1 {
        return DiversityScores(vec![0.0]);
    }
    let multisets: Vec<BTreeMap<NodeKind, usize>> = population
        .individuals
        .iter()
        .map(|i| {
            let mut m = BTreeMap::new();
            for (_, node) in i.tree.nodes() {
                *m.entry(node.kind()).or_insert(0) += 1;
            }
            m
        })
        .collect();
    let sizes: Vec<usize> = population
        .individuals
        .iter()
        .map(|i| i.tree.node_count())
        .collect();

    let mut scores = vec![0.0; n];
    for i in 0..n {
        let mut total = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            total += multiset_distance(&multisets[i], &multisets[j], sizes[i] + sizes[j]);
        }
        scores[i] = total / (n - 1) as f64;
    }
    DiversityScores(scores)
}

fn multiset_distance(
    a: &BTreeMap<NodeKind, usize>,
    b: &BTreeMap<NodeKind, usize>,
    size_sum: usize,
) -> f64 {
    let mut diff = 0usize;
    for (kind, &count_a) in a {
        let count_b = b.get(kind).copied().unwrap_or(0);
        diff += count_a.abs_diff(count_b);
    }
    for (kind, &count_b) in b {
        if !a.contains_key(kind) {
            diff += count_b;
        }
    }
    diff as f64 / size_sum as f64
}

// ---- reproduction ---------------------------------------------------------------

fn sample_index<R: Rng>(probabilities: &[f64], rng: &mut R) -> usize {
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probabilities.iter().enumerate() {
        acc += p;
        if draw < acc {
            return i;
        }
    }
    probabilities.len() - 1
}

/// Build the next generation: elites are copied verbatim, the rest come from
/// fitness-proportional sampling, crossover, and `k`-node mutation.
pub fn next_population_with_mutation_count<R: Rng>(
    population: &Population,
    probabilities: &[f64],
    config: &GpConfig,
    k: u32,
    rng: &mut R,
) -> Population {
    assert_eq!(probabilities.len(), population.individuals.len());
    assert!(config.elitism < config.population_size);
    let mut next = Vec::with_capacity(config.population_size);

    let order = ranked_indices(population);
    for &index in order.iter().take(config.elitism) {
        next.push(population.individuals[index].clone());
    }

    while next.len() < config.population_size {
        let a = sample_index(probabilities, rng);
        let b = sample_index(probabilities, rng);
        let (tree_a, tree_b) = if rng.gen::<f64>() < config.crossover_probability {
            crossover(
                &population.individuals[a].tree,
                &population.individuals[b].tree,
                config.max_tree_nodes,
                rng,
            )
        } else {
            (
                population.individuals[a].tree.clone(),
                population.individuals[b].tree.clone(),
            )
        };
        for tree in [tree_a, tree_b] {
            if next.len() == config.population_size {
                break;
            }
            let mutated = mutate(&tree, k, &config.node_pool, config.strict_mutation, rng);
            next.push(Individual::new(mutated));
        }
    }

    Population {
        individuals: next,
        generation: population.generation + 1,
    }
}

/// As [`next_population_with_mutation_count`] with the annealed mutation
/// count for the population's current generation.
pub fn select_next_population<R: Rng>(
    population: &Population,
    probabilities: &[f64],
    config: &GpConfig,
    rng: &mut R,
) -> Population {
    let k = anneal_schedule(population.generation, config);
    next_population_with_mutation_count(population, probabilities, config, k, rng)
}

// ---- random trees ----------------------------------------------------------------

/// Grow a uniformly-random valid tree with at most `max_nodes` nodes.
pub fn random_tree<R: Rng>(rng: &mut R, max_nodes: usize, pool: &NodePool) -> BehaviorTree {
    let budget = rng.gen_range(1..=max_nodes.max(1));
    grow(rng, budget, pool)
}

fn grow<R: Rng>(rng: &mut R, budget: usize, pool: &NodePool) -> BehaviorTree {
    if budget <= 1 || rng.gen_bool(0.3) {
        return BehaviorTree::leaf(random_execution_kind(rng));
    }
    let max_children = (budget - 1).min(4);
    let child_count = rng.gen_range(1..=max_children);
    let mut remaining = budget - 1;
    let mut children = Vec::with_capacity(child_count);
    for i in 0..child_count {
        let slots_left = child_count - i - 1;
        let share = rng.gen_range(1..=remaining - slots_left);
        children.push(grow(rng, share, pool));
        remaining -= share;
    }
    let mut kinds = vec![NodeKind::Selector, NodeKind::Sequence];
    if pool.parallel {
        kinds.push(NodeKind::Parallel {
            success_threshold: rng.gen_range(1..=child_count),
        });
    }
    if pool.decorator && child_count == 1 {
        kinds.push(NodeKind::Decorator(random_policy(rng)));
    }
    let kind = kinds[rng.gen_range(0..kinds.len())];
    BehaviorTree::branch(kind, children)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bt::Predicate;
    use crate::text;

    fn full_pool() -> NodePool {
        NodePool {
            parallel: true,
            decorator: true,
        }
    }

    fn pop_with_fitness(values: &[f64]) -> Population {
        Population {
            individuals: values
                .iter()
                .map(|&f| Individual::with_fitness(BehaviorTree::action(ActionId::Jump), f))
                .collect(),
            generation: 0,
        }
    }

    #[test]
    fn crossover_at_roots_swaps_whole_parents() {
        let a = text::parse("(seq (act right) (act jump))").unwrap();
        let b = text::parse("(act shoot)").unwrap();
        // find a seed whose first two draws pick both roots
        let mut found = false;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (ca, cb) = crossover(&a, &b, 200, &mut rng);
            if ca.structurally_eq(&b) && cb.structurally_eq(&a) {
                found = true;
                break;
            }
        }
        assert!(found, "root-root crossover should occur within 200 seeds");
    }

    #[test]
    fn crossover_preserves_total_node_count() {
        let a = text::parse("(sel (seq (cond enemy@1,1) (act jump)) (act right))").unwrap();
        let b = text::parse("(seq (act left) (sel (act shoot) (cond obstacle@0,0) (act crouch)))")
            .unwrap();
        let total = a.node_count() + b.node_count();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let (ca, cb) = crossover(&a, &b, 200, &mut rng);
            assert_eq!(ca.node_count() + cb.node_count(), total);
            assert!(ca.is_valid() && cb.is_valid());
        }
    }

    #[test]
    fn crossover_respects_size_cap_by_returning_parents() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_tree(&mut rng, 30, &NodePool::default());
        let b = random_tree(&mut rng, 30, &NodePool::default());
        // a cap as small as the bigger parent forces the fallback eventually
        let cap = a.node_count().max(b.node_count());
        for _ in 0..50 {
            let (ca, cb) = crossover(&a, &b, cap, &mut rng);
            assert!(ca.node_count() <= cap || ca.structurally_eq(&a));
            assert!(cb.node_count() <= cap || cb.structurally_eq(&b));
        }
    }

    #[test]
    fn mutate_zero_is_identity() {
        let tree = text::parse("(sel (cond enemy@2,2) (act right))").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let same = mutate(&tree, 0, &NodePool::default(), false, &mut rng);
        assert!(same.structurally_eq(&tree));
    }

    #[test]
    fn mutate_keeps_execution_nodes_execution() {
        let tree = BehaviorTree::action(ActionId::Jump);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let mutated = mutate(&tree, 1, &full_pool(), false, &mut rng);
            assert!(mutated.kind(mutated.root()).unwrap().is_leaf());
            assert!(mutated.is_valid());
        }
    }

    #[test]
    fn strict_mutation_preserves_leaf_category() {
        let tree = BehaviorTree::condition(ConditionId::new(1, 1, Predicate::EnemyAt).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let mutated = mutate(&tree, 1, &NodePool::default(), true, &mut rng);
            assert!(matches!(
                mutated.kind(mutated.root()),
                Some(NodeKind::Condition(_))
            ));
        }
    }

    #[test]
    fn mutate_preserves_children_of_control_nodes() {
        let tree = text::parse("(seq (act right) (act jump) (act shoot))").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mutated = mutate(&tree, 1, &full_pool(), false, &mut rng);
            assert!(mutated.is_valid());
            let root = mutated.node(mutated.root()).unwrap();
            if !root.kind().is_leaf() {
                assert_eq!(root.children().len(), 3);
            }
        }
    }

    #[test]
    fn anneal_schedule_matches_closed_form() {
        let config = GpConfig {
            anneal_initial_mutations: 8,
            anneal_decay: 0.5,
            ..GpConfig::default()
        };
        let ks: Vec<u32> = (0..5).map(|g| anneal_schedule(g, &config)).collect();
        assert_eq!(ks, vec![8, 4, 2, 1, 1]);
        assert_eq!(anneal_schedule(0, &config), 8);
    }

    #[test]
    fn anneal_schedule_is_monotone_and_floored() {
        for (k0, decay) in [(1u32, 0.9), (16, 0.3), (7, 0.77)] {
            let config = GpConfig {
                anneal_initial_mutations: k0,
                anneal_decay: decay,
                ..GpConfig::default()
            };
            let mut prev = u32::MAX;
            for g in 0..50 {
                let k = anneal_schedule(g, &config);
                assert!(k >= 1);
                assert!(k <= prev, "k must never increase");
                prev = k;
            }
        }
    }

    #[test]
    fn naive_probabilities_match_definition() {
        // f = [1, 3]: the ratio definition works for any non-negative scale
        let pop = Population {
            individuals: [1.0, 3.0]
                .iter()
                .map(|&f| Individual {
                    tree: BehaviorTree::action(ActionId::Jump),
                    fitness: Some(f),
                    survival: None,
                })
                .collect(),
            generation: 0,
        };
        let sel = selection_probabilities(&pop, SelectionMethod::Naive, None);
        assert!(!sel.uniform_fallback);
        assert!((sel.probabilities[0] - 0.25).abs() < 1e-12);
        assert!((sel.probabilities[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn naive_all_zero_falls_back_to_uniform() {
        let pop = pop_with_fitness(&[0.0, 0.0, 0.0]);
        let sel = selection_probabilities(&pop, SelectionMethod::Naive, None);
        assert!(sel.uniform_fallback);
        for p in sel.probabilities {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_space_matches_hand_computed_values() {
        // N=3, Pc=2/3: sorted probabilities are [2/3, 2/9, 1/9], and the
        // last rank takes (1-Pc)^(N-1) so they sum to exactly 1.
        let pop = pop_with_fitness(&[0.2, 0.9, 0.5]);
        let sel = selection_probabilities(
            &pop,
            SelectionMethod::RankSpace {
                highest_rank_probability: 2.0 / 3.0,
            },
            None,
        );
        let p = &sel.probabilities;
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p[2] - 2.0 / 9.0).abs() < 1e-12);
        assert!((p[0] - 1.0 / 9.0).abs() < 1e-12);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rank_space_is_non_increasing_for_default_pc() {
        let pop = pop_with_fitness(&[0.1, 0.9, 0.3, 0.7, 0.5]);
        let sel = selection_probabilities(
            &pop,
            SelectionMethod::RankSpace {
                highest_rank_probability: 2.0 / 3.0,
            },
            None,
        );
        let order = ranked_indices(&pop);
        let sorted: Vec<f64> = order.iter().map(|&i| sel.probabilities[i]).collect();
        for pair in sorted.windows(2) {
            assert!(pair[0] >= pair[1]);
        }
    }

    #[test]
    fn diversity_rank_gives_reference_point_maximal_score() {
        let mut pop = pop_with_fitness(&[1.0, 0.4]);
        pop.individuals[0].tree = text::parse("(act right)").unwrap();
        pop.individuals[1].tree = text::parse("(act jump)").unwrap();
        let div = diversity_scores(&pop);
        // both trees are maximally distant, d = [1, 1]; individual 0 also has
        // max fitness, so its raw score is 1 before normalization
        let sel = selection_probabilities(&pop, SelectionMethod::DiversityRank, Some(&div));
        assert!(sel.probabilities[0] > sel.probabilities[1]);
        let sum: f64 = sel.probabilities.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn diversity_of_identical_trees_is_zero() {
        let pop = pop_with_fitness(&[0.5, 0.5]);
        let div = diversity_scores(&pop);
        assert_eq!(div.0, vec![0.0, 0.0]);
    }

    #[test]
    fn diversity_of_disjoint_leaves_is_one() {
        let mut pop = pop_with_fitness(&[0.5, 0.5]);
        pop.individuals[0].tree = text::parse("(act right)").unwrap();
        pop.individuals[1].tree = text::parse("(act jump)").unwrap();
        let div = diversity_scores(&pop);
        assert_eq!(div.0, vec![1.0, 1.0]);
    }

    #[test]
    fn diversity_is_symmetric_and_singleton_is_zero() {
        let single = pop_with_fitness(&[0.9]);
        assert_eq!(diversity_scores(&single).0, vec![0.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let a = random_tree(&mut rng, 20, &full_pool());
            let b = random_tree(&mut rng, 20, &full_pool());
            let mut pop = pop_with_fitness(&[0.1, 0.2]);
            pop.individuals[0].tree = a;
            pop.individuals[1].tree = b;
            let div = diversity_scores(&pop);
            assert!((div.0[0] - div.0[1]).abs() < 1e-12, "pairwise distance is symmetric");
            assert!(div.0[0] >= 0.0 && div.0[0] <= 1.0);
        }
    }

    #[test]
    fn probabilities_sum_to_one_for_all_methods() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for trial in 0..200 {
            let n = rng.gen_range(1..=64);
            let values: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let mut pop = pop_with_fitness(&values);
            for ind in pop.individuals.iter_mut() {
                ind.tree = random_tree(&mut rng, 10, &NodePool::default());
            }
            for method in [
                SelectionMethod::Naive,
                SelectionMethod::RankSpace {
                    highest_rank_probability: 2.0 / 3.0,
                },
                SelectionMethod::DiversityRank,
            ] {
                let sel = selection_probabilities(&pop, method, None);
                let sum: f64 = sel.probabilities.iter().sum();
                assert!(
                    (sum - 1.0).abs() < 1e-9,
                    "trial {trial}: sum {sum} for {method:?}"
                );
                assert!(sel.probabilities.iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn naive_probabilities_are_scale_invariant() {
        let base = [0.12, 0.5, 0.33, 0.05];
        let scaled: Vec<f64> = base.iter().map(|f| f * 1.7).collect();
        // scale outside [0,1] is fine for the math; bypass the range check
        let mk = |vals: &[f64]| Population {
            individuals: vals
                .iter()
                .map(|&f| Individual {
                    tree: BehaviorTree::action(ActionId::Jump),
                    fitness: Some(f),
                    survival: None,
                })
                .collect(),
            generation: 0,
        };
        let a = selection_probabilities(&mk(&base), SelectionMethod::Naive, None);
        let b = selection_probabilities(&mk(&scaled), SelectionMethod::Naive, None);
        for (pa, pb) in a.probabilities.iter().zip(b.probabilities.iter()) {
            assert!((pa - pb).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_elitism_copies_the_best_unchanged() {
        let mut pop = pop_with_fitness(&[0.2, 0.8, 0.5]);
        pop.individuals[1].tree = text::parse("(seq (act right) (act jump))").unwrap();
        let config = GpConfig {
            population_size: 3,
            elitism: 2,
            ..GpConfig::default()
        };
        let probs = vec![1.0 / 3.0; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let next = next_population_with_mutation_count(&pop, &probs, &config, 0, &mut rng);
        assert_eq!(next.individuals.len(), 3);
        assert_eq!(next.generation, 1);
        // best two individuals come through with fitness intact
        assert_eq!(next.individuals[0].fitness, Some(0.8));
        assert!(next.individuals[0]
            .tree
            .structurally_eq(&pop.individuals[1].tree));
        assert_eq!(next.individuals[1].fitness, Some(0.5));
    }

    #[test]
    fn deterministic_sampling_clones_the_certain_individual() {
        let mut pop = pop_with_fitness(&[0.9, 0.1, 0.1]);
        pop.individuals[0].tree = text::parse("(act crouch)").unwrap();
        let config = GpConfig {
            population_size: 3,
            elitism: 0,
            crossover_probability: 0.0,
            ..GpConfig::default()
        };
        let probs = vec![1.0, 0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let next = next_population_with_mutation_count(&pop, &probs, &config, 0, &mut rng);
        for ind in &next.individuals {
            assert!(ind.tree.structurally_eq(&pop.individuals[0].tree));
        }
    }

    #[test]
    fn evolution_is_deterministic_under_a_fixed_seed() {
        let run = || {
            let mut rng = substream(42, "gp", 7);
            let mut pop = Population {
                individuals: (0..8)
                    .map(|_| {
                        Individual::with_fitness(
                            random_tree(&mut rng, 12, &NodePool::default()),
                            rng.gen::<f64>(),
                        )
                    })
                    .collect(),
                generation: 0,
            };
            for _ in 0..5 {
                let sel = selection_probabilities(&pop, SelectionMethod::Naive, None);
                pop = select_next_population(&pop, &sel.probabilities, &GpConfig {
                    population_size: 8,
                    elitism: 1,
                    ..GpConfig::default()
                }, &mut rng);
                for ind in pop.individuals.iter_mut() {
                    if ind.fitness.is_none() {
                        ind.fitness = Some(((ind.tree.node_count() % 10) as f64) / 10.0);
                    }
                }
            }
            pop.individuals
                .iter()
                .map(|i| text::print(&i.tree))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn closure_over_random_crossover_and_mutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let pool = full_pool();
        for _ in 0..500 {
            let a = random_tree(&mut rng, 50, &pool);
            let b = random_tree(&mut rng, 50, &pool);
            assert!(a.is_valid() && b.is_valid());
            let (ca, cb) = crossover(&a, &b, 100, &mut rng);
            assert!(ca.is_valid() && cb.is_valid());
            let k = rng.gen_range(0..6);
            assert!(mutate(&ca, k, &pool, false, &mut rng).is_valid());
            assert!(mutate(&cb, k, &pool, true, &mut rng).is_valid());
        }
    }
}
