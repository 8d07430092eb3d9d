//! Behavior-tree representation, tick engine, and structural surgery.
//!
//! Trees are stored as an index-based arena ([`BehaviorTree`]) and are
//! immutable values: every surgery operation returns a fresh tree with a
//! compact, pre-order arena. Structural equality compares shape and node
//! kinds, never arena indices.

use std::fmt;

pub type NodeIndex = usize;

/// Three-valued result of ticking a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Success,
    Failure,
    Running,
}

/// The five primitive actions the agent can request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionId {
    WalkRight,
    WalkLeft,
    Crouch,
    Shoot,
    Jump,
}

impl ActionId {
    pub const ALL: [ActionId; 5] = [
        ActionId::WalkRight,
        ActionId::WalkLeft,
        ActionId::Crouch,
        ActionId::Shoot,
        ActionId::Jump,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActionId::WalkRight => "right",
            ActionId::WalkLeft => "left",
            ActionId::Crouch => "crouch",
            ActionId::Shoot => "shoot",
            ActionId::Jump => "jump",
        }
    }

    pub fn from_name(name: &str) -> Option<ActionId> {
        Self::ALL.iter().copied().find(|a| a.name() == name)
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a condition tests about a receptive-field cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Predicate {
    EnemyAt,
    ObstacleAt,
}

impl Predicate {
    pub fn name(self) -> &'static str {
        match self {
            Predicate::EnemyAt => "enemy",
            Predicate::ObstacleAt => "obstacle",
        }
    }
}

/// One of the 50 observable conditions: a predicate on a cell of the 5x5
/// receptive field (row 0 = top, col 0 = left; the agent sits at (2,2)).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConditionId {
    row: u8,
    col: u8,
    predicate: Predicate,
}

impl ConditionId {
    pub const GRID: u8 = 5;
    pub const COUNT: usize = 50;

    pub fn new(row: u8, col: u8, predicate: Predicate) -> Option<ConditionId> {
        if row < Self::GRID && col < Self::GRID {
            Some(ConditionId { row, col, predicate })
        } else {
            None
        }
    }

    pub fn row(self) -> u8 {
        self.row
    }

    pub fn col(self) -> u8 {
        self.col
    }

    pub fn predicate(self) -> Predicate {
        self.predicate
    }

    /// Dense index in 0..50, stable across runs.
    pub fn index(self) -> usize {
        (self.row as usize * Self::GRID as usize + self.col as usize) * 2
            + match self.predicate {
                Predicate::EnemyAt => 0,
                Predicate::ObstacleAt => 1,
            }
    }

    pub fn all() -> impl Iterator<Item = ConditionId> {
        (0..Self::GRID).flat_map(|row| {
            (0..Self::GRID).flat_map(move |col| {
                [Predicate::EnemyAt, Predicate::ObstacleAt]
                    .into_iter()
                    .map(move |predicate| ConditionId { row, col, predicate })
            })
        })
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{},{}", self.predicate.name(), self.row, self.col)
    }
}

/// How a decorator rewrites its child's terminal status. Running always
/// passes through unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DecoratorPolicy {
    Invert,
    ForceSuccess,
    ForceFailure,
}

impl DecoratorPolicy {
    pub fn apply(self, status: Status) -> Status {
        match (self, status) {
            (_, Status::Running) => Status::Running,
            (DecoratorPolicy::Invert, Status::Success) => Status::Failure,
            (DecoratorPolicy::Invert, Status::Failure) => Status::Success,
            (DecoratorPolicy::ForceSuccess, _) => Status::Success,
            (DecoratorPolicy::ForceFailure, _) => Status::Failure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Selector,
    Sequence,
    Parallel { success_threshold: usize },
    Decorator(DecoratorPolicy),
    Action(ActionId),
    Condition(ConditionId),
}

impl NodeKind {
    pub fn is_leaf(&self) -> bool {
        matches!(self, NodeKind::Action(_) | NodeKind::Condition(_))
    }

    /// Control-flow nodes in the paper's sense: everything that routes ticks.
    pub fn is_control(&self) -> bool {
        !self.is_leaf()
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub(crate) kind: NodeKind,
    pub(crate) children: Vec<NodeIndex>,
    pub(crate) parent: Option<NodeIndex>,
}

impl Node {
    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    pub fn children(&self) -> &[NodeIndex] {
        &self.children
    }

    pub fn parent(&self) -> Option<NodeIndex> {
        self.parent
    }
}

/// An arena-backed behavior tree. The arena is always compact (every slot
/// reachable from the root) and stored in pre-order after construction or
/// surgery.
#[derive(Debug, Clone)]
pub struct BehaviorTree {
    nodes: Vec<Node>,
    root: NodeIndex,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StructuralError {
    #[error("node index {0} is out of bounds")]
    InvalidIndex(NodeIndex),
    #[error("parallel node {node}: threshold {threshold} out of range for {children} children")]
    ThresholdOutOfRange {
        node: NodeIndex,
        threshold: usize,
        children: usize,
    },
    #[error("node {0} is missing a required child")]
    MissingChild(NodeIndex),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SurgeryError {
    #[error("node index {0} is out of bounds")]
    InvalidIndex(NodeIndex),
    #[error("cannot remove the root node")]
    CannotRemoveRoot,
    #[error("removal would cascade away the entire tree")]
    WouldEmptyTree,
    #[error("replacement tree has {0} validation violation(s)")]
    InvalidReplacement(usize),
}

/// A single invariant violation found by [`BehaviorTree::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Child count incompatible with the node kind.
    Arity { node: NodeIndex, children: usize },
    /// Parallel threshold outside 1..=children.
    Threshold {
        node: NodeIndex,
        threshold: usize,
        children: usize,
    },
    /// Parent/child links disagree.
    Linkage { node: NodeIndex },
    /// Root has a parent link.
    RootHasParent { node: NodeIndex },
    /// Node not reachable from the root exactly once.
    Unreachable { node: NodeIndex },
    /// Child index out of bounds.
    BadChildIndex { node: NodeIndex, child: NodeIndex },
    /// Root index out of bounds.
    BadRoot { root: NodeIndex },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Arity { node, children } => {
                write!(f, "node {node}: invalid child count {children}")
            }
            Violation::Threshold {
                node,
                threshold,
                children,
            } => write!(
                f,
                "node {node}: parallel threshold {threshold} out of range for {children} children"
            ),
            Violation::Linkage { node } => write!(f, "node {node}: parent/child links disagree"),
            Violation::RootHasParent { node } => write!(f, "root node {node} has a parent"),
            Violation::Unreachable { node } => {
                write!(f, "node {node}: not reachable from the root exactly once")
            }
            Violation::BadChildIndex { node, child } => {
                write!(f, "node {node}: child index {child} out of bounds")
            }
            Violation::BadRoot { root } => write!(f, "root index {root} out of bounds"),
        }
    }
}

impl BehaviorTree {
    // ---- construction -----------------------------------------------------

    pub fn leaf(kind: NodeKind) -> BehaviorTree {
        assert!(kind.is_leaf(), "leaf() requires an execution node kind");
        BehaviorTree {
            nodes: vec![Node {
                kind,
                children: Vec::new(),
                parent: None,
            }],
            root: 0,
        }
    }

    pub fn action(action: ActionId) -> BehaviorTree {
        Self::leaf(NodeKind::Action(action))
    }

    pub fn condition(condition: ConditionId) -> BehaviorTree {
        Self::leaf(NodeKind::Condition(condition))
    }

    /// Compose a control node over child trees. Panics when the arity rules
    /// of `kind` cannot hold (empty children, decorator with != 1 child).
    pub fn branch(kind: NodeKind, children: Vec<BehaviorTree>) -> BehaviorTree {
        assert!(kind.is_control(), "branch() requires a control node kind");
        assert!(!children.is_empty(), "control nodes need at least one child");
        if matches!(kind, NodeKind::Decorator(_)) {
            assert!(children.len() == 1, "decorators take exactly one child");
        }
        let mut nodes = vec![Node {
            kind,
            children: Vec::new(),
            parent: None,
        }];
        for child in &children {
            let idx = copy_rec(child, child.root, &mut nodes, Some(0));
            nodes[0].children.push(idx);
        }
        BehaviorTree { nodes, root: 0 }
    }

    pub fn selector(children: Vec<BehaviorTree>) -> BehaviorTree {
        Self::branch(NodeKind::Selector, children)
    }

    pub fn sequence(children: Vec<BehaviorTree>) -> BehaviorTree {
        Self::branch(NodeKind::Sequence, children)
    }

    pub fn parallel(success_threshold: usize, children: Vec<BehaviorTree>) -> BehaviorTree {
        Self::branch(
            NodeKind::Parallel { success_threshold },
            children,
        )
    }

    pub fn decorator(policy: DecoratorPolicy, child: BehaviorTree) -> BehaviorTree {
        Self::branch(NodeKind::Decorator(policy), vec![child])
    }

    /// Low-level constructor used by the parser and by tests that need to
    /// build malformed trees. Performs no validation.
    pub(crate) fn from_parts(nodes: Vec<Node>, root: NodeIndex) -> BehaviorTree {
        BehaviorTree { nodes, root }
    }

    pub(crate) fn raw_node(kind: NodeKind, children: Vec<NodeIndex>, parent: Option<NodeIndex>) -> Node {
        Node {
            kind,
            children,
            parent,
        }
    }

    // ---- accessors ---------------------------------------------------------

    pub fn root(&self) -> NodeIndex {
        self.root
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, index: NodeIndex) -> Option<&Node> {
        self.nodes.get(index)
    }

    pub fn kind(&self, index: NodeIndex) -> Option<NodeKind> {
        self.nodes.get(index).map(|n| n.kind)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeIndex, &Node)> {
        self.nodes.iter().enumerate()
    }

    /// Number of nodes in the subtree rooted at `node`.
    pub fn subtree_size(&self, node: NodeIndex) -> usize {
        let mut count = 0;
        let mut stack = vec![node];
        while let Some(i) = stack.pop() {
            count += 1;
            stack.extend(self.nodes[i].children.iter().copied());
        }
        count
    }

    /// Maximum node depth, counting the root as 1.
    pub fn depth(&self) -> usize {
        fn rec(tree: &BehaviorTree, node: NodeIndex) -> usize {
            1 + tree.nodes[node]
                .children
                .iter()
                .map(|&c| rec(tree, c))
                .max()
                .unwrap_or(0)
        }
        rec(self, self.root)
    }

    // ---- tick engine -------------------------------------------------------

    /// Tick the subtree rooted at `node`. Each node is visited at most once
    /// per call; selector and sequence short-circuit at the deciding child.
    pub fn tick_node<C: TickContext>(
        &self,
        node: NodeIndex,
        ctx: &mut C,
    ) -> Result<Status, StructuralError> {
        let n = self
            .nodes
            .get(node)
            .ok_or(StructuralError::InvalidIndex(node))?;
        match n.kind {
            NodeKind::Selector => {
                for &child in &n.children {
                    match self.tick_node(child, ctx)? {
                        Status::Running => return Ok(Status::Running),
                        Status::Success => return Ok(Status::Success),
                        Status::Failure => {}
                    }
                }
                Ok(Status::Failure)
            }
            NodeKind::Sequence => {
                for &child in &n.children {
                    match self.tick_node(child, ctx)? {
                        Status::Running => return Ok(Status::Running),
                        Status::Failure => return Ok(Status::Failure),
                        Status::Success => {}
                    }
                }
                Ok(Status::Success)
            }
            NodeKind::Parallel { success_threshold } => {
                let total = n.children.len();
                if success_threshold == 0 || success_threshold > total {
                    return Err(StructuralError::ThresholdOutOfRange {
                        node,
                        threshold: success_threshold,
                        children: total,
                    });
                }
                // Logical parallelism: all children tick sequentially in order.
                let mut successes = 0;
                let mut failures = 0;
                for &child in &n.children {
                    match self.tick_node(child, ctx)? {
                        Status::Success => successes += 1,
                        Status::Failure => failures += 1,
                        Status::Running => {}
                    }
                }
                if successes >= success_threshold {
                    Ok(Status::Success)
                } else if failures >= total - success_threshold + 1 {
                    Ok(Status::Failure)
                } else {
                    Ok(Status::Running)
                }
            }
            NodeKind::Decorator(policy) => {
                let child = *n
                    .children
                    .first()
                    .ok_or(StructuralError::MissingChild(node))?;
                Ok(policy.apply(self.tick_node(child, ctx)?))
            }
            NodeKind::Action(action) => Ok(ctx.run_action(node, action)),
            NodeKind::Condition(condition) => Ok(if ctx.check_condition(node, condition) {
                Status::Success
            } else {
                Status::Failure
            }),
        }
    }

    /// Tick from the root.
    pub fn tick_root<C: TickContext>(&self, ctx: &mut C) -> Result<Status, StructuralError> {
        self.tick_node(self.root, ctx)
    }

    // ---- validation ----------------------------------------------------------

    /// Check every structural invariant; an empty list means the tree is ok.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        if self.root >= self.nodes.len() {
            violations.push(Violation::BadRoot { root: self.root });
            return violations;
        }
        if self.nodes[self.root].parent.is_some() {
            violations.push(Violation::RootHasParent { node: self.root });
        }

        let mut ref_count = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            for &child in &node.children {
                if child >= self.nodes.len() {
                    violations.push(Violation::BadChildIndex { node: i, child });
                    continue;
                }
                ref_count[child] += 1;
                if self.nodes[child].parent != Some(i) {
                    violations.push(Violation::Linkage { node: child });
                }
            }
            let children = node.children.len();
            let arity_ok = match node.kind {
                NodeKind::Selector | NodeKind::Sequence => children >= 1,
                NodeKind::Parallel { success_threshold } => {
                    if children >= 1
                        && (success_threshold == 0 || success_threshold > children)
                    {
                        violations.push(Violation::Threshold {
                            node: i,
                            threshold: success_threshold,
                            children,
                        });
                    }
                    children >= 1
                }
                NodeKind::Decorator(_) => children == 1,
                NodeKind::Action(_) | NodeKind::Condition(_) => children == 0,
            };
            if !arity_ok {
                violations.push(Violation::Arity { node: i, children });
            }
        }

        // Reachability: every arena slot must be visited exactly once from
        // the root, so surgery and serialization see the whole arena.
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(i) = stack.pop() {
            if seen[i] {
                continue; // cycle; ref_count/linkage checks already flag it
            }
            seen[i] = true;
            for &child in &self.nodes[i].children {
                if child < self.nodes.len() {
                    stack.push(child);
                }
            }
        }
        for (i, &visited) in seen.iter().enumerate() {
            let expected_refs = if i == self.root { 0 } else { 1 };
            if !visited || ref_count[i] != expected_refs {
                violations.push(Violation::Unreachable { node: i });
            }
        }
        violations
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    // ---- traversal -------------------------------------------------------------

    /// Breadth-first enumeration of all node indices starting at the root;
    /// ties within a level resolve left to right.
    pub fn enumerate_subtrees(&self) -> Vec<NodeIndex> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(self.root);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            queue.extend(self.nodes[i].children.iter().copied());
        }
        order
    }

    // ---- surgery -------------------------------------------------------------

    /// Copy out the subtree rooted at `node` as an independent tree.
    pub fn extract_subtree(&self, node: NodeIndex) -> Result<BehaviorTree, SurgeryError> {
        if node >= self.nodes.len() {
            return Err(SurgeryError::InvalidIndex(node));
        }
        let mut nodes = Vec::new();
        copy_rec(self, node, &mut nodes, None);
        Ok(BehaviorTree { nodes, root: 0 })
    }

    /// Return a new tree with the subtree at `node` replaced by `replacement`.
    pub fn replace_subtree(
        &self,
        node: NodeIndex,
        replacement: &BehaviorTree,
    ) -> Result<BehaviorTree, SurgeryError> {
        if node >= self.nodes.len() {
            return Err(SurgeryError::InvalidIndex(node));
        }
        let violations = replacement.validate();
        if !violations.is_empty() {
            return Err(SurgeryError::InvalidReplacement(violations.len()));
        }
        fn build(
            src: &BehaviorTree,
            current: NodeIndex,
            target: NodeIndex,
            replacement: &BehaviorTree,
            dst: &mut Vec<Node>,
            parent: Option<NodeIndex>,
        ) -> NodeIndex {
            if current == target {
                return copy_rec(replacement, replacement.root, dst, parent);
            }
            let slot = dst.len();
            dst.push(Node {
                kind: src.nodes[current].kind,
                children: Vec::new(),
                parent,
            });
            let children = src.nodes[current].children.clone();
            for child in children {
                let idx = build(src, child, target, replacement, dst, Some(slot));
                dst[slot].children.push(idx);
            }
            slot
        }
        let mut nodes = Vec::new();
        build(self, self.root, node, replacement, &mut nodes, None);
        Ok(BehaviorTree { nodes, root: 0 })
    }

    /// Delete `node` and its descendants. A selector/sequence/parallel or
    /// decorator parent left with zero children is removed as well, cascading
    /// upward; parallel thresholds are clamped to the surviving child count.
    pub fn remove_subtree(&self, node: NodeIndex) -> Result<BehaviorTree, SurgeryError> {
        if node >= self.nodes.len() {
            return Err(SurgeryError::InvalidIndex(node));
        }
        if node == self.root {
            return Err(SurgeryError::CannotRemoveRoot);
        }

        let mut removed = vec![false; self.nodes.len()];
        let mut stack = vec![node];
        while let Some(i) = stack.pop() {
            removed[i] = true;
            stack.extend(self.nodes[i].children.iter().copied());
        }
        // Cascade: walk up while a control node has lost all children.
        let mut cursor = self.nodes[node].parent;
        while let Some(p) = cursor {
            let survivors = self.nodes[p]
                .children
                .iter()
                .filter(|&&c| !removed[c])
                .count();
            if survivors == 0 {
                if p == self.root {
                    return Err(SurgeryError::WouldEmptyTree);
                }
                removed[p] = true;
                cursor = self.nodes[p].parent;
            } else {
                break;
            }
        }

        fn build(
            src: &BehaviorTree,
            current: NodeIndex,
            removed: &[bool],
            dst: &mut Vec<Node>,
            parent: Option<NodeIndex>,
        ) -> NodeIndex {
            let slot = dst.len();
            dst.push(Node {
                kind: src.nodes[current].kind,
                children: Vec::new(),
                parent,
            });
            let children: Vec<NodeIndex> = src.nodes[current]
                .children
                .iter()
                .copied()
                .filter(|&c| !removed[c])
                .collect();
            for child in children {
                let idx = build(src, child, removed, dst, Some(slot));
                dst[slot].children.push(idx);
            }
            if let NodeKind::Parallel { success_threshold } = dst[slot].kind {
                let n = dst[slot].children.len();
                dst[slot].kind = NodeKind::Parallel {
                    success_threshold: success_threshold.min(n).max(1),
                };
            }
            slot
        }
        let mut nodes = Vec::new();
        build(self, self.root, &removed, &mut nodes, None);
        Ok(BehaviorTree { nodes, root: 0 })
    }

    // ---- equality ---------------------------------------------------------------

    /// Shape-and-kind equality, independent of arena index values.
    pub fn structurally_eq(&self, other: &BehaviorTree) -> bool {
        fn rec(a: &BehaviorTree, ai: NodeIndex, b: &BehaviorTree, bi: NodeIndex) -> bool {
            let (na, nb) = (&a.nodes[ai], &b.nodes[bi]);
            na.kind == nb.kind
                && na.children.len() == nb.children.len()
                && na
                    .children
                    .iter()
                    .zip(nb.children.iter())
                    .all(|(&ca, &cb)| rec(a, ca, b, cb))
        }
        rec(self, self.root, other, other.root)
    }
}

fn copy_rec(
    src: &BehaviorTree,
    src_index: NodeIndex,
    dst: &mut Vec<Node>,
    parent: Option<NodeIndex>,
) -> NodeIndex {
    let slot = dst.len();
    dst.push(Node {
        kind: src.nodes[src_index].kind,
        children: Vec::new(),
        parent,
    });
    let children = src.nodes[src_index].children.clone();
    for child in children {
        let idx = copy_rec(src, child, dst, Some(slot));
        dst[slot].children.push(idx);
    }
    slot
}

// ---- blackboard -------------------------------------------------------------

/// Leaf evaluation hook for the tick engine. The node index lets
/// instrumented contexts script per-leaf results and count visits.
pub trait TickContext {
    fn check_condition(&mut self, node: NodeIndex, condition: ConditionId) -> bool;
    fn run_action(&mut self, node: NodeIndex, action: ActionId) -> Status;
}

/// Boolean value of each of the 50 conditions for one tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConditionValues([bool; ConditionId::COUNT]);

impl Default for ConditionValues {
    fn default() -> ConditionValues {
        ConditionValues([false; ConditionId::COUNT])
    }
}

impl ConditionValues {
    pub fn get(&self, condition: ConditionId) -> bool {
        self.0[condition.index()]
    }

    pub fn set(&mut self, condition: ConditionId, value: bool) {
        self.0[condition.index()] = value;
    }
}

/// Per-tick interface between a tree and the simulator: full condition
/// snapshot in, first requested action out, plus the outcome of the action
/// executed on the previous tick (used for action-node status).
#[derive(Debug, Clone)]
pub struct Blackboard {
    conditions: ConditionValues,
    requested: Option<ActionId>,
    last_action: Option<(ActionId, bool)>,
}

impl Blackboard {
    pub fn new(conditions: ConditionValues, last_action: Option<(ActionId, bool)>) -> Blackboard {
        Blackboard {
            conditions,
            requested: None,
            last_action,
        }
    }

    /// The first action requested during this tick, if any.
    pub fn requested_action(&self) -> Option<ActionId> {
        self.requested
    }

    pub fn conditions(&self) -> &ConditionValues {
        &self.conditions
    }
}

impl TickContext for Blackboard {
    fn check_condition(&mut self, _node: NodeIndex, condition: ConditionId) -> bool {
        self.conditions.get(condition)
    }

    fn run_action(&mut self, _node: NodeIndex, action: ActionId) -> Status {
        // Running on the tick that requests the actuation; the environment's
        // report about the previous tick resolves it to Success/Failure.
        let status = match self.last_action {
            Some((executed, ok)) if executed == action => {
                if ok {
                    Status::Success
                } else {
                    Status::Failure
                }
            }
            _ => Status::Running,
        };
        // A node concluding Failure reports "not executable" and must not
        // claim the tick, or its fallback sibling could never actuate.
        if status != Status::Failure && self.requested.is_none() {
            self.requested = Some(action);
        }
        status
    }
}
