//! Shared AND-OR circuits over rule and neural leaves, their semiring
//! evaluation, the best-derivation backtrace and reverse-mode adjoints.

mod semiring;

use std::fmt::Write as _;

use num_rational::BigRational;
use num_traits::{One, Zero};
use rustc_hash::FxHashMap;

use crate::program::RuleId;
use crate::terms::{Symbol, Term};

pub use semiring::{log_add_exp, Counting, LogProb, Prob, Semiring, Viterbi};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const ZERO: NodeId = NodeId(0);
    pub const ONE: NodeId = NodeId(1);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LeafId(pub u32);

impl LeafId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A neural model applied to ground inputs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NeuralCall {
    pub model: Symbol,
    pub inputs: Vec<Term>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Leaf {
    /// Probability of a weighted rule.
    Rule(RuleId),
    /// Entry `output` of the distribution of neural call `call`.
    Neural { call: u32, output: u32 },
    /// Always one; tags the success of answer `k` so its probability can be
    /// read off as an adjoint.
    Marker(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Zero,
    One,
    Leaf(LeafId),
    And { start: u32, len: u32 },
    Or { start: u32, len: u32 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CircuitError {
    #[error("no value for leaf {leaf} (valuation has {len} entries)")]
    MissingLeaf { leaf: usize, len: usize },
    #[error("node values do not belong to this circuit")]
    Mismatch,
    #[error("node {0} is not in the circuit")]
    UnknownNode(u32),
}

#[derive(Debug, Clone)]
enum Bucket {
    One(NodeId),
    Many(Vec<NodeId>),
}

/// Arena of hash-consed nodes. Children always precede their parents, so
/// ascending id order is a topological order.
#[derive(Debug, Clone)]
pub struct Circuit {
    nodes: Vec<Node>,
    children: Vec<NodeId>,
    leaves: Vec<Leaf>,
    calls: Vec<NeuralCall>,
    leaf_nodes: FxHashMap<Leaf, NodeId>,
    call_index: FxHashMap<NeuralCall, u32>,
    interned: FxHashMap<u64, Bucket>,
}

impl Default for Circuit {
    fn default() -> Self {
        Circuit::new()
    }
}

fn structural_hash(is_and: bool, children: &[NodeId]) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = rustc_hash::FxHasher::default();
    is_and.hash(&mut h);
    children.hash(&mut h);
    h.finish()
}

impl Circuit {
    pub fn new() -> Circuit {
        Circuit {
            nodes: vec![Node::Zero, Node::One],
            children: Vec::new(),
            leaves: Vec::new(),
            calls: Vec::new(),
            leaf_nodes: FxHashMap::default(),
            call_index: FxHashMap::default(),
            interned: FxHashMap::default(),
        }
    }

    /// Number of nodes including the two constants.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() <= 2
    }

    pub fn node(&self, id: NodeId) -> Node {
        self.nodes[id.index()]
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        match self.nodes[id.index()] {
            Node::And { start, len } | Node::Or { start, len } => &self.children[start as usize..(start + len) as usize],
            _ => &[],
        }
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn leaf(&self, id: LeafId) -> Leaf {
        self.leaves[id.index()]
    }

    pub fn calls(&self) -> &[NeuralCall] {
        &self.calls
    }

    pub fn call(&self, index: u32) -> &NeuralCall {
        &self.calls[index as usize]
    }

    /// Node of a leaf; each leaf has exactly one node.
    pub fn leaf_node(&mut self, leaf: Leaf) -> NodeId {
        if let Some(id) = self.leaf_nodes.get(&leaf) {
            return *id;
        }
        let lid = LeafId(self.leaves.len() as u32);
        self.leaves.push(leaf);
        let id = self.push(Node::Leaf(lid));
        self.leaf_nodes.insert(leaf, id);
        id
    }

    pub fn rule_leaf(&mut self, rule: RuleId) -> NodeId {
        self.leaf_node(Leaf::Rule(rule))
    }

    pub fn marker(&mut self, k: u32) -> NodeId {
        self.leaf_node(Leaf::Marker(k))
    }

    pub fn intern_call(&mut self, model: Symbol, inputs: Vec<Term>) -> u32 {
        let call = NeuralCall { model, inputs };
        if let Some(i) = self.call_index.get(&call) {
            return *i;
        }
        let i = self.calls.len() as u32;
        self.calls.push(call.clone());
        self.call_index.insert(call, i);
        i
    }

    pub fn neural_leaf(&mut self, model: Symbol, inputs: Vec<Term>, output: usize) -> NodeId {
        let call = self.intern_call(model, inputs);
        self.leaf_node(Leaf::Neural {
            call,
            output: output as u32,
        })
    }

    /// Leaf node of an existing leaf id, if any.
    pub fn node_of_leaf(&self, leaf: LeafId) -> Option<NodeId> {
        self.leaf_nodes.get(&self.leaves[leaf.index()]).copied()
    }

    fn push(&mut self, node: Node) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(node);
        id
    }

    fn intern(&mut self, is_and: bool, kids: Vec<NodeId>) -> NodeId {
        let hash = structural_hash(is_and, &kids);
        let matches = |c: &Circuit, id: NodeId| {
            let same_kind = matches!((c.nodes[id.index()], is_and), (Node::And { .. }, true) | (Node::Or { .. }, false));
            same_kind && c.children(id) == kids.as_slice()
        };
        match self.interned.get(&hash) {
            Some(Bucket::One(id)) if matches(self, *id) => return *id,
            Some(Bucket::Many(ids)) => {
                if let Some(id) = ids.iter().find(|id| matches(self, **id)) {
                    return *id;
                }
            }
            _ => {}
        }
        let start = self.children.len() as u32;
        let len = kids.len() as u32;
        self.children.extend_from_slice(&kids);
        let id = self.push(if is_and { Node::And { start, len } } else { Node::Or { start, len } });
        match self.interned.remove(&hash) {
            None => self.interned.insert(hash, Bucket::One(id)),
            Some(Bucket::One(prev)) => self.interned.insert(hash, Bucket::Many(vec![prev, id])),
            Some(Bucket::Many(mut ids)) => {
                ids.push(id);
                self.interned.insert(hash, Bucket::Many(ids))
            }
        };
        id
    }

    /// Conjunction. `One` children are dropped, any `Zero` child gives
    /// `Zero`, a single remaining child is returned as is.
    pub fn and(&mut self, kids: Vec<NodeId>) -> NodeId {
        if kids.contains(&NodeId::ZERO) {
            return NodeId::ZERO;
        }
        let kids: Vec<NodeId> = kids.into_iter().filter(|k| *k != NodeId::ONE).collect();
        match kids.len() {
            0 => NodeId::ONE,
            1 => kids[0],
            _ => self.intern(true, kids),
        }
    }

    /// Disjunction over alternatives. `Zero` children are dropped; an
    /// empty disjunction is `Zero`, a single alternative is returned as is.
    pub fn or(&mut self, kids: Vec<NodeId>) -> NodeId {
        let kids: Vec<NodeId> = kids.into_iter().filter(|k| *k != NodeId::ZERO).collect();
        match kids.len() {
            0 => NodeId::ZERO,
            1 => kids[0],
            _ => self.intern(false, kids),
        }
    }

    /// Nodes reachable from `root`, constants excluded.
    pub fn reachable(&self, root: NodeId) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            if seen[id.index()] {
                continue;
            }
            seen[id.index()] = true;
            stack.extend_from_slice(self.children(id));
        }
        seen[0] = false;
        seen[1] = false;
        seen
    }

    pub fn node_count(&self, root: NodeId) -> usize {
        self.reachable(root).iter().filter(|r| **r).count()
    }

    fn check_env<T>(&self, env: &[T]) -> Result<(), CircuitError> {
        if env.len() < self.leaves.len() {
            return Err(CircuitError::MissingLeaf {
                leaf: env.len(),
                len: env.len(),
            });
        }
        Ok(())
    }

    /// Values of every node under semiring `S`, given per-leaf values.
    pub fn evaluate<S: Semiring>(&self, env: &[S::Value]) -> Result<Vec<S::Value>, CircuitError> {
        self.check_env(env)?;
        let mut values: Vec<S::Value> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let v = match *node {
                Node::Zero => S::zero(),
                Node::One => S::one(),
                Node::Leaf(l) => env[l.index()],
                Node::And { .. } => S::product(self.children(NodeId(i as u32)).iter().map(|c| values[c.index()])),
                Node::Or { .. } => S::sum(self.children(NodeId(i as u32)).iter().map(|c| values[c.index()])),
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Embeds leaf probabilities into `S` and evaluates.
    pub fn evaluate_probs<S: Semiring>(&self, probs: &[f64]) -> Result<Vec<S::Value>, CircuitError> {
        self.check_env(probs)?;
        let env: Vec<S::Value> = probs.iter().map(|p| S::leaf(*p)).collect();
        self.evaluate::<S>(&env)
    }

    pub fn value<S: Semiring>(&self, root: NodeId, probs: &[f64]) -> Result<S::Value, CircuitError> {
        Ok(self.evaluate_probs::<S>(probs)?[root.index()])
    }

    /// Root value in exact rational arithmetic.
    pub fn value_exact(&self, root: NodeId, env: &[BigRational]) -> Result<BigRational, CircuitError> {
        self.check_env(env)?;
        let mut values: Vec<BigRational> = Vec::with_capacity(root.index() + 1);
        for (i, node) in self.nodes.iter().enumerate().take(root.index() + 1) {
            let v = match *node {
                Node::Zero => BigRational::zero(),
                Node::One => BigRational::one(),
                Node::Leaf(l) => env[l.index()].clone(),
                Node::And { .. } => self.children(NodeId(i as u32)).iter().fold(BigRational::one(), |a, c| a * &values[c.index()]),
                Node::Or { .. } => self.children(NodeId(i as u32)).iter().fold(BigRational::zero(), |a, c| a + &values[c.index()]),
            };
            values.push(v);
        }
        Ok(values.swap_remove(root.index()))
    }

    /// Per-node adjoints `∂ root / ∂ node` from linear forward values.
    /// AND children take the product of their siblings from prefix and
    /// suffix products, so zero-valued siblings are handled exactly.
    pub fn backward(&self, root: NodeId, values: &[f64]) -> Result<Vec<f64>, CircuitError> {
        if values.len() != self.nodes.len() {
            return Err(CircuitError::Mismatch);
        }
        if root.index() >= self.nodes.len() {
            return Err(CircuitError::UnknownNode(root.0));
        }
        let mut adj = vec![0.0; self.nodes.len()];
        adj[root.index()] = 1.0;
        let mut prefix = Vec::new();
        for i in (0..=root.index()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let id = NodeId(i as u32);
            match self.nodes[i] {
                Node::Or { .. } => {
                    for c in self.children(id) {
                        adj[c.index()] += a;
                    }
                }
                Node::And { .. } => {
                    let kids = self.children(id);
                    prefix.clear();
                    let mut acc = 1.0;
                    for c in kids {
                        prefix.push(acc);
                        acc *= values[c.index()];
                    }
                    let mut suffix = 1.0;
                    for (k, c) in kids.iter().enumerate().rev() {
                        adj[c.index()] += a * prefix[k] * suffix;
                        suffix *= values[c.index()];
                    }
                }
                _ => {}
            }
        }
        Ok(adj)
    }

    /// Log-space adjoints: entry `i` is `ln ∂ root / ∂ node_i`, from log
    /// forward values. Dividing by the root value gives `∂ ln root`.
    pub fn backward_log(&self, root: NodeId, log_values: &[f64]) -> Result<Vec<f64>, CircuitError> {
        if log_values.len() != self.nodes.len() {
            return Err(CircuitError::Mismatch);
        }
        if root.index() >= self.nodes.len() {
            return Err(CircuitError::UnknownNode(root.0));
        }
        let mut adj = vec![f64::NEG_INFINITY; self.nodes.len()];
        adj[root.index()] = 0.0;
        let mut prefix = Vec::new();
        for i in (0..=root.index()).rev() {
            let a = adj[i];
            if a == f64::NEG_INFINITY {
                continue;
            }
            let id = NodeId(i as u32);
            match self.nodes[i] {
                Node::Or { .. } => {
                    for c in self.children(id) {
                        adj[c.index()] = log_add_exp(adj[c.index()], a);
                    }
                }
                Node::And { .. } => {
                    let kids = self.children(id);
                    prefix.clear();
                    let mut acc = 0.0;
                    for c in kids {
                        prefix.push(acc);
                        acc += log_values[c.index()];
                    }
                    let mut suffix = 0.0;
                    for (k, c) in kids.iter().enumerate().rev() {
                        adj[c.index()] = log_add_exp(adj[c.index()], a + prefix[k] + suffix);
                        suffix += log_values[c.index()];
                    }
                }
                _ => {}
            }
        }
        Ok(adj)
    }

    /// `∂ root / ∂ leaf` for every leaf, together with the root value.
    pub fn leaf_gradients(&self, root: NodeId, probs: &[f64]) -> Result<(f64, Vec<f64>), CircuitError> {
        let values = self.evaluate_probs::<Prob>(probs)?;
        let adj = self.backward(root, &values)?;
        let grads = (0..self.leaves.len())
            .map(|l| self.node_of_leaf(LeafId(l as u32)).map_or(0.0, |n| adj[n.index()]))
            .collect();
        Ok((values[root.index()], grads))
    }

    /// `ln root` and `∂ ln root / ∂ leaf` for every leaf, computed in log
    /// space. Gradients are zero when the root has no mass.
    pub fn log_leaf_gradients(&self, root: NodeId, probs: &[f64]) -> Result<(f64, Vec<f64>), CircuitError> {
        let values = self.evaluate_probs::<LogProb>(probs)?;
        let adj = self.backward_log(root, &values)?;
        let log_root = values[root.index()];
        let grads = (0..self.leaves.len())
            .map(|l| match self.node_of_leaf(LeafId(l as u32)) {
                Some(n) if log_root > f64::NEG_INFINITY => (adj[n.index()] - log_root).exp(),
                _ => 0.0,
            })
            .collect();
        Ok((log_root, grads))
    }

    /// Most probable derivation under `(max, ×)`. Ties go to the first
    /// child in source order.
    pub fn most_probable_derivation(&self, root: NodeId, probs: &[f64]) -> Result<BestDerivation, CircuitError> {
        let values = self.evaluate_probs::<Viterbi>(probs)?;
        let value = values[root.index()];
        let mut choices: FxHashMap<NodeId, NodeId> = FxHashMap::default();
        let mut trace = Vec::new();
        if value > 0.0 {
            let mut stack = vec![root];
            while let Some(id) = stack.pop() {
                match self.nodes[id.index()] {
                    Node::Leaf(l) => trace.push(l),
                    Node::And { .. } => stack.extend(self.children(id).iter().rev()),
                    Node::Or { .. } => {
                        let chosen = *choices.entry(id).or_insert_with(|| {
                            let kids = self.children(id);
                            let best = kids.iter().map(|c| values[c.index()]).fold(0.0, Viterbi::plus);
                            *kids.iter().find(|c| values[c.index()] == best).unwrap()
                        });
                        stack.push(chosen);
                    }
                    Node::One | Node::Zero => {}
                }
            }
        }
        Ok(BestDerivation { value, trace, choices })
    }

    /// Probability of the derivation fixed by `choices`, multiplied with the
    /// same association as the circuit.
    pub fn replay(&self, root: NodeId, choices: &FxHashMap<NodeId, NodeId>, probs: &[f64]) -> Result<f64, CircuitError> {
        self.check_env(probs)?;
        let mut memo: FxHashMap<NodeId, f64> = FxHashMap::default();
        let mut stack = vec![(root, false)];
        while let Some((id, expanded)) = stack.pop() {
            if memo.contains_key(&id) {
                continue;
            }
            let deps: Vec<NodeId> = match self.nodes[id.index()] {
                Node::And { .. } => self.children(id).to_vec(),
                Node::Or { .. } => match choices.get(&id) {
                    Some(c) => vec![*c],
                    None => {
                        memo.insert(id, 0.0);
                        continue;
                    }
                },
                _ => Vec::new(),
            };
            if !expanded && deps.iter().any(|d| !memo.contains_key(d)) {
                stack.push((id, true));
                stack.extend(deps.iter().map(|d| (*d, false)));
                continue;
            }
            let v = match self.nodes[id.index()] {
                Node::Zero => 0.0,
                Node::One => 1.0,
                Node::Leaf(l) => probs[l.index()],
                Node::And { .. } => deps.iter().fold(1.0, |acc, d| acc * memo[d]),
                Node::Or { .. } => memo[&deps[0]],
            };
            memo.insert(id, v);
        }
        Ok(memo[&root])
    }

    /// Graphviz rendering of the sub-circuit under `root`.
    pub fn to_dot(&self, root: NodeId, label: &dyn Fn(Leaf) -> String) -> String {
        let reach = self.reachable(root);
        let mut out = String::from("digraph circuit {\n  rankdir=TB;\n");
        for (i, node) in self.nodes.iter().enumerate() {
            if !reach[i] && i != root.index() {
                continue;
            }
            let (shape, text) = match node {
                Node::Zero => ("box", "0".to_owned()),
                Node::One => ("box", "1".to_owned()),
                Node::Leaf(l) => ("box", label(self.leaves[l.index()])),
                Node::And { .. } => ("ellipse", "AND".to_owned()),
                Node::Or { .. } => ("ellipse", "OR".to_owned()),
            };
            let _ = writeln!(out, "  n{i} [shape={shape}, label=\"{}\"];", text.replace('\\', "\\\\").replace('"', "\\\""));
            for c in self.children(NodeId(i as u32)) {
                let _ = writeln!(out, "  n{i} -> n{};", c.0);
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Result of the `(max, ×)` backtrace.
#[derive(Debug, Clone)]
pub struct BestDerivation {
    pub value: f64,
    /// Leaves of the derivation, left to right.
    pub trace: Vec<LeafId>,
    /// Chosen child of every OR node on the derivation.
    pub choices: FxHashMap<NodeId, NodeId>,
}
