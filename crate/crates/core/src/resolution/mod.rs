//! Proof search: plain clause resolution, SLD and tabled derivation of
//! grammar goals into AND-OR circuits.

pub mod prolog;
mod sld;
mod slg;

use std::fmt;

use crate::circuit::{Circuit, CircuitError, Leaf, NodeId, Prob};
use crate::program::{BodyItem, Program, Rule, RuleId, Weight, UNREACHABLE};
use crate::terms::{parse_term, unify, well_known, ScopeCounter, Substitution, SyntaxError, Term, Var};

use prolog::{DetOutcome, PrologError, Solver};

pub use sld::derive_sld;
pub use slg::derive_slg;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeriveError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("in goal {{{goal}}}: {source}")]
    Goal { goal: String, source: PrologError },
    #[error("neural input {inputs} of model {model} is not ground")]
    NonGroundNeural { model: String, inputs: String },
    #[error("tabled derivation needs a ground sequence")]
    NonGroundSequence,
    #[error("{0} is not a callable goal")]
    NotCallable(String),
    #[error("{0} is not a nonterminal of the grammar")]
    UnknownNonterminal(String),
    #[error("answer {0} depends on itself; use depth-limited SLD for cyclic programs")]
    Cyclic(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

/// Bounds on the search. Exceeding one truncates the forest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DepthLimits {
    /// Rule applications along one derivation; `None` means `10·|T| + 50`.
    pub max_depth: Option<usize>,
    /// Circuit nodes (SLD) or table derivations (SLG).
    pub max_nodes: Option<usize>,
}

impl DepthLimits {
    pub fn depth_for(&self, len: usize) -> usize {
        self.max_depth.unwrap_or(10 * len + 50)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DeriveConfig {
    pub limits: DepthLimits,
    /// A `{...}` goal with two distinct answers is an error rather than a
    /// warning.
    pub strict_goals: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Sld,
    #[default]
    Slg,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Strategy, String> {
        match s {
            "sld" => Ok(Strategy::Sld),
            "slg" => Ok(Strategy::Slg),
            other => Err(format!("unknown strategy {other}; expected sld or slg")),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Sld => "sld",
            Strategy::Slg => "slg",
        })
    }
}

/// A query: body items resolved left to right against a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Goal {
    pub term: Term,
    pub items: Vec<BodyItem>,
}

impl Goal {
    /// Conjunction of nonterminal calls, terminal lists and `{...}` goals.
    pub fn from_term(program: &Program, term: Term) -> Result<Goal, DeriveError> {
        let mut items = Vec::new();
        for part in term.flatten_op(well_known::comma()) {
            if let Some(list) = part.as_list() {
                items.push(BodyItem::Terminals(list));
                continue;
            }
            if part.is_functor(well_known::curly(), 1) {
                items.push(BodyItem::Goal(part.args()[0].clone()));
                continue;
            }
            let Some(key) = part.functor_arity() else {
                return Err(DeriveError::NotCallable(part.to_string()));
            };
            if matches!(part, Term::Num(_)) {
                return Err(DeriveError::NotCallable(part.to_string()));
            }
            if program.group_of(key).is_none() {
                return Err(DeriveError::UnknownNonterminal(format!("{}/{}", key.0, key.1)));
            }
            items.push(BodyItem::Call(part));
        }
        Ok(Goal { term, items })
    }

    pub fn parse(program: &Program, text: &str) -> Result<Goal, DeriveError> {
        Goal::from_term(program, parse_term(text)?)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.term.vars()
    }

    /// Fewest terminals each item consumes.
    fn min_yields(&self, program: &Program) -> Vec<usize> {
        self.items
            .iter()
            .map(|item| match item {
                BodyItem::Call(t) => program
                    .group_of(t.functor_arity().unwrap())
                    .map_or(UNREACHABLE, |g| program.min_yield(g)),
                BodyItem::Terminals(ts) => ts.len(),
                BodyItem::Goal(_) => 0,
            })
            .collect()
    }
}

/// Parses a sequence written as a list term, e.g. `[2, +, 0]`.
pub fn parse_sequence(text: &str) -> Result<Vec<Term>, DeriveError> {
    let term = parse_term(text)?;
    term.as_list().ok_or_else(|| DeriveError::NotCallable(format!("{term} is not a list")))
}

/// How an answer's probability is read from the circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerNode {
    /// The answer has its own sub-circuit.
    Node(NodeId),
    /// The answer's successes are tagged with a marker leaf; its probability
    /// is the root's derivative with respect to that leaf.
    Marker(NodeId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestAnswer {
    /// The goal instantiated by the answer.
    pub goal: Term,
    /// The sequence as derived; differs from the query only for
    /// unknown-length queries.
    pub sequence: Vec<Term>,
    pub substitution: Substitution,
    pub node: AnswerNode,
}

/// Answers of one tabled call, for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    pub call: Term,
    pub start: usize,
    /// Canonical answer atom and end position.
    pub answers: Vec<(Term, usize)>,
    pub complete: bool,
}

#[derive(Debug, Clone)]
pub struct DerivationForest {
    pub circuit: Circuit,
    pub root: NodeId,
    pub answers: Vec<ForestAnswer>,
    pub tables: Vec<TableEntry>,
    /// Set when a depth or size limit cut some derivations off.
    pub truncated: bool,
    pub strategy: Strategy,
}

impl DerivationForest {
    pub fn node_count(&self) -> usize {
        self.circuit.node_count(self.root)
    }

    /// Probability of each answer, given per-leaf probabilities.
    pub fn answer_values(&self, probs: &[f64]) -> Result<Vec<f64>, DeriveError> {
        let values = self.circuit.evaluate_probs::<Prob>(probs)?;
        let needs_adjoint = self.answers.iter().any(|a| matches!(a.node, AnswerNode::Marker(_)));
        let adjoints = if needs_adjoint {
            self.circuit.backward(self.root, &values)?
        } else {
            Vec::new()
        };
        Ok(self
            .answers
            .iter()
            .map(|a| match a.node {
                AnswerNode::Node(n) => values[n.index()],
                AnswerNode::Marker(n) => adjoints[n.index()],
            })
            .collect())
    }
}

pub fn derive(
    program: &Program,
    goal: &Goal,
    sequence: &[Term],
    strategy: Strategy,
    config: &DeriveConfig,
) -> Result<DerivationForest, DeriveError> {
    match strategy {
        Strategy::Sld => derive_sld(program, goal, sequence, config),
        Strategy::Slg => derive_slg(program, goal, sequence, config),
    }
}

/// SLD forests for every sequence length `0..=max_len`, each over a
/// sequence of fresh variables.
pub fn derive_unknown_length(
    program: &Program,
    goal: &Goal,
    max_len: usize,
    config: &DeriveConfig,
) -> Result<Vec<DerivationForest>, DeriveError> {
    (0..=max_len)
        .map(|len| {
            let tokens: Vec<Term> = (0..len)
                .map(|i| Term::Var(Var::new(&format!("T{}", i + 1)).scoped(u32::MAX - 1)))
                .collect();
            derive_sld(program, goal, &tokens, config)
        })
        .collect()
}

/// Cheap filter applied before renaming a rule: its leading ground
/// terminal must equal a ground token at `pos`, and its minimal yield must
/// fit in what is left. Ground terms unify exactly when equal.
pub(crate) fn may_start_at(rule: &Rule, tokens: &[Term], pos: usize) -> bool {
    let need: usize = rule.item_min_yield.iter().fold(0, |a, &b| a.saturating_add(b));
    if pos.saturating_add(need) > tokens.len() {
        return false;
    }
    match rule.body.first() {
        Some(BodyItem::Terminals(ts)) => match (ts.first(), tokens.get(pos)) {
            (Some(t), Some(tok)) if t.is_ground() && tok.is_ground() => t == tok,
            _ => true,
        },
        _ => true,
    }
}

/// Probability weight of a rule application: a leaf for weighted rules,
/// nothing for implicit and neural ones.
pub(crate) fn rule_weight_node(circuit: &mut Circuit, program: &Program, rule: RuleId) -> NodeId {
    match program.rule(rule).weight {
        Weight::Fixed(_) | Weight::Trainable(_) => circuit.rule_leaf(rule),
        Weight::Implicit | Weight::Neural(_) => NodeId::ONE,
    }
}

/// Runs a `{...}` goal; `Ok(false)` on failure.
pub(crate) fn run_goal(
    program: &Program,
    scopes: &mut ScopeCounter,
    goal: &Term,
    bindings: &mut crate::terms::Bindings,
    strict: bool,
) -> Result<bool, DeriveError> {
    let mut solver = Solver::new(program.clause_db(), scopes);
    let wrap = |source: PrologError| DeriveError::Goal {
        goal: goal.to_string(),
        source,
    };
    match solver.solve_det(goal, bindings).map_err(wrap)? {
        DetOutcome::Failed => Ok(false),
        DetOutcome::Unique => Ok(true),
        DetOutcome::Ambiguous(err) if strict => Err(wrap(err)),
        DetOutcome::Ambiguous(err) => {
            log::warn!("{err}");
            Ok(true)
        }
    }
}

/// Builds the answer record of a solved goal.
pub(crate) fn make_answer(goal: &Goal, instance: Term, sequence: Vec<Term>, node: AnswerNode) -> ForestAnswer {
    let substitution = unify(&goal.term, &instance)
        .map(|s| s.restrict(&goal.vars()))
        .unwrap_or_default();
    ForestAnswer {
        goal: instance,
        sequence,
        substitution,
        node,
    }
}

/// Human-readable description of a leaf.
pub fn describe_leaf(program: &Program, circuit: &Circuit, leaf: Leaf) -> String {
    match leaf {
        Leaf::Rule(id) => {
            let rule = program.rule(id);
            let weight = rule.weight_term().map(|w| format!("{} :: ", w.to_string_prec(1149))).unwrap_or_default();
            format!("{weight}{}", rule.production())
        }
        Leaf::Neural { call, output } => {
            let call = circuit.call(call);
            let decl = program
                .rules
                .iter()
                .filter_map(|r| r.neural())
                .find(|d| d.model == call.model)
                .expect("model of a neural leaf is declared");
            let tuple = program.output_tuple(decl, output as usize);
            format!("{}({}) = {}", call.model, Term::list(call.inputs.clone()), Term::list(tuple))
        }
        Leaf::Marker(k) => format!("answer {k}"),
    }
}
