use std::rc::Rc;

use rustc_hash::FxHashMap;

use super::{make_answer, may_start_at, rule_weight_node, run_goal, AnswerNode, DeriveConfig, DeriveError, DerivationForest, ForestAnswer, Goal, Strategy};
use crate::circuit::{Circuit, NodeId};
use crate::program::{BodyItem, Program, RuleId, UNREACHABLE};
use crate::terms::{canonical, Bindings, ScopeCounter, Term};

enum Frame {
    Call(Term),
    Terminals(Vec<Term>),
    Goal(Term),
    /// Output enumeration of a neural rule whose body has been resolved.
    Neural { rule: RuleId, inputs: Vec<Term>, outputs: Vec<Term> },
}

/// A resolvent as a shared linked list; `min_rest` is the fewest terminals
/// the remaining items consume.
struct Cell {
    frame: Frame,
    min_rest: usize,
    next: Link,
}

type Link = Option<Rc<Cell>>;

fn push(frame: Frame, min_yield: usize, next: Link) -> Link {
    let rest = next.as_ref().map_or(0, |c| c.min_rest);
    Some(Rc::new(Cell {
        frame,
        min_rest: min_yield.saturating_add(rest).min(UNREACHABLE),
        next,
    }))
}

fn rename_item(item: &BodyItem, scope: u32) -> Frame {
    match item {
        BodyItem::Call(t) => Frame::Call(t.rename(scope)),
        BodyItem::Terminals(ts) => Frame::Terminals(ts.iter().map(|t| t.rename(scope)).collect()),
        BodyItem::Goal(g) => Frame::Goal(g.rename(scope)),
    }
}

struct Sld<'a> {
    program: &'a Program,
    tokens: &'a [Term],
    goal: &'a Goal,
    config: &'a DeriveConfig,
    max_depth: usize,
    circuit: Circuit,
    bindings: Bindings,
    scopes: ScopeCounter,
    answers: Vec<ForestAnswer>,
    answer_index: FxHashMap<Term, u32>,
    tuples: FxHashMap<RuleId, Rc<Vec<Vec<Term>>>>,
    truncated: bool,
}

impl Sld<'_> {
    fn output_tuples(&mut self, rule: RuleId) -> Rc<Vec<Vec<Term>>> {
        let program = self.program;
        self.tuples
            .entry(rule)
            .or_insert_with(|| {
                let decl = program.rule(rule).neural().expect("neural rule");
                Rc::new((0..program.output_size(decl)).map(|i| program.output_tuple(decl, i)).collect())
            })
            .clone()
    }

    fn success(&mut self) -> NodeId {
        let instance = self.bindings.resolve(&self.goal.term);
        let sequence: Vec<Term> = self.tokens.iter().map(|t| self.bindings.resolve(t)).collect();
        let key = canonical(&Term::apply("answer", vec![instance, Term::list(sequence)]));
        if let Some(k) = self.answer_index.get(&key) {
            return self.circuit.marker(*k);
        }
        let k = self.answers.len() as u32;
        let marker = self.circuit.marker(k);
        let instance = key.args()[0].clone();
        let sequence = key.args()[1].as_list().unwrap_or_default();
        self.answers.push(make_answer(self.goal, instance, sequence, AnswerNode::Marker(marker)));
        self.answer_index.insert(key, k);
        marker
    }

    fn solve(&mut self, goals: &Link, pos: usize, depth: usize) -> Result<NodeId, DeriveError> {
        let n = self.tokens.len();
        let Some(cell) = goals else {
            return Ok(if pos == n { self.success() } else { NodeId::ZERO });
        };
        if pos + cell.min_rest > n {
            return Ok(NodeId::ZERO);
        }
        if self.config.limits.max_nodes.is_some_and(|m| self.circuit.len() > m) {
            self.truncated = true;
            return Ok(NodeId::ZERO);
        }
        match &cell.frame {
            Frame::Call(atom) => {
                if depth >= self.max_depth {
                    self.truncated = true;
                    return Ok(NodeId::ZERO);
                }
                let key = match self.bindings.walk(atom) {
                    t @ (Term::Atom(_) | Term::Compound(_)) => t.functor_arity().unwrap(),
                    other => return Err(DeriveError::NotCallable(other.to_string())),
                };
                let mut alts = Vec::new();
                for &rid in self.program.rules_for(key) {
                    let rule = self.program.rule(rid);
                    if !may_start_at(rule, self.tokens, pos) {
                        continue;
                    }
                    let scope = self.scopes.fresh();
                    let head = rule.head.rename(scope);
                    let mark = self.bindings.mark();
                    if self.bindings.unify(atom, &head) {
                        let mut next = cell.next.clone();
                        if let Some(decl) = rule.neural() {
                            let frame = Frame::Neural {
                                rule: rid,
                                inputs: decl.inputs.iter().map(|t| t.rename(scope)).collect(),
                                outputs: decl.outputs.iter().map(|t| t.rename(scope)).collect(),
                            };
                            next = push(frame, 0, next);
                        }
                        for (item, min) in rule.body.iter().zip(&rule.item_min_yield).rev() {
                            next = push(rename_item(item, scope), *min, next);
                        }
                        let child = self.solve(&next, pos, depth + 1)?;
                        if child != NodeId::ZERO {
                            let weight = rule_weight_node(&mut self.circuit, self.program, rid);
                            alts.push(self.circuit.and(vec![weight, child]));
                        }
                    }
                    self.bindings.undo(mark);
                }
                Ok(self.circuit.or(alts))
            }
            Frame::Terminals(ts) => {
                let mark = self.bindings.mark();
                let ok = ts.iter().zip(&self.tokens[pos..]).all(|(t, tok)| self.bindings.unify(t, tok));
                let child = if ok { self.solve(&cell.next, pos + ts.len(), depth)? } else { NodeId::ZERO };
                self.bindings.undo(mark);
                Ok(child)
            }
            Frame::Goal(g) => {
                let mark = self.bindings.mark();
                let ok = run_goal(self.program, &mut self.scopes, g, &mut self.bindings, self.config.strict_goals)?;
                let child = if ok { self.solve(&cell.next, pos, depth)? } else { NodeId::ZERO };
                self.bindings.undo(mark);
                Ok(child)
            }
            Frame::Neural { rule, inputs, outputs } => {
                let model = self.program.rule(*rule).neural().unwrap().model;
                let inputs: Vec<Term> = inputs.iter().map(|t| self.bindings.resolve(t)).collect();
                if !inputs.iter().all(Term::is_ground) {
                    return Err(DeriveError::NonGroundNeural {
                        model: model.to_string(),
                        inputs: Term::list(inputs).to_string(),
                    });
                }
                let tuples = self.output_tuples(*rule);
                let mut alts = Vec::new();
                for (index, tuple) in tuples.iter().enumerate() {
                    let mark = self.bindings.mark();
                    if outputs.iter().zip(tuple).all(|(o, v)| self.bindings.unify(o, v)) {
                        let child = self.solve(&cell.next, pos, depth)?;
                        if child != NodeId::ZERO {
                            let leaf = self.circuit.neural_leaf(model, inputs.clone(), index);
                            alts.push(self.circuit.and(vec![leaf, child]));
                        }
                    }
                    self.bindings.undo(mark);
                }
                Ok(self.circuit.or(alts))
            }
        }
    }
}

/// Depth-first SLD resolution with leftmost selection. The circuit mirrors
/// the SLD tree: an AND per rule application and an OR per choice point.
/// Every success ends in the marker leaf of its answer.
pub fn derive_sld(program: &Program, goal: &Goal, sequence: &[Term], config: &DeriveConfig) -> Result<DerivationForest, DeriveError> {
    let mut sld = Sld {
        program,
        tokens: sequence,
        goal,
        config,
        max_depth: config.limits.depth_for(sequence.len()),
        circuit: Circuit::new(),
        bindings: Bindings::new(true),
        scopes: ScopeCounter::new(),
        answers: Vec::new(),
        answer_index: FxHashMap::default(),
        tuples: FxHashMap::default(),
        truncated: false,
    };
    let mut link: Link = None;
    for (item, min) in goal.items.iter().zip(goal.min_yields(program)).rev() {
        link = push(rename_item(item, 0), min, link);
    }
    let root = sld.solve(&link, 0, 0)?;
    Ok(DerivationForest {
        circuit: sld.circuit,
        root,
        answers: sld.answers,
        tables: Vec::new(),
        truncated: sld.truncated,
        strategy: Strategy::Sld,
    })
}
