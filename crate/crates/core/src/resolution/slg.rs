use std::rc::Rc;

use rustc_hash::{FxHashMap, FxHashSet};

use super::{
    make_answer, may_start_at, rule_weight_node, run_goal, AnswerNode, DeriveConfig, DeriveError, DerivationForest, Goal, Strategy,
    TableEntry,
};
use crate::circuit::{Circuit, NodeId};
use crate::program::{BodyItem, Program, RuleId};
use crate::terms::{canonical, Bindings, ScopeCounter, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Evaluating,
    /// Part of an SCC whose leader is still iterating.
    Incomplete,
    Complete,
}

/// One way of deriving an answer: the rule used, the chosen neural output
/// and the consumed answers of the body's calls, left to right.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Deriv {
    rule: Option<RuleId>,
    neural: Option<(u32, u32)>,
    children: Vec<(u32, u32)>,
}

struct Answer {
    atom: Term,
    end: usize,
    derivs: Vec<Deriv>,
    seen: FxHashSet<Deriv>,
}

struct Table {
    call: Term,
    start: usize,
    answers: Vec<Answer>,
    index: FxHashMap<(Term, usize), u32>,
    state: State,
    dfn: u32,
    low: u32,
    epoch: u64,
}

impl Table {
    fn record(&mut self, atom: Term, end: usize, deriv: Deriv) -> bool {
        let next = self.answers.len() as u32;
        let a = *self.index.entry((atom.clone(), end)).or_insert(next);
        if a == next {
            self.answers.push(Answer {
                atom,
                end,
                derivs: Vec::new(),
                seen: FxHashSet::default(),
            });
        }
        let answer = &mut self.answers[a as usize];
        if answer.seen.insert(deriv.clone()) {
            answer.derivs.push(deriv);
            true
        } else {
            false
        }
    }
}

enum Frame {
    Call(Term),
    Terminals(Vec<Term>),
    Goal(Term),
}

fn rename_item(item: &BodyItem, scope: u32) -> Frame {
    match item {
        BodyItem::Call(t) => Frame::Call(t.rename(scope)),
        BodyItem::Terminals(ts) => Frame::Terminals(ts.iter().map(|t| t.rename(scope)).collect()),
        BodyItem::Goal(g) => Frame::Goal(g.rename(scope)),
    }
}

/// `rest[i]`: fewest terminals consumed by items after `i`.
fn suffix_after(mins: &[usize]) -> Vec<usize> {
    let mut rest = vec![0; mins.len()];
    let mut acc = 0usize;
    for i in (0..mins.len()).rev() {
        rest[i] = acc;
        acc = acc.saturating_add(mins[i]);
    }
    rest
}

/// The body being resolved and where its derivations go.
struct Body<'b> {
    frames: &'b [Frame],
    mins: &'b [usize],
    rest: &'b [usize],
    /// Table receiving the answers; `None` for the top-level query.
    owner: Option<u32>,
    rule: Option<RuleId>,
    head: &'b Term,
    /// Renamed `(inputs, outputs)` of a neural rule.
    neural: Option<(&'b [Term], &'b [Term])>,
}

struct Slg<'a> {
    program: &'a Program,
    tokens: &'a [Term],
    config: &'a DeriveConfig,
    max_depth: usize,
    circuit: Circuit,
    tables: Vec<Table>,
    table_index: FxHashMap<(Term, usize), u32>,
    stack: Vec<u32>,
    next_dfn: u32,
    epoch: u64,
    derivs: usize,
    /// Answers read from tables that were not yet complete.
    incomplete_reads: usize,
    nesting: usize,
    scopes: ScopeCounter,
    tuples: FxHashMap<RuleId, Rc<Vec<Vec<Term>>>>,
    truncated: bool,
    /// Top-level answers: instantiated goal, derivations.
    query: Table,
}

impl Slg<'_> {
    fn over_budget(&mut self) -> bool {
        if self.config.limits.max_nodes.is_some_and(|m| self.derivs >= m) {
            self.truncated = true;
            return true;
        }
        false
    }

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

    fn lower(&mut self, owner: Option<u32>, to: u32) {
        if let Some(o) = owner {
            let t = &mut self.tables[o as usize];
            t.low = t.low.min(to);
        }
    }

    /// Looks up or evaluates the table of `atom` at `start`. `None` when
    /// the nesting limit cut it off.
    fn call_table(&mut self, atom: &Term, start: usize, owner: Option<u32>) -> Result<Option<u32>, DeriveError> {
        let key = (canonical(atom), start);
        let id = match self.table_index.get(&key) {
            Some(&id) => id,
            None => {
                if self.nesting >= self.max_depth {
                    self.truncated = true;
                    return Ok(None);
                }
                let id = self.tables.len() as u32;
                self.tables.push(Table {
                    call: key.0.clone(),
                    start,
                    answers: Vec::new(),
                    index: FxHashMap::default(),
                    state: State::Evaluating,
                    dfn: 0,
                    low: 0,
                    epoch: 0,
                });
                self.table_index.insert(key, id);
                self.nesting += 1;
                let result = self.evaluate(id);
                self.nesting -= 1;
                result?;
                let t = &self.tables[id as usize];
                if t.state != State::Complete {
                    let low = t.low;
                    self.lower(owner, low);
                }
                return Ok(Some(id));
            }
        };
        let t = &self.tables[id as usize];
        match t.state {
            State::Complete => {}
            State::Evaluating => {
                let dfn = t.dfn;
                self.lower(owner, dfn);
            }
            State::Incomplete => {
                if t.epoch < self.epoch {
                    self.rerun(id)?;
                }
                let low = self.tables[id as usize].low;
                self.lower(owner, low);
            }
        }
        Ok(Some(id))
    }

    /// Fixpoint iteration; the SCC leader completes its members once a pass
    /// adds no derivation.
    fn evaluate(&mut self, id: u32) -> Result<(), DeriveError> {
        let dfn = self.next_dfn;
        self.next_dfn += 1;
        {
            let t = &mut self.tables[id as usize];
            t.dfn = dfn;
            t.low = dfn;
            t.epoch = self.epoch;
        }
        self.stack.push(id);
        loop {
            let derivs = self.derivs;
            let reads = self.incomplete_reads;
            self.run_rules(id)?;
            let t = &mut self.tables[id as usize];
            if t.low < t.dfn {
                t.state = State::Incomplete;
                return Ok(());
            }
            if self.incomplete_reads == reads || self.derivs == derivs || self.truncated {
                while let Some(member) = self.stack.pop() {
                    self.tables[member as usize].state = State::Complete;
                    if member == id {
                        break;
                    }
                }
                return Ok(());
            }
            self.epoch += 1;
            self.tables[id as usize].epoch = self.epoch;
        }
    }

    fn rerun(&mut self, id: u32) -> Result<(), DeriveError> {
        self.tables[id as usize].state = State::Evaluating;
        self.tables[id as usize].epoch = self.epoch;
        self.run_rules(id)?;
        self.tables[id as usize].state = State::Incomplete;
        Ok(())
    }

    fn run_rules(&mut self, id: u32) -> Result<(), DeriveError> {
        let program = self.program;
        let (call, start) = {
            let t = &self.tables[id as usize];
            (t.call.clone(), t.start)
        };
        let key = call.functor_arity().expect("tabled calls are callable");
        for &rid in program.rules_for(key) {
            let rule = program.rule(rid);
            if !may_start_at(rule, self.tokens, start) {
                continue;
            }
            let call_inst = call.rename(self.scopes.fresh());
            let scope = self.scopes.fresh();
            let mut bindings = Bindings::new(true);
            if !bindings.unify(&call_inst, &rule.head.rename(scope)) {
                continue;
            }
            let frames: Vec<Frame> = rule.body.iter().map(|item| rename_item(item, scope)).collect();
            let rest = suffix_after(&rule.item_min_yield);
            let neural = rule.neural().map(|d| {
                (
                    d.inputs.iter().map(|t| t.rename(scope)).collect::<Vec<_>>(),
                    d.outputs.iter().map(|t| t.rename(scope)).collect::<Vec<_>>(),
                )
            });
            let body = Body {
                frames: &frames,
                mins: &rule.item_min_yield,
                rest: &rest,
                owner: Some(id),
                rule: Some(rid),
                head: &call_inst,
                neural: neural.as_ref().map(|(i, o)| (i.as_slice(), o.as_slice())),
            };
            let mut children = Vec::new();
            self.walk(&body, 0, start, &mut bindings, &mut children)?;
        }
        Ok(())
    }

    fn walk(
        &mut self,
        body: &Body<'_>,
        i: usize,
        pos: usize,
        bindings: &mut Bindings,
        children: &mut Vec<(u32, u32)>,
    ) -> Result<(), DeriveError> {
        let n = self.tokens.len();
        if i == body.frames.len() {
            return self.finish(body, pos, bindings, children);
        }
        if pos.saturating_add(body.mins[i]).saturating_add(body.rest[i]) > n || self.over_budget() {
            return Ok(());
        }
        match &body.frames[i] {
            Frame::Call(atom) => {
                let resolved = bindings.resolve(atom);
                if !matches!(resolved, Term::Atom(_) | Term::Compound(_)) {
                    return Err(DeriveError::NotCallable(resolved.to_string()));
                }
                let Some(sub) = self.call_table(&resolved, pos, body.owner)? else {
                    return Ok(());
                };
                let t = &self.tables[sub as usize];
                if t.state != State::Complete {
                    self.incomplete_reads += 1;
                }
                let count = t.answers.len();
                for a in 0..count {
                    let (atom_a, end) = {
                        let ans = &self.tables[sub as usize].answers[a];
                        (ans.atom.clone(), ans.end)
                    };
                    if end.saturating_add(body.rest[i]) > n {
                        continue;
                    }
                    let instance = atom_a.rename(self.scopes.fresh());
                    let mark = bindings.mark();
                    if bindings.unify(&resolved, &instance) {
                        children.push((sub, a as u32));
                        self.walk(body, i + 1, end, bindings, children)?;
                        children.pop();
                    }
                    bindings.undo(mark);
                }
                Ok(())
            }
            Frame::Terminals(ts) => {
                let mark = bindings.mark();
                if ts.iter().zip(&self.tokens[pos..]).all(|(t, tok)| bindings.unify(t, tok)) {
                    self.walk(body, i + 1, pos + ts.len(), bindings, children)?;
                }
                bindings.undo(mark);
                Ok(())
            }
            Frame::Goal(g) => {
                let mark = bindings.mark();
                if run_goal(self.program, &mut self.scopes, g, bindings, self.config.strict_goals)? {
                    self.walk(body, i + 1, pos, bindings, children)?;
                }
                bindings.undo(mark);
                Ok(())
            }
        }
    }

    fn finish(
        &mut self,
        body: &Body<'_>,
        end: usize,
        bindings: &mut Bindings,
        children: &[(u32, u32)],
    ) -> Result<(), DeriveError> {
        let Some((inputs, outputs)) = body.neural else {
            let atom = canonical(&bindings.resolve(body.head));
            self.record(body.owner, atom, end, Deriv {
                rule: body.rule,
                neural: None,
                children: children.to_vec(),
            });
            return Ok(());
        };
        let rule = body.rule.expect("neural bodies belong to rules");
        let model = self.program.rule(rule).neural().unwrap().model;
        let inputs: Vec<Term> = inputs.iter().map(|t| bindings.resolve(t)).collect();
        if !inputs.iter().all(Term::is_ground) {
            return Err(DeriveError::NonGroundNeural {
                model: model.to_string(),
                inputs: Term::list(inputs).to_string(),
            });
        }
        let call = self.circuit.intern_call(model, inputs);
        let tuples = self.output_tuples(rule);
        for (index, tuple) in tuples.iter().enumerate() {
            let mark = bindings.mark();
            if outputs.iter().zip(tuple).all(|(o, v)| bindings.unify(o, v)) {
                let atom = canonical(&bindings.resolve(body.head));
                self.record(body.owner, atom, end, Deriv {
                    rule: Some(rule),
                    neural: Some((call, index as u32)),
                    children: children.to_vec(),
                });
            }
            bindings.undo(mark);
        }
        Ok(())
    }

    fn record(&mut self, owner: Option<u32>, atom: Term, end: usize, deriv: Deriv) {
        match owner {
            Some(id) => {
                if self.tables[id as usize].record(atom, end, deriv) {
                    self.derivs += 1;
                }
            }
            None => {
                if end == self.tokens.len() && self.query.record(atom, end, deriv) {
                    self.derivs += 1;
                }
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Visit {
    Fresh,
    Active,
    Inlined,
    Done(NodeId),
}

struct Builder<'s, 'a> {
    slg: &'s mut Slg<'a>,
    memo: Vec<Vec<Visit>>,
    /// References to each answer from reachable derivations.
    uses: Vec<Vec<u32>>,
}

impl Builder<'_, '_> {
    fn new<'s, 'a>(slg: &'s mut Slg<'a>, roots: &[Answer]) -> Builder<'s, 'a> {
        let memo = slg.tables.iter().map(|t| vec![Visit::Fresh; t.answers.len()]).collect();
        let mut uses: Vec<Vec<u32>> = slg.tables.iter().map(|t| vec![0; t.answers.len()]).collect();
        let mut stack: Vec<(u32, u32)> = Vec::new();
        let visit = |children: &[(u32, u32)], uses: &mut Vec<Vec<u32>>, stack: &mut Vec<(u32, u32)>| {
            for &(t, a) in children {
                let n = &mut uses[t as usize][a as usize];
                *n += 1;
                if *n == 1 {
                    stack.push((t, a));
                }
            }
        };
        for d in roots.iter().flat_map(|a| &a.derivs) {
            visit(&d.children, &mut uses, &mut stack);
        }
        while let Some((t, a)) = stack.pop() {
            for d in &slg.tables[t as usize].answers[a as usize].derivs {
                visit(&d.children, &mut uses, &mut stack);
            }
        }
        Builder { slg, memo, uses }
    }

    fn cyclic(&self, t: u32, a: u32) -> DeriveError {
        let table = &self.slg.tables[t as usize];
        let ans = &table.answers[a as usize];
        DeriveError::Cyclic(format!("{} at {}..{}", ans.atom, table.start, ans.end))
    }

    /// Factors of a derivation, left to right. An answer used once with a
    /// single derivation is spliced in rather than given its own node.
    fn deriv_kids(&mut self, d: &Deriv, kids: &mut Vec<NodeId>) -> Result<(), DeriveError> {
        if let Some(rule) = d.rule {
            kids.push(rule_weight_node(&mut self.slg.circuit, self.slg.program, rule));
        }
        for &(t, a) in &d.children {
            let single = self.slg.tables[t as usize].answers[a as usize].derivs.len() == 1;
            if single && self.uses[t as usize][a as usize] == 1 {
                match self.memo[t as usize][a as usize] {
                    Visit::Active => return Err(self.cyclic(t, a)),
                    Visit::Fresh => {
                        self.memo[t as usize][a as usize] = Visit::Active;
                        let inner = self.slg.tables[t as usize].answers[a as usize].derivs[0].clone();
                        self.deriv_kids(&inner, kids)?;
                        self.memo[t as usize][a as usize] = Visit::Inlined;
                        continue;
                    }
                    Visit::Inlined | Visit::Done(_) => {}
                }
            }
            kids.push(self.answer_node(t, a)?);
        }
        if let Some((call, output)) = d.neural {
            let leaf = self.slg.circuit.leaf_node(crate::circuit::Leaf::Neural { call, output });
            kids.push(leaf);
        }
        Ok(())
    }

    fn deriv_node(&mut self, d: &Deriv) -> Result<NodeId, DeriveError> {
        let mut kids = Vec::with_capacity(d.children.len() + 2);
        self.deriv_kids(d, &mut kids)?;
        Ok(self.slg.circuit.and(kids))
    }

    fn answer_node(&mut self, t: u32, a: u32) -> Result<NodeId, DeriveError> {
        match self.memo[t as usize][a as usize] {
            Visit::Done(node) => return Ok(node),
            Visit::Active => return Err(self.cyclic(t, a)),
            Visit::Fresh | Visit::Inlined => {}
        }
        self.memo[t as usize][a as usize] = Visit::Active;
        let derivs = std::mem::take(&mut self.slg.tables[t as usize].answers[a as usize].derivs);
        let result = derivs.iter().map(|d| self.deriv_node(d)).collect::<Result<Vec<_>, _>>();
        self.slg.tables[t as usize].answers[a as usize].derivs = derivs;
        let node = self.slg.circuit.or(result?);
        self.memo[t as usize][a as usize] = Visit::Done(node);
        Ok(node)
    }
}

/// Tabled resolution: each distinct call at each start position is solved
/// once and its answers shared. Recursive calls iterate to a fixpoint
/// within their strongly connected component. The circuit is built from
/// the completed tables, so shared sub-derivations become shared nodes.
pub fn derive_slg(program: &Program, goal: &Goal, sequence: &[Term], config: &DeriveConfig) -> Result<DerivationForest, DeriveError> {
    if !sequence.iter().all(Term::is_ground) {
        return Err(DeriveError::NonGroundSequence);
    }
    let mut slg = Slg {
        program,
        tokens: sequence,
        config,
        max_depth: config.limits.depth_for(sequence.len()),
        circuit: Circuit::new(),
        tables: Vec::new(),
        table_index: FxHashMap::default(),
        stack: Vec::new(),
        next_dfn: 0,
        epoch: 0,
        derivs: 0,
        incomplete_reads: 0,
        nesting: 0,
        scopes: ScopeCounter::new(),
        tuples: FxHashMap::default(),
        truncated: false,
        query: Table {
            call: goal.term.clone(),
            start: 0,
            answers: Vec::new(),
            index: FxHashMap::default(),
            state: State::Evaluating,
            dfn: 0,
            low: 0,
            epoch: 0,
        },
    };
    let frames: Vec<Frame> = goal.items.iter().map(|item| rename_item(item, 0)).collect();
    let mins = goal.min_yields(program);
    let rest = suffix_after(&mins);
    let body = Body {
        frames: &frames,
        mins: &mins,
        rest: &rest,
        owner: None,
        rule: None,
        head: &goal.term,
        neural: None,
    };
    let mut bindings = Bindings::new(true);
    slg.walk(&body, 0, 0, &mut bindings, &mut Vec::new())?;

    let query = std::mem::take(&mut slg.query.answers);
    let mut builder = Builder::new(&mut slg, &query);
    let mut roots = Vec::with_capacity(query.len());
    let mut answers = Vec::with_capacity(query.len());
    for ans in &query {
        let alts = ans.derivs.iter().map(|d| builder.deriv_node(d)).collect::<Result<Vec<_>, _>>()?;
        let node = builder.slg.circuit.or(alts);
        roots.push(node);
        answers.push(make_answer(goal, ans.atom.clone(), sequence.to_vec(), AnswerNode::Node(node)));
    }
    let root = slg.circuit.or(roots);
    let tables = slg
        .tables
        .iter()
        .map(|t| TableEntry {
            call: t.call.clone(),
            start: t.start,
            answers: t.answers.iter().map(|a| (a.atom.clone(), a.end)).collect(),
            complete: t.state == State::Complete,
        })
        .collect();
    Ok(DerivationForest {
        circuit: slg.circuit,
        root,
        answers,
        tables,
        truncated: slg.truncated,
        strategy: Strategy::Slg,
    })
}
