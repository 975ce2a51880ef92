//! Shared test support: corpus loading, random neural environments and a
//! brute-force derivation enumerator used as an independent oracle.
#![allow(dead_code)]

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stochlog::circuit::{Leaf, NeuralCall, Prob};
use stochlog::program::{parse_program_with, BodyItem, LoadOptions, Program, RuleId, Weight};
use stochlog::resolution::prolog::solve_prolog_goal;
use stochlog::resolution::{derive, DerivationForest, DeriveConfig, Goal, Strategy};
use stochlog::terms::{unify, Substitution, Symbol, Term};

pub fn corpus_text(name: &str) -> String {
    let path = format!("{}/../../corpus/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn corpus(name: &str) -> Program {
    let lenient = name == "translation.sdcg";
    parse_program_with(
        &corpus_text(name),
        &LoadOptions {
            check_normalization: !lenient,
        },
    )
    .unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn tokens(names: &[&str]) -> Vec<Term> {
    names
        .iter()
        .map(|s| match s.parse::<i64>() {
            Ok(n) => Term::int(n),
            Err(_) => Term::atom(s),
        })
        .collect()
}

/// Every sequence over `alphabet` of length `0..=max_len`.
pub fn all_sequences(alphabet: &[Term], max_len: usize) -> Vec<Vec<Term>> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &layer {
            for a in alphabet {
                let mut t: Vec<Term> = s.clone();
                t.push(a.clone());
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// A random distribution per (model, inputs), drawn on first use and fixed
/// afterwards.
pub struct RandomEnv {
    rng: ChaCha8Rng,
    sizes: HashMap<Symbol, usize>,
    table: HashMap<(Symbol, Vec<Term>), Vec<f64>>,
}

impl RandomEnv {
    pub fn new(program: &Program, seed: u64) -> RandomEnv {
        RandomEnv {
            rng: ChaCha8Rng::seed_from_u64(seed),
            sizes: program.model_output_sizes().unwrap().into_iter().collect(),
            table: HashMap::new(),
        }
    }

    pub fn prob(&mut self, model: Symbol, inputs: &[Term], index: usize) -> f64 {
        let k = self.sizes[&model];
        let rng = &mut self.rng;
        let dist = self.table.entry((model, inputs.to_vec())).or_insert_with(|| {
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / z).collect()
        });
        dist[index]
    }

    /// Leaf probabilities of a forest: fixed weights from the program,
    /// neural outputs from the table.
    pub fn leaves(&mut self, program: &Program, forest: &DerivationForest) -> Vec<f64> {
        forest
            .circuit
            .leaves()
            .iter()
            .map(|leaf| match *leaf {
                Leaf::Rule(id) => program.fixed_probability(id).expect("fixed weight"),
                Leaf::Neural { call, output } => {
                    let NeuralCall { model, inputs } = forest.circuit.call(call).clone();
                    self.prob(model, &inputs, output as usize)
                }
                Leaf::Marker(_) => 1.0,
            })
            .collect()
    }
}

pub fn engine_probability(program: &Program, goal: &str, seq: &[Term], strategy: Strategy, env: &mut RandomEnv) -> (f64, DerivationForest) {
    let goal = Goal::parse(program, goal).unwrap();
    let forest = derive(program, &goal, seq, strategy, &DeriveConfig::default()).unwrap();
    assert!(!forest.truncated);
    let probs = env.leaves(program, &forest);
    (forest.circuit.value::<Prob>(forest.root, &probs).unwrap(), forest)
}

#[derive(Clone)]
enum Step {
    Call(Term),
    Tokens(Vec<Term>),
    Goal(Term),
    Choose { rule: RuleId, inputs: Vec<Term>, outputs: Vec<Term> },
}

const INF: usize = usize::MAX / 4;
const DEPTH_CAP: usize = 400;

/// Enumerates derivations one by one, each a product of rule and neural
/// probabilities, pruning only on the fewest tokens the remaining goals
/// must still consume.
pub struct Oracle<'a> {
    program: &'a Program,
    seq: &'a [Term],
    env: &'a mut RandomEnv,
    min_yield: Cow<'a, HashMap<(Symbol, usize), usize>>,
    scope: u32,
    pub derivations: usize,
    pub total: f64,
    /// Summed probability per answer instance.
    pub answers: BTreeMap<String, f64>,
}

pub fn min_yields(program: &Program) -> HashMap<(Symbol, usize), usize> {
    let mut y: HashMap<(Symbol, usize), usize> = HashMap::new();
    loop {
        let mut changed = false;
        for rule in &program.rules {
            let key = rule.head.functor_arity().unwrap();
            let mut total = 0usize;
            for item in &rule.body {
                total += match item {
                    BodyItem::Terminals(ts) => ts.len(),
                    BodyItem::Goal(_) => 0,
                    BodyItem::Call(t) => *y.get(&t.functor_arity().unwrap()).unwrap_or(&INF),
                };
            }
            let total = total.min(INF);
            let entry = y.entry(key).or_insert(INF);
            if total < *entry {
                *entry = total;
                changed = true;
            }
        }
        if !changed {
            return y;
        }
    }
}

impl<'a> Oracle<'a> {
    pub fn run(program: &'a Program, goal: &str, seq: &'a [Term], env: &'a mut RandomEnv) -> Oracle<'a> {
        let goal_term = stochlog::terms::parse_term(goal).unwrap();
        Oracle::start(program, &goal_term, Cow::Owned(min_yields(program)), seq, env)
    }

    /// [`Oracle::run`] with the goal parsed and the yields computed once.
    pub fn run_prepared(
        program: &'a Program,
        goal_term: &Term,
        min_yield: &'a HashMap<(Symbol, usize), usize>,
        seq: &'a [Term],
        env: &'a mut RandomEnv,
    ) -> Oracle<'a> {
        Oracle::start(program, goal_term, Cow::Borrowed(min_yield), seq, env)
    }

    fn start(
        program: &'a Program,
        goal_term: &Term,
        min_yield: Cow<'a, HashMap<(Symbol, usize), usize>>,
        seq: &'a [Term],
        env: &'a mut RandomEnv,
    ) -> Oracle<'a> {
        let mut o = Oracle {
            program,
            seq,
            env,
            min_yield,
            scope: 1 << 30,
            derivations: 0,
            total: 0.0,
            answers: BTreeMap::new(),
        };
        o.step(vec![Step::Call(goal_term.clone())], 0, Substitution::new(), 1.0, 0, goal_term);
        o
    }

    fn need(&self, stack: &[Step]) -> usize {
        stack
            .iter()
            .map(|s| match s {
                Step::Tokens(ts) => ts.len(),
                Step::Call(t) => *self.min_yield.get(&t.functor_arity().unwrap()).unwrap_or(&INF),
                _ => 0,
            })
            .fold(0usize, |a, b| (a + b).min(INF))
    }

    /// `stack` holds pending steps, next step last.
    fn step(&mut self, mut stack: Vec<Step>, pos: usize, theta: Substitution, p: f64, depth: usize, goal: &Term) {
        assert!(depth < DEPTH_CAP, "oracle depth cap reached");
        if pos + self.need(&stack) > self.seq.len() {
            return;
        }
        let Some(next) = stack.pop() else {
            if pos == self.seq.len() {
                self.derivations += 1;
                self.total += p;
                *self.answers.entry(theta.apply(goal).to_string()).or_insert(0.0) += p;
            }
            return;
        };
        match next {
            Step::Tokens(ts) => {
                let mut theta = theta;
                for (i, t) in ts.iter().enumerate() {
                    match unify(&theta.apply(t), &self.seq[pos + i]) {
                        Some(s) => theta = theta.compose(&s),
                        None => return,
                    }
                }
                self.step(stack, pos + ts.len(), theta, p, depth, goal);
            }
            Step::Goal(g) => {
                if let Some(theta) = solve_prolog_goal(self.program.clause_db(), &g, &theta, false).unwrap() {
                    self.step(stack, pos, theta, p, depth, goal);
                }
            }
            Step::Call(t) => {
                let t = theta.apply(&t);
                let key = t.functor_arity().unwrap();
                for &id in self.program.rules_for(key) {
                    let rule = self.program.rule(id);
                    self.scope += 1;
                    let scope = self.scope;
                    let Some(s) = unify(&t, &rule.head.rename(scope)) else { continue };
                    let theta = theta.compose(&s);
                    let weight = match &rule.weight {
                        Weight::Fixed(n) => n.to_f64(),
                        Weight::Implicit | Weight::Neural(_) => 1.0,
                        Weight::Trainable(_) => panic!("oracle needs fixed weights"),
                    };
                    let mut next = stack.clone();
                    if let Some(decl) = rule.neural() {
                        next.push(Step::Choose {
                            rule: id,
                            inputs: decl.inputs.iter().map(|x| x.rename(scope)).collect(),
                            outputs: decl.outputs.iter().map(|x| x.rename(scope)).collect(),
                        });
                    }
                    for item in rule.body.iter().rev() {
                        next.push(match item {
                            BodyItem::Call(c) => Step::Call(c.rename(scope)),
                            BodyItem::Terminals(ts) => Step::Tokens(ts.iter().map(|x| x.rename(scope)).collect()),
                            BodyItem::Goal(g) => Step::Goal(g.rename(scope)),
                        });
                    }
                    self.step(next, pos, theta, p * weight, depth + 1, goal);
                }
            }
            Step::Choose { rule, inputs, outputs } => {
                let decl = self.program.rule(rule).neural().unwrap().clone();
                let inputs: Vec<Term> = inputs.iter().map(|x| theta.apply(x)).collect();
                assert!(inputs.iter().all(Term::is_ground), "oracle: non-ground neural input");
                for index in 0..self.program.output_size(&decl) {
                    let tuple = self.program.output_tuple(&decl, index);
                    let mut th = Some(theta.clone());
                    for (o, v) in outputs.iter().zip(&tuple) {
                        th = th.and_then(|th| unify(&th.apply(o), v).map(|s| th.compose(&s)));
                    }
                    if let Some(th) = th {
                        let q = self.env.prob(decl.model, &inputs, index);
                        self.step(stack.clone(), pos, th, p * q, depth, goal);
                    }
                }
            }
        }
    }
}

/// `|ln a − ln b|`, zero when both vanish and infinite when only one does.
pub fn log_gap(a: f64, b: f64) -> f64 {
    match (a == 0.0, b == 0.0) {
        (true, true) => 0.0,
        (false, false) => (a.ln() - b.ln()).abs(),
        _ => f64::INFINITY,
    }
}

/// Calls `f` on every sequence over `alphabet` of length `0..=max_len`,
/// shortest first, without materializing them.
pub fn for_each_sequence(alphabet: &[Term], max_len: usize, mut f: impl FnMut(&[Term])) {
    for len in 0..=max_len {
        let mut digits = vec![0usize; len];
        let mut seq: Vec<Term> = vec![alphabet[0].clone(); len];
        loop {
            f(&seq);
            // Odometer increment, last position fastest.
            let mut i = len;
            let done = loop {
                if i == 0 {
                    break true;
                }
                i -= 1;
                digits[i] += 1;
                if digits[i] < alphabet.len() {
                    seq[i] = alphabet[digits[i]].clone();
                    break false;
                }
                digits[i] = 0;
                seq[i] = alphabet[0].clone();
            };
            if done {
                break;
            }
        }
    }
}

/// Runs the grammar forwards: enumerates every derivation whose yield has
/// at most `max_len` tokens, binding variable terminals to each token of
/// `alphabet`, and sums derivation probabilities per yielded sequence.
pub fn generate(program: &Program, goal: &str, alphabet: &[Term], max_len: usize, env: &mut RandomEnv) -> HashMap<Vec<Term>, f64> {
    let goal_term = stochlog::terms::parse_term(goal).unwrap();
    let mut g = Generator {
        program,
        alphabet,
        max_len,
        env,
        min_yield: min_yields(program),
        scope: 1 << 30,
        out: HashMap::new(),
    };
    g.step(vec![Step::Call(goal_term)], Vec::new(), Substitution::new(), 1.0, 0);
    g.out
}

struct Generator<'a> {
    program: &'a Program,
    alphabet: &'a [Term],
    max_len: usize,
    env: &'a mut RandomEnv,
    min_yield: HashMap<(Symbol, usize), usize>,
    scope: u32,
    out: HashMap<Vec<Term>, f64>,
}

impl Generator<'_> {
    fn need(&self, stack: &[Step]) -> usize {
        stack
            .iter()
            .map(|s| match s {
                Step::Tokens(ts) => ts.len(),
                Step::Call(t) => *self.min_yield.get(&t.functor_arity().unwrap()).unwrap_or(&INF),
                _ => 0,
            })
            .fold(0usize, |a, b| (a + b).min(INF))
    }

    fn step(&mut self, mut stack: Vec<Step>, emitted: Vec<Term>, theta: Substitution, p: f64, depth: usize) {
        assert!(depth < DEPTH_CAP, "generator depth cap reached");
        if emitted.len() + self.need(&stack) > self.max_len {
            return;
        }
        let Some(next) = stack.pop() else {
            let seq: Vec<Term> = emitted.iter().map(|t| theta.apply(t)).collect();
            assert!(seq.iter().all(Term::is_ground), "generator: non-ground yield");
            *self.out.entry(seq).or_insert(0.0) += p;
            return;
        };
        match next {
            Step::Tokens(ts) => {
                let Some((first, rest)) = ts.split_first() else {
                    return self.step(stack, emitted, theta, p, depth);
                };
                if !rest.is_empty() {
                    stack.push(Step::Tokens(rest.to_vec()));
                }
                let t = theta.apply(first);
                if t.is_ground() {
                    let mut emitted = emitted;
                    emitted.push(t);
                    self.step(stack, emitted, theta, p, depth);
                } else {
                    for a in self.alphabet {
                        if let Some(s) = unify(&t, a) {
                            let mut e = emitted.clone();
                            e.push(a.clone());
                            self.step(stack.clone(), e, theta.compose(&s), p, depth);
                        }
                    }
                }
            }
            Step::Goal(g) => {
                if let Some(theta) = solve_prolog_goal(self.program.clause_db(), &g, &theta, false).unwrap() {
                    self.step(stack, emitted, theta, p, depth);
                }
            }
            Step::Call(t) => {
                let t = theta.apply(&t);
                for &id in self.program.rules_for(t.functor_arity().unwrap()) {
                    let rule = self.program.rule(id);
                    self.scope += 1;
                    let scope = self.scope;
                    let Some(s) = unify(&t, &rule.head.rename(scope)) else { continue };
                    let weight = match &rule.weight {
                        Weight::Fixed(n) => n.to_f64(),
                        Weight::Implicit | Weight::Neural(_) => 1.0,
                        Weight::Trainable(_) => panic!("generator needs fixed weights"),
                    };
                    let mut next = stack.clone();
                    if let Some(decl) = rule.neural() {
                        next.push(Step::Choose {
                            rule: id,
                            inputs: decl.inputs.iter().map(|x| x.rename(scope)).collect(),
                            outputs: decl.outputs.iter().map(|x| x.rename(scope)).collect(),
                        });
                    }
                    for item in rule.body.iter().rev() {
                        next.push(match item {
                            BodyItem::Call(c) => Step::Call(c.rename(scope)),
                            BodyItem::Terminals(ts) => Step::Tokens(ts.iter().map(|x| x.rename(scope)).collect()),
                            BodyItem::Goal(g) => Step::Goal(g.rename(scope)),
                        });
                    }
                    self.step(next, emitted.clone(), theta.compose(&s), p * weight, depth + 1);
                }
            }
            Step::Choose { rule, inputs, outputs } => {
                let decl = self.program.rule(rule).neural().unwrap().clone();
                let inputs: Vec<Term> = inputs.iter().map(|x| theta.apply(x)).collect();
                assert!(inputs.iter().all(Term::is_ground), "generator: non-ground neural input");
                for index in 0..self.program.output_size(&decl) {
                    let tuple = self.program.output_tuple(&decl, index);
                    let mut th = Some(theta.clone());
                    for (o, v) in outputs.iter().zip(&tuple) {
                        th = th.and_then(|th| unify(&th.apply(o), v).map(|s| th.compose(&s)));
                    }
                    if let Some(th) = th {
                        let q = self.env.prob(decl.model, &inputs, index);
                        self.step(stack.clone(), emitted.clone(), th, p * q, depth);
                    }
                }
            }
        }
    }
}
