//! Depth-first solver for plain definite clauses and the builtins usable
//! inside `{...}` goals.

use std::rc::Rc;

use rustc_hash::FxHashMap;

use crate::terms::{well_known, ArithError, Bindings, Number, ScopeCounter, Substitution, Symbol, Term};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PrologError {
    #[error("arguments are not sufficiently instantiated in {0}")]
    Instantiation(String),
    #[error("unknown predicate {0}")]
    UnknownPredicate(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("arithmetic error in {goal}: {source}")]
    Arith { goal: String, source: ArithError },
    #[error("goal {goal} has more than one answer ({first} and {second})")]
    MultipleAnswers { goal: String, first: String, second: String },
    #[error("resolution depth limit {0} exceeded")]
    DepthExceeded(usize),
    #[error("unsupported control construct {0}")]
    Unsupported(String),
}

/// A plain definite clause `head :- body`; facts have body `true`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause {
    pub head: Term,
    pub body: Term,
}

impl Clause {
    pub fn fact(head: Term) -> Clause {
        Clause {
            head,
            body: Term::Atom(well_known::true_()),
        }
    }

    pub fn key(&self) -> (Symbol, usize) {
        self.head.functor_arity().expect("clause head is callable")
    }

    pub fn is_fact(&self) -> bool {
        matches!(self.body, Term::Atom(s) if s == well_known::true_())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ClauseDb {
    clauses: FxHashMap<(Symbol, usize), Vec<Clause>>,
}

impl ClauseDb {
    pub fn new() -> ClauseDb {
        ClauseDb::default()
    }

    pub fn add(&mut self, clause: Clause) {
        self.clauses.entry(clause.key()).or_default().push(clause);
    }

    pub fn defines(&self, key: (Symbol, usize)) -> bool {
        self.clauses.contains_key(&key)
    }

    pub fn get(&self, key: (Symbol, usize)) -> &[Clause] {
        self.clauses.get(&key).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// How a builtin or control construct treats its goal.
pub fn is_builtin(key: (Symbol, usize)) -> bool {
    matches!(
        (key.0.as_str(), key.1),
        ("true" | "fail" | "false", 0)
            | ("," | ";" | "->" | "=" | "\\=" | "==" | "\\==" | "is" | "<" | ">" | "=<" | ">=" | "=:=" | "=\\=", 2)
            | ("member", 2)
            | ("\\+" | "var" | "nonvar" | "ground" | "integer" | "number" | "atom" | "call", 1)
    )
}

/// Sentinel literals of translated programs, always true.
fn is_sentinel(key: (Symbol, usize)) -> bool {
    matches!((key.0.as_str(), key.1), ("p", 1) | ("nn", 3))
}

fn arith(goal: &Term, result: Result<Number, ArithError>) -> Result<Number, PrologError> {
    result.map_err(|source| PrologError::Arith {
        goal: goal.to_string(),
        source,
    })
}

/// Evaluates an arithmetic expression under the current bindings.
pub fn eval_arith(expr: &Term, bindings: &Bindings) -> Result<Number, PrologError> {
    match bindings.walk(expr) {
        Term::Num(n) => Ok(n.clone()),
        Term::Var(_) => Err(PrologError::Instantiation(bindings.resolve(expr).to_string())),
        Term::Atom(a) => Err(PrologError::Type(format!("{a} is not a number"))),
        t @ Term::Compound(c) => {
            let name = c.functor.as_str();
            if c.args.len() == 1 {
                let x = eval_arith(&c.args[0], bindings)?;
                return match name {
                    "-" => Ok(x.neg()),
                    "+" => Ok(x),
                    "abs" => Ok(x.abs()),
                    _ => Err(PrologError::Type(format!("unknown arithmetic function {name}/1"))),
                };
            }
            if c.args.len() != 2 {
                return Err(PrologError::Type(format!("unknown arithmetic function {name}/{}", c.args.len())));
            }
            let x = eval_arith(&c.args[0], bindings)?;
            let y = eval_arith(&c.args[1], bindings)?;
            match name {
                "+" => Ok(x.add(&y)),
                "-" => Ok(x.sub(&y)),
                "*" => Ok(x.mul(&y)),
                "/" => arith(t, x.div(&y)),
                "//" => arith(t, x.int_div(&y)),
                "mod" => arith(t, x.modulo(&y)),
                "rem" => arith(t, x.rem(&y)),
                "**" | "^" => arith(t, x.pow(&y)),
                "min" => Ok(if y < x { y } else { x }),
                "max" => Ok(if y > x { y } else { x }),
                _ => Err(PrologError::Type(format!("unknown arithmetic function {name}/2"))),
            }
        }
    }
}

/// Persistent goal stack; the depth counts clause resolutions above a goal.
enum Goals {
    Nil,
    Cons(Term, usize, Rc<Goals>),
}

/// Whether the search should go on after an answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

pub struct Solver<'a> {
    db: &'a ClauseDb,
    scopes: &'a mut ScopeCounter,
    /// Treat `p/1` and `nn/3` as true.
    pub sentinels: bool,
    pub max_depth: usize,
}

impl<'a> Solver<'a> {
    pub fn new(db: &'a ClauseDb, scopes: &'a mut ScopeCounter) -> Solver<'a> {
        Solver {
            db,
            scopes,
            sentinels: false,
            max_depth: 10_000,
        }
    }

    /// Enumerates answers of `goal` depth-first. Bindings are restored when
    /// the call returns.
    pub fn solve(
        &mut self,
        goal: &Term,
        bindings: &mut Bindings,
        on_answer: &mut dyn FnMut(&mut Bindings) -> Flow,
    ) -> Result<Flow, PrologError> {
        let goals = Rc::new(Goals::Cons(goal.clone(), 0, Rc::new(Goals::Nil)));
        let mark = bindings.mark();
        let flow = self.run(&goals, bindings, on_answer);
        bindings.undo(mark);
        flow
    }

    fn run(
        &mut self,
        goals: &Rc<Goals>,
        bindings: &mut Bindings,
        on_answer: &mut dyn FnMut(&mut Bindings) -> Flow,
    ) -> Result<Flow, PrologError> {
        let (goal, depth, rest) = match &**goals {
            Goals::Nil => return Ok(on_answer(bindings)),
            Goals::Cons(goal, depth, rest) => (goal, *depth, rest),
        };
        let goal = bindings.walk(goal).clone();
        let key = match goal.functor_arity() {
            Some(key) => key,
            None if goal.is_var() => return Err(PrologError::Instantiation(goal.to_string())),
            None => return Err(PrologError::Type(format!("{goal} is not callable"))),
        };
        let args = goal.args();
        let push = |term: &Term, next: &Rc<Goals>| Rc::new(Goals::Cons(term.clone(), depth, next.clone()));
        match (key.0.as_str(), key.1) {
            ("true", 0) => return self.run(rest, bindings, on_answer),
            ("!", 0) => return Err(PrologError::Unsupported("!".into())),
            ("fail" | "false", 0) => return Ok(Flow::Continue),
            (",", 2) => {
                let next = push(&args[0], &push(&args[1], rest));
                return self.run(&next, bindings, on_answer);
            }
            (";", 2) => {
                if let Some(cond) = if_then(&args[0]) {
                    let mark = bindings.mark();
                    let mut first: Option<Term> = None;
                    self.solve(&cond.0, bindings, &mut |b| {
                        first = Some(b.resolve(&cond.0));
                        Flow::Stop
                    })?;
                    if let Some(snapshot) = first {
                        bindings.unify(&cond.0, &snapshot);
                        let flow = self.run(&push(&cond.1, rest), bindings, on_answer);
                        bindings.undo(mark);
                        return flow;
                    }
                    return self.run(&push(&args[1], rest), bindings, on_answer);
                }
                let mark = bindings.mark();
                if self.run(&push(&args[0], rest), bindings, on_answer)? == Flow::Stop {
                    bindings.undo(mark);
                    return Ok(Flow::Stop);
                }
                bindings.undo(mark);
                let flow = self.run(&push(&args[1], rest), bindings, on_answer);
                bindings.undo(mark);
                return flow;
            }
            ("->", 2) => {
                let ite = Term::apply(";", vec![goal.clone(), Term::Atom(well_known::fail())]);
                return self.run(&push(&ite, rest), bindings, on_answer);
            }
            ("\\+", 1) => {
                let mut found = false;
                self.solve(&args[0], bindings, &mut |_| {
                    found = true;
                    Flow::Stop
                })?;
                if found {
                    return Ok(Flow::Continue);
                }
                return self.run(rest, bindings, on_answer);
            }
            ("call", 1) => return self.run(&push(&args[0], rest), bindings, on_answer),
            ("member", 2) => {
                let list = bindings.resolve(&args[1]);
                let (items, tail) = list.list_items();
                if tail.is_var() {
                    return Err(PrologError::Instantiation(goal.to_string()));
                }
                for item in items {
                    let mark = bindings.mark();
                    if bindings.unify(&args[0], &item) && self.run(rest, bindings, on_answer)? == Flow::Stop {
                        bindings.undo(mark);
                        return Ok(Flow::Stop);
                    }
                    bindings.undo(mark);
                }
                return Ok(Flow::Continue);
            }
            _ => {}
        }
        if let Some(ok) = deterministic_builtin(&goal, key, bindings)? {
            return self.continue_if(ok, rest, bindings, on_answer);
        }
        if self.sentinels && is_sentinel(key) {
            return self.run(rest, bindings, on_answer);
        }
        if !self.db.defines(key) {
            return Err(PrologError::UnknownPredicate(format!("{}/{}", key.0, key.1)));
        }
        if depth >= self.max_depth {
            return Err(PrologError::DepthExceeded(self.max_depth));
        }
        for clause in self.db.get(key) {
            let scope = self.scopes.fresh();
            let head = clause.head.rename(scope);
            let mark = bindings.mark();
            if bindings.unify(&goal, &head) {
                let next = if clause.is_fact() {
                    rest.clone()
                } else {
                    Rc::new(Goals::Cons(clause.body.rename(scope), depth + 1, rest.clone()))
                };
                if self.run(&next, bindings, on_answer)? == Flow::Stop {
                    bindings.undo(mark);
                    return Ok(Flow::Stop);
                }
            }
            bindings.undo(mark);
        }
        Ok(Flow::Continue)
    }

    fn continue_if(
        &mut self,
        ok: bool,
        rest: &Rc<Goals>,
        bindings: &mut Bindings,
        on_answer: &mut dyn FnMut(&mut Bindings) -> Flow,
    ) -> Result<Flow, PrologError> {
        if !ok {
            return Ok(Flow::Continue);
        }
        self.run(rest, bindings, on_answer)
    }

    /// First answer of `goal`, left applied to `bindings`. A second answer
    /// with a different instantiation of the goal is reported as
    /// `MultipleAnswers`; the caller decides whether that is fatal.
    pub fn solve_det(&mut self, goal: &Term, bindings: &mut Bindings) -> Result<DetOutcome, PrologError> {
        if let Some(key) = bindings.walk(goal).functor_arity() {
            if let Some(ok) = deterministic_builtin(goal, key, bindings)? {
                return Ok(if ok { DetOutcome::Unique } else { DetOutcome::Failed });
            }
        }
        let mut first: Option<Term> = None;
        let mut second: Option<Term> = None;
        self.solve(goal, bindings, &mut |b| {
            let answer = b.resolve(goal);
            match &first {
                None => {
                    first = Some(answer);
                    Flow::Continue
                }
                Some(f) if *f == answer => Flow::Continue,
                Some(_) => {
                    second = Some(answer);
                    Flow::Stop
                }
            }
        })?;
        let Some(first) = first else {
            return Ok(DetOutcome::Failed);
        };
        let unified = bindings.unify(goal, &first);
        debug_assert!(unified);
        Ok(match second {
            None => DetOutcome::Unique,
            Some(second) => DetOutcome::Ambiguous(PrologError::MultipleAnswers {
                goal: goal.to_string(),
                first: first.to_string(),
                second: second.to_string(),
            }),
        })
    }
}

/// Result of [`Solver::solve_det`]. On `Unique` and `Ambiguous` the first
/// answer has been applied to the bindings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DetOutcome {
    Failed,
    Unique,
    Ambiguous(PrologError),
}

fn if_then(term: &Term) -> Option<(Term, Term)> {
    match term {
        Term::Compound(c) if c.functor.as_str() == "->" && c.args.len() == 2 => Some((c.args[0].clone(), c.args[1].clone())),
        _ => None,
    }
}

/// Runs a deterministic builtin; `None` when `key` is not one.
fn deterministic_builtin(goal: &Term, key: (Symbol, usize), bindings: &mut Bindings) -> Result<Option<bool>, PrologError> {
    if key.1 == 0 {
        return Ok(None);
    }
    let goal = bindings.walk(goal).clone();
    let args = goal.args();
    let compare = |bindings: &Bindings| -> Result<std::cmp::Ordering, PrologError> {
        let x = eval_arith(&args[0], bindings)?;
        let y = eval_arith(&args[1], bindings)?;
        Ok(x.cmp(&y))
    };
    use std::cmp::Ordering::*;
    let ok = match (key.0.as_str(), key.1) {
        ("=", 2) => {
            let mark = bindings.mark();
            let ok = bindings.unify(&args[0], &args[1]);
            if !ok {
                bindings.undo(mark);
            }
            ok
        }
        ("\\=", 2) => {
            let mark = bindings.mark();
            let ok = bindings.unify(&args[0], &args[1]);
            bindings.undo(mark);
            !ok
        }
        ("==", 2) => bindings.resolve(&args[0]) == bindings.resolve(&args[1]),
        ("\\==", 2) => bindings.resolve(&args[0]) != bindings.resolve(&args[1]),
        ("is", 2) => {
            let value = Term::Num(eval_arith(&args[1], bindings)?);
            let mark = bindings.mark();
            let ok = bindings.unify(&args[0], &value);
            if !ok {
                bindings.undo(mark);
            }
            ok
        }
        ("<", 2) => compare(bindings)? == Less,
        (">", 2) => compare(bindings)? == Greater,
        ("=<", 2) => compare(bindings)? != Greater,
        (">=", 2) => compare(bindings)? != Less,
        ("=:=", 2) => compare(bindings)? == Equal,
        ("=\\=", 2) => compare(bindings)? != Equal,
        ("var", 1) => bindings.walk(&args[0]).is_var(),
        ("nonvar", 1) => !bindings.walk(&args[0]).is_var(),
        ("ground", 1) => bindings.resolve(&args[0]).is_ground(),
        ("integer", 1) => matches!(bindings.walk(&args[0]), Term::Num(n) if n.is_integer()),
        ("number", 1) => matches!(bindings.walk(&args[0]), Term::Num(_)),
        ("atom", 1) => matches!(bindings.walk(&args[0]), Term::Atom(_)),
        _ => return Ok(None),
    };
    Ok(Some(ok))
}

/// All ground solutions of `template` for `goal`, in search order, without
/// duplicates.
pub fn find_all(db: &ClauseDb, goal: &Term, template: &Term) -> Result<Vec<Term>, PrologError> {
    let mut scopes = ScopeCounter::new();
    let mut solver = Solver::new(db, &mut scopes);
    let mut bindings = Bindings::new(true);
    let mut out: Vec<Term> = Vec::new();
    solver.solve(goal, &mut bindings, &mut |b| {
        let t = b.resolve(template);
        if !out.contains(&t) {
            out.push(t);
        }
        Flow::Continue
    })?;
    Ok(out)
}

/// Solves a conjunction against `db` starting from `theta`; returns the
/// first answer substitution, or `None` when the goal fails.
pub fn solve_prolog_goal(
    db: &ClauseDb,
    goal: &Term,
    theta: &Substitution,
    strict: bool,
) -> Result<Option<Substitution>, PrologError> {
    let mut scopes = ScopeCounter::new();
    let mut solver = Solver::new(db, &mut scopes);
    let mut bindings = Bindings::from_substitution(theta, true);
    let vars = theta.apply(goal).vars();
    match solver.solve_det(goal, &mut bindings)? {
        DetOutcome::Failed => Ok(None),
        DetOutcome::Ambiguous(err) if strict => Err(err),
        DetOutcome::Ambiguous(err) => {
            log::warn!("{err}");
            Ok(Some(theta.compose(&bindings.to_substitution().restrict(&vars))))
        }
        DetOutcome::Unique => Ok(Some(theta.compose(&bindings.to_substitution().restrict(&vars)))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terms::{parse_term, read_clauses};

    fn db(src: &str) -> ClauseDb {
        let mut db = ClauseDb::new();
        for c in read_clauses(src).unwrap() {
            let t = c.term;
            if t.is_functor(Symbol::intern(":-"), 2) {
                db.add(Clause {
                    head: t.args()[0].clone(),
                    body: t.args()[1].clone(),
                });
            } else {
                db.add(Clause::fact(t));
            }
        }
        db
    }

    fn solve(goal: &str, theta: &str) -> Option<String> {
        let theta = parse_term(theta).unwrap();
        let pairs = theta.as_list().unwrap().into_iter().map(|eq| {
            let Term::Var(v) = eq.args()[0] else { panic!() };
            (v, eq.args()[1].clone())
        });
        let s = Substitution::from_bindings(pairs);
        solve_prolog_goal(&ClauseDb::new(), &parse_term(goal).unwrap(), &s, true)
            .unwrap()
            .map(|s| s.to_string())
    }

    #[test]
    fn arithmetic_goals() {
        assert_eq!(solve("N is 2+0", "[]").as_deref(), Some("{N=2}"));
        assert_eq!(solve("(N2>0, N is N1/N2)", "[N1=1, N2=2]").as_deref(), Some("{N=0.5, N1=1, N2=2}"));
        assert_eq!(solve("K \\= L", "[K=2, L=2]"), None);
        assert_eq!(solve("(N2 > 0, N is N1/N2)", "[N1=1, N2=0]"), None);
        assert_eq!(solve("N is 7 // 2 + 10 ** 2 + 7 mod 2", "[]").as_deref(), Some("{N=104}"));
    }

    #[test]
    fn errors_surface() {
        let err = solve_prolog_goal(&ClauseDb::new(), &parse_term("N is X + 1").unwrap(), &Substitution::new(), true);
        assert!(matches!(err, Err(PrologError::Instantiation(_))));
        let err = solve_prolog_goal(&ClauseDb::new(), &parse_term("foo(1)").unwrap(), &Substitution::new(), true);
        assert!(matches!(err, Err(PrologError::UnknownPredicate(_))));
        let err = solve_prolog_goal(&ClauseDb::new(), &parse_term("N is 1/0").unwrap(), &Substitution::new(), true);
        assert!(matches!(err, Err(PrologError::Arith { .. })));
    }

    #[test]
    fn multiple_answers_are_detected() {
        let goal = parse_term("member(X, [1,2])").unwrap();
        let err = solve_prolog_goal(&ClauseDb::new(), &goal, &Substitution::new(), true);
        assert!(matches!(err, Err(PrologError::MultipleAnswers { .. })));
        let first = solve_prolog_goal(&ClauseDb::new(), &goal, &Substitution::new(), false).unwrap();
        assert_eq!(first.unwrap().to_string(), "{X=1}");
        let same = parse_term("(1 \\= 2 ; 2 \\= 3)").unwrap();
        assert!(solve_prolog_goal(&ClauseDb::new(), &same, &Substitution::new(), true).unwrap().is_some());
    }

    #[test]
    fn clauses_and_control() {
        let db = db("digit(Y) :- member(Y, [0,1,2]).\nedge(a,b). edge(b,c).\npath(X,Y) :- edge(X,Y).\npath(X,Y) :- edge(X,Z), path(Z,Y).\n");
        let all = find_all(&db, &parse_term("digit(Y)").unwrap(), &parse_term("Y").unwrap()).unwrap();
        assert_eq!(all, vec![Term::int(0), Term::int(1), Term::int(2)]);
        let paths = find_all(&db, &parse_term("path(a,Y)").unwrap(), &parse_term("Y").unwrap()).unwrap();
        assert_eq!(paths.len(), 2);
        let ite = find_all(&db, &parse_term("(edge(a,X) -> Y = yes ; Y = no)").unwrap(), &parse_term("Y").unwrap()).unwrap();
        assert_eq!(ite, vec![Term::atom("yes")]);
        let neg = find_all(&db, &parse_term("\\+ edge(c, _)").unwrap(), &Term::atom("ok")).unwrap();
        assert_eq!(neg, vec![Term::atom("ok")]);
    }
}
