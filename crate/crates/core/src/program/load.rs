use rustc_hash::FxHashMap;

use super::{BodyItem, Group, GroupKind, Item, NeuralDecl, Program, Rule, RuleId, Weight, UNREACHABLE};
use crate::resolution::prolog::{eval_arith, find_all, is_builtin, Clause, ClauseDb, PrologError};
use crate::terms::{read_clauses, well_known, Bindings, Number, Position, Symbol, SyntaxError, Term, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProgramError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("{position}: weights of {group} sum to {sum}, not 1")]
    Normalization { group: String, sum: String, position: Position },
    #[error("{position}: {role} variable {var} of the neural declaration does not occur in its rule")]
    NeuralVariable { var: String, role: &'static str, position: Position },
    #[error("{position}: unknown domain predicate {name}/1")]
    UnknownDomain { name: String, position: Position },
    #[error("{position}: domain {name} {reason}")]
    BadDomain { name: String, reason: String, position: Position },
    #[error("{position}: nonterminal {name} is not defined by any grammar rule")]
    UndefinedNonterminal { name: String, position: Position },
    #[error("{position}: {message}")]
    Invalid { message: String, position: Position },
    #[error("{position}: {source}")]
    Goal { source: PrologError, position: Position },
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Reject fixed-weight groups whose weights do not sum to 1.
    pub check_normalization: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { check_normalization: true }
    }
}

/// Tolerance on the sum of a fixed-weight group.
const NORMALIZATION_TOLERANCE: (i64, i64) = (1, 1_000_000_000);

pub fn parse_program(text: &str) -> Result<Program, ProgramError> {
    parse_program_with(text, &LoadOptions::default())
}

fn invalid<T>(position: Position, message: impl Into<String>) -> Result<T, ProgramError> {
    Err(ProgramError::Invalid {
        message: message.into(),
        position,
    })
}

fn is_op(term: &Term, name: &str, arity: usize) -> bool {
    term.is_functor(Symbol::intern(name), arity)
}

fn parse_weight(term: &Term, position: Position) -> Result<Weight, ProgramError> {
    if is_op(term, "t", 1) {
        let arg = &term.args()[0];
        if arg.is_var() {
            return Ok(Weight::Trainable(None));
        }
        return Ok(Weight::Trainable(Some(probability(arg, position)?)));
    }
    if is_op(term, "nn", 4) {
        let args = term.args();
        let Term::Atom(model) = args[0] else {
            return invalid(position, format!("model name must be an atom in {term}"));
        };
        let list = |t: &Term, what: &str| -> Result<Vec<Term>, ProgramError> {
            match t.as_list() {
                Some(items) => Ok(items),
                None => invalid(position, format!("{what} of {term} must be a list")),
            }
        };
        let inputs = list(&args[1], "inputs")?;
        let outputs = list(&args[2], "outputs")?;
        let domain_terms = list(&args[3], "domains")?;
        for v in inputs.iter().chain(&outputs) {
            if !v.is_var() {
                return invalid(position, format!("neural inputs and outputs must be variables, found {v}"));
            }
        }
        let mut domains = Vec::new();
        for d in domain_terms {
            match d {
                Term::Atom(s) => domains.push(s),
                other => return invalid(position, format!("domain must be a predicate name, found {other}")),
            }
        }
        if domains.len() != outputs.len() {
            return invalid(position, format!("{} outputs but {} domains in {term}", outputs.len(), domains.len()));
        }
        return Ok(Weight::Neural(NeuralDecl {
            model,
            inputs,
            outputs,
            domains,
        }));
    }
    Ok(Weight::Fixed(probability(term, position)?))
}

fn probability(term: &Term, position: Position) -> Result<Number, ProgramError> {
    let value = eval_arith(term, &Bindings::new(true)).map_err(|source| ProgramError::Goal { source, position })?;
    if value.signum() < 0 || value > Number::Int(1) {
        return invalid(position, format!("probability {term} is outside [0,1]"));
    }
    Ok(value)
}

fn parse_body(body: &Term, position: Position) -> Result<Vec<BodyItem>, ProgramError> {
    let mut items = Vec::new();
    for part in body.flatten_op(well_known::comma()) {
        match &part {
            Term::Var(v) => return invalid(position, format!("variable {v} used as a grammar body item")),
            Term::Num(n) => return invalid(position, format!("number {n} used as a grammar body item")),
            Term::Atom(s) if *s == well_known::nil() => {}
            Term::Atom(s) if s.as_str() == "!" => return invalid(position, "cut is not supported in grammar rules"),
            _ if part.is_functor(well_known::cons(), 2) => match part.as_list() {
                Some(terminals) => items.push(BodyItem::Terminals(terminals)),
                None => return invalid(position, format!("terminal list {part} is not a proper list")),
            },
            _ if part.is_functor(well_known::curly(), 1) => items.push(BodyItem::Goal(part.args()[0].clone())),
            _ if is_op(&part, ";", 2) || is_op(&part, "->", 2) || is_op(&part, "\\+", 1) => {
                return invalid(position, format!("control construct {part} must be wrapped in {{}}"))
            }
            _ => items.push(BodyItem::Call(part.clone())),
        }
    }
    Ok(items)
}

/// Checks that every predicate called from a `{...}` goal exists.
fn check_goal(goal: &Term, db: &ClauseDb, position: Position) -> Result<(), ProgramError> {
    let Some(key) = goal.functor_arity() else {
        return Ok(());
    };
    let control = matches!((key.0.as_str(), key.1), ("," | ";" | "->", 2) | ("\\+" | "call", 1));
    if control {
        for arg in goal.args() {
            check_goal(arg, db, position)?;
        }
        return Ok(());
    }
    if is_builtin(key) || db.defines(key) {
        return Ok(());
    }
    Err(ProgramError::Goal {
        source: PrologError::UnknownPredicate(format!("{}/{}", key.0, key.1)),
        position,
    })
}

struct RawRule {
    head: Term,
    body: Vec<BodyItem>,
    weight: Weight,
    position: Position,
}

pub fn parse_program_with(text: &str, options: &LoadOptions) -> Result<Program, ProgramError> {
    let mut raw_rules: Vec<RawRule> = Vec::new();
    let mut clauses: Vec<(Clause, Position)> = Vec::new();
    let mut items: Vec<Item> = Vec::new();
    for read in read_clauses(text)? {
        let term = read.term;
        let position = read.position;
        if is_op(&term, "-->", 2) {
            let lhs = &term.args()[0];
            let (weight, head) = if is_op(lhs, "::", 2) {
                (parse_weight(&lhs.args()[0], position)?, lhs.args()[1].clone())
            } else {
                (Weight::Implicit, lhs.clone())
            };
            if head.functor_arity().is_none() {
                return invalid(position, format!("rule head {head} is not callable"));
            }
            let body = parse_body(&term.args()[1], position)?;
            items.push(Item::Rule(RuleId(raw_rules.len() as u32)));
            raw_rules.push(RawRule {
                head,
                body,
                weight,
                position,
            });
        } else if is_op(&term, ":-", 2) {
            let head = term.args()[0].clone();
            if head.functor_arity().is_none() {
                return invalid(position, format!("clause head {head} is not callable"));
            }
            items.push(Item::Clause(clauses.len()));
            clauses.push((
                Clause {
                    head,
                    body: term.args()[1].clone(),
                },
                position,
            ));
        } else if is_op(&term, ":-", 1) {
            return invalid(position, "directives are not supported");
        } else if is_op(&term, "::", 2) {
            return invalid(position, "weighted clause without '-->'");
        } else if term.functor_arity().is_some() {
            items.push(Item::Clause(clauses.len()));
            clauses.push((Clause::fact(term), position));
        } else {
            return invalid(position, format!("{term} is not a clause"));
        }
    }

    let mut db = ClauseDb::new();
    for (clause, _) in &clauses {
        db.add(clause.clone());
    }

    let mut groups: Vec<Group> = Vec::new();
    let mut group_index: FxHashMap<(Symbol, usize), usize> = FxHashMap::default();
    let mut rules: Vec<Rule> = Vec::new();
    for (i, raw) in raw_rules.into_iter().enumerate() {
        let key = raw.head.functor_arity().unwrap();
        if db.defines(key) {
            return invalid(raw.position, format!("{}/{} is defined by both grammar rules and clauses", key.0, key.1));
        }
        let group = *group_index.entry(key).or_insert_with(|| {
            groups.push(Group {
                predicate: key,
                rules: Vec::new(),
                kind: GroupKind::Fixed,
            });
            groups.len() - 1
        });
        let slot = groups[group].rules.len();
        groups[group].rules.push(RuleId(i as u32));
        rules.push(Rule {
            id: RuleId(i as u32),
            head: raw.head,
            body: raw.body,
            weight: raw.weight,
            group,
            slot,
            position: raw.position,
            item_min_yield: Vec::new(),
        });
    }

    for group in &mut groups {
        let members: Vec<&Rule> = group.rules.iter().map(|r| &rules[r.index()]).collect();
        let first = members[0].position;
        let neural = members.iter().any(|r| matches!(r.weight, Weight::Neural(_)));
        let trainable = members.iter().any(|r| matches!(r.weight, Weight::Trainable(_)));
        if neural {
            if members.len() > 1 {
                return invalid(first, format!("neural nonterminal {} must be defined by a single rule", group.name()));
            }
            group.kind = GroupKind::Neural;
            continue;
        }
        if members.len() > 1 {
            if let Some(r) = members.iter().find(|r| r.weight == Weight::Implicit) {
                return invalid(r.position, format!("rule of {} needs a weight: the group has several rules", group.name()));
            }
        }
        if trainable {
            group.kind = GroupKind::Trainable;
            continue;
        }
        let sum = members.iter().fold(Number::Int(0), |acc, r| match &r.weight {
            Weight::Fixed(n) => acc.add(n),
            _ => acc.add(&Number::Int(1)),
        });
        let tolerance = Number::ratio(NORMALIZATION_TOLERANCE.0, NORMALIZATION_TOLERANCE.1).unwrap();
        if options.check_normalization && sum.sub(&Number::Int(1)).abs() > tolerance {
            return Err(ProgramError::Normalization {
                group: group.name(),
                sum: sum.to_string(),
                position: first,
            });
        }
    }

    let mut domains: FxHashMap<Symbol, Vec<Term>> = FxHashMap::default();
    for rule in &rules {
        for item in &rule.body {
            match item {
                BodyItem::Call(call) => {
                    let key = call.functor_arity().unwrap();
                    if !group_index.contains_key(&key) {
                        return Err(ProgramError::UndefinedNonterminal {
                            name: format!("{}/{}", key.0, key.1),
                            position: rule.position,
                        });
                    }
                }
                BodyItem::Goal(goal) => check_goal(goal, &db, rule.position)?,
                BodyItem::Terminals(_) => {}
            }
        }
        let Some(decl) = rule.neural() else { continue };
        let mut rule_vars: Vec<Var> = rule.head.vars();
        for item in &rule.body {
            match item {
                BodyItem::Call(t) | BodyItem::Goal(t) => t.collect_vars(&mut rule_vars),
                BodyItem::Terminals(ts) => ts.iter().for_each(|t| t.collect_vars(&mut rule_vars)),
            }
        }
        for (role, vars) in [("input", &decl.inputs), ("output", &decl.outputs)] {
            for v in vars {
                let Term::Var(var) = v else { unreachable!() };
                if !rule_vars.contains(var) {
                    return Err(ProgramError::NeuralVariable {
                        var: var.to_string(),
                        role,
                        position: rule.position,
                    });
                }
            }
        }
        for name in &decl.domains {
            if domains.contains_key(name) {
                continue;
            }
            if !db.defines((*name, 1)) {
                return Err(ProgramError::UnknownDomain {
                    name: name.to_string(),
                    position: rule.position,
                });
            }
            let x = Term::var("$X");
            let goal = Term::compound(*name, vec![x.clone()]);
            let values = find_all(&db, &goal, &x).map_err(|source| ProgramError::Goal {
                source,
                position: rule.position,
            })?;
            if values.is_empty() {
                return Err(ProgramError::BadDomain {
                    name: name.to_string(),
                    reason: "is empty".into(),
                    position: rule.position,
                });
            }
            if let Some(v) = values.iter().find(|v| !v.is_ground()) {
                return Err(ProgramError::BadDomain {
                    name: name.to_string(),
                    reason: format!("has non-ground value {v}"),
                    position: rule.position,
                });
            }
            domains.insert(*name, values);
        }
    }

    let group_min_yield = min_yields(&rules, &groups, &group_index);
    for rule in &mut rules {
        rule.item_min_yield = rule
            .body
            .iter()
            .map(|item| match item {
                BodyItem::Terminals(ts) => ts.len(),
                BodyItem::Goal(_) => 0,
                BodyItem::Call(c) => group_min_yield[group_index[&c.functor_arity().unwrap()]],
            })
            .collect();
    }

    Ok(Program {
        rules,
        groups,
        clauses,
        items,
        group_index,
        db,
        domains,
        group_min_yield,
    })
}

/// Least fixpoint of the minimum number of terminals each nonterminal
/// derives; `UNREACHABLE` when it has no finite derivation.
fn min_yields(rules: &[Rule], groups: &[Group], index: &FxHashMap<(Symbol, usize), usize>) -> Vec<usize> {
    let mut best = vec![UNREACHABLE; groups.len()];
    loop {
        let mut changed = false;
        for rule in rules {
            let mut total = 0usize;
            for item in &rule.body {
                total += match item {
                    BodyItem::Terminals(ts) => ts.len(),
                    BodyItem::Goal(_) => 0,
                    BodyItem::Call(c) => best[index[&c.functor_arity().unwrap()]],
                };
            }
            let total = total.min(UNREACHABLE);
            if total < best[rule.group] {
                best[rule.group] = total;
                changed = true;
            }
        }
        if !changed {
            return best;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DIGIT_SUMS: &str = "
0.5 :: e(N) --> n(N).
0.5 :: e(N) --> e(N1), [+], n(N2), {N is N1 + N2}.
0.1 :: n(0) --> [0].  0.1 :: n(1) --> [1].  0.1 :: n(2) --> [2].  0.1 :: n(3) --> [3].
0.1 :: n(4) --> [4].  0.1 :: n(5) --> [5].  0.1 :: n(6) --> [6].  0.1 :: n(7) --> [7].
0.1 :: n(8) --> [8].  0.1 :: n(9) --> [9].
";

    #[test]
    fn loads_digit_sum_grammar() {
        let p = parse_program(DIGIT_SUMS).unwrap();
        assert_eq!(p.groups.len(), 2);
        assert_eq!(p.groups[0].rules.len(), 2);
        assert_eq!(p.groups[1].rules.len(), 10);
        assert_eq!(p.fixed_probability(RuleId(0)), Some(0.5));
        assert_eq!(p.fixed_probability(RuleId(5)), Some(0.1));
        assert_eq!(p.min_yield(0), 1);
        assert_eq!(p.rule(RuleId(1)).item_min_yield, vec![1, 1, 1, 0]);
    }

    #[test]
    fn rejects_unnormalized_groups() {
        let err = parse_program("0.5 :: e --> [a].\n0.6 :: e --> [b].").unwrap_err();
        match err {
            ProgramError::Normalization { group, sum, .. } => {
                assert_eq!(group, "e/0");
                assert_eq!(sum, "1.1");
            }
            other => panic!("{other}"),
        }
        let lenient = LoadOptions { check_normalization: false };
        assert!(parse_program_with("0.33 :: e --> [a].\n0.33 :: e --> [b].", &lenient).is_ok());
        assert!(parse_program("1/3 :: e --> [a].\n1/3 :: e --> [b].\n1/3 :: e --> [c].").is_ok());
    }

    #[test]
    fn loads_neural_rules() {
        let src = "digit(Y) :- member(Y,[0,1,2,3,4,5,6,7,8,9]).
nn(number, [X],[Y],[digit]):: number(Y) --> [X].
addition(N) -->  number(N1), number(N2), {N is N1+N2}.";
        let p = parse_program(src).unwrap();
        assert_eq!(p.rules.len(), 2);
        let decl = p.rules[0].neural().unwrap();
        assert_eq!(p.output_size(decl), 10);
        assert_eq!(p.output_tuple(decl, 7), vec![Term::int(7)]);
        assert_eq!(p.rules[1].weight, Weight::Implicit);
        assert_eq!(p.fixed_probability(RuleId(1)), Some(1.0));
    }

    #[test]
    fn neural_validation_errors() {
        let src = "d(Y) :- member(Y,[0,1]).\nnn(m,[X],[Y],[d]) :: s --> s_switch(Y).\ns_switch(0) --> [a].";
        let err = parse_program(src).unwrap_err();
        assert!(matches!(err, ProgramError::NeuralVariable { role: "input", .. }), "{err}");
        let src = "nn(m,[X],[Y],[nope]) :: n(Y) --> [X].";
        assert!(matches!(parse_program(src).unwrap_err(), ProgramError::UnknownDomain { .. }));
        let src = "d(Y) :- member(Y,[0,1]).\nnn(m,[X],[Y],[d]) :: n(Y) --> [X].\n0.5 :: n(3) --> [x].";
        assert!(parse_program(src).is_err());
    }

    #[test]
    fn reports_positions_and_undefined_calls() {
        let err = parse_program("0.5 :: e --> [a].\n0.5 :: e --> f.").unwrap_err();
        assert!(matches!(err, ProgramError::UndefinedNonterminal { position, .. } if position.line == 2));
        let err = parse_program("e --> [a]\ne --> [b].").unwrap_err();
        assert!(matches!(err, ProgramError::Syntax(ref s) if s.position.line == 2), "{err}");
    }

    #[test]
    fn pretty_print_round_trips() {
        let src = "d(Y) :- member(Y,[0,1]).
nn(m,[X],[Y],[d]) :: n(Y) --> [X].
t(0.25) :: s(N) --> n(N), {N > 0}.
t(_) :: s(N) --> [], n(N), s(N).
one --> [].
";
        let p = parse_program(src).unwrap();
        let printed = p.to_string();
        let q = parse_program(&printed).unwrap();
        assert_eq!(p, q, "{printed}");
        assert_eq!(p.initial_probabilities(1), vec![0.25, 0.75]);
    }
}
