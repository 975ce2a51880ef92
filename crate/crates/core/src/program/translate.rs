use std::fmt;

use super::{BodyItem, Item, Program, Rule, Weight};
use crate::terms::{well_known, Substitution, Term, Var};

/// A definite clause over difference lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslatedClause {
    pub head: Term,
    pub body: Vec<Term>,
}

impl TranslatedClause {
    pub fn as_term(&self) -> Term {
        if self.body.is_empty() {
            self.head.clone()
        } else {
            Term::apply(":-", vec![self.head.clone(), Term::conjunction(self.body.clone())])
        }
    }
}

impl fmt::Display for TranslatedClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.head.to_string_prec(1199))?;
        for (i, goal) in self.body.iter().enumerate() {
            f.write_str(if i == 0 { " :- " } else { ", " })?;
            f.write_str(&goal.to_string_prec(999))?;
        }
        f.write_str(".")
    }
}

/// Fresh sequence-variable names `A, B, ...` avoiding the rule's own names.
struct Names {
    taken: Vec<String>,
    next: usize,
}

impl Names {
    fn fresh(&mut self) -> Term {
        loop {
            let letter = (b'A' + (self.next % 26) as u8) as char;
            let name = match self.next / 26 {
                0 => letter.to_string(),
                k => format!("{letter}{k}"),
            };
            self.next += 1;
            if !self.taken.contains(&name) {
                return Term::var(&name);
            }
        }
    }
}

fn with_sequence(term: &Term, s0: Term, s1: Term) -> Term {
    let (functor, _) = term.functor_arity().expect("callable");
    let mut args = term.args().to_vec();
    args.push(s0);
    args.push(s1);
    Term::compound(functor, args)
}

fn translate_rule(rule: &Rule) -> TranslatedClause {
    let mut vars: Vec<Var> = rule.head.vars();
    for item in &rule.body {
        match item {
            BodyItem::Call(t) | BodyItem::Goal(t) => t.collect_vars(&mut vars),
            BodyItem::Terminals(ts) => ts.iter().for_each(|t| t.collect_vars(&mut vars)),
        }
    }
    if let Some(w) = rule.weight_term() {
        w.collect_vars(&mut vars);
    }
    let mut names = Names {
        taken: vars.iter().map(|v| v.to_string()).collect(),
        next: 0,
    };
    let start = names.fresh();
    let mut current = start.clone();
    let mut body: Vec<Term> = Vec::new();
    let mut links: Vec<(Var, Term)> = Vec::new();
    for item in &rule.body {
        match item {
            BodyItem::Call(call) => {
                let next = names.fresh();
                body.push(with_sequence(call, current, next.clone()));
                current = next;
            }
            BodyItem::Terminals(ts) => {
                let next = names.fresh();
                let Term::Var(v) = current else { unreachable!() };
                links.push((v, Term::list_with_tail(ts.clone(), next.clone())));
                current = next;
            }
            BodyItem::Goal(goal) => body.extend(goal.flatten_op(well_known::comma())),
        }
    }
    match &rule.weight {
        Weight::Neural(d) => {
            body.push(Term::apply(
                "nn",
                vec![Term::Atom(d.model), Term::list(d.inputs.clone()), Term::list(d.outputs.clone())],
            ));
            for (domain, out) in d.domains.iter().zip(&d.outputs) {
                body.push(Term::compound(*domain, vec![out.clone()]));
            }
        }
        _ => {
            let w = rule.weight_term().unwrap_or(Term::int(1));
            body.push(Term::apply("p", vec![w]));
        }
    }
    let head = with_sequence(&rule.head, start, current);
    let links = Substitution::from_bindings(links);
    TranslatedClause {
        head: links.apply(&head),
        body: body.iter().map(|g| links.apply(g)).collect(),
    }
}

/// Difference-list translation of every rule; plain clauses are copied.
/// Output follows source order.
pub fn translate(program: &Program) -> Vec<TranslatedClause> {
    program
        .items
        .iter()
        .map(|item| match item {
            Item::Rule(id) => translate_rule(program.rule(*id)),
            Item::Clause(i) => {
                let clause = &program.clauses[*i].0;
                TranslatedClause {
                    head: clause.head.clone(),
                    body: if clause.is_fact() {
                        Vec::new()
                    } else {
                        clause.body.flatten_op(well_known::comma())
                    },
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{parse_program, parse_program_with, LoadOptions};
    use crate::terms::{is_variant, parse_term};

    fn one(src: &str) -> TranslatedClause {
        let p = parse_program_with(src, &LoadOptions { check_normalization: false }).unwrap();
        translate(&p).pop().unwrap()
    }

    fn same(clause: &TranslatedClause, expected: &str) {
        let want = parse_term(expected).unwrap();
        assert!(is_variant(&clause.as_term(), &want), "{clause} vs {expected}");
    }

    #[test]
    fn stochastic_rule() {
        let c = one("0.33 :: e(N) --> n(N).\n1 :: n(1) --> [1].");
        let p = parse_program_with("0.33 :: e(N) --> n(N).\n1 :: n(1) --> [1].", &LoadOptions { check_normalization: false }).unwrap();
        let first = &translate(&p)[0];
        assert_eq!(first.to_string(), "e(N,A,B) :- n(N,A,B), p(0.33).");
        same(&c, "n(1, [1|X], X) :- p(1)");
    }

    #[test]
    fn neural_rule() {
        let c = one("digit(Y) :- member(Y,[0,1]).\nnn(mnist,[I],[N],[digit]) :: n(N) --> [I].");
        same(&c, "n(N,[I|X],X) :- nn(mnist,[I],[N]), digit(N)");
    }

    #[test]
    fn recursive_rule_threads_sequence() {
        let src = "op(Y) :- member(Y, [+,-]).
nn(operator,[I],[N],[op]) :: o(N) --> [I].
1 :: n(0) --> [z].
0.5 :: e(N) --> n(N).
0.5 :: e(S) --> e(E1), o(+), n(E2), {S is E1 + E2}.";
        let c = one(src);
        assert_eq!(c.to_string(), "e(S,A,D) :- e(E1,A,B), o(+,B,C), n(E2,C,D), S is E1+E2, p(0.5).");
    }

    #[test]
    fn empty_body_threads_unchanged() {
        let c = one("d(Y) :- member(Y,[0,1]).\nnn(mnist,[X],[Y],[d]) :: number(X,Y) --> [].");
        same(&c, "number(X,Y,S,S) :- nn(mnist,[X],[Y]), d(Y)");
    }

    #[test]
    fn empty_program() {
        assert!(translate(&parse_program("").unwrap()).is_empty());
    }
}
