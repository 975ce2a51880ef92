//! First-order terms, substitutions and unification.

mod number;
mod ops;
mod reader;
mod subst;
mod symbol;
mod term;

pub use number::{ArithError, Number};
pub use ops::{infix, prefix, Assoc, InfixOp};
pub use reader::{parse_term, read_clauses, Position, ReadClause, SyntaxError};
pub use subst::{canonical, is_variant, unify, unify_with, Bindings, Substitution};
pub use symbol::{well_known, Symbol};
pub use term::{Compound, Term, Var};

/// Source of fresh variable scopes. Scope 0 is reserved for source text.
#[derive(Debug, Default)]
pub struct ScopeCounter {
    next: u32,
}

impl ScopeCounter {
    pub fn new() -> ScopeCounter {
        ScopeCounter { next: 0 }
    }

    pub fn fresh(&mut self) -> u32 {
        self.next += 1;
        self.next
    }
}

/// Replaces every variable of `term` with a variable of a fresh scope.
pub fn rename_apart(term: &Term, counter: &mut ScopeCounter) -> Term {
    if term.is_ground() {
        return term.clone();
    }
    term.rename(counter.fresh())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rename_apart_is_fresh_each_time() {
        let rule = parse_term("n(N) --> [N]").unwrap();
        let mut counter = ScopeCounter::new();
        let a = rename_apart(&rule, &mut counter);
        let b = rename_apart(&rule, &mut counter);
        assert!(is_variant(&a, &rule));
        assert!(a.vars().iter().all(|v| !b.vars().contains(v)));
        assert_eq!(a.to_string(), "n(N_1) --> [N_1]");
        let ground = parse_term("n(1) --> [1]").unwrap();
        assert_eq!(rename_apart(&ground, &mut counter), ground);
    }
}
