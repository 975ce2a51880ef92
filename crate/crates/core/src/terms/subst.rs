use std::fmt;

use rustc_hash::FxHashMap;

use super::symbol::Symbol;
use super::term::{Term, Var};

/// An idempotent substitution: no bound variable occurs in any bound term.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct Substitution {
    bindings: FxHashMap<Var, Term>,
}

impl Substitution {
    pub fn new() -> Substitution {
        Substitution::default()
    }

    pub fn get(&self, var: Var) -> Option<&Term> {
        self.bindings.get(&var)
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    /// Bindings sorted by variable name, for stable output.
    pub fn sorted(&self) -> Vec<(Var, Term)> {
        let mut out: Vec<_> = self.bindings.iter().map(|(v, t)| (*v, t.clone())).collect();
        out.sort_by(|a, b| a.0.name.cmp(&b.0.name).then(a.0.scope.cmp(&b.0.scope)));
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Term)> {
        self.bindings.iter()
    }

    /// Builds a substitution from raw bindings, resolving chains so that the
    /// result is idempotent. Self-bindings are dropped.
    pub fn from_bindings(pairs: impl IntoIterator<Item = (Var, Term)>) -> Substitution {
        let mut store = Bindings::new(false);
        for (var, term) in pairs {
            if term != Term::Var(var) {
                store.bind(var, term);
            }
        }
        store.to_substitution()
    }

    pub fn apply(&self, term: &Term) -> Term {
        if self.bindings.is_empty() {
            return term.clone();
        }
        term.map_vars(&mut |v| self.bindings.get(&v).cloned().unwrap_or(Term::Var(v)))
    }

    /// `self` followed by `other`: applying the result equals applying `self`
    /// and then `other`.
    pub fn compose(&self, other: &Substitution) -> Substitution {
        let mut out: FxHashMap<Var, Term> = self
            .bindings
            .iter()
            .map(|(v, t)| (*v, other.apply(t)))
            .filter(|(v, t)| *t != Term::Var(*v))
            .collect();
        for (v, t) in &other.bindings {
            out.entry(*v).or_insert_with(|| t.clone());
        }
        Substitution { bindings: out }
    }

    /// Restriction to the given variables.
    pub fn restrict(&self, vars: &[Var]) -> Substitution {
        Substitution {
            bindings: vars
                .iter()
                .filter_map(|v| self.bindings.get(v).map(|t| (*v, t.clone())))
                .collect(),
        }
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (v, t)) in self.sorted().iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}={t}")?;
        }
        f.write_str("}")
    }
}

impl fmt::Debug for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A triangular binding store with an undo trail, used during resolution.
#[derive(Clone)]
pub struct Bindings {
    map: FxHashMap<Var, Term>,
    trail: Vec<Var>,
    occurs_check: bool,
}

impl Bindings {
    pub fn new(occurs_check: bool) -> Bindings {
        Bindings {
            map: FxHashMap::default(),
            trail: Vec::new(),
            occurs_check,
        }
    }

    pub fn from_substitution(subst: &Substitution, occurs_check: bool) -> Bindings {
        let mut store = Bindings::new(occurs_check);
        for (v, t) in subst.iter() {
            store.bind(*v, t.clone());
        }
        store
    }

    pub fn occurs_check(&self) -> bool {
        self.occurs_check
    }

    pub fn mark(&self) -> usize {
        self.trail.len()
    }

    pub fn undo(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let var = self.trail.pop().unwrap();
            self.map.remove(&var);
        }
    }

    pub fn bind(&mut self, var: Var, term: Term) {
        self.map.insert(var, term);
        self.trail.push(var);
    }

    /// Follows variable bindings until an unbound variable or non-variable.
    pub fn walk<'a>(&'a self, term: &'a Term) -> &'a Term {
        let mut cursor = term;
        while let Term::Var(v) = cursor {
            match self.map.get(v) {
                Some(next) => cursor = next,
                None => break,
            }
        }
        cursor
    }

    /// Fully applies the current bindings. Without the occurs check the store
    /// may hold cycles; a variable met again inside its own binding is left
    /// unexpanded.
    pub fn resolve(&self, term: &Term) -> Term {
        if self.occurs_check {
            self.resolve_acyclic(term)
        } else {
            self.resolve_guarded(term, &mut Vec::new())
        }
    }

    fn resolve_acyclic(&self, term: &Term) -> Term {
        match self.walk(term) {
            Term::Compound(c) if !c.is_ground() => {
                let args = c.args.iter().map(|a| self.resolve_acyclic(a)).collect();
                Term::compound(c.functor, args)
            }
            other => other.clone(),
        }
    }

    fn resolve_guarded(&self, term: &Term, active: &mut Vec<Var>) -> Term {
        match term {
            Term::Var(v) => {
                if active.contains(v) {
                    return term.clone();
                }
                match self.map.get(v) {
                    Some(next) => {
                        active.push(*v);
                        let out = self.resolve_guarded(next, active);
                        active.pop();
                        out
                    }
                    None => term.clone(),
                }
            }
            Term::Compound(c) if !c.is_ground() => {
                let args = c.args.iter().map(|a| self.resolve_guarded(a, active)).collect();
                Term::compound(c.functor, args)
            }
            other => other.clone(),
        }
    }

    fn occurs(&self, var: Var, term: &Term) -> bool {
        match self.walk(term) {
            Term::Var(v) => *v == var,
            Term::Compound(c) => !c.is_ground() && c.args.iter().any(|a| self.occurs(var, a)),
            _ => false,
        }
    }

    /// Unifies two terms, extending the bindings. On failure the store may hold
    /// partial bindings; callers undo to a mark.
    pub fn unify(&mut self, a: &Term, b: &Term) -> bool {
        let a = self.walk(a).clone();
        let b = self.walk(b).clone();
        match (&a, &b) {
            (Term::Var(x), Term::Var(y)) if x == y => true,
            (Term::Var(x), _) => {
                if self.occurs_check && self.occurs(*x, &b) {
                    return false;
                }
                self.bind(*x, b);
                true
            }
            (_, Term::Var(y)) => {
                if self.occurs_check && self.occurs(*y, &a) {
                    return false;
                }
                self.bind(*y, a);
                true
            }
            (Term::Atom(x), Term::Atom(y)) => x == y,
            (Term::Num(x), Term::Num(y)) => x == y,
            (Term::Compound(x), Term::Compound(y)) => {
                if std::sync::Arc::ptr_eq(x, y) {
                    return true;
                }
                if x.functor != y.functor || x.args.len() != y.args.len() {
                    return false;
                }
                x.args.iter().zip(y.args.iter()).all(|(p, q)| self.unify(p, q))
            }
            _ => false,
        }
    }

    /// Idempotent snapshot of the current bindings.
    pub fn to_substitution(&self) -> Substitution {
        Substitution {
            bindings: self
                .map
                .keys()
                .map(|v| (*v, self.resolve(&Term::Var(*v))))
                .filter(|(v, t)| *t != Term::Var(*v))
                .collect(),
        }
    }
}

/// Most general unifier with occurs check.
pub fn unify(a: &Term, b: &Term) -> Option<Substitution> {
    unify_with(a, b, true)
}

pub fn unify_with(a: &Term, b: &Term, occurs_check: bool) -> Option<Substitution> {
    let mut store = Bindings::new(occurs_check);
    store.unify(a, b).then(|| store.to_substitution())
}

fn canonical_symbol(index: usize) -> Symbol {
    thread_local! {
        static CACHE: std::cell::RefCell<Vec<Symbol>> = const { std::cell::RefCell::new(Vec::new()) };
    }
    CACHE.with(|cache| {
        let mut cache = cache.borrow_mut();
        while cache.len() <= index {
            let next = cache.len();
            cache.push(Symbol::intern(&format!("$V{next}")));
        }
        cache[index]
    })
}

/// Renames variables to `$V0, $V1, …` by order of first occurrence, so that
/// two terms are variants exactly when their canonical forms are equal.
pub fn canonical(term: &Term) -> Term {
    if term.is_ground() {
        return term.clone();
    }
    let mut seen: Vec<Var> = Vec::new();
    term.map_vars(&mut |v| {
        let index = match seen.iter().position(|s| *s == v) {
            Some(i) => i,
            None => {
                seen.push(v);
                seen.len() - 1
            }
        };
        Term::Var(Var {
            name: canonical_symbol(index),
            scope: 0,
        })
    })
}

pub fn is_variant(a: &Term, b: &Term) -> bool {
    canonical(a) == canonical(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terms::parse_term;

    fn t(text: &str) -> Term {
        parse_term(text).unwrap()
    }

    #[test]
    fn binds_single_variable() {
        let s = unify(&t("n(N)"), &t("n(2)")).unwrap();
        assert_eq!(s.to_string(), "{N=2}");
    }

    #[test]
    fn standard_mgu() {
        let s = unify(&t("f(X, g(X))"), &t("f(a, g(a))")).unwrap();
        assert_eq!(s.to_string(), "{X=a}");
    }

    #[test]
    fn occurs_check_fails() {
        assert!(unify(&t("f(X)"), &t("f(g(X))")).is_none());
        assert!(unify_with(&t("f(X)"), &t("f(g(X))"), false).is_some());
    }

    #[test]
    fn apply_replaces_bound_only() {
        let s = unify(&t("X"), &t("2")).unwrap();
        assert_eq!(s.apply(&t("e(X)")), t("e(2)"));
        assert_eq!(Substitution::new().apply(&t("f(Y, a)")), t("f(Y, a)"));
        let s = unify(&t("N1"), &t("2")).unwrap();
        assert_eq!(s.apply(&t("(n(N1), [+], n(N2))")), t("(n(2), [+], n(N2))"));
    }

    #[test]
    fn chains_are_resolved() {
        let s = unify(&t("f(X, Y, Z)"), &t("f(Y, Z, 1)")).unwrap();
        assert_eq!(s.apply(&t("X")), t("1"));
        assert_eq!(s.apply(&s.apply(&t("g(X,Y,Z)"))), s.apply(&t("g(X,Y,Z)")));
        assert!(s.iter().all(|(v, b)| Term::Var(*v) != *b));
    }

    #[test]
    fn variants() {
        assert!(is_variant(&t("f(X, Y, X)"), &t("f(A, B, A)")));
        assert!(!is_variant(&t("f(X, Y, X)"), &t("f(A, A, A)")));
        assert_eq!(canonical(&t("f(X, a)")).to_string(), "f($V0,a)");
    }

    #[test]
    fn undo_restores() {
        let mut store = Bindings::new(true);
        let mark = store.mark();
        assert!(store.unify(&t("f(X)"), &t("f(1)")));
        assert_eq!(store.resolve(&t("X")), t("1"));
        store.undo(mark);
        assert_eq!(store.resolve(&t("X")), t("X"));
    }
}
