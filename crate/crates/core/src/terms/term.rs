use std::fmt::{self, Write as _};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use super::number::Number;
use super::ops;
use super::symbol::{well_known, Symbol};

/// A logic variable. Source variables carry scope 0; every rule application
/// renames them into a fresh scope.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    pub name: Symbol,
    pub scope: u32,
}

impl Var {
    pub fn new(name: &str) -> Var {
        Var {
            name: Symbol::intern(name),
            scope: 0,
        }
    }

    pub fn scoped(self, scope: u32) -> Var {
        Var { scope, ..self }
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.scope == 0 {
            write!(f, "{}", self.name)
        } else {
            write!(f, "{}_{}", self.name, self.scope)
        }
    }
}

pub struct Compound {
    pub functor: Symbol,
    pub args: Box<[Term]>,
    ground: bool,
    /// Structural hash, computed once at construction.
    hash: u64,
}

impl PartialEq for Compound {
    fn eq(&self, other: &Self) -> bool {
        self.hash == other.hash && self.functor == other.functor && self.args == other.args
    }
}

impl Eq for Compound {}

impl Hash for Compound {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.hash);
    }
}

/// First-order term. Lists use `'.'/2` and `'[]'`; numbers are exact.
#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Atom(Symbol),
    Num(Number),
    Var(Var),
    Compound(Arc<Compound>),
}

impl Compound {
    pub fn is_ground(&self) -> bool {
        self.ground
    }
}

impl Term {
    pub fn atom(name: &str) -> Term {
        Term::Atom(Symbol::intern(name))
    }

    pub fn int(value: i64) -> Term {
        Term::Num(Number::Int(value))
    }

    pub fn var(name: &str) -> Term {
        Term::Var(Var::new(name))
    }

    /// Builds `functor(args...)`; an empty argument list gives the atom.
    pub fn compound(functor: Symbol, args: Vec<Term>) -> Term {
        if args.is_empty() {
            return Term::Atom(functor);
        }
        let ground = args.iter().all(Term::is_ground);
        let mut hasher = rustc_hash::FxHasher::default();
        functor.hash(&mut hasher);
        args.hash(&mut hasher);
        Term::Compound(Arc::new(Compound {
            functor,
            args: args.into_boxed_slice(),
            ground,
            hash: hasher.finish(),
        }))
    }

    pub fn apply(functor: &str, args: Vec<Term>) -> Term {
        Term::compound(Symbol::intern(functor), args)
    }

    pub fn nil() -> Term {
        Term::Atom(well_known::nil())
    }

    pub fn cons(head: Term, tail: Term) -> Term {
        Term::compound(well_known::cons(), vec![head, tail])
    }

    pub fn list_with_tail(items: impl IntoIterator<Item = Term, IntoIter: DoubleEndedIterator>, tail: Term) -> Term {
        items.into_iter().rev().fold(tail, |acc, item| Term::cons(item, acc))
    }

    pub fn list(items: impl IntoIterator<Item = Term, IntoIter: DoubleEndedIterator>) -> Term {
        Term::list_with_tail(items, Term::nil())
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Compound(c) => c.ground,
            _ => true,
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    /// Name and arity of a callable term.
    pub fn functor_arity(&self) -> Option<(Symbol, usize)> {
        match self {
            Term::Atom(s) => Some((*s, 0)),
            Term::Compound(c) => Some((c.functor, c.args.len())),
            _ => None,
        }
    }

    pub fn args(&self) -> &[Term] {
        match self {
            Term::Compound(c) => &c.args,
            _ => &[],
        }
    }

    pub fn as_number(&self) -> Option<&Number> {
        match self {
            Term::Num(n) => Some(n),
            _ => None,
        }
    }

    pub fn is_functor(&self, name: Symbol, arity: usize) -> bool {
        self.functor_arity() == Some((name, arity))
    }

    /// Collects variables in order of first occurrence, without duplicates.
    pub fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Term::Var(v) => {
                if !out.contains(v) {
                    out.push(*v);
                }
            }
            Term::Compound(c) if !c.ground => {
                for arg in c.args.iter() {
                    arg.collect_vars(out);
                }
            }
            _ => {}
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn occurs(&self, var: Var) -> bool {
        match self {
            Term::Var(v) => *v == var,
            Term::Compound(c) => !c.ground && c.args.iter().any(|a| a.occurs(var)),
            _ => false,
        }
    }

    /// Rebuilds the term with every variable mapped through `f`.
    pub fn map_vars(&self, f: &mut impl FnMut(Var) -> Term) -> Term {
        match self {
            Term::Var(v) => f(*v),
            Term::Compound(c) if !c.ground => {
                let args = c.args.iter().map(|a| a.map_vars(f)).collect();
                Term::compound(c.functor, args)
            }
            _ => self.clone(),
        }
    }

    /// Moves every variable into `scope`.
    pub fn rename(&self, scope: u32) -> Term {
        self.map_vars(&mut |v| Term::Var(v.scoped(scope)))
    }

    /// Splits a proper or partial list into its items and tail.
    pub fn list_items(&self) -> (Vec<Term>, Term) {
        let mut items = Vec::new();
        let mut cursor = self;
        loop {
            match cursor {
                Term::Compound(c) if c.functor == well_known::cons() && c.args.len() == 2 => {
                    items.push(c.args[0].clone());
                    cursor = &c.args[1];
                }
                other => return (items, other.clone()),
            }
        }
    }

    /// Items of a proper list, or `None` for anything else.
    pub fn as_list(&self) -> Option<Vec<Term>> {
        let (items, tail) = self.list_items();
        matches!(tail, Term::Atom(s) if s == well_known::nil()).then_some(items)
    }

    /// Flattens a right-nested operator chain, e.g. a conjunction.
    pub fn flatten_op(&self, op: Symbol) -> Vec<Term> {
        let mut out = Vec::new();
        let mut cursor = self;
        while let Term::Compound(c) = cursor {
            if c.functor == op && c.args.len() == 2 {
                out.push(c.args[0].clone());
                cursor = &c.args[1];
            } else {
                break;
            }
        }
        out.push(cursor.clone());
        out
    }

    pub fn conjunction(goals: Vec<Term>) -> Term {
        let mut iter = goals.into_iter().rev();
        match iter.next() {
            None => Term::Atom(well_known::true_()),
            Some(last) => iter.fold(last, |acc, g| Term::compound(well_known::comma(), vec![g, acc])),
        }
    }
}

impl From<Number> for Term {
    fn from(n: Number) -> Self {
        Term::Num(n)
    }
}

impl From<Var> for Term {
    fn from(v: Var) -> Self {
        Term::Var(v)
    }
}

fn is_symbol_char(c: char) -> bool {
    "+-*/\\^<>=~:.?@#&$".contains(c)
}

pub(crate) fn atom_needs_quotes(name: &str) -> bool {
    if matches!(name, "[]" | "{}" | "!" | ";") {
        return false;
    }
    let mut chars = name.chars();
    match chars.next() {
        None => true,
        Some(c) if c.is_ascii_lowercase() => !name.chars().all(|c| c.is_alphanumeric() || c == '_'),
        Some(_) => !name.chars().all(is_symbol_char),
    }
}

fn write_atom(out: &mut String, name: &str) {
    if !atom_needs_quotes(name) {
        out.push_str(name);
        return;
    }
    out.push('\'');
    for c in name.chars() {
        match c {
            '\'' => out.push_str("\\'"),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('\'');
}

fn spaced(op: &str) -> bool {
    !matches!(op, "+" | "-" | "*" | "/" | "//" | "**" | "^")
}

fn write_term(out: &mut String, term: &Term, max_prec: u16) {
    match term {
        Term::Atom(s) => {
            let name = s.as_str();
            // Operator atoms are bracketed when they appear as operands.
            if max_prec < 999 && (ops::infix(name).is_some() || ops::prefix(name).is_some()) {
                out.push('(');
                write_atom(out, name);
                out.push(')');
            } else {
                write_atom(out, name)
            }
        }
        Term::Num(n) => {
            if n.signum() < 0 && max_prec < 999 {
                let _ = write!(out, "({n})");
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Term::Var(v) => {
            let _ = write!(out, "{v}");
        }
        Term::Compound(c) => write_compound(out, c, max_prec),
    }
}

/// Appends `piece`, spacing it off when its first character would fuse
/// with the last one written into a single token.
fn push_separated(out: &mut String, piece: &str) {
    let symbolic = |c: char| "+-*/\\^<>=~:.?@#&$".contains(c);
    let word = |c: char| c.is_alphanumeric() || c == '_';
    if let (Some(a), Some(b)) = (out.chars().next_back(), piece.chars().next()) {
        if (symbolic(a) && symbolic(b)) || (word(a) && word(b)) {
            out.push(' ');
        }
    }
    out.push_str(piece);
}

fn write_compound(out: &mut String, c: &Compound, max_prec: u16) {
    let name = c.functor.as_str();
    if c.functor == well_known::cons() && c.args.len() == 2 {
        out.push('[');
        write_term(out, &c.args[0], 999);
        let mut tail = &c.args[1];
        loop {
            match tail {
                Term::Compound(t) if t.functor == well_known::cons() && t.args.len() == 2 => {
                    out.push(',');
                    write_term(out, &t.args[0], 999);
                    tail = &t.args[1];
                }
                Term::Atom(s) if *s == well_known::nil() => break,
                other => {
                    out.push('|');
                    write_term(out, other, 999);
                    break;
                }
            }
        }
        out.push(']');
        return;
    }
    if c.functor == well_known::curly() && c.args.len() == 1 {
        out.push('{');
        write_term(out, &c.args[0], 1200);
        out.push('}');
        return;
    }
    if c.args.len() == 2 {
        if let Some(op) = ops::infix(name) {
            let open = op.priority > max_prec;
            if open {
                out.push('(');
            }
            write_term(out, &c.args[0], op.left_max());
            if name == "," {
                out.push_str(", ");
            } else if spaced(name) {
                out.push(' ');
                write_atom(out, name);
                out.push(' ');
            } else {
                write_atom(out, name);
            }
            push_separated(out, &c.args[1].to_string_prec(op.right_max()));
            if open {
                out.push(')');
            }
            return;
        }
    }
    if c.args.len() == 1 {
        if let Some(priority) = ops::prefix(name) {
            let arg = c.args[0].to_string_prec(priority);
            // An operand that opens with an operator or a parenthesis could
            // regroup; functional notation is always unambiguous.
            let lead: String = match arg.chars().next() {
                Some(ch) if ch.is_alphanumeric() || ch == '_' => arg.chars().take_while(|ch| ch.is_alphanumeric() || *ch == '_').collect(),
                _ => String::new(),
            };
            let clear = !matches!(c.args[0], Term::Num(_))
                && !arg.starts_with(|ch: char| ch == '(' || "+-*/\\^<>=~:.?@#&$".contains(ch))
                && ops::infix(&lead).is_none()
                && ops::prefix(&lead).is_none();
            if clear {
                let open = priority > max_prec;
                if open {
                    out.push('(');
                }
                write_atom(out, name);
                if name == "\\+" {
                    out.push(' ');
                }
                push_separated(out, &arg);
                if open {
                    out.push(')');
                }
                return;
            }
        }
    }
    write_atom(out, name);
    out.push('(');
    for (i, arg) in c.args.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_term(out, arg, 999);
    }
    out.push(')');
}

impl Term {
    /// Renders the term in reader syntax at the given maximum priority.
    pub fn to_string_prec(&self, max_prec: u16) -> String {
        let mut out = String::new();
        write_term(&mut out, self, max_prec);
        out
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_string_prec(1200))
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compound_of_no_args_is_atom() {
        assert_eq!(Term::apply("foo", vec![]), Term::atom("foo"));
    }

    #[test]
    fn lists_print_with_brackets() {
        let t = Term::list_with_tail(vec![Term::int(1), Term::atom("+")], Term::var("T"));
        assert_eq!(t.to_string(), "[1,+|T]");
        assert_eq!(Term::list(vec![]).to_string(), "[]");
    }

    #[test]
    fn operators_print_infix() {
        let sum = Term::apply("+", vec![Term::var("N1"), Term::var("N2")]);
        let is = Term::apply("is", vec![Term::var("N"), sum]);
        assert_eq!(is.to_string(), "N is N1+N2");
        let nested = Term::apply("*", vec![Term::apply("+", vec![Term::int(1), Term::int(2)]), Term::int(3)]);
        assert_eq!(nested.to_string(), "(1+2)*3");
        let neg = Term::apply("-", vec![Term::int(1), Term::int(-1)]);
        assert_eq!(neg.to_string(), "1-(-1)");
    }

    #[test]
    fn quoting() {
        assert_eq!(Term::atom("(").to_string(), "'('");
        assert_eq!(Term::atom("hello world").to_string(), "'hello world'");
        assert_eq!(Term::atom("tok:3").to_string(), "'tok:3'");
        assert_eq!(Term::atom("=<").to_string(), "=<");
    }

    #[test]
    fn renamed_vars_display_scope() {
        let t = Term::var("N").rename(17);
        assert_eq!(t.to_string(), "N_17");
    }
}
