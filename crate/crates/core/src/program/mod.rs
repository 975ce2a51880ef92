//! Grammar programs: stochastic and neural DCG rules plus plain clauses.

mod load;
mod neural;
mod translate;

use std::fmt;

use num_rational::BigRational;
use num_traits::One;
use rustc_hash::FxHashMap;

use crate::resolution::prolog::{Clause, ClauseDb};
use crate::terms::{Number, Position, Symbol, Term};

pub use load::{parse_program, parse_program_with, LoadOptions, ProgramError};
pub use neural::{instantiate_neural_rule, NeuralInstance};
pub use translate::{translate, TranslatedClause};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RuleId(pub u32);

impl RuleId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BodyItem {
    Call(Term),
    Terminals(Vec<Term>),
    /// A `{...}` goal.
    Goal(Term),
}

/// `nn(model, Inputs, Outputs, Domains)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeuralDecl {
    pub model: Symbol,
    pub inputs: Vec<Term>,
    pub outputs: Vec<Term>,
    pub domains: Vec<Symbol>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Weight {
    /// No weight written; only allowed for a singleton group.
    Implicit,
    Fixed(Number),
    /// A `t(P)` or `t(_)` slot of a softmax-trainable group.
    Trainable(Option<Number>),
    Neural(NeuralDecl),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    Fixed,
    Trainable,
    Neural,
}

/// All rules sharing one head predicate.
#[derive(Debug, Clone)]
pub struct Group {
    pub predicate: (Symbol, usize),
    pub rules: Vec<RuleId>,
    pub kind: GroupKind,
}

impl Group {
    pub fn name(&self) -> String {
        format!("{}/{}", self.predicate.0, self.predicate.1)
    }
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub id: RuleId,
    pub head: Term,
    pub body: Vec<BodyItem>,
    pub weight: Weight,
    pub group: usize,
    pub slot: usize,
    pub position: Position,
    /// Per body item: fewest terminals any derivation of it consumes.
    pub item_min_yield: Vec<usize>,
}

impl Rule {
    pub fn neural(&self) -> Option<&NeuralDecl> {
        match &self.weight {
            Weight::Neural(decl) => Some(decl),
            _ => None,
        }
    }

    /// The rule as a grammar rule, without its weight.
    pub fn production(&self) -> String {
        let body: Vec<String> = self
            .body
            .iter()
            .map(|item| match item {
                BodyItem::Call(t) => t.to_string_prec(999),
                BodyItem::Terminals(ts) => Term::list(ts.clone()).to_string(),
                BodyItem::Goal(g) => format!("{{{g}}}"),
            })
            .collect();
        let body = if body.is_empty() { "[]".to_owned() } else { body.join(", ") };
        format!("{} --> {body}", self.head.to_string_prec(1199))
    }

    /// Weight term as written in source, `None` when omitted.
    pub fn weight_term(&self) -> Option<Term> {
        match &self.weight {
            Weight::Implicit => None,
            Weight::Fixed(n) => Some(Term::Num(n.clone())),
            Weight::Trainable(Some(p)) => Some(Term::apply("t", vec![Term::Num(p.clone())])),
            Weight::Trainable(None) => Some(Term::apply("t", vec![Term::var("_")])),
            Weight::Neural(d) => Some(Term::apply(
                "nn",
                vec![
                    Term::Atom(d.model),
                    Term::list(d.inputs.clone()),
                    Term::list(d.outputs.clone()),
                    Term::list(d.domains.iter().map(|s| Term::Atom(*s)).collect::<Vec<_>>()),
                ],
            )),
        }
    }
}

/// Source order of rules and clauses, kept for printing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Item {
    Rule(RuleId),
    Clause(usize),
}

/// Sentinel for predicates with no finite derivation.
pub const UNREACHABLE: usize = usize::MAX / 4;

#[derive(Debug, Clone)]
pub struct Program {
    pub rules: Vec<Rule>,
    pub groups: Vec<Group>,
    pub clauses: Vec<(Clause, Position)>,
    pub items: Vec<Item>,
    group_index: FxHashMap<(Symbol, usize), usize>,
    db: ClauseDb,
    domains: FxHashMap<Symbol, Vec<Term>>,
    group_min_yield: Vec<usize>,
}

impl Program {
    pub fn rule(&self, id: RuleId) -> &Rule {
        &self.rules[id.index()]
    }

    pub fn group_of(&self, predicate: (Symbol, usize)) -> Option<usize> {
        self.group_index.get(&predicate).copied()
    }

    /// Rules that may resolve a call to `predicate`, in source order.
    pub fn rules_for(&self, predicate: (Symbol, usize)) -> &[RuleId] {
        match self.group_of(predicate) {
            Some(g) => &self.groups[g].rules,
            None => &[],
        }
    }

    pub fn clause_db(&self) -> &ClauseDb {
        &self.db
    }

    pub fn min_yield(&self, group: usize) -> usize {
        self.group_min_yield[group]
    }

    /// Values of a unary domain predicate, in solution order.
    pub fn domain(&self, name: Symbol) -> &[Term] {
        self.domains.get(&name).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Size of the flattened output space of a neural rule.
    pub fn output_size(&self, decl: &NeuralDecl) -> usize {
        decl.domains.iter().map(|d| self.domain(*d).len()).product()
    }

    /// Output tuple with flat index `index`; the last domain varies fastest.
    pub fn output_tuple(&self, decl: &NeuralDecl, mut index: usize) -> Vec<Term> {
        let mut out = vec![Term::nil(); decl.domains.len()];
        for (slot, domain) in decl.domains.iter().enumerate().rev() {
            let values = self.domain(*domain);
            out[slot] = values[index % values.len()].clone();
            index /= values.len();
        }
        out
    }

    /// Probability of a rule with a fixed or implicit weight.
    pub fn fixed_probability(&self, id: RuleId) -> Option<f64> {
        match &self.rule(id).weight {
            Weight::Implicit => Some(1.0),
            Weight::Fixed(n) => Some(n.to_f64()),
            _ => None,
        }
    }

    /// Exact weight of a non-trainable rule.
    pub fn exact_probability(&self, id: RuleId) -> Option<BigRational> {
        match &self.rule(id).weight {
            Weight::Implicit => Some(BigRational::one()),
            Weight::Fixed(n) => Some(n.to_ratio()),
            _ => None,
        }
    }

    /// Initial probabilities of a trainable group. Unspecified slots share
    /// the mass left by specified ones; with none left they fall back to
    /// uniform.
    pub fn initial_probabilities(&self, group: usize) -> Vec<f64> {
        let rules = &self.groups[group].rules;
        let given: Vec<Option<f64>> = rules
            .iter()
            .map(|r| match &self.rule(*r).weight {
                Weight::Fixed(n) | Weight::Trainable(Some(n)) => Some(n.to_f64()),
                _ => None,
            })
            .collect();
        let free = given.iter().filter(|g| g.is_none()).count();
        let used: f64 = given.iter().flatten().sum();
        let left = if free > 0 { (1.0 - used) / free as f64 } else { 0.0 };
        if free > 0 && left <= 0.0 {
            return vec![1.0 / rules.len() as f64; rules.len()];
        }
        let probs: Vec<f64> = given.iter().map(|g| g.unwrap_or(left)).collect();
        let total: f64 = probs.iter().sum();
        probs.iter().map(|p| p / total).collect()
    }

    pub fn trainable_groups(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.groups.len()).filter(|g| self.groups[*g].kind == GroupKind::Trainable)
    }

    pub fn neural_models(&self) -> Vec<Symbol> {
        let mut out: Vec<Symbol> = Vec::new();
        for rule in &self.rules {
            if let Some(d) = rule.neural() {
                if !out.contains(&d.model) {
                    out.push(d.model);
                }
            }
        }
        out
    }

    /// Output domain size of every neural model; a model used by several
    /// rules must see one size.
    pub fn model_output_sizes(&self) -> Result<Vec<(Symbol, usize)>, ProgramError> {
        let mut out: Vec<(Symbol, usize)> = Vec::new();
        for rule in &self.rules {
            if let Some(d) = rule.neural() {
                let k = self.output_size(d);
                match out.iter().find(|(m, _)| *m == d.model) {
                    Some((_, prev)) if *prev != k => {
                        return Err(ProgramError::Invalid {
                            position: rule.position,
                            message: format!("model {} used with output sizes {prev} and {k}", d.model),
                        })
                    }
                    Some(_) => {}
                    None => out.push((d.model, k)),
                }
            }
        }
        Ok(out)
    }
}

fn body_term(item: &BodyItem) -> Term {
    match item {
        BodyItem::Call(t) => t.clone(),
        BodyItem::Terminals(ts) => Term::list(ts.clone()),
        BodyItem::Goal(g) => Term::apply("{}", vec![g.clone()]),
    }
}

/// Prints the program in grammar-file syntax; reading it back gives an
/// equal program.
impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for item in &self.items {
            match item {
                Item::Rule(id) => {
                    let rule = self.rule(*id);
                    if let Some(w) = rule.weight_term() {
                        write!(f, "{} :: ", w.to_string_prec(1149))?;
                    }
                    write!(f, "{} --> ", rule.head.to_string_prec(1149))?;
                    if rule.body.is_empty() {
                        f.write_str("[]")?;
                    }
                    for (i, item) in rule.body.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        f.write_str(&body_term(item).to_string_prec(999))?;
                    }
                    writeln!(f, ".")?;
                }
                Item::Clause(i) => {
                    let clause = &self.clauses[*i].0;
                    if clause.is_fact() {
                        writeln!(f, "{}.", clause.head.to_string_prec(1199))?;
                    } else {
                        writeln!(f, "{} :- {}.", clause.head.to_string_prec(1199), clause.body.to_string_prec(1199))?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Structural equality: same rules and clauses in the same order.
impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.rules.len() == other.rules.len()
            && self
                .rules
                .iter()
                .zip(&other.rules)
                .all(|(a, b)| a.head == b.head && a.body == b.body && a.weight == b.weight)
            && self.clauses.len() == other.clauses.len()
            && self.clauses.iter().zip(&other.clauses).all(|(a, b)| a.0 == b.0)
    }
}
