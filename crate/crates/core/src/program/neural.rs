use super::{Program, Rule};
use crate::models::{FeatureTable, ModelError, ParamStore};
use crate::terms::{Bindings, Substitution, Term};

/// One output tuple of a neural rule applied to ground inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralInstance {
    /// Flat index into the model's output distribution.
    pub index: usize,
    pub probability: f64,
    pub outputs: Vec<Term>,
    /// The input substitution extended with the output bindings.
    pub substitution: Substitution,
}

/// Grounds a neural rule's inputs under `sigma` and returns one instance
/// per output tuple that unifies with the rule's output terms, in
/// row-major order.
pub fn instantiate_neural_rule(
    program: &Program,
    rule: &Rule,
    sigma: &Substitution,
    params: &ParamStore,
    features: &FeatureTable,
) -> Result<Vec<NeuralInstance>, ModelError> {
    let decl = rule.neural().ok_or_else(|| ModelError::Invalid {
        model: String::new(),
        message: format!("rule {} is not neural", rule.id.0),
    })?;
    let inputs: Vec<Term> = decl.inputs.iter().map(|t| sigma.apply(t)).collect();
    if !inputs.iter().all(Term::is_ground) {
        return Err(ModelError::NonGroundInput {
            model: decl.model.to_string(),
            inputs: Term::list(inputs).to_string(),
        });
    }
    let model = params.models.get(decl.model)?;
    let probs = model.forward(&inputs, features)?;
    let k = program.output_size(decl);
    if probs.len() != k {
        return Err(ModelError::Invalid {
            model: decl.model.to_string(),
            message: format!("distribution has {} entries, output domain has {k}", probs.len()),
        });
    }
    let outputs: Vec<Term> = decl.outputs.iter().map(|t| sigma.apply(t)).collect();
    let mut out = Vec::new();
    for (index, p) in probs.into_iter().enumerate() {
        let tuple = program.output_tuple(decl, index);
        let mut b = Bindings::from_substitution(sigma, false);
        if outputs.iter().zip(&tuple).all(|(o, v)| b.unify(o, v)) {
            out.push(NeuralInstance {
                index,
                probability: p,
                outputs: tuple,
                substitution: b.to_substitution(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelRegistry, SoftmaxTable};
    use crate::program::{parse_program, RuleId};
    use crate::terms::{Symbol, Var};

    fn setup() -> (Program, ParamStore) {
        let p = parse_program("d(Y) :- member(Y, [0, 1, 2]).\nnn(m, [X], [Y], [d]) :: n(Y) --> [X].").unwrap();
        let mut reg = ModelRegistry::new();
        let logits = vec![(0.2f64).ln(), (0.5f64).ln(), (0.3f64).ln()];
        reg.register(Symbol::intern("m"), Box::new(SoftmaxTable::with_logits(3, vec!["img".into()], logits)));
        let s = ParamStore::new(&p, reg);
        (p, s)
    }

    #[test]
    fn enumerates_outputs_in_order() {
        let (p, s) = setup();
        let rule = p.rule(RuleId(0));
        let x = Var::new("X");
        let sigma = Substitution::from_bindings(vec![(x, Term::atom("img"))]);
        let inst = instantiate_neural_rule(&p, rule, &sigma, &s, &FeatureTable::empty()).unwrap();
        assert_eq!(inst.len(), 3);
        let probs: Vec<f64> = inst.iter().map(|i| i.probability).collect();
        for (a, b) in probs.iter().zip([0.2, 0.5, 0.3]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(inst[1].substitution.apply(&Term::var("Y")), Term::int(1));
        assert_eq!(inst[1].substitution.apply(&Term::var("X")), Term::atom("img"));
    }

    #[test]
    fn bound_output_filters() {
        let (p, s) = setup();
        let rule = p.rule(RuleId(0));
        let sigma = Substitution::from_bindings(vec![(Var::new("X"), Term::atom("img")), (Var::new("Y"), Term::int(2))]);
        let inst = instantiate_neural_rule(&p, rule, &sigma, &s, &FeatureTable::empty()).unwrap();
        assert_eq!(inst.len(), 1);
        assert_eq!(inst[0].index, 2);
    }

    #[test]
    fn non_ground_input_is_an_error() {
        let (p, s) = setup();
        let rule = p.rule(RuleId(0));
        let err = instantiate_neural_rule(&p, rule, &Substitution::new(), &s, &FeatureTable::empty()).unwrap_err();
        assert!(matches!(err, ModelError::NonGroundInput { .. }));
    }
}
