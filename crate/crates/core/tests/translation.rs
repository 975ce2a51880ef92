mod common;

use common::corpus;
use stochlog::program::{translate, Item};
use stochlog::terms::{is_variant, parse_term, Term};

/// The published listing with three slips repaired: the remaining sequence
/// is `X`, not `[X]`; the domain check constrains the output `N`; the
/// operator rule defines `o`, not a second `n`.
const EXPECTED: &str = "
n(N, [I | X], X) :- nn(mnist,[I],[N]), digit(N).
o(N, [I | X], X) :- nn(operator,[I],[N]), op(N).
e(N, A, B) :- n(N, A, B), p(0.33).
e(S, A,D) :- e(E1, A, B), o(+, B, C), n(E2, C, D), S is E1 + E2, p(0.33).
e(S, A,D) :- e(E1, A, B), o(-, B, C), n(E2, C, D), S is E1 - E2, p(0.33).
";

fn clause_terms(text: &str) -> Vec<Term> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| parse_term(l.trim_end_matches('.')).unwrap())
        .collect()
}

#[test]
fn published_translation_up_to_renaming() {
    let program = corpus("translation.sdcg");
    let got: Vec<Term> = translate(&program).iter().map(|c| c.as_term()).collect();
    let expected = clause_terms(EXPECTED);
    // The two domain clauses come first, unchanged.
    assert_eq!(got.len(), expected.len() + 2);
    for (g, e) in got[2..].iter().zip(&expected) {
        assert!(is_variant(g, e), "\n got {g}\nwant {e}");
    }
}

#[test]
fn printed_clauses_read_back_as_the_same_terms() {
    for file in ["digit_sums.sdcg", "neural_digit_sums.sdcg", "formulas.sdcg", "parentheses.sdcg", "anbncn.sdcg", "word_algebra.sdcg"] {
        let program = corpus(file);
        for clause in translate(&program) {
            let printed = clause.to_string();
            let back = parse_term(printed.trim_end_matches('.')).unwrap();
            assert!(is_variant(&back, &clause.as_term()), "{file}: {printed}");
        }
    }
}

#[test]
fn one_clause_per_source_item_in_order() {
    for file in ["digit_sums.sdcg", "formulas.sdcg", "word_algebra.sdcg", "translation.sdcg"] {
        let program = corpus(file);
        let clauses = translate(&program);
        assert_eq!(clauses.len(), program.items.len(), "{file}");
        for (item, clause) in program.items.iter().zip(&clauses) {
            let (name, arity) = clause.head.functor_arity().unwrap();
            match *item {
                // A grammar head gains the two sequence arguments.
                Item::Rule(id) => {
                    let (rn, ra) = program.rule(id).head.functor_arity().unwrap();
                    assert_eq!((name, arity), (rn, ra + 2), "{file}");
                }
                Item::Clause(i) => assert_eq!(clause.head, program.clauses[i].0.head, "{file}"),
            }
        }
        // Distinct rules never collapse into one clause.
        for (i, a) in clauses.iter().enumerate() {
            for b in &clauses[i + 1..] {
                assert!(!is_variant(&a.as_term(), &b.as_term()), "{file}: {a}");
            }
        }
    }
}
