//! Synthetic perception data: every token is a noisy one-hot vector of its
//! hidden class, so a small network can separate classes exactly.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::learning::QueryInstance;
use crate::models::{FeatureTable, FEATURE_PREFIX};
use crate::terms::Term;

#[derive(Debug, Clone)]
pub struct SynthData {
    pub train: Vec<QueryInstance>,
    pub test: Vec<QueryInstance>,
    pub features: FeatureTable,
    /// Hidden class of every generated token, keyed by token name.
    pub labels: BTreeMap<String, Term>,
}

/// Issues fresh tokens whose vectors encode a class index.
pub struct TokenFactory {
    dim: usize,
    noise: f64,
    next: usize,
    rng: ChaCha8Rng,
    pub features: FeatureTable,
    pub labels: BTreeMap<String, Term>,
}

impl TokenFactory {
    /// `dim` must be at least the number of classes used.
    pub fn new(dim: usize, noise: f64, seed: u64) -> TokenFactory {
        TokenFactory {
            dim,
            noise,
            next: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            features: FeatureTable::new(dim),
            labels: BTreeMap::new(),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn token(&mut self, class: usize, label: Term) -> Term {
        assert!(class < self.dim);
        let id = format!("t{}", self.next);
        self.next += 1;
        let noise = self.noise;
        let v: Vec<f64> = (0..self.dim)
            .map(|i| f64::from(u8::from(i == class)) + self.rng.gen_range(-noise..=noise))
            .collect();
        self.features.insert(&id, v).expect("finite vector of the table dimension");
        let name = format!("{FEATURE_PREFIX}{id}");
        self.labels.insert(name.clone(), label);
        Term::atom(&name)
    }

    fn finish(self, train: Vec<QueryInstance>, test: Vec<QueryInstance>) -> SynthData {
        SynthData {
            train,
            test,
            features: self.features,
            labels: self.labels,
        }
    }
}

/// Two digit tokens per instance, labelled with their sum.
pub fn addition(n_train: usize, n_test: usize, seed: u64) -> SynthData {
    let mut f = TokenFactory::new(16, 0.2, seed);
    let make = |f: &mut TokenFactory| {
        let a = f.rng().gen_range(0..10);
        let b = f.rng().gen_range(0..10);
        let seq = vec![f.token(a, Term::int(a as i64)), f.token(b, Term::int(b as i64))];
        let goal = Term::apply("addition", vec![Term::int((a + b) as i64)]);
        QueryInstance::new(goal, seq, 1.0)
    };
    let train = (0..n_train).map(|_| make(&mut f)).collect();
    let test = (0..n_test).map(|_| make(&mut f)).collect();
    f.finish(train, test)
}

/// Random balanced bracket string with `pairs` pairs.
pub fn balanced(pairs: usize, rng: &mut impl Rng) -> Vec<bool> {
    let mut out = Vec::with_capacity(2 * pairs);
    let (mut open, mut close) = (pairs, pairs);
    while open + close > 0 {
        let can_close = close > open;
        let take_open = open > 0 && (!can_close || rng.gen_bool(open as f64 / (open + close) as f64));
        if take_open {
            open -= 1;
        } else {
            close -= 1;
        }
        out.push(take_open);
    }
    out
}

/// Balanced bracket strings of 1 to `max_pairs` pairs; gold traces are the
/// bracket labels in order.
pub fn parentheses(n_train: usize, n_test: usize, max_pairs: usize, seed: u64) -> SynthData {
    let mut f = TokenFactory::new(4, 0.2, seed);
    let make = |f: &mut TokenFactory| {
        let pairs = f.rng().gen_range(1..=max_pairs);
        let shape = balanced(pairs, f.rng());
        let labels: Vec<Term> = shape.iter().map(|&o| Term::atom(if o { "(" } else { ")" })).collect();
        let seq = shape
            .iter()
            .zip(&labels)
            .map(|(&o, l)| f.token(usize::from(!o), l.clone()))
            .collect();
        let mut q = QueryInstance::new(Term::atom("s"), seq, 1.0);
        q.gold = Some(labels);
        q
    };
    let train = (0..n_train).map(|_| make(&mut f)).collect();
    let test = (0..n_test).map(|_| make(&mut f)).collect();
    f.finish(train, test)
}

/// Three letter blocks `a^k b^l c^m` of total length within
/// `min_len..=max_len`, half with equal block lengths. Goals are `s(1)` for
/// equal blocks and `s(0)` otherwise.
pub fn anbncn(n_train: usize, n_test: usize, min_len: usize, max_len: usize, seed: u64) -> SynthData {
    let letters = ["a", "b", "c"];
    let mut f = TokenFactory::new(4, 0.2, seed);
    let equal: Vec<usize> = (1..=max_len / 3).filter(|n| 3 * n >= min_len).collect();
    let mut unequal = Vec::new();
    for k in 1..max_len {
        for l in 1..max_len {
            for m in 1..max_len {
                let n = k + l + m;
                if (min_len..=max_len).contains(&n) && !(k == l && l == m) {
                    unequal.push([k, l, m]);
                }
            }
        }
    }
    let make = |f: &mut TokenFactory, i: usize| {
        let positive = i.is_multiple_of(2);
        let blocks = if positive {
            let n = *equal.choose(f.rng()).expect("a length range holding a multiple of three");
            [n, n, n]
        } else {
            *unequal.choose(f.rng()).expect("a length range holding three blocks")
        };
        let mut seq = Vec::new();
        for (c, &len) in blocks.iter().enumerate() {
            for _ in 0..len {
                seq.push(f.token(c, Term::atom(letters[c])));
            }
        }
        let goal = Term::apply("s", vec![Term::int(i64::from(positive))]);
        QueryInstance::new(goal, seq, 1.0)
    };
    let train = (0..n_train).map(|i| make(&mut f, i)).collect();
    let test = (0..n_test).map(|i| make(&mut f, i)).collect();
    f.finish(train, test)
}

/// Fraction of labelled tokens whose most probable class under `classify`
/// equals the hidden label.
pub fn latent_accuracy(labels: &BTreeMap<String, Term>, mut classify: impl FnMut(&Term) -> Option<Term>) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels
        .iter()
        .filter(|(name, label)| classify(&Term::atom(name)).as_ref() == Some(*label))
        .count();
    hits as f64 / labels.len() as f64
}
