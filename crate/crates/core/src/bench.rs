//! SLD versus SLG on growing sequences: answer and node counts plus
//! median wall time.

use std::time::Instant;

use crate::circuit::Prob;
use crate::program::Program;
use crate::resolution::{derive, DeriveConfig, DeriveError, Goal, Strategy};
use crate::terms::Term;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub lengths: Vec<usize>,
    pub strategies: Vec<Strategy>,
    /// Token classes cycled along the sequence, e.g. `["n", "o"]` gives
    /// `n1, o1, n2, o2, …`. Every token is distinct.
    pub pattern: Vec<String>,
    /// Timed runs per cell after one warm-up run.
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BenchRow {
    pub length: usize,
    pub strategy: Strategy,
    pub answers: usize,
    pub nodes: usize,
    pub wall_ms: f64,
    pub truncated: bool,
}

pub fn pattern_sequence(pattern: &[String], len: usize) -> Vec<Term> {
    (0..len)
        .map(|i| Term::atom(&format!("{}{}", pattern[i % pattern.len()], i / pattern.len() + 1)))
        .collect()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Each timed run derives the forest and evaluates it once with every leaf
/// at one half.
pub fn run(program: &Program, goal: &Goal, spec: &BenchSpec, config: &DeriveConfig) -> Result<Vec<BenchRow>, DeriveError> {
    let mut rows = Vec::new();
    for &length in &spec.lengths {
        let sequence = pattern_sequence(&spec.pattern, length);
        for &strategy in &spec.strategies {
            let once = || -> Result<(crate::resolution::DerivationForest, f64), DeriveError> {
                let start = Instant::now();
                let forest = derive(program, goal, &sequence, strategy, config)?;
                let probs = vec![0.5; forest.circuit.leaves().len()];
                std::hint::black_box(forest.circuit.value::<Prob>(forest.root, &probs)?);
                Ok((forest, start.elapsed().as_secs_f64() * 1e3))
            };
            let (forest, _) = once()?;
            let mut times = Vec::with_capacity(spec.repeats);
            for _ in 0..spec.repeats.max(1) {
                times.push(once()?.1);
            }
            rows.push(BenchRow {
                length,
                strategy,
                answers: forest.answers.len(),
                nodes: forest.node_count(),
                wall_ms: median(times),
                truncated: forest.truncated,
            });
        }
    }
    Ok(rows)
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("length,strategy,answers,nodes,wall_ms\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{:.3}\n", r.length, r.strategy, r.answers, r.nodes, r.wall_ms));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patterns_and_medians() {
        let p = vec!["n".to_owned(), "o".to_owned()];
        let s: Vec<String> = pattern_sequence(&p, 5).iter().map(|t| t.to_string()).collect();
        assert_eq!(s, ["n1", "o1", "n2", "o2", "n3"]);
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
