use std::fmt::Write as _;

use rustc_hash::FxHashMap;

use super::{ModelError, ModelRegistry};
use crate::program::{Program, RuleId, Weight};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Adds `J^T · upstream` of the softmax at output `p` into `grad`.
pub fn softmax_backward(p: &[f64], upstream: &[f64], grad: &mut [f64]) {
    let dot: f64 = p.iter().zip(upstream).map(|(a, b)| a * b).sum();
    for j in 0..p.len() {
        grad[j] += p[j] * (upstream[j] - dot);
    }
}

/// Softmax-parameterised weights of one trainable rule group.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGroup {
    pub group: usize,
    pub name: String,
    pub logits: Vec<f64>,
}

impl WeightGroup {
    pub fn probabilities(&self) -> Vec<f64> {
        softmax(&self.logits)
    }
}

const HEADER: &str = "# stochlog checkpoint v1";

/// Every trainable parameter of a program: weight-group logits followed by
/// model parameter vectors, plus optimizer state.
#[derive(Debug, Clone)]
pub struct ParamStore {
    pub groups: Vec<WeightGroup>,
    pub models: ModelRegistry,
    pub step: u64,
    /// First and second moments per block; empty before the first update.
    pub moments: Vec<(Vec<f64>, Vec<f64>)>,
    slot_of_group: FxHashMap<usize, usize>,
    version: u64,
}

impl ParamStore {
    pub fn new(program: &Program, models: ModelRegistry) -> ParamStore {
        let mut groups = Vec::new();
        let mut slot_of_group = FxHashMap::default();
        for g in program.trainable_groups() {
            let logits = program.initial_probabilities(g).iter().map(|p| p.max(1e-12).ln()).collect();
            slot_of_group.insert(g, groups.len());
            groups.push(WeightGroup {
                group: g,
                name: program.groups[g].name(),
                logits,
            });
        }
        ParamStore {
            groups,
            models,
            step: 0,
            moments: Vec::new(),
            slot_of_group,
            version: 0,
        }
    }

    /// Index into `groups` of a program group, if trainable.
    pub fn group_slot(&self, group: usize) -> Option<usize> {
        self.slot_of_group.get(&group).copied()
    }

    /// Current probability of a non-neural rule.
    pub fn rule_probability(&self, program: &Program, id: RuleId) -> Option<f64> {
        let rule = program.rule(id);
        match &rule.weight {
            Weight::Implicit => Some(1.0),
            Weight::Fixed(n) => Some(n.to_f64()),
            Weight::Trainable(_) => {
                let slot = self.group_slot(rule.group)?;
                Some(self.groups[slot].probabilities()[rule.slot])
            }
            Weight::Neural(_) => None,
        }
    }

    /// Bumped on every parameter change; caches compare against it.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn touch(&mut self) {
        self.version += 1;
    }

    pub fn block_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.groups.iter().map(|g| format!("group:{}", g.name)).collect();
        names.extend(self.models.iter().map(|(n, _)| format!("model:{n}")));
        names
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.groups.iter().map(|g| g.logits.len()).collect();
        sizes.extend(self.models.iter().map(|(_, m)| m.params().len()));
        sizes
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.groups.iter().map(|g| g.logits.as_slice()).collect();
        out.extend(self.models.iter().map(|(_, m)| m.params()));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        let mut out: Vec<&mut [f64]> = self.groups.iter_mut().map(|g| g.logits.as_mut_slice()).collect();
        out.extend(self.models.iter_mut().map(|(_, m)| m.params_mut()));
        out
    }

    pub fn num_params(&self) -> usize {
        self.block_sizes().iter().sum()
    }

    /// `name=v1,v2,...` lines, one per block, then optimizer moments.
    /// Floats print in shortest round-trip form.
    pub fn to_checkpoint(&self) -> String {
        fn line(out: &mut String, name: &str, values: &[f64]) {
            let joined: Vec<String> = values.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{name}={}", joined.join(","));
        }
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER}");
        let _ = writeln!(out, "step={}", self.step);
        let names = self.block_names();
        for (name, block) in names.iter().zip(self.blocks()) {
            line(&mut out, name, block);
        }
        for (name, (m, v)) in names.iter().zip(&self.moments) {
            line(&mut out, &format!("adam_m:{name}"), m);
            line(&mut out, &format!("adam_v:{name}"), v);
        }
        out
    }

    /// Restores a checkpoint written for the same program and models. Every
    /// block must be present with its exact size.
    pub fn load_checkpoint(&mut self, text: &str) -> Result<(), ModelError> {
        let bad = |m: String| ModelError::Checkpoint(m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(HEADER) {
            return Err(bad("missing header".into()));
        }
        let mut step = None;
        let mut entries: FxHashMap<String, Vec<f64>> = FxHashMap::default();
        for l in lines {
            let (name, values) = l.rsplit_once('=').ok_or_else(|| bad(format!("malformed line {l:?}")))?;
            if name == "step" {
                step = Some(values.trim().parse::<u64>().map_err(|e| bad(format!("step: {e}")))?);
                continue;
            }
            let parsed: Result<Vec<f64>, _> = if values.trim().is_empty() {
                Ok(Vec::new())
            } else {
                values.split(',').map(|v| v.trim().parse::<f64>()).collect()
            };
            let parsed = parsed.map_err(|e| bad(format!("{name}: {e}")))?;
            if parsed.iter().any(|v| !v.is_finite()) {
                return Err(bad(format!("{name}: non-finite value")));
            }
            if entries.insert(name.to_owned(), parsed).is_some() {
                return Err(bad(format!("duplicate entry {name}")));
            }
        }
        let step = step.ok_or_else(|| bad("missing step".into()))?;
        let names = self.block_names();
        let sizes = self.block_sizes();
        let mut values = Vec::new();
        for (name, size) in names.iter().zip(&sizes) {
            let v = entries.remove(name).ok_or_else(|| bad(format!("missing block {name}")))?;
            if v.len() != *size {
                return Err(bad(format!("block {name} has {} values, expected {size}", v.len())));
            }
            values.push(v);
        }
        let mut moments = Vec::new();
        let has_moments = names.iter().any(|n| entries.contains_key(&format!("adam_m:{n}")));
        if has_moments {
            for (name, size) in names.iter().zip(&sizes) {
                let m = entries.remove(&format!("adam_m:{name}"));
                let v = entries.remove(&format!("adam_v:{name}"));
                match (m, v) {
                    (Some(m), Some(v)) if m.len() == *size && v.len() == *size => moments.push((m, v)),
                    _ => return Err(bad(format!("incomplete optimizer state for {name}"))),
                }
            }
        }
        if let Some(extra) = entries.keys().min() {
            return Err(bad(format!("unknown block {extra}")));
        }
        for (dst, src) in self.blocks_mut().into_iter().zip(values) {
            dst.copy_from_slice(&src);
        }
        self.step = step;
        self.moments = moments;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{SoftmaxTable, Uniform};
    use crate::program::parse_program;
    use crate::terms::Symbol;

    const SRC: &str = "t(0.25) :: a --> [x].
t(_) :: a --> [y].
b(Y) :- member(Y, [u, v]).
nn(m, [X], [Y], [b]) :: c(Y) --> [X].";

    fn store() -> (Program, ParamStore) {
        let p = parse_program(SRC).unwrap();
        let mut reg = ModelRegistry::new();
        reg.register(Symbol::intern("m"), Box::new(SoftmaxTable::with_logits(2, vec!["x".into()], vec![0.5, -0.25])));
        let s = ParamStore::new(&p, reg);
        (p, s)
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let a = softmax(&[1.0, 2.0, 3.0]);
        let b = softmax(&[1001.0, 1002.0, 1003.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn initial_weights_follow_source() {
        let (p, s) = store();
        assert_eq!(s.groups.len(), 1);
        let probs = s.groups[0].probabilities();
        assert!((probs[0] - 0.25).abs() < 1e-12 && (probs[1] - 0.75).abs() < 1e-12);
        assert!((s.rule_probability(&p, RuleId(1)).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(s.rule_probability(&p, RuleId(2)), None);
        assert_eq!(s.block_names(), vec!["group:a/0".to_owned(), "model:m".to_owned()]);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let (_, mut s) = store();
        s.groups[0].logits[0] = 0.1 + 0.2;
        s.step = 17;
        s.moments = vec![(vec![1e-300, 2.5], vec![0.0, 3.0]), (vec![-1.0, 1.0 / 3.0], vec![0.5, 0.25])];
        let text = s.to_checkpoint();
        let (_, mut t) = store();
        t.load_checkpoint(&text).unwrap();
        assert_eq!(t.step, 17);
        assert_eq!(t.blocks(), s.blocks());
        assert_eq!(t.moments, s.moments);
        assert_eq!(t.to_checkpoint(), text);
    }

    #[test]
    fn checkpoint_shape_mismatch_is_rejected() {
        let (_, s) = store();
        let text = s.to_checkpoint();
        let (_, mut t) = store();
        t.models.register(Symbol::intern("m"), Box::new(SoftmaxTable::with_logits(2, vec!["x".into(), "y".into()], vec![0.0; 4])));
        assert!(matches!(t.load_checkpoint(&text), Err(ModelError::Checkpoint(_))));
        let (_, mut u) = store();
        assert!(u.load_checkpoint(&text.replace("step=0", "")).is_err());
        assert!(u.load_checkpoint(&format!("{text}extra=1\n")).is_err());
        let mut v = ParamStore::new(&parse_program(SRC).unwrap(), ModelRegistry::new());
        v.models.register(Symbol::intern("m"), Box::new(Uniform::new(2)));
        assert!(v.load_checkpoint(&text).is_err());
    }
}
