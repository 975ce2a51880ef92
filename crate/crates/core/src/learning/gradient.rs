use rustc_hash::FxHashMap;

use super::ForwardCache;
use crate::circuit::{Circuit, Leaf};
use crate::models::{softmax_backward, FeatureTable, ModelError, ParamStore};
use crate::program::{Program, Weight};

/// A gradient laid out like [`ParamStore::blocks`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub blocks: Vec<Vec<f64>>,
}

impl Gradient {
    pub fn zeros(params: &ParamStore) -> Gradient {
        Gradient {
            blocks: params.block_sizes().into_iter().map(|n| vec![0.0; n]).collect(),
        }
    }

    pub fn add(&mut self, other: &Gradient) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.blocks.iter_mut().flatten().for_each(|x| *x *= factor);
    }

    pub fn norm(&self) -> f64 {
        self.blocks.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.blocks.concat()
    }
}

/// Pushes per-leaf adjoints `∂L/∂leaf` through rule-weight softmaxes and
/// neural models into `grad`.
pub fn accumulate(
    program: &Program,
    circuit: &Circuit,
    params: &ParamStore,
    cache: &ForwardCache,
    features: &FeatureTable,
    leaf_adjoints: &[f64],
    grad: &mut Gradient,
) -> Result<(), ModelError> {
    let mut group_up: FxHashMap<usize, Vec<f64>> = FxHashMap::default();
    let mut call_up: FxHashMap<u32, Vec<f64>> = FxHashMap::default();
    for (leaf, &adj) in circuit.leaves().iter().zip(leaf_adjoints) {
        if adj == 0.0 {
            continue;
        }
        match *leaf {
            Leaf::Rule(id) => {
                let rule = program.rule(id);
                if !matches!(rule.weight, Weight::Trainable(_)) {
                    continue;
                }
                let Some(slot) = params.group_slot(rule.group) else { continue };
                let n = params.groups[slot].logits.len();
                group_up.entry(slot).or_insert_with(|| vec![0.0; n])[rule.slot] += adj;
            }
            Leaf::Neural { call, output } => {
                let model = circuit.call(call).model;
                let k = params.models.get(model)?.output_size();
                call_up.entry(call).or_insert_with(|| vec![0.0; k])[output as usize] += adj;
            }
            Leaf::Marker(_) => {}
        }
    }
    let mut slots: Vec<_> = group_up.into_iter().collect();
    slots.sort_unstable_by_key(|(s, _)| *s);
    for (slot, up) in slots {
        let p = params.groups[slot].probabilities();
        softmax_backward(&p, &up, &mut grad.blocks[slot]);
    }
    let offset = params.groups.len();
    let mut calls: Vec<_> = call_up.into_iter().collect();
    calls.sort_unstable_by_key(|(c, _)| *c);
    for (index, up) in calls {
        let call = circuit.call(index);
        cache.get(params, call)?;
        let block = params.models.index_of(call.model).ok_or_else(|| ModelError::UnknownModel(call.model.to_string()))?;
        params.models.get(call.model)?.backward(&call.inputs, features, &up, &mut grad.blocks[offset + block])?;
    }
    Ok(())
}
