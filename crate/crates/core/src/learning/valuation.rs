use rustc_hash::{FxHashMap, FxHashSet};

use crate::circuit::{Circuit, Leaf, NeuralCall};
use crate::models::{FeatureTable, ModelError, ParamStore};
use crate::program::Program;

/// Model outputs per distinct neural call, valid for one parameter version.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    version: Option<u64>,
    outputs: FxHashMap<NeuralCall, Vec<f64>>,
}

impl ForwardCache {
    pub fn new() -> ForwardCache {
        ForwardCache::default()
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Runs every call not yet cached. A parameter change since the last
    /// fill empties the cache first.
    pub fn fill<'c>(
        &mut self,
        params: &ParamStore,
        features: &FeatureTable,
        calls: impl IntoIterator<Item = &'c NeuralCall>,
    ) -> Result<(), ModelError> {
        if self.version != Some(params.version()) {
            self.outputs.clear();
            self.version = Some(params.version());
        }
        let mut seen = FxHashSet::default();
        let missing: Vec<NeuralCall> = calls
            .into_iter()
            .filter(|call| !self.outputs.contains_key(*call) && seen.insert(*call))
            .cloned()
            .collect();
        let results = crate::par::try_map(&missing, |_, call| {
            let model = params.models.get(call.model)?;
            let p = model.forward(&call.inputs, features)?;
            if p.len() != model.output_size() {
                return Err(ModelError::Invalid {
                    model: call.model.to_string(),
                    message: format!("forward returned {} entries for {} outputs", p.len(), model.output_size()),
                });
            }
            Ok(p)
        })?;
        self.outputs.extend(missing.into_iter().zip(results));
        Ok(())
    }

    pub fn fill_circuit(&mut self, params: &ParamStore, features: &FeatureTable, circuit: &Circuit) -> Result<(), ModelError> {
        self.fill(params, features, circuit.calls())
    }

    /// Cached distribution of `call`; stale when parameters moved on.
    pub fn get(&self, params: &ParamStore, call: &NeuralCall) -> Result<&[f64], ModelError> {
        if self.version != Some(params.version()) {
            return Err(ModelError::StaleCache);
        }
        self.outputs.get(call).map(Vec::as_slice).ok_or_else(|| ModelError::UnknownInput {
            model: call.model.to_string(),
            key: crate::models::input_key(&call.inputs),
        })
    }
}

/// Probability of every leaf of `circuit`: rule weights from `params`,
/// neural outputs from `cache`, 1 for answer markers.
pub fn leaf_values(program: &Program, circuit: &Circuit, params: &ParamStore, cache: &ForwardCache) -> Result<Vec<f64>, ModelError> {
    circuit
        .leaves()
        .iter()
        .map(|leaf| match *leaf {
            Leaf::Rule(id) => params.rule_probability(program, id).ok_or_else(|| ModelError::Invalid {
                model: String::new(),
                message: format!("rule {} has no probability", id.0),
            }),
            Leaf::Neural { call, output } => {
                let dist = cache.get(params, circuit.call(call))?;
                Ok(dist[output as usize])
            }
            Leaf::Marker(_) => Ok(1.0),
        })
        .collect()
}
