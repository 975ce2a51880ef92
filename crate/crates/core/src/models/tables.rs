use std::collections::BTreeMap;

use rand::Rng;
use rustc_hash::FxHashMap;

use super::store::{softmax, softmax_backward};
use super::{input_key, FeatureTable, ModelError, NeuralModel};
use crate::terms::Term;

/// Rows are validated simplex vectors.
#[derive(Debug, Clone)]
pub struct FixedTable {
    k: usize,
    rows: FxHashMap<String, Vec<f64>>,
    default: Option<Vec<f64>>,
}

fn check_row(name: &str, key: &str, row: &[f64], k: usize) -> Result<(), ModelError> {
    let invalid = |message: String| ModelError::Invalid {
        model: name.to_owned(),
        message,
    };
    if row.len() != k {
        return Err(invalid(format!("row {key} has {} entries, expected {k}", row.len())));
    }
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(invalid(format!("row {key} has negative or non-finite entries")));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(invalid(format!("row {key} sums to {total}")));
    }
    Ok(())
}

impl FixedTable {
    pub fn new(name: &str, k: usize, rows: BTreeMap<String, Vec<f64>>, default: Option<Vec<f64>>) -> Result<FixedTable, ModelError> {
        for (key, row) in &rows {
            check_row(name, key, row, k)?;
        }
        if let Some(row) = &default {
            check_row(name, "default", row, k)?;
        }
        Ok(FixedTable {
            k,
            rows: rows.into_iter().collect(),
            default,
        })
    }
}

impl NeuralModel for FixedTable {
    fn kind(&self) -> &'static str {
        "fixed"
    }

    fn output_size(&self) -> usize {
        self.k
    }

    fn params(&self) -> &[f64] {
        &[]
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut []
    }

    fn forward(&self, inputs: &[Term], _: &FeatureTable) -> Result<Vec<f64>, ModelError> {
        let key = input_key(inputs);
        self.rows
            .get(&key)
            .or(self.default.as_ref())
            .cloned()
            .ok_or(ModelError::UnknownInput { model: "fixed".into(), key })
    }

    fn backward(&self, _: &[Term], _: &FeatureTable, _: &[f64], _: &mut [f64]) -> Result<(), ModelError> {
        Ok(())
    }

    fn clone_box(&self) -> Box<dyn NeuralModel> {
        Box::new(self.clone())
    }
}

/// One row of trainable logits per known input key.
#[derive(Debug, Clone)]
pub struct SoftmaxTable {
    k: usize,
    keys: Vec<String>,
    index: FxHashMap<String, usize>,
    logits: Vec<f64>,
}

impl SoftmaxTable {
    /// Logits start uniform in (-0.1, 0.1).
    pub fn new(k: usize, keys: Vec<String>, rng: &mut impl Rng) -> SoftmaxTable {
        let index = keys.iter().enumerate().map(|(i, key)| (key.clone(), i)).collect();
        let logits = (0..keys.len() * k).map(|_| rng.gen_range(-0.1..0.1)).collect();
        SoftmaxTable { k, keys, index, logits }
    }

    pub fn with_logits(k: usize, keys: Vec<String>, logits: Vec<f64>) -> SoftmaxTable {
        assert_eq!(logits.len(), keys.len() * k);
        let index = keys.iter().enumerate().map(|(i, key)| (key.clone(), i)).collect();
        SoftmaxTable { k, keys, index, logits }
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    fn row(&self, inputs: &[Term]) -> Result<usize, ModelError> {
        let key = input_key(inputs);
        self.index.get(&key).copied().ok_or(ModelError::UnknownInput { model: "softmax".into(), key })
    }
}

impl NeuralModel for SoftmaxTable {
    fn kind(&self) -> &'static str {
        "softmax"
    }

    fn output_size(&self) -> usize {
        self.k
    }

    fn params(&self) -> &[f64] {
        &self.logits
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    fn forward(&self, inputs: &[Term], _: &FeatureTable) -> Result<Vec<f64>, ModelError> {
        let row = self.row(inputs)?;
        Ok(softmax(&self.logits[row * self.k..(row + 1) * self.k]))
    }

    fn backward(&self, inputs: &[Term], _: &FeatureTable, upstream: &[f64], grad: &mut [f64]) -> Result<(), ModelError> {
        let row = self.row(inputs)?;
        let range = row * self.k..(row + 1) * self.k;
        let p = softmax(&self.logits[range.clone()]);
        softmax_backward(&p, upstream, &mut grad[range]);
        Ok(())
    }

    fn clone_box(&self) -> Box<dyn NeuralModel> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone)]
pub struct Uniform {
    k: usize,
}

impl Uniform {
    pub fn new(k: usize) -> Uniform {
        Uniform { k }
    }
}

impl NeuralModel for Uniform {
    fn kind(&self) -> &'static str {
        "uniform"
    }

    fn output_size(&self) -> usize {
        self.k
    }

    fn params(&self) -> &[f64] {
        &[]
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut []
    }

    fn forward(&self, _: &[Term], _: &FeatureTable) -> Result<Vec<f64>, ModelError> {
        Ok(vec![1.0 / self.k as f64; self.k])
    }

    fn backward(&self, _: &[Term], _: &FeatureTable, _: &[f64], _: &mut [f64]) -> Result<(), ModelError> {
        Ok(())
    }

    fn clone_box(&self) -> Box<dyn NeuralModel> {
        Box::new(self.clone())
    }
}
