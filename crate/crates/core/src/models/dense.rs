use rand::Rng;

use super::store::{softmax, softmax_backward};
use super::{FeatureTable, ModelError, NeuralModel};
use crate::terms::Term;

/// `softmax(W2 · tanh(W1 · x + b1) + b2)` over the concatenated feature
/// vectors of the inputs.
///
/// Parameter layout: `W1` (hidden × input, row-major), `b1`, `W2`
/// (output × hidden), `b2`.
#[derive(Debug, Clone)]
pub struct DenseNet {
    input: usize,
    hidden: usize,
    output: usize,
    params: Vec<f64>,
}

impl DenseNet {
    /// Weights uniform in ±1/√fan_in, biases zero.
    pub fn new(input: usize, hidden: usize, output: usize, rng: &mut impl Rng) -> DenseNet {
        let mut params = vec![0.0; hidden * input + hidden + output * hidden + output];
        let s1 = 1.0 / (input as f64).sqrt();
        for w in &mut params[..hidden * input] {
            *w = rng.gen_range(-s1..s1);
        }
        let s2 = 1.0 / (hidden as f64).sqrt();
        let w2 = hidden * input + hidden;
        for w in &mut params[w2..w2 + output * hidden] {
            *w = rng.gen_range(-s2..s2);
        }
        DenseNet {
            input,
            hidden,
            output,
            params,
        }
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.output * self.hidden;
        (b1, w2, b2)
    }

    fn features(&self, inputs: &[Term], features: &FeatureTable) -> Result<Vec<f64>, ModelError> {
        let mut x = Vec::with_capacity(self.input);
        for token in inputs {
            x.extend_from_slice(features.vector(token)?);
        }
        if x.len() != self.input {
            return Err(ModelError::Invalid {
                model: "dense".into(),
                message: format!("input has dimension {}, expected {}", x.len(), self.input),
            });
        }
        Ok(x)
    }

    fn hidden_layer(&self, x: &[f64]) -> Vec<f64> {
        let (b1, _, _) = self.offsets();
        (0..self.hidden)
            .map(|j| {
                let row = &self.params[j * self.input..(j + 1) * self.input];
                let a: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.params[b1 + j];
                a.tanh()
            })
            .collect()
    }

    fn logits(&self, h: &[f64]) -> Vec<f64> {
        let (_, w2, b2) = self.offsets();
        (0..self.output)
            .map(|k| {
                let row = &self.params[w2 + k * self.hidden..w2 + (k + 1) * self.hidden];
                row.iter().zip(h).map(|(w, v)| w * v).sum::<f64>() + self.params[b2 + k]
            })
            .collect()
    }
}

impl NeuralModel for DenseNet {
    fn kind(&self) -> &'static str {
        "dense"
    }

    fn output_size(&self) -> usize {
        self.output
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward(&self, inputs: &[Term], features: &FeatureTable) -> Result<Vec<f64>, ModelError> {
        let x = self.features(inputs, features)?;
        Ok(softmax(&self.logits(&self.hidden_layer(&x))))
    }

    fn backward(&self, inputs: &[Term], features: &FeatureTable, upstream: &[f64], grad: &mut [f64]) -> Result<(), ModelError> {
        let x = self.features(inputs, features)?;
        let h = self.hidden_layer(&x);
        let p = softmax(&self.logits(&h));
        let mut dz = vec![0.0; self.output];
        softmax_backward(&p, upstream, &mut dz);
        let (b1, w2, b2) = self.offsets();
        let mut dh = vec![0.0; self.hidden];
        for k in 0..self.output {
            grad[b2 + k] += dz[k];
            for j in 0..self.hidden {
                grad[w2 + k * self.hidden + j] += dz[k] * h[j];
                dh[j] += dz[k] * self.params[w2 + k * self.hidden + j];
            }
        }
        for j in 0..self.hidden {
            let da = dh[j] * (1.0 - h[j] * h[j]);
            grad[b1 + j] += da;
            for i in 0..self.input {
                grad[j * self.input + i] += da * x[i];
            }
        }
        Ok(())
    }

    fn clone_box(&self) -> Box<dyn NeuralModel> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testing::check_model_gradient;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table() -> FeatureTable {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut t = FeatureTable::new(16);
        for id in 0..4 {
            let mut v = vec![0.0; 16];
            v[id] = 1.0;
            for x in &mut v {
                *x += rng.gen_range(-0.1..0.1);
            }
            t.insert(&id.to_string(), v).unwrap();
        }
        t
    }

    #[test]
    fn output_is_a_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let net = DenseNet::new(16, 32, 10, &mut rng);
        let p = net.forward(&[Term::atom("vec:2")], &table()).unwrap();
        assert_eq!(p.len(), 10);
        assert!(p.iter().all(|v| *v >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = DenseNet::new(32, 6, 3, &mut rng);
        let inputs = [Term::atom("vec:1"), Term::atom("vec:3")];
        check_model_gradient(&mut net, &inputs, &table(), &[1.5, -0.5, 0.25]);
    }

    #[test]
    fn missing_feature_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = DenseNet::new(16, 4, 2, &mut rng);
        assert!(matches!(net.forward(&[Term::atom("vec:9")], &table()), Err(ModelError::MissingFeature(_))));
    }
}
