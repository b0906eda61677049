//! Named trainable parameters with paired gradient accumulators.

use std::collections::HashMap;

use rand::Rng;

use super::{DiffError, TensorValue};

/// Handle to one parameter inside a [`ParamSet`].
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// A named tensor plus its gradient accumulator of identical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    name: String,
    value: TensorValue,
    grad: TensorValue,
}

impl ParamTensor {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &TensorValue {
        &self.value
    }

    pub fn grad(&self) -> &TensorValue {
        &self.grad
    }
}

/// The ordered collection of all trainable tensors of a model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<ParamTensor>,
    by_name: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    /// Registers a tensor under a unique name.
    pub fn register(&mut self, name: &str, value: TensorValue) -> Result<ParamId, DiffError> {
        if self.by_name.contains_key(name) {
            return Err(DiffError::Graph {
                reason: format!("duplicate parameter name `{name}`"),
            });
        }
        let id = self.params.len();
        self.by_name.insert(name.to_owned(), id);
        let grad = TensorValue::zeros(value.shape());
        self.params.push(ParamTensor {
            name: name.to_owned(),
            value,
            grad,
        });
        Ok(ParamId(id))
    }

    /// Registers a tensor with entries drawn uniformly from
    /// `[-init_range, init_range]`.
    pub fn init_uniform(
        &mut self,
        name: &str,
        shape: &[usize],
        init_range: f64,
        rng: &mut impl Rng,
    ) -> Result<ParamId, DiffError> {
        let len: usize = shape.iter().product();
        let data = if init_range == 0.0 {
            vec![0.0; len]
        } else {
            (0..len)
                .map(|_| rng.random_range(-init_range..init_range))
                .collect()
        };
        self.register(name, TensorValue::new(shape.to_vec(), data)?)
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &ParamTensor {
        &self.params[id.0]
    }

    /// The parameter's current value.
    pub fn value(&self, id: ParamId) -> &TensorValue {
        &self.params[id.0].value
    }

    pub(crate) fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        self.params[id.0].grad.data_mut()
    }

    /// Adds `delta` to one flat entry of a parameter; used by the
    /// finite-difference harness.
    pub fn perturb(&mut self, id: ParamId, flat_index: usize, delta: f64) {
        self.params[id.0].value.data_mut()[flat_index] += delta;
    }

    /// Clears every gradient accumulator.
    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill_zero();
        }
    }

    /// Scales every gradient accumulator, e.g. to average a batch.
    pub fn scale_grads(&mut self, factor: f64) {
        for p in &mut self.params {
            for g in p.grad.data_mut() {
                *g *= factor;
            }
        }
    }

    /// In-place SGD update `value -= lr * scale * grad`.
    pub(crate) fn apply_step(&mut self, lr: f64, scale: f64) {
        let step = lr * scale;
        for p in &mut self.params {
            let ParamTensor { value, grad, .. } = p;
            for (v, &g) in value.data_mut().iter_mut().zip(grad.data()) {
                *v -= step * g;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// All parameters in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamTensor)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn duplicate_names_are_rejected() {
        let mut set = ParamSet::new();
        set.register("w", TensorValue::zeros(&[2])).expect("first");
        assert!(set.register("w", TensorValue::zeros(&[2])).is_err());
    }

    #[test]
    fn uniform_init_respects_range_and_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut set = ParamSet::new();
        let id = set
            .init_uniform("w", &[16, 16], 0.1, &mut rng)
            .expect("registers");
        assert!(set
            .value(id)
            .data()
            .iter()
            .all(|&x| (-0.1..0.1).contains(&x)));

        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        let mut set2 = ParamSet::new();
        let id2 = set2
            .init_uniform("w", &[16, 16], 0.1, &mut rng2)
            .expect("registers");
        assert_eq!(set.value(id), set2.value(id2));
    }

    #[test]
    fn grads_zero_and_scale() {
        let mut set = ParamSet::new();
        let id = set.register("w", TensorValue::zeros(&[2])).expect("ok");
        set.grad_mut(id).copy_from_slice(&[2.0, 4.0]);
        set.scale_grads(0.5);
        assert_eq!(set.get(id).grad().data(), &[1.0, 2.0]);
        set.zero_grads();
        assert_eq!(set.get(id).grad().data(), &[0.0, 0.0]);
    }
}
