use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    /// Bound of the uniform initializer, `sqrt(1 / fan_in)`.
    pub fan_in: usize,
}

/// Ordered, named collection of tensors. Order is part of the checkpoint format.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { params: Vec::new() }
    }

    /// Registers a zero tensor and returns its index.
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, fan_in: usize) -> usize {
        let len = shape.iter().product();
        self.params.push(Param {
            name: name.into(),
            shape,
            data: vec![T::zero(); len],
            fan_in,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn get(&self, index: usize) -> &[T] {
        &self.params[index].data
    }

    pub fn get_mut(&mut self, index: usize) -> &mut [T] {
        &mut self.params[index].data
    }

    pub fn param(&self, index: usize) -> &Param<T> {
        &self.params[index]
    }

    pub fn find(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: vec![T::zero(); p.data.len()],
                    fan_in: p.fan_in,
                })
                .collect(),
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Fills every tensor from `uniform(-sqrt(1/fan_in), sqrt(1/fan_in))`, in order.
    pub fn init_uniform(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut self.params {
            let bound = (1.0 / p.fan_in.max(1) as f64).sqrt();
            for v in &mut p.data {
                *v = T::lit(rng.random_range(-bound..bound));
            }
        }
    }

    pub fn fill_zero(&mut self) {
        for p in &mut self.params {
            p.data.fill(T::zero());
        }
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &ParamSet<T>) {
        assert_eq!(self.params.len(), other.params.len());
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for p in &mut self.params {
            for v in &mut p.data {
                *v = *v * factor;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.data.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p
                        .data
                        .iter()
                        .map(|v| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap_or(U::nan()))
                        .collect(),
                    fan_in: p.fan_in,
                })
                .collect(),
        }
    }

    /// Same names, shapes and order.
    pub fn same_layout<U>(&self, other: &ParamSet<U>) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }
}
