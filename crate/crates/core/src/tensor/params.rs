use std::collections::BTreeMap;

use super::{Scalar, Tensor, TensorError};

/// Name-ordered map of tensors. Iteration order (and therefore flat
/// coordinate order) is the lexicographic order of names.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorMap<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

/// Model parameters (θ, φ).
pub type ParamStore<T> = TensorMap<T>;

/// Per-parameter gradients; keys and shapes mirror a [`ParamStore`].
pub type GradientMap<T> = TensorMap<T>;

impl<T: Scalar> Default for TensorMap<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> TensorMap<T> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) -> Option<Tensor<T>> {
        self.tensors.insert(name.into(), t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar entries across all tensors.
    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    /// Checks that `other` has exactly the same names and shapes.
    pub fn check_matches(&self, other: &Self) -> Result<(), TensorError> {
        for (name, t) in &self.tensors {
            let o = other
                .tensors
                .get(name)
                .ok_or_else(|| TensorError::MissingGradient(name.clone()))?;
            if o.shape() != t.shape() {
                return Err(TensorError::ParameterShape {
                    name: name.clone(),
                    expected: t.shape().to_vec(),
                    actual: o.shape().to_vec(),
                });
            }
        }
        if let Some(extra) = other.tensors.keys().find(|k| !self.tensors.contains_key(*k)) {
            return Err(TensorError::UnknownParameter(extra.clone()));
        }
        Ok(())
    }

    /// In-place `self += c · other`; names and shapes must match.
    pub fn add_scaled(&mut self, c: T, other: &Self) -> Result<(), TensorError> {
        self.check_matches(other)?;
        for (name, t) in self.tensors.iter_mut() {
            t.axpy(c, &other.tensors[name])?;
        }
        Ok(())
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.scale(c)))
                .collect(),
        }
    }

    /// Locates flat coordinate `coord` as (name, offset).
    fn locate(&self, mut coord: usize) -> Option<(&str, usize)> {
        for (name, t) in &self.tensors {
            if coord < t.len() {
                return Some((name, coord));
            }
            coord -= t.len();
        }
        None
    }

    pub fn flat_get(&self, coord: usize) -> Option<T> {
        let (name, off) = self.locate(coord)?;
        Some(self.tensors[name].data()[off])
    }

    pub fn flat_set(&mut self, coord: usize, value: T) -> bool {
        let Some((name, off)) = self.locate(coord) else {
            return false;
        };
        let name = name.to_string();
        self.tensors.get_mut(&name).expect("located").data_mut()[off] = value;
        true
    }

    /// Name of the tensor holding flat coordinate `coord`.
    pub fn flat_name(&self, coord: usize) -> Option<&str> {
        self.locate(coord).map(|(n, _)| n)
    }

    pub fn cast<U: Scalar>(&self) -> TensorMap<U> {
        TensorMap {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }
}

/// Functional gradient step: returns `params - lr · grads` without touching
/// the input store.
pub fn sgd_step<T: Scalar>(
    params: &ParamStore<T>,
    grads: &GradientMap<T>,
    lr: T,
) -> Result<ParamStore<T>, TensorError> {
    let mut next = params.clone();
    next.add_scaled(-lr, grads)?;
    Ok(next)
}
