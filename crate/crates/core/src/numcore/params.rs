use std::collections::HashMap;

use crate::error::{Error, Result};

use super::array::{DenseArray, Scalar};
use super::graph::{Gradients, Graph, NodeId};

/// Named parameters in a stable insertion order, each with a gradient buffer
/// of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    values: Vec<DenseArray<T>>,
    grads: Vec<DenseArray<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: DenseArray<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.grads.push(DenseArray::zeros(value.shape()));
        self.values.push(value);
        self.names.push(name);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_elements(&self) -> usize {
        self.values.iter().map(DenseArray::len).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&DenseArray<T>> {
        self.position(name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut DenseArray<T>> {
        self.position(name).map(move |i| &mut self.values[i])
    }

    pub fn value(&self, i: usize) -> &DenseArray<T> {
        &self.values[i]
    }

    pub fn value_mut(&mut self, i: usize) -> &mut DenseArray<T> {
        &mut self.values[i]
    }

    pub fn grad(&self, i: usize) -> &DenseArray<T> {
        &self.grads[i]
    }

    pub fn values(&self) -> &[DenseArray<T>] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseArray<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Mutable access to each value together with its gradient.
    pub fn pairs_mut(&mut self) -> impl Iterator<Item = (&str, &mut DenseArray<T>, &DenseArray<T>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter_mut())
            .zip(&self.grads)
            .map(|((n, v), g)| (n, v, g))
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(T::zero()));
    }

    pub fn set_grad(&mut self, i: usize, grad: DenseArray<T>) -> Result<()> {
        if grad.shape() != self.values[i].shape() {
            return Err(Error::Shape(format!(
                "gradient for `{}` has shape {:?}, parameter has {:?}",
                self.names[i],
                grad.shape(),
                self.values[i].shape()
            )));
        }
        self.grads[i] = grad;
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            values: self.values.iter().map(DenseArray::cast).collect(),
            grads: self.grads.iter().map(DenseArray::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Registers every parameter as a leaf of `graph`.
    pub fn bind<'a>(&'a self, graph: &mut Graph<T>) -> BoundParams<'a, T> {
        let ids = self.values.iter().map(|v| graph.leaf(v.clone())).collect();
        BoundParams { params: self, ids }
    }

    /// Copies the gradients of bound leaves out of a finished backward pass.
    /// Leaves the loss did not reach get zero gradients.
    pub fn accumulate_from(&mut self, bound_ids: &[NodeId], grads: &Gradients<T>) {
        for (i, id) in bound_ids.iter().enumerate() {
            if let Some(g) = grads.get(*id) {
                self.grads[i].add_assign(g);
            }
        }
    }

    /// Appends every parameter of `other` with `prefix` prepended to its name.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &ParamSet<T>) -> Result<()> {
        for (name, value) in other.iter() {
            self.insert(format!("{prefix}{name}"), value.clone())?;
        }
        Ok(())
    }

    /// Extracts parameters whose names start with `prefix`, stripping it.
    pub fn sub_prefixed(&self, prefix: &str) -> Result<ParamSet<T>> {
        let mut out = ParamSet::new();
        for (name, value) in self.iter() {
            if let Some(rest) = name.strip_prefix(prefix) {
                out.insert(rest, value.clone())?;
            }
        }
        Ok(out)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(DenseArray::all_finite)
    }
}

/// Parameters registered on a graph, addressable by name.
pub struct BoundParams<'a, T> {
    params: &'a ParamSet<T>,
    ids: Vec<NodeId>,
}

impl<T: Scalar> BoundParams<'_, T> {
    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.params
            .position(name)
            .map(|i| self.ids[i])
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn try_id(&self, name: &str) -> Option<NodeId> {
        self.params.position(name).map(|i| self.ids[i])
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn shape(&self, name: &str) -> Result<&[usize]> {
        self.params
            .get(name)
            .map(DenseArray::shape)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_names() {
        let mut p = ParamSet::<f32>::new();
        p.insert("w", DenseArray::zeros(&[2])).unwrap();
        assert!(matches!(
            p.insert("w", DenseArray::zeros(&[3])),
            Err(Error::Config(_))
        ));
        assert_eq!(p.grad(0).shape(), &[2]);
    }

    #[test]
    fn prefix_round_trip() {
        let mut a = ParamSet::<f32>::new();
        a.insert("w", DenseArray::full(&[2], 1.0)).unwrap();
        a.insert("b", DenseArray::full(&[1], 2.0)).unwrap();
        let mut all = ParamSet::new();
        all.extend_prefixed("layer3.", &a).unwrap();
        assert_eq!(all.names(), &["layer3.w", "layer3.b"]);
        assert_eq!(all.sub_prefixed("layer3.").unwrap(), a);
    }
}
