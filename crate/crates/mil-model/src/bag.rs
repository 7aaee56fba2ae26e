use crate::error::{ModelError, Result};
use mil_core::{Real, Tensor};
use rand::Rng;

/// One instance of a bag: a feature vector or a 2-D image, with an optional
/// binary label (absent under weak supervision).
#[derive(Clone, Debug)]
pub struct Instance<E = f32> {
    pub values: Tensor<E>,
    pub label: Option<bool>,
}

impl<E: Real> Instance<E> {
    pub fn new(values: Tensor<E>, label: Option<bool>) -> Self {
        Self { values, label }
    }
}

/// Ordered set of instances with a bag-level binary label.
///
/// When every instance carries a label, construction enforces the binary MIL
/// assumption: the bag label equals the OR of the instance labels.
#[derive(Clone, Debug)]
pub struct Bag<E = f32> {
    id: String,
    instances: Vec<Instance<E>>,
    label: bool,
}

impl<E: Real> Bag<E> {
    pub fn new(id: impl Into<String>, instances: Vec<Instance<E>>, label: bool) -> Result<Self> {
        let id = id.into();
        if instances.is_empty() {
            return Err(ModelError::EmptyBag(id));
        }
        let shape = instances[0].values.shape().to_vec();
        for (i, inst) in instances.iter().enumerate() {
            if inst.values.shape() != shape {
                return Err(ModelError::InstanceShape {
                    bag: id,
                    index: i,
                    expected: shape,
                    got: inst.values.shape().to_vec(),
                });
            }
        }
        if instances.iter().all(|i| i.label.is_some()) {
            let or_label = instances.iter().any(|i| i.label == Some(true));
            if or_label != label {
                return Err(ModelError::LabelInconsistent {
                    bag: id,
                    bag_label: label,
                    or_label,
                });
            }
        }
        Ok(Self {
            id,
            instances,
            label,
        })
    }

    /// Construction without the OR consistency check. Subsampling
    /// augmentation keeps the parent's bag label and knowingly accepts the
    /// hypergeometric flip risk, so the check must not reject it.
    pub fn new_unchecked(id: impl Into<String>, instances: Vec<Instance<E>>, label: bool) -> Self {
        debug_assert!(!instances.is_empty());
        Self {
            id: id.into(),
            instances,
            label,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> bool {
        self.label
    }

    pub fn instances(&self) -> &[Instance<E>] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instance_shape(&self) -> &[usize] {
        self.instances[0].values.shape()
    }

    /// Number of positively labeled instances, if every instance is labeled.
    pub fn positive_count(&self) -> Option<usize> {
        if self.instances.iter().all(|i| i.label.is_some()) {
            Some(
                self.instances
                    .iter()
                    .filter(|i| i.label == Some(true))
                    .count(),
            )
        } else {
            None
        }
    }

    /// Subsampling augmentation: draw a size k uniformly from
    /// [min_k, r], then k instances without replacement, preserving the
    /// original order. The bag label is copied from the parent.
    pub fn subsample(&self, min_k: usize, rng: &mut impl Rng) -> Result<Bag<E>> {
        let r = self.len();
        if min_k > r || min_k == 0 {
            return Err(ModelError::InvalidConfig(format!(
                "subsample size {min_k} outside 1..={r}"
            )));
        }
        let k = rng.gen_range(min_k..=r);
        let mut indices: Vec<usize> = (0..r).collect();
        // Partial Fisher-Yates, then restore order.
        for i in 0..k {
            let j = rng.gen_range(i..r);
            indices.swap(i, j);
        }
        let mut keep = indices[..k].to_vec();
        keep.sort_unstable();
        let instances = keep.iter().map(|&i| self.instances[i].clone()).collect();
        Ok(Bag::new_unchecked(self.id.clone(), instances, self.label))
    }
}
