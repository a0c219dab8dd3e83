use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::numeric::{DenseArray, Gradients, Shape, Tape, Var};

/// How a parameter is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Uniform in `[-1/sqrt(d), 1/sqrt(d)]` for hidden width `d`.
    Uniform,
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Shape,
    pub init: Init,
}

impl ParamSpec {
    pub fn weight(name: impl Into<String>, shape: Shape) -> Self {
        Self {
            name: name.into(),
            shape,
            init: Init::Uniform,
        }
    }

    pub fn bias(name: impl Into<String>, len: usize) -> Self {
        Self {
            name: name.into(),
            shape: Shape::Vector(len),
            init: Init::Zeros,
        }
    }
}

/// Named trainable arrays. Weight matrices are stored input-major, so a
/// layer computes `y = x W + b`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSet {
    arrays: BTreeMap<String, DenseArray>,
}

impl ParamSet {
    /// Initializes `specs` in order from one seeded stream.
    pub fn init(specs: &[ParamSpec], hidden_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let arrays = specs
            .iter()
            .map(|spec| {
                let data = match spec.init {
                    Init::Uniform => (0..spec.shape.len()).map(|_| rng.gen_range(-bound..=bound)).collect(),
                    Init::Zeros => vec![0.0; spec.shape.len()],
                };
                (
                    spec.name.clone(),
                    DenseArray::new(spec.shape, data).expect("spec shape"),
                )
            })
            .collect();
        Self { arrays }
    }

    pub fn get(&self, name: &str) -> Option<&DenseArray> {
        self.arrays.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut DenseArray> {
        self.arrays.get_mut(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: DenseArray) {
        self.arrays.insert(name.into(), value);
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseArray)> {
        self.arrays.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut DenseArray)> {
        self.arrays.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.arrays.values().map(DenseArray::len).sum()
    }

    /// Checks that the set holds exactly `specs`, with matching shapes.
    pub fn check_against(&self, specs: &[ParamSpec]) -> Result<(), ModelError> {
        for spec in specs {
            match self.arrays.get(&spec.name) {
                None => return Err(ModelError::MissingParam(spec.name.clone())),
                Some(a) if a.shape() != spec.shape => {
                    return Err(ModelError::Config(format!(
                        "parameter {} has shape {}, expected {}",
                        spec.name,
                        a.shape(),
                        spec.shape
                    )))
                }
                Some(_) => {}
            }
        }
        if self.arrays.len() != specs.len() {
            let extra = self
                .arrays
                .keys()
                .find(|k| !specs.iter().any(|s| &s.name == *k))
                .cloned()
                .unwrap_or_default();
            return Err(ModelError::Config(format!("unexpected parameter {extra}")));
        }
        Ok(())
    }

    /// Records every array as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let vars = self
            .arrays
            .iter()
            .map(|(k, v)| (k.clone(), tape.leaf(v.clone())))
            .collect();
        BoundParams { vars }
    }

    /// Gradient of every parameter (zeros where the output does not depend on it).
    pub fn gradients(&self, tape: &Tape, bound: &BoundParams, grads: &Gradients) -> ParamSet {
        let arrays = bound
            .vars
            .iter()
            .map(|(k, &v)| (k.clone(), grads.get_or_zeros(tape, v)))
            .collect();
        ParamSet { arrays }
    }
}

/// Parameters recorded on a tape, looked up by name.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn from_vars(vars: impl IntoIterator<Item = (String, Var)>) -> Self {
        Self {
            vars: vars.into_iter().collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var, ModelError> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::MissingParam(name.to_string()))
    }
}
