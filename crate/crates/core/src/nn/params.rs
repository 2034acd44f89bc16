//! Named parameter storage and deterministic initialization.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Uniform in `±sqrt(6 / fan_in)`.
    He {
        fan_in: usize,
    },
    Zero,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamDecl {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamDecl {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Appends the weight and bias of a square `k×k` conv.
pub(crate) fn declare_conv(
    out: &mut Vec<ParamDecl>,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
) {
    out.push(ParamDecl {
        name: format!("{name}.weight"),
        shape: vec![cout, cin, k, k],
        init: Init::He {
            fan_in: cin * k * k,
        },
    });
    out.push(ParamDecl {
        name: format!("{name}.bias"),
        shape: vec![cout],
        init: Init::Zero,
    });
}

pub(crate) fn declare_dense(out: &mut Vec<ParamDecl>, name: &str, inputs: usize, outputs: usize) {
    out.push(ParamDecl {
        name: format!("{name}.weight"),
        shape: vec![inputs, outputs],
        init: Init::He { fan_in: inputs },
    });
    out.push(ParamDecl {
        name: format!("{name}.bias"),
        shape: vec![outputs],
        init: Init::Zero,
    });
}

/// Ordered, named parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    /// Initializes every declared parameter from its own stream keyed by
    /// `(seed, name)`, so a parameter's initial value does not depend on
    /// which other parameters exist.
    pub fn initialize(decls: &[ParamDecl], seed: u64) -> Self {
        let mut store = ParamStore::default();
        for decl in decls {
            let numel = decl.numel();
            let data = match decl.init {
                Init::Zero => vec![T::zero(); numel],
                Init::He { fan_in } => {
                    let bound = (6.0 / fan_in as f64).sqrt();
                    let mut rng = Rng::derive(seed, &decl.name);
                    (0..numel)
                        .map(|_| T::from_f64_lossy(rng.uniform(-bound, bound)))
                        .collect()
                }
            };
            store
                .insert(&decl.name, Tensor::from_parts(decl.shape.clone(), data))
                .expect("declarations have unique names");
        }
        store
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor<T>) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter '{name}'")));
        }
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    /// Puts every parameter on `tape` as a leaf.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| tape.leaf(t.clone(), trainable))
            .collect();
        Bound {
            vars,
            index: self.index.clone(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }
}

/// Tape handles for a bound [`ParamStore`], addressable by name.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl Bound {
    /// Pairs names with handles already on a tape.
    pub fn from_vars(names: &[String], vars: Vec<Var>) -> Self {
        assert_eq!(names.len(), vars.len(), "one handle per name");
        Bound {
            index: names
                .iter()
                .cloned()
                .enumerate()
                .map(|(i, n)| (n, i))
                .collect(),
            vars,
        }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::Config(format!("missing parameter '{name}'")))
    }

    /// Handles in store order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}
