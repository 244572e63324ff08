//! GNN layers and the in-layer feedforward block.
//!
//! Layers hold [`ParamId`]s into a [`ParamStore`] rather than tensors, so a
//! model can bind all of its parameters onto a [`Tape`] in one call and
//! hand the optimizer a flat list.

mod gat;
mod gcn;
mod ngnn;
mod sage;

use std::ops::Index;
use std::sync::Arc;

use crate::error::{NgnnError, Result};
use crate::graph::Block;
use crate::tensor::{Scalar, Tape, Tensor, Var};

pub use gat::{GatLayer, GAT_NEGATIVE_SLOPE};
pub use gcn::GcnLayer;
pub use ngnn::NgnnBlock;
pub use sage::SageLayer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }

    pub fn from_index(i: usize) -> Self {
        ParamId(i)
    }
}

/// Ordered registry of named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    tensors: Vec<Tensor<T>>,
    names: Vec<String>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            tensors: Vec::new(),
            names: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.tensors.push(value);
        self.names.push(name.into());
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    /// Replaces a parameter, keeping its shape.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let cur = &self.tensors[id.0];
        if cur.shape() != value.shape() {
            return Err(NgnnError::shape(
                "ParamStore::set",
                format!("{}: {:?} vs {:?}", self.names[id.0], cur.shape(), value.shape()),
            ));
        }
        self.tensors[id.0] = value;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Total number of trainable scalars.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Records every parameter on `tape`; with `trainable` they require
    /// gradients.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        Bound(
            self.tensors
                .iter()
                .map(|t| tape.leaf(t.clone(), trainable))
                .collect(),
        )
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            names: self.names.clone(),
        }
    }
}

/// Parameters of a [`ParamStore`] recorded on a tape, indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.0
    }

    /// Points `id` at a different tape value, e.g. a probe for a
    /// finite-difference check.
    pub fn replace(&mut self, id: ParamId, var: Var) {
        self.0[id.0] = var;
    }

    /// Gradients after `backward`, in registry order.
    pub fn grads<T: Scalar>(&self, tape: &mut Tape<T>) -> Vec<Tensor<T>> {
        self.0
            .iter()
            .map(|&v| {
                tape.take_grad(v).unwrap_or_else(|| {
                    let (r, c) = tape.value(v).shape();
                    Tensor::zeros(r, c)
                })
            })
            .collect()
    }
}

impl Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}

/// Checks that `h` has one row per block source and `width` columns.
fn check_input<T: Scalar>(
    op: &'static str,
    tape: &Tape<T>,
    block: &Block,
    h: Var,
    width: usize,
) -> Result<()> {
    let (rows, cols) = tape.value(h).shape();
    if rows != block.num_src || cols != width {
        return Err(NgnnError::shape(
            op,
            format!(
                "input {rows}x{cols}, expected {}x{width}",
                block.num_src
            ),
        ));
    }
    Ok(())
}

/// The destination rows of `h` (a prefix of its source rows).
fn dst_rows<T: Scalar>(tape: &mut Tape<T>, block: &Block, h: Var) -> Result<Var> {
    if block.num_dst == block.num_src {
        return Ok(h);
    }
    let idx: Arc<[usize]> = (0..block.num_dst).collect();
    tape.gather_rows(h, idx)
}

/// One message-passing layer.
#[derive(Clone, Debug, PartialEq)]
pub enum GnnLayer {
    Gcn(GcnLayer),
    Sage(SageLayer),
    Gat(GatLayer),
}

impl GnnLayer {
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &Bound,
        block: &Block,
        h: Var,
    ) -> Result<Var> {
        match self {
            GnnLayer::Gcn(l) => l.forward(tape, params, block, h),
            GnnLayer::Sage(l) => l.forward(tape, params, block, h),
            GnnLayer::Gat(l) => l.forward(tape, params, block, h),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            GnnLayer::Gcn(l) => l.param_count(),
            GnnLayer::Sage(l) => l.param_count(),
            GnnLayer::Gat(l) => l.param_count(),
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            GnnLayer::Gcn(l) => l.in_dim,
            GnnLayer::Sage(l) => l.in_dim,
            GnnLayer::Gat(l) => l.in_dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            GnnLayer::Gcn(l) => l.out_dim,
            GnnLayer::Sage(l) => l.out_dim,
            GnnLayer::Gat(l) => l.out_dim,
        }
    }
}
