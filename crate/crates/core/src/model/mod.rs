//! L-layer GNN stacks with NGNN blocks attached by position policy.

mod checkpoint;
mod config;
mod spec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NgnnError, Result};
use crate::graph::Block;
use crate::layers::{Bound, GatLayer, GcnLayer, GnnLayer, NgnnBlock, ParamStore, SageLayer};
use crate::rng::Rng as StreamRng;
use crate::tensor::{Activation, Scalar, Tape, Tensor, Var};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{Arch, ModelConfig, NgnnPosition};
pub use spec::{parse_ngnn_spec, render_ngnn_spec, MAX_NGNN_DEPTH};

/// Message-passing structure for a forward pass: one block shared by every
/// layer (full graph or an induced subgraph), or one block per layer.
#[derive(Clone, Copy, Debug)]
pub enum Propagation<'a> {
    Full(&'a Block),
    Layered(&'a [Block]),
}

impl<'a> Propagation<'a> {
    fn block(&self, layer: usize) -> &'a Block {
        match *self {
            Propagation::Full(b) => b,
            Propagation::Layered(bs) => &bs[layer],
        }
    }

    /// Rows the input features must have.
    pub fn num_inputs(&self) -> usize {
        match self {
            Propagation::Full(b) => b.num_src,
            Propagation::Layered(bs) => bs.first().map_or(0, |b| b.num_src),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerParams {
    pub layer: usize,
    pub kind: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub gnn: usize,
    pub ngnn: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    pub layers: Vec<GnnLayer>,
    pub blocks: Vec<Option<NgnnBlock>>,
}

/// Builds the stack described by `cfg`: layer 0 maps `in -> hidden`, layers
/// `1..L-1` map `hidden -> hidden` and the last maps `hidden -> out`.
/// Weights are Xavier-uniform, biases zero, drawn in registry order.
pub fn build_model<T: Scalar, R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Model<T>> {
    cfg.validate()?;
    let acts = cfg.ngnn_activations()?;
    let n = cfg.num_layers;
    let mut params = ParamStore::new();
    let mut layers = Vec::with_capacity(n);
    let mut blocks = Vec::with_capacity(n);
    for i in 0..n {
        let (d_in, d_out) = cfg.layer_dims(i);
        let name = format!("layer{i}");
        let layer = match cfg.arch {
            Arch::Gcn => GnnLayer::Gcn(GcnLayer::new(&mut params, &name, d_in, d_out, rng)),
            Arch::Sage => GnnLayer::Sage(SageLayer::new(&mut params, &name, d_in, d_out, rng)),
            Arch::Gat => {
                let heads = if i + 1 == n { 1 } else { cfg.heads };
                GnnLayer::Gat(GatLayer::new(&mut params, &name, d_in, d_out, heads, rng)?)
            }
        };
        layers.push(layer);
        blocks.push(
            cfg.ngnn_position
                .attaches(i, n)
                .then(|| NgnnBlock::new(&mut params, &name, d_out, &acts, rng)),
        );
    }
    Ok(Model {
        config: cfg.clone(),
        params,
        layers,
        blocks,
    })
}

impl<T: Scalar> Model<T> {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn param_breakdown(&self) -> Vec<LayerParams> {
        self.layers
            .iter()
            .zip(&self.blocks)
            .enumerate()
            .map(|(i, (l, b))| LayerParams {
                layer: i,
                kind: self.config.arch.to_string(),
                in_dim: l.in_dim(),
                out_dim: l.out_dim(),
                gnn: l.param_count(),
                ngnn: b.as_ref().map_or(0, NgnnBlock::param_count),
            })
            .collect()
    }

    /// Trainable scalars over all layers and blocks.
    pub fn param_count(&self) -> usize {
        self.param_breakdown().iter().map(|p| p.gnn + p.ngnn).sum()
    }

    /// Records the forward pass on `tape`.
    ///
    /// Each layer computes `z`; an attached block maps `z` through its
    /// feedforward stack and its last activation stands in for the layer
    /// activation. Layers without a block apply the inter-layer activation,
    /// except the last, which returns logits. Dropout follows every
    /// non-final layer when `dropout_rng` is given.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        prop: Propagation<'_>,
        x: Var,
        mut dropout_rng: Option<&mut StreamRng>,
    ) -> Result<Var> {
        if let Propagation::Layered(bs) = prop {
            if bs.len() != self.num_layers() {
                return Err(NgnnError::Config(format!(
                    "{} blocks for a {}-layer model",
                    bs.len(),
                    self.num_layers()
                )));
            }
        }
        let last = self.num_layers() - 1;
        let mut h = x;
        for (i, (layer, block)) in self.layers.iter().zip(&self.blocks).enumerate() {
            let z = layer.forward(tape, p, prop.block(i), h)?;
            h = match block {
                Some(b) => b.forward(tape, p, z)?,
                None if i == last => z,
                None => tape.activation(z, self.config.inter_layer_activation),
            };
            if i < last && self.config.dropout > 0.0 {
                if let Some(rng) = dropout_rng.as_deref_mut() {
                    h = tape.dropout(h, self.config.dropout, rng)?;
                }
            }
        }
        Ok(h)
    }

    /// Evaluation-mode forward on a fresh tape.
    pub fn predict(&self, prop: Propagation<'_>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let x = tape.constant(x.clone());
        let out = self.forward(&mut tape, &p, prop, x, None)?;
        Ok(tape.value(out).clone())
    }

    /// Turns every attached block into an exact pass-through of the vanilla
    /// layer: weights become identities, biases zero, and activations
    /// identity except the last, which takes the activation the vanilla
    /// layer would apply (the inter-layer activation, or none on the output
    /// layer). Activations are not part of a checkpoint, so this is meant
    /// for in-memory comparisons.
    pub fn set_ngnn_identity(&mut self) -> Result<()> {
        let last = self.num_layers() - 1;
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let Some(b) = block else { continue };
            b.set_identity(&mut self.params)?;
            let host = if i == last {
                Activation::Identity
            } else {
                self.config.inter_layer_activation
            };
            let k = b.layers.len();
            for (j, l) in b.layers.iter_mut().enumerate() {
                l.activation = if j + 1 == k { host } else { Activation::Identity };
            }
        }
        Ok(())
    }
}
