use std::sync::Arc;

use rand::Rng;

use super::{check_input, dst_rows, Bound, ParamId, ParamStore};
use crate::error::{NgnnError, Result};
use crate::graph::Block;
use crate::tensor::{Scalar, Tape, Tensor, Var};

pub const GAT_NEGATIVE_SLOPE: f64 = 0.2;

/// Multi-head graph attention.
///
/// Per head `k`: `z = h . W_k`, edge score
/// `e_uv = LeakyReLU(a_src_k . z_u + a_dst_k . z_v)`, attention `alpha`
/// is the softmax of `e` over `N(v) + {v}`, and the head output is
/// `sum_u alpha_uv z_u`. Heads are concatenated and a bias is added.
#[derive(Clone, Debug, PartialEq)]
pub struct GatLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub heads: usize,
    pub weights: Vec<ParamId>,
    pub attn_src: Vec<ParamId>,
    pub attn_dst: Vec<ParamId>,
    pub bias: ParamId,
}

impl GatLayer {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || out_dim % heads != 0 {
            return Err(NgnnError::Config(format!(
                "GAT output width {out_dim} is not divisible by {heads} heads"
            )));
        }
        let head_dim = out_dim / heads;
        let mut layer = GatLayer {
            in_dim,
            out_dim,
            heads,
            weights: Vec::with_capacity(heads),
            attn_src: Vec::with_capacity(heads),
            attn_dst: Vec::with_capacity(heads),
            bias: ParamId(0),
        };
        for k in 0..heads {
            layer.weights.push(store.add(
                format!("{name}.head{k}.weight"),
                Tensor::xavier_uniform(in_dim, head_dim, rng),
            ));
            layer.attn_src.push(store.add(
                format!("{name}.head{k}.attn_src"),
                Tensor::xavier_uniform(head_dim, 1, rng),
            ));
            layer.attn_dst.push(store.add(
                format!("{name}.head{k}.attn_dst"),
                Tensor::xavier_uniform(head_dim, 1, rng),
            ));
        }
        layer.bias = store.add(format!("{name}.bias"), Tensor::zeros(1, out_dim));
        Ok(layer)
    }

    pub fn head_dim(&self) -> usize {
        self.out_dim / self.heads
    }

    pub fn param_count(&self) -> usize {
        self.heads * (self.in_dim * self.head_dim() + 2 * self.head_dim()) + self.out_dim
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        block: &Block,
        h: Var,
    ) -> Result<Var> {
        self.forward_with_attention(tape, p, block, h).map(|(out, _)| out)
    }

    /// Forward pass that also returns each head's attention weights: one
    /// `E x 1` tensor per head, ordered like [`Block::attention_pattern`]
    /// (self-loop first within every destination).
    pub fn forward_with_attention<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        block: &Block,
        h: Var,
    ) -> Result<(Var, Vec<Var>)> {
        check_input("gat_forward", tape, block, h, self.in_dim)?;
        let pattern = block.attention_pattern::<T>();
        let src_idx: Arc<[usize]> = pattern.indices.clone().into();
        let dst_idx: Arc<[usize]> = pattern.edge_dst().into();
        let offsets: Arc<[usize]> = pattern.offsets.clone().into();

        let mut outputs = Vec::with_capacity(self.heads);
        let mut attention = Vec::with_capacity(self.heads);
        for k in 0..self.heads {
            let z = tape.matmul(h, p[self.weights[k]])?;
            let s_src = tape.matmul(z, p[self.attn_src[k]])?;
            let z_dst = dst_rows(tape, block, z)?;
            let s_dst = tape.matmul(z_dst, p[self.attn_dst[k]])?;
            let e_src = tape.gather_rows(s_src, Arc::clone(&src_idx))?;
            let e_dst = tape.gather_rows(s_dst, Arc::clone(&dst_idx))?;
            let e = tape.add(e_src, e_dst)?;
            let e = tape.leaky_relu(e, GAT_NEGATIVE_SLOPE);
            let alpha = tape.segment_softmax(e, Arc::clone(&offsets))?;
            outputs.push(tape.edge_aggregate(&pattern, alpha, z)?);
            attention.push(alpha);
        }
        let cat = if outputs.len() == 1 {
            outputs[0]
        } else {
            tape.concat_cols(&outputs)?
        };
        Ok((tape.add_bias(cat, p[self.bias])?, attention))
    }
}
