use rand::Rng;

use super::{check_input, dst_rows, Bound, ParamId, ParamStore};
use crate::error::{NgnnError, Result};
use crate::graph::Block;
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// GraphSage with mean aggregation:
/// `out[v] = h[v] . W_self + mean_{u in N(v)} h[u] . W_neigh + b`.
///
/// Destinations without neighbors contribute a zero neighbor term. One bias
/// is shared by both branches, so the layer has `2 * in * out + out`
/// parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SageLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w_self: ParamId,
    pub w_neigh: ParamId,
    pub bias: ParamId,
}

impl SageLayer {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let w_self = store.add(format!("{name}.w_self"), Tensor::xavier_uniform(in_dim, out_dim, rng));
        let w_neigh = store.add(format!("{name}.w_neigh"), Tensor::xavier_uniform(in_dim, out_dim, rng));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(1, out_dim));
        SageLayer {
            in_dim,
            out_dim,
            w_self,
            w_neigh,
            bias,
        }
    }

    pub fn from_params<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        w_self: Tensor<T>,
        w_neigh: Tensor<T>,
        bias: Tensor<T>,
    ) -> Result<Self> {
        let (in_dim, out_dim) = w_self.shape();
        if w_neigh.shape() != (in_dim, out_dim) || bias.shape() != (1, out_dim) {
            return Err(NgnnError::shape(
                "SageLayer",
                format!(
                    "w_self {:?}, w_neigh {:?}, bias {:?}",
                    w_self.shape(),
                    w_neigh.shape(),
                    bias.shape()
                ),
            ));
        }
        Ok(SageLayer {
            in_dim,
            out_dim,
            w_self: store.add(format!("{name}.w_self"), w_self),
            w_neigh: store.add(format!("{name}.w_neigh"), w_neigh),
            bias: store.add(format!("{name}.bias"), bias),
        })
    }

    pub fn param_count(&self) -> usize {
        2 * self.in_dim * self.out_dim + self.out_dim
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        block: &Block,
        h: Var,
    ) -> Result<Var> {
        check_input("sage_forward", tape, block, h, self.in_dim)?;
        let adj = block.mean_adj::<T>();
        let h_dst = dst_rows(tape, block, h)?;
        let self_term = tape.matmul(h_dst, p[self.w_self])?;
        let neigh = if self.in_dim <= self.out_dim {
            let agg = tape.spmm(&adj, h)?;
            tape.matmul(agg, p[self.w_neigh])?
        } else {
            let t = tape.matmul(h, p[self.w_neigh])?;
            tape.spmm(&adj, t)?
        };
        let z = tape.add(self_term, neigh)?;
        tape.add_bias(z, p[self.bias])
    }
}
