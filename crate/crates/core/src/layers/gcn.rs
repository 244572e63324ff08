use rand::Rng;

use super::{check_input, Bound, ParamId, ParamStore};
use crate::error::{NgnnError, Result};
use crate::graph::Block;
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Graph convolution: `out = A_hat . h . W + b`, where `A_hat` is the
/// symmetric-normalized adjacency with self-loops.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl GcnLayer {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), Tensor::xavier_uniform(in_dim, out_dim, rng));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(1, out_dim));
        GcnLayer {
            in_dim,
            out_dim,
            weight,
            bias,
        }
    }

    pub fn from_params<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        weight: Tensor<T>,
        bias: Tensor<T>,
    ) -> Result<Self> {
        let (in_dim, out_dim) = weight.shape();
        if bias.shape() != (1, out_dim) {
            return Err(NgnnError::shape("GcnLayer", format!("bias {:?}", bias.shape())));
        }
        Ok(GcnLayer {
            in_dim,
            out_dim,
            weight: store.add(format!("{name}.weight"), weight),
            bias: store.add(format!("{name}.bias"), bias),
        })
    }

    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        block: &Block,
        h: Var,
    ) -> Result<Var> {
        check_input("gcn_forward", tape, block, h, self.in_dim)?;
        let adj = block.gcn_adj::<T>()?;
        // Propagate in whichever width is narrower.
        let z = if self.in_dim <= self.out_dim {
            let agg = tape.spmm(&adj, h)?;
            tape.matmul(agg, p[self.weight])?
        } else {
            let t = tape.matmul(h, p[self.weight])?;
            tape.spmm(&adj, t)?
        };
        tape.add_bias(z, p[self.bias])
    }
}
