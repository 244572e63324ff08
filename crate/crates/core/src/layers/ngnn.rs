use rand::Rng;

use super::{Bound, ParamId, ParamStore};
use crate::error::{NgnnError, Result};
use crate::tensor::{Activation, Scalar, Tape, Tensor, Var};

/// Stack of square feedforward layers applied to a GNN layer's output:
/// `g_0 = z`, `g_i = act_i(g_{i-1} . w_i + b_i)`, returning `g_k`.
///
/// Every `w_i` is `width x width`, where `width` is the host layer's output
/// width, so a block adds `k * (width^2 + width)` parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct NgnnBlock {
    pub width: usize,
    pub layers: Vec<NgnnDense>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NgnnDense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
}

impl NgnnBlock {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        width: usize,
        activations: &[Activation],
        rng: &mut R,
    ) -> Self {
        let layers = activations
            .iter()
            .enumerate()
            .map(|(i, &activation)| NgnnDense {
                weight: store.add(format!("{name}.ngnn{i}.weight"), Tensor::xavier_uniform(width, width, rng)),
                bias: store.add(format!("{name}.ngnn{i}.bias"), Tensor::zeros(1, width)),
                activation,
            })
            .collect();
        NgnnBlock { width, layers }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn param_count(&self) -> usize {
        self.depth() * (self.width * self.width + self.width)
    }

    /// Sets every weight to the identity and every bias to zero.
    pub fn set_identity<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        for l in &self.layers {
            store.set(l.weight, Tensor::identity(self.width))?;
            store.set(l.bias, Tensor::zeros(1, self.width))?;
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, z: Var) -> Result<Var> {
        let cols = tape.value(z).cols();
        if cols != self.width {
            return Err(NgnnError::shape(
                "ngnn_forward",
                format!("input width {cols}, block width {}", self.width),
            ));
        }
        let mut g = z;
        for l in &self.layers {
            let lin = tape.matmul(g, p[l.weight])?;
            let lin = tape.add_bias(lin, p[l.bias])?;
            g = tape.activation(lin, l.activation);
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::test_util::*;
    use crate::tensor::{finite_diff_check, sigmoid};

    fn run(b: &NgnnBlock, store: &ParamStore<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let mut tape = Tape::new();
        let p = store.bind(&mut tape, false);
        let z = tape.constant(x.clone());
        let out = b.forward(&mut tape, &p, z).unwrap();
        tape.value(out).clone()
    }

    #[test]
    fn identity_block_passes_through() {
        let mut store = ParamStore::new();
        let b = NgnnBlock::new(&mut store, "b", 4, &[Activation::Identity], &mut rng(0));
        b.set_identity(&mut store).unwrap();
        let x = random_features(5, 4, 1);
        assert_eq!(run(&b, &store, &x), x);
    }

    #[test]
    fn relu_identity_on_nonnegative_input() {
        let mut store = ParamStore::new();
        let b = NgnnBlock::new(&mut store, "b", 3, &[Activation::Relu], &mut rng(0));
        b.set_identity(&mut store).unwrap();
        let x = random_features(4, 3, 2).map(f64::abs);
        assert_eq!(run(&b, &store, &x), x);
    }

    #[test]
    fn two_layer_block_matches_hand_composition() {
        let mut store = ParamStore::new();
        let acts = [Activation::Relu, Activation::Sigmoid];
        let b = NgnnBlock::new(&mut store, "b", 4, &acts, &mut rng(3));
        for l in &b.layers {
            store.set(l.bias, Tensor::uniform(1, 4, 0.5, &mut rng(4))).unwrap();
        }
        let x = random_features(6, 4, 5);
        let (l1, l2) = (&b.layers[0], &b.layers[1]);
        let h1 = Tensor::from_fn(6, 4, |r, c| {
            let v: f64 = (0..4).map(|k| x.get(r, k) * store.get(l1.weight).get(k, c)).sum::<f64>()
                + store.get(l1.bias).get(0, c);
            v.max(0.0)
        });
        let h2 = Tensor::from_fn(6, 4, |r, c| {
            let v: f64 = (0..4).map(|k| h1.get(r, k) * store.get(l2.weight).get(k, c)).sum::<f64>()
                + store.get(l2.bias).get(0, c);
            sigmoid(v)
        });
        assert!(run(&b, &store, &x).max_abs_diff(&h2) < 1e-12);
    }

    #[test]
    fn width_mismatch_and_param_count() {
        let mut store = ParamStore::<f64>::new();
        let b = NgnnBlock::new(&mut store, "b", 256, &[Activation::Relu; 2], &mut rng(0));
        assert_eq!(b.param_count(), 131_584);
        assert_eq!(store.num_scalars(), 131_584);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape, false);
        let z = tape.constant(Tensor::zeros(2, 3));
        assert!(b.forward(&mut tape, &p, z).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut store = ParamStore::new();
        let b = NgnnBlock::new(&mut store, "b", 3, &[Activation::Relu, Activation::Sigmoid], &mut rng(6));
        let x = random_features(5, 3, 7);
        let err = finite_diff_check(
            |t, z| {
                let p = store.bind(t, false);
                let y = b.forward(t, &p, z)?;
                Ok(t.sum(y))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
        for l in &b.layers {
            for id in [l.weight, l.bias] {
                let err = finite_diff_check(
                    |t, w| {
                        let mut p = store.bind(t, false);
                        p.replace(id, w);
                        let z = t.constant(x.clone());
                        let y = b.forward(t, &p, z)?;
                        Ok(t.sum(y))
                    },
                    store.get(id),
                    1e-5,
                )
                .unwrap();
                assert!(err < 1e-6, "{err}");
            }
        }
    }
}
