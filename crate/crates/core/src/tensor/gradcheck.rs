//! Central finite-difference gradient oracle.

use super::{Tape, Tensor, Var};
use crate::error::{NgnnError, Result};

/// Magnitude below which errors are measured absolutely rather than
/// relative to the gradient, so near-zero gradients do not blow up.
const REL_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares the tape gradient of the scalar function `f` at `x` against
/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate, returning the
/// largest relative error.
pub fn finite_diff_check<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(NgnnError::Config(format!("finite difference step {h} must be > 0")));
    }
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let out = f(&mut tape, xv)?;
    tape.backward(out)?;
    let analytic = tape.grad(xv).cloned().unwrap_or_else(|| Tensor::zeros(x.rows(), x.cols()));

    let eval = |point: Tensor<f64>| -> Result<f64> {
        let mut t = Tape::new();
        let v = t.leaf(point, false);
        let o = f(&mut t, v)?;
        Ok(t.value(o).get(0, 0))
    };

    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * h);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_exact() {
        // Small integers and a power-of-two step keep every operation exact.
        let x = Tensor::from_rows(&[[1.0, -2.0, 3.0], [4.0, 0.0, -6.0]]);
        let err = finite_diff_check(|t, v| Ok(t.sum(v)), &x, 0.0625).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn quadratic_matches_analytic() {
        let x = Tensor::from_rows(&[[0.3, -1.7], [2.2, 0.05], [-0.9, 1.1]]);
        let err = finite_diff_check(
            |t, v| {
                let sq = t.mul(v, v)?;
                Ok(t.sum(sq))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn rejects_non_positive_step() {
        let x = Tensor::<f64>::zeros(1, 1);
        assert!(finite_diff_check(|t, v| Ok(t.sum(v)), &x, 0.0).is_err());
    }
}
