//! Dense `f64` tensors with tape-based reverse-mode gradients and Adam.

mod adam;
mod graph;
mod layers;
mod tensor;

pub use adam::AdamState;
pub use graph::{Binary, Graph, Unary, Var};
pub(crate) use layers::prefixed;
pub use layers::{LayerNorm, Linear, Mlp, Parameterized};
pub use tensor::Tensor;

use crate::error::{Error, Result};

pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Diagonal-Gaussian log density summed over the trailing dimension.
///
/// Rank-1 inputs give a scalar; `[m × d]` inputs give one value per row.
pub fn gaussian_log_prob(g: &mut Graph, x: Var, mean: Var, log_std: Var) -> Result<Var> {
    for v in [x, mean, log_std] {
        if !g.value(v).is_finite() {
            return Err(Error::Numeric("gaussian_log_prob: non-finite input".into()));
        }
    }
    let diff = g.sub(x, mean)?;
    let neg_ls = g.neg(log_std);
    let inv_std = g.exp(neg_ls);
    let z = g.mul(diff, inv_std)?;
    let z2 = g.square(z);
    let half = g.scale(z2, -0.5);
    let t = g.sub(half, log_std)?;
    let per = g.add_scalar(t, -HALF_LN_2PI);
    if g.value(per).rank() <= 1 {
        Ok(g.sum(per))
    } else {
        g.sum_cols(per)
    }
}

/// `log(1 − tanh(u)²)` evaluated as `2·(ln 2 − u − softplus(−2u))`.
pub fn log_one_minus_tanh_sq(g: &mut Graph, u: Var) -> Var {
    let m2u = g.scale(u, -2.0);
    let sp = g.softplus(m2u);
    let negu = g.neg(u);
    let s = g.sub(negu, sp).expect("same shape");
    let t = g.add_scalar(s, std::f64::consts::LN_2);
    g.scale(t, 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn matmul_identity_and_direct() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::identity(2));
        let b = g.constant(Tensor::from_rows(&[[2.0], [3.0]]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[2.0, 3.0]);

        let a = g.constant(Tensor::from_rows(&[[1.0, 2.0]]).unwrap());
        let b = g.constant(Tensor::from_rows(&[[3.0], [4.0]]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[11.0]);
        assert_eq!(g.shape(c), &[1, 1]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn elementwise_definitions() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![0.0, -1.5, 2.5]));
        let t = g.tanh(x);
        let r = g.relu(x);
        assert_eq!(g.value(t).data()[0], 0.0);
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.5]);
    }

    #[test]
    fn incompatible_broadcast_is_rejected() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2]));
        assert!(matches!(g.add(a, b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn layer_norm_examples() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]]).unwrap());
        let gain = g.constant(Tensor::full(&[3], 1.0));
        let bias = g.constant(Tensor::zeros(&[3]));
        let y = g.layer_norm(x, gain, bias, 1e-5).unwrap();
        let v = g.value(y).data().to_vec();
        // var = 2/3; eps shifts the result in the 6th digit
        assert!(approx(v[0], -1.22474, 1e-4));
        assert!(approx(v[1], 0.0, 1e-12));
        assert!(approx(v[2], 1.22474, 1e-4));
        assert_eq!(&v[3..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn layer_norm_empty_row_is_dimension_error() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::scalar(1.0));
        let gain = g.constant(Tensor::full(&[1], 1.0));
        let bias = g.constant(Tensor::zeros(&[1]));
        assert!(g.layer_norm(x, gain, bias, 1e-5).is_err());
    }

    #[test]
    fn gaussian_log_prob_examples() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::vector(vec![0.0]));
        let lp = gaussian_log_prob(&mut g, z, z, z).unwrap();
        assert!(approx(g.value(lp).item(), -0.918939, 1e-6));

        let s = 0.7;
        let x = g.constant(Tensor::vector(vec![1.3]));
        let ls = g.constant(Tensor::vector(vec![s]));
        let lp = gaussian_log_prob(&mut g, x, x, ls).unwrap();
        assert!(approx(g.value(lp).item(), -HALF_LN_2PI - s, 1e-12));

        let bad = g.constant(Tensor::vector(vec![f64::NAN]));
        assert!(matches!(
            gaussian_log_prob(&mut g, bad, z, z),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn backward_linear_and_polynomial() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::vector(vec![0.3, -2.0, 4.0]), true);
        let s = g.sum(w);
        g.backward(s).unwrap();
        assert_eq!(g.grad(w).unwrap().data(), &[1.0, 1.0, 1.0]);

        let mut g = Graph::new();
        let w = g.leaf(Tensor::vector(vec![1.0, -2.0]), true);
        let sq = g.square(w);
        let s = g.sum(sq);
        g.backward(s).unwrap();
        assert_eq!(g.grad(w).unwrap().data(), &[2.0, -4.0]);
        // a second pass accumulates
        g.backward(s).unwrap();
        assert_eq!(g.grad(w).unwrap().data(), &[4.0, -8.0]);
        g.zero_grad();
        assert!(g.grad(w).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        let y = g.square(w);
        assert!(matches!(g.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn shared_subexpression_sums_paths() {
        // loss = sum(w * w) built as a product of the same leaf with itself
        let mut g = Graph::new();
        let w = g.leaf(Tensor::vector(vec![3.0, -1.0]), true);
        let p = g.mul(w, w).unwrap();
        let s = g.sum(p);
        g.backward(s).unwrap();
        assert_eq!(g.grad(w).unwrap().data(), &[6.0, -2.0]);
    }

    #[test]
    fn param_binding_is_memoized() {
        let t = Tensor::vector(vec![1.0, 2.0]);
        let mut g = Graph::new();
        let a = g.param(&t);
        let b = g.param(&t);
        assert_eq!(a, b);
        let s1 = g.sum(a);
        let s2 = g.sum(b);
        let s = g.add(s1, s2).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.param_grad(&t).unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn no_grad_graph_records_no_gradients() {
        let t = Tensor::vector(vec![1.0, 2.0]);
        let mut g = Graph::no_grad();
        let a = g.param(&t);
        let s = g.sum(a);
        g.backward(s).unwrap();
        assert!(g.param_grad(&t).is_none());
    }
}
