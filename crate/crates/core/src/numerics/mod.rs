//! Minimal tensor arithmetic: a reverse-mode tape, Adam, and the precision
//! contract shared by the model and the trainer.

mod adam;
mod graph;
mod precision;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{Gradients, Graph, Var};
pub use precision::{Arithmetic, PrecisionMode};
pub use tensor::Tensor;

use rand::Rng;

#[cfg(test)]
pub(crate) use graph::{elu, sigmoid};

/// Glorot-uniform weights in ±sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut impl Rng,
) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::from_parts(shape.to_vec(), data).with_requires_grad(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double() -> Graph {
        Graph::new(Arithmetic::Double)
    }

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_dot() {
        let mut g = double();
        let i = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let m = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let out = g.matmul(i, m).unwrap();
        assert_eq!(g.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);

        let a = g.constant(t(&[1, 2], &[1.0, 2.0]));
        let b = g.constant(t(&[2, 1], &[3.0, 4.0]));
        let out = g.matmul(a, b).unwrap();
        assert_eq!(g.value(out).data(), &[11.0]);
        assert_eq!(g.value(out).shape(), &[1, 1]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut g = double();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(g.matmul(a, b), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn conv_identity_kernel_and_padding_counts() {
        let mut g = double();
        let x = t(
            &[2, 3, 4],
            &(0..24).map(|v| v as f64 * 0.5 - 3.0).collect::<Vec<_>>(),
        );
        let xv = g.constant(x.clone());
        let k = g.constant(t(&[2, 2, 1, 1], &[1.0, 0.0, 0.0, 1.0]));
        let out = g.conv2d(xv, k).unwrap();
        assert_eq!(g.value(out), &x);

        let ones = g.constant(Tensor::filled(&[1, 3, 3], 1.0));
        let k = g.constant(Tensor::filled(&[1, 1, 3, 3], 1.0));
        let out = g.conv2d(ones, k).unwrap();
        let v = g.value(out);
        assert_eq!(v.at(&[0, 1, 1]), 9.0);
        assert_eq!(v.at(&[0, 0, 0]), 4.0);
        assert_eq!(v.at(&[0, 0, 1]), 6.0);
    }

    #[test]
    fn conv_rejects_even_kernels() {
        let mut g = double();
        let x = g.constant(Tensor::zeros(&[1, 4, 4]));
        let k = g.constant(Tensor::zeros(&[1, 1, 2, 3]));
        assert!(matches!(g.conv2d(x, k), Err(crate::Error::Config(_))));
    }

    #[test]
    fn elu_values() {
        let mut g = double();
        let x = g.constant(t(&[3], &[0.0, 5.0, -20.0]));
        let y = g.elu(x).unwrap();
        let v = g.value(y).data();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 5.0);
        assert!((v[2] - ((-20.0f64).exp() - 1.0)).abs() < 1e-15);
        assert!((v[2] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn sigmoid_values() {
        let mut g = double();
        let x = g.constant(t(&[4], &[0.0, 1e3, -1e3, 2.5]));
        let y = g.sigmoid(x).unwrap();
        let v = g.value(y).data().to_vec();
        assert_eq!(v[0], 0.5);
        assert!((v[1] - 1.0).abs() < 1e-12);
        assert!(v[2] >= 0.0 && v[2] < 1e-12);
        assert!((v[3] + sigmoid(-2.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_values() {
        let mut g = double();
        let x = g.constant(t(&[2, 2], &[0.0, 0.0, 1000.0, 1000.0]));
        let y = g.softmax(x, 1).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5, 0.5, 0.5]);

        // Axis 0 normalizes columns.
        let x = g.constant(t(&[2, 2], &[1.0, 2.0, 1.0, 5.0]));
        let y = g.softmax(x, 0).unwrap();
        let v = g.value(y);
        assert!((v.at(&[0, 0]) - 0.5).abs() < 1e-15);
        assert!((v.at(&[0, 1]) + v.at(&[1, 1]) - 1.0).abs() < 1e-15);
        assert!(g.softmax(x, 2).is_err());
    }

    #[test]
    fn layer_norm_values() {
        let mut g = double();
        let x = g.constant(t(&[1, 2], &[1.0, 3.0]));
        let gain = g.constant(Tensor::filled(&[2], 1.0));
        let bias = g.constant(Tensor::zeros(&[2]));
        let y = g.layer_norm(x, gain, bias, 1e-12).unwrap();
        let v = g.value(y).data();
        assert!((v[0] + 1.0).abs() < 1e-5 && (v[1] - 1.0).abs() < 1e-5);

        let c = g.constant(Tensor::filled(&[1, 2], 7.0));
        let y = g.layer_norm(c, gain, bias, 1e-5).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0]);

        let short = g.constant(Tensor::zeros(&[3]));
        assert!(g.layer_norm(x, short, bias, 1e-5).is_err());
    }

    #[test]
    fn cross_entropy_values() {
        let mut g = double();
        let logits = g.param(&t(&[1, 2], &[0.0, 0.0]));
        let loss = g.cross_entropy(logits, &[0]).unwrap();
        assert!((g.value(loss).data()[0] - std::f64::consts::LN_2).abs() < 1e-15);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(logits).unwrap(), &[-0.5, 0.5]);

        let sharp = g.constant(t(&[1, 2], &[20.0, 0.0]));
        let loss = g.cross_entropy(sharp, &[0]).unwrap();
        assert!(g.value(loss).data()[0] < 1e-8);
        assert!(matches!(
            g.cross_entropy(sharp, &[2]),
            Err(crate::Error::Data(_))
        ));
    }

    #[test]
    fn concat_and_mean_rows() {
        let mut g = double();
        let a = g.param(&t(&[1, 2], &[1.0, 2.0]));
        let b = g.param(&t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]));
        let rows = g.concat_rows(&[a, b]).unwrap();
        assert_eq!(g.value(rows).shape(), &[3, 2]);
        let mean = g.mean_rows(rows).unwrap();
        assert_eq!(g.value(mean).data(), &[3.0, 4.0]);
        let c = g.constant(t(&[2, 1], &[9.0, 8.0]));
        let cols = g.concat_cols(&[b, c]).unwrap();
        assert_eq!(g.value(cols).data(), &[3.0, 4.0, 9.0, 5.0, 6.0, 8.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = double();
        let a = g.param(&t(&[2], &[1.0, 2.0]));
        let c = g.constant(t(&[2], &[3.0, 4.0]));
        let p = g.mul(a, c).unwrap();
        let s = g.sum(p).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap(), &[3.0, 4.0]);
        assert!(grads.get(c).is_none());
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let mut g = double();
        let x = g.constant(t(&[1], &[1e300]));
        assert!(matches!(g.scale(x, 1e300), Err(crate::Error::Numeric(_))));
        let mut s = Graph::new(Arithmetic::Single);
        let x = s.constant(t(&[1], &[1e30]));
        assert!(s.scale(x, 1e10).is_err());
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = double();
        let a = g.param(&Tensor::zeros(&[2]));
        assert!(g.backward(a).is_err());
    }
}
