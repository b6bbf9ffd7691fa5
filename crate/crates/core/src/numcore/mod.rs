//! Dense tensors and reverse-mode differentiation.
//!
//! Values live on a [`Tape`]; every operation appends a node and the
//! backward pass walks the nodes in reverse order. The free functions here
//! evaluate single operations without recording gradients.

mod gradcheck;
mod kernels;
mod tape;
mod tensor;

pub use gradcheck::{gradcheck, GradCheck, GradCheckConfig};
pub use tape::{Elementwise, Tape, Var, LOG_CLAMP};
pub use tensor::Tensor;

use crate::error::Result;

/// Value-only dilated "same" convolution, see [`Tape::conv1d`].
pub fn conv1d_dilated(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    dilation: usize,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (x, k, b) = (
        tape.constant(input.clone()),
        tape.constant(kernel.clone()),
        tape.constant(bias.clone()),
    );
    let y = tape.conv1d(x, k, b, dilation)?;
    Ok(tape.value(y).clone())
}

pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.constant(logits.clone());
    let y = tape.softmax_rows(x)?;
    Ok(tape.value(y).clone())
}

/// Value-only pointwise operation, see [`Tape::elementwise`].
pub fn elementwise(kind: Elementwise, operands: &[&Tensor]) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars: alloc::vec::Vec<Var> = operands
        .iter()
        .map(|t| tape.constant((*t).clone()))
        .collect();
    let y = tape.elementwise(kind, &vars)?;
    Ok(tape.value(y).clone())
}

pub fn sigmoid(x: f64) -> f64 {
    kernels::sigmoid(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn approx(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn conv_difference_kernel() {
        let x = Tensor::new(&[5, 1], vec![1., 2., 3., 4., 5.]).unwrap();
        let k = Tensor::new(&[1, 1, 3], vec![1., 0., -1.]).unwrap();
        let b = Tensor::vector(vec![0.0]);
        let y = conv1d_dilated(&x, &k, &b, 1).unwrap();
        assert_eq!(y.data(), &[-2., -2., -2., -2., 4.]);
        let y2 = conv1d_dilated(&x, &k, &b, 2).unwrap();
        assert_eq!(y2.data(), &[-3., -4., -4., 2., 3.]);
    }

    #[test]
    fn conv_identity_tap() {
        let x = Tensor::new(&[6, 1], vec![0.3, -1.0, 2.5, 4.0, 0.0, 9.0]).unwrap();
        let k = Tensor::new(&[1, 1, 3], vec![0., 1., 0.]).unwrap();
        let b = Tensor::vector(vec![0.0]);
        for d in 1..8 {
            assert_eq!(conv1d_dilated(&x, &k, &b, d).unwrap(), x);
        }
    }

    #[test]
    fn conv_rejects_bad_arguments() {
        let x = Tensor::zeros(&[4, 2]);
        let k = Tensor::zeros(&[1, 2, 3]);
        let b = Tensor::zeros(&[1]);
        assert!(matches!(
            conv1d_dilated(&x, &k, &b, 0),
            Err(crate::Error::Parameter(_))
        ));
        let wrong = Tensor::zeros(&[1, 3, 3]);
        assert!(matches!(
            conv1d_dilated(&x, &wrong, &b, 1),
            Err(crate::Error::Dimension(_))
        ));
        let even = Tensor::zeros(&[1, 2, 2]);
        assert!(conv1d_dilated(&x, &even, &b, 1).is_err());
    }

    #[test]
    fn pointwise_definitions() {
        let x = Tensor::vector(vec![-1., 0., 2.]);
        assert_eq!(
            elementwise(Elementwise::Relu, &[&x]).unwrap().data(),
            &[0., 0., 2.]
        );
        assert_eq!(
            elementwise(Elementwise::Sigmoid, &[&Tensor::scalar(0.0)])
                .unwrap()
                .data(),
            &[0.5]
        );
        let y = Tensor::vector(vec![3., 9.]);
        assert_eq!(
            elementwise(Elementwise::MinScalar(4.0), &[&y])
                .unwrap()
                .data(),
            &[3., 4.]
        );
        let z = Tensor::vector(vec![1., 2.]);
        assert!(elementwise(Elementwise::Add, &[&x, &z]).is_err());
        assert!(elementwise(Elementwise::Add, &[&x]).is_err());
    }

    #[test]
    fn log_is_clamped() {
        let x = Tensor::vector(vec![0.0, 1.0]);
        let y = elementwise(Elementwise::Log, &[&x]).unwrap();
        assert!((y.data()[0] - libm::log(LOG_CLAMP)).abs() < 1e-12);
        assert_eq!(y.data()[1], 0.0);
    }

    #[test]
    fn softmax_cases() {
        let u = softmax_rows(&Tensor::new(&[1, 3], vec![0., 0., 0.]).unwrap()).unwrap();
        assert!(approx(u.data(), &[1. / 3.; 3], 1e-15));
        let two = softmax_rows(&Tensor::new(&[1, 2], vec![0.7, 0.7 + 1.3]).unwrap()).unwrap();
        assert!((two.data()[1] - sigmoid(1.3)).abs() < 1e-15);
        let big = softmax_rows(&Tensor::new(&[1, 2], vec![1000., 0.]).unwrap()).unwrap();
        assert!(big.all_finite());
        assert!((big.data()[0] - 1.0).abs() < 1e-12 && big.data()[1] < 1e-300);
    }

    #[test]
    fn backward_quadratic_and_inactive_relu() {
        let mut tape = Tape::new();
        let w = tape.param(Tensor::vector(vec![1., 2.]));
        let sq = tape.mul(w, w).unwrap();
        let s = tape.sum(sq);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[2., 4.]);

        let mut tape = Tape::new();
        let w = tape.param(Tensor::vector(vec![1.0]));
        let m = tape.scale(w, -3.0);
        let r = tape.relu(m);
        let s = tape.sum(r);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[0.0]);
    }

    #[test]
    fn backward_accumulates_until_zeroed() {
        let mut tape = Tape::new();
        let w = tape.param(Tensor::vector(vec![3.0]));
        let sq = tape.mul(w, w).unwrap();
        let s = tape.sum(sq);
        tape.backward(s).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[12.0]);
        tape.zero_grads();
        assert_eq!(tape.grad(w).unwrap(), &[0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut tape = Tape::new();
        let w = tape.param(Tensor::vector(vec![1., 2.]));
        assert!(matches!(tape.backward(w), Err(crate::Error::Usage(_))));
    }

    #[test]
    fn scalar_broadcast_gradient_sums() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1., 2., 3.]));
        let c = tape.param(Tensor::scalar(2.0));
        let y = tape.mul(x, c).unwrap();
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(c).unwrap(), &[6.0]);
        assert_eq!(tape.grad(x).unwrap(), &[2., 2., 2.]);
    }
}
