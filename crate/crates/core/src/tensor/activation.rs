use serde::{Deserialize, Serialize};

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Logistic function, evaluated without overflowing `exp` for large |x|.
pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn activation<T: Scalar>(input: &Tensor<T>, kind: Activation) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .map(|&x| match kind {
            Activation::Relu => x.max(T::zero()),
            Activation::Sigmoid => sigmoid_scalar(x),
        })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("shape preserved")
}

/// Gradient through an activation. ReLU reads the forward `input`; sigmoid
/// reads the forward `output` (`s * (1 - s)`).
pub fn activation_backward<T: Scalar>(
    kind: Activation,
    input: &Tensor<T>,
    output: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if grad_out.shape() != input.shape() || output.shape() != input.shape() {
        return Err(Error::shape(format!(
            "activation backward shapes differ: input {:?}, output {:?}, grad {:?}",
            input.shape(),
            output.shape(),
            grad_out.shape()
        )));
    }
    let data = match kind {
        Activation::Relu => input
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
            .collect(),
        Activation::Sigmoid => output
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&s, &g)| g * s * (T::one() - s))
            .collect(),
    };
    Tensor::new(input.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definition_points() {
        assert_eq!(sigmoid_scalar(0.0f64), 0.5);
        assert!((sigmoid_scalar(3.0f64.ln()) - 0.75).abs() < 1e-15);
        let t = Tensor::new(vec![2], vec![-3.0f32, 3.0]).unwrap();
        assert_eq!(activation(&t, Activation::Relu).data(), &[0.0, 3.0]);
    }

    #[test]
    fn sigmoid_is_finite_at_extremes() {
        assert_eq!(sigmoid_scalar(-1000.0f64), 0.0);
        assert_eq!(sigmoid_scalar(1000.0f64), 1.0);
    }

    #[test]
    fn backward_uses_standard_derivatives() {
        let x = Tensor::new(vec![3], vec![-1.0f64, 0.0, 2.0]).unwrap();
        let g = Tensor::full(vec![3], 1.0f64).unwrap();
        let relu = activation(&x, Activation::Relu);
        let gr = activation_backward(Activation::Relu, &x, &relu, &g).unwrap();
        assert_eq!(gr.data(), &[0.0, 0.0, 1.0]);

        let s = activation(&x, Activation::Sigmoid);
        let gs = activation_backward(Activation::Sigmoid, &x, &s, &g).unwrap();
        assert_eq!(gs.data()[1], 0.25);
    }
}
