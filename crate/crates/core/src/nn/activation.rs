use crate::error::Result;
use crate::tensor::{Scalar, Tensor4};

pub fn relu<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_in_place<T: Scalar>(x: &mut Tensor4<T>) {
    for v in x.data_mut() {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
}

/// Gradient through a ReLU, given the activation's *output*.
pub fn relu_backward<T: Scalar>(output: &Tensor4<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    output.require_same_shape(grad_out, "relu backward")?;
    let mut g = grad_out.clone();
    for (gv, &o) in g.data_mut().iter_mut().zip(output.data()) {
        if !(o > T::zero()) {
            *gv = T::zero();
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::conv::{conv2d, conv2d_backward};
    use crate::nn::gradcheck::check_op;

    #[test]
    fn clamps_negatives() {
        let x = Tensor4::<f32>::from_vec([1, 1, 1, 4], vec![-1.0, 0.0, 0.5, -0.0]).unwrap();
        let y = relu(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 0.5, 0.0]);
        assert!(y.data().iter().all(|v| v.is_sign_positive()));
    }

    #[test]
    fn conv_relu_composite_gradient() {
        let x = Tensor4::<f64>::from_fn([1, 2, 6, 6], |[_, c, y, x]| ((c * 17 + y * 5 + x * 3) as f64 * 0.61).sin());
        let w = Tensor4::<f64>::from_fn([3, 2, 3, 3], |[a, b, c, d]| ((a * 11 + b * 7 + c * 3 + d) as f64 * 0.43).cos() * 0.5);
        let b = Tensor4::from_vec([1, 3, 1, 1], vec![0.05, -0.1, 0.02]).unwrap();
        let f = |x: &Tensor4<f64>| relu(&conv2d(x, &w, Some(&b), 1, 1).unwrap());
        let err = check_op(
            &x,
            f,
            |x, g| {
                let pre = conv2d(x, &w, Some(&b), 1, 1).unwrap();
                let gp = relu_backward(&relu(&pre), g).unwrap();
                conv2d_backward(x, &w, &gp, 1, 1).unwrap().input
            },
            1e-5,
            21,
        );
        assert!(err < 1e-4, "{err}");
    }
}
