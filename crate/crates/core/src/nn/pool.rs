//! 2x2 pooling with stride 2.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

fn require_even<T: Scalar>(input: &Tensor4<T>, op: &str) -> Result<()> {
    let [_, _, h, w] = input.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "{op} needs even spatial dims, got {h}x{w}; pad first"
        )));
    }
    Ok(())
}

/// Max pooling result plus, per output element, the flat input index of the
/// selected element (first maximum in scan order on ties).
#[derive(Clone, Debug)]
pub struct MaxPoolOutput<T> {
    pub output: Tensor4<T>,
    pub argmax: Vec<u32>,
}

pub fn pool_down2x<T: Scalar>(input: &Tensor4<T>) -> Result<MaxPoolOutput<T>> {
    require_even(input, "max pooling")?;
    let [n, c, h, w] = input.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut output = Tensor4::zeros([n, c, oh, ow]);
    let mut argmax = vec![0u32; n * c * oh * ow];
    let src = input.data();
    let out = output.data_mut();
    for p in 0..n * c {
        let base = p * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if src[i] > src[best] {
                        best = i;
                    }
                }
                let o = p * oh * ow + oy * ow + ox;
                out[o] = src[best];
                argmax[o] = best as u32;
            }
        }
    }
    Ok(MaxPoolOutput { output, argmax })
}

/// Routes each upstream gradient to its recorded argmax position.
pub fn pool_down2x_backward<T: Scalar>(
    input_shape: [usize; 4],
    argmax: &[u32],
    grad_out: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::Shape(format!(
            "max-pool backward: {} gradients for {} pooled outputs",
            grad_out.len(),
            argmax.len()
        )));
    }
    let mut grad_in = Tensor4::zeros(input_shape);
    let gi = grad_in.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        gi[idx as usize] = gi[idx as usize] + g;
    }
    Ok(grad_in)
}

/// 2x2 mean pooling; builds the input and target pyramids.
pub fn avg_pool2x<T: Scalar>(input: &Tensor4<T>) -> Result<Tensor4<T>> {
    require_even(input, "average pooling")?;
    let [n, c, h, w] = input.shape();
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::of(0.25);
    let mut output = Tensor4::zeros([n, c, oh, ow]);
    for b in 0..n {
        for ch in 0..c {
            let src = input.plane(b, ch);
            let dst = output.plane_mut(b, ch);
            for oy in 0..oh {
                let r0 = &src[2 * oy * w..(2 * oy + 1) * w];
                let r1 = &src[(2 * oy + 1) * w..(2 * oy + 2) * w];
                for ox in 0..ow {
                    let s = (r0[2 * ox] + r0[2 * ox + 1]) + (r1[2 * ox] + r1[2 * ox + 1]);
                    dst[oy * ow + ox] = s * quarter;
                }
            }
        }
    }
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_op;
    use rand::{Rng, SeedableRng};

    #[test]
    fn window_max() {
        let x = Tensor4::<f32>::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = pool_down2x(&x).unwrap();
        assert_eq!(p.output.data(), &[4.0]);
        assert_eq!(p.argmax, vec![3]);
    }

    #[test]
    fn constant_stays_constant() {
        let x = Tensor4::<f32>::full([2, 3, 6, 4], 0.7);
        let p = pool_down2x(&x).unwrap();
        assert_eq!(p.output.shape(), [2, 3, 3, 2]);
        assert!(p.output.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn ties_route_to_first_in_scan_order() {
        let x = Tensor4::<f64>::from_vec([1, 1, 2, 2], vec![0.0, 5.0, 5.0, 5.0]).unwrap();
        let p = pool_down2x(&x).unwrap();
        let g = pool_down2x_backward(x.shape(), &p.argmax, &Tensor4::full([1, 1, 1, 1], 1.0)).unwrap();
        assert_eq!(g.data(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn random_input_matches_window_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x = Tensor4::<f64>::from_fn([1, 2, 6, 6], |_| rng.random::<f64>());
        let p = pool_down2x(&x).unwrap();
        for c in 0..2 {
            for oy in 0..3 {
                for ox in 0..3 {
                    let mut m = f64::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            m = m.max(x.at(0, c, 2 * oy + dy, 2 * ox + dx));
                        }
                    }
                    assert_eq!(p.output.at(0, c, oy, ox), m);
                }
            }
        }
    }

    #[test]
    fn odd_dims_rejected() {
        let x = Tensor4::<f32>::zeros([1, 1, 3, 4]);
        assert!(matches!(pool_down2x(&x), Err(Error::Shape(_))));
        assert!(matches!(avg_pool2x(&x), Err(Error::Shape(_))));
    }

    #[test]
    fn max_pool_gradient_matches_finite_differences() {
        // distinct values, gaps far larger than eps: no ties, no switching
        let x = Tensor4::<f64>::from_fn([1, 2, 4, 6], |[_, c, y, x]| {
            (((c * 31 + y * 7 + x * 13) % 47) as f64) * 0.1
        });
        let err = check_op(
            &x,
            |x| pool_down2x(x).unwrap().output,
            |x, g| pool_down2x_backward(x.shape(), &pool_down2x(x).unwrap().argmax, g).unwrap(),
            1e-3,
            2,
        );
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn avg_pool_of_constant() {
        let x = Tensor4::<f32>::full([1, 2, 8, 6], 0.3);
        let p = avg_pool2x(&x).unwrap();
        assert_eq!(p.shape(), [1, 2, 4, 3]);
        assert!(p.data().iter().all(|&v| v == 0.3));
    }

    proptest::proptest! {
        #[test]
        fn max_pool_equals_brute_force(vals in proptest::collection::vec(-10.0f64..10.0, 48)) {
            let x = Tensor4::from_vec([1, 3, 4, 4], vals).unwrap();
            let p = pool_down2x(&x).unwrap();
            for c in 0..3 { for oy in 0..2 { for ox in 0..2 {
                let m = [(0,0),(0,1),(1,0),(1,1)].iter()
                    .map(|&(dy,dx)| x.at(0,c,2*oy+dy,2*ox+dx))
                    .fold(f64::NEG_INFINITY, f64::max);
                proptest::prop_assert_eq!(p.output.at(0,c,oy,ox), m);
            }}}
        }
    }
}
