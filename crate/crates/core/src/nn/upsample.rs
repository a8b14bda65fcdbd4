//! Bilinear 2x upsampling, half-pixel (align-corners = false) convention.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

/// Source taps for output index `o` along an axis of input length `len`:
/// `(i0, i1, weight of i1)`.
#[inline]
fn taps(o: usize, len: usize) -> (usize, usize, f64) {
    let j = o / 2;
    if o.is_multiple_of(2) {
        // source coordinate j - 0.25
        if j == 0 {
            (0, 0, 0.0)
        } else {
            (j - 1, j, 0.75)
        }
    } else {
        // source coordinate j + 0.25
        (j, (j + 1).min(len - 1), 0.25)
    }
}

pub fn upsample2x<T: Scalar>(input: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [n, c, h, w] = input.shape();
    if h == 0 || w == 0 {
        return Err(Error::Shape(format!("cannot upsample an empty {h}x{w} plane")));
    }
    let (oh, ow) = (2 * h, 2 * w);
    let xt: Vec<_> = (0..ow).map(|o| taps(o, w)).collect();
    let mut out = Tensor4::zeros([n, c, oh, ow]);
    for b in 0..n {
        for ch in 0..c {
            let src = input.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for oy in 0..oh {
                let (y0, y1, fy) = taps(oy, h);
                let (fy, gy) = (T::of(fy), T::of(1.0 - fy));
                let r0 = &src[y0 * w..(y0 + 1) * w];
                let r1 = &src[y1 * w..(y1 + 1) * w];
                for (ox, &(x0, x1, fx)) in xt.iter().enumerate() {
                    let (fx, gx) = (T::of(fx), T::of(1.0 - fx));
                    let top = r0[x0] * gx + r0[x1] * fx;
                    let bottom = r1[x0] * gx + r1[x1] * fx;
                    dst[oy * ow + ox] = top * gy + bottom * fy;
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`upsample2x`].
pub fn upsample2x_backward<T: Scalar>(grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [n, c, oh, ow] = grad_out.shape();
    if oh % 2 != 0 || ow % 2 != 0 || oh == 0 || ow == 0 {
        return Err(Error::Shape(format!(
            "upsample backward expects even non-empty dims, got {oh}x{ow}"
        )));
    }
    let (h, w) = (oh / 2, ow / 2);
    let xt: Vec<_> = (0..ow).map(|o| taps(o, w)).collect();
    let mut grad_in = Tensor4::zeros([n, c, h, w]);
    for b in 0..n {
        for ch in 0..c {
            let src = grad_out.plane(b, ch);
            let dst = grad_in.plane_mut(b, ch);
            for oy in 0..oh {
                let (y0, y1, fy) = taps(oy, h);
                let (fy, gy) = (T::of(fy), T::of(1.0 - fy));
                for (ox, &(x0, x1, fx)) in xt.iter().enumerate() {
                    let (fx, gx) = (T::of(fx), T::of(1.0 - fx));
                    let g = src[oy * ow + ox];
                    let top = g * gy;
                    let bottom = g * fy;
                    dst[y0 * w + x0] = dst[y0 * w + x0] + top * gx;
                    dst[y0 * w + x1] = dst[y0 * w + x1] + top * fx;
                    dst[y1 * w + x0] = dst[y1 * w + x0] + bottom * gx;
                    dst[y1 * w + x1] = dst[y1 * w + x1] + bottom * fx;
                }
            }
        }
    }
    Ok(grad_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_op;

    /// Closed-form bilinear sample at output pixel (oy, ox).
    fn bilinear_oracle(img: &[Vec<f64>], oy: usize, ox: usize) -> f64 {
        let (h, w) = (img.len() as f64, img[0].len() as f64);
        let sy = ((oy as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, h - 1.0);
        let sx = ((ox as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, w - 1.0);
        let (y0, x0) = (sy.floor(), sx.floor());
        let (y1, x1) = ((y0 + 1.0).min(h - 1.0), (x0 + 1.0).min(w - 1.0));
        let (fy, fx) = (sy - y0, sx - x0);
        let v = |y: f64, x: f64| img[y as usize][x as usize];
        (1.0 - fy) * ((1.0 - fx) * v(y0, x0) + fx * v(y0, x1)) + fy * ((1.0 - fx) * v(y1, x0) + fx * v(y1, x1))
    }

    #[test]
    fn constant_upsamples_to_constant() {
        let x = Tensor4::<f32>::full([1, 2, 3, 5], 0.25);
        let y = upsample2x(&x).unwrap();
        assert_eq!(y.shape(), [1, 2, 6, 10]);
        assert!(y.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn single_pixel_broadcasts() {
        let x = Tensor4::<f64>::full([1, 1, 1, 1], 3.5);
        assert_eq!(upsample2x(&x).unwrap().data(), &[3.5; 4]);
    }

    #[test]
    fn ramp_matches_closed_form() {
        let img = vec![vec![0.0, 1.0], vec![2.0, 3.0]];
        let x = Tensor4::<f64>::from_vec([1, 1, 2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = upsample2x(&x).unwrap();
        for oy in 0..4 {
            for ox in 0..4 {
                assert!((y.at(0, 0, oy, ox) - bilinear_oracle(&img, oy, ox)).abs() < 1e-15);
            }
        }
        // interior samples reproduce the plane 2*sy + sx exactly
        assert!((y.at(0, 0, 1, 1) - 0.75).abs() < 1e-15);
        assert!((y.at(0, 0, 2, 1) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn larger_grid_matches_closed_form() {
        let img: Vec<Vec<f64>> = (0..5).map(|y| (0..3).map(|x| ((y * 3 + x) as f64 * 0.7).cos()).collect()).collect();
        let x = Tensor4::from_fn([1, 1, 5, 3], |[_, _, y, x]| img[y][x]);
        let y = upsample2x(&x).unwrap();
        for oy in 0..10 {
            for ox in 0..6 {
                assert!((y.at(0, 0, oy, ox) - bilinear_oracle(&img, oy, ox)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn backward_is_adjoint() {
        let x = Tensor4::<f64>::from_fn([2, 2, 3, 4], |[a, b, c, d]| ((a + 2 * b + 3 * c + 5 * d) as f64).sin());
        let err = check_op(&x, |x| upsample2x(x).unwrap(), |_, g| upsample2x_backward(g).unwrap(), 1.0, 9);
        assert!(err < 1e-9, "{err}");
    }
}
