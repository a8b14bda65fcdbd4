//! Merging a coarse subnetwork's decoder features into a finer encoder stage.

use crate::error::{Error, Result};
use crate::model::config::FusionMode;
use crate::nn::{conv2d, conv2d_backward};
use crate::tensor::{Scalar, Tensor4};

fn require_aligned<T: Scalar>(e: &Tensor4<T>, d: &Tensor4<T>) -> Result<()> {
    let [en, _, eh, ew] = e.shape();
    let [dn, _, dh, dw] = d.shape();
    if (en, eh, ew) != (dn, dh, dw) {
        return Err(Error::Shape(format!(
            "fusion site misaligned: encoder {:?} vs coarse decoder {:?}",
            e.shape(),
            d.shape()
        )));
    }
    Ok(())
}

/// Residual mode: `E + P * D` (or `E + D` when no projection is given and widths agree).
/// Concat mode: `[E : D]`; `projection` is ignored.
///
/// `projection` is a bias-free 1x1 weight of shape `(c_E, c_D, 1, 1)`.
pub fn fuse_features<T: Scalar>(
    e: &Tensor4<T>,
    d_coarse: &Tensor4<T>,
    mode: FusionMode,
    projection: Option<&Tensor4<T>>,
) -> Result<Tensor4<T>> {
    require_aligned(e, d_coarse)?;
    match mode {
        FusionMode::Concat => Tensor4::concat_channels(e, d_coarse),
        FusionMode::Residual => {
            let mut out = e.clone();
            match projection {
                Some(p) => out.add_assign(&conv2d(d_coarse, p, None, 1, 0)?)?,
                None if d_coarse.channels() == e.channels() => out.add_assign(d_coarse)?,
                None => {
                    return Err(Error::Config(format!(
                        "residual fusion of {} coarse channels into {} encoder channels needs a projection",
                        d_coarse.channels(),
                        e.channels()
                    )))
                }
            }
            Ok(out)
        }
    }
}

#[derive(Clone, Debug)]
pub struct FusionGrads<T> {
    pub encoder: Tensor4<T>,
    pub coarse: Tensor4<T>,
    pub projection: Option<Tensor4<T>>,
}

pub fn fuse_features_backward<T: Scalar>(
    e_channels: usize,
    d_coarse: &Tensor4<T>,
    mode: FusionMode,
    projection: Option<&Tensor4<T>>,
    grad_out: &Tensor4<T>,
) -> Result<FusionGrads<T>> {
    match mode {
        FusionMode::Concat => {
            let (encoder, coarse) = grad_out.split_channels(e_channels)?;
            Ok(FusionGrads {
                encoder,
                coarse,
                projection: None,
            })
        }
        FusionMode::Residual => match projection {
            Some(p) => {
                let g = conv2d_backward(d_coarse, p, grad_out, 1, 0)?;
                Ok(FusionGrads {
                    encoder: grad_out.clone(),
                    coarse: g.input,
                    projection: Some(g.weight),
                })
            }
            None => Ok(FusionGrads {
                encoder: grad_out.clone(),
                coarse: grad_out.clone(),
                projection: None,
            }),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_op;

    fn wave(shape: [usize; 4], salt: f64) -> Tensor4<f64> {
        Tensor4::from_fn(shape, |[a, b, c, d]| ((a * 3 + b * 5 + c * 7 + d * 11) as f64 * 0.29 + salt).sin())
    }

    #[test]
    fn residual_zero_coarse_is_identity() {
        let e = wave([2, 32, 4, 4], 0.0).map(|v| v.max(0.0));
        let d = Tensor4::zeros([2, 16, 4, 4]);
        let p = wave([32, 16, 1, 1], 1.0);
        let out = fuse_features(&e, &d, FusionMode::Residual, Some(&p)).unwrap();
        assert_eq!(out, e);
    }

    #[test]
    fn concat_appends_channels() {
        let e = wave([1, 32, 3, 3], 0.5);
        let d = wave([1, 16, 3, 3], 2.5);
        let out = fuse_features(&e, &d, FusionMode::Concat, None).unwrap();
        assert_eq!(out.shape(), [1, 48, 3, 3]);
        let (head, tail) = out.split_channels(32).unwrap();
        assert_eq!(head, e);
        assert_eq!(tail, d);
    }

    #[test]
    fn residual_projection_matches_direct_evaluation() {
        let e = wave([1, 32, 3, 2], 0.1);
        let d = wave([1, 16, 3, 2], 0.7);
        let p = wave([32, 16, 1, 1], 1.3);
        let out = fuse_features(&e, &d, FusionMode::Residual, Some(&p)).unwrap();
        assert_eq!(out.shape(), e.shape());
        for co in 0..32 {
            for y in 0..3 {
                for x in 0..2 {
                    let proj: f64 = (0..16).map(|ci| p.at(co, ci, 0, 0) * d.at(0, ci, y, x)).sum();
                    assert!((out.at(0, co, y, x) - (e.at(0, co, y, x) + proj)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn residual_width_mismatch_without_projection_is_config_error() {
        let e = Tensor4::<f32>::zeros([1, 8, 2, 2]);
        let d = Tensor4::zeros([1, 4, 2, 2]);
        assert!(matches!(fuse_features(&e, &d, FusionMode::Residual, None), Err(Error::Config(_))));
        let d_same = Tensor4::full([1, 8, 2, 2], 1.0);
        let out = fuse_features(&e, &d_same, FusionMode::Residual, None).unwrap();
        assert_eq!(out, d_same);
    }

    #[test]
    fn misaligned_spatial_dims_rejected() {
        let e = Tensor4::<f32>::zeros([1, 8, 4, 4]);
        let d = Tensor4::zeros([1, 8, 2, 2]);
        assert!(matches!(fuse_features(&e, &d, FusionMode::Concat, None), Err(Error::Shape(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let e = wave([2, 6, 3, 3], 0.2);
        let d = wave([2, 3, 3, 3], 0.9);
        let p = wave([6, 3, 1, 1], 1.7);
        for mode in [FusionMode::Residual, FusionMode::Concat] {
            let proj = (mode == FusionMode::Residual).then_some(&p);
            let err_e = check_op(
                &e,
                |e| fuse_features(e, &d, mode, proj).unwrap(),
                |_, g| fuse_features_backward(6, &d, mode, proj, g).unwrap().encoder,
                1.0,
                1,
            );
            let err_d = check_op(
                &d,
                |d| fuse_features(&e, d, mode, proj).unwrap(),
                |d, g| fuse_features_backward(6, d, mode, proj, g).unwrap().coarse,
                1.0,
                2,
            );
            assert!(err_e < 1e-9 && err_d < 1e-9, "{mode}: {err_e} {err_d}");
        }
        let err_p = check_op(
            &p,
            |p| fuse_features(&e, &d, FusionMode::Residual, Some(p)).unwrap(),
            |p, g| fuse_features_backward(6, &d, FusionMode::Residual, Some(p), g).unwrap().projection.unwrap(),
            1.0,
            3,
        );
        assert!(err_p < 1e-9, "{err_p}");
    }
}
