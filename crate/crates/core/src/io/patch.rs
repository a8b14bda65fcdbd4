//! Quadrant segmentation of full 696x520 fields into four 348x260 patches.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

pub const PATCH_WIDTH: usize = 348;
pub const PATCH_HEIGHT: usize = 260;

/// Splits a `(n, c, 520, 696)` tensor into quadrants ordered top-left, top-right,
/// bottom-left, bottom-right.
pub fn patchify<T: Scalar>(x: &Tensor4<T>) -> Result<[Tensor4<T>; 4]> {
    if (x.height(), x.width()) != (2 * PATCH_HEIGHT, 2 * PATCH_WIDTH) {
        return Err(Error::Shape(format!(
            "patchify expects {}x{} (w x h), got {}x{}",
            2 * PATCH_WIDTH,
            2 * PATCH_HEIGHT,
            x.width(),
            x.height()
        )));
    }
    let q = |qy: usize, qx: usize| x.crop(qy * PATCH_HEIGHT, qx * PATCH_WIDTH, PATCH_HEIGHT, PATCH_WIDTH);
    Ok([q(0, 0)?, q(0, 1)?, q(1, 0)?, q(1, 1)?])
}

/// Inverse of [`patchify`].
pub fn reassemble<T: Scalar>(patches: &[Tensor4<T>; 4]) -> Result<Tensor4<T>> {
    let [n, c, h, w] = patches[0].shape();
    if (h, w) != (PATCH_HEIGHT, PATCH_WIDTH) || patches.iter().any(|p| p.shape() != [n, c, h, w]) {
        return Err(Error::Shape("reassemble needs four equal 348x260 patches".into()));
    }
    let mut out = Tensor4::zeros([n, c, 2 * h, 2 * w]);
    for (k, p) in patches.iter().enumerate() {
        let (oy, ox) = ((k / 2) * h, (k % 2) * w);
        for b in 0..n {
            for ch in 0..c {
                let src = p.plane(b, ch);
                let dst = out.plane_mut(b, ch);
                for y in 0..h {
                    dst[(oy + y) * 2 * w + ox..(oy + y) * 2 * w + ox + w].copy_from_slice(&src[y * w..(y + 1) * w]);
                }
            }
        }
    }
    Ok(out)
}
