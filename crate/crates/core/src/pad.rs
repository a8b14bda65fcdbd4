//! Half-sample symmetric ("reflect") boundary extension: `... c b a | a b c ... x y z | z y x ...`.
//!
//! With a symmetric kernel this extension preserves the mean of the image.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

/// Maps a possibly out-of-range index onto `[0, n)` by repeated mirroring.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Extends every plane by `bottom` rows and `right` columns.
pub fn reflect_pad<T: Scalar>(x: &Tensor4<T>, bottom: usize, right: usize) -> Result<Tensor4<T>> {
    let [n, c, h, w] = x.shape();
    if h == 0 || w == 0 {
        return Err(Error::Shape("cannot pad an empty plane".into()));
    }
    if bottom == 0 && right == 0 {
        return Ok(x.clone());
    }
    let (ph, pw) = (h + bottom, w + right);
    let cols: Vec<usize> = (0..pw).map(|x| reflect_index(x as isize, w)).collect();
    let mut out = Tensor4::zeros([n, c, ph, pw]);
    for b in 0..n {
        for ch in 0..c {
            let src = x.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for y in 0..ph {
                let sy = reflect_index(y as isize, h);
                let row = &src[sy * w..(sy + 1) * w];
                for (xo, &sx) in cols.iter().enumerate() {
                    dst[y * pw + xo] = row[sx];
                }
            }
        }
    }
    Ok(out)
}

/// Pads bottom/right so both spatial dims become multiples of `multiple`.
/// Returns the padded tensor and the original `(h, w)` for cropping back.
pub fn pad_to_multiple<T: Scalar>(x: &Tensor4<T>, multiple: usize) -> Result<(Tensor4<T>, (usize, usize))> {
    let [_, _, h, w] = x.shape();
    let up = |v: usize| v.div_ceil(multiple) * multiple;
    let padded = reflect_pad(x, up(h) - h, up(w) - w)?;
    Ok((padded, (h, w)))
}
