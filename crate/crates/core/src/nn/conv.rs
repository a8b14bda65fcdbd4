//! 2-D convolution via im2col + GEMM.

use crate::error::{Error, Result};
use crate::nn::param::{ParamId, ParamStore};
use crate::tensor::{Scalar, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Geometry {
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn new<T: Scalar>(input: &Tensor4<T>, weight: &Tensor4<T>, stride: usize, pad: usize) -> Result<Self> {
        let [_, c_in, h, w] = input.shape();
        let [_, wc_in, kh, kw] = weight.shape();
        if kh != kw {
            return Err(Error::Config(format!("kernel must be square, got {kh}x{kw}")));
        }
        if kh % 2 == 0 {
            return Err(Error::Config(format!("kernel size must be odd, got {kh}")));
        }
        if wc_in != c_in {
            return Err(Error::Config(format!(
                "conv expects {wc_in} input channels, input has {c_in}"
            )));
        }
        if stride == 0 {
            return Err(Error::Config("stride must be >= 1".into()));
        }
        if h + 2 * pad < kh || w + 2 * pad < kh {
            return Err(Error::Shape(format!(
                "{h}x{w} input with pad {pad} is smaller than a {kh}x{kh} kernel"
            )));
        }
        Ok(Geometry {
            c_in,
            h,
            w,
            k: kh,
            stride,
            pad,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (w + 2 * pad - kh) / stride + 1,
        })
    }

    fn rows(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    /// Valid output-x range for kernel column `kx` (input index stays inside `[0, w)`).
    fn x_range(&self, kx: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kx).div_ceil(self.stride);
        let lim = (self.w + self.pad).saturating_sub(kx); // ox*stride < lim
        let hi = lim.div_ceil(self.stride).min(self.ow);
        (lo.min(hi), hi)
    }

    fn y_range(&self, ky: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(ky).div_ceil(self.stride);
        let lim = (self.h + self.pad).saturating_sub(ky);
        let hi = lim.div_ceil(self.stride).min(self.oh);
        (lo.min(hi), hi)
    }
}

fn im2col<T: Scalar>(g: &Geometry, src: &[T], col: &mut [T]) {
    let (k, cols) = (g.k, g.cols());
    for c in 0..g.c_in {
        let plane = &src[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..k {
            let (y_lo, y_hi) = g.y_range(ky);
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut col[row * cols..(row + 1) * cols];
                dst.fill(T::zero());
                let (x_lo, x_hi) = g.x_range(kx);
                if x_lo >= x_hi {
                    continue;
                }
                for oy in y_lo..y_hi {
                    let iy = oy * g.stride + ky - g.pad;
                    let src_row = &plane[iy * g.w..(iy + 1) * g.w];
                    let out = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if g.stride == 1 {
                        let ix0 = x_lo + kx - g.pad;
                        out[x_lo..x_hi].copy_from_slice(&src_row[ix0..ix0 + (x_hi - x_lo)]);
                    } else {
                        for ox in x_lo..x_hi {
                            out[ox] = src_row[ox * g.stride + kx - g.pad];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(g: &Geometry, col: &[T], dst: &mut [T]) {
    let (k, cols) = (g.k, g.cols());
    for c in 0..g.c_in {
        let plane = &mut dst[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..k {
            let (y_lo, y_hi) = g.y_range(ky);
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &col[row * cols..(row + 1) * cols];
                let (x_lo, x_hi) = g.x_range(kx);
                if x_lo >= x_hi {
                    continue;
                }
                for oy in y_lo..y_hi {
                    let iy = oy * g.stride + ky - g.pad;
                    let dst_row = &mut plane[iy * g.w..(iy + 1) * g.w];
                    let from = &src[oy * g.ow..(oy + 1) * g.ow];
                    for (ox, &v) in from.iter().enumerate().take(x_hi).skip(x_lo) {
                        let ix = ox * g.stride + kx - g.pad;
                        dst_row[ix] = dst_row[ix] + v;
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `input` (n, c_in, h, w) with `weight` (c_out, c_in, k, k).
///
/// `bias`, when present, holds `c_out` values in any shape.
pub fn conv2d<T: Scalar>(
    input: &Tensor4<T>,
    weight: &Tensor4<T>,
    bias: Option<&Tensor4<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor4<T>> {
    let g = Geometry::new(input, weight, stride, pad)?;
    let c_out = weight.batch();
    if let Some(b) = bias {
        if b.len() != c_out {
            return Err(Error::Config(format!(
                "bias has {} entries for {} output channels",
                b.len(),
                c_out
            )));
        }
    }
    let n = input.batch();
    let (rows, cols) = (g.rows(), g.cols());
    let mut out = Tensor4::zeros([n, c_out, g.oh, g.ow]);
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); rows * cols] };
    for b in 0..n {
        let src: &[T] = if g.is_pointwise() {
            input.item(b)
        } else {
            im2col(&g, input.item(b), &mut col);
            &col
        };
        let dst = out.item_mut(b);
        if let Some(bias) = bias {
            for (co, &bv) in bias.data().iter().enumerate() {
                dst[co * cols..(co + 1) * cols].fill(bv);
            }
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        T::gemm(
            c_out,
            rows,
            cols,
            T::one(),
            weight.data(),
            rows as isize,
            1,
            src,
            cols as isize,
            1,
            beta,
            dst,
            cols as isize,
            1,
        );
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Conv2dGrads<T> {
    pub input: Tensor4<T>,
    pub weight: Tensor4<T>,
    pub bias: Tensor4<T>,
}

/// Gradients of a [`conv2d`] call given the upstream gradient `grad_out`.
///
/// The bias gradient has shape (1, c_out, 1, 1).
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor4<T>,
    weight: &Tensor4<T>,
    grad_out: &Tensor4<T>,
    stride: usize,
    pad: usize,
) -> Result<Conv2dGrads<T>> {
    let g = Geometry::new(input, weight, stride, pad)?;
    let c_out = weight.batch();
    let n = input.batch();
    if grad_out.shape() != [n, c_out, g.oh, g.ow] {
        return Err(Error::Shape(format!(
            "conv backward: upstream gradient {:?}, expected {:?}",
            grad_out.shape(),
            [n, c_out, g.oh, g.ow]
        )));
    }
    let (rows, cols) = (g.rows(), g.cols());
    let mut grad_input = Tensor4::zeros(input.shape());
    let mut grad_weight = Tensor4::zeros(weight.shape());
    let mut grad_bias = Tensor4::zeros([1, c_out, 1, 1]);
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); rows * cols] };
    let mut dcol = vec![T::zero(); rows * cols];
    for b in 0..n {
        let go = grad_out.item(b);
        for (co, gb) in grad_bias.data_mut().iter_mut().enumerate() {
            *gb = *gb + go[co * cols..(co + 1) * cols].iter().copied().sum::<T>();
        }
        let src: &[T] = if g.is_pointwise() {
            input.item(b)
        } else {
            im2col(&g, input.item(b), &mut col);
            &col
        };
        // dW (c_out x rows) += dOut (c_out x cols) * col^T (cols x rows)
        T::gemm(
            c_out,
            cols,
            rows,
            T::one(),
            go,
            cols as isize,
            1,
            src,
            1,
            cols as isize,
            T::one(),
            grad_weight.data_mut(),
            rows as isize,
            1,
        );
        // dCol (rows x cols) = W^T (rows x c_out) * dOut (c_out x cols)
        if g.is_pointwise() {
            T::gemm(
                rows,
                c_out,
                cols,
                T::one(),
                weight.data(),
                1,
                rows as isize,
                go,
                cols as isize,
                1,
                T::zero(),
                grad_input.item_mut(b),
                cols as isize,
                1,
            );
        } else {
            T::gemm(
                rows,
                c_out,
                cols,
                T::one(),
                weight.data(),
                1,
                rows as isize,
                go,
                cols as isize,
                1,
                T::zero(),
                &mut dcol,
                cols as isize,
                1,
            );
            col2im(&g, &dcol, grad_input.item_mut(b));
        }
    }
    Ok(Conv2dGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    })
}

/// A convolution layer whose weight and optional bias live in a [`ParamStore`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    /// Registers `{name}.weight` (He-initialised) and, if `bias`, a zeroed `{name}.bias`.
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        bias: bool,
        seed: u64,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel size must be odd, got {kernel}")));
        }
        let shape = [c_out, c_in, kernel, kernel];
        let weight = store.add(
            format!("{name}.weight"),
            crate::nn::init::he_init(shape, seed)?,
        )?;
        let bias = if bias {
            Some(store.add(format!("{name}.bias"), Tensor4::zeros([1, c_out, 1, 1]))?)
        } else {
            None
        };
        Ok(Conv2d {
            weight,
            bias,
            c_in,
            c_out,
            kernel,
            stride: 1,
            pad: kernel / 2,
        })
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, input: &Tensor4<T>) -> Result<Tensor4<T>> {
        conv2d(
            input,
            &store.get(self.weight).value,
            self.bias.map(|b| &store.get(b).value),
            self.stride,
            self.pad,
        )
    }

    /// Accumulates parameter gradients into `store` and returns the input gradient.
    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        input: &Tensor4<T>,
        grad_out: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let grads = conv2d_backward(input, &store.get(self.weight).value, grad_out, self.stride, self.pad)?;
        store.get_mut(self.weight).grad.add_assign(&grads.weight)?;
        if let Some(b) = self.bias {
            store.get_mut(b).grad.add_assign(&grads.bias)?;
        }
        Ok(grads.input)
    }
}
