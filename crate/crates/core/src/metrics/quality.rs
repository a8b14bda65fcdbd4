use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>, data_range: f64) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Contract(format!("metric inputs differ: {:?} vs {:?}", a.shape(), b.shape())));
    }
    if !(data_range > 0.0) || !data_range.is_finite() {
        return Err(Error::Contract(format!("data_range must be positive, got {data_range}")));
    }
    if a.is_empty() {
        return Err(Error::Contract("metric inputs are empty".into()));
    }
    Ok(())
}

/// `10 log10(range^2 / MSE)` in dB over all samples; `f64::INFINITY` when the inputs are equal.
pub fn psnr<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>, data_range: f64) -> Result<f64> {
    check(a, b, data_range)?;
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    let mse = sse / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / mse).log10())
}

fn gaussian_taps() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable "valid" filtering of an `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&src[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(j, t)| t * rows[(y + j) * ow + x]).sum();
        }
    }
    out
}

/// Mean local SSIM (11x11 Gaussian window, sigma 1.5), averaged over channels and batch items.
pub fn ssim<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>, data_range: f64) -> Result<f64> {
    check(a, b, data_range)?;
    let [n, c, h, w] = a.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Contract(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let taps = gaussian_taps();
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let mut total = 0.0;
    for bi in 0..n {
        for ch in 0..c {
            let pa: Vec<f64> = a.plane(bi, ch).iter().map(|v| v.as_f64()).collect();
            let pb: Vec<f64> = b.plane(bi, ch).iter().map(|v| v.as_f64()).collect();
            let f = |v: &[f64]| filter_valid(v, h, w, &taps);
            let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<f64>>();
            let (mu_a, mu_b) = (f(&pa), f(&pb));
            let (e_aa, e_bb, e_ab) = (f(&prod(&pa, &pa)), f(&prod(&pb, &pb)), f(&prod(&pa, &pb)));
            let mut sum = 0.0;
            for i in 0..mu_a.len() {
                let (ma, mb) = (mu_a[i], mu_b[i]);
                let va = e_aa[i] - ma * ma;
                let vb = e_bb[i] - mb * mb;
                let cov = e_ab[i] - ma * mb;
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
            total += sum / mu_a.len() as f64;
        }
    }
    Ok(total / (n * c) as f64)
}
