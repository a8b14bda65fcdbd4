use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pad::reflect_index;
use crate::rng::rng_for;
use crate::tensor::{Scalar, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsfSpec {
    /// Distance from the focal plane, micrometres.
    pub z: f64,
    /// Kernel sigma in pixels per micrometre of defocus.
    pub sigma_per_um: f64,
    /// Kernel half-width; `None` means `ceil(3 sigma)`.
    pub radius: Option<usize>,
    /// Sigmas below this give the identity kernel.
    pub min_sigma: f64,
}

impl Default for PsfSpec {
    fn default() -> Self {
        PsfSpec {
            z: 0.0,
            sigma_per_um: 0.15,
            radius: None,
            min_sigma: 0.05,
        }
    }
}

impl PsfSpec {
    pub fn sigma(&self) -> f64 {
        self.sigma_per_um * self.z.abs()
    }

    pub fn at(&self, z: f64) -> PsfSpec {
        PsfSpec { z, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_per_um > 0.0) || !self.sigma_per_um.is_finite() {
            return Err(Error::Config(format!("sigma_per_um must be positive, got {}", self.sigma_per_um)));
        }
        if !self.z.is_finite() {
            return Err(Error::Config(format!("z must be finite, got {}", self.z)));
        }
        if !(self.min_sigma >= 0.0) {
            return Err(Error::Config(format!("min_sigma must be non-negative, got {}", self.min_sigma)));
        }
        Ok(())
    }
}

/// Square `(2r + 1)^2` kernel, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub radius: usize,
    pub weights: Vec<f64>,
}

impl Kernel {
    pub fn identity() -> Self {
        Kernel {
            radius: 0,
            weights: vec![1.0],
        }
    }

    pub fn size(&self) -> usize {
        2 * self.radius + 1
    }

    /// Weight at offset `(dy, dx)` from the centre.
    pub fn at(&self, dy: isize, dx: isize) -> f64 {
        let r = self.radius as isize;
        self.weights[((dy + r) * (2 * r + 1) + dx + r) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

pub fn gaussian_psf(spec: &PsfSpec) -> Result<Kernel> {
    spec.validate()?;
    let sigma = spec.sigma();
    if sigma < spec.min_sigma {
        return Ok(Kernel::identity());
    }
    let r = spec.radius.unwrap_or((3.0 * sigma).ceil() as usize);
    let n = 2 * r + 1;
    let mut weights = Vec::with_capacity(n * n);
    for dy in -(r as isize)..=r as isize {
        for dx in -(r as isize)..=r as isize {
            weights.push((-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(Kernel { radius: r, weights })
}

/// Per-channel convolution with reflect boundaries, plus `N(0, noise_sigma)` noise, clipped to `[0, 1]`.
pub fn apply_defocus<T: Scalar>(y: &Tensor4<T>, kernel: &Kernel, noise_sigma: f64, seed: u64) -> Result<Tensor4<T>> {
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::Config(format!("noise_sigma must be non-negative, got {noise_sigma}")));
    }
    let [n, c, h, w] = y.shape();
    if h == 0 || w == 0 {
        return Err(Error::Shape("cannot blur an empty image".into()));
    }
    let r = kernel.radius as isize;
    let rows: Vec<usize> = (-r..h as isize + r).map(|i| reflect_index(i, h)).collect();
    let cols: Vec<usize> = (-r..w as isize + r).map(|i| reflect_index(i, w)).collect();
    let size = kernel.size();
    let mut out = Tensor4::zeros(y.shape());
    for b in 0..n {
        for ch in 0..c {
            let src: Vec<f64> = y.plane(b, ch).iter().map(|v| v.as_f64()).collect();
            let dst = out.plane_mut(b, ch);
            for oy in 0..h {
                for ox in 0..w {
                    let mut acc = 0.0;
                    for ky in 0..size {
                        let row = &src[rows[oy + ky] * w..];
                        let wrow = &kernel.weights[ky * size..(ky + 1) * size];
                        for (kx, &wt) in wrow.iter().enumerate() {
                            acc += wt * row[cols[ox + kx]];
                        }
                    }
                    dst[oy * w + ox] = T::of(acc);
                }
            }
        }
    }
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = rng_for(seed);
        for v in out.data_mut() {
            *v = T::of(v.as_f64() + normal.sample(&mut rng));
        }
    }
    for v in out.data_mut() {
        *v = v.max(T::zero()).min(T::one());
    }
    Ok(out)
}
