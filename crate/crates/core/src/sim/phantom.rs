use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::tensor::{Scalar, Tensor4};

/// Ranges are inclusive `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSpec {
    pub height: usize,
    pub width: usize,
    pub spot_count: [usize; 2],
    pub spot_sigma: [f64; 2],
    pub filament_count: [usize; 2],
    /// Gaussian cross-section sigma of filaments, pixels.
    pub filament_width: [f64; 2],
    pub intensity: [f64; 2],
    pub background: f64,
    /// Channel-1 spot brightness relative to channel 0.
    pub secondary_spot_gain: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            height: 96,
            width: 96,
            spot_count: [6, 14],
            spot_sigma: [1.0, 3.0],
            filament_count: [3, 7],
            filament_width: [0.7, 1.4],
            intensity: [0.3, 0.9],
            background: 0.05,
            secondary_spot_gain: 0.35,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.height == 0 || self.width == 0 {
            errs.push(format!("size {}x{} is empty", self.width, self.height));
        }
        for (name, [lo, hi]) in [("spot_count", self.spot_count), ("filament_count", self.filament_count)] {
            if lo > hi {
                errs.push(format!("{name} range [{lo}, {hi}] is inverted"));
            }
        }
        for (name, [lo, hi]) in [
            ("spot_sigma", self.spot_sigma),
            ("filament_width", self.filament_width),
        ] {
            if !(lo > 0.0 && lo <= hi) {
                errs.push(format!("{name} range [{lo}, {hi}] must be positive and ordered"));
            }
        }
        let [lo, hi] = self.intensity;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            errs.push(format!("intensity range [{lo}, {hi}] must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.background) {
            errs.push(format!("background {} outside [0, 1]", self.background));
        }
        if !(self.secondary_spot_gain >= 0.0) {
            errs.push("secondary_spot_gain must be non-negative".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spot {
    pub cy: f64,
    pub cx: f64,
    pub sigma: f64,
    pub intensity: f64,
}

/// Quadratic Bezier curve rendered with a Gaussian cross-section.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Filament {
    pub control: [(f64, f64); 3],
    pub width: f64,
    pub intensity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomLayout {
    pub height: usize,
    pub width: usize,
    pub background: f64,
    pub secondary_spot_gain: f64,
    pub spots: Vec<Spot>,
    pub filaments: Vec<Filament>,
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

pub fn layout_phantom(spec: &PhantomSpec, seed: u64) -> Result<PhantomLayout> {
    spec.validate()?;
    let mut rng = rng_for(seed);
    let (h, w) = (spec.height as f64, spec.width as f64);
    let n_spots = rng.random_range(spec.spot_count[0]..=spec.spot_count[1]);
    let spots = (0..n_spots)
        .map(|_| Spot {
            cy: rng.random_range(0.0..h),
            cx: rng.random_range(0.0..w),
            sigma: uniform(&mut rng, spec.spot_sigma),
            intensity: uniform(&mut rng, spec.intensity),
        })
        .collect();
    let n_fil = rng.random_range(spec.filament_count[0]..=spec.filament_count[1]);
    let filaments = (0..n_fil)
        .map(|_| {
            let mut point = || (rng.random_range(-0.1 * h..1.1 * h), rng.random_range(-0.1 * w..1.1 * w));
            let control = [point(), point(), point()];
            Filament {
                control,
                width: uniform(&mut rng, spec.filament_width),
                intensity: uniform(&mut rng, spec.intensity),
            }
        })
        .collect();
    Ok(PhantomLayout {
        height: spec.height,
        width: spec.width,
        background: spec.background,
        secondary_spot_gain: spec.secondary_spot_gain,
        spots,
        filaments,
    })
}

const CURVE_SEGMENTS: usize = 48;

fn bezier(c: &[(f64, f64); 3], t: f64) -> (f64, f64) {
    let u = 1.0 - t;
    (
        u * u * c[0].0 + 2.0 * u * t * c[1].0 + t * t * c[2].0,
        u * u * c[0].1 + 2.0 * u * t * c[1].1 + t * t * c[2].1,
    )
}

fn segment_dist2(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dy, dx) = (b.0 - a.0, b.1 - a.1);
    let len2 = dy * dy + dx * dx;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dy + (p.1 - a.1) * dx) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qy, qx) = (a.0 + t * dy - p.0, a.1 + t * dx - p.1);
    qy * qy + qx * qx
}

/// Channel 0: background plus Gaussian spots. Channel 1: background plus filaments plus
/// the same spots scaled by `secondary_spot_gain`. Both clipped to `[0, 1]`.
pub fn render_phantom<T: Scalar>(layout: &PhantomLayout) -> Tensor4<T> {
    let (h, w) = (layout.height, layout.width);
    let mut nuclei = vec![layout.background; h * w];
    let mut actin = vec![layout.background; h * w];
    for s in &layout.spots {
        let reach = (4.0 * s.sigma).ceil();
        let y0 = (s.cy - reach).floor().max(0.0) as usize;
        let y1 = ((s.cy + reach).ceil() as usize).min(h.saturating_sub(1));
        let x0 = (s.cx - reach).floor().max(0.0) as usize;
        let x1 = ((s.cx + reach).ceil() as usize).min(w.saturating_sub(1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d2 = (y as f64 - s.cy).powi(2) + (x as f64 - s.cx).powi(2);
                let v = s.intensity * (-d2 / (2.0 * s.sigma * s.sigma)).exp();
                nuclei[y * w + x] += v;
                actin[y * w + x] += layout.secondary_spot_gain * v;
            }
        }
    }
    for f in &layout.filaments {
        let pts: Vec<(f64, f64)> = (0..=CURVE_SEGMENTS)
            .map(|i| bezier(&f.control, i as f64 / CURVE_SEGMENTS as f64))
            .collect();
        let reach2 = (4.0 * f.width).powi(2);
        for y in 0..h {
            for x in 0..w {
                let p = (y as f64, x as f64);
                let d2 = pts
                    .windows(2)
                    .map(|s| segment_dist2(p, s[0], s[1]))
                    .fold(f64::INFINITY, f64::min);
                if d2 < reach2 {
                    actin[y * w + x] += f.intensity * (-d2 / (2.0 * f.width * f.width)).exp();
                }
            }
        }
    }
    let data = nuclei
        .into_iter()
        .chain(actin)
        .map(|v| T::of(v.clamp(0.0, 1.0)))
        .collect();
    Tensor4::from_vec([1, 2, h, w], data).expect("two planes of h * w")
}

pub fn phantom_image<T: Scalar>(spec: &PhantomSpec, seed: u64) -> Result<Tensor4<T>> {
    Ok(render_phantom(&layout_phantom(spec, seed)?))
}
