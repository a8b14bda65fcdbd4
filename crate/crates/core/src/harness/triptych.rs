use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::model::{predict, NestedModel};
use crate::tensor::Tensor4;

pub const GUTTER: u32 = 4;

/// Min-max scales the whole panel (all channels jointly) to `[0, 255]`.
fn panel_bytes(x: &Tensor4<f32>) -> Vec<Vec<u8>> {
    let (lo, hi) = x
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    (0..x.channels())
        .map(|c| {
            x.plane(0, c)
                .iter()
                .map(|&v| ((v - lo) * scale).round().clamp(0.0, 255.0) as u8)
                .collect()
        })
        .collect()
}

/// Input | prediction | ground truth, separated by black gutters. Two channels render as
/// magenta (channel 0) and green (channel 1); one channel renders as grey.
pub fn render_triptych(input: &Tensor4<f32>, prediction: &Tensor4<f32>, truth: &Tensor4<f32>) -> Result<RgbImage> {
    let [n, c, h, w] = input.shape();
    if n != 1 || !(1..=2).contains(&c) || prediction.shape() != input.shape() || truth.shape() != input.shape() {
        return Err(Error::Shape(format!(
            "triptych needs three equal single-item 1- or 2-channel images, got {:?}, {:?}, {:?}",
            input.shape(),
            prediction.shape(),
            truth.shape()
        )));
    }
    let (h32, w32) = (h as u32, w as u32);
    let mut canvas = RgbImage::new(3 * w32 + 2 * GUTTER, h32);
    for (k, panel) in [input, prediction, truth].into_iter().enumerate() {
        let planes = panel_bytes(panel);
        let x0 = k as u32 * (w32 + GUTTER);
        for y in 0..h {
            for x in 0..w {
                let a = planes[0][y * w + x];
                let b = planes.get(1).map_or(a, |p| p[y * w + x]);
                let px = if c == 1 { Rgb([a, a, a]) } else { Rgb([a, b, a]) };
                canvas.put_pixel(x0 + x as u32, y as u32, px);
            }
        }
    }
    Ok(canvas)
}

pub fn export_triptych(model: &NestedModel<f32>, input: &Tensor4<f32>, truth: &Tensor4<f32>, path: &Path) -> Result<()> {
    let pred = predict(model, input)?;
    let img = render_triptych(input, &pred, truth)?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(format!("writing {}", path.display()), io),
            other => Error::Decode(format!("encoding {}: {other}", path.display())),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(salt: f32) -> Tensor4<f32> {
        Tensor4::from_fn([1, 2, 96, 96], |[_, c, y, x]| ((c * 31 + y * 7 + x) as f32 * 0.01 + salt).sin() * 0.5 + 0.5)
    }

    #[test]
    fn canvas_layout() {
        let a = img(0.0);
        let t = render_triptych(&a, &a, &a).unwrap();
        assert_eq!(t.dimensions(), (288 + 2 * GUTTER, 96));
        assert_eq!(*t.get_pixel(96, 10), Rgb([0, 0, 0]));
    }

    #[test]
    fn identical_panels_render_identically() {
        let a = img(0.3);
        let t = render_triptych(&a, &a, &a).unwrap();
        for y in 0..96 {
            for x in 0..96 {
                let p0 = t.get_pixel(x, y);
                for k in 1..3 {
                    let pk = t.get_pixel(x + k * (96 + GUTTER), y);
                    for ch in 0..3 {
                        assert!((p0[ch] as i32 - pk[ch] as i32).abs() <= 1);
                    }
                }
            }
        }
    }

    #[test]
    fn panels_normalised_independently() {
        let a = img(0.0);
        let dim = a.map(|v| v * 0.1);
        let t = render_triptych(&dim, &a, &a).unwrap();
        let t2 = render_triptych(&a, &a, &a).unwrap();
        assert_eq!(t, t2);
    }

    #[test]
    fn constant_panel_is_black() {
        let flat = Tensor4::<f32>::full([1, 1, 8, 8], 0.4);
        let t = render_triptych(&flat, &flat, &flat).unwrap();
        assert!(t.pixels().all(|p| *p == Rgb([0, 0, 0])));
    }

    #[test]
    fn mismatched_panels_rejected() {
        let a = img(0.0);
        let b = Tensor4::<f32>::zeros([1, 2, 96, 95]);
        assert!(matches!(render_triptych(&a, &b, &a), Err(Error::Shape(_))));
    }
}
