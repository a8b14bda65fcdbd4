//! `IM16` container: magic, u32 LE version/width/height/channels, then u16 LE samples, channel-planar.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

pub const MAGIC: &[u8; 4] = b"IM16";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;
/// Refuse headers declaring more samples than this (guards against absurd allocations).
const MAX_SAMPLES: u64 = 1 << 31;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Img16 {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub samples: Vec<u16>,
}

impl Img16 {
    pub fn new(width: usize, height: usize, channels: usize, samples: Vec<u16>) -> Result<Self> {
        if samples.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{width}x{height}x{channels} image needs {} samples, got {}",
                width * height * channels,
                samples.len()
            )));
        }
        Ok(Img16 {
            width,
            height,
            channels,
            samples,
        })
    }

    /// Quantises a single-item tensor in `[0, 1]` with round-half-up.
    pub fn from_tensor<T: Scalar>(x: &Tensor4<T>) -> Result<Self> {
        let [n, c, h, w] = x.shape();
        if n != 1 {
            return Err(Error::Shape(format!("expected a single image, got batch of {n}")));
        }
        let mut samples = Vec::with_capacity(x.len());
        for (i, &v) in x.data().iter().enumerate() {
            let v = v.as_f64();
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Contract(format!("sample {i} is {v}, outside [0, 1]")));
            }
            samples.push((v * 65535.0 + 0.5).floor() as u16);
        }
        Img16::new(w, h, c, samples)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 2 * self.samples.len());
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.width as u32, self.height as u32, self.channels as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for s in &self.samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(bytes.len() as u64, "truncated header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::format(0, "bad magic, expected IM16"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
        let version = word(0);
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let (width, height, channels) = (word(1) as u64, word(2) as u64, word(3) as u64);
        let count = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(channels))
            .filter(|&v| v <= MAX_SAMPLES)
            .ok_or_else(|| Error::format(8, format!("dimensions {width}x{height}x{channels} overflow")))?;
        let payload = &bytes[HEADER_LEN..];
        let expected = 2 * count as usize;
        if payload.len() < expected {
            return Err(Error::format(
                bytes.len() as u64,
                format!("truncated payload: {} of {expected} bytes", payload.len()),
            ));
        }
        if payload.len() > expected {
            return Err(Error::format(
                (HEADER_LEN + expected) as u64,
                format!("{} trailing bytes after payload", payload.len() - expected),
            ));
        }
        let samples = payload
            .chunks_exact(2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .collect();
        Img16::new(width as usize, height as usize, channels as usize, samples)
    }

    /// Appends the channels of `other` after those of `self`.
    pub fn concat_channels(&self, other: &Img16) -> Result<Img16> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::Shape(format!(
                "cannot stack {}x{} and {}x{} channels",
                self.width, self.height, other.width, other.height
            )));
        }
        let mut samples = self.samples.clone();
        samples.extend_from_slice(&other.samples);
        Img16::new(self.width, self.height, self.channels + other.channels, samples)
    }
}

/// `sample / 65535` into a `(1, c, h, w)` tensor.
pub fn normalize_u16<T: Scalar>(img: &Img16) -> Tensor4<T> {
    let data = img.samples.iter().map(|&s| T::of(s as f64 / 65535.0)).collect();
    Tensor4::from_vec([1, img.channels, img.height, img.width], data).expect("sample count checked on construction")
}

pub fn write_img16<T: Scalar>(x: &Tensor4<T>, path: &Path) -> Result<()> {
    let img = Img16::from_tensor(x)?;
    fs::write(path, img.to_bytes()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_img16<T: Scalar>(path: &Path) -> Result<Tensor4<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(normalize_u16(&Img16::from_bytes(&bytes)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_image_layout() {
        let x = Tensor4::<f32>::zeros([1, 2, 4, 4]);
        let bytes = Img16::from_tensor(&x).unwrap().to_bytes();
        assert_eq!(bytes.len(), 16 + 4 + 64);
        assert_eq!(&bytes[..4], b"IM16");
        assert_eq!(&bytes[4..20], &[1, 0, 0, 0, 4, 0, 0, 0, 4, 0, 0, 0, 2, 0, 0, 0]);
        let back: Tensor4<f32> = normalize_u16(&Img16::from_bytes(&bytes).unwrap());
        assert_eq!(back, x);
    }

    #[test]
    fn endpoints_and_rounding() {
        let x = Tensor4::<f64>::from_vec([1, 1, 1, 4], vec![0.0, 1.0, 0.5, 1.5 / 65535.0]).unwrap();
        let img = Img16::from_tensor(&x).unwrap();
        // 0.5 * 65535 = 32767.5 rounds up; 1.5 rounds up to 2
        assert_eq!(img.samples, vec![0, 65535, 32768, 2]);
        let back: Tensor4<f64> = normalize_u16(&img);
        assert_eq!(back.data()[1], 1.0);
    }

    #[test]
    fn normalize_examples() {
        let img = Img16::new(3, 1, 1, vec![0, 65535, 32768]).unwrap();
        let t: Tensor4<f64> = normalize_u16(&img);
        assert_eq!(t.data()[0], 0.0);
        assert_eq!(t.data()[1], 1.0);
        assert!((t.data()[2] - 0.500_007_6).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_rejected() {
        let x = Tensor4::<f32>::full([1, 1, 2, 2], 1.01);
        assert!(matches!(Img16::from_tensor(&x), Err(Error::Contract(_))));
        let x = Tensor4::<f32>::full([1, 1, 2, 2], f32::NAN);
        assert!(Img16::from_tensor(&x).is_err());
    }

    #[test]
    fn malformed_headers_report_offsets() {
        let good = Img16::new(2, 2, 1, vec![1, 2, 3, 4]).unwrap().to_bytes();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(Img16::from_bytes(&bad_magic), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(Img16::from_bytes(&good[..10]), Err(Error::Format { offset: 10, .. })));
        assert!(matches!(Img16::from_bytes(&good[..25]), Err(Error::Format { offset: 25, .. })));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(Img16::from_bytes(&long), Err(Error::Format { offset: 28, .. })));
        let mut huge = good.clone();
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(Img16::from_bytes(&huge), Err(Error::Format { offset: 8, .. })));
        let mut v2 = good;
        v2[4] = 2;
        assert!(matches!(Img16::from_bytes(&v2), Err(Error::Version { found: 2, expected: 1 })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.im16");
        let x = Tensor4::<f32>::from_fn([1, 2, 3, 5], |[_, c, y, x]| ((c * 15 + y * 5 + x) as f32) / 29.0);
        write_img16(&x, &p).unwrap();
        let back: Tensor4<f32> = read_img16(&p).unwrap();
        assert!(back.max_abs_diff(&x) <= 1.0 / 65535.0);
        assert!(matches!(read_img16::<f32>(&dir.path().join("missing")), Err(Error::Io { .. })));
    }

    proptest::proptest! {
        #[test]
        fn round_trip_within_one_lsb(v in proptest::collection::vec(0.0f64..=1.0, 1..200)) {
            let n = v.len();
            let x = Tensor4::from_vec([1, 1, 1, n], v).unwrap();
            let img = Img16::from_bytes(&Img16::from_tensor(&x).unwrap().to_bytes()).unwrap();
            let back: Tensor4<f64> = normalize_u16(&img);
            proptest::prop_assert!(back.max_abs_diff(&x) <= 1.0 / 65535.0);
        }
    }
}
