use std::path::{Path, PathBuf};

use nudc::io::{import_tiff, import_tiff_channels, normalize_u16};
use nudc::Error;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn expected_payload() -> Vec<u16> {
    std::fs::read(fixture("gray16_8x8.u16le"))
        .unwrap()
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .collect()
}

#[test]
fn uncompressed_fixture_decodes_to_known_payload() {
    let img = import_tiff(&fixture("gray16_8x8.tif")).unwrap();
    assert_eq!((img.width, img.height, img.channels), (8, 8, 1));
    assert_eq!(img.samples, expected_payload());
}

#[test]
fn lzw_fixture_matches_uncompressed() {
    let plain = import_tiff(&fixture("gray16_8x8.tif")).unwrap();
    let lzw = import_tiff(&fixture("gray16_8x8_lzw.tif")).unwrap();
    assert_eq!(lzw, plain);
}

#[test]
fn pages_become_channels() {
    let img = import_tiff(&fixture("gray16_8x8_2page_lzw.tif")).unwrap();
    assert_eq!(img.channels, 2);
    let expected = expected_payload();
    assert_eq!(&img.samples[..64], &expected[..]);
    let inverted: Vec<u16> = expected.iter().map(|v| 65535 - v).collect();
    assert_eq!(&img.samples[64..], &inverted[..]);
}

#[test]
fn per_channel_files_concatenate() {
    let a = fixture("gray16_8x8.tif");
    let b = fixture("gray16_8x8_lzw.tif");
    let img = import_tiff_channels(&[&a, &b]).unwrap();
    assert_eq!(img.channels, 2);
    assert_eq!(img.samples[..64], img.samples[64..]);
    let t: nudc::Tensor4<f64> = normalize_u16(&img);
    assert_eq!(t.shape(), [1, 2, 8, 8]);
}

#[test]
fn eight_bit_rejected_naming_the_tag() {
    match import_tiff(&fixture("gray8_8x8.tif")) {
        Err(Error::Unsupported(msg)) => assert!(msg.contains("BitsPerSample"), "{msg}"),
        other => panic!("expected unsupported-format error, got {other:?}"),
    }
}

#[test]
fn corrupt_lzw_is_decode_error() {
    let r = import_tiff(&fixture("gray16_8x8_lzw_corrupt.tif"));
    assert!(matches!(r, Err(Error::Decode(_))), "{r:?}");
}

#[test]
fn missing_file_is_io_error() {
    assert!(matches!(import_tiff(&fixture("absent.tif")), Err(Error::Io { .. })));
}
