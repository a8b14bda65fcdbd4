//! Image persistence and the dataset protocol.

pub mod img16;
pub mod manifest;
pub mod patch;
pub mod tiff;

pub use img16::{normalize_u16, read_img16, write_img16, Img16};
pub use manifest::{split_manifest, DatasetManifest, DatasetRecord, PairRecord, Split, SyntheticManifest};
pub use patch::{patchify, reassemble, PATCH_HEIGHT, PATCH_WIDTH};
pub use self::tiff::{import_tiff, import_tiff_channels};
