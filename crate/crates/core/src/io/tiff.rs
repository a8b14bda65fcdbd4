//! Import of 16-bit grayscale TIFFs (strips, no compression or LZW). Each page is one channel.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use tiff::decoder::{ChunkType, Decoder, DecodingResult};
use tiff::tags::Tag;
use tiff::{ColorType, TiffError};

use crate::error::{Error, Result};
use crate::io::img16::Img16;

const COMPRESSION_NONE: u32 = 1;
const COMPRESSION_LZW: u32 = 5;

fn decode_err(path: &Path, e: TiffError) -> Error {
    match e {
        TiffError::IoError(source)
            if matches!(source.kind(), std::io::ErrorKind::InvalidData | std::io::ErrorKind::UnexpectedEof) =>
        {
            Error::Decode(format!("{}: {source}", path.display()))
        }
        TiffError::IoError(source) => Error::io(format!("reading {}", path.display()), source),
        TiffError::UnsupportedError(u) => Error::Unsupported(format!("{}: {u}", path.display())),
        other => Error::Decode(format!("{}: {other}", path.display())),
    }
}

fn check_page<R: std::io::Read + std::io::Seek>(dec: &mut Decoder<R>, path: &Path) -> Result<()> {
    let unsupported = |what: String| Error::Unsupported(format!("{}: {what}", path.display()));
    if dec.get_chunk_type() == ChunkType::Tile {
        return Err(unsupported("TileWidth present; only strip layout is supported".into()));
    }
    let compression = dec
        .find_tag_unsigned::<u32>(Tag::Compression)
        .map_err(|e| decode_err(path, e))?
        .unwrap_or(COMPRESSION_NONE);
    if compression != COMPRESSION_NONE && compression != COMPRESSION_LZW {
        return Err(unsupported(format!("Compression={compression}")));
    }
    match dec.colortype().map_err(|e| decode_err(path, e))? {
        ColorType::Gray(16) => Ok(()),
        ColorType::Gray(bits) => Err(unsupported(format!("BitsPerSample={bits}"))),
        other => Err(unsupported(format!("PhotometricInterpretation/SamplesPerPixel giving {other:?}"))),
    }
}

/// Decodes every page of a 16-bit grayscale TIFF; page `k` becomes channel `k`.
pub fn import_tiff(path: &Path) -> Result<Img16> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut dec = Decoder::new(BufReader::new(file)).map_err(|e| decode_err(path, e))?;
    let mut pages: Vec<Img16> = Vec::new();
    loop {
        check_page(&mut dec, path)?;
        let (w, h) = dec.dimensions().map_err(|e| decode_err(path, e))?;
        let samples = match dec.read_image().map_err(|e| decode_err(path, e))? {
            DecodingResult::U16(v) => v,
            _ => return Err(Error::Unsupported(format!("{}: BitsPerSample is not 16", path.display()))),
        };
        let page = Img16::new(w as usize, h as usize, 1, samples)
            .map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?;
        pages.push(page);
        if !dec.more_images() {
            break;
        }
        dec.next_image().map_err(|e| decode_err(path, e))?;
    }
    let mut iter = pages.into_iter();
    let first = iter.next().expect("at least one page decoded");
    iter.try_fold(first, |acc, p| acc.concat_channels(&p))
}

/// Imports one file per channel and concatenates them, e.g. a nuclear and a cytoskeletal stain.
pub fn import_tiff_channels(paths: &[&Path]) -> Result<Img16> {
    let (first, rest) = paths
        .split_first()
        .ok_or_else(|| Error::Config("no TIFF files given".into()))?;
    rest.iter()
        .try_fold(import_tiff(first)?, |acc, p| acc.concat_channels(&import_tiff(p)?))
}
