"""Regenerates the TIFF fixtures with Pillow (an encoder independent of the crate under test)."""
import pathlib

import numpy as np
from PIL import Image

HERE = pathlib.Path(__file__).parent

payload = ((np.arange(64, dtype=np.uint32) * 1021 + 7) % 65536).astype(np.uint16).reshape(8, 8)
(HERE / "gray16_8x8.u16le").write_bytes(payload.astype("<u2").tobytes())

img = Image.fromarray(payload)
img.save(HERE / "gray16_8x8.tif")
img.save(HERE / "gray16_8x8_lzw.tif", compression="tiff_lzw")
Image.fromarray((payload >> 8).astype(np.uint8)).save(HERE / "gray8_8x8.tif")

second = Image.fromarray((65535 - payload).astype(np.uint16))
img.save(HERE / "gray16_8x8_2page_lzw.tif", compression="tiff_lzw", save_all=True, append_images=[second])

# LZW file with its strip overwritten by codes that reference unassigned table entries
lzw = bytearray((HERE / "gray16_8x8_lzw.tif").read_bytes())
with Image.open(HERE / "gray16_8x8_lzw.tif") as im:
    offset = im.tag_v2[273][0]
    count = im.tag_v2[279][0]
lzw[offset:offset + count] = b"\x80\x7f\xff\xff" + b"\xff" * (count - 4)
(HERE / "gray16_8x8_lzw_corrupt.tif").write_bytes(bytes(lzw))
