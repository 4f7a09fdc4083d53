//! 8-bit PNG (gray, RGB) and binary PGM (P5) input; PGM and PNG output.

use std::io::{BufWriter, Cursor, Write};
use std::path::Path;

use super::{BinaryMask, RasterImage};
use crate::{Error, Result};

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

/// Decode PNG or PGM (P5) bytes, sniffing the format from the magic number.
pub fn decode(bytes: &[u8]) -> Result<RasterImage> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else {
        Err(Error::UnsupportedFormat(
            "expected PNG or binary PGM (P5)".into(),
        ))
    }
}

pub fn read_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

fn decode_png(bytes: &[u8]) -> Result<RasterImage> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    // Expands palette and sub-byte gray to 8-bit samples.
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::InvalidImage("png too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf)?;
    buf.truncate(info.buffer_size());

    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!(
            "{:?}-bit PNG; only 8-bit is supported",
            info.bit_depth
        )));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let stride = info.line_size;
    let src_channels = info.color_type.samples();
    let (out_channels, keep) = match info.color_type {
        png::ColorType::Grayscale => (1u8, 1usize),
        png::ColorType::GrayscaleAlpha => (1, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (3, 3),
        png::ColorType::Indexed => {
            return Err(Error::UnsupportedFormat("unexpanded palette PNG".into()))
        }
    };

    let mut pixels = Vec::with_capacity(width * height * out_channels as usize);
    for row in buf.chunks(stride).take(height) {
        for px in row[..width * src_channels].chunks(src_channels) {
            pixels.extend_from_slice(&px[..keep]);
        }
    }
    RasterImage::new(width, height, out_channels, pixels)
}

fn decode_pgm(bytes: &[u8]) -> Result<RasterImage> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // Whitespace and `#` comments may separate header tokens.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::InvalidImage("malformed PGM header".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat(format!(
            "PGM maxval {maxval}; only 8-bit is supported"
        )));
    }
    // Exactly one whitespace byte precedes the raster.
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::InvalidImage("malformed PGM header".into()));
    }
    pos += 1;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::InvalidImage("PGM too large".into()))?;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| Error::InvalidImage("truncated PGM raster".into()))?;
    RasterImage::gray(width, height, raster.to_vec())
}

/// Mask as binary PGM with values 0 and 255.
pub fn encode_pgm(mask: &BinaryMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.bits().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

pub fn write_pgm(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(mask)).map_err(|e| Error::io(path, e))
}

pub fn encode_png(img: &RasterImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        encoder.set_color(if img.channels() == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(img.pixels())?;
    }
    Ok(out)
}

pub fn write_png(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(img)?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
