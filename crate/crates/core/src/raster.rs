//! 8-bit and 1-bit grayscale PNG helpers.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub fn write_gray8<W: Write>(w: W, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    debug_assert_eq!(pixels.len(), width * height);
    let mut enc = png::Encoder::new(w, width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(pixels)?;
    writer.finish()?;
    Ok(())
}

pub fn write_gray1<W: Write>(w: W, width: usize, height: usize, bits: &[bool]) -> Result<()> {
    let stride = width.div_ceil(8);
    let mut packed = vec![0u8; stride * height];
    for (i, b) in bits.iter().enumerate() {
        if *b {
            let (r, c) = (i / width, i % width);
            packed[r * stride + c / 8] |= 0x80 >> (c % 8);
        }
    }
    let mut enc = png::Encoder::new(w, width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::One);
    let mut writer = enc.write_header()?;
    writer.write_image_data(&packed)?;
    writer.finish()?;
    Ok(())
}

/// Decodes any grayscale (or RGB/RGBA, converted by luma) PNG to 8-bit gray.
/// For color input the blue channel of pixels that are strongly blue is
/// treated as background: that channel is reserved for construction strokes.
pub fn read_gray8<R: Read>(mut r: R) -> Result<(usize, usize, Vec<u8>)> {
    let mut encoded = Vec::new();
    r.read_to_end(&mut encoded)?;
    let mut dec = png::Decoder::new(std::io::Cursor::new(encoded));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::format("png", "image too large"))?];
    let info = reader.next_frame(&mut buf)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let bytes = &buf[..info.buffer_size()];
    let gray = match info.color_type {
        png::ColorType::Grayscale => bytes.to_vec(),
        png::ColorType::GrayscaleAlpha => bytes.chunks_exact(2).map(|p| blend_white(p[0], p[1])).collect(),
        png::ColorType::Rgb => bytes.chunks_exact(3).map(|p| rgb_to_gray(p[0], p[1], p[2])).collect(),
        png::ColorType::Rgba => bytes
            .chunks_exact(4)
            .map(|p| blend_white(rgb_to_gray(p[0], p[1], p[2]), p[3]))
            .collect(),
        png::ColorType::Indexed => return Err(Error::format("png", "palette images unsupported after expansion")),
    };
    if gray.len() != w * h {
        return Err(Error::format("png", "unexpected buffer size"));
    }
    Ok((w, h, gray))
}

fn blend_white(v: u8, alpha: u8) -> u8 {
    let a = alpha as u32;
    ((v as u32 * a + 255 * (255 - a)) / 255) as u8
}

fn rgb_to_gray(r: u8, g: u8, b: u8) -> u8 {
    if b as i32 - (r as i32).max(g as i32) > 64 {
        // reserved construction-stroke color
        return 255;
    }
    ((r as u32 * 299 + g as u32 * 587 + b as u32 * 114) / 1000) as u8
}
