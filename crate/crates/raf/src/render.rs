//! PNG previews of feature channels.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use raf_core::ImageChannels;

use crate::error::{Error, Result};

/// Interleaved RGB bytes; a missing blue plane is written as 0.
pub fn rgb_pixels(channels: &ImageChannels) -> Vec<u8> {
    let n = channels.resolution * channels.resolution;
    let mut out = Vec::with_capacity(3 * n);
    for i in 0..n {
        out.push(channels.red[i]);
        out.push(channels.green[i]);
        out.push(channels.blue.as_ref().map_or(0, |b| b[i]));
    }
    out
}

pub fn write_png(path: &Path, channels: &ImageChannels) -> Result<()> {
    let file = File::create(path).map_err(Error::io(path))?;
    let side = channels.resolution as u32;
    let mut encoder = png::Encoder::new(BufWriter::new(file), side, side);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let png_err = |source| Error::Png { path: path.into(), source };
    let mut writer = encoder.write_header().map_err(png_err)?;
    writer.write_image_data(&rgb_pixels(channels)).map_err(png_err)?;
    writer.finish().map_err(png_err)
}
