//! 8-bit binary PGM (P5) files.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};

use crate::error::{Error, Result};

/// An 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::Validation(format!(
                "{width}x{height} image cannot hold {} pixels",
                pixels.len()
            )));
        }
        Ok(GrayImage { width, height, pixels })
    }
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let encoder = PnmEncoder::new(BufWriter::new(file)).with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
    encoder
        .write_image(&img.pixels, img.width as u32, img.height as u32, ExtendedColorType::L8)
        .map_err(|e| Error::parse(path, format!("cannot encode PGM: {e}")))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let mut reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    reader.set_format(ImageFormat::Pnm);
    let img = reader.decode().map_err(|e| Error::parse(path, format!("malformed PGM: {e}")))?;
    if img.color() != image::ColorType::L8 {
        return Err(Error::parse(path, format!("expected 8-bit grayscale, found {:?}", img.color())));
    }
    let gray = img.into_luma8();
    let (w, h) = gray.dimensions();
    GrayImage::new(w as usize, h as usize, gray.into_raw())
}
