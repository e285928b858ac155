use std::io::Cursor;

use image::{DynamicImage, GrayImage, ImageFormat, ImageReader, Limits, RgbImage};

use crate::buffers::{ColorImage, RegionMask};
use crate::error::{Error, Result};

use super::netpbm::MAX_SIDE;

/// 8-bit RGB PNG.
pub fn encode_png(image: &ColorImage) -> Vec<u8> {
    let (w, h) = image.dims();
    let buf = RgbImage::from_raw(w as u32, h as u32, image.to_rgb8()).expect("buffer matches dimensions");
    write(DynamicImage::ImageRgb8(buf))
}

/// Decodes any PNG as 8-bit RGB.
pub fn decode_png(bytes: &[u8]) -> Result<ColorImage> {
    let img = read(bytes)?.to_rgb8();
    let (w, h) = img.dimensions();
    ColorImage::from_rgb8(w as usize, h as usize, img.as_raw())
}

/// Grayscale PNG, white where missing.
pub fn encode_mask_png(mask: &RegionMask) -> Vec<u8> {
    let (w, h) = mask.dims();
    let raw = mask.as_slice().iter().map(|&m| if m { 255 } else { 0 }).collect();
    write(DynamicImage::ImageLuma8(GrayImage::from_raw(w as u32, h as u32, raw).expect("buffer matches dimensions")))
}

/// Pixels at half intensity or brighter are missing.
pub fn decode_mask_png(bytes: &[u8]) -> Result<RegionMask> {
    let img = read(bytes)?.to_luma8();
    let (w, h) = img.dimensions();
    RegionMask::from_bools(w as usize, h as usize, img.as_raw().iter().map(|&v| v >= 128).collect())
}

fn write(img: DynamicImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encoding");
    out.into_inner()
}

fn read(bytes: &[u8]) -> Result<DynamicImage> {
    let mut reader = ImageReader::with_format(Cursor::new(bytes), ImageFormat::Png);
    let mut limits = Limits::default();
    limits.max_image_width = Some(MAX_SIDE as u32);
    limits.max_image_height = Some(MAX_SIDE as u32);
    limits.max_alloc = Some(256 << 20);
    reader.limits(limits);
    reader.decode().map_err(|e| Error::format(format!("PNG: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantized_image_round_trips() {
        let px = (0..12).map(|i| [i as f64 / 11.0, 0.5, 1.0 - i as f64 / 11.0]).collect();
        let img = ColorImage::from_pixels(4, 3, px).unwrap().quantized();
        assert_eq!(decode_png(&encode_png(&img)).unwrap(), img);
    }

    #[test]
    fn mask_round_trips() {
        let m = RegionMask::from_bools(3, 2, vec![true, false, false, true, true, false]).unwrap();
        assert_eq!(decode_mask_png(&encode_mask_png(&m)).unwrap(), m);
    }

    #[test]
    fn garbage_rejected() {
        assert!(decode_png(b"not a png").is_err());
    }
}
