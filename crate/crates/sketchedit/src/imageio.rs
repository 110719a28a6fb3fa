//! PNG (and other raster) IO for images, masks and conditioning layers.
//!
//! Images are 8-bit RGB scaled to `[0, 1]`; masks and sketch layers are
//! grayscale with values above 127 set; color layers are RGBA with alpha
//! above 127 marking valid pixels.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage, RgbaImage};
use sketchedit_core::color::ColorLayer;
use sketchedit_core::raster::clamp01;
use sketchedit_core::{BinaryMask, RasterImage};

use crate::error::{AppError, Result};

fn decode(bytes: &[u8], context: &str) -> Result<DynamicImage> {
    image::load_from_memory(bytes).map_err(|e| AppError::format(context, 0, e.to_string()))
}

fn read(path: &Path) -> Result<DynamicImage> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode(&bytes, &path.display().to_string())
}

pub fn to_u8(v: f32) -> u8 {
    (clamp01(v) * 255.0).round() as u8
}

fn rgb_from(img: DynamicImage) -> Result<RasterImage> {
    let rgb = img.to_rgb8();
    let data = rgb.as_raw().iter().map(|v| *v as f32 / 255.0).collect();
    Ok(RasterImage::new(rgb.width() as usize, rgb.height() as usize, 3, data)?)
}

fn mask_from(img: DynamicImage) -> Result<BinaryMask> {
    let g = img.to_luma8();
    Ok(BinaryMask::new(g.width() as usize, g.height() as usize, g.as_raw().iter().map(|v| *v > 127).collect())?)
}

fn color_from(img: DynamicImage) -> Result<ColorLayer> {
    let rgba = img.to_rgba8();
    let (w, h) = (rgba.width() as usize, rgba.height() as usize);
    let mut rgb = Vec::with_capacity(w * h * 3);
    let mut valid = Vec::with_capacity(w * h);
    for p in rgba.pixels() {
        rgb.extend(p.0[..3].iter().map(|v| *v as f32 / 255.0));
        valid.push(p.0[3] > 127);
    }
    Ok(ColorLayer::new(RasterImage::new(w, h, 3, rgb)?, BinaryMask::new(w, h, valid)?)?)
}

pub fn load_rgb(path: &Path) -> Result<RasterImage> {
    rgb_from(read(path)?)
}

pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    mask_from(read(path)?)
}

pub fn load_color_layer(path: &Path) -> Result<ColorLayer> {
    color_from(read(path)?)
}

pub fn decode_rgb(bytes: &[u8], context: &str) -> Result<RasterImage> {
    rgb_from(decode(bytes, context)?)
}

pub fn decode_mask(bytes: &[u8], context: &str) -> Result<BinaryMask> {
    mask_from(decode(bytes, context)?)
}

fn png(img: DynamicImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encoding");
    out.into_inner()
}

/// RGB (or gray) image as PNG bytes.
pub fn encode_png(img: &RasterImage) -> Vec<u8> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    match img.channels() {
        1 => png(DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, img.data().iter().map(|v| to_u8(*v)).collect()).expect("size"))),
        _ => {
            let rgb: Vec<u8> = img.data().chunks(img.channels()).flat_map(|p| [to_u8(p[0]), to_u8(p[1]), to_u8(p[2])]).collect();
            png(DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, rgb).expect("size")))
        }
    }
}

pub fn encode_mask_png(m: &BinaryMask) -> Vec<u8> {
    let data = m.bits().iter().map(|b| if *b { 255 } else { 0 }).collect();
    png(DynamicImage::ImageLuma8(GrayImage::from_raw(m.width() as u32, m.height() as u32, data).expect("size")))
}

pub fn encode_color_png(layer: &ColorLayer) -> Vec<u8> {
    let (w, h) = (layer.width(), layer.height());
    let mut data = Vec::with_capacity(w * h * 4);
    for y in 0..h {
        for x in 0..w {
            let p = layer.rgb().pixel(x, y);
            data.extend([to_u8(p[0]), to_u8(p[1]), to_u8(p[2]), if layer.valid().get(x, y) { 255 } else { 0 }]);
        }
    }
    png(DynamicImage::ImageRgba8(RgbaImage::from_raw(w as u32, h as u32, data).expect("size")))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}

pub fn save_png(path: &Path, img: &RasterImage) -> Result<()> {
    write_file(path, &encode_png(img))
}

pub fn save_mask(path: &Path, m: &BinaryMask) -> Result<()> {
    write_file(path, &encode_mask_png(m))
}

pub fn save_color_layer(path: &Path, layer: &ColorLayer) -> Result<()> {
    write_file(path, &encode_color_png(layer))
}
