//! Pixel-level helpers: PNG I/O, bilinear resampling and tone adjustments.

use thiserror::Error;

use crate::types::{luma, ImageBuffer, TypeError};

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("PNG decode: {0}")]
    Decode(String),
    #[error("PNG encode: {0}")]
    Encode(String),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("crop region is empty")]
    EmptyCrop,
}

/// Decode any PNG to RGB8. Alpha is dropped, 16-bit samples are truncated.
pub fn decode_png(bytes: &[u8]) -> Result<ImageBuffer, ImageError> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder
        .read_info()
        .map_err(|e| ImageError::Decode(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageError::Decode("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| ImageError::Decode(e.to_string()))?;
    buf.truncate(info.buffer_size());
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => {
            return Err(ImageError::Decode("palette not expanded".into()));
        }
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut rgb = Vec::with_capacity(w * h * 3);
    for row in buf.chunks_exact(info.line_size).take(h) {
        for px in row[..w * channels].chunks_exact(channels) {
            match channels {
                1 | 2 => rgb.extend_from_slice(&[px[0]; 3]),
                _ => rgb.extend_from_slice(&px[..3]),
            }
        }
    }
    Ok(ImageBuffer::new(info.width, info.height, rgb)?)
}

pub fn encode_png(image: &ImageBuffer) -> Result<Vec<u8>, ImageError> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, image.width(), image.height());
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_compression(png::Compression::Fast);
        let mut writer = encoder
            .write_header()
            .map_err(|e| ImageError::Encode(e.to_string()))?;
        writer
            .write_image_data(image.pixels())
            .map_err(|e| ImageError::Encode(e.to_string()))?;
    }
    Ok(out)
}

/// Bilinear sample at continuous pixel-center coordinates, clamped to the edge.
#[inline]
pub fn sample_bilinear(image: &ImageBuffer, x: f64, y: f64) -> [f64; 3] {
    let max_x = (image.width() - 1) as f64;
    let max_y = (image.height() - 1) as f64;
    let x = x.clamp(0.0, max_x);
    let y = y.clamp(0.0, max_y);
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let x0 = x0 as u32;
    let y0 = y0 as u32;
    let x1 = (x0 + 1).min(image.width() - 1);
    let y1 = (y0 + 1).min(image.height() - 1);
    let (a, b, c, d) = (
        image.get(x0, y0),
        image.get(x1, y0),
        image.get(x0, y1),
        image.get(x1, y1),
    );
    let mut out = [0.0; 3];
    for i in 0..3 {
        let top = a[i] as f64 * (1.0 - fx) + b[i] as f64 * fx;
        let bottom = c[i] as f64 * (1.0 - fx) + d[i] as f64 * fx;
        out[i] = top * (1.0 - fy) + bottom * fy;
    }
    out
}

/// Luma of a bilinear sample.
#[inline]
pub fn sample_luma(image: &ImageBuffer, x: f64, y: f64) -> f64 {
    let [r, g, b] = sample_bilinear(image, x, y);
    0.299 * r + 0.587 * g + 0.114 * b
}

#[inline]
fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Bilinear resize to exactly `width x height`. Pixel `(x, y)` of the output
/// samples source point `((x + .5) * sx - .5, (y + .5) * sy - .5)`.
pub fn resize(image: &ImageBuffer, width: u32, height: u32) -> Result<ImageBuffer, ImageError> {
    let mut out = ImageBuffer::filled(width, height, [0; 3])?;
    let sx = image.width() as f64 / width as f64;
    let sy = image.height() as f64 / height as f64;
    for y in 0..height {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..width {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            let [r, g, b] = sample_bilinear(image, src_x, src_y);
            out.put(x, y, [to_u8(r), to_u8(g), to_u8(b)]);
        }
    }
    Ok(out)
}

pub fn crop(image: &ImageBuffer, x0: u32, y0: u32, width: u32, height: u32) -> Result<ImageBuffer, ImageError> {
    if width == 0 || height == 0 || x0 + width > image.width() || y0 + height > image.height() {
        return Err(ImageError::EmptyCrop);
    }
    let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
    let stride = image.width() as usize * 3;
    for y in y0..y0 + height {
        let start = y as usize * stride + x0 as usize * 3;
        pixels.extend_from_slice(&image.pixels()[start..start + width as usize * 3]);
    }
    Ok(ImageBuffer::new(width, height, pixels)?)
}

/// Rotate by `degrees` about the image center, keeping dimensions. Forward
/// map is `p' = c + R(p - c)` with `R = [[cos, -sin], [sin, cos]]` in pixel
/// coordinates (y down); samples outside the source clamp to the edge.
pub fn rotate(image: &ImageBuffer, degrees: f64) -> ImageBuffer {
    if degrees == 0.0 {
        return image.clone();
    }
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cx = image.width() as f64 / 2.0;
    let cy = image.height() as f64 / 2.0;
    let mut out = image.clone();
    for y in 0..image.height() {
        let dy = y as f64 + 0.5 - cy;
        for x in 0..image.width() {
            let dx = x as f64 + 0.5 - cx;
            // Inverse rotation.
            let sx = cx + cos * dx + sin * dy - 0.5;
            let sy = cy - sin * dx + cos * dy - 0.5;
            let [r, g, b] = sample_bilinear(image, sx, sy);
            out.put(x, y, [to_u8(r), to_u8(g), to_u8(b)]);
        }
    }
    out
}

/// Forward map of [`rotate`] for a point.
pub fn rotate_point(width: u32, height: u32, degrees: f64, x: f64, y: f64) -> (f64, f64) {
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cx = width as f64 / 2.0;
    let cy = height as f64 / 2.0;
    let (dx, dy) = (x - cx, y - cy);
    (cx + cos * dx - sin * dy, cy + sin * dx + cos * dy)
}

/// Blend toward black; factor 0 gives black.
pub fn adjust_brightness(image: &mut ImageBuffer, factor: f64) {
    if factor == 1.0 {
        return;
    }
    for v in image.pixels_mut() {
        *v = to_u8(*v as f64 * factor);
    }
}

/// Blend toward the mean grey level; factor 0 gives flat grey.
pub fn adjust_contrast(image: &mut ImageBuffer, factor: f64) {
    if factor == 1.0 {
        return;
    }
    let n = (image.width() as usize * image.height() as usize) as f64;
    let mean = image
        .pixels()
        .chunks_exact(3)
        .map(|p| luma(p[0], p[1], p[2]) as f64)
        .sum::<f64>()
        / n;
    let mean = mean.round();
    for v in image.pixels_mut() {
        *v = to_u8(mean + factor * (*v as f64 - mean));
    }
}

/// Blend toward the pixel's own grey level; factor 0 gives greyscale.
pub fn adjust_color(image: &mut ImageBuffer, factor: f64) {
    if factor == 1.0 {
        return;
    }
    for p in image.pixels_mut().chunks_exact_mut(3) {
        let grey = luma(p[0], p[1], p[2]) as f64;
        for v in p.iter_mut() {
            *v = to_u8(grey + factor * (*v as f64 - grey));
        }
    }
}
