//! Grayscale float images, PNG I/O and separable Gaussian filtering.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, Luma};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("invalid image dimensions {width}x{height}")]
    InvalidDimensions { width: u32, height: u32 },
    #[error("expected {expected} intensities, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("intensity {value} at index {index} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
}

/// Row-major grayscale image with intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, data: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::InvalidDimensions { width, height });
        }
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(ImageError::SizeMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ImageError::OutOfRange { index, value });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, value: f64) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> f64,
    ) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// 8-bit samples scaled to [0, 1].
    pub fn from_u8(width: u32, height: u32, bytes: &[u8]) -> Result<Self, ImageError> {
        Self::new(
            width,
            height,
            bytes.iter().map(|&b| b as f64 / 255.0).collect(),
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Writes a pixel, clamping the value into [0, 1].
    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: f64) {
        self.data[y as usize * self.width as usize + x as usize] = value.clamp(0.0, 1.0);
    }

    /// Multiplies every intensity by `c` (clamped to [0, 1]).
    pub fn scaled(&self, c: f64) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| (v * c).clamp(0.0, 1.0)).collect(),
        }
    }

    /// Decodes PNG (or any format the codec sniffs) and converts to
    /// luminance 0.299 R + 0.587 G + 0.114 B.
    pub fn decode(bytes: &[u8]) -> Result<Self, ImageError> {
        let img = image::load_from_memory(bytes)?;
        Ok(Self::from_dynamic(&img))
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let img = image::open(path)?;
        Ok(Self::from_dynamic(&img))
    }

    fn from_dynamic(img: &DynamicImage) -> Self {
        let (width, height) = (img.width(), img.height());
        let data = match img {
            DynamicImage::ImageLuma8(g) => g.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
            DynamicImage::ImageLuma16(g) => {
                g.as_raw().iter().map(|&v| v as f64 / 65535.0).collect()
            }
            other => other
                .to_rgb8()
                .pixels()
                .map(|p| {
                    let [r, g, b] = p.0;
                    ((0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0)
                        .clamp(0.0, 1.0)
                })
                .collect(),
        };
        Self {
            width,
            height,
            data,
        }
    }

    /// Quantizes to 8 bits (round to nearest).
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Snaps intensities to the 8-bit grid, so a PNG round trip is lossless.
    pub fn quantized(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.to_u8().into_iter().map(|b| b as f64 / 255.0).collect(),
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImageError> {
        let buf: image::ImageBuffer<Luma<u8>, Vec<u8>> =
            image::ImageBuffer::from_raw(self.width, self.height, self.to_u8())
                .expect("buffer matches dimensions");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| ImageError::Codec(image::ImageError::IoError(e)))
    }

    /// Copies the rectangle `[x0, x0+w) x [y0, y0+h)`.
    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> GrayImage {
        let mut data = Vec::with_capacity(w as usize * h as usize);
        for y in y0..y0 + h {
            let row = y as usize * self.width as usize;
            data.extend_from_slice(&self.data[row + x0 as usize..row + (x0 + w) as usize]);
        }
        GrayImage {
            width: w,
            height: h,
            data,
        }
    }
}

/// Standard sigma for an odd Gaussian kernel size:
/// `0.3 * ((k - 1) / 2 - 1) + 0.8`.
pub fn sigma_for_kernel(kernel: u32) -> f64 {
    0.3 * ((kernel as f64 - 1.0) / 2.0 - 1.0) + 0.8
}

/// Normalized 1-D Gaussian weights of odd length `kernel`.
pub fn gaussian_kernel(kernel: u32) -> Vec<f64> {
    assert!(kernel % 2 == 1, "gaussian kernel size must be odd");
    if kernel == 1 {
        return vec![1.0];
    }
    let sigma = sigma_for_kernel(kernel);
    let half = (kernel / 2) as i64;
    let mut w: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Mirror index without repeating the edge sample (`dcb|abcd|cba`).
#[inline]
pub(crate) fn reflect101(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as i64 {
        m = period - m;
    }
    m as usize
}

/// Separable convolution of a row-major buffer with reflect-101 borders.
pub(crate) fn convolve_separable(
    data: &[f64],
    w: usize,
    h: usize,
    kx: &[f64],
    ky: &[f64],
) -> Vec<f64> {
    let rx = (kx.len() / 2) as i64;
    let ry = (ky.len() / 2) as i64;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &k) in kx.iter().enumerate() {
                acc += k * row[reflect101(x as i64 + t as i64 - rx, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &k) in ky.iter().enumerate() {
                acc += k * tmp[reflect101(y as i64 + t as i64 - ry, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Gaussian blur with an odd `kernel` size and reflect-101 borders.
pub fn gaussian_blur(img: &GrayImage, kernel: u32) -> GrayImage {
    let k = gaussian_kernel(kernel);
    let data = convolve_separable(&img.data, img.width as usize, img.height as usize, &k, &k);
    GrayImage {
        width: img.width,
        height: img.height,
        data: data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    }
}
