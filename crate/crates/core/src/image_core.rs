//! Raster images and the low-level pixel operations shared by every metric.
//!
//! Pixel values are stored as `f64` in `[0, 1]`, row-major and channel
//! interleaved. Only gray (1 channel) and RGB (3 channels) layouts exist;
//! alpha is dropped on load.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};

/// Rec.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    bit_depth_origin: u8,
}

impl RasterImage {
    /// Builds an image from interleaved samples, validating layout and range.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::with_bit_depth(width, height, channels, data, 8)
    }

    pub fn with_bit_depth(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
        bit_depth_origin: u8,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Parameter(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if bit_depth_origin != 8 && bit_depth_origin != 16 {
            return Err(Error::Parameter(format!(
                "bit depth must be 8 or 16, got {bit_depth_origin}"
            )));
        }
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(Error::Parameter(format!(
                "expected {expected} samples for {width}x{height}x{channels}, got {}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("sample {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
            bit_depth_origin,
        })
    }

    /// A single-valued image.
    pub fn constant(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bit_depth_origin(&self) -> u8 {
        self.bit_depth_origin
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Copies one channel out as a row-major plane.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    fn from_planes(
        width: usize,
        height: usize,
        planes: &[Vec<f64>],
        bit_depth_origin: u8,
    ) -> Self {
        let channels = planes.len();
        let mut data = vec![0.0; width * height * channels];
        for (c, plane) in planes.iter().enumerate() {
            for (i, v) in plane.iter().enumerate() {
                data[i * channels + c] = *v;
            }
        }
        Self {
            width,
            height,
            channels,
            data,
            bit_depth_origin,
        }
    }

    pub fn same_shape(&self, other: &RasterImage) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Writes the image as PNG, 16-bit if it was decoded from a 16-bit source.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let (w, h) = (self.width as u32, self.height as u32);
        let dynamic = match (self.channels, self.bit_depth_origin) {
            (1, 16) => DynamicImage::ImageLuma16(
                ImageBuffer::<Luma<u16>, _>::from_raw(w, h, quantize_u16(&self.data))
                    .expect("buffer size matches dimensions"),
            ),
            (1, _) => DynamicImage::ImageLuma8(
                ImageBuffer::<Luma<u8>, _>::from_raw(w, h, quantize_u8(&self.data))
                    .expect("buffer size matches dimensions"),
            ),
            (_, 16) => DynamicImage::ImageRgb16(
                ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, quantize_u16(&self.data))
                    .expect("buffer size matches dimensions"),
            ),
            _ => DynamicImage::ImageRgb8(
                ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, quantize_u8(&self.data))
                    .expect("buffer size matches dimensions"),
            ),
        };
        dynamic
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }
}

fn quantize_u8(data: &[f64]) -> Vec<u8> {
    data.iter().map(|v| (v * 255.0).round() as u8).collect()
}

fn quantize_u16(data: &[f64]) -> Vec<u16> {
    data.iter().map(|v| (v * 65535.0).round() as u16).collect()
}

fn scale<T: Copy + Into<f64>>(samples: &[T], max: f64) -> Vec<f64> {
    samples.iter().map(|&s| s.into() / max).collect()
}

/// Decodes an 8- or 16-bit gray or RGB raster (PNG, PGM/PPM, JPEG).
///
/// Samples are divided by `2^depth - 1`. Alpha channels are discarded.
pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|source| match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        other => Error::Format {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, depth, data) = match decoded {
        DynamicImage::ImageLuma8(b) => (1, 8, scale(b.as_raw(), 255.0)),
        DynamicImage::ImageLumaA8(_) => (1, 8, scale(decoded.to_luma8().as_raw(), 255.0)),
        DynamicImage::ImageRgb8(b) => (3, 8, scale(b.as_raw(), 255.0)),
        DynamicImage::ImageRgba8(_) => (3, 8, scale(decoded.to_rgb8().as_raw(), 255.0)),
        DynamicImage::ImageLuma16(b) => (1, 16, scale(b.as_raw(), 65535.0)),
        DynamicImage::ImageLumaA16(_) => (1, 16, scale(decoded.to_luma16().as_raw(), 65535.0)),
        DynamicImage::ImageRgb16(b) => (3, 16, scale(b.as_raw(), 65535.0)),
        DynamicImage::ImageRgba16(_) => (3, 16, scale(decoded.to_rgb16().as_raw(), 65535.0)),
        other => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("unsupported pixel layout {:?}", other.color()),
            })
        }
    };
    RasterImage::with_bit_depth(w, h, channels, data, depth)
}

/// Converts RGB to luma with [`LUMA_WEIGHTS`]; gray input is returned as is.
pub fn to_grayscale(img: &RasterImage) -> RasterImage {
    if img.channels == 1 {
        return img.clone();
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|px| {
            let y = LUMA_WEIGHTS[0] * px[0] + LUMA_WEIGHTS[1] * px[1] + LUMA_WEIGHTS[2] * px[2];
            y.clamp(0.0, 1.0)
        })
        .collect();
    RasterImage {
        width: img.width,
        height: img.height,
        channels: 1,
        data,
        bit_depth_origin: img.bit_depth_origin,
    }
}

/// Sampled Gaussian of odd length `size`, truncated and normalized to sum 1.
pub fn gaussian_kernel_1d(size: usize, sigma: f64) -> Result<Vec<f64>> {
    if size == 0 || size.is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "kernel size must be odd and positive, got {size}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let radius = (size / 2) as f64;
    let mut kernel: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - radius;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);
    Ok(kernel)
}

/// Convolves a row-major plane with `kernel` along rows then columns,
/// replicating edge samples.
pub fn convolve_separable(plane: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    debug_assert_eq!(plane.len(), width * height);
    let radius = (kernel.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut horizontal = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        let out = &mut horizontal[y * width..(y + 1) * width];
        for (x, o) in out.iter_mut().enumerate() {
            *o = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * row[clamp(x as isize + k as isize - radius, width)])
                .sum();
        }
    }

    let mut vertical = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            vertical[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    w * horizontal[clamp(y as isize + k as isize - radius, height) * width + x]
                })
                .sum();
        }
    }
    vertical
}

/// Gaussian blur of an arbitrary-valued plane.
pub fn blur_plane(
    plane: &[f64],
    width: usize,
    height: usize,
    kernel_size: usize,
    sigma: f64,
) -> Result<Vec<f64>> {
    let kernel = gaussian_kernel_1d(kernel_size, sigma)?;
    if kernel_size == 1 {
        return Ok(plane.to_vec());
    }
    Ok(convolve_separable(plane, width, height, &kernel))
}

/// Separable Gaussian blur, each channel independently, edges replicated.
pub fn gaussian_blur(img: &RasterImage, kernel_size: usize, sigma: f64) -> Result<RasterImage> {
    let planes = (0..img.channels)
        .map(|c| {
            blur_plane(&img.plane(c), img.width, img.height, kernel_size, sigma)
                .map(|p| p.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(RasterImage::from_planes(
        img.width,
        img.height,
        &planes,
        img.bit_depth_origin,
    ))
}

/// Bilinear resampling of a plane with half-pixel-center alignment.
pub fn resize_plane(
    plane: &[f64],
    width: usize,
    height: usize,
    new_width: usize,
    new_height: usize,
) -> Vec<f64> {
    if width == new_width && height == new_height {
        return plane.to_vec();
    }
    let xs = sample_positions(width, new_width);
    let ys = sample_positions(height, new_height);
    let mut out = Vec::with_capacity(new_width * new_height);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            let top = lerp(plane[y0 * width + x0], plane[y0 * width + x1], tx);
            let bottom = lerp(plane[y1 * width + x0], plane[y1 * width + x1], tx);
            out.push(lerp(top, bottom, ty));
        }
    }
    out
}

// `a + t * (b - a)` is exact when `a == b`, so constant regions survive resampling bit for bit.
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

fn sample_positions(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let ratio = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

pub fn resize_bilinear(img: &RasterImage, new_width: usize, new_height: usize) -> Result<RasterImage> {
    if new_width == 0 || new_height == 0 {
        return Err(Error::Parameter(format!(
            "target dimensions must be positive, got {new_width}x{new_height}"
        )));
    }
    let planes: Vec<Vec<f64>> = (0..img.channels)
        .map(|c| {
            resize_plane(&img.plane(c), img.width, img.height, new_width, new_height)
                .into_iter()
                .map(|v| v.clamp(0.0, 1.0))
                .collect()
        })
        .collect();
    Ok(RasterImage::from_planes(
        new_width,
        new_height,
        &planes,
        img.bit_depth_origin,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(width: usize, height: usize, data: Vec<f64>) -> RasterImage {
        RasterImage::new(width, height, 1, data).unwrap()
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(RasterImage::new(0, 1, 1, vec![]).is_err());
        assert!(RasterImage::new(1, 1, 2, vec![0.0, 0.0]).is_err());
        assert!(RasterImage::new(2, 1, 1, vec![0.0]).is_err());
        assert!(RasterImage::new(1, 1, 1, vec![1.5]).is_err());
    }

    #[test]
    fn grayscale_weights() {
        let red = RasterImage::new(1, 1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        assert!((to_grayscale(&red).data()[0] - 0.299).abs() < 1e-15);
        let white = RasterImage::constant(2, 2, 3, 1.0).unwrap();
        assert!(to_grayscale(&white)
            .data()
            .iter()
            .all(|v| (v - 1.0).abs() < 1e-12));
        let g = gray(2, 1, vec![0.2, 0.7]);
        assert_eq!(to_grayscale(&g), g);
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel_1d(101, 5.0).unwrap();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..50 {
            assert_eq!(k[i], k[100 - i]);
        }
        assert!(gaussian_kernel_1d(4, 1.0).is_err());
        assert!(gaussian_kernel_1d(3, 0.0).is_err());
    }

    #[test]
    fn blur_even_kernel_is_rejected() {
        let img = gray(3, 3, vec![0.5; 9]);
        assert!(matches!(
            gaussian_blur(&img, 10, 1.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn blur_constant_and_identity() {
        let img = RasterImage::constant(7, 5, 3, 0.375).unwrap();
        let out = gaussian_blur(&img, 9, 2.0).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.375).abs() < 1e-12));

        let ramp = gray(4, 1, vec![0.0, 0.25, 0.5, 1.0]);
        assert_eq!(gaussian_blur(&ramp, 1, 3.0).unwrap(), ramp);
    }

    #[test]
    fn blur_impulse_is_outer_product_kernel() {
        let (w, h) = (15, 15);
        let mut data = vec![0.0; w * h];
        data[7 * w + 7] = 1.0;
        let out = gaussian_blur(&gray(w, h, data), 5, 1.2).unwrap();
        // direct construction of the 2-D kernel
        let r = 2.0_f64;
        let g: Vec<f64> = (0..5)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * 1.2 * 1.2)).exp()
            })
            .collect();
        let s: f64 = g.iter().sum();
        for y in 0..h {
            for x in 0..w {
                let dy = y as isize - 7;
                let dx = x as isize - 7;
                let expected = if dx.abs() <= 2 && dy.abs() <= 2 {
                    g[(dy + 2) as usize] * g[(dx + 2) as usize] / (s * s)
                } else {
                    0.0
                };
                assert!((out.get(x, y, 0) - expected).abs() < 1e-15);
            }
        }
        assert!((out.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resize_examples() {
        let img = gray(2, 1, vec![0.0, 1.0]);
        let out = resize_bilinear(&img, 4, 1).unwrap();
        assert_eq!(out.data(), &[0.0, 0.25, 0.75, 1.0]);
        assert_eq!(resize_bilinear(&img, 2, 1).unwrap(), img);

        let c = RasterImage::constant(5, 3, 3, 0.3).unwrap();
        let up = resize_bilinear(&c, 13, 11).unwrap();
        assert!(up.data().iter().all(|&v| v == 0.3));
        assert_eq!(resize_bilinear(&up, 5, 3).unwrap().data(), c.data());
        assert!(resize_bilinear(&c, 0, 3).is_err());
    }

    #[test]
    fn png_round_trip_8_and_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let p8 = dir.path().join("a.png");
        let img = RasterImage::new(2, 2, 3, (0..12).map(|i| i as f64 / 255.0).collect()).unwrap();
        img.save_png(&p8).unwrap();
        let back = load_image(&p8).unwrap();
        assert_eq!(back.bit_depth_origin(), 8);
        assert_eq!(back.data(), img.data());

        let p16 = dir.path().join("b.png");
        let img16 =
            RasterImage::with_bit_depth(1, 1, 1, vec![32768.0 / 65535.0], 16).unwrap();
        img16.save_png(&p16).unwrap();
        let back16 = load_image(&p16).unwrap();
        assert_eq!(back16.bit_depth_origin(), 16);
        assert!((back16.data()[0] - 0.500_007_629_510_948_3).abs() < 1e-15);
    }

    #[test]
    fn load_missing_file_is_io_error() {
        assert!(matches!(
            load_image("/definitely/not/here.png"),
            Err(Error::Io { .. })
        ));
    }
}
