//! Full-reference quality metrics and their saliency-weighted counterparts.
//!
//! PSNR and SSIM operate on the `[0, 1]` sample scale. The SSIM map keeps the
//! image dimensions (Gaussian window with edge replication) so that it can be
//! pooled with a saliency map of the same size.

use crate::error::{Error, Result};
use crate::image_core::{convolve_separable, gaussian_kernel_1d, RasterImage};
use crate::saliency::SaliencyMap;

pub const DEFAULT_PSNR_CAP_DB: f64 = 100.0;

/// Canonical 5-scale MS-SSIM exponents.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window_size: usize,
    pub window_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window_size: 11,
            window_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_size < 3 || self.window_size.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "SSIM window must be odd and >= 3, got {}",
                self.window_size
            )));
        }
        if !(self.window_sigma > 0.0) {
            return Err(Error::Parameter("SSIM window sigma must be positive".into()));
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0 && self.dynamic_range > 0.0) {
            return Err(Error::Parameter(
                "SSIM k1, k2 and dynamic range must be positive".into(),
            ));
        }
        Ok(())
    }

    fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QualityScore {
    pub metric: String,
    pub value: f64,
    /// Set when PSNR hit the configured cap (zero error).
    pub capped: bool,
}

impl QualityScore {
    fn db(metric: &str, mse: f64, cap_db: f64) -> Self {
        let value = 10.0 * (1.0 / mse).log10();
        if mse == 0.0 || value >= cap_db {
            Self {
                metric: metric.to_string(),
                value: cap_db,
                capped: true,
            }
        } else {
            Self {
                metric: metric.to_string(),
                value,
                capped: false,
            }
        }
    }
}

/// Per-pixel SSIM together with its mean.
#[derive(Clone, Debug, PartialEq)]
pub struct SsimOutput {
    pub mean: f64,
    pub width: usize,
    pub height: usize,
    pub map: Vec<f64>,
}

fn check_same_shape(a: &RasterImage, b: &RasterImage) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Parameter(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

pub fn mse(reference: &RasterImage, distorted: &RasterImage) -> Result<f64> {
    check_same_shape(reference, distorted)?;
    let sum: f64 = reference
        .data()
        .iter()
        .zip(distorted.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.data().len() as f64)
}

pub fn psnr(reference: &RasterImage, distorted: &RasterImage, cap_db: f64) -> Result<QualityScore> {
    Ok(QualityScore::db("psnr", mse(reference, distorted)?, cap_db))
}

fn check_saliency(img: &RasterImage, sal: &SaliencyMap) -> Result<f64> {
    if sal.width() != img.width() || sal.height() != img.height() {
        return Err(Error::Parameter(format!(
            "saliency {}x{} does not match image {}x{}",
            sal.width(),
            sal.height(),
            img.width(),
            img.height()
        )));
    }
    if sal.values().iter().any(|w| *w < 0.0) {
        return Err(Error::Data("saliency weights must be nonnegative".into()));
    }
    let total: f64 = sal.values().iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateMap("saliency weights sum to zero".into()));
    }
    Ok(total)
}

/// PSNR of the saliency-weighted MSE; weights apply to every channel of a pixel.
pub fn ew_psnr(
    reference: &RasterImage,
    distorted: &RasterImage,
    sal: &SaliencyMap,
    cap_db: f64,
) -> Result<QualityScore> {
    check_same_shape(reference, distorted)?;
    let total = check_saliency(reference, sal)?;
    let channels = reference.channels();
    let weighted: f64 = reference
        .data()
        .chunks_exact(channels)
        .zip(distorted.data().chunks_exact(channels))
        .zip(sal.values())
        .map(|((a, b), w)| {
            let err: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            w * err
        })
        .sum();
    let wmse = weighted / (total * channels as f64);
    Ok(QualityScore::db("ew-psnr", wmse, cap_db))
}

struct SsimTerms {
    ssim: Vec<f64>,
    cs: Vec<f64>,
}

fn ssim_terms(x: &[f64], y: &[f64], width: usize, height: usize, params: &SsimParams) -> Result<SsimTerms> {
    let kernel = gaussian_kernel_1d(params.window_size, params.window_sigma)?;
    let filter = |p: &[f64]| convolve_separable(p, width, height, &kernel);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = filter(x);
    let mu_y = filter(y);
    let e_xx = filter(&xx);
    let e_yy = filter(&yy);
    let e_xy = filter(&xy);
    let (c1, c2) = (params.c1(), params.c2());

    let n = x.len();
    let mut ssim = Vec::with_capacity(n);
    let mut cs = Vec::with_capacity(n);
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = e_xx[i] - mx * mx;
        let var_y = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        let contrast_structure = (2.0 * cov + c2) / (var_x + var_y + c2);
        let luminance = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
        cs.push(contrast_structure);
        ssim.push(luminance * contrast_structure);
    }
    Ok(SsimTerms { ssim, cs })
}

fn require_gray(img: &RasterImage) -> Result<()> {
    if img.channels() != 1 {
        return Err(Error::Parameter(
            "SSIM expects single-channel input; convert to grayscale first".into(),
        ));
    }
    Ok(())
}

fn mean_of(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Gaussian-window SSIM of two grayscale images.
pub fn ssim(reference: &RasterImage, distorted: &RasterImage, params: &SsimParams) -> Result<SsimOutput> {
    params.validate()?;
    check_same_shape(reference, distorted)?;
    require_gray(reference)?;
    let (w, h) = (reference.width(), reference.height());
    if w < params.window_size || h < params.window_size {
        return Err(Error::Parameter(format!(
            "image {w}x{h} is smaller than the {} px SSIM window",
            params.window_size
        )));
    }
    let terms = ssim_terms(reference.data(), distorted.data(), w, h, params)?;
    Ok(SsimOutput {
        mean: mean_of(&terms.ssim),
        width: w,
        height: h,
        map: terms.ssim,
    })
}

fn downsample_2x(plane: &[f64], width: usize, height: usize) -> (Vec<f64>, usize, usize) {
    let (nw, nh) = (width / 2, height / 2);
    let mut out = Vec::with_capacity(nw * nh);
    for y in 0..nh {
        for x in 0..nw {
            let i = 2 * y * width + 2 * x;
            out.push((plane[i] + plane[i + 1] + plane[i + width] + plane[i + width + 1]) / 4.0);
        }
    }
    (out, nw, nh)
}

/// Multi-scale SSIM with one scale per weight.
///
/// Contrast-structure means enter at every scale but the last, which
/// contributes full SSIM. Negative per-scale terms are clamped to zero
/// before exponentiation.
pub fn ms_ssim(
    reference: &RasterImage,
    distorted: &RasterImage,
    params: &SsimParams,
    weights: &[f64],
) -> Result<f64> {
    params.validate()?;
    check_same_shape(reference, distorted)?;
    require_gray(reference)?;
    if weights.is_empty() {
        return Err(Error::Parameter("MS-SSIM needs at least one scale weight".into()));
    }
    let scales = weights.len();
    let (mut w, mut h) = (reference.width(), reference.height());
    let (mut small_w, mut small_h) = (w, h);
    for _ in 1..scales {
        small_w /= 2;
        small_h /= 2;
    }
    if small_w < params.window_size || small_h < params.window_size {
        let minimum = params.window_size << (scales - 1);
        return Err(Error::Parameter(format!(
            "image {w}x{h} too small for {scales}-scale MS-SSIM; minimum side is {minimum} px"
        )));
    }

    let mut x = reference.data().to_vec();
    let mut y = distorted.data().to_vec();
    let mut score = 1.0;
    for (scale, weight) in weights.iter().enumerate() {
        let terms = ssim_terms(&x, &y, w, h, params)?;
        let term = if scale + 1 == scales {
            mean_of(&terms.ssim)
        } else {
            mean_of(&terms.cs)
        };
        score *= term.max(0.0).powf(*weight);
        if scale + 1 < scales {
            let (nx, nw, nh) = downsample_2x(&x, w, h);
            let (ny, _, _) = downsample_2x(&y, w, h);
            x = nx;
            y = ny;
            w = nw;
            h = nh;
        }
    }
    Ok(score)
}

/// SSIM map pooled with saliency weights.
pub fn ew_ssim(
    reference: &RasterImage,
    distorted: &RasterImage,
    sal: &SaliencyMap,
    params: &SsimParams,
) -> Result<f64> {
    let total = check_saliency(reference, sal)?;
    let out = ssim(reference, distorted, params)?;
    let weighted: f64 = out.map.iter().zip(sal.values()).map(|(s, w)| s * w).sum();
    Ok(weighted / total)
}
