//! MoRF/LeRF masking of images by an explanation map, and perturbation-curve scoring.
//!
//! The map is blurred with a large Gaussian first so that plateaus break up
//! and every requested quantile gets a usable threshold. MoRF masks pixels
//! whose map value is strictly above the threshold, LeRF those strictly below.

use std::fmt;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image_core::{blur_plane, RasterImage, LUMA_WEIGHTS};
use crate::saliency::{NormState, SaliencyMap};

/// Per-channel natural-image means used for the `mean` fill.
pub const DATASET_MEAN_RGB: [f64; 3] = [0.485, 0.456, 0.406];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Most relevant first: mask the highest-valued pixels.
    MoRF,
    /// Least relevant first: mask the lowest-valued pixels.
    LeRF,
}

impl Strategy {
    pub fn tag(&self) -> &'static str {
        match self {
            Strategy::MoRF => "morf",
            Strategy::LeRF => "lerf",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "morf" => Ok(Strategy::MoRF),
            "lerf" => Ok(Strategy::LeRF),
            other => Err(Error::Parameter(format!(
                "unknown strategy `{other}` (expected morf or lerf)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Fill {
    Black,
    DatasetMean([f64; 3]),
}

impl Fill {
    pub fn tag(&self) -> &'static str {
        match self {
            Fill::Black => "black",
            Fill::DatasetMean(_) => "mean",
        }
    }

    fn values(&self, channels: usize) -> Vec<f64> {
        match (self, channels) {
            (Fill::Black, c) => vec![0.0; c],
            (Fill::DatasetMean(m), 1) => vec![
                (LUMA_WEIGHTS[0] * m[0] + LUMA_WEIGHTS[1] * m[1] + LUMA_WEIGHTS[2] * m[2])
                    .clamp(0.0, 1.0),
            ],
            (Fill::DatasetMean(m), _) => m.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskingSpec {
    pub strategy: Strategy,
    pub fill: Fill,
    /// Fractions of pixels to mask, strictly increasing within `[0, 1]`.
    pub quantiles: Vec<f64>,
    pub blur_kernel: usize,
    pub blur_sigma: f64,
}

impl Default for MaskingSpec {
    fn default() -> Self {
        Self {
            strategy: Strategy::MoRF,
            fill: Fill::Black,
            quantiles: default_quantiles(),
            blur_kernel: 101,
            blur_sigma: 5.0,
        }
    }
}

/// 0.0, 0.1, …, 0.9, 1.0
pub fn default_quantiles() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

impl MaskingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.blur_kernel == 0 || self.blur_kernel.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "blur kernel must be odd, got {}",
                self.blur_kernel
            )));
        }
        if let Some(q) = self.quantiles.iter().find(|q| !(0.0..=1.0).contains(*q)) {
            return Err(Error::Parameter(format!("quantile {q} outside [0, 1]")));
        }
        if self.quantiles.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter(
                "quantiles must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Blurs the map ahead of thresholding.
pub fn prepare_map(map: &SaliencyMap, spec: &MaskingSpec) -> Result<SaliencyMap> {
    let values = blur_plane(
        map.values(),
        map.width(),
        map.height(),
        spec.blur_kernel,
        spec.blur_sigma,
    )?;
    Ok(SaliencyMap::from_parts(
        map.width(),
        map.height(),
        values,
        NormState::Raw,
    ))
}

fn target_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round_ties_even() as usize).min(n)
}

/// Threshold that masks about `fraction` of the pixels under `strategy`.
///
/// Uses order statistics of the map values. On ties MoRF rounds toward
/// masking fewer pixels and LeRF toward masking the whole tie group.
pub fn threshold_for_fraction(map: &SaliencyMap, fraction: f64, strategy: Strategy) -> Result<f64> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Parameter(format!(
            "fraction {fraction} outside [0, 1]"
        )));
    }
    let mut sorted = map.values().to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(threshold_sorted(&sorted, fraction, strategy))
}

fn threshold_sorted(sorted: &[f64], fraction: f64, strategy: Strategy) -> f64 {
    let n = sorted.len();
    let m = target_count(fraction, n);
    match strategy {
        Strategy::MoRF => {
            if m == n {
                f64::NEG_INFINITY
            } else {
                sorted[n - m - 1]
            }
        }
        Strategy::LeRF => {
            if m == 0 {
                sorted[0]
            } else {
                let pivot = sorted[m - 1];
                let above = sorted.partition_point(|v| *v <= pivot);
                sorted.get(above).copied().unwrap_or(f64::INFINITY)
            }
        }
    }
}

fn is_masked(value: f64, threshold: f64, strategy: Strategy) -> bool {
    match strategy {
        Strategy::MoRF => value > threshold,
        Strategy::LeRF => value < threshold,
    }
}

/// Boolean mask (row-major) of the pixels the rule selects.
pub fn mask_pixels(map: &SaliencyMap, threshold: f64, strategy: Strategy) -> Vec<bool> {
    map.values()
        .iter()
        .map(|v| is_masked(*v, threshold, strategy))
        .collect()
}

/// Replaces masked pixels with the fill; others are copied unchanged.
pub fn apply_mask(
    img: &RasterImage,
    map: &SaliencyMap,
    threshold: f64,
    strategy: Strategy,
    fill: Fill,
) -> Result<RasterImage> {
    if map.width() != img.width() || map.height() != img.height() {
        return Err(Error::Parameter(format!(
            "map {}x{} does not match image {}x{}",
            map.width(),
            map.height(),
            img.width(),
            img.height()
        )));
    }
    let channels = img.channels();
    let fill_values = fill.values(channels);
    let mut data = img.data().to_vec();
    for (px, v) in data.chunks_exact_mut(channels).zip(map.values()) {
        if is_masked(*v, threshold, strategy) {
            px.copy_from_slice(&fill_values);
        }
    }
    RasterImage::with_bit_depth(
        img.width(),
        img.height(),
        channels,
        data,
        img.bit_depth_origin(),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskedFrame {
    pub requested_fraction: f64,
    pub actual_fraction: f64,
    pub threshold: f64,
    pub image: RasterImage,
}

/// Masked copies of `img`, one per quantile in increasing order.
pub fn masking_series(
    img: &RasterImage,
    map: &SaliencyMap,
    spec: &MaskingSpec,
) -> Result<Vec<MaskedFrame>> {
    spec.validate()?;
    if map.width() != img.width() || map.height() != img.height() {
        return Err(Error::Parameter(format!(
            "map {}x{} does not match image {}x{}",
            map.width(),
            map.height(),
            img.width(),
            img.height()
        )));
    }
    let prepared = prepare_map(map, spec)?;
    let mut sorted = prepared.values().to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;

    spec.quantiles
        .par_iter()
        .map(|&fraction| {
            let threshold = threshold_sorted(&sorted, fraction, spec.strategy);
            let masked = prepared
                .values()
                .iter()
                .filter(|v| is_masked(**v, threshold, spec.strategy))
                .count();
            let image = apply_mask(img, &prepared, threshold, spec.strategy, spec.fill)?;
            Ok(MaskedFrame {
                requested_fraction: fraction,
                actual_fraction: masked as f64 / n,
                threshold,
                image,
            })
        })
        .collect()
}

/// File name for a masked frame: `<stem>__<strategy>__f<percent>__<fill>.png`.
pub fn masked_file_name(stem: &str, strategy: Strategy, fraction: f64, fill: Fill) -> String {
    format!(
        "{stem}__{}__f{}__{}.png",
        strategy.tag(),
        percent_label(fraction),
        fill.tag()
    )
}

fn percent_label(fraction: f64) -> String {
    let pct = (fraction * 100.0 * 1e6).round() / 1e6;
    if pct.fract() == 0.0 {
        format!("{}", pct as i64)
    } else {
        format!("{pct}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationCurve {
    pub quantiles: Vec<f64>,
    pub scores: Vec<f64>,
    /// Score of the unmasked input.
    pub baseline: f64,
}

impl PerturbationCurve {
    /// Reads `fraction,score`; the row at fraction 0 (or labelled `baseline`) is the baseline.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
        let column = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Schema {
                    path: path.to_path_buf(),
                    column: name.to_string(),
                })
        };
        let (fi, si) = (column("fraction")?, column("score")?);
        let mut baseline = None;
        let mut quantiles = Vec::new();
        let mut scores = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::csv(path, e))?;
            let raw_fraction = record.get(fi).unwrap_or("").trim();
            let score: f64 = record.get(si).unwrap_or("").trim().parse().map_err(|_| {
                Error::Validation(format!("{}: bad score on row {}", path.display(), line + 2))
            })?;
            let fraction = if raw_fraction.eq_ignore_ascii_case("baseline") {
                0.0
            } else {
                raw_fraction.parse::<f64>().map_err(|_| {
                    Error::Validation(format!(
                        "{}: bad fraction on row {}",
                        path.display(),
                        line + 2
                    ))
                })?
            };
            if fraction == 0.0 {
                if baseline.replace(score).is_some() {
                    return Err(Error::Validation(format!(
                        "{}: more than one baseline row",
                        path.display()
                    )));
                }
            } else {
                quantiles.push(fraction);
                scores.push(score);
            }
        }
        let baseline = baseline.ok_or_else(|| {
            Error::Validation(format!("{}: no baseline row at fraction 0", path.display()))
        })?;
        Ok(Self {
            quantiles,
            scores,
            baseline,
        })
    }
}

/// Mean score drop from the baseline over the masked points (area over the curve).
pub fn aopc(curve: &PerturbationCurve) -> Result<f64> {
    if curve.quantiles.len() != curve.scores.len() {
        return Err(Error::Parameter(format!(
            "{} quantiles but {} scores",
            curve.quantiles.len(),
            curve.scores.len()
        )));
    }
    if curve.scores.is_empty() {
        return Err(Error::Parameter(
            "perturbation curve needs a baseline and at least one masked point".into(),
        ));
    }
    if let Some(q) = curve.quantiles.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::Parameter(format!("quantile {q} outside [0, 1]")));
    }
    let drop: f64 = curve.scores.iter().map(|s| curve.baseline - s).sum();
    Ok(drop / curve.scores.len() as f64)
}
