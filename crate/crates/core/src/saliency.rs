//! Saliency maps, fixations, and the agreement metrics NSS, SIM, CC and KLD.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image_core::{load_image, resize_plane, to_grayscale, RasterImage};

/// Default stabilizer for [`kld`].
pub const KLD_EPSILON: f64 = 1e-7;

/// Default spread of [`center_prior`] as a fraction of each side.
pub const CENTER_PRIOR_SIGMA_FRAC: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormState {
    Raw,
    MinMax,
    Probability,
    ZScore,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    MinMax,
    Probability,
    ZScore,
}

/// A nonnegative H×W field (signed only in z-score state).
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    norm: NormState,
}

impl SaliencyMap {
    /// A raw map; values must be finite and nonnegative.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter(format!(
                "map dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::Parameter(format!(
                "expected {} values for a {width}x{height} map, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Data(format!(
                "saliency values must be finite and nonnegative, found {bad}"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
            norm: NormState::Raw,
        })
    }

    pub(crate) fn from_parts(width: usize, height: usize, values: Vec<f64>, norm: NormState) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            values,
            norm,
        }
    }

    /// Interprets the luma of an image as a raw saliency map.
    pub fn from_image(img: &RasterImage) -> Self {
        let g = to_grayscale(img);
        Self::from_parts(g.width(), g.height(), g.into_data(), NormState::Raw)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_image(&load_image(path)?))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm_state(&self) -> NormState {
        self.norm
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn same_dims(&self, other: &SaliencyMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Bilinear resample to the given size; the result is raw.
    pub fn resized(&self, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter(format!(
                "target dimensions must be positive, got {width}x{height}"
            )));
        }
        let norm = if width == self.width && height == self.height {
            self.norm
        } else {
            NormState::Raw
        };
        Ok(Self::from_parts(
            width,
            height,
            resize_plane(&self.values, self.width, self.height, width, height),
            norm,
        ))
    }

    /// Min-max scaled gray image for writing to disk. Constant maps become black.
    pub fn to_image(&self) -> RasterImage {
        let (lo, hi) = min_max(&self.values);
        let span = hi - lo;
        let data = self
            .values
            .iter()
            .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
            .collect();
        RasterImage::new(self.width, self.height, 1, data).expect("scaled values are in [0, 1]")
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn population_std(values: &[f64], mean: f64) -> f64 {
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Gaze fixations as (column, row) pixel coordinates inside a frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixationSet {
    points: Vec<(usize, usize)>,
    frame_width: usize,
    frame_height: usize,
}

impl FixationSet {
    pub fn new(points: Vec<(usize, usize)>, frame_width: usize, frame_height: usize) -> Result<Self> {
        if let Some(&(x, y)) = points
            .iter()
            .find(|(x, y)| *x >= frame_width || *y >= frame_height)
        {
            return Err(Error::Parameter(format!(
                "fixation ({x}, {y}) outside {frame_width}x{frame_height} frame"
            )));
        }
        Ok(Self {
            points,
            frame_width,
            frame_height,
        })
    }

    /// Reads a CSV with header `x,y`.
    pub fn load_csv(path: impl AsRef<Path>, frame_width: usize, frame_height: usize) -> Result<Self> {
        #[derive(serde::Deserialize)]
        struct Row {
            x: usize,
            y: usize,
        }
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
        for column in ["x", "y"] {
            if !headers.iter().any(|h| h.trim() == column) {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    column: column.to_string(),
                });
            }
        }
        let points = reader
            .deserialize::<Row>()
            .map(|row| row.map(|r| (r.x, r.y)).map_err(|e| Error::csv(path, e)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(points, frame_width, frame_height)
    }

    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn frame_width(&self) -> usize {
        self.frame_width
    }

    pub fn frame_height(&self) -> usize {
        self.frame_height
    }
}

pub fn normalize(map: &SaliencyMap, mode: NormMode) -> Result<SaliencyMap> {
    let values = &map.values;
    let (out, state) = match mode {
        NormMode::MinMax => {
            let (lo, hi) = min_max(values);
            if hi <= lo {
                return Err(Error::DegenerateMap("min-max of a constant map".into()));
            }
            let span = hi - lo;
            (
                values.iter().map(|v| (v - lo) / span).collect(),
                NormState::MinMax,
            )
        }
        NormMode::Probability => {
            let sum: f64 = values.iter().sum();
            if !(sum > 0.0) {
                return Err(Error::DegenerateMap(
                    "probability normalization of a zero-sum map".into(),
                ));
            }
            (values.iter().map(|v| v / sum).collect(), NormState::Probability)
        }
        NormMode::ZScore => {
            let m = mean(values);
            let sd = population_std(values, m);
            if !(sd > 0.0) {
                return Err(Error::DegenerateMap("z-score of a constant map".into()));
            }
            (values.iter().map(|v| (v - m) / sd).collect(), NormState::ZScore)
        }
    };
    Ok(SaliencyMap::from_parts(map.width, map.height, out, state))
}

/// Centered Gaussian baseline, σ proportional to each side, summing to 1.
pub fn center_prior(width: usize, height: usize, sigma_frac: f64) -> Result<SaliencyMap> {
    if width == 0 || height == 0 {
        return Err(Error::Parameter(format!(
            "map dimensions must be positive, got {width}x{height}"
        )));
    }
    if !(sigma_frac > 0.0 && sigma_frac.is_finite()) {
        return Err(Error::Parameter(format!(
            "sigma_frac must be positive, got {sigma_frac}"
        )));
    }
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let sx = sigma_frac * width as f64;
    let sy = sigma_frac * height as f64;
    let gx: Vec<f64> = (0..width)
        .map(|x| (-(x as f64 - cx).powi(2) / (2.0 * sx * sx)).exp())
        .collect();
    let gy: Vec<f64> = (0..height)
        .map(|y| (-(y as f64 - cy).powi(2) / (2.0 * sy * sy)).exp())
        .collect();
    let values: Vec<f64> = gy
        .iter()
        .flat_map(|vy| gx.iter().map(move |vx| vx * vy))
        .collect();
    normalize(
        &SaliencyMap::from_parts(width, height, values, NormState::Raw),
        NormMode::Probability,
    )
}

/// Rank-preserving histogram matching against `reference`.
///
/// The value of rank `r` among `n` map values takes the reference quantile
/// at `r / (n - 1)` (linear interpolation between reference samples); tied
/// values share the mean of their targets.
pub fn map_transform(map: &SaliencyMap, reference: &[f64]) -> Result<SaliencyMap> {
    if reference.is_empty() {
        return Err(Error::Parameter("reference histogram is empty".into()));
    }
    if reference.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("reference histogram contains non-finite values".into()));
    }
    let mut sorted_ref = reference.to_vec();
    sorted_ref.sort_by(f64::total_cmp);

    let n = map.values.len();
    let target = |rank: usize| -> f64 {
        let q = if n == 1 {
            0.5
        } else {
            rank as f64 / (n - 1) as f64
        };
        let pos = q * (sorted_ref.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(sorted_ref.len() - 1);
        let t = pos - lo as f64;
        if t == 0.0 {
            sorted_ref[lo]
        } else {
            sorted_ref[lo] + t * (sorted_ref[hi] - sorted_ref[lo])
        }
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| map.values[a].total_cmp(&map.values[b]));

    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let v = map.values[order[start]];
        let mut end = start + 1;
        while end < n && map.values[order[end]] == v {
            end += 1;
        }
        let shared = if end - start == 1 {
            target(start)
        } else {
            (start..end).map(target).sum::<f64>() / (end - start) as f64
        };
        for &idx in &order[start..end] {
            out[idx] = shared;
        }
        start = end;
    }
    Ok(SaliencyMap::from_parts(map.width, map.height, out, NormState::Raw))
}

/// Normalized scanpath saliency: mean z-scored map value at the fixations.
pub fn nss(pred: &SaliencyMap, fixations: &FixationSet) -> Result<f64> {
    if fixations.points.is_empty() {
        return Err(Error::Parameter("NSS needs at least one fixation".into()));
    }
    if fixations.frame_width != pred.width || fixations.frame_height != pred.height {
        return Err(Error::Parameter(format!(
            "fixation frame {}x{} does not match map {}x{}",
            fixations.frame_width, fixations.frame_height, pred.width, pred.height
        )));
    }
    let z = normalize(pred, NormMode::ZScore)?;
    let total: f64 = fixations.points.iter().map(|&(x, y)| z.get(x, y)).sum();
    Ok(total / fixations.points.len() as f64)
}

fn check_dims(a: &SaliencyMap, b: &SaliencyMap) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::Parameter(format!(
            "map dimensions differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Histogram intersection of the two maps as distributions.
pub fn sim(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    check_dims(pred, gt)?;
    let p = normalize(pred, NormMode::Probability)?;
    let q = normalize(gt, NormMode::Probability)?;
    Ok(p.values.iter().zip(&q.values).map(|(a, b)| a.min(*b)).sum())
}

/// Pearson correlation of the flattened maps.
pub fn cc(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    check_dims(pred, gt)?;
    let p = normalize(pred, NormMode::ZScore)?;
    let q = normalize(gt, NormMode::ZScore)?;
    let r = p.values.iter().zip(&q.values).map(|(a, b)| a * b).sum::<f64>() / p.len() as f64;
    Ok(r.clamp(-1.0, 1.0))
}

/// KL divergence of `pred` from `gt`, both taken as distributions, with `epsilon` guards.
pub fn kld(pred: &SaliencyMap, gt: &SaliencyMap, epsilon: f64) -> Result<f64> {
    check_dims(pred, gt)?;
    if !(epsilon >= 0.0) {
        return Err(Error::Parameter(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let p = normalize(pred, NormMode::Probability)?;
    let q = normalize(gt, NormMode::Probability)?;
    Ok(q
        .values
        .iter()
        .zip(&p.values)
        .map(|(g, s)| g * (g / (s + epsilon) + epsilon).ln())
        .sum())
}
