//! Explanation maps computed from exported feature and gradient tensors.
//!
//! No network runs here. A model wrapper dumps the last-layer activations
//! (and, for CAM methods, the gradients of the prediction with respect to
//! them) as `FTNS` files; this module turns those tensors into maps.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::saliency::{NormState, SaliencyMap};

const FTNS_MAGIC: &[u8; 4] = b"FTNS";
const FTNS_VERSION: u32 = 1;

/// A K×H×W activation (or gradient) tensor, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Parameter(format!(
                "tensor dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::Parameter(format!(
                "expected {} values for {channels}x{height}x{width}, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("tensor contains NaN or infinite values".into()));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn spatial_len(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        let n = self.spatial_len();
        &self.data[k * n..(k + 1) * n]
    }

    /// Parses the little-endian `FTNS` v1 layout.
    pub fn read_from(mut reader: impl Read) -> std::io::Result<std::result::Result<Self, String>> {
        let mut header = [0u8; 20];
        match reader.read_exact(&mut header) {
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                return Ok(Err("file shorter than the 20-byte header".into()));
            }
            other => other?,
        }
        if &header[0..4] != FTNS_MAGIC {
            return Ok(Err("missing FTNS magic".into()));
        }
        let field = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        let version = field(4);
        if version != FTNS_VERSION {
            return Ok(Err(format!("unsupported FTNS version {version}")));
        }
        let (k, h, w) = (field(8) as usize, field(12) as usize, field(16) as usize);
        let count = k
            .checked_mul(h)
            .and_then(|v| v.checked_mul(w))
            .ok_or_else(|| std::io::Error::other("tensor size overflows"))?;
        let mut payload = Vec::new();
        reader.read_to_end(&mut payload)?;
        if payload.len() != count * 4 {
            return Ok(Err(format!(
                "expected {} payload bytes for {k}x{h}x{w}, found {}",
                count * 4,
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        Ok(Self::new(k, h, w, data).map_err(|e| e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
            .map_err(|e| Error::io(path, e))?
            .map_err(|reason| Error::Format {
                path: path.to_path_buf(),
                reason,
            })
    }

    /// Serializes as `FTNS` v1; values are narrowed to `f32`.
    pub fn write_to(&self, mut writer: impl Write) -> std::io::Result<()> {
        writer.write_all(FTNS_MAGIC)?;
        for v in [
            FTNS_VERSION,
            self.channels as u32,
            self.height as u32,
            self.width as u32,
        ] {
            writer.write_all(&v.to_le_bytes())?;
        }
        for v in &self.data {
            writer.write_all(&(*v as f32).to_le_bytes())?;
        }
        writer.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CamMode {
    /// Channels weighted by their spatially averaged gradient (GradCAM).
    #[default]
    Weighted,
    /// Element-wise gradient ⊙ activation summed over channels (HiResCAM).
    Elementwise,
}

/// Combines activations and gradients into a class activation map.
///
/// With `relu_output` unset the signed sum is returned, so the resulting
/// map may hold negative values.
pub fn gradcam_combine(
    features: &FeatureTensor,
    gradients: &FeatureTensor,
    mode: CamMode,
    relu_output: bool,
) -> Result<SaliencyMap> {
    if (features.channels, features.height, features.width)
        != (gradients.channels, gradients.height, gradients.width)
    {
        return Err(Error::Parameter(format!(
            "feature tensor {}x{}x{} and gradient tensor {}x{}x{} differ in shape",
            features.channels,
            features.height,
            features.width,
            gradients.channels,
            gradients.height,
            gradients.width
        )));
    }
    if features.data.iter().chain(&gradients.data).any(|v| v.is_nan()) {
        return Err(Error::Data("NaN in CAM inputs".into()));
    }
    let n = features.spatial_len();
    let mut out = vec![0.0; n];
    match mode {
        CamMode::Weighted => {
            for k in 0..features.channels {
                // alpha is a plain constant: nothing here is differentiated
                let alpha = gradients.channel(k).iter().sum::<f64>() / n as f64;
                for (o, a) in out.iter_mut().zip(features.channel(k)) {
                    *o += alpha * a;
                }
            }
        }
        CamMode::Elementwise => {
            for k in 0..features.channels {
                for ((o, a), g) in out
                    .iter_mut()
                    .zip(features.channel(k))
                    .zip(gradients.channel(k))
                {
                    *o += g * a;
                }
            }
        }
    }
    if relu_output {
        out.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    Ok(SaliencyMap::from_parts(
        features.width,
        features.height,
        out,
        NormState::Raw,
    ))
}

/// Leading singular triplet of a dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RankOne {
    pub sigma: f64,
    /// Left singular vector, length `rows`.
    pub u: Vec<f64>,
    /// Right singular vector, length `cols`.
    pub v: Vec<f64>,
}

/// Best rank-1 approximation of a row-major `rows × cols` matrix.
///
/// Diagonalizes the smaller Gram matrix with cyclic Jacobi rotations and
/// recovers the other singular vector by projection.
pub fn best_rank_one(matrix: &[f64], rows: usize, cols: usize) -> Result<RankOne> {
    if rows == 0 || cols == 0 || matrix.len() != rows * cols {
        return Err(Error::Parameter(format!(
            "matrix of {} values is not {rows}x{cols}",
            matrix.len()
        )));
    }
    let at = |r: usize, c: usize| matrix[r * cols + c];
    let wide = rows <= cols;
    let n = if wide { rows } else { cols };
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let dot: f64 = if wide {
                (0..cols).map(|c| at(i, c) * at(j, c)).sum()
            } else {
                (0..rows).map(|r| at(r, i) * at(r, j)).sum()
            };
            gram[i * n + j] = dot;
            gram[j * n + i] = dot;
        }
    }
    let (values, vectors) = symmetric_eigen(gram, n);
    let top = (0..n)
        .max_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("n >= 1");
    if !(values[top] > 0.0) {
        return Err(Error::DegenerateTensor("matrix is all zeros".into()));
    }
    let leading: Vec<f64> = (0..n).map(|i| vectors[i * n + top]).collect();

    // project through the matrix to get the other side, then normalize it;
    // its norm is sigma
    let other: Vec<f64> = if wide {
        (0..cols)
            .map(|c| (0..rows).map(|r| at(r, c) * leading[r]).sum())
            .collect()
    } else {
        (0..rows)
            .map(|r| (0..cols).map(|c| at(r, c) * leading[c]).sum())
            .collect()
    };
    let sigma = other.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(sigma > 0.0) {
        return Err(Error::DegenerateTensor("matrix is all zeros".into()));
    }
    let other: Vec<f64> = other.into_iter().map(|v| v / sigma).collect();
    let (u, v) = if wide {
        (leading, other)
    } else {
        (other, leading)
    };
    Ok(RankOne { sigma, u, v })
}

/// Eigen-decomposition of a symmetric row-major matrix by cyclic Jacobi.
/// Returns eigenvalues and the eigenvector matrix (eigenvectors as columns).
fn symmetric_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum();
        if off <= scale * 1e-32 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    (values, v)
}

/// First principal spatial component of the channel × position matrix.
///
/// Returns `σ₁·v₁` reshaped to H×W, with the sign chosen so the map sums to
/// a nonnegative value and negative entries clamped to zero.
pub fn svd_first_component(features: &FeatureTensor) -> Result<SaliencyMap> {
    if features.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("tensor contains NaN or infinite values".into()));
    }
    if features.data.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateTensor("all-zero feature tensor".into()));
    }
    let rank_one = best_rank_one(&features.data, features.channels, features.spatial_len())?;
    let sign = if rank_one.v.iter().sum::<f64>() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let values = rank_one
        .v
        .iter()
        .map(|v| (sign * rank_one.sigma * v).max(0.0))
        .collect();
    Ok(SaliencyMap::from_parts(
        features.width,
        features.height,
        values,
        NormState::Raw,
    ))
}

/// Element-wise mean of pre-aligned maps.
pub fn aggregate_maps(maps: &[SaliencyMap]) -> Result<SaliencyMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::Parameter("no maps to aggregate".into()))?;
    if let Some(bad) = maps.iter().find(|m| !m.same_dims(first)) {
        return Err(Error::Parameter(format!(
            "map {}x{} does not match {}x{}",
            bad.width(),
            bad.height(),
            first.width(),
            first.height()
        )));
    }
    let mut sum = vec![0.0; first.len()];
    for m in maps {
        for (s, v) in sum.iter_mut().zip(m.values()) {
            *s += v;
        }
    }
    let count = maps.len() as f64;
    Ok(SaliencyMap::from_parts(
        first.width(),
        first.height(),
        sum.into_iter().map(|s| s / count).collect(),
        NormState::Raw,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(k: usize, h: usize, w: usize, data: &[f64]) -> FeatureTensor {
        FeatureTensor::new(k, h, w, data.to_vec()).unwrap()
    }

    #[test]
    fn gradcam_hand_example() {
        let f = tensor(1, 2, 2, &[1.0, -2.0, 3.0, 0.0]);
        let g = tensor(1, 2, 2, &[0.5; 4]);
        let m = gradcam_combine(&f, &g, CamMode::Weighted, true).unwrap();
        assert_eq!(m.values(), &[0.5, 0.0, 1.5, 0.0]);
        assert_eq!(m.norm_state(), NormState::Raw);

        let signed = gradcam_combine(&f, &g, CamMode::Weighted, false).unwrap();
        assert_eq!(signed.values(), &[0.5, -1.0, 1.5, 0.0]);
    }

    #[test]
    fn gradcam_unit_and_zero_gradients() {
        let f = tensor(1, 1, 3, &[0.2, -0.4, 0.0]);
        let ones = tensor(1, 1, 3, &[1.0; 3]);
        let m = gradcam_combine(&f, &ones, CamMode::Weighted, true).unwrap();
        assert_eq!(m.values(), &[0.2, 0.0, 0.0]);
        let zeros = tensor(1, 1, 3, &[0.0; 3]);
        let m = gradcam_combine(&f, &zeros, CamMode::Weighted, true).unwrap();
        assert!(m.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn elementwise_mode() {
        let f = tensor(2, 1, 2, &[1.0, 2.0, 3.0, -4.0]);
        let g = tensor(2, 1, 2, &[1.0, -1.0, 0.5, 0.5]);
        let m = gradcam_combine(&f, &g, CamMode::Elementwise, true).unwrap();
        assert_eq!(m.values(), &[2.5, 0.0]);
    }

    #[test]
    fn gradcam_shape_mismatch() {
        let f = tensor(1, 2, 2, &[0.0; 4]);
        let g = tensor(2, 2, 2, &[0.0; 8]);
        assert!(matches!(
            gradcam_combine(&f, &g, CamMode::Weighted, true),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            FeatureTensor::new(1, 1, 1, vec![f64::NAN]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn svd_single_channel_is_the_channel() {
        let f = tensor(1, 2, 2, &[-1.0, -2.0, -0.5, -3.0]);
        let m = svd_first_component(&f).unwrap();
        for (a, b) in m.values().iter().zip([1.0, 2.0, 0.5, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn svd_rank_one_recovery() {
        let pattern = [0.1, 0.9, 0.4, 0.0, 2.0, 0.3];
        let coeffs = [1.0, 0.5, 3.0];
        let data: Vec<f64> = coeffs
            .iter()
            .flat_map(|c| pattern.iter().map(move |p| c * p))
            .collect();
        let m = svd_first_component(&tensor(3, 2, 3, &data)).unwrap();
        let ratio = m.values()[4] / pattern[4];
        for (a, b) in m.values().iter().zip(pattern) {
            assert!((a - ratio * b).abs() <= 1e-8 * ratio * 2.0);
        }
    }

    #[test]
    fn svd_all_zero_is_degenerate() {
        assert!(matches!(
            svd_first_component(&tensor(2, 1, 2, &[0.0; 4])),
            Err(Error::DegenerateTensor(_))
        ));
    }

    #[test]
    fn tall_and_wide_agree() {
        let m = [3.0, 1.0, 0.5, 1.0, 2.0, -1.0];
        let wide = best_rank_one(&m, 2, 3).unwrap();
        let mt = [3.0, 1.0, 1.0, 2.0, 0.5, -1.0];
        let tall = best_rank_one(&mt, 3, 2).unwrap();
        assert!((wide.sigma - tall.sigma).abs() < 1e-12);
    }

    #[test]
    fn aggregate_examples() {
        let a = SaliencyMap::new(2, 1, vec![0.0, 1.0]).unwrap();
        let b = SaliencyMap::new(2, 1, vec![1.0, 0.0]).unwrap();
        assert_eq!(aggregate_maps(&[a.clone(), b]).unwrap().values(), &[0.5, 0.5]);
        assert_eq!(aggregate_maps(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(aggregate_maps(&[a.clone(), a.clone(), a.clone()]).unwrap(), a);
        assert!(aggregate_maps(&[]).is_err());
        let c = SaliencyMap::new(1, 1, vec![1.0]).unwrap();
        assert!(aggregate_maps(&[a, c]).is_err());
    }

    #[test]
    fn ftns_round_trip_and_rejects_garbage() {
        let t = tensor(2, 1, 2, &[0.5, -1.25, 3.0, 0.0]);
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"FTNS");
        assert_eq!(buf.len(), 20 + 16);
        let back = FeatureTensor::read_from(buf.as_slice()).unwrap().unwrap();
        assert_eq!(back, t);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(FeatureTensor::read_from(bad.as_slice()).unwrap().is_err());
        let short = &buf[..buf.len() - 1];
        assert!(FeatureTensor::read_from(short).unwrap().is_err());
    }
}
