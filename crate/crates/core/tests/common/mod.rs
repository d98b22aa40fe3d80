//! Independent reference implementations used to check the library.
//!
//! Nothing here calls into the code paths being verified; each oracle
//! follows the textbook definition as literally as possible.

#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn random_plane(rng: &mut StdRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen::<f64>()).collect()
}

/// SSIM evaluated window by window with an explicit 2-D Gaussian weight
/// table and replicated borders.
pub fn ssim_brute_force(
    x: &[f64],
    y: &[f64],
    width: usize,
    height: usize,
    window: usize,
    sigma: f64,
    k1: f64,
    k2: f64,
    range: f64,
) -> (f64, Vec<f64>) {
    let r = (window / 2) as isize;
    let mut weights = vec![vec![0.0; window]; window];
    let mut total = 0.0;
    for (i, row) in weights.iter_mut().enumerate() {
        for (j, w) in row.iter_mut().enumerate() {
            let dy = i as f64 - r as f64;
            let dx = j as f64 - r as f64;
            *w = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            total += *w;
        }
    }
    let c1 = (k1 * range) * (k1 * range);
    let c2 = (k2 * range) * (k2 * range);
    let sample = |p: &[f64], px: isize, py: isize| {
        let cx = px.clamp(0, width as isize - 1) as usize;
        let cy = py.clamp(0, height as isize - 1) as usize;
        p[cy * width + cx]
    };
    let mut map = Vec::with_capacity(width * height);
    for py in 0..height as isize {
        for px in 0..width as isize {
            let (mut mx, mut my) = (0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let w = weights[(dy + r) as usize][(dx + r) as usize] / total;
                    mx += w * sample(x, px + dx, py + dy);
                    my += w * sample(y, px + dx, py + dy);
                }
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let w = weights[(dy + r) as usize][(dx + r) as usize] / total;
                    let a = sample(x, px + dx, py + dy) - mx;
                    let b = sample(y, px + dx, py + dy) - my;
                    vx += w * a * a;
                    vy += w * b * b;
                    cov += w * a * b;
                }
            }
            let s = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            map.push(s);
        }
    }
    let mean = map.iter().sum::<f64>() / map.len() as f64;
    (mean, map)
}

/// Rank of each value as 1 + (#smaller) + (#equal - 1) / 2, counted pairwise.
pub fn explicit_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let smaller = v.iter().filter(|b| *b < a).count() as f64;
            let equal = v.iter().filter(|b| *b == a).count() as f64;
            1.0 + smaller + (equal - 1.0) / 2.0
        })
        .collect()
}

/// Pearson's r from raw sums.
pub fn textbook_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

pub fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    textbook_pearson(&explicit_ranks(x), &explicit_ranks(y))
}

/// GradCAM by direct summation over a nested K×H×W array.
pub fn gradcam_direct(
    features: &[Vec<Vec<f64>>],
    gradients: &[Vec<Vec<f64>>],
) -> Vec<Vec<f64>> {
    let k = features.len();
    let h = features[0].len();
    let w = features[0][0].len();
    let z = (h * w) as f64;
    let mut alphas = vec![0.0; k];
    for c in 0..k {
        let mut s = 0.0;
        for i in 0..h {
            for j in 0..w {
                s += gradients[c][i][j];
            }
        }
        alphas[c] = s / z;
    }
    let mut out = vec![vec![0.0; w]; h];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for c in 0..k {
                acc += alphas[c] * features[c][i][j];
            }
            out[i][j] = if acc > 0.0 { acc } else { 0.0 };
        }
    }
    out
}

/// Fraction of concordant pairs by enumerating ordered pairs with mos_a > mos_b.
pub fn fraccp_brute_force(groups: &[Vec<(f64, f64)>]) -> Option<f64> {
    let mut scores = Vec::new();
    for items in groups {
        let mut hits = 0.0;
        let mut count = 0usize;
        for (a, ia) in items.iter().enumerate() {
            for (b, ib) in items.iter().enumerate() {
                if a == b || !(ia.1 > ib.1) {
                    continue;
                }
                count += 1;
                if ia.0 > ib.0 {
                    hits += 1.0;
                } else if ia.0 == ib.0 {
                    hits += 0.5;
                }
            }
        }
        if count > 0 {
            scores.push(hits / count as f64);
        }
    }
    if scores.is_empty() {
        None
    } else {
        Some(scores.iter().sum::<f64>() / scores.len() as f64)
    }
}

/// Bradley-Terry log-likelihood for win counts `wins[i][j]` at log-strengths `s`.
pub fn bt_log_likelihood(wins: &[Vec<f64>], s: &[f64]) -> f64 {
    let mut ll = 0.0;
    for i in 0..s.len() {
        for j in 0..s.len() {
            if wins[i][j] > 0.0 {
                ll += wins[i][j] * (s[i] - (s[i].exp() + s[j].exp()).ln());
            }
        }
    }
    ll
}

pub fn random_ints(rng: &mut StdRng, n: usize, hi: i32) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0..hi) as f64).collect()
}
