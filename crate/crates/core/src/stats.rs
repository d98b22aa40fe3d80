//! Correlation statistics between metric outputs and subjective scores.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Predictions and subjective scores for the variants of one source image.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredGroup {
    pub group_id: String,
    /// `(prediction, mos)` pairs.
    pub items: Vec<(f64, f64)>,
}

impl ScoredGroup {
    pub fn new(group_id: impl Into<String>, items: Vec<(f64, f64)>) -> Self {
        Self {
            group_id: group_id.into(),
            items,
        }
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Parameter(format!(
            "vector lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::Parameter(format!(
            "correlation needs at least 3 samples, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in correlation input".into()));
    }
    Ok(())
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("constant vector has no correlation".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson linear correlation coefficient.
pub fn plcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson_unchecked(x, y)
}

/// 1-based ranks; tied values get the mean of the ranks they span.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let shared = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = shared;
        }
        start = end;
    }
    ranks
}

/// Spearman rank-order correlation with average ranks for ties.
pub fn srocc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson_unchecked(&fractional_ranks(x), &fractional_ranks(y))
}

/// Fraction of concordant pairs, averaged over groups.
///
/// Pairs with equal MOS are skipped; equal predictions score one half.
/// Groups without any scorable pair do not contribute.
pub fn fraccp(groups: &[ScoredGroup]) -> Result<f64> {
    let mut total = 0.0;
    let mut scored = 0usize;
    for group in groups {
        let mut concordant = 0.0;
        let mut pairs = 0usize;
        for (i, a) in group.items.iter().enumerate() {
            for b in &group.items[i + 1..] {
                let truth = a.1.partial_cmp(&b.1);
                if matches!(truth, Some(Ordering::Equal) | None) {
                    continue;
                }
                pairs += 1;
                match a.0.partial_cmp(&b.0) {
                    Some(Ordering::Equal) => concordant += 0.5,
                    ord if ord == truth => concordant += 1.0,
                    _ => {}
                }
            }
        }
        if pairs > 0 {
            total += concordant / pairs as f64;
            scored += 1;
        }
    }
    if scored == 0 {
        return Err(Error::Degenerate(
            "no group has a pair with distinct MOS".into(),
        ));
    }
    Ok(total / scored as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn srocc_examples() {
        assert!((srocc(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap() + 0.5).abs() < 1e-12);
        let x = [0.3, 1.7, -2.0, 5.0, 4.4];
        let y: Vec<f64> = x.iter().map(|v: &f64| v.powi(3).exp()).collect();
        assert!((srocc(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let rev: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((srocc(&x, &rev).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn srocc_errors() {
        assert!(matches!(srocc(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::Parameter(_))));
        assert!(matches!(
            srocc(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            srocc(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn plcc_examples() {
        let x = [0.0, 1.0, 2.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 5.0).collect();
        assert!((plcc(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        assert!((plcc(&x, &[0.0, -1.0, -2.0]).unwrap() + 1.0).abs() < 1e-12);
        // 4 / sqrt(2 * 26/3)
        let expected = 4.0 / (2.0_f64 * 26.0 / 3.0).sqrt();
        assert!((plcc(&x, &[0.0, 1.0, 4.0]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.9607).abs() < 1e-4);
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(fractional_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn fraccp_examples() {
        let g = ScoredGroup::new("a", vec![(1.0, 10.0), (2.0, 20.0), (3.0, 15.0)]);
        assert!((fraccp(&[g]).unwrap() - 2.0 / 3.0).abs() < 1e-15);

        let perfect = vec![
            ScoredGroup::new("a", vec![(1.0, 1.0), (2.0, 2.0)]),
            ScoredGroup::new("b", vec![(0.1, 5.0), (0.3, 7.0), (0.2, 6.0)]),
        ];
        assert_eq!(fraccp(&perfect).unwrap(), 1.0);
        let anti: Vec<ScoredGroup> = perfect
            .iter()
            .map(|g| ScoredGroup::new(g.group_id.clone(), g.items.iter().map(|(p, m)| (-p, *m)).collect()))
            .collect();
        assert_eq!(fraccp(&anti).unwrap(), 0.0);
    }

    #[test]
    fn fraccp_ties_and_skips() {
        let tied_pred = ScoredGroup::new("a", vec![(1.0, 1.0), (1.0, 2.0)]);
        assert_eq!(fraccp(std::slice::from_ref(&tied_pred)).unwrap(), 0.5);
        let tied_mos = ScoredGroup::new("b", vec![(1.0, 3.0), (2.0, 3.0)]);
        assert_eq!(fraccp(&[tied_pred, tied_mos.clone()]).unwrap(), 0.5);
        assert!(matches!(fraccp(&[tied_mos]), Err(Error::Degenerate(_))));
        assert!(fraccp(&[]).is_err());
    }
}
