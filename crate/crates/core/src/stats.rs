//! Summary statistics used by the metrics pipeline and the trend tests.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} values vs {1} weights")]
    LengthMismatch(usize, usize),
    #[error("weights sum to {0}, expected 1")]
    WeightsNotNormalized(f64),
    #[error("need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("x values are all equal")]
    DegenerateX,
}

/// Population-weighted mean `Σ v·w`. Weights must sum to one.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> Result<f64, StatsError> {
    if values.len() != weights.len() {
        return Err(StatsError::LengthMismatch(values.len(), weights.len()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(StatsError::WeightsNotNormalized(total));
    }
    Ok(values.iter().zip(weights).map(|(v, w)| v * w).sum())
}

/// 1-based ranks in ascending order; tied values share the mean of the ranks
/// they span. `-inf` ranks lowest. NaN must be filtered by the caller.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1 ..= end
        let mean = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mean;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
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
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Spearman rank correlation with tie-averaged ranks. A constant series has
/// correlation 0 by definition.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooShort { needed: 3, got: x.len() });
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// Coefficient of determination of the least-squares polynomial fit of the
/// given degree. Columns are orthogonalized (modified Gram-Schmidt) on a
/// rescaled x to stay well conditioned for long generation series.
fn r_squared(x: &[f64], y: &[f64], degree: usize) -> f64 {
    let n = x.len();
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let xs: Vec<f64> = x.iter().map(|v| (v - mid) / half).collect();

    let mean_y = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    if sst == 0.0 {
        return 1.0;
    }

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(degree + 1);
    let mut residual = y.to_vec();
    for d in 0..=degree {
        let mut col: Vec<f64> = xs.iter().map(|v| v.powi(d as i32)).collect();
        for q in &basis {
            let dot: f64 = col.iter().zip(q).map(|(a, b)| a * b).sum();
            col.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = col.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        col.iter_mut().for_each(|a| *a /= norm);
        let dot: f64 = residual.iter().zip(&col).map(|(a, b)| a * b).sum();
        residual.iter_mut().zip(&col).for_each(|(a, b)| *a -= dot * b);
        basis.push(col);
    }
    let sse: f64 = residual.iter().map(|r| r * r).sum();
    1.0 - sse / sst
}

/// `R²(quadratic) − R²(linear)`: how much a curved fit improves on a straight
/// line. Non-negative because the models are nested.
pub fn polyfit_gain(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 5 {
        return Err(StatsError::TooShort { needed: 5, got: x.len() });
    }
    if x.iter().all(|v| *v == x[0]) {
        return Err(StatsError::DegenerateX);
    }
    Ok((r_squared(x, y, 2) - r_squared(x, y, 1)).max(0.0))
}

/// Shannon entropy `−Σ p ln p` of the population ratios (zero entries skipped).
pub fn lineage_entropy(ratios: &[f64]) -> f64 {
    -ratios.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn weighted_mean_examples() {
        assert_eq!(weighted_mean(&[1.0, 3.0], &[0.5, 0.5]), Ok(2.0));
        assert_eq!(weighted_mean(&[7.0], &[1.0]), Ok(7.0));
        assert_abs_diff_eq!(weighted_mean(&[1.0, 2.0, 3.0], &[0.2, 0.3, 0.5]).unwrap(), 2.3, epsilon = 1e-12);
    }

    #[test]
    fn weighted_mean_rejects_bad_input() {
        assert_eq!(weighted_mean(&[1.0], &[0.5, 0.5]), Err(StatsError::LengthMismatch(1, 2)));
        assert!(matches!(weighted_mean(&[1.0, 2.0], &[0.5, 0.6]), Err(StatsError::WeightsNotNormalized(_))));
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[5.0, 2.0, 9.0]), vec![2.0, 1.0, 3.0]);
        assert_eq!(average_ranks(&[3.0, 3.0]), vec![1.5, 1.5]);
        assert_eq!(average_ranks(&[1.0, f64::NEG_INFINITY, 1.0, 0.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn spearman_monotone_series() {
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn spearman_constant_is_zero() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]), Ok(0.0));
    }

    #[test]
    fn spearman_needs_three_points() {
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn polyfit_gain_linear_is_zero() {
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 2.0).collect();
        assert_abs_diff_eq!(polyfit_gain(&x, &y).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn polyfit_gain_constant_is_zero() {
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(polyfit_gain(&x, &[2.5; 10]), Ok(0.0));
    }

    #[test]
    fn polyfit_gain_rejects_degenerate_x() {
        assert_eq!(polyfit_gain(&[1.0; 6], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), Err(StatsError::DegenerateX));
        assert!(polyfit_gain(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(lineage_entropy(&[1.0]), 0.0);
        assert_abs_diff_eq!(lineage_entropy(&[0.5, 0.5]), std::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(lineage_entropy(&vec![1e-3; 1000]), 1000f64.ln(), epsilon = 1e-9);
    }
}
