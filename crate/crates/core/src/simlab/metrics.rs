//! Evaluation metrics: CRPS, interval width and coverage, HPD-based variable
//! selection, and quantile calibration.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Per-replicate metric summary.
#[derive(Debug, Clone, Default)]
pub struct MetricReport {
    pub interval_width: f64,
    pub coverage: f64,
    pub crps: f64,
    pub tpr: f64,
    pub tnr: f64,
    pub quantile_calibration: f64,
}

/// CRPS of one predictive sample against one realized value, using the exact
/// all-pairs estimator `mean|Y - y| - 0.5 mean|Y - Y'|`. The pairwise mean
/// is computed in O(S log S) from the sorted draws, so no pair subsampling
/// is needed at any S.
pub fn crps_single(draws: &[f64], y: f64) -> Result<f64> {
    let s = draws.len();
    if s < 2 {
        return Err(Error::InsufficientData("CRPS needs at least 2 draws".into()));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let term1 = sorted.iter().map(|&d| (d - y).abs()).sum::<f64>() / s as f64;
    // sum_{i<j} (x_(j) - x_(i)) = sum_i (2i + 1 - S) x_(i) (0-indexed), so
    // 0.5 * mean over ordered pairs |Y - Y'| equals pair_sum / S^2
    let mut pair_sum = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        pair_sum += (2.0 * i as f64 + 1.0 - s as f64) * v;
    }
    Ok(term1 - pair_sum / (s as f64 * s as f64))
}

/// Mean CRPS over test points; rows of `predictive` are draws, columns are
/// test points.
pub fn metric_crps(predictive: &DMatrix<f64>, y_test: &[f64]) -> Result<f64> {
    if predictive.ncols() != y_test.len() {
        return Err(Error::Domain(format!(
            "predictive has {} columns but y_test has {} entries",
            predictive.ncols(),
            y_test.len()
        )));
    }
    let mut total = 0.0;
    let mut col = vec![0.0; predictive.nrows()];
    for (j, &y) in y_test.iter().enumerate() {
        for (i, v) in col.iter_mut().enumerate() {
            *v = predictive[(i, j)];
        }
        total += crps_single(&col, y)?;
    }
    Ok(total / y_test.len() as f64)
}

/// Shortest interval containing a `level` fraction of the draws.
pub fn hpd_interval(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    let s = draws.len();
    if s < 2 {
        return Err(Error::InsufficientData("HPD needs at least 2 draws".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("level must be in (0,1), got {level}")));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((level * s as f64).ceil() as usize).clamp(1, s);
    let mut best = (sorted[0], sorted[s - 1]);
    let mut best_width = f64::INFINITY;
    for i in 0..=(s - k) {
        let w = sorted[i + k - 1] - sorted[i];
        if w < best_width {
            best_width = w;
            best = (sorted[i], sorted[i + k - 1]);
        }
    }
    Ok(best)
}

/// HPD-exclusion variable selection: TPR over truly nonzero coefficients,
/// TNR over true zeros. `theta_draws` columns are coefficients (no
/// intercept), matching `theta_true`.
pub fn metric_selection(
    theta_draws: &DMatrix<f64>,
    theta_true: &[f64],
    level: f64,
) -> Result<(f64, f64)> {
    if theta_draws.ncols() != theta_true.len() {
        return Err(Error::Domain("coefficient count mismatch".into()));
    }
    if theta_draws.nrows() < 100 {
        return Err(Error::InsufficientData(
            "selection needs at least 100 draws".into(),
        ));
    }
    let mut col = vec![0.0; theta_draws.nrows()];
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (j, &truth) in theta_true.iter().enumerate() {
        for (i, v) in col.iter_mut().enumerate() {
            *v = theta_draws[(i, j)];
        }
        let (lo, hi) = hpd_interval(&col, level)?;
        let selected = lo > 0.0 || hi < 0.0;
        if truth != 0.0 {
            pos += 1;
            if selected {
                tp += 1;
            }
        } else {
            neg += 1;
            if !selected {
                tn += 1;
            }
        }
    }
    let tpr = if pos == 0 { 1.0 } else { tp as f64 / pos as f64 };
    let tnr = if neg == 0 { 1.0 } else { tn as f64 / neg as f64 };
    Ok((tpr, tnr))
}

/// Empirical quantile of a sample (linear interpolation between order
/// statistics).
pub fn sample_quantile(sorted: &[f64], p: f64) -> f64 {
    let s = sorted.len();
    let pos = p * (s - 1) as f64;
    let k = pos.floor() as usize;
    if k + 1 >= s {
        return sorted[s - 1];
    }
    let frac = pos - k as f64;
    sorted[k] + frac * (sorted[k + 1] - sorted[k])
}

/// Equal-tailed predictive intervals: mean width and empirical coverage over
/// test points.
pub fn metric_interval(
    predictive: &DMatrix<f64>,
    y_test: &[f64],
    level: f64,
) -> Result<(f64, f64)> {
    if predictive.ncols() != y_test.len() {
        return Err(Error::Domain("test size mismatch".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("level must be in (0,1), got {level}")));
    }
    let tail = (1.0 - level) / 2.0;
    let mut width_sum = 0.0;
    let mut covered = 0usize;
    let mut col = vec![0.0; predictive.nrows()];
    for (j, &y) in y_test.iter().enumerate() {
        for (i, v) in col.iter_mut().enumerate() {
            *v = predictive[(i, j)];
        }
        col.sort_by(f64::total_cmp);
        let lo = sample_quantile(&col, tail);
        let hi = sample_quantile(&col, 1.0 - tail);
        width_sum += hi - lo;
        if y >= lo && y <= hi {
            covered += 1;
        }
    }
    Ok((
        width_sum / y_test.len() as f64,
        covered as f64 / y_test.len() as f64,
    ))
}

/// Proportion of test responses strictly below the estimated quantile; for a
/// calibrated tau-quantile estimate this should be close to tau.
pub fn quantile_calibration(quantile_estimates: &[f64], y_test: &[f64]) -> Result<f64> {
    if quantile_estimates.len() != y_test.len() {
        return Err(Error::Domain("test size mismatch".into()));
    }
    if y_test.is_empty() {
        return Err(Error::InsufficientData("empty test set".into()));
    }
    let below = quantile_estimates
        .iter()
        .zip(y_test)
        .filter(|(q, y)| y < q)
        .count();
    Ok(below as f64 / y_test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::master;
    use approx::assert_abs_diff_eq;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    #[test]
    fn crps_two_point_hand_oracle() {
        // empirical CDF of {0, 1} scored at 0.5 integrates to exactly 0.25
        assert_abs_diff_eq!(crps_single(&[0.0, 1.0], 0.5).unwrap(), 0.25, epsilon = 1e-14);
        assert!(crps_single(&[1.0], 0.5).is_err());
    }

    #[test]
    fn crps_sorted_formula_matches_naive_pairs() {
        let mut rng = master(7);
        let draws: Vec<f64> = (0..61).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let y = 0.4;
        let s = draws.len() as f64;
        let term1 = draws.iter().map(|&d| (d - y).abs()).sum::<f64>() / s;
        let mut pairs = 0.0;
        for &a in &draws {
            for &b in &draws {
                pairs += (a - b).abs();
            }
        }
        let naive = term1 - 0.5 * pairs / (s * s);
        assert_abs_diff_eq!(crps_single(&draws, y).unwrap(), naive, epsilon = 1e-12);
    }

    #[test]
    fn crps_of_standard_normal_draws_matches_theory() {
        // CRPS of N(0,1) scored at its center is (sqrt(2) - 1) / sqrt(pi)
        let mut rng = master(13);
        let draws: Vec<f64> = (0..20000)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let got = crps_single(&draws, 0.0).unwrap();
        assert_abs_diff_eq!(got, 0.23369497725510913, epsilon = 0.005);
    }

    #[test]
    fn crps_is_translation_equivariant_in_scale() {
        let mut rng = master(17);
        let draws: Vec<f64> = (0..500).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let base = crps_single(&draws, 0.2).unwrap();
        let shifted: Vec<f64> = draws.iter().map(|&d| d + 10.0).collect();
        assert_abs_diff_eq!(crps_single(&shifted, 10.2).unwrap(), base, epsilon = 1e-10);
        let scaled: Vec<f64> = draws.iter().map(|&d| 3.0 * d).collect();
        assert_abs_diff_eq!(crps_single(&scaled, 0.6).unwrap(), 3.0 * base, epsilon = 1e-10);
    }

    #[test]
    fn hpd_prefers_the_shortest_window() {
        let grid: Vec<f64> = (0..101).map(|k| k as f64 / 100.0).collect();
        let (lo, hi) = hpd_interval(&grid, 0.5).unwrap();
        assert_abs_diff_eq!(hi - lo, 0.5, epsilon = 1e-12);
        // a tight cluster plus one outlier: the 90% window excludes the outlier
        let mut draws = vec![0.0; 9];
        draws.push(10.0);
        let (lo, hi) = hpd_interval(&draws, 0.9).unwrap();
        assert_abs_diff_eq!(lo, 0.0);
        assert_abs_diff_eq!(hi, 0.0);
        assert!(hpd_interval(&grid, 1.0).is_err());
    }

    #[test]
    fn selection_separates_signal_from_noise() {
        let mut rng = master(29);
        let s = 500;
        let draws = DMatrix::from_fn(s, 2, |_, j| {
            let centre = if j == 0 { 1.0 } else { 0.0 };
            centre + 0.1 * rng.sample::<f64, _>(StandardNormal)
        });
        let (tpr, tnr) = metric_selection(&draws, &[1.0, 0.0], 0.95).unwrap();
        assert_abs_diff_eq!(tpr, 1.0);
        assert_abs_diff_eq!(tnr, 1.0);
        let few = DMatrix::zeros(50, 2);
        assert!(metric_selection(&few, &[1.0, 0.0], 0.95).is_err());
    }

    #[test]
    fn sample_quantile_interpolates_order_statistics() {
        assert_abs_diff_eq!(sample_quantile(&[0.0, 1.0, 2.0], 0.5), 1.0);
        assert_abs_diff_eq!(sample_quantile(&[0.0, 1.0, 2.0, 3.0], 0.25), 0.75);
        assert_abs_diff_eq!(sample_quantile(&[0.0, 1.0], 1.0), 1.0);
    }

    #[test]
    fn interval_width_matches_normal_oracle() {
        let mut rng = master(37);
        let s = 20000;
        let predictive = DMatrix::from_fn(s, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let (width, coverage) = metric_interval(&predictive, &[0.0, 5.0], 0.9).unwrap();
        // equal-tailed 90% interval of N(0,1) has width 2 * 1.6448536...
        assert_abs_diff_eq!(width, 2.0 * 1.6448536269514722, epsilon = 0.06);
        assert_abs_diff_eq!(coverage, 0.5);
    }

    #[test]
    fn quantile_calibration_counts_exceedances() {
        let q = vec![0.5, 0.5, 0.5, 0.5];
        let y = vec![0.0, 1.0, 0.2, 0.9];
        assert_abs_diff_eq!(quantile_calibration(&q, &y).unwrap(), 0.5);
        assert!(quantile_calibration(&q, &[0.0]).is_err());
    }
}
