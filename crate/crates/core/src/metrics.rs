//! Regression metrics, REC curves and Taylor-diagram statistics.
//!
//! Variances use the population (1/n) convention throughout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {pred} predictions vs {actual} actual values")]
    LengthMismatch { pred: usize, actual: usize },
    #[error("empty input")]
    Empty,
    #[error("{0} series is constant")]
    Constant(&'static str),
    #[error("tolerance grid must be non-negative and ascending")]
    BadGrid,
    #[error("non-finite value in input")]
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecCurve {
    pub tolerances: Vec<f64>,
    pub coverage: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorStats {
    pub std_pred: f64,
    pub std_ref: f64,
    pub correlation: f64,
    pub centered_rmse: f64,
}

fn check(pred: &[f64], actual: &[f64]) -> Result<(), MetricsError> {
    if pred.len() != actual.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            actual: actual.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    if pred.iter().chain(actual).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn regression_report(pred: &[f64], actual: &[f64]) -> Result<RegressionReport, MetricsError> {
    check(pred, actual)?;
    let n = pred.len() as f64;
    let y_bar = mean(actual);
    let ss_tot: f64 = actual.iter().map(|y| (y - y_bar).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(MetricsError::Constant("actual"));
    }
    let ss_res: f64 = pred.iter().zip(actual).map(|(p, y)| (p - y).powi(2)).sum();
    let abs: f64 = pred.iter().zip(actual).map(|(p, y)| (p - y).abs()).sum();
    let mse = ss_res / n;
    Ok(RegressionReport {
        mse,
        rmse: mse.sqrt(),
        mae: abs / n,
        r2: 1.0 - ss_res / ss_tot,
    })
}

/// Tolerances 0, 0.25, ..., 10 PCI points.
pub fn default_rec_grid() -> Vec<f64> {
    (0..=40).map(|k| k as f64 * 0.25).collect()
}

/// Fraction of predictions whose absolute error is within each tolerance.
pub fn rec_curve(pred: &[f64], actual: &[f64], grid: &[f64]) -> Result<RecCurve, MetricsError> {
    check(pred, actual)?;
    if grid.iter().any(|e| !(*e >= 0.0)) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(MetricsError::BadGrid);
    }
    let mut errors: Vec<f64> = pred.iter().zip(actual).map(|(p, y)| (p - y).abs()).collect();
    errors.sort_by(f64::total_cmp);
    let n = errors.len() as f64;
    let coverage = grid
        .iter()
        .map(|&eps| errors.partition_point(|&e| e <= eps) as f64 / n)
        .collect();
    Ok(RecCurve {
        tolerances: grid.to_vec(),
        coverage,
    })
}

pub fn taylor_stats(pred: &[f64], actual: &[f64]) -> Result<TaylorStats, MetricsError> {
    check(pred, actual)?;
    if pred.len() < 2 {
        return Err(MetricsError::Empty);
    }
    let n = pred.len() as f64;
    let (mp, mr) = (mean(pred), mean(actual));
    let mut spp = 0.0;
    let mut srr = 0.0;
    let mut spr = 0.0;
    let mut sd = 0.0;
    for (p, r) in pred.iter().zip(actual) {
        let (dp, dr) = (p - mp, r - mr);
        spp += dp * dp;
        srr += dr * dr;
        spr += dp * dr;
        sd += (dp - dr).powi(2);
    }
    if spp == 0.0 {
        return Err(MetricsError::Constant("predicted"));
    }
    if srr == 0.0 {
        return Err(MetricsError::Constant("reference"));
    }
    Ok(TaylorStats {
        std_pred: (spp / n).sqrt(),
        std_ref: (srr / n).sqrt(),
        correlation: spr / (spp.sqrt() * srr.sqrt()),
        centered_rmse: (sd / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_and_mean_predictions() {
        let y = [1.0, 4.0, 2.0, 8.0];
        let r = regression_report(&y, &y).unwrap();
        assert_eq!((r.mse, r.r2), (0.0, 1.0));
        let m = [3.75; 4];
        assert!(regression_report(&m, &y).unwrap().r2.abs() < 1e-15);
    }

    #[test]
    fn hand_computed_report() {
        let r = regression_report(&[1.0, 2.0, 3.0], &[1.0, 2.0, 5.0]).unwrap();
        assert!((r.mse - 4.0 / 3.0).abs() < 1e-15);
        assert!((r.mae - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.r2 - (1.0 - 4.0 / (26.0 / 3.0))).abs() < 1e-15);
        assert!((r.rmse - r.mse.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn report_errors() {
        assert!(matches!(
            regression_report(&[1.0], &[1.0, 2.0]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert_eq!(regression_report(&[1.0, 2.0], &[3.0, 3.0]), Err(MetricsError::Constant("actual")));
        assert_eq!(regression_report(&[], &[]), Err(MetricsError::Empty));
    }

    #[test]
    fn rec_examples() {
        let actual = [0.0; 3];
        let pred = [0.5, 1.5, 2.5];
        let c = rec_curve(&pred, &actual, &[0.0, 2.0, 2.5, 3.0]).unwrap();
        assert_eq!(c.coverage, vec![0.0, 2.0 / 3.0, 1.0, 1.0]);
        assert!(rec_curve(&pred, &actual, &[1.0, 0.5]).is_err());
        assert_eq!(default_rec_grid().len(), 41);
    }

    #[test]
    fn taylor_examples() {
        let y = [1.0, -2.0, 3.0, -2.0];
        let t = taylor_stats(&y, &y).unwrap();
        assert!((t.correlation - 1.0).abs() < 1e-15);
        assert_eq!(t.centered_rmse, 0.0);
        assert_eq!(t.std_pred, t.std_ref);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let t = taylor_stats(&neg, &y).unwrap();
        assert!((t.correlation + 1.0).abs() < 1e-15);
        assert!((t.centered_rmse - 2.0 * t.std_ref).abs() < 1e-12);
        assert!(taylor_stats(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(-50.0f64..50.0, n),
                prop::collection::vec(-50.0f64..50.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn rec_is_monotone_and_saturates((p, a) in pair()) {
            let c = rec_curve(&p, &a, &default_rec_grid()).unwrap();
            prop_assert!(c.coverage.windows(2).all(|w| w[0] <= w[1]));
            let max = p.iter().zip(&a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let top = rec_curve(&p, &a, &[max]).unwrap();
            prop_assert_eq!(top.coverage[0], 1.0);
        }

        #[test]
        fn scaling_behaviour((p, a) in pair(), c in 0.1f64..10.0) {
            prop_assume!(a.iter().any(|v| (v - a[0]).abs() > 1e-6));
            prop_assume!(p.iter().any(|v| (v - p[0]).abs() > 1e-6));
            let r = regression_report(&p, &a).unwrap();
            let ps: Vec<f64> = p.iter().map(|v| v * c).collect();
            let as_: Vec<f64> = a.iter().map(|v| v * c).collect();
            let s = regression_report(&ps, &as_).unwrap();
            prop_assert!((s.rmse - c * r.rmse).abs() <= 1e-9 * (1.0 + s.rmse));
            prop_assert!((s.mae - c * r.mae).abs() <= 1e-9 * (1.0 + s.mae));
            prop_assert!((s.r2 - r.r2).abs() <= 1e-9);
            let t0 = taylor_stats(&p, &a).unwrap();
            let t1 = taylor_stats(&ps, &as_).unwrap();
            prop_assert!((t0.correlation - t1.correlation).abs() <= 1e-9);
        }

        #[test]
        fn taylor_law_of_cosines((p, a) in pair()) {
            prop_assume!(a.iter().any(|v| (v - a[0]).abs() > 1e-6));
            prop_assume!(p.iter().any(|v| (v - p[0]).abs() > 1e-6));
            let t = taylor_stats(&p, &a).unwrap();
            let rhs = t.std_pred.powi(2) + t.std_ref.powi(2) - 2.0 * t.std_pred * t.std_ref * t.correlation;
            prop_assert!((t.centered_rmse.powi(2) - rhs).abs() <= 1e-9 * (1.0 + rhs));
        }
    }
}
