//! Landmark fitting error and cumulative error distributions.

use crate::error::{ensure_dim, Error, Result};
use crate::shape::Shape;

/// Mean point-to-point distance divided by the diagonal of `gt`'s bounding box.
pub fn landmark_error(pred: &Shape, gt: &Shape) -> Result<f64> {
    ensure_dim(gt.n_points(), pred.n_points())?;
    let diag = gt.bbox_diagonal();
    if !(diag > 0.0) {
        return Err(Error::Degenerate("ground-truth shape has a degenerate bounding box".into()));
    }
    let total: f64 = pred.points().zip(gt.points()).map(|(p, q)| (p.0 - q.0).hypot(p.1 - q.1)).sum();
    Ok(total / gt.n_points() as f64 / diag)
}

/// Proportion of errors at or below each threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct CedCurve {
    pub thresholds: Vec<f64>,
    pub proportions: Vec<f64>,
}

impl CedCurve {
    /// Proportion at the largest threshold not above `t` (0 below the first threshold).
    pub fn at(&self, t: f64) -> f64 {
        self.thresholds
            .iter()
            .zip(&self.proportions)
            .take_while(|(x, _)| **x <= t)
            .last()
            .map(|(_, p)| *p)
            .unwrap_or(0.0)
    }
}

pub fn ced_curve(errors: &[f64], thresholds: &[f64]) -> Result<CedCurve> {
    if errors.is_empty() {
        return Err(Error::invalid("no errors to summarize"));
    }
    if thresholds.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("thresholds must be strictly ascending"));
    }
    if errors.iter().any(|e| e.is_nan()) {
        return Err(Error::Numerical("NaN fitting error".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let proportions = thresholds
        .iter()
        .map(|t| sorted.partition_point(|e| e <= t) as f64 / n)
        .collect();
    Ok(CedCurve {
        thresholds: thresholds.to_vec(),
        proportions,
    })
}

/// `count` evenly spaced thresholds from `0` to `max` inclusive.
pub fn linear_thresholds(max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![max],
        _ => (0..count).map(|i| max * i as f64 / (count - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Shape {
        let pts: Vec<(f64, f64)> = (0..68).map(|i| ((i % 10) as f64 * 3.0, (i / 10) as f64 * 4.0)).collect();
        Shape::from_points(&pts).unwrap()
    }

    #[test]
    fn exact_prediction_has_zero_error() {
        assert_eq!(landmark_error(&grid(), &grid()).unwrap(), 0.0);
    }

    #[test]
    fn one_point_offset() {
        let gt = grid();
        let d = gt.bbox_diagonal();
        let mut c = gt.coords().to_vec();
        c[10] += d / 10.0;
        let e = landmark_error(&Shape::new(c).unwrap(), &gt).unwrap();
        assert!((e - 0.1 / 68.0).abs() < 1e-15);
        assert!((e - 1.4706e-3).abs() < 1e-7);
    }

    #[test]
    fn uniform_translation() {
        let gt = grid();
        let d = gt.bbox_diagonal();
        let pred = gt.translated(0.02 * d * 0.6, 0.02 * d * 0.8);
        assert!((landmark_error(&pred, &gt).unwrap() - 0.02).abs() < 1e-12);
        // shared translation leaves the error unchanged
        let e2 = landmark_error(&pred.translated(5.0, -7.0), &gt.translated(5.0, -7.0)).unwrap();
        assert!((e2 - 0.02).abs() < 1e-12);
    }

    #[test]
    fn degenerate_ground_truth() {
        let p = Shape::new(vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(landmark_error(&p, &p).is_err());
    }

    #[test]
    fn ced_counts() {
        let c = ced_curve(&[0.01, 0.03], &[0.02, 0.04]).unwrap();
        assert_eq!(c.proportions, vec![0.5, 1.0]);
        let z = ced_curve(&[0.0; 5], &[0.001, 0.01]).unwrap();
        assert_eq!(z.proportions, vec![1.0, 1.0]);
        assert!(ced_curve(&[], &[0.1]).is_err());
        assert!(ced_curve(&[0.1], &[0.2, 0.1]).is_err());
        assert_eq!(c.at(0.03), 0.5);
        assert_eq!(c.at(0.01), 0.0);
    }
}
