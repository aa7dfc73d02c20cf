use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows whose value is within this distance of the row minimum count as wins.
pub const WIN_TOL: f64 = 1e-9;

pub fn mse(x_hat: &[f64], x_true: &[f64]) -> Result<f64> {
    if x_hat.len() != x_true.len() {
        return Err(Error::LengthMismatch { expected: x_true.len(), got: x_hat.len() });
    }
    if x_true.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = x_hat.iter().zip(x_true).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / x_true.len() as f64)
}

/// Detection counts at one threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RocCounts {
    pub false_alarms: usize,
    pub negatives: usize,
    pub detections: usize,
    pub positives: usize,
}

impl RocCounts {
    pub fn add(&mut self, o: &RocCounts) {
        self.false_alarms += o.false_alarms;
        self.negatives += o.negatives;
        self.detections += o.detections;
        self.positives += o.positives;
    }

    pub fn rates(&self) -> Result<(f64, f64)> {
        if self.negatives == 0 || self.positives == 0 {
            return Err(Error::DegenerateTruth(
                "ground truth needs both zero and nonzero samples".into(),
            ));
        }
        Ok((
            self.false_alarms as f64 / self.negatives as f64,
            self.detections as f64 / self.positives as f64,
        ))
    }
}

pub fn roc_counts(x_hat: &[f64], x_true: &[f64], tau: f64) -> RocCounts {
    let mut c = RocCounts::default();
    for (a, b) in x_hat.iter().zip(x_true) {
        let hit = a.abs() > tau;
        if *b != 0.0 {
            c.positives += 1;
            c.detections += hit as usize;
        } else {
            c.negatives += 1;
            c.false_alarms += hit as usize;
        }
    }
    c
}

/// `(false alarm rate, detection rate)` for each threshold.
pub fn roc_points(x_hat: &[f64], x_true: &[f64], thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    if x_hat.len() != x_true.len() {
        return Err(Error::LengthMismatch { expected: x_true.len(), got: x_hat.len() });
    }
    if thresholds.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidSpec("ROC thresholds must be nonnegative".into()));
    }
    thresholds.iter().map(|&tau| roc_counts(x_hat, x_true, tau).rates()).collect()
}

/// `n` thresholds spaced geometrically from `1e-4` to `top`.
pub fn threshold_grid(top: f64, n: usize) -> Vec<f64> {
    let lo: f64 = 1e-4;
    if n == 0 {
        return Vec::new();
    }
    if n == 1 || !(top > lo) {
        return vec![lo.max(top)];
    }
    let ratio = (top / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { top } else { lo * (ratio * i as f64).exp() }).collect()
}

/// Detection rate of a ROC curve at false alarm rate `far`, interpolating
/// linearly between its points completed with `(0,0)` and `(1,1)`.
pub fn roc_detection_at(curve: &[(f64, f64)], far: f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = curve.to_vec();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    // Upper envelope at equal FAR.
    let mut env: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        match env.last_mut() {
            Some(last) if last.0 == p.0 => last.1 = last.1.max(p.1),
            _ => env.push(p),
        }
    }
    for w in env.windows(2) {
        let ((f0, d0), (f1, d1)) = (w[0], w[1]);
        if far >= f0 && far <= f1 {
            return d0 + (d1 - d0) * (far - f0) / (f1 - f0);
        }
    }
    1.0
}

/// Whether curve `a` lies on or above curve `b` at every point of `b`.
pub fn roc_majorizes(a: &[(f64, f64)], b: &[(f64, f64)], slack: f64) -> bool {
    b.iter().all(|&(far, dr)| roc_detection_at(a, far) + slack >= dr)
}

/// For each column, the number of rows where it is within [`WIN_TOL`] of
/// the row minimum. Ties credit every achiever; `NaN` entries never win.
pub fn win_counts(rows: &[Vec<f64>]) -> Vec<usize> {
    let ncol = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut wins = vec![0; ncol];
    for row in rows {
        let best = row.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            continue;
        }
        for (j, v) in row.iter().enumerate() {
            if *v <= best + WIN_TOL {
                wins[j] += 1;
            }
        }
    }
    wins
}

/// `(J(x_hat) - bound) / (1 + |bound|)`.
pub fn relative_gap(j_hat: f64, bound: f64) -> f64 {
    (j_hat - bound) / (1.0 + bound.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[2.0, 3.0, 1.0], &[1.0, 2.0, 0.0]).unwrap(), 1.0);
        assert_eq!(mse(&[1.0, -1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!(mse(&[1.0], &[]).is_err());
    }

    #[test]
    fn roc_examples() {
        let truth = [0.0, 0.9, 0.0, -0.7];
        assert_eq!(roc_points(&[0.1, 0.5, 0.2, 0.3], &truth, &[1.0]).unwrap(), vec![(0.0, 0.0)]);
        assert_eq!(roc_points(&[0.1, 0.5, 0.2, 0.3], &truth, &[0.0]).unwrap(), vec![(1.0, 1.0)]);
        assert_eq!(roc_points(&truth, &truth, &[0.3]).unwrap(), vec![(0.0, 1.0)]);
        assert!(matches!(roc_points(&[0.1], &[0.0], &[0.0]), Err(Error::DegenerateTruth(_))));
        assert!(matches!(roc_points(&[0.1], &[1.0], &[0.0]), Err(Error::DegenerateTruth(_))));
    }

    #[test]
    fn grid_is_geometric() {
        let g = threshold_grid(1.0, 200);
        assert_eq!(g.len(), 200);
        assert!((g[0] - 1e-4).abs() < 1e-18 && g[199] == 1.0);
        let r = g[1] / g[0];
        assert!(g.windows(2).all(|w| (w[1] / w[0] - r).abs() < 1e-9));
    }

    #[test]
    fn win_count_ties() {
        assert_eq!(win_counts(&[vec![1.0, 2.0, 3.0, 4.0]]), vec![1, 0, 0, 0]);
        assert_eq!(win_counts(&[vec![1.0, 1.0, 3.0], vec![2.0, 1.0, 1.0 + 1e-12]]), vec![1, 2, 1]);
        assert_eq!(win_counts(&[vec![f64::NAN, 2.0]]), vec![0, 1]);
    }

    #[test]
    fn interpolation_and_majorization() {
        let a = [(0.0, 0.5), (0.5, 1.0)];
        assert!((roc_detection_at(&a, 0.25) - 0.75).abs() < 1e-15);
        assert_eq!(roc_detection_at(&a, 0.0), 0.5);
        assert_eq!(roc_detection_at(&a, 0.9), 1.0);
        let b = [(0.1, 0.4), (0.6, 0.8)];
        assert!(roc_majorizes(&a, &b, 0.0));
        assert!(!roc_majorizes(&b, &a, 0.0));
    }
}
