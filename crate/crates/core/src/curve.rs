//! One-dimensional curves fitted to measured anchor points.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("a curve needs at least two anchor points, got {0}")]
    TooFewPoints(usize),
    #[error("anchor abscissae must be strictly increasing (at x = {0})")]
    NotIncreasing(f64),
    #[error("anchor point is not finite")]
    NonFinite,
}

/// Piecewise-linear interpolant through a set of anchors.
///
/// Inside the anchor range the curve passes exactly through every anchor.
/// Outside it extends the first (resp. last) segment linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self, CurveError> {
        if points.len() < 2 {
            return Err(CurveError::TooFewPoints(points.len()));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(CurveError::NonFinite);
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(CurveError::NotIncreasing(w[1].0));
            }
        }
        let (xs, ys) = points.into_iter().unzip();
        Ok(Self { xs, ys })
    }

    pub fn anchors(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    pub fn eval(&self, x: f64) -> f64 {
        // exact hit on an anchor returns the stored value untouched
        if let Some(i) = self.xs.iter().position(|&ax| ax == x) {
            return self.ys[i];
        }
        let last = self.xs.len() - 1;
        let seg = match self.xs.iter().position(|&ax| ax > x) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => last - 1,
        };
        let (x0, x1) = (self.xs[seg], self.xs[seg + 1]);
        let (y0, y1) = (self.ys[seg], self.ys[seg + 1]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Coefficient of determination over the fitted points.
    pub r_squared: f64,
}

impl AffineFit {
    pub fn fit(points: &[(f64, f64)]) -> Result<Self, CurveError> {
        if points.len() < 2 {
            return Err(CurveError::TooFewPoints(points.len()));
        }
        let n = points.len() as f64;
        let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
        let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
        if sxx == 0.0 {
            return Err(CurveError::NotIncreasing(mean_x));
        }
        let slope = sxy / sxx;
        let intercept = mean_y - slope * mean_x;
        let ss_res: f64 = points.iter().map(|p| (p.1 - (intercept + slope * p.0)).powi(2)).sum();
        let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
        let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
        Ok(Self { intercept, slope, r_squared })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_extrapolates() {
        let c = PiecewiseLinear::new(vec![(4.0, 2.4), (2.0, 1.6), (6.0, 3.9)]).unwrap();
        assert_eq!(c.eval(2.0), 1.6);
        assert_eq!(c.eval(6.0), 3.9);
        assert!((c.eval(3.0) - 2.0).abs() < 1e-12);
        // first segment extended below the range
        assert!((c.eval(1.0) - 1.2).abs() < 1e-12);
        // last segment extended above
        assert!((c.eval(8.0) - 5.4).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_anchor_sets() {
        assert_eq!(PiecewiseLinear::new(vec![(1.0, 1.0)]), Err(CurveError::TooFewPoints(1)));
        assert!(matches!(PiecewiseLinear::new(vec![(1.0, 1.0), (1.0, 2.0)]), Err(CurveError::NotIncreasing(_))));
        assert_eq!(PiecewiseLinear::new(vec![(1.0, f64::NAN), (2.0, 2.0)]), Err(CurveError::NonFinite));
    }

    #[test]
    fn affine_fit_recovers_exact_line() {
        let pts: Vec<_> = (0..5).map(|i| (i as f64, 3.0 + 0.5 * i as f64)).collect();
        let f = AffineFit::fit(&pts).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-12);
        assert!((f.intercept - 3.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }
}
