//! Ordinary least squares on (x, y) pairs.

/// Straight-line fit y ≈ intercept + slope·x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    /// Fitted slope.
    pub slope: f64,
    /// Fitted intercept.
    pub intercept: f64,
    /// Coefficient of determination; 1 for a perfect fit.
    pub r_squared: f64,
}

/// Least-squares line through the points. Needs at least two distinct x.
pub fn linear_fit(points: impl Iterator<Item = (f64, f64)> + Clone) -> Option<LinearFit> {
    let mut n = 0.0;
    let (mut sx, mut sy) = (0.0, 0.0);
    for (x, y) in points.clone() {
        n += 1.0;
        sx += x;
        sy += y;
    }
    if n < 2.0 {
        return None;
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in points {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Some(LinearFit { slope, intercept: my - slope * mx, r_squared })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let pts = [(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)];
        let fit = linear_fit(pts.iter().copied()).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-15);
        assert!((fit.intercept - 1.0).abs() < 1e-15);
        assert!((fit.r_squared - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(linear_fit([(1.0, 1.0)].iter().copied()).is_none());
        assert!(linear_fit([(1.0, 1.0), (1.0, 2.0)].iter().copied()).is_none());
    }
}
