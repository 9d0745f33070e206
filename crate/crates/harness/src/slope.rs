//! Observed convergence order from an error series.

use serde::Serialize;

/// Points within this factor of the smallest error count as plateau.
pub const PLATEAU_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    /// Least-squares slope of `log(error)` against `log(h)`.
    pub slope: Option<f64>,
    /// Smallest error of the series.
    pub floor: Option<f64>,
    /// Step sizes of the points used in the fit, ascending.
    pub used: Vec<f64>,
}

/// Least-squares slope through `(log h, log error)`; needs two distinct `h`.
pub fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(h, e)| (h.ln(), e.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Fit over the points whose error is at least [`PLATEAU_FACTOR`] times the
/// series minimum. Non-positive or non-finite errors are ignored.
pub fn fit_slope(points: &[(f64, f64)]) -> SlopeFit {
    let mut valid: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(h, e)| h > 0.0 && e > 0.0 && e.is_finite())
        .collect();
    valid.sort_by(|a, b| a.0.total_cmp(&b.0));
    let floor = valid.iter().map(|p| p.1).reduce(f64::min);
    let used: Vec<(f64, f64)> = match floor {
        Some(f) => valid.into_iter().filter(|p| p.1 >= PLATEAU_FACTOR * f).collect(),
        None => Vec::new(),
    };
    SlopeFit {
        slope: least_squares_slope(&used),
        floor,
        used: used.iter().map(|p| p.0).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let pts: Vec<_> = (3..8).map(|k| {
            let h = 0.5f64.powi(k);
            (h, 3.0 * h * h)
        }).collect();
        assert!((least_squares_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn plateau_points_are_excluded() {
        // second order down to a floor of 1e-6
        let pts: Vec<_> = (1..13)
            .map(|k| {
                let h = 0.5f64.powi(k);
                (h, (h * h).max(1e-6))
            })
            .collect();
        let fit = fit_slope(&pts);
        assert_eq!(fit.floor, Some(1e-6));
        assert!(fit.used.iter().all(|&h| h * h >= 1e-5));
        assert_eq!(fit.used.len(), 8);
        assert!((fit.slope.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_series() {
        assert_eq!(fit_slope(&[]).slope, None);
        assert_eq!(fit_slope(&[(0.1, 1.0)]).slope, None);
        assert_eq!(fit_slope(&[(0.1, 1.0), (0.2, 1.0)]).slope, None);
        assert_eq!(least_squares_slope(&[(0.1, 1.0), (0.1, 2.0)]), None);
        let fit = fit_slope(&[(0.1, f64::NAN), (0.2, 0.0)]);
        assert_eq!(fit.floor, None);
    }
}
