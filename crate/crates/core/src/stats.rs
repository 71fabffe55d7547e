//! Small sample statistics used by the checkers and the Monte Carlo harness.

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "slope needs paired samples");
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_slope(&lx, &ly)
}

/// Least-squares slope of `y` against `x`.
pub fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance; `None` for fewer than two samples.
pub fn variance(x: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    // shifted data: exact zero for constant samples
    let shift = x[0];
    let n = x.len() as f64;
    let s: f64 = x.iter().map(|v| v - shift).sum();
    let ss: f64 = x.iter().map(|v| (v - shift).powi(2)).sum();
    Some(((ss - s * s / n) / (n - 1.0)).max(0.0))
}

/// Sample correlation; `None` for fewer than two samples or a constant input.
pub fn correlation(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let denom = (sxx * syy).sqrt();
    (denom > 0.0).then(|| sxy / denom)
}

fn central_moment(x: &[f64], k: i32) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(k)).sum::<f64>() / x.len() as f64
}

/// Standardized third moment; `None` for fewer than three samples or zero spread.
pub fn skewness(x: &[f64]) -> Option<f64> {
    if x.len() < 3 {
        return None;
    }
    let m2 = central_moment(x, 2);
    (m2 > 0.0).then(|| central_moment(x, 3) / m2.powf(1.5))
}

/// Standardized fourth moment minus 3; `None` for fewer than four samples or zero spread.
pub fn excess_kurtosis(x: &[f64]) -> Option<f64> {
    if x.len() < 4 {
        return None;
    }
    let m2 = central_moment(x, 2);
    (m2 > 0.0).then(|| central_moment(x, 4) / (m2 * m2) - 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn basic_statistics() {
        assert_abs_diff_eq!(variance(&[-1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(variance(&[3.0]), None);
        assert_abs_diff_eq!(variance(&[0.5, 0.5, 0.5]).unwrap(), 0.0);
        assert_abs_diff_eq!(correlation(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.5]).unwrap(), 0.997_948_715_788_673_3, epsilon = 1e-12);
        assert_abs_diff_eq!(skewness(&[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(log_log_slope(&[1.0, 2.0, 4.0], &[3.0, 12.0, 48.0]), 2.0, epsilon = 1e-12);
    }
}
