//! Least-squares power-law fits in log-log coordinates.

use crate::error::{Error, Result};

/// `log y = slope * log x + intercept`, with the RMS residual of the fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub n: usize,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<PowerLawFit> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("fit inputs differ in length"));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 points to fit, got {n}")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("fit abscissae are all equal"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    Ok(PowerLawFit {
        slope,
        intercept,
        residual: (ss / nf).sqrt(),
        n,
    })
}

/// Fit `y ~ C x^slope` on positive data.
pub fn power_law_fit(xs: &[f64], ys: &[f64]) -> Result<PowerLawFit> {
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("power-law fit needs finite positive data"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_power_law() {
        let xs: Vec<f64> = (1..50).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-1.7)).collect();
        let f = power_law_fit(&xs, &ys).unwrap();
        assert_abs_diff_eq!(f.slope, -1.7, epsilon = 1e-12);
        assert_abs_diff_eq!(f.intercept, 3.0f64.ln(), epsilon = 1e-12);
        assert!(f.residual < 1e-12);
    }

    #[test]
    fn rejects_degenerate() {
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
        assert!(linear_fit(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(power_law_fit(&[1.0, 2.0], &[0.0, 1.0]).is_err());
    }
}
