//! Small statistics helpers: rate regression, moments, quantiles, ESS.

use crate::error::{Error, Result};

/// Least-squares fit of `log(err) = intercept + slope * log(h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Residuals of the fit in log space, one per point.
    pub residuals: Vec<f64>,
}

pub fn loglog_slope(hs: &[f64], errors: &[f64]) -> Result<RateFit> {
    if hs.len() != errors.len() || hs.len() < 2 {
        return Err(Error::Contract("rate fit needs >= 2 paired points".into()));
    }
    if hs
        .iter()
        .chain(errors)
        .any(|v| !(*v > 0.0 && v.is_finite()))
    {
        return Err(Error::Contract(
            "rate fit needs positive finite values".into(),
        ));
    }
    let x: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Contract("rate fit needs distinct step sizes".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = x
        .iter()
        .zip(&y)
        .map(|(a, b)| b - (intercept + slope * a))
        .collect();
    Ok(RateFit {
        slope,
        intercept,
        residuals,
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` denominator; zero for a single value.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Linear-interpolation quantile (type 7) of unsorted data.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Effective sample size from the initial positive sequence of
/// autocorrelation pairs. A constant chain has ESS 1.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return n as f64;
    }
    let m = mean(xs);
    let centered: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let c0 = centered.iter().map(|c| c * c).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return 1.0;
    }
    let rho = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * c0)
    };
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (n as f64 / tau.max(1.0 / n as f64)).min(n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let hs = [0.1, 0.05, 0.025];
        let errs: Vec<f64> = hs.iter().map(|h: &f64| 3.0 * h.powi(2)).collect();
        let fit = loglog_slope(&hs, &errs).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0f64.ln()).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(loglog_slope(&[0.1], &[1.0]).is_err());
        assert!(loglog_slope(&[0.1, 0.2], &[1.0, 0.0]).is_err());
        assert!(loglog_slope(&[0.1, 0.1], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn moments_and_quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(quantile(&xs, 0.5), 2.5);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert_eq!(variance(&[7.0]), 0.0);
    }

    #[test]
    fn ess_degenerate_and_iid() {
        assert_eq!(effective_sample_size(&[0.5; 100]), 1.0);
        // alternating sequence is anti-correlated; ESS capped at n
        let alt: Vec<f64> = (0..100)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        assert!(effective_sample_size(&alt) <= 100.0);
        // strongly autocorrelated sequence has small ESS
        let slow: Vec<f64> = (0..1000).map(|i| (i / 100) as f64).collect();
        assert!(effective_sample_size(&slow) < 50.0);
    }
}
