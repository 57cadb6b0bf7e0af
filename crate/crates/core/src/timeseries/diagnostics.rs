//! Sample autocorrelation, partial autocorrelation, and the Ljung-Box
//! whiteness test.

use serde::Serialize;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

/// acf[h] = sample autocovariance(h) / autocovariance(0), lags 0..=max_lag.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n <= max_lag {
        return Err(Error::TimeSeries(format!(
            "series of length {n} too short for {max_lag} acf lags"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c0: f64 = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if c0 < 1e-300 {
        return Err(Error::TimeSeries(
            "constant series has undefined autocorrelation".into(),
        ));
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    for h in 0..=max_lag {
        let ch: f64 = (0..n - h)
            .map(|t| (series[t] - mean) * (series[t + h] - mean))
            .sum::<f64>()
            / n as f64;
        out.push(ch / c0);
    }
    Ok(out)
}

/// Partial autocorrelation via the Durbin-Levinson recursion on the acf.
/// Index 0 is 1 by convention.
pub fn pacf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let rho = acf(series, max_lag)?;
    let mut out = vec![1.0];
    if max_lag == 0 {
        return Ok(out);
    }
    // phi[k][j] coefficients of the order-k autoregression
    let mut phi_prev = vec![0.0; max_lag + 1];
    let mut phi = vec![0.0; max_lag + 1];
    phi_prev[1] = rho[1];
    out.push(rho[1]);
    for k in 2..=max_lag {
        let num = rho[k] - (1..k).map(|j| phi_prev[j] * rho[k - j]).sum::<f64>();
        let den = 1.0 - (1..k).map(|j| phi_prev[j] * rho[j]).sum::<f64>();
        let phi_kk = if den.abs() < 1e-300 { 0.0 } else { num / den };
        phi[k] = phi_kk;
        for j in 1..k {
            phi[j] = phi_prev[j] - phi_kk * phi_prev[k - j];
        }
        out.push(phi_kk);
        phi_prev[..=k].copy_from_slice(&phi[..=k]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct LjungBoxResult {
    pub statistic: f64,
    pub lags: usize,
    pub dof: usize,
    pub p_value: f64,
}

/// Ljung-Box portmanteau statistic over `lags` residual autocorrelations.
///
/// `fitted_params` is p + q of the model that produced the residuals; the
/// chi-square degrees of freedom are `lags - fitted_params`, floored at 1.
/// The upper-tail probability comes from the regularized incomplete gamma
/// function.
pub fn ljung_box(residuals: &[f64], lags: usize, fitted_params: usize) -> Result<LjungBoxResult> {
    let n = residuals.len();
    if n <= lags {
        return Err(Error::TimeSeries(format!(
            "{n} residuals too few for {lags} Ljung-Box lags"
        )));
    }
    let rho = acf(residuals, lags)?;
    let nf = n as f64;
    let statistic = nf
        * (nf + 2.0)
        * (1..=lags)
            .map(|h| rho[h] * rho[h] / (nf - h as f64))
            .sum::<f64>();
    let dof = lags.saturating_sub(fitted_params).max(1);
    // chi-square upper tail: Q(dof/2, x/2)
    let p_value = gamma_ur(dof as f64 / 2.0, statistic / 2.0);
    Ok(LjungBoxResult {
        statistic,
        lags,
        dof,
        p_value,
    })
}

/// Default lag count: min(20, n / 5).
pub fn default_lb_lags(n: usize) -> usize {
    (n / 5).min(20).max(1)
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub acf: Vec<f64>,
    pub pacf: Vec<f64>,
    /// +-1.96 / sqrt(n) large-sample white-noise band.
    pub confidence_band: f64,
    pub ljung_box: LjungBoxResult,
}

impl DiagnosticsReport {
    pub fn compute(series: &[f64], max_lag: usize, fitted_params: usize) -> Result<Self> {
        let lb_lags = default_lb_lags(series.len()).min(max_lag.max(1));
        Ok(Self {
            acf: acf(series, max_lag)?,
            pacf: pacf(series, max_lag)?,
            confidence_band: 1.96 / (series.len() as f64).sqrt(),
            ljung_box: ljung_box(series, lb_lags, fitted_params)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn white_noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn ar1(n: usize, phi: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0f64; n + 200];
        for t in 1..x.len() {
            let e: f64 = rng.sample(StandardNormal);
            x[t] = phi * x[t - 1] + e;
        }
        x.split_off(200)
    }

    #[test]
    fn acf_lag_zero_is_one() {
        let x = white_noise(100, 1);
        let a = acf(&x, 10).unwrap();
        assert_eq!(a[0], 1.0);
    }

    #[test]
    fn acf_rejects_constant_series() {
        assert!(acf(&[2.0; 50], 5).is_err());
    }

    #[test]
    fn white_noise_acf_stays_in_band() {
        let x = white_noise(1000, 2);
        let a = acf(&x, 20).unwrap();
        let band = 1.96 / 1000f64.sqrt();
        let inside = (1..=20).filter(|&h| a[h].abs() < band).count();
        assert!(inside >= 18, "only {inside}/20 lags inside the band");
    }

    #[test]
    fn ar1_acf_decays_geometrically() {
        let x = ar1(5000, 0.8, 3);
        let a = acf(&x, 5).unwrap();
        for h in 1..=5 {
            assert!(
                (a[h] - 0.8f64.powi(h as i32)).abs() < 0.1,
                "lag {h}: {} vs {}",
                a[h],
                0.8f64.powi(h as i32)
            );
        }
    }

    #[test]
    fn ar1_pacf_cuts_off_after_lag_one() {
        let x = ar1(5000, 0.8, 4);
        let p = pacf(&x, 10).unwrap();
        assert!((p[1] - 0.8).abs() < 0.05);
        let band = 1.96 / 5000f64.sqrt();
        let outside = (2..=10).filter(|&h| p[h].abs() > band).count();
        // cut-off property: almost all higher lags inside the band
        assert!(outside <= 2, "{outside} pacf lags above the band");
    }

    #[test]
    fn pacf_bounded_by_one() {
        let x = ar1(500, -0.6, 5);
        for v in pacf(&x, 20).unwrap() {
            assert!(v.abs() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn ljung_box_accepts_white_noise_and_rejects_ar1() {
        let wn = white_noise(1000, 6);
        let lb = ljung_box(&wn, 20, 0).unwrap();
        assert!(lb.statistic >= 0.0);
        assert!(lb.p_value > 0.05, "white noise rejected: p={}", lb.p_value);

        let corr = ar1(1000, 0.9, 7);
        let lb = ljung_box(&corr, 20, 0).unwrap();
        assert!(lb.p_value < 0.01, "AR(1) accepted: p={}", lb.p_value);
    }

    #[test]
    fn ljung_box_statistic_nonnegative_and_dof_floored() {
        let wn = white_noise(100, 8);
        let lb = ljung_box(&wn, 3, 10).unwrap();
        assert_eq!(lb.dof, 1);
        assert!(lb.statistic >= 0.0);
    }
}
