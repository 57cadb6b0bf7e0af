//! ARIMA(p, d, q) estimation by conditional least squares.
//!
//! The series is differenced d times, AR/MA coefficients are initialized by
//! a two-stage long-autoregression regression and refined by simplex search
//! on the conditional sum of squared innovations (pre-sample innovations set
//! to zero). Estimates are constrained to the stationary/invertible region
//! via a root-modulus penalty.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::timeseries::diff::{difference, integrate_forecast};
use crate::timeseries::optim::nelder_mead;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ArimaSpec {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaSpec {
    pub fn new(p: usize, d: usize, q: usize) -> Result<Self> {
        if p + q == 0 {
            return Err(Error::Config("ARIMA orders need p + q >= 1".into()));
        }
        Ok(Self { p, d, q })
    }

    /// Minimum series length accepted by the fitter.
    pub fn min_series_len(&self) -> usize {
        10 * (self.p + self.q + 1) + self.d
    }
}

impl Default for ArimaSpec {
    fn default() -> Self {
        Self { p: 2, d: 2, q: 1 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Estimate an intercept on the differenced scale. Defaults to true for
    /// d = 0 and false otherwise.
    pub fit_intercept: Option<bool>,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            fit_intercept: None,
            max_iter: 4000,
            tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArimaModel {
    pub spec: ArimaSpec,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub intercept: f64,
    pub sigma2: f64,
    /// Last values of the differenced series, newest last.
    pub diff_tail: Vec<f64>,
    /// Last q innovations, newest last.
    pub resid_tail: Vec<f64>,
    /// Last d values of the original series, newest last.
    pub orig_tail: Vec<f64>,
    /// Innovations over the conditioning range (diagnostics input).
    pub residuals: Vec<f64>,
    pub aic: f64,
}

/// Spectral radius of the companion matrix of `1 - c1 z - ... - cp z^p`.
/// All roots outside the unit circle <=> radius < 1.
fn companion_radius(coeffs: &[f64]) -> f64 {
    let p = coeffs.len();
    if p == 0 {
        return 0.0;
    }
    if p == 1 {
        return coeffs[0].abs();
    }
    let mut m = DMatrix::<f64>::zeros(p, p);
    for (j, &c) in coeffs.iter().enumerate() {
        m[(0, j)] = c;
    }
    for i in 1..p {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn ar_radius(ar: &[f64]) -> f64 {
    companion_radius(ar)
}

fn ma_radius(ma: &[f64]) -> f64 {
    // 1 + t1 z + ... + tq z^q has the same roots as 1 - (-t1) z - ...
    let negated: Vec<f64> = ma.iter().map(|t| -t).collect();
    companion_radius(&negated)
}

const RADIUS_LIMIT: f64 = 0.995;

/// Conditional sum of squared innovations, conditioning on the first p
/// observations and zero pre-sample innovations.
fn css(series: &[f64], p: usize, q: usize, ar: &[f64], ma: &[f64], mu: f64) -> (f64, Vec<f64>) {
    let n = series.len();
    let mut resid = vec![0.0; n];
    let mut total = 0.0;
    for t in p..n {
        let mut pred = mu;
        for i in 0..p {
            pred += ar[i] * (series[t - 1 - i] - mu);
        }
        for j in 0..q {
            if t >= 1 + j {
                pred += ma[j] * resid[t - 1 - j];
            }
        }
        let e = series[t] - pred;
        resid[t] = e;
        total += e * e;
    }
    (total, resid)
}

/// Ordinary least squares via SVD; returns None for unsolvable systems.
fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    x.clone().svd(true, true).solve(y, 1e-10).ok()
}

/// Two-stage Hannan-Rissanen initialization: a long autoregression supplies
/// innovation estimates, then one regression on lagged values and lagged
/// innovations gives starting AR/MA coefficients.
fn hannan_rissanen(
    series: &[f64],
    p: usize,
    q: usize,
    with_intercept: bool,
) -> (Vec<f64>, Vec<f64>, f64) {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let fallback = || {
        (
            vec![0.1; p],
            vec![0.1; q],
            if with_intercept { mean } else { 0.0 },
        )
    };

    let m = (n / 4).min(20).max(p + q);
    if n < m + q + p + 8 {
        return fallback();
    }

    // Stage 1: AR(m) residuals.
    let rows1 = n - m;
    let mut x1 = DMatrix::zeros(rows1, m + 1);
    let mut y1 = DVector::zeros(rows1);
    for t in m..n {
        y1[t - m] = series[t];
        x1[(t - m, 0)] = 1.0;
        for i in 0..m {
            x1[(t - m, 1 + i)] = series[t - 1 - i];
        }
    }
    let Some(beta1) = ols(&x1, &y1) else { return fallback() };
    let mut innov = vec![0.0; n];
    for t in m..n {
        let mut pred = beta1[0];
        for i in 0..m {
            pred += beta1[1 + i] * series[t - 1 - i];
        }
        innov[t] = series[t] - pred;
    }

    // Stage 2: regress on p lagged values and q lagged innovations.
    let start = m + q.max(1);
    let rows2 = n - start;
    let k = p + q + if with_intercept { 1 } else { 0 };
    if rows2 < k + 4 {
        return fallback();
    }
    let mut x2 = DMatrix::zeros(rows2, k);
    let mut y2 = DVector::zeros(rows2);
    for t in start..n {
        let r = t - start;
        y2[r] = series[t];
        let mut col = 0;
        if with_intercept {
            x2[(r, col)] = 1.0;
            col += 1;
        }
        for i in 0..p {
            x2[(r, col)] = series[t - 1 - i];
            col += 1;
        }
        for j in 0..q {
            x2[(r, col)] = innov[t - 1 - j];
            col += 1;
        }
    }
    let Some(beta2) = ols(&x2, &y2) else { return fallback() };

    let mut col = 0;
    let intercept = if with_intercept {
        col += 1;
        beta2[0]
    } else {
        0.0
    };
    let mut ar: Vec<f64> = (0..p).map(|i| beta2[col + i]).collect();
    col += p;
    let mut ma: Vec<f64> = (0..q).map(|j| beta2[col + j]).collect();

    // Shrink into the stationary/invertible region if the regression landed
    // outside it.
    for _ in 0..200 {
        if ar_radius(&ar) < RADIUS_LIMIT && ma_radius(&ma) < RADIUS_LIMIT {
            break;
        }
        ar.iter_mut().for_each(|c| *c *= 0.95);
        ma.iter_mut().for_each(|c| *c *= 0.95);
    }
    // The intercept regression was on levels; convert to the deviation form
    // used by the CSS recursion: mu = intercept / (1 - sum(ar)).
    let mu = if with_intercept {
        let denom = 1.0 - ar.iter().sum::<f64>();
        if denom.abs() > 1e-6 {
            intercept / denom
        } else {
            series.iter().sum::<f64>() / n as f64
        }
    } else {
        0.0
    };
    (ar, ma, mu)
}

pub fn fit_arima(series: &[f64], spec: ArimaSpec) -> Result<ArimaModel> {
    fit_arima_with_options(series, spec, FitOptions::default())
}

pub fn fit_arima_with_options(
    series: &[f64],
    spec: ArimaSpec,
    options: FitOptions,
) -> Result<ArimaModel> {
    let min_len = spec.min_series_len();
    if series.len() < min_len {
        return Err(Error::TimeSeries(format!(
            "series of length {} below the {min_len} required for ARIMA({},{},{})",
            series.len(),
            spec.p,
            spec.d,
            spec.q
        )));
    }
    let w = difference(series, spec.d)?;
    let n = w.len();
    let mean = w.iter().sum::<f64>() / n as f64;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if var < 1e-12 {
        return Err(Error::TimeSeries(
            "degenerate variance: differenced series is constant".into(),
        ));
    }

    let with_intercept = options.fit_intercept.unwrap_or(spec.d == 0);
    let (p, q) = (spec.p, spec.q);
    let (ar0, ma0, mu0) = hannan_rissanen(&w, p, q, with_intercept);

    let mut initial: Vec<f64> = Vec::with_capacity(p + q + 1);
    initial.extend_from_slice(&ar0);
    initial.extend_from_slice(&ma0);
    if with_intercept {
        initial.push(mu0);
    }

    let unpack = |params: &[f64]| -> (Vec<f64>, Vec<f64>, f64) {
        let ar = params[..p].to_vec();
        let ma = params[p..p + q].to_vec();
        let mu = if with_intercept { params[p + q] } else { 0.0 };
        (ar, ma, mu)
    };

    let objective = |params: &[f64]| -> f64 {
        let (ar, ma, mu) = unpack(params);
        let r_ar = ar_radius(&ar);
        let r_ma = ma_radius(&ma);
        if r_ar >= RADIUS_LIMIT || r_ma >= RADIUS_LIMIT {
            return 1e30 * (1.0 + r_ar.max(r_ma));
        }
        css(&w, p, q, &ar, &ma, mu).0
    };

    let result = nelder_mead(objective, &initial, 0.1, options.max_iter, options.tolerance);
    if !result.converged {
        return Err(Error::FitNonConvergence {
            iterations: result.iterations,
            best_css: result.value,
        });
    }
    let (ar, ma, mu) = unpack(&result.point);
    if ar_radius(&ar) >= 1.0 - 1e-6 || ma_radius(&ma) >= 1.0 - 1e-6 {
        return Err(Error::TimeSeries(
            "fit landed on the stationarity/invertibility boundary".into(),
        ));
    }

    let (css_value, residuals) = css(&w, p, q, &ar, &ma, mu);
    let n_eff = (n - p) as f64;
    let sigma2 = css_value / n_eff;
    let k = (p + q + if with_intercept { 1 } else { 0 }) as f64;
    let aic = n_eff * sigma2.max(1e-300).ln() + 2.0 * (k + 1.0);

    let tail_len = p.max(q).min(n);
    Ok(ArimaModel {
        spec,
        ar,
        ma,
        intercept: mu,
        sigma2,
        diff_tail: w[n - tail_len..].to_vec(),
        resid_tail: residuals[n.saturating_sub(q)..].to_vec(),
        orig_tail: series[series.len() - spec.d..].to_vec(),
        residuals: residuals[p..].to_vec(),
        aic,
    })
}

impl ArimaModel {
    /// h-step-ahead forecast on the original (undifferenced) scale.
    ///
    /// Standard ARMA recursion on the differenced scale with future
    /// innovations set to zero, integrated back through the training tail.
    pub fn forecast(&self, h: usize) -> Result<Vec<f64>> {
        if h < 1 {
            return Err(Error::TimeSeries("forecast horizon must be >= 1".into()));
        }
        // Differenced-scale history, newest last; forecasts are appended so
        // lagged lookups are always `len - lag`.
        let mut hist: Vec<f64> = self.diff_tail.clone();
        let tail_len = hist.len();
        for k in 1..=h {
            let mut pred = self.intercept;
            for (i, &phi) in self.ar.iter().enumerate() {
                let lag = i + 1;
                let value = if hist.len() >= lag {
                    hist[hist.len() - lag]
                } else {
                    self.intercept // beyond retained history: use the mean
                };
                pred += phi * (value - self.intercept);
            }
            for (j, &theta) in self.ma.iter().enumerate() {
                // innovation at time n + k - 1 - j; zero unless it falls in
                // the observed range (j >= k - 1)
                if j + 1 >= k {
                    let back = j + 1 - k; // 0 = last observed innovation
                    if back < self.resid_tail.len() {
                        pred += theta * self.resid_tail[self.resid_tail.len() - 1 - back];
                    }
                }
            }
            hist.push(pred);
        }
        let diff_forecast = &hist[tail_len..];

        Ok(integrate_forecast(diff_forecast, &self.orig_tail))
    }
}

/// AIC grid search over p, q <= max order (d fixed). Skips orders whose fits
/// fail; errors only if every candidate fails.
pub fn select_order(series: &[f64], d: usize, max_p: usize, max_q: usize) -> Result<ArimaSpec> {
    let mut best: Option<(f64, ArimaSpec)> = None;
    for p in 0..=max_p {
        for q in 0..=max_q {
            if p + q == 0 {
                continue;
            }
            let spec = ArimaSpec { p, d, q };
            if let Ok(model) = fit_arima(series, spec) {
                if best.is_none() || model.aic < best.unwrap().0 {
                    best = Some((model.aic, spec));
                }
            }
        }
    }
    best.map(|(_, spec)| spec)
        .ok_or_else(|| Error::TimeSeries("no ARIMA order could be fitted".into()))
}
