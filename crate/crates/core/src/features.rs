//! Per-window features N, A, F, V and their fused score.
//!
//! Each feature compares a window's source-address population against the
//! trained baseline:
//!
//! - `n`: old-user deviation from the historical per-window maximum,
//!   `old / (max_old + 1) - 1`; 0 means "at the historical max", -1 means
//!   the old users are gone.
//! - `a`: new-user deviation from the training mean, `(new - mean) / mean`.
//! - `f`: new-to-old ratio `new / (max_old + 1)`, with a small negative
//!   sentinel `-1 / (max_old + 1)` when there are no new users.
//! - `v`: packets per second per new source.
//!
//! The fused score is `-(n * a * f * v)`: near zero for normal traffic, a
//! large positive value under a flood (old users starved, new sources surge
//! at high rate), strongly negative for a flash crowd (old AND new users
//! surge at normal per-source rates).

use serde::{Deserialize, Serialize};

use crate::baseline::Baseline;
use crate::error::{Error, Result};
use crate::prefilter::FilteredWindow;

/// Cap substituted for A when training saw zero new users but the window has
/// some (the division by the mean would otherwise blow up).
pub const DEFAULT_A_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub n: f64,
    pub a: f64,
    pub f: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NafvPoint {
    pub index: usize,
    pub start: f64,
    pub value: f64,
    pub features: FeatureVector,
}

/// Fusion weights; non-negative, summing to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
}

impl WeightVector {
    pub const EQUAL: WeightVector = WeightVector {
        w1: 0.25,
        w2: 0.25,
        w3: 0.25,
        w4: 0.25,
    };

    /// Strict constructor: rejects zero weights, which would annihilate the
    /// fused score through the product.
    pub fn new(w1: f64, w2: f64, w3: f64, w4: f64) -> Result<Self> {
        let w = Self { w1, w2, w3, w4 };
        w.validate(true)?;
        Ok(w)
    }

    /// Lenient constructor: zero weights are accepted with a warning.
    pub fn new_lenient(w1: f64, w2: f64, w3: f64, w4: f64) -> Result<Self> {
        let w = Self { w1, w2, w3, w4 };
        w.validate(false)?;
        Ok(w)
    }

    fn validate(&self, strict: bool) -> Result<()> {
        let ws = [self.w1, self.w2, self.w3, self.w4];
        if ws.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Config(format!("weights must be non-negative: {ws:?}")));
        }
        let sum: f64 = ws.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "weights must sum to 1, got {sum}"
            )));
        }
        if ws.iter().any(|w| *w == 0.0) {
            if strict {
                return Err(Error::Config(
                    "zero weight annihilates the fused score; use distinct non-zero weights"
                        .into(),
                ));
            }
            log::warn!("zero weight present in {ws:?}; fused score will always be 0");
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w1, self.w2, self.w3, self.w4]
    }
}

fn old_new_counts(window: &FilteredWindow, old_users: &crate::ipd::IpBitmap) -> (u64, u64) {
    let mut old = 0u64;
    let mut new = 0u64;
    for src in window.sources() {
        if old_users.is_marked(src) {
            old += 1;
        } else {
            new += 1;
        }
    }
    (old, new)
}

/// Feature extraction against raw baseline parts; lets training score each
/// window against its incrementally-growing state without cloning bitmaps.
pub(crate) fn feature_vector_raw(
    window: &FilteredWindow,
    old_users: &crate::ipd::IpBitmap,
    max_old_users: u64,
    mean_new_users: f64,
    unit_time: f64,
    a_cap: f64,
) -> FeatureVector {
    let (old, new) = old_new_counts(window, old_users);
    let denom = max_old_users as f64 + 1.0;

    let n = old as f64 / denom - 1.0;

    let a = if mean_new_users > 0.0 {
        (new as f64 - mean_new_users) / mean_new_users
    } else if new == 0 {
        0.0
    } else {
        a_cap
    };

    let f = if new != 0 { new as f64 / denom } else { -1.0 / denom };

    let mut new_sources = 0u64;
    let mut new_packets = 0u64;
    for (&src, &count) in &window.access_counts {
        if !old_users.is_marked(src) {
            new_sources += 1;
            new_packets += count;
        }
    }
    let v = if new_sources == 0 {
        0.0
    } else {
        new_packets as f64 / (new_sources as f64 * unit_time)
    };

    FeatureVector { n, a, f, v }
}

pub fn feature_n(window: &FilteredWindow, baseline: &Baseline) -> f64 {
    feature_vector(window, baseline).n
}

pub fn feature_a(window: &FilteredWindow, baseline: &Baseline) -> f64 {
    feature_vector(window, baseline).a
}

pub fn feature_a_capped(window: &FilteredWindow, baseline: &Baseline, cap: f64) -> f64 {
    feature_vector_raw(
        window,
        &baseline.old_users,
        baseline.max_old_users,
        baseline.mean_new_users,
        baseline.unit_time,
        cap,
    )
    .a
}

pub fn feature_f(window: &FilteredWindow, baseline: &Baseline) -> f64 {
    feature_vector(window, baseline).f
}

pub fn feature_v(window: &FilteredWindow, baseline: &Baseline) -> f64 {
    feature_vector(window, baseline).v
}

pub fn feature_vector(window: &FilteredWindow, baseline: &Baseline) -> FeatureVector {
    feature_vector_raw(
        window,
        &baseline.old_users,
        baseline.max_old_users,
        baseline.mean_new_users,
        baseline.unit_time,
        DEFAULT_A_CAP,
    )
}

/// Plain fusion: `-(n * a * f * v)`.
pub fn nafv(fv: &FeatureVector) -> f64 {
    -(fv.n * fv.a * fv.f * fv.v)
}

/// Weighted fusion: `-(w1 n)(w2 a)(w3 f)(w4 v)`. For valid positive weights
/// this rescales the plain score by the constant `w1 w2 w3 w4`.
pub fn nafv_weighted(fv: &FeatureVector, weights: &WeightVector) -> f64 {
    -((weights.w1 * fv.n) * (weights.w2 * fv.a) * (weights.w3 * fv.f) * (weights.w4 * fv.v))
}

/// Score a window against the baseline. `weights` of `None` gives the plain
/// (unweighted) fused value.
pub fn score_window(
    window: &FilteredWindow,
    baseline: &Baseline,
    weights: Option<&WeightVector>,
) -> NafvPoint {
    let fv = feature_vector(window, baseline);
    let value = match weights {
        Some(w) => nafv_weighted(&fv, w),
        None => nafv(&fv),
    };
    NafvPoint {
        index: window.index,
        start: window.start,
        value,
        features: fv,
    }
}

/// Full detection-side extraction: window the records, reduce each window to
/// many-to-one flows (unless `filtered` is off for ablation), and score every
/// window against the baseline.
pub fn score_stream(
    records: &[crate::flow::PacketRecord],
    baseline: &Baseline,
    weights: Option<&WeightVector>,
    filtered: bool,
) -> crate::error::Result<Vec<NafvPoint>> {
    let cfg = crate::flow::SamplingConfig::new(baseline.unit_time, crate::flow::StreamRole::Detection)?;
    let windows = crate::flow::window_stream(records, &cfg);
    Ok(windows
        .iter()
        .map(|w| {
            let fw = if filtered {
                crate::prefilter::filter_window(w)
            } else {
                crate::prefilter::unfiltered_window(w)
            };
            score_window(&fw, baseline, weights)
        })
        .collect())
}

/// First-principal-component weights of the standardized feature matrix.
///
/// Columns are standardized to zero mean and unit variance, the leading
/// eigenvector of the correlation matrix is taken with absolute loadings and
/// normalized to sum to 1. Rank-deficient or constant columns fall back to
/// equal weights with a warning.
pub fn pca_weights(rows: &[FeatureVector]) -> Result<WeightVector> {
    if rows.len() < 4 {
        return Err(Error::Config(format!(
            "pca weights need at least 4 feature rows, got {}",
            rows.len()
        )));
    }
    let n = rows.len() as f64;
    let data: Vec<[f64; 4]> = rows.iter().map(|r| [r.n, r.a, r.f, r.v]).collect();

    let mut means = [0.0f64; 4];
    for row in &data {
        for j in 0..4 {
            means[j] += row[j];
        }
    }
    means.iter_mut().for_each(|m| *m /= n);

    let mut stds = [0.0f64; 4];
    for row in &data {
        for j in 0..4 {
            stds[j] += (row[j] - means[j]).powi(2);
        }
    }
    for s in stds.iter_mut() {
        *s = (*s / (n - 1.0)).sqrt();
    }
    if stds.iter().any(|s| *s < 1e-12) {
        log::warn!("constant feature column; falling back to equal weights");
        return Ok(WeightVector::EQUAL);
    }

    // correlation matrix of the standardized columns
    let mut corr = nalgebra::Matrix4::<f64>::zeros();
    for row in &data {
        let z: Vec<f64> = (0..4).map(|j| (row[j] - means[j]) / stds[j]).collect();
        for i in 0..4 {
            for j in 0..4 {
                corr[(i, j)] += z[i] * z[j];
            }
        }
    }
    corr /= n - 1.0;

    let eig = nalgebra::SymmetricEigen::new(corr);
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (top, second) = (order[0], order[1]);
    // Near-spherical spectrum means no dominant component; the leading
    // eigenvector direction is then sampling noise, so use equal weights.
    let (l1, l2) = (eig.eigenvalues[top], eig.eigenvalues[second]);
    if l1 <= 0.0 || (l1 - l2) / l1 < 0.05 {
        log::warn!("no dominant principal component; falling back to equal weights");
        return Ok(WeightVector::EQUAL);
    }
    let loadings = eig.eigenvectors.column(top);
    let abs: Vec<f64> = loadings.iter().map(|v| v.abs()).collect();
    let sum: f64 = abs.iter().sum();
    if sum < 1e-12 {
        log::warn!("degenerate leading eigenvector; falling back to equal weights");
        return Ok(WeightVector::EQUAL);
    }
    WeightVector::new_lenient(abs[0] / sum, abs[1] / sum, abs[2] / sum, abs[3] / sum)
}
