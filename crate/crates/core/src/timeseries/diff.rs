//! d-fold differencing and its exact inverse.

use crate::error::{Error, Result};

/// d-fold first differences; output length is `series.len() - d`.
pub fn difference(series: &[f64], d: usize) -> Result<Vec<f64>> {
    if series.len() <= d {
        return Err(Error::TimeSeries(format!(
            "series of length {} too short for differencing order {d}",
            series.len()
        )));
    }
    let mut out = series.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

/// Inverse of [`difference`]: rebuild the original series from its d-fold
/// differences and the first `d` original values.
pub fn integrate(diffed: &[f64], anchors: &[f64]) -> Result<Vec<f64>> {
    let d = anchors.len();
    if d == 0 {
        return Ok(diffed.to_vec());
    }
    // Forward-difference triangle of the anchors yields the first value of
    // every intermediate difference level.
    let mut triangle: Vec<Vec<f64>> = vec![anchors.to_vec()];
    for level in 1..d {
        let prev = &triangle[level - 1];
        triangle.push(prev.windows(2).map(|w| w[1] - w[0]).collect());
    }

    let mut current = diffed.to_vec();
    for level in (0..d).rev() {
        let first = triangle[level][0];
        let mut rebuilt = Vec::with_capacity(current.len() + 1);
        rebuilt.push(first);
        let mut acc = first;
        for &delta in &current {
            acc += delta;
            rebuilt.push(acc);
        }
        current = rebuilt;
    }
    Ok(current)
}

/// Continue a series h steps from forecasts on the differenced scale, given
/// the LAST `d` values of the original series.
pub fn integrate_forecast(diff_forecast: &[f64], orig_tail: &[f64]) -> Vec<f64> {
    let d = orig_tail.len();
    if d == 0 {
        return diff_forecast.to_vec();
    }
    // Backward-difference triangle of the tail: last value of every level.
    let mut last_at_level = Vec::with_capacity(d);
    let mut row = orig_tail.to_vec();
    last_at_level.push(*row.last().unwrap());
    for _ in 1..d {
        row = row.windows(2).map(|w| w[1] - w[0]).collect();
        last_at_level.push(*row.last().unwrap());
    }

    let mut out = Vec::with_capacity(diff_forecast.len());
    let mut state = last_at_level; // state[j] = running last value of level j
    for &w in diff_forecast {
        // add the new d-th difference from the deepest level up
        let mut add = w;
        for level in (0..d).rev() {
            state[level] += add;
            add = state[level];
        }
        out.push(state[0]);
    }
    out
}
