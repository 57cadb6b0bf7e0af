//! Window-level detection metrics, attack as the positive class.
//!
//! A window counts as flagged when the detector is in the alarmed state at
//! that window. Flash-crowd windows count as negatives: they are the hard
//! case the score is supposed to push below zero rather than above the
//! alarm threshold.

use serde::Serialize;

use crate::detector::{DetectionEvent, EventKind};
use crate::error::{Error, Result};
use crate::scenario::Label;

pub const METRICS_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    /// Attack windows flagged.
    pub tp: usize,
    /// Attack windows missed.
    pub fn_: usize,
    /// Non-attack windows flagged.
    pub fp: usize,
    /// Non-attack windows not flagged.
    pub tn: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub format: u32,
    pub windows: usize,
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
    /// Detection rate tp/(tp+fn); `None` when no attack windows exist.
    pub dr: Option<f64>,
    /// Missing rate fn/(tp+fn).
    pub mr: Option<f64>,
    /// False-alarm rate fp/(fp+tn); `None` when no negative windows exist.
    pub fr: Option<f64>,
}

/// Reconstruct the per-window alarmed flags from an event log: alarmed from
/// each alarm onset up to (excluding) the window that cleared it.
pub fn alarmed_windows(events: &[DetectionEvent], window_count: usize) -> Result<Vec<bool>> {
    let mut flags = vec![false; window_count];
    let mut alarm_start: Option<usize> = None;
    for e in events {
        if e.window >= window_count {
            return Err(Error::Evaluation(format!(
                "event references window {} but only {window_count} labels were provided",
                e.window
            )));
        }
        match e.kind {
            EventKind::DdosAlarm => alarm_start = Some(e.window),
            EventKind::AlarmCleared => {
                if let Some(start) = alarm_start.take() {
                    flags[start..e.window].iter_mut().for_each(|f| *f = true);
                }
            }
            _ => {}
        }
    }
    if let Some(start) = alarm_start {
        flags[start..].iter_mut().for_each(|f| *f = true);
    }
    Ok(flags)
}

pub fn confusion(flagged: &[bool], labels: &[Label]) -> Result<ConfusionCounts> {
    if flagged.len() != labels.len() {
        return Err(Error::Evaluation(format!(
            "label count {} does not match window count {}",
            labels.len(),
            flagged.len()
        )));
    }
    let mut c = ConfusionCounts { tp: 0, fn_: 0, fp: 0, tn: 0 };
    for (&f, &label) in flagged.iter().zip(labels) {
        match (label == Label::Attack, f) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn metrics_from_counts(c: ConfusionCounts) -> Metrics {
    let ratio = |num: usize, den: usize| {
        if den == 0 { None } else { Some(num as f64 / den as f64) }
    };
    Metrics {
        format: METRICS_FORMAT,
        windows: c.tp + c.fn_ + c.fp + c.tn,
        tp: c.tp,
        fn_: c.fn_,
        fp: c.fp,
        tn: c.tn,
        dr: ratio(c.tp, c.tp + c.fn_),
        mr: ratio(c.fn_, c.tp + c.fn_),
        fr: ratio(c.fp, c.fp + c.tn),
    }
}

/// End-to-end evaluation of a detector event log against per-window labels.
pub fn evaluate(events: &[DetectionEvent], labels: &[Label]) -> Result<Metrics> {
    let flagged = alarmed_windows(events, labels.len())?;
    Ok(metrics_from_counts(confusion(&flagged, labels)?))
}
