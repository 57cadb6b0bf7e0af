//! Threshold-activated detection state machine.
//!
//! Normal operation is a cheap threshold check on the fused score. After
//! `beta` consecutive outliers the ARIMA trend predictor is fitted on the
//! score history and every subsequent point is judged abnormal if either its
//! observed value or the one-step forecast exceeds the threshold. A sliding
//! ring of the last `w` abnormality flags drives the alarm: the alarm raises
//! when the abnormal fraction reaches `rho` and the predictor shuts back
//! down when the ring empties, so the expensive model runs only while the
//! stream actually looks suspicious.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::NafvPoint;
use crate::timeseries::{fit_arima, ArimaModel, ArimaSpec};

#[derive(Debug, Clone, Copy)]
pub struct DetectorConfig {
    /// Score outlier threshold.
    pub alpha: f64,
    /// Consecutive outliers required to activate the predictor.
    pub beta: usize,
    /// Sliding-window size in points.
    pub w: usize,
    /// Abnormal fraction of the window that raises the alarm, in (0, 1].
    pub rho: f64,
    /// Windows between ARIMA refits while the predictor is active;
    /// `usize::MAX` disables refits.
    pub refit_interval: usize,
    /// Observations required before the predictor can activate. `None`
    /// derives the fitter's own minimum from `arima`.
    pub min_history: Option<usize>,
    pub arima: ArimaSpec,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            alpha: 25.0,
            beta: 2,
            w: 10,
            rho: 0.5,
            refit_interval: 16,
            min_history: None,
            arima: ArimaSpec::default(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(crate::Error::Config("alpha must be positive".into()));
        }
        if self.beta < 1 {
            return Err(crate::Error::Config("beta must be >= 1".into()));
        }
        if self.w < 1 {
            return Err(crate::Error::Config("window size w must be >= 1".into()));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(crate::Error::Config("rho must be in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn min_history(&self) -> usize {
        self.min_history.unwrap_or_else(|| self.arima.min_series_len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    OutlierMarked,
    PredictorActivated,
    DdosAlarm,
    PredictorDeactivated,
    AlarmCleared,
    FitFailed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub window: usize,
    pub kind: EventKind,
    pub nafv: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forecast: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Idle,
    Armed,
    Predicting,
    Alarmed,
}

enum State {
    Idle,
    Armed { consecutive: usize },
    Predicting(Predictor),
    Alarmed(Predictor),
}

struct Predictor {
    model: ArimaModel,
    ring: VecDeque<bool>,
    abnormal: usize,
    steps_since_fit: usize,
}

impl Predictor {
    fn push(&mut self, flag: bool, capacity: usize) {
        if self.ring.len() == capacity {
            if self.ring.pop_front() == Some(true) {
                self.abnormal -= 1;
            }
        }
        self.ring.push_back(flag);
        if flag {
            self.abnormal += 1;
        }
    }
}

/// One line of the per-window state log.
#[derive(Debug, Clone, Serialize)]
pub struct StateLogEntry {
    pub window: usize,
    pub mode: Mode,
    pub nafv: f64,
    pub y: usize,
}

pub struct Detector {
    config: DetectorConfig,
    state: State,
    history: Vec<f64>,
    /// Number of ARIMA fits performed (the compute-saving contract is
    /// asserted against this).
    pub fit_invocations: usize,
    pub forecast_invocations: usize,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            state: State::Idle,
            history: Vec::new(),
            fit_invocations: 0,
            forecast_invocations: 0,
        })
    }

    pub fn mode(&self) -> Mode {
        match self.state {
            State::Idle => Mode::Idle,
            State::Armed { .. } => Mode::Armed,
            State::Predicting(_) => Mode::Predicting,
            State::Alarmed(_) => Mode::Alarmed,
        }
    }

    fn abnormal_count(&self) -> usize {
        match &self.state {
            State::Predicting(p) | State::Alarmed(p) => p.abnormal,
            _ => 0,
        }
    }

    fn try_fit(&mut self) -> Option<ArimaModel> {
        self.fit_invocations += 1;
        fit_arima(&self.history, self.config.arima).ok()
    }

    /// Advance the state machine by one point, in window order.
    pub fn step(&mut self, point: &NafvPoint) -> Vec<DetectionEvent> {
        let cfg = self.config;
        let mut events = Vec::new();
        let outlier = point.value > cfg.alpha;
        self.history.push(point.value);

        let event = |kind: EventKind, y: Option<usize>, forecast: Option<f64>| DetectionEvent {
            window: point.index,
            kind,
            nafv: point.value,
            y,
            w: y.is_some().then_some(cfg.w),
            forecast,
        };

        let state = std::mem::replace(&mut self.state, State::Idle);
        self.state = match state {
            State::Idle => {
                if outlier {
                    events.push(event(EventKind::OutlierMarked, None, None));
                    if cfg.beta == 1 {
                        match self.activate(&mut events, point) {
                            Some(p) => State::Predicting(p),
                            None => State::Armed { consecutive: 1 },
                        }
                    } else {
                        State::Armed { consecutive: 1 }
                    }
                } else {
                    State::Idle
                }
            }
            State::Armed { consecutive } => {
                if !outlier {
                    State::Idle
                } else if consecutive + 1 >= cfg.beta {
                    if self.history.len() >= cfg.min_history() {
                        match self.activate(&mut events, point) {
                            Some(p) => State::Predicting(p),
                            // fit failure: stay armed, retry next outlier step
                            None => State::Armed {
                                consecutive: (consecutive + 1).min(cfg.beta),
                            },
                        }
                    } else {
                        // cold start: not enough history to fit; stay visible
                        events.push(event(EventKind::OutlierMarked, None, None));
                        State::Armed {
                            consecutive: (consecutive + 1).min(cfg.beta),
                        }
                    }
                } else {
                    events.push(event(EventKind::OutlierMarked, None, None));
                    State::Armed {
                        consecutive: consecutive + 1,
                    }
                }
            }
            State::Predicting(mut pred) => {
                let forecast = self.predict_step(&mut pred, point);
                let abnormal = point.value.max(forecast.unwrap_or(f64::NEG_INFINITY)) > cfg.alpha;
                pred.push(abnormal, cfg.w);
                if pred.ring.len() == cfg.w
                    && pred.abnormal as f64 / cfg.w as f64 >= cfg.rho
                {
                    events.push(event(EventKind::DdosAlarm, Some(pred.abnormal), forecast));
                    State::Alarmed(pred)
                } else if pred.abnormal == 0 {
                    events.push(event(
                        EventKind::PredictorDeactivated,
                        Some(0),
                        forecast,
                    ));
                    State::Idle
                } else {
                    State::Predicting(pred)
                }
            }
            State::Alarmed(mut pred) => {
                let forecast = self.predict_step(&mut pred, point);
                let abnormal = point.value.max(forecast.unwrap_or(f64::NEG_INFINITY)) > cfg.alpha;
                pred.push(abnormal, cfg.w);
                if (pred.abnormal as f64 / cfg.w as f64) < cfg.rho {
                    events.push(event(EventKind::AlarmCleared, Some(pred.abnormal), forecast));
                    if pred.abnormal == 0 {
                        State::Idle
                    } else {
                        State::Predicting(pred)
                    }
                } else {
                    State::Alarmed(pred)
                }
            }
        };
        events
    }

    fn activate(
        &mut self,
        events: &mut Vec<DetectionEvent>,
        point: &NafvPoint,
    ) -> Option<Predictor> {
        match self.try_fit() {
            Some(model) => {
                events.push(DetectionEvent {
                    window: point.index,
                    kind: EventKind::PredictorActivated,
                    nafv: point.value,
                    y: None,
                    w: None,
                    forecast: None,
                });
                Some(Predictor {
                    model,
                    ring: VecDeque::with_capacity(self.config.w),
                    abnormal: 0,
                    steps_since_fit: 0,
                })
            }
            None => {
                events.push(DetectionEvent {
                    window: point.index,
                    kind: EventKind::FitFailed,
                    nafv: point.value,
                    y: None,
                    w: None,
                    forecast: None,
                });
                None
            }
        }
    }

    /// One-step forecast from the active model, refitting on schedule.
    fn predict_step(&mut self, pred: &mut Predictor, _point: &NafvPoint) -> Option<f64> {
        pred.steps_since_fit += 1;
        if self.config.refit_interval != usize::MAX
            && pred.steps_since_fit >= self.config.refit_interval
        {
            if let Some(model) = self.try_fit() {
                pred.model = model;
            }
            pred.steps_since_fit = 0;
        }
        self.forecast_invocations += 1;
        pred.model.forecast(1).ok().and_then(|f| f.first().copied())
    }
}

/// Batch driver: fold [`Detector::step`] over an ordered point sequence.
pub fn run(
    points: &[NafvPoint],
    config: DetectorConfig,
) -> Result<(Vec<DetectionEvent>, Vec<StateLogEntry>)> {
    let mut detector = Detector::new(config)?;
    let mut events = Vec::new();
    let mut log = Vec::with_capacity(points.len());
    for point in points {
        events.extend(detector.step(point));
        log.push(StateLogEntry {
            window: point.index,
            mode: detector.mode(),
            nafv: point.value,
            y: detector.abnormal_count(),
        });
    }
    Ok((events, log))
}
