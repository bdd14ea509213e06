//! Streaming least-squares recovery of lost update intervals and demands.
//!
//! The network models each price as proportional to the quantity it tracks,
//! `price = w * sample`, and fits `w` by least squares over the whole history:
//!
//! ```text
//! w = sum(sample * price) / sum(sample^2)
//! ```
//!
//! Only the two sums and a count are kept, so memory stays constant no matter
//! how long the run is. When a response is lost the next value is predicted
//! as `price / w`, then nudged by the mean prediction error measured over the
//! last closed correction window.

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum EstimatorError {
    #[error("sample must be finite and > 0 for interval tracking, got {0}")]
    NonPositiveInterval(f64),
    #[error("sample must be finite and >= 0, got {0}")]
    NegativeSample(f64),
    #[error("price must be finite and >= 0, got {0}")]
    NegativePrice(f64),
    #[error("insufficient history to estimate")]
    InsufficientHistory,
    #[error("window [{t_i}, {t_j}] is empty or inverted")]
    EmptyWindow { t_i: u64, t_j: u64 },
}

/// What an aggregate tracks; intervals must be strictly positive, demands may
/// be zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Interval,
    Demand,
}

/// Running sums for the proportional fit `price = w * sample`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsAggregates {
    pub kind: Quantity,
    /// `sum(sample * price)`
    pub s_xy: f64,
    /// `sum(sample^2)`
    pub s_xx: f64,
    pub count: u64,
    pub w: Option<f64>,
}

impl LsAggregates {
    pub fn new(kind: Quantity) -> Self {
        LsAggregates {
            kind,
            s_xy: 0.0,
            s_xx: 0.0,
            count: 0,
            w: None,
        }
    }

    pub fn observe(&mut self, sample: f64, price: f64) -> Result<(), EstimatorError> {
        match self.kind {
            Quantity::Interval if !(sample > 0.0 && sample.is_finite()) => {
                return Err(EstimatorError::NonPositiveInterval(sample))
            }
            Quantity::Demand if !(sample >= 0.0 && sample.is_finite()) => {
                return Err(EstimatorError::NegativeSample(sample))
            }
            _ => {}
        }
        if !(price >= 0.0 && price.is_finite()) {
            return Err(EstimatorError::NegativePrice(price));
        }
        self.s_xy += sample * price;
        self.s_xx += sample * sample;
        self.count += 1;
        self.w = (self.s_xx > 0.0).then(|| self.s_xy / self.s_xx);
        Ok(())
    }

    pub fn estimator(&self) -> Result<f64, EstimatorError> {
        self.w.ok_or(EstimatorError::InsufficientHistory)
    }

    /// `price / w`; fails while `w` is undefined or not positive.
    pub fn predict(&self, price: f64) -> Result<f64, EstimatorError> {
        match self.w {
            Some(w) if w > 0.0 => Ok(price / w),
            _ => Err(EstimatorError::InsufficientHistory),
        }
    }
}

/// Predicted update interval for the next price.
pub fn predict_interval(agg: &LsAggregates, price_next: f64) -> Result<f64, EstimatorError> {
    agg.predict(price_next)
}

/// Predicted bandwidth demand for the next price.
pub fn predict_demand(agg: &LsAggregates, price_next: f64) -> Result<f64, EstimatorError> {
    agg.predict(price_next)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSample {
    pub t: u64,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats {
    pub mean_actual: f64,
    pub mean_predicted: f64,
    pub mean_abs_err: f64,
}

/// Means of the actual value, the prediction and their absolute gap over the
/// samples whose iteration lies in `[t_i, t_j]`. The denominator is the
/// number of samples present, not the window length.
pub fn window_stats(
    history: &[WindowSample],
    t_i: u64,
    t_j: u64,
) -> Result<WindowStats, EstimatorError> {
    if t_i > t_j {
        return Err(EstimatorError::EmptyWindow { t_i, t_j });
    }
    let (mut n, mut sum_a, mut sum_p, mut sum_e) = (0usize, 0.0, 0.0, 0.0);
    for s in history.iter().filter(|s| (t_i..=t_j).contains(&s.t)) {
        n += 1;
        sum_a += s.actual;
        sum_p += s.predicted;
        sum_e += (s.actual - s.predicted).abs();
    }
    if n == 0 {
        return Err(EstimatorError::EmptyWindow { t_i, t_j });
    }
    let n = n as f64;
    Ok(WindowStats {
        mean_actual: sum_a / n,
        mean_predicted: sum_p / n,
        mean_abs_err: sum_e / n,
    })
}

/// Shifts a prediction by the window's mean error toward the side the actual
/// values fell on. Nothing happens while the mean error is within
/// `eps_correct`, or when the two window means agree to within it.
pub fn correct(predicted: f64, stats: &WindowStats, eps_correct: f64, floor: f64) -> f64 {
    if stats.mean_abs_err <= eps_correct {
        return predicted.max(floor);
    }
    let gap = stats.mean_actual - stats.mean_predicted;
    let adjusted = if gap.abs() <= eps_correct {
        predicted
    } else if gap < 0.0 {
        predicted - stats.mean_abs_err
    } else {
        predicted + stats.mean_abs_err
    };
    adjusted.max(floor)
}

/// Last iteration of a window opened at `t_i`.
///
/// Normally `t_i + gamma`; if that overshoots the timeout and no response
/// arrived by the timeout, the window is cut at the timeout instead.
pub fn advance_window(
    t_i: u64,
    gamma: u64,
    response_arrived_by: Option<u64>,
    t_timeout: u64,
) -> u64 {
    let arrived = response_arrived_by.is_some_and(|t| t <= t_timeout);
    if t_i + gamma > t_timeout && !arrived {
        t_timeout
    } else {
        t_i + gamma
    }
}

/// How the correction threshold is chosen for a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsRule {
    /// Fraction of the window's mean actual value.
    Relative(f64),
    Absolute(f64),
}

impl Default for EpsRule {
    fn default() -> Self {
        EpsRule::Relative(0.01)
    }
}

impl EpsRule {
    pub fn threshold(&self, stats: &WindowStats) -> f64 {
        match *self {
            EpsRule::Relative(f) => f * stats.mean_actual.abs(),
            EpsRule::Absolute(e) => e,
        }
    }
}

/// Error-correction window state. Holds only the samples of the window that
/// is currently open plus the statistics of the last closed one.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionWindow {
    pub t_i: u64,
    pub gamma: u64,
    /// Timeout iteration `t_i + last RTT`.
    pub t_timeout: u64,
    pub eps_rule: EpsRule,
    pub last: Option<WindowStats>,
    samples: Vec<WindowSample>,
    first_arrival: Option<u64>,
}

impl CorrectionWindow {
    pub fn new(t_i: u64, gamma: u64, rtt_iters: u64, eps_rule: EpsRule) -> Self {
        CorrectionWindow {
            t_i,
            gamma: gamma.max(1),
            t_timeout: t_i + rtt_iters.max(1),
            eps_rule,
            last: None,
            samples: Vec::new(),
            first_arrival: None,
        }
    }

    /// Records iteration `t`. `arrived` says whether a response came back;
    /// `sample` is the (actual, predicted) pair when a prediction existed.
    /// Returns the closing iteration when the window closed at `t`; the next
    /// window then opens at `t + 1` with the given `gamma` and RTT.
    pub fn tick(
        &mut self,
        t: u64,
        arrived: bool,
        sample: Option<(f64, f64)>,
        next_gamma: u64,
        next_rtt_iters: u64,
    ) -> Option<u64> {
        if arrived {
            self.first_arrival.get_or_insert(t);
        }
        if let Some((actual, predicted)) = sample {
            self.samples.push(WindowSample {
                t,
                actual,
                predicted,
            });
        }
        let t_j = advance_window(self.t_i, self.gamma, self.first_arrival, self.t_timeout);
        if t < t_j {
            return None;
        }
        if let Ok(stats) = window_stats(&self.samples, self.t_i, t_j) {
            self.last = Some(stats);
        }
        self.samples.clear();
        self.first_arrival = None;
        self.t_i = t + 1;
        self.gamma = next_gamma.max(1);
        self.t_timeout = self.t_i + next_rtt_iters.max(1);
        Some(t_j)
    }

    /// Applies the last closed window's correction to a raw prediction.
    pub fn apply(&self, predicted: f64, floor: f64) -> f64 {
        match &self.last {
            Some(stats) => correct(predicted, stats, self.eps_rule.threshold(stats), floor),
            None => predicted.max(floor),
        }
    }
}
