use thiserror::Error;

use super::engine::Trace;

/// Tolerance on `sum |delta lambda|` used to call a run converged.
pub const CONVERGENCE_TOL: f64 = 1e-3;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum SummaryError {
    #[error("trace is empty")]
    EmptyTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationError {
    /// `(iteration, |h - h_hat|)` at every loss iteration.
    pub at_loss: Vec<(u64, f64)>,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub iterations: u64,
    /// Link shared by the most users; the error and `w` figures refer to it.
    pub tracked_link: String,
    pub final_prices: Vec<(String, f64)>,
    pub final_rates: Vec<(String, f64)>,
    pub final_objective: f64,
    pub loss_iterations: usize,
    /// `None` when no loss happened, so no prediction was ever used.
    pub estimation: Option<EstimationError>,
    /// First and last defined `w` of the tracked link.
    pub w_endpoints: Option<(f64, f64)>,
    /// First iteration after which `sum |delta lambda|` stays below tolerance.
    pub convergence_iteration: Option<u64>,
}

impl Summary {
    pub fn from_trace(trace: &Trace) -> Result<Summary, SummaryError> {
        let last = trace.records.last().ok_or(SummaryError::EmptyTrace)?;
        let net = &trace.network;
        let tracked = tracked_link(trace);

        let final_prices = net
            .links()
            .iter()
            .zip(&trace.final_prices)
            .map(|(l, &p)| (l.id.clone(), p))
            .collect();
        let final_rates = net
            .users()
            .iter()
            .zip(&last.users)
            .map(|(u, r)| (u.id.clone(), r.rate))
            .collect();

        let at_loss: Vec<(u64, f64)> = trace
            .records
            .iter()
            .filter(|r| r.loss.is_some())
            .filter_map(|r| r.links[tracked].delta_h().map(|d| (r.t, d)))
            .collect();
        let loss_iterations = trace.records.iter().filter(|r| r.loss.is_some()).count();
        let estimation = (!at_loss.is_empty()).then(|| {
            let max = at_loss.iter().map(|e| e.1).fold(0.0, f64::max);
            let mean = at_loss.iter().map(|e| e.1).sum::<f64>() / at_loss.len() as f64;
            EstimationError { at_loss, max, mean }
        });

        let mut ws = trace.records.iter().filter_map(|r| r.links[tracked].w);
        let w_endpoints = ws
            .next()
            .map(|first| (first, ws.next_back().unwrap_or(first)));

        Ok(Summary {
            iterations: trace.records.len() as u64,
            tracked_link: net.links()[tracked].id.clone(),
            final_prices,
            final_rates,
            final_objective: last.objective,
            loss_iterations,
            estimation,
            w_endpoints,
            convergence_iteration: convergence_iteration(trace, CONVERGENCE_TOL),
        })
    }
}

/// Index of the link carrying the most users (first by id on ties).
pub fn tracked_link(trace: &Trace) -> usize {
    let net = &trace.network;
    (0..net.links().len())
        .rev()
        .max_by_key(|&l| net.users_of(l).len())
        .unwrap_or(0)
}

/// Price sequence of every iteration followed by the final prices.
fn price_path(trace: &Trace) -> Vec<Vec<f64>> {
    trace
        .records
        .iter()
        .map(|r| r.prices())
        .chain(std::iter::once(trace.final_prices.clone()))
        .collect()
}

pub fn convergence_iteration(trace: &Trace, tol: f64) -> Option<u64> {
    let path = price_path(trace);
    let moves: Vec<f64> = path
        .windows(2)
        .map(|p| p[0].iter().zip(&p[1]).map(|(a, b)| (a - b).abs()).sum())
        .collect();
    let mut first = None;
    for (rec, &m) in trace.records.iter().zip(&moves) {
        if m < tol {
            first.get_or_insert(rec.t);
        } else {
            first = None;
        }
    }
    first
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::engine::{run_scenario, ScenarioConfig};
    use crate::sim::loss::LossPolicy;

    #[test]
    fn no_loss_has_no_estimation_error() {
        let trace = run_scenario(&ScenarioConfig::builtin("single-link")).unwrap();
        let s = Summary::from_trace(&trace).unwrap();
        assert!(s.estimation.is_none());
        assert_eq!(s.loss_iterations, 0);
        assert_eq!(s.tracked_link, "L0");
        assert!(s.convergence_iteration.is_some());
    }

    #[test]
    fn periodic_error_count() {
        let mut c = ScenarioConfig::builtin("parking-lot");
        c.loss = LossPolicy::periodic(50);
        let trace = run_scenario(&c).unwrap();
        let s = Summary::from_trace(&trace).unwrap();
        assert_eq!(s.tracked_link, "CD");
        assert_eq!(s.estimation.unwrap().at_loss.len(), 500 / 50);
    }

    #[test]
    fn empty_trace_rejected() {
        let mut trace = run_scenario(&{
            let mut c = ScenarioConfig::builtin("single-link");
            c.iterations = 1;
            c
        })
        .unwrap();
        trace.records.clear();
        assert_eq!(Summary::from_trace(&trace), Err(SummaryError::EmptyTrace));
    }
}
