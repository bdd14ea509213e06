//! M/M/1-style message delay and RTT model.
//!
//! Each link on a route contributes `rho / (flow - min_rate) + 1 / min_rate`
//! with `rho = min_rate / flow` while the link is above its minimum processing
//! rate. Once `flow <= min_rate` the queue is saturated and the link instead
//! contributes the buffer drain time `B / x` of the user being served.

use thiserror::Error;

use crate::topology::Network;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum DelayError {
    /// `flow <= min_rate`: the smooth formula is undefined and the buffer
    /// branch applies.
    #[error("flow {flow} does not exceed min rate {min_rate}; link is saturated")]
    Saturated { flow: f64, min_rate: f64 },
    #[error("rate must be > 0 for the buffer branch, got {0}")]
    ZeroRate(f64),
    #[error("link {0} carries no users")]
    IdleLink(usize),
}

/// Smooth-branch delay contribution of one link.
pub fn link_term(flow: f64, min_rate: f64) -> Result<f64, DelayError> {
    if !(flow > min_rate) {
        return Err(DelayError::Saturated { flow, min_rate });
    }
    let rho = min_rate / flow;
    Ok(rho / (flow - min_rate) + 1.0 / min_rate)
}

/// Buffer drain time `buffer / rate`.
pub fn saturated_delay(buffer: f64, rate: f64) -> Result<f64, DelayError> {
    if !(rate > 0.0) {
        return Err(DelayError::ZeroRate(rate));
    }
    Ok(buffer / rate)
}

/// One-way delay from the route head to user `u`, including propagation.
///
/// On saturated links the user's own rate drains the buffer; the rate is
/// floored at the user's minimum requirement so a user that stopped sending
/// still gets its control messages through.
pub fn path_delay(
    network: &Network,
    flows: &[f64],
    rates: &[f64],
    u: usize,
) -> Result<f64, DelayError> {
    let user = &network.users()[u];
    let mut total = 0.0;
    for &l in network.route(u) {
        let link = &network.links()[l];
        total += match link_term(flows[l], link.min_rate) {
            Ok(d) => d,
            Err(DelayError::Saturated { .. }) => {
                saturated_delay(user.buffer, rates[u].max(user.x_min))?
            }
            Err(e) => return Err(e),
        };
        total += link.propagation_delay;
    }
    Ok(total)
}

/// Longest path delay among the users of link `l`, with the user that
/// attains it (first in id order on ties).
pub fn link_max_delay(
    network: &Network,
    flows: &[f64],
    rates: &[f64],
    l: usize,
) -> Result<(f64, usize), DelayError> {
    let mut best: Option<(f64, usize)> = None;
    for &u in network.users_of(l) {
        let d = path_delay(network, flows, rates, u)?;
        if best.is_none_or(|(b, _)| d > b) {
            best = Some((d, u));
        }
    }
    best.ok_or(DelayError::IdleLink(l))
}

/// Link RTT, taking the lower bound `2 d_max + d_serv` with equality.
pub fn link_rtt(d_max: f64, serv_delay: f64) -> f64 {
    2.0 * d_max + serv_delay
}

/// RTT of every link for the given allocation, with the farthest user of
/// each link. Links without users report `None`.
pub fn link_rtts(
    network: &Network,
    flows: &[f64],
    rates: &[f64],
) -> Result<Vec<Option<(f64, usize)>>, DelayError> {
    (0..network.links().len())
        .map(|l| match link_max_delay(network, flows, rates, l) {
            Ok((d, u)) => Ok(Some((link_rtt(d, network.links()[l].serv_delay), u))),
            Err(DelayError::IdleLink(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// Running maximum of a link's RTT plus a slack term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RttRecord {
    pub link: usize,
    /// Most recent RTT.
    pub rtt: f64,
    pub max_seen: f64,
    pub epsilon: f64,
}

impl RttRecord {
    pub fn new(link: usize, rtt: f64, epsilon: f64) -> Self {
        RttRecord {
            link,
            rtt,
            max_seen: rtt,
            epsilon,
        }
    }

    pub fn update(&mut self, rtt_now: f64) {
        self.rtt = rtt_now;
        self.max_seen = self.max_seen.max(rtt_now);
    }

    /// `max_t RTT_l^t + epsilon`
    pub fn rtt_max(&self) -> f64 {
        self.max_seen + self.epsilon
    }
}
