use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::loss::{inject_loss, LossError, LossPolicy, MessageClass};
use crate::delay::{self, DelayError, RttRecord};
use crate::estimator::{CorrectionWindow, EpsRule, EstimatorError, LsAggregates, Quantity};
use crate::num::{self, NumError, PriceState};
use crate::topology::{Network, TopologyError};
use crate::wire::{self, CodecError, PriceMessage};

/// Rate every user sends at before the first price arrives.
pub const INITIAL_RATE: f64 = 10.0;
/// Smallest interval a corrected prediction may take.
pub const MIN_INTERVAL: f64 = 1e-6;
/// Interval reported by a link that no user crosses.
pub const IDLE_RTT: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("invalid configuration: {0}")]
    Config(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkSource {
    Builtin(String),
    File(PathBuf),
    Inline(Network),
}

impl NetworkSource {
    pub fn resolve(&self) -> Result<Network, TopologyError> {
        match self {
            NetworkSource::Builtin(name) => Network::builtin(name),
            NetworkSource::File(path) => Network::from_file(path),
            NetworkSource::Inline(net) => Ok(net.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub source: NetworkSource,
    pub iterations: u64,
    pub sigma0: f64,
    pub lambda_min: f64,
    pub loss: LossPolicy,
    pub seed: u64,
    /// Slack added to every link RTT.
    pub epsilon_rtt: f64,
    /// Half-width of the uniform observation noise on measured intervals.
    pub noise_eps: f64,
    /// Correction window length in iterations; `None` derives it from the
    /// last recorded RTT.
    pub gamma: Option<u64>,
    pub eps_rule: EpsRule,
    /// Feed predictions back into the least-squares sums during losses.
    pub feed_estimates: bool,
    /// When false, losses fall back to the last received values.
    pub recovery: bool,
    pub initial_rate: f64,
    /// Keep the hex dump of every frame sent.
    pub capture_frames: bool,
}

impl ScenarioConfig {
    pub fn new(source: NetworkSource) -> Self {
        ScenarioConfig {
            source,
            iterations: 500,
            sigma0: 1.0,
            lambda_min: 0.0,
            loss: LossPolicy::none(),
            seed: 42,
            epsilon_rtt: 0.0,
            noise_eps: 0.0,
            gamma: None,
            eps_rule: EpsRule::default(),
            feed_estimates: false,
            recovery: true,
            initial_rate: INITIAL_RATE,
            capture_frames: false,
        }
    }

    pub fn builtin(name: &str) -> Self {
        ScenarioConfig::new(NetworkSource::Builtin(name.to_string()))
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.iterations == 0 {
            return Err(SimError::Config("iterations must be >= 1"));
        }
        if !(self.noise_eps >= 0.0 && self.epsilon_rtt >= 0.0) {
            return Err(SimError::Config("epsilon and noise must be >= 0"));
        }
        if self.gamma == Some(0) {
            return Err(SimError::Config("gamma must be >= 1"));
        }
        if !(self.initial_rate >= 0.0 && self.initial_rate.is_finite()) {
            return Err(SimError::Config("initial rate must be >= 0"));
        }
        self.loss.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkRecord {
    pub price: f64,
    pub flow: f64,
    pub congested: bool,
    /// Interval the allocation actually produced this iteration.
    pub h_actual: f64,
    /// Predicted interval, when one could be formed.
    pub h_estimated: Option<f64>,
    /// Interval the network scheduled the next update with.
    pub h_scheduled: f64,
    pub w: Option<f64>,
}

impl LinkRecord {
    pub fn delta_h(&self) -> Option<f64> {
        self.h_estimated.map(|e| (self.h_actual - e).abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserRecord {
    pub path_price: f64,
    pub rate: f64,
    /// Recovered demand the network used in place of a lost response.
    pub rate_estimated: Option<f64>,
    pub w_x: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub t: u64,
    pub links: Vec<LinkRecord>,
    pub users: Vec<UserRecord>,
    pub loss: Option<MessageClass>,
    pub objective: f64,
}

impl IterationRecord {
    pub fn rates(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.rate).collect()
    }

    pub fn prices(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.price).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub network: Network,
    pub records: Vec<IterationRecord>,
    /// Link prices after the last update.
    pub final_prices: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LinkTracker {
    agg: LsAggregates,
    window: CorrectionWindow,
    rtt: Option<RttRecord>,
    initial_rtt: f64,
}

#[derive(Debug, Clone)]
struct UserTracker {
    agg: LsAggregates,
    window: CorrectionWindow,
    last_reported: f64,
}

/// The feedback loop: price broadcast, user response, measurement or
/// recovery, price update.
#[derive(Debug, Clone)]
pub struct Simulation {
    network: Network,
    config: ScenarioConfig,
    prices: PriceState,
    rates: Vec<f64>,
    links: Vec<LinkTracker>,
    users: Vec<UserTracker>,
    rng: ChaCha8Rng,
    t: u64,
    clock: f64,
    /// Length of the last iteration: the largest interval over all links.
    interval: f64,
    frames: Vec<String>,
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Simulation, SimError> {
        config.validate()?;
        let network = config.source.resolve()?;
        let prices = PriceState::new(network.links().len(), config.lambda_min, config.sigma0)?;
        let rates: Vec<f64> = network
            .users()
            .iter()
            .map(|u| config.initial_rate.min(u.x_max))
            .collect();
        let flows = network.aggregate_flow(&rates)?;
        let rtts = delay::link_rtts(&network, &flows, &rates)?;
        let gamma0 = config.gamma.unwrap_or(1);
        let links: Vec<LinkTracker> = rtts
            .iter()
            .map(|r| {
                let initial_rtt = r.map_or(IDLE_RTT, |(rtt, _)| rtt + config.epsilon_rtt);
                LinkTracker {
                    agg: LsAggregates::new(Quantity::Interval),
                    window: CorrectionWindow::new(1, gamma0, 1, config.eps_rule),
                    rtt: None,
                    initial_rtt,
                }
            })
            .collect();
        let interval = links
            .iter()
            .map(|l| l.initial_rtt)
            .fold(MIN_INTERVAL, f64::max);
        let users = rates
            .iter()
            .map(|&x| UserTracker {
                agg: LsAggregates::new(Quantity::Demand),
                window: CorrectionWindow::new(1, gamma0, 1, config.eps_rule),
                last_reported: x,
            })
            .collect();
        Ok(Simulation {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            network,
            config,
            prices,
            rates,
            links,
            users,
            t: 0,
            clock: 0.0,
            interval,
            frames: Vec::new(),
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices.lambda
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Hex dumps of the frames sent so far, when capture is on.
    pub fn take_frames(&mut self) -> Vec<String> {
        std::mem::take(&mut self.frames)
    }

    /// Last recorded RTT in whole iterations, at least one. An iteration
    /// lasts one update interval, so this is 1 unless a link outgrew it.
    fn rtt_iters(&self, l: usize) -> u64 {
        let rtt = self.links[l]
            .rtt
            .map_or(self.links[l].initial_rtt, |r| r.rtt);
        ((rtt / self.interval).floor() as u64).max(1)
    }

    fn send(&mut self, msg: PriceMessage) -> Result<[u8; wire::FRAME_LEN], SimError> {
        let frame = wire::encode(&msg)?;
        if self.config.capture_frames {
            self.frames.push(wire::to_hex(&frame));
        }
        Ok(frame)
    }

    fn timestamp(&self) -> u32 {
        ((self.clock * 1000.0) as u64 & u64::from(u32::MAX)) as u32
    }

    /// Runs one iteration of the feedback loop.
    pub fn step(&mut self) -> Result<IterationRecord, SimError> {
        self.t += 1;
        let t = self.t;
        let seq = (t & 0xffff) as u16;
        let ts = self.timestamp();
        let net = self.network.clone();
        let n_links = net.links().len();
        let n_users = net.users().len();

        let lost = inject_loss(&self.config.loss, t, &mut self.rng);
        let broadcast = self.prices.lambda.clone();
        let flows_before = net.aggregate_flow(&self.rates)?;

        // Price notifications, one per (link, user on link).
        let mut heard = vec![0.0; n_users];
        for (l, &price) in broadcast.iter().enumerate() {
            for &u in net.users_of(l) {
                let frame = self.send(PriceMessage::notification(l as u16, seq, ts, price))?;
                if lost != Some(MessageClass::Notification) {
                    heard[u] += wire::decode(&frame)?.payload;
                }
            }
        }
        let path_prices: Vec<f64> = (0..n_users)
            .map(|u| net.path_price(&broadcast, u))
            .collect();
        if lost != Some(MessageClass::Notification) {
            for (u, user) in net.users().iter().enumerate() {
                self.rates[u] = num::user_demand(heard[u].max(0.0), user.x_max)?;
            }
        }

        // Responses travel back unless anything was lost this iteration.
        let mut received: Option<Vec<f64>> = None;
        if lost.is_none() {
            let mut reported = vec![0.0; n_users];
            for (u, slot) in reported.iter_mut().enumerate() {
                let frame = self.send(PriceMessage::response(u as u16, seq, ts, self.rates[u]))?;
                *slot = wire::decode(&frame)?.payload;
            }
            received = Some(reported);
        }

        // What the allocation in force really produced.
        let flows = net.aggregate_flow(&self.rates)?;
        let rtts = delay::link_rtts(&net, &flows, &self.rates)?;
        let mut h_actual = vec![0.0; n_links];
        for l in 0..n_links {
            let base = rtts[l].map_or(IDLE_RTT, |(rtt, _)| rtt);
            let noise = if self.config.noise_eps > 0.0 {
                self.rng
                    .gen_range(-self.config.noise_eps..=self.config.noise_eps)
            } else {
                0.0
            };
            h_actual[l] = (base + self.config.epsilon_rtt + noise).max(MIN_INTERVAL);
        }

        // Interval predictions.
        let mut raw_h = vec![None; n_links];
        let mut h_est = vec![None; n_links];
        for l in 0..n_links {
            let tracker = &self.links[l];
            if self.config.recovery {
                if let Ok(raw) = tracker.agg.predict(broadcast[l]) {
                    raw_h[l] = Some(raw);
                    h_est[l] = Some(tracker.window.apply(raw, MIN_INTERVAL));
                }
            }
            if lost.is_some() && h_est[l].is_none() {
                let fallback = tracker.rtt.map_or(tracker.initial_rtt, |r| r.rtt);
                h_est[l] = Some(fallback);
            }
        }

        // Demand predictions, only needed when responses are missing.
        let mut x_est = vec![None; n_users];
        if lost.is_some() {
            for u in 0..n_users {
                let tracker = &self.users[u];
                let recovered = if self.config.recovery {
                    tracker
                        .agg
                        .predict(path_prices[u])
                        .ok()
                        .map(|raw| tracker.window.apply(raw, 0.0))
                } else {
                    None
                };
                let x = recovered
                    .unwrap_or(tracker.last_reported)
                    .min(net.users()[u].x_max);
                x_est[u] = Some(x);
            }
        }

        // Bookkeeping: aggregates, correction windows, RTT records.
        let mut h_sched = vec![0.0; n_links];
        for l in 0..n_links {
            let arrived = received.is_some();
            if arrived {
                let h = h_actual[l];
                self.links[l].agg.observe(h, broadcast[l])?;
                match &mut self.links[l].rtt {
                    Some(rec) => rec.update(h),
                    rec @ None => *rec = Some(RttRecord::new(l, h, self.config.epsilon_rtt)),
                }
                h_sched[l] = h;
            } else {
                let h = h_est[l].expect("prediction or fallback exists on loss");
                if self.config.feed_estimates {
                    self.links[l].agg.observe(h, broadcast[l])?;
                }
                h_sched[l] = h;
            }
            let sample = match (arrived, raw_h[l]) {
                (true, Some(raw)) => Some((h_actual[l], raw)),
                _ => None,
            };
            let rtt_iters = self.rtt_iters(l);
            let gamma = self.config.gamma.unwrap_or(rtt_iters);
            self.links[l]
                .window
                .tick(t, arrived, sample, gamma, rtt_iters);
        }
        let window_rtt = (0..n_links).map(|l| self.rtt_iters(l)).max().unwrap_or(1);
        let window_gamma = self.config.gamma.unwrap_or(window_rtt);
        for u in 0..n_users {
            let price = path_prices[u];
            let raw = if self.config.recovery {
                self.users[u].agg.predict(price).ok()
            } else {
                None
            };
            let tracker = &mut self.users[u];
            match &received {
                Some(reported) => {
                    tracker.agg.observe(reported[u], price)?;
                    tracker.last_reported = reported[u];
                    let sample = raw.map(|r| (reported[u], r));
                    tracker
                        .window
                        .tick(t, true, sample, window_gamma, window_rtt);
                }
                None => {
                    if self.config.feed_estimates {
                        if let Some(x) = x_est[u] {
                            tracker.agg.observe(x, price)?;
                        }
                    }
                    tracker
                        .window
                        .tick(t, false, None, window_gamma, window_rtt);
                }
            }
        }

        // Price update on the flows the network believes are in force.
        let flows_seen = match &received {
            Some(reported) => net.aggregate_flow(reported)?,
            None => {
                let est: Vec<f64> = x_est.iter().map(|x| x.unwrap_or(0.0)).collect();
                net.aggregate_flow(&est)?
            }
        };
        self.prices.update(&net, &flows_seen);
        self.interval = h_sched.iter().cloned().fold(MIN_INTERVAL, f64::max);
        self.clock += self.interval;

        let links = (0..n_links)
            .map(|l| LinkRecord {
                price: broadcast[l],
                flow: flows[l],
                congested: flows_before[l] > net.links()[l].capacity,
                h_actual: h_actual[l],
                h_estimated: h_est[l],
                h_scheduled: h_sched[l],
                w: self.links[l].agg.w,
            })
            .collect();
        let users = (0..n_users)
            .map(|u| UserRecord {
                path_price: path_prices[u],
                rate: self.rates[u],
                rate_estimated: x_est[u],
                w_x: self.users[u].agg.w,
            })
            .collect();
        Ok(IterationRecord {
            t,
            links,
            users,
            loss: lost,
            objective: num::objective(&self.rates)?,
        })
    }
}

/// Runs the configured number of iterations from the initial allocation.
pub fn run_scenario(config: &ScenarioConfig) -> Result<Trace, SimError> {
    let mut sim = Simulation::new(config.clone())?;
    let mut records = Vec::with_capacity(config.iterations as usize);
    for _ in 0..config.iterations {
        records.push(sim.step()?);
    }
    Ok(Trace {
        final_prices: sim.prices().to_vec(),
        network: sim.network,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Link, User};

    fn cfg(name: &str) -> ScenarioConfig {
        ScenarioConfig::builtin(name)
    }

    #[test]
    fn first_iteration_raises_price() {
        let mut sim = Simulation::new(cfg("single-link")).unwrap();
        let rec = sim.step().unwrap();
        assert_eq!(rec.t, 1);
        assert!(rec.links[0].congested);
        assert_eq!(rec.links[0].price, 0.0);
        // users hear price 0 and keep sending at x_max
        assert_eq!(rec.rates(), vec![10.0; 3]);
        assert!(sim.prices()[0] > 0.0);
        assert_eq!(sim.prices()[0], 20.0);
    }

    #[test]
    fn no_loss_never_estimates_for_scheduling() {
        let trace = run_scenario(&cfg("parking-lot")).unwrap();
        for rec in &trace.records {
            assert!(rec.loss.is_none());
            for l in &rec.links {
                assert_eq!(l.h_scheduled, l.h_actual);
            }
            assert!(rec.users.iter().all(|u| u.rate_estimated.is_none()));
        }
    }

    #[test]
    fn periodic_loss_flags() {
        let mut c = cfg("parking-lot");
        c.loss = LossPolicy::periodic(50);
        let trace = run_scenario(&c).unwrap();
        for rec in &trace.records {
            assert_eq!(rec.loss.is_some(), rec.t % 50 == 0, "t = {}", rec.t);
            // loss flag <=> the schedule used an estimate
            let estimated = rec.links.iter().any(|l| l.h_scheduled != l.h_actual)
                || rec.users.iter().any(|u| u.rate_estimated.is_some());
            if rec.loss.is_none() {
                assert!(!estimated);
            }
        }
    }

    #[test]
    fn lost_notification_freezes_rates() {
        let mut c = cfg("single-link");
        c.loss = LossPolicy::periodic(2).with_target(crate::sim::loss::LossTarget::Notification);
        let trace = run_scenario(&c).unwrap();
        for pair in trace.records.windows(2) {
            if pair[1].loss.is_some() {
                assert_eq!(pair[1].rates(), pair[0].rates());
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = cfg("single-link");
        c.iterations = 0;
        assert!(matches!(Simulation::new(c), Err(SimError::Config(_))));
        let mut c = cfg("single-link");
        c.loss = LossPolicy::periodic(0);
        assert!(matches!(Simulation::new(c), Err(SimError::Loss(_))));
        assert!(matches!(
            Simulation::new(cfg("mesh")),
            Err(SimError::Topology(TopologyError::UnknownScenario(_)))
        ));
    }

    #[test]
    fn idle_link_is_tolerated() {
        let net = Network::build(
            vec![
                Link::new("a", 10.0, 1.0, 0.1),
                Link::new("z", 10.0, 1.0, 0.1),
            ],
            vec![User::new("u", ["a"], 10.0, 1.0, 5.0)],
        )
        .unwrap();
        let mut c = ScenarioConfig::new(NetworkSource::Inline(net));
        c.iterations = 50;
        c.loss = LossPolicy::periodic(7);
        let trace = run_scenario(&c).unwrap();
        assert_eq!(trace.records.len(), 50);
        assert!(trace.records.iter().all(|r| r.links[1].h_actual > 0.0));
    }

    #[test]
    fn frames_are_captured() {
        let mut c = cfg("single-link");
        c.capture_frames = true;
        let mut sim = Simulation::new(c).unwrap();
        sim.step().unwrap();
        let frames = sim.take_frames();
        // 3 notifications + 3 responses
        assert_eq!(frames.len(), 6);
        assert!(frames[0].starts_with("0100"));
        assert!(frames[3].starts_with("0101"));
        assert!(frames.iter().all(|f| f.len() == 40));
    }
}
