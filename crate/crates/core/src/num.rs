//! Utility, demand response and the projected subgradient price update.

use thiserror::Error;

use crate::topology::Network;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum NumError {
    #[error("bandwidth must be a finite value >= 0, got {0}")]
    NegativeBandwidth(f64),
    #[error("price must be a finite value >= 0, got {0}")]
    NegativePrice(f64),
    #[error("x_max must be > 0, got {0}")]
    InvalidBound(f64),
    #[error("step size must be > 0, got {0}")]
    InvalidStep(f64),
}

/// Logistic utility `1 / (1 + e^-x)`.
pub fn utility(x: f64) -> Result<f64, NumError> {
    if !(x >= 0.0) {
        return Err(NumError::NegativeBandwidth(x));
    }
    Ok(logistic(x))
}

/// Marginal utility `U'(x) = U(x) (1 - U(x))`.
pub fn marginal_utility(x: f64) -> f64 {
    let u = logistic(x);
    u * (1.0 - u)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Rate maximizing `U(x) - price * x` over `[0, x_max]`.
///
/// For `0 < price < 1/4` the stationary point solves `price (1 + u)^2 = u`
/// with `u = e^-x`; the root with `u <= 1` is taken and clamped to the box.
/// At `price >= 1/4` the slope of the utility never exceeds the price, so the
/// maximizer is zero.
pub fn user_demand(price: f64, x_max: f64) -> Result<f64, NumError> {
    if !(price >= 0.0) || !price.is_finite() {
        return Err(NumError::NegativePrice(price));
    }
    if !(x_max > 0.0) {
        return Err(NumError::InvalidBound(x_max));
    }
    if price == 0.0 {
        return Ok(x_max);
    }
    if price >= 0.25 {
        return Ok(0.0);
    }
    let disc = (1.0 - 4.0 * price).sqrt();
    // (1 - 2p - sqrt(1 - 4p)) / 2p, rewritten to avoid cancellation for small p
    let u = 2.0 * price / ((1.0 - 2.0 * price) + disc);
    let x = -u.ln();
    Ok(x.clamp(0.0, x_max))
}

/// Diminishing step `sigma0 / (t + 1)`.
pub fn step_size(t: u64, sigma0: f64) -> f64 {
    sigma0 / (t as f64 + 1.0)
}

/// Projected subgradient step `max(lambda_min, price - step (capacity - flow))`.
pub fn price_update(price: f64, step: f64, capacity: f64, flow: f64, lambda_min: f64) -> f64 {
    (price - step * (capacity - flow)).max(lambda_min)
}

/// Primal objective: sum of user utilities.
pub fn objective(rates: &[f64]) -> Result<f64, NumError> {
    rates.iter().map(|&x| utility(x)).sum()
}

/// Dual function `D(lambda) = max_x L(x, lambda)` for the given link prices.
pub fn dual_objective(network: &Network, link_prices: &[f64]) -> Result<f64, NumError> {
    let mut total: f64 = network
        .links()
        .iter()
        .zip(link_prices)
        .map(|(l, &p)| p * l.capacity)
        .sum();
    for (u, user) in network.users().iter().enumerate() {
        let price = network.path_price(link_prices, u);
        let x = user_demand(price, user.x_max)?;
        total += utility(x)? - price * x;
    }
    Ok(total)
}

/// Per-link prices with the step schedule they are updated on.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceState {
    pub lambda: Vec<f64>,
    pub lambda_min: f64,
    pub iteration: u64,
    pub sigma0: f64,
}

impl PriceState {
    /// All prices start at the floor.
    pub fn new(links: usize, lambda_min: f64, sigma0: f64) -> Result<Self, NumError> {
        if !(lambda_min >= 0.0) || !lambda_min.is_finite() {
            return Err(NumError::NegativePrice(lambda_min));
        }
        if !(sigma0 > 0.0) || !sigma0.is_finite() {
            return Err(NumError::InvalidStep(sigma0));
        }
        Ok(PriceState {
            lambda: vec![lambda_min; links],
            lambda_min,
            iteration: 0,
            sigma0,
        })
    }

    pub fn step(&self) -> f64 {
        step_size(self.iteration, self.sigma0)
    }

    /// Applies one subgradient step on every link using the given flows.
    pub fn update(&mut self, network: &Network, flows: &[f64]) {
        let sigma = self.step();
        for ((price, link), &flow) in self.lambda.iter_mut().zip(network.links()).zip(flows) {
            *price = price_update(*price, sigma, link.capacity, flow, self.lambda_min);
        }
        self.iteration += 1;
    }
}
