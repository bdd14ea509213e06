use std::fmt;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum LossError {
    #[error("loss period must be >= 1")]
    ZeroPeriod,
    #[error("loss range {0}:{1} is inverted")]
    InvertedRange(u64, u64),
    #[error("loss probability must lie in [0, 1], got {0}")]
    BadProbability(f64),
}

/// Which message class an iteration loses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageClass {
    Notification,
    Response,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    None,
    /// Every iteration `t` with `t % k == 0`.
    Periodic(u64),
    /// Every iteration in `a..=b`.
    Range(u64, u64),
    Bernoulli(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossTarget {
    Notification,
    Response,
    /// A fair coin picks the class each time a drop happens.
    #[default]
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPolicy {
    pub kind: LossKind,
    pub target: LossTarget,
}

impl Default for LossPolicy {
    fn default() -> Self {
        LossPolicy::none()
    }
}

impl LossPolicy {
    pub fn none() -> Self {
        LossPolicy {
            kind: LossKind::None,
            target: LossTarget::Random,
        }
    }

    pub fn periodic(k: u64) -> Self {
        LossPolicy {
            kind: LossKind::Periodic(k),
            target: LossTarget::Random,
        }
    }

    pub fn range(a: u64, b: u64) -> Self {
        LossPolicy {
            kind: LossKind::Range(a, b),
            target: LossTarget::Random,
        }
    }

    pub fn bernoulli(p: f64) -> Self {
        LossPolicy {
            kind: LossKind::Bernoulli(p),
            target: LossTarget::Random,
        }
    }

    pub fn with_target(mut self, target: LossTarget) -> Self {
        self.target = target;
        self
    }

    pub fn validate(&self) -> Result<(), LossError> {
        match self.kind {
            LossKind::Periodic(0) => Err(LossError::ZeroPeriod),
            LossKind::Range(a, b) if a > b => Err(LossError::InvertedRange(a, b)),
            LossKind::Bernoulli(p) if !(0.0..=1.0).contains(&p) => {
                Err(LossError::BadProbability(p))
            }
            _ => Ok(()),
        }
    }

    /// Whether the schedule (ignoring randomness) selects iteration `t`.
    /// Bernoulli policies always return false here.
    pub fn is_scheduled(&self, t: u64) -> bool {
        match self.kind {
            LossKind::None | LossKind::Bernoulli(_) => false,
            LossKind::Periodic(k) => k > 0 && t.is_multiple_of(k),
            LossKind::Range(a, b) => (a..=b).contains(&t),
        }
    }
}

/// Decides what, if anything, is dropped at iteration `t`. All packets of the
/// chosen class are lost for that iteration.
pub fn inject_loss<R: Rng + ?Sized>(
    policy: &LossPolicy,
    t: u64,
    rng: &mut R,
) -> Option<MessageClass> {
    let drop = match policy.kind {
        LossKind::Bernoulli(p) => p > 0.0 && rng.gen_bool(p.min(1.0)),
        _ => policy.is_scheduled(t),
    };
    if !drop {
        return None;
    }
    Some(match policy.target {
        LossTarget::Notification => MessageClass::Notification,
        LossTarget::Response => MessageClass::Response,
        LossTarget::Random => {
            if rng.gen_bool(0.5) {
                MessageClass::Notification
            } else {
                MessageClass::Response
            }
        }
    })
}

impl fmt::Display for LossPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let target = match self.target {
            LossTarget::Notification => "notify",
            LossTarget::Response => "response",
            LossTarget::Random => "random",
        };
        match self.kind {
            LossKind::None => write!(f, "none"),
            LossKind::Periodic(k) => write!(f, "periodic({k}) target={target}"),
            LossKind::Range(a, b) => write!(f, "range({a}:{b}) target={target}"),
            LossKind::Bernoulli(p) => write!(f, "bernoulli({p}) target={target}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn periodic_and_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p5 = LossPolicy::periodic(5);
        assert!(inject_loss(&p5, 10, &mut rng).is_some());
        assert!(inject_loss(&p5, 11, &mut rng).is_none());
        let r = LossPolicy::range(230, 240);
        assert!(inject_loss(&r, 235, &mut rng).is_some());
        assert!(inject_loss(&r, 230, &mut rng).is_some());
        assert!(inject_loss(&r, 240, &mut rng).is_some());
        assert!(inject_loss(&r, 229, &mut rng).is_none());
        assert!(inject_loss(&r, 241, &mut rng).is_none());
    }

    #[test]
    fn bernoulli_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let never = LossPolicy::bernoulli(0.0);
        let always = LossPolicy::bernoulli(1.0).with_target(LossTarget::Response);
        for t in 0..1000 {
            assert_eq!(inject_loss(&never, t, &mut rng), None);
            assert_eq!(
                inject_loss(&always, t, &mut rng),
                Some(MessageClass::Response)
            );
        }
    }

    #[test]
    fn bernoulli_rate_and_coin() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = LossPolicy::bernoulli(0.3);
        let drops: Vec<_> = (0..20_000)
            .filter_map(|t| inject_loss(&p, t, &mut rng))
            .collect();
        let rate = drops.len() as f64 / 20_000.0;
        assert!((rate - 0.3).abs() < 0.02, "rate {rate}");
        let notes = drops
            .iter()
            .filter(|c| **c == MessageClass::Notification)
            .count() as f64;
        assert!((notes / drops.len() as f64 - 0.5).abs() < 0.03);
    }

    #[test]
    fn fixed_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = LossPolicy::periodic(1).with_target(LossTarget::Notification);
        assert_eq!(
            inject_loss(&n, 3, &mut rng),
            Some(MessageClass::Notification)
        );
    }

    #[test]
    fn validation() {
        assert_eq!(
            LossPolicy::periodic(0).validate(),
            Err(LossError::ZeroPeriod)
        );
        assert_eq!(
            LossPolicy::range(5, 4).validate(),
            Err(LossError::InvertedRange(5, 4))
        );
        assert!(LossPolicy::bernoulli(1.5).validate().is_err());
        assert!(LossPolicy::bernoulli(-0.1).validate().is_err());
        assert!(LossPolicy::range(4, 4).validate().is_ok());
    }
}
