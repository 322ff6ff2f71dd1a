//! Timing policies: when to run a matching.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;

use crate::domain::Tick;
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::policy::{sample_action, PolicyParams};

/// A policy as named on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicySpec {
    FirstDispatch,
    /// Interval in ticks.
    Fixed(Tick),
    Learned(PathBuf),
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "first-dispatch" {
            return Ok(Self::FirstDispatch);
        }
        if let Some(k) = s.strip_prefix("fixed:") {
            let k: Tick = k
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad interval in policy '{s}'")))?;
            if k < 1 {
                return Err(Error::InvalidArgument("fixed interval must be at least 1".into()));
            }
            return Ok(Self::Fixed(k));
        }
        if let Some(p) = s.strip_prefix("learned:") {
            if p.is_empty() {
                return Err(Error::InvalidArgument("learned policy needs a checkpoint path".into()));
            }
            return Ok(Self::Learned(PathBuf::from(p)));
        }
        Err(Error::InvalidArgument(format!(
            "unknown policy '{s}' (expected first-dispatch, fixed:K or learned:PATH)"
        )))
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::FirstDispatch => write!(f, "first-dispatch"),
            Self::Fixed(k) => write!(f, "fixed:{k}"),
            Self::Learned(p) => write!(f, "learned:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TimingPolicy {
    FirstDispatch,
    FixedInterval(Tick),
    Learned {
        params: PolicyParams,
        /// Sample actions instead of thresholding at 0.5.
        stochastic: bool,
    },
}

impl TimingPolicy {
    pub fn from_spec(spec: &PolicySpec, stochastic: bool) -> Result<Self> {
        Ok(match spec {
            PolicySpec::FirstDispatch => Self::FirstDispatch,
            PolicySpec::Fixed(k) => Self::FixedInterval(*k),
            PolicySpec::Learned(path) => Self::Learned {
                params: PolicyParams::load(path)?,
                stochastic,
            },
        })
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match self {
            Self::FirstDispatch => "first-dispatch".into(),
            Self::FixedInterval(k) => format!("fixed-{k}"),
            Self::Learned { stochastic: false, .. } => "learned".into(),
            Self::Learned { stochastic: true, .. } => "learned-stochastic".into(),
        }
    }

    /// Action at tick `t`. `last_match` is the most recent matching tick,
    /// if any; before the first matching, a fixed interval fires once `k`
    /// ticks have elapsed counting the current one.
    pub fn decide(&self, obs: &Observation, t: Tick, last_match: Option<Tick>, rng: &mut ChaCha8Rng) -> Result<u8> {
        Ok(match self {
            Self::FirstDispatch => 1,
            Self::FixedInterval(k) => {
                let elapsed = match last_match {
                    Some(l) => t - l,
                    None => t + 1,
                };
                u8::from(elapsed >= *k)
            }
            Self::Learned { params, stochastic } => {
                let p = params.forward(&obs.0)?.p;
                if *stochastic {
                    sample_action(p, rng)
                } else {
                    u8::from(p >= 0.5)
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn obs() -> Observation {
        Observation([0.0; 6])
    }

    #[test]
    fn parses_specs() {
        assert_eq!("first-dispatch".parse::<PolicySpec>().unwrap(), PolicySpec::FirstDispatch);
        assert_eq!("fixed:15".parse::<PolicySpec>().unwrap(), PolicySpec::Fixed(15));
        assert_eq!(
            "learned:a/b.ckpt".parse::<PolicySpec>().unwrap(),
            PolicySpec::Learned("a/b.ckpt".into())
        );
        assert!("fixed:0".parse::<PolicySpec>().is_err());
        assert!("fixed:x".parse::<PolicySpec>().is_err());
        assert!("greedy".parse::<PolicySpec>().is_err());
        assert_eq!(PolicySpec::Fixed(5).to_string(), "fixed:5");
    }

    #[test]
    fn first_dispatch_always_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for t in 0..50 {
            assert_eq!(TimingPolicy::FirstDispatch.decide(&obs(), t, None, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn fixed_fires_on_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = TimingPolicy::FixedInterval(15);
        assert_eq!(p.decide(&obs(), 24, Some(10), &mut rng).unwrap(), 0);
        assert_eq!(p.decide(&obs(), 25, Some(10), &mut rng).unwrap(), 1);
    }

    #[test]
    fn fixed_one_is_first_dispatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = TimingPolicy::FixedInterval(1);
        let mut last = None;
        for t in 0..100 {
            let a = p.decide(&obs(), t, last, &mut rng).unwrap();
            assert_eq!(a, 1);
            last = Some(t);
        }
    }

    #[test]
    fn fixed_spacing_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = TimingPolicy::FixedInterval(7);
        let mut last = None;
        let mut fired = Vec::new();
        for t in 0..60 {
            if p.decide(&obs(), t, last, &mut rng).unwrap() == 1 {
                fired.push(t);
                last = Some(t);
            }
        }
        assert_eq!(fired[0], 6);
        assert!(fired.windows(2).all(|w| w[1] - w[0] == 7));
    }

    #[test]
    fn learned_thresholds_at_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = TimingPolicy::Learned {
            params: PolicyParams::init(0),
            stochastic: false,
        };
        // all-zero input gives p = 0.5 exactly
        assert_eq!(p.decide(&obs(), 0, None, &mut rng).unwrap(), 1);
    }
}
