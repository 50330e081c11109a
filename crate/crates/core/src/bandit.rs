//! Risky–safe arm problem definition and Bayesian updating.
//!
//! The risky arm has mean `h` or `l` (with `l < s < h`) under a two-point
//! prior; the safe arm pays the known reward `s`. Every information state
//! is summarised by the posterior probability that the risky arm is high.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest log-likelihood-ratio increment applied by a single observation.
pub const LOG_ODDS_CLAMP: f64 = 700.0;

/// Tolerance on the continuous-mode normalization `h p0 + s (1 - p0) = 0`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeMode {
    Discrete,
    ContinuousUndiscounted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Risky,
    Safe,
}

/// Realised type of the risky arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskySafeConfig {
    pub h: f64,
    pub l: f64,
    pub s: f64,
    pub p0: f64,
    pub sigma: f64,
    /// Background-information noise; `f64::INFINITY` means none.
    pub sigma_b: f64,
    pub n_users: usize,
    /// `None` is an infinite horizon.
    pub horizon: Option<u32>,
    pub beta: f64,
    pub time_mode: TimeMode,
    /// Apply one background observation before the first recommendation.
    #[serde(default)]
    pub background_at_t0: bool,
}

impl RiskySafeConfig {
    /// Discrete-time instance without background information.
    #[allow(clippy::too_many_arguments)]
    pub fn discrete(
        h: f64,
        l: f64,
        s: f64,
        p0: f64,
        sigma: f64,
        n_users: usize,
        horizon: u32,
        beta: f64,
    ) -> Self {
        RiskySafeConfig {
            h,
            l,
            s,
            p0,
            sigma,
            sigma_b: f64::INFINITY,
            n_users,
            horizon: Some(horizon),
            beta,
            time_mode: TimeMode::Discrete,
            background_at_t0: false,
        }
    }

    /// Undiscounted continuous-time instance.
    #[allow(clippy::too_many_arguments)]
    pub fn continuous(
        h: f64,
        l: f64,
        s: f64,
        p0: f64,
        sigma: f64,
        sigma_b: f64,
        n_users: usize,
    ) -> Self {
        RiskySafeConfig {
            h,
            l,
            s,
            p0,
            sigma,
            sigma_b,
            n_users,
            horizon: None,
            beta: 0.0,
            time_mode: TimeMode::ContinuousUndiscounted,
            background_at_t0: false,
        }
    }

    pub fn with_users(&self, n_users: usize) -> Self {
        RiskySafeConfig {
            n_users,
            ..self.clone()
        }
    }

    pub fn with_prior(&self, p0: f64) -> Self {
        RiskySafeConfig { p0, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.h, self.l, self.s, self.p0, self.sigma, self.beta];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "h, l, s, p0, sigma and beta must be finite".into(),
            ));
        }
        if !(self.l < self.s && self.s < self.h) {
            return Err(Error::InvalidConfig(format!(
                "rewards must satisfy l < s < h (got l = {}, s = {}, h = {})",
                self.l, self.s, self.h
            )));
        }
        if !(0.0..=1.0).contains(&self.p0) {
            return Err(Error::InvalidConfig(format!(
                "prior p0 = {} outside [0, 1]",
                self.p0
            )));
        }
        if self.sigma <= 0.0 {
            return Err(Error::InvalidConfig("sigma must be positive".into()));
        }
        if self.sigma_b.is_nan() || self.sigma_b <= 0.0 {
            return Err(Error::InvalidConfig(
                "sigma_b must lie in (0, inf]".into(),
            ));
        }
        if self.n_users == 0 {
            return Err(Error::InvalidConfig("at least one user is required".into()));
        }
        match self.time_mode {
            TimeMode::Discrete => {
                match self.horizon {
                    Some(t) if t >= 1 => {}
                    _ => {
                        return Err(Error::InvalidConfig(
                            "discrete mode needs a finite horizon T >= 1".into(),
                        ))
                    }
                }
                if !(self.beta > 0.0 && self.beta <= 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "discrete discount factor beta = {} outside (0, 1]",
                        self.beta
                    )));
                }
            }
            TimeMode::ContinuousUndiscounted => {
                if self.horizon.is_some() {
                    return Err(Error::InvalidConfig(
                        "continuous-undiscounted mode has an infinite horizon".into(),
                    ));
                }
                if self.beta != 0.0 {
                    return Err(Error::InvalidConfig(
                        "continuous-undiscounted mode requires beta = 0".into(),
                    ));
                }
                let full_info = self.h * self.p0 + self.s * (1.0 - self.p0);
                if full_info.abs() > NORMALIZATION_TOL {
                    return Err(Error::InvalidConfig(format!(
                        "normalization h*p0 + s*(1-p0) = 0 violated (value {full_info:e})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn horizon_steps(&self) -> Result<u32> {
        match (self.time_mode, self.horizon) {
            (TimeMode::Discrete, Some(t)) => Ok(t),
            _ => Err(Error::UnsupportedMode(
                "episode simulation needs discrete time with a finite horizon".into(),
            )),
        }
    }

    /// `sigma^2 / sigma_b^2`, zero without background information.
    pub fn background_ratio(&self) -> f64 {
        if self.sigma_b.is_infinite() {
            0.0
        } else {
            (self.sigma / self.sigma_b).powi(2)
        }
    }

    pub fn has_background(&self) -> bool {
        self.sigma_b.is_finite()
    }

    /// Expected risky-arm reward at posterior `p`.
    pub fn risky_mean(&self, p: f64) -> f64 {
        p * self.h + (1.0 - p) * self.l
    }

    /// Expected payoff at posterior `p` if the arm type were revealed.
    pub fn full_information_payoff(&self, p: f64) -> f64 {
        p * self.h + (1.0 - p) * self.s
    }

    pub fn mean(&self, truth: Truth) -> f64 {
        match truth {
            Truth::High => self.h,
            Truth::Low => self.l,
        }
    }

    /// Posterior at which the myopic expected rewards of both arms coincide.
    pub fn myopic_threshold(&self) -> f64 {
        (self.s - self.l) / (self.h - self.l)
    }

    /// `sum_{t=1}^T beta^t`; zero outside discrete mode.
    pub fn discount_mass(&self) -> f64 {
        match self.horizon {
            Some(t) if self.time_mode == TimeMode::Discrete => {
                (1..=t).map(|k| self.beta.powi(k as i32)).sum()
            }
            _ => 0.0,
        }
    }

    /// Range of the discounted cumulative mean reward over an episode.
    pub fn reward_span(&self) -> f64 {
        (self.h - self.l) * self.discount_mass()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformationState {
    pub p: f64,
}

impl InformationState {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::RejectedInput(format!("posterior {p} outside [0, 1]")));
        }
        Ok(InformationState { p })
    }

    pub fn is_certain(&self) -> bool {
        self.p == 0.0 || self.p == 1.0
    }
}

/// Log-likelihood ratio `log[phi((x-h)/sd) / phi((x-l)/sd)]`, clamped.
pub fn log_likelihood_ratio(x: f64, high: f64, low: f64, sigma_eff: f64) -> f64 {
    let inc = ((x - low).powi(2) - (x - high).powi(2)) / (2.0 * sigma_eff * sigma_eff);
    inc.clamp(-LOG_ODDS_CLAMP, LOG_ODDS_CLAMP)
}

/// Applies a log-odds increment to a posterior; 0 and 1 are absorbing.
pub fn shift_log_odds(p: f64, increment: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let log_odds = (p / (1.0 - p)).ln() + increment;
    logistic(log_odds)
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Bayes update of the high-mean posterior after a Gaussian observation.
pub fn posterior_update(
    state: InformationState,
    observation: f64,
    means: (f64, f64),
    sigma_eff: f64,
) -> Result<InformationState> {
    if !observation.is_finite() {
        return Err(Error::RejectedInput(format!(
            "non-finite observation {observation}"
        )));
    }
    if !(0.0..=1.0).contains(&state.p) {
        return Err(Error::RejectedInput(format!(
            "posterior {} outside [0, 1]",
            state.p
        )));
    }
    if !(sigma_eff > 0.0) {
        return Err(Error::RejectedInput(format!(
            "effective noise {sigma_eff} must be positive"
        )));
    }
    let (high, low) = means;
    let inc = log_likelihood_ratio(observation, high, low, sigma_eff);
    Ok(InformationState {
        p: shift_log_odds(state.p, inc),
    })
}

/// Draws a reward. The safe arm pays `s` exactly; the risky arm is Gaussian.
pub fn sample_reward<R: Rng + ?Sized>(
    arm: Arm,
    truth: Truth,
    config: &RiskySafeConfig,
    rng: &mut R,
) -> f64 {
    match arm {
        Arm::Safe => config.s,
        Arm::Risky => {
            let z: f64 = rng.sample(StandardNormal);
            config.mean(truth) + config.sigma * z
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{KeyedStream, Purpose, StreamKey};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn phi(z: f64) -> f64 {
        (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    #[test]
    fn certainty_is_absorbing() {
        let s = InformationState::new(0.0).unwrap();
        let next = posterior_update(s, 123.0, (1.0, 0.0), 0.1).unwrap();
        assert_eq!(next.p, 0.0);
        let s = InformationState::new(1.0).unwrap();
        let next = posterior_update(s, -1e6, (1.0, 0.0), 0.1).unwrap();
        assert_eq!(next.p, 1.0);
    }

    #[test]
    fn equal_means_leave_posterior_unchanged() {
        let s = InformationState::new(0.5).unwrap();
        for x in [-3.0, 0.0, 1.0, 17.5] {
            let next = posterior_update(s, x, (1.0, 1.0), 1.0).unwrap();
            assert_eq!(next.p, 0.5);
        }
    }

    #[test]
    fn single_update_matches_bayes_formula() {
        let s = InformationState::new(0.5).unwrap();
        let next = posterior_update(s, 1.0, (1.0, 0.0), 1.0).unwrap();
        let direct = phi(0.0) / (phi(0.0) + phi(1.0));
        assert_relative_eq!(next.p, direct, max_relative = 1e-14);
        assert_relative_eq!(next.p, 0.622_459_331_2, epsilon = 1e-9);
    }

    /// Histogram filter: the fraction of high-type draws among simulated
    /// observations landing near x = 1 estimates P(high | x = 1).
    #[test]
    fn histogram_filter_agrees_with_update() {
        let mut rng = KeyedStream::new(StreamKey::new(99, 0, 0, 0, Purpose::Truth));
        let (mut hits, mut high_hits) = (0u64, 0u64);
        for _ in 0..1_000_000 {
            let high = rng.random::<f64>() < 0.5;
            let mean = if high { 1.0 } else { 0.0 };
            let x = mean + rng.sample::<f64, _>(StandardNormal);
            if (x - 1.0).abs() < 0.02 {
                hits += 1;
                if high {
                    high_hits += 1;
                }
            }
        }
        let frac = high_hits as f64 / hits as f64;
        let se = (frac * (1.0 - frac) / hits as f64).sqrt();
        let exact = phi(0.0) / (phi(0.0) + phi(1.0));
        assert!((frac - exact).abs() < 4.0 * se, "{frac} vs {exact} (se {se})");
    }

    #[test]
    fn non_finite_observation_is_rejected() {
        let s = InformationState::new(0.5).unwrap();
        assert!(matches!(
            posterior_update(s, f64::NAN, (1.0, 0.0), 1.0),
            Err(Error::RejectedInput(_))
        ));
        assert!(posterior_update(s, f64::INFINITY, (1.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn extreme_observations_do_not_underflow() {
        let s = InformationState::new(0.3).unwrap();
        let up = posterior_update(s, 1e9, (1.0, 0.0), 1.0).unwrap();
        let down = posterior_update(s, -1e9, (1.0, 0.0), 1.0).unwrap();
        assert!(up.p > 0.999_999 && up.p <= 1.0);
        assert!(down.p < 1e-6 && down.p >= 0.0);
    }

    #[test]
    fn safe_reward_is_deterministic() {
        let cfg = RiskySafeConfig::discrete(1.0, 0.0, 0.6, 0.5, 1.0, 1, 4, 1.0);
        let mut rng = KeyedStream::new(StreamKey::new(1, 2, 3, 4, Purpose::Arm));
        for truth in [Truth::High, Truth::Low] {
            assert_eq!(sample_reward(Arm::Safe, truth, &cfg, &mut rng), 0.6);
        }
    }

    #[test]
    fn risky_reward_zero_noise_limit() {
        let cfg = RiskySafeConfig::discrete(1.0, 0.0, 0.6, 0.5, 1e-12, 1, 4, 1.0);
        let mut rng = KeyedStream::new(StreamKey::new(1, 2, 3, 4, Purpose::Arm));
        let x = sample_reward(Arm::Risky, Truth::High, &cfg, &mut rng);
        assert!((x - 1.0).abs() < 1e-10);
    }

    #[test]
    fn risky_reward_reproducible_under_seed() {
        let cfg = RiskySafeConfig::discrete(1.0, 0.0, 0.6, 0.5, 1.0, 1, 4, 1.0);
        let key = StreamKey::new(7, 11, 0, 3, Purpose::Observation);
        let a = sample_reward(Arm::Risky, Truth::Low, &cfg, &mut KeyedStream::new(key));
        let b = sample_reward(Arm::Risky, Truth::Low, &cfg, &mut KeyedStream::new(key));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn validation_rejects_bad_rewards_and_normalization() {
        let bad = RiskySafeConfig::discrete(1.0, 0.7, 0.6, 0.5, 1.0, 1, 4, 1.0);
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(m)) if m.contains("l < s < h")));
        let unnormalized = RiskySafeConfig::continuous(1.0, -2.0, -1.0, 0.4, 1.0, 1.0, 2);
        assert!(
            matches!(unnormalized.validate(), Err(Error::InvalidConfig(m)) if m.contains("normalization"))
        );
        let ok = RiskySafeConfig::continuous(1.0, -2.0, -1.0, 0.5, 1.0, 1.0, 2);
        ok.validate().unwrap();
    }

    #[test]
    fn martingale_one_step() {
        for (i, p) in [0.1, 0.35, 0.5, 0.8].into_iter().enumerate() {
            let mut rng = KeyedStream::new(StreamKey::new(5, i as u64, 0, 0, Purpose::Truth));
            let n = 100_000;
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..n {
                let high = rng.random::<f64>() < p;
                let x = if high { 1.0 } else { 0.0 } + 0.8 * rng.sample::<f64, _>(StandardNormal);
                let next = posterior_update(InformationState { p }, x, (1.0, 0.0), 0.8)
                    .unwrap()
                    .p;
                sum += next;
                sum_sq += next * next;
            }
            let mean = sum / n as f64;
            let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
            assert!((mean - p).abs() < 3.0 * se, "p = {p}: mean {mean} se {se}");
        }
    }

    proptest! {
        #[test]
        fn update_is_monotone_in_observation(
            p in 0.0f64..=1.0,
            x in -20.0f64..20.0,
            dx in 0.0f64..5.0,
            sd in 0.05f64..5.0,
        ) {
            let s = InformationState { p };
            let lo = posterior_update(s, x, (1.0, -0.5), sd).unwrap().p;
            let hi = posterior_update(s, x + dx, (1.0, -0.5), sd).unwrap().p;
            prop_assert!(hi >= lo);
            prop_assert!((0.0..=1.0).contains(&hi));
        }
    }
}
