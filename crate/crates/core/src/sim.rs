//! Discrete-time simulator for the two-platform learning task.
//!
//! Each step, every user receives a recommendation from their platform's
//! policy evaluated at the state the platform held when the step began.
//! Observations are then pooled per repository (one per platform when data
//! is separate, one common state when shared) and background information,
//! if any, is applied last.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bandit::{
    log_likelihood_ratio, sample_reward, shift_log_odds, Arm, RiskySafeConfig, Truth,
};
use crate::error::{Error, Result};
use crate::mc::{replicate, Estimate};
use crate::policy::Policy;
use crate::rng::{KeyedStream, Purpose, StreamKey, NO_USER};

/// Default Monte-Carlo replication count.
pub const DEFAULT_REPLICATIONS: u64 = 100_000;

pub type UtilityEstimate = Estimate;

/// Platform chosen by each user; entries are 1 or 2.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UserProfile(Vec<u8>);

impl UserProfile {
    pub fn new(assignments: Vec<u8>) -> Result<Self> {
        if assignments.is_empty() {
            return Err(Error::RejectedInput("profile has no users".into()));
        }
        if let Some(bad) = assignments.iter().find(|&&a| a != 1 && a != 2) {
            return Err(Error::RejectedInput(format!(
                "platform index {bad} is not 1 or 2"
            )));
        }
        Ok(UserProfile(assignments))
    }

    pub fn all(n: usize, platform: u8) -> Self {
        assert!(platform == 1 || platform == 2);
        UserProfile(vec![platform; n])
    }

    /// Bit `i` set means user `i` is on platform 2.
    pub fn from_bits(n: usize, bits: u64) -> Self {
        UserProfile((0..n).map(|i| 1 + ((bits >> i) & 1) as u8).collect())
    }

    pub fn bits(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &a)| acc | (((a - 1) as u64) << i))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn platform(&self, user: usize) -> u8 {
        self.0[user]
    }

    pub fn assignments(&self) -> &[u8] {
        &self.0
    }

    pub fn count(&self, platform: u8) -> usize {
        self.0.iter().filter(|&&a| a == platform).count()
    }

    pub fn switched(&self, user: usize) -> Self {
        let mut v = self.0.clone();
        v[user] = 3 - v[user];
        UserProfile(v)
    }

    pub fn is_herd(&self) -> bool {
        self.count(1) == 0 || self.count(2) == 0
    }
}

impl fmt::Display for UserProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.0 {
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataMode {
    Separate,
    Shared,
}

/// Where an episode starts: the repositories' common belief and, optionally,
/// a fixed arm type (otherwise drawn from the configured prior).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStart {
    pub belief: f64,
    pub truth: Option<Truth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub truth: Truth,
    /// Discounted sum of the sampled rewards, per user.
    pub realized: Vec<f64>,
    /// Discounted sum of each recommendation's expected reward given the
    /// platform's state at decision time, per user.
    pub expected: Vec<f64>,
    /// Repository states at the start of every step plus the final state;
    /// index 0 is platform 1 (or the shared state), index 1 platform 2.
    pub states: Vec<[f64; 2]>,
}

/// Preprocessed episode simulator for one `(config, policies, profile, mode)`.
#[derive(Debug, Clone)]
pub struct EpisodeRunner<'a> {
    config: &'a RiskySafeConfig,
    policies: [&'a Policy; 2],
    platforms: Vec<usize>,
    mode: DataMode,
    discounts: Vec<f64>,
    seed: u64,
}

/// Reusable per-episode buffers.
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    pub expected: Vec<f64>,
    pub realized: Vec<f64>,
}

impl<'a> EpisodeRunner<'a> {
    pub fn new(
        config: &'a RiskySafeConfig,
        a1: &'a Policy,
        a2: &'a Policy,
        profile: &UserProfile,
        mode: DataMode,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let steps = config.horizon_steps()?;
        a1.validate()?;
        a2.validate()?;
        let discounts = (1..=steps).map(|t| config.beta.powi(t as i32)).collect();
        Ok(EpisodeRunner {
            config,
            policies: [a1, a2],
            platforms: profile.assignments().iter().map(|&a| a as usize - 1).collect(),
            mode,
            discounts,
            seed,
        })
    }

    pub fn users(&self) -> usize {
        self.platforms.len()
    }

    fn slot(&self, platform: usize) -> usize {
        match self.mode {
            DataMode::Separate => platform,
            DataMode::Shared => 0,
        }
    }

    fn draw_truth(&self, replication: u64) -> Truth {
        let mut rng = KeyedStream::new(StreamKey::new(
            self.seed,
            replication,
            NO_USER,
            0,
            Purpose::Truth,
        ));
        if rng.random::<f64>() < self.config.p0 {
            Truth::High
        } else {
            Truth::Low
        }
    }

    fn background(&self, replication: u64, time: u64, truth: Truth, states: &mut [f64; 2]) {
        if !self.config.has_background() {
            return;
        }
        let mut rng = KeyedStream::new(StreamKey::new(
            self.seed,
            replication,
            NO_USER,
            time,
            Purpose::Background,
        ));
        let z: f64 = rng.sample(StandardNormal);
        let x = self.config.mean(truth) + self.config.sigma_b * z;
        let inc = log_likelihood_ratio(x, self.config.h, self.config.l, self.config.sigma_b);
        for p in states.iter_mut() {
            *p = shift_log_odds(*p, inc);
        }
    }

    /// Simulates one replication, filling `scratch` and returning the state path
    /// when `trajectory` is set.
    pub fn run_into(
        &self,
        replication: u64,
        start: Option<EpisodeStart>,
        scratch: &mut Scratch,
        mut trajectory: Option<&mut Vec<[f64; 2]>>,
    ) -> Truth {
        let cfg = self.config;
        let n = self.users();
        scratch.expected.clear();
        scratch.expected.resize(n, 0.0);
        scratch.realized.clear();
        scratch.realized.resize(n, 0.0);

        let belief = start.map_or(cfg.p0, |s| s.belief);
        let truth = start
            .and_then(|s| s.truth)
            .unwrap_or_else(|| self.draw_truth(replication));
        let mut states = [belief, belief];
        if cfg.background_at_t0 {
            self.background(replication, 0, truth, &mut states);
        }

        for (step, &disc) in self.discounts.iter().enumerate() {
            let t = step as u64 + 1;
            if let Some(path) = trajectory.as_deref_mut() {
                path.push(states);
            }
            let mut increments = [0.0f64; 2];
            for (user, &platform) in self.platforms.iter().enumerate() {
                let slot = self.slot(platform);
                let p = states[slot];
                let f = self.policies[platform].prob(p);
                scratch.expected[user] += disc * (cfg.s + f * (cfg.risky_mean(p) - cfg.s));
                let mut rng = KeyedStream::new(StreamKey::new(
                    self.seed,
                    replication,
                    user as u64,
                    t,
                    Purpose::Arm,
                ));
                let arm = if rng.random::<f64>() < f {
                    Arm::Risky
                } else {
                    Arm::Safe
                };
                let reward = sample_reward(arm, truth, cfg, &mut rng);
                scratch.realized[user] += disc * reward;
                if arm == Arm::Risky {
                    increments[slot] += log_likelihood_ratio(reward, cfg.h, cfg.l, cfg.sigma);
                }
            }
            for (p, inc) in states.iter_mut().zip(increments) {
                if inc != 0.0 {
                    *p = shift_log_odds(*p, inc);
                }
            }
            self.background(replication, t, truth, &mut states);
            if self.mode == DataMode::Shared {
                states[1] = states[0];
            }
        }
        if let Some(path) = trajectory {
            path.push(states);
        }
        truth
    }
}

/// Simulates one episode; `seed` selects the stream family and
/// `replication` the member.
pub fn run_episode(
    config: &RiskySafeConfig,
    a1: &Policy,
    a2: &Policy,
    profile: &UserProfile,
    mode: DataMode,
    seed: u64,
    replication: u64,
) -> Result<Episode> {
    let runner = EpisodeRunner::new(config, a1, a2, profile, mode, seed)?;
    let mut scratch = Scratch::default();
    let mut states = Vec::new();
    let truth = runner.run_into(replication, None, &mut scratch, Some(&mut states));
    Ok(Episode {
        truth,
        realized: scratch.realized,
        expected: scratch.expected,
        states,
    })
}

fn check_replications(replications: u64) -> Result<()> {
    if replications < 2 {
        return Err(Error::RejectedInput(
            "at least two replications are required".into(),
        ));
    }
    Ok(())
}

/// Utility estimates for every user of `profile`.
pub fn estimate_profile_utilities(
    config: &RiskySafeConfig,
    a1: &Policy,
    a2: &Policy,
    profile: &UserProfile,
    mode: DataMode,
    replications: u64,
    seed: u64,
) -> Result<Vec<UtilityEstimate>> {
    check_replications(replications)?;
    let runner = EpisodeRunner::new(config, a1, a2, profile, mode, seed)?;
    let moments = replicate(replications, runner.users(), |rep, row| {
        let mut scratch = Scratch::default();
        runner.run_into(rep, None, &mut scratch, None);
        row.copy_from_slice(&scratch.expected);
    });
    Ok(moments.iter().map(|m| m.estimate()).collect())
}

pub fn estimate_utility(
    config: &RiskySafeConfig,
    a1: &Policy,
    a2: &Policy,
    profile: &UserProfile,
    mode: DataMode,
    user_index: usize,
    replications: u64,
    seed: u64,
) -> Result<UtilityEstimate> {
    if user_index >= profile.len() {
        return Err(Error::RejectedInput(format!(
            "user index {user_index} out of range for {} users",
            profile.len()
        )));
    }
    let all = estimate_profile_utilities(config, a1, a2, profile, mode, replications, seed)?;
    Ok(all[user_index])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveShape {
    StrictlyIncreasing,
    Constant,
}

/// `R_A(n)` for `n = 1..N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardCurve {
    pub policy: String,
    pub values: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub exact: bool,
    pub shape: Option<CurveShape>,
}

impl RewardCurve {
    pub fn from_values(policy: impl Into<String>, values: Vec<f64>) -> Self {
        let half_widths = vec![0.0; values.len()];
        let mut curve = RewardCurve {
            policy: policy.into(),
            values,
            half_widths,
            exact: true,
            shape: None,
        };
        curve.tag_shape();
        curve
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `R(n)`, one-based.
    pub fn at(&self, n: usize) -> f64 {
        self.values[n - 1]
    }

    pub fn estimate(&self, n: usize) -> Estimate {
        Estimate {
            mean: self.values[n - 1],
            half_width: self.half_widths[n - 1],
            replications: if self.exact { 1 } else { 0 },
        }
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("empty reward curve")
    }

    /// Tags the curve strictly increasing or constant when every adjacent
    /// comparison is decided by the stored radii; otherwise leaves it untagged.
    pub fn tag_shape(&mut self) -> Option<CurveShape> {
        let diffs: Vec<(f64, f64)> = self
            .values
            .windows(2)
            .zip(self.half_widths.windows(2))
            .map(|(v, w)| (v[1] - v[0], w[0] + w[1]))
            .collect();
        self.shape = if diffs.iter().all(|&(d, w)| d == 0.0 && w == 0.0) {
            Some(CurveShape::Constant)
        } else if diffs.iter().all(|&(d, w)| d - w > 0.0) {
            Some(CurveShape::StrictlyIncreasing)
        } else {
            None
        };
        self.shape
    }
}

/// Monte-Carlo reward curve. Replication `r` of every `n` uses the same
/// streams for users `0..n`, so the values are positively coupled across `n`.
/// Each `R(n)` averages the utilities of the `n` co-located users.
pub fn estimate_reward_curve(
    config: &RiskySafeConfig,
    policy: &Policy,
    replications: u64,
    seed: u64,
) -> Result<RewardCurve> {
    Ok(estimate_reward_curve_paired(config, policy, replications, seed)?.0)
}

/// As [`estimate_reward_curve`], also returning the paired increments
/// `R(n+1) - R(n)` for `n = 1..N-1`, estimated from per-replication
/// differences.
pub fn estimate_reward_curve_paired(
    config: &RiskySafeConfig,
    policy: &Policy,
    replications: u64,
    seed: u64,
) -> Result<(RewardCurve, Vec<Estimate>)> {
    check_replications(replications)?;
    let n_max = config.n_users;
    let runners = (1..=n_max)
        .map(|n| colocated_runner(config, policy, n, seed))
        .collect::<Result<Vec<_>>>()?;
    let width = 2 * n_max - 1;
    let moments = replicate(replications, width, |rep, row| {
        let mut scratch = Scratch::default();
        for (k, runner) in runners.iter().enumerate() {
            runner.run_into(rep, None, &mut scratch, None);
            row[k] = user_mean(&scratch.expected);
        }
        for k in 1..n_max {
            row[n_max + k - 1] = row[k] - row[k - 1];
        }
    });
    let estimates: Vec<Estimate> = moments.iter().map(|m| m.estimate()).collect();
    let (levels, diffs) = estimates.split_at(n_max);
    let mut curve = RewardCurve {
        policy: policy.label(),
        values: levels.iter().map(|e| e.mean).collect(),
        half_widths: levels.iter().map(|e| e.half_width).collect(),
        exact: levels.iter().all(|e| e.is_exact()),
        shape: None,
    };
    curve.tag_shape();
    Ok((curve, diffs.to_vec()))
}

/// `R_A(n)` alone, on the same streams as [`estimate_reward_curve`].
pub fn estimate_reward_at(
    config: &RiskySafeConfig,
    policy: &Policy,
    n: usize,
    replications: u64,
    seed: u64,
) -> Result<Estimate> {
    check_replications(replications)?;
    if n == 0 || n > config.n_users {
        return Err(Error::RejectedInput(format!(
            "user count {n} outside 1..={}",
            config.n_users
        )));
    }
    let runner = colocated_runner(config, policy, n, seed)?;
    let moments = replicate(replications, 1, |rep, row| {
        let mut scratch = Scratch::default();
        runner.run_into(rep, None, &mut scratch, None);
        row[0] = user_mean(&scratch.expected);
    });
    Ok(moments[0].estimate())
}

/// Mean written so that equal utilities average to themselves exactly.
fn user_mean(values: &[f64]) -> f64 {
    let first = values[0];
    first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64
}

fn colocated_runner<'a>(
    config: &'a RiskySafeConfig,
    policy: &'a Policy,
    n: usize,
    seed: u64,
) -> Result<EpisodeRunner<'a>> {
    EpisodeRunner::new(
        config,
        policy,
        policy,
        &UserProfile::all(n, 1),
        DataMode::Separate,
        seed,
    )
}
