//! Checks of information monotonicity, side-information monotonicity,
//! increased informativeness and utility richness.
//!
//! Monte-Carlo comparisons are paired: both sides of a difference replay the
//! same keyed random streams, and the difference is estimated from
//! per-replication differences. Confidence radii use one-sided normal
//! quantiles at level `alpha`, Bonferroni-corrected over the comparisons of
//! one verdict.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bandit::{posterior_update, InformationState, RiskySafeConfig, TimeMode, Truth};
use crate::closed_form::{payoff_with_multiplicity, reward_curve_closed_form, QuadratureSpec};
use crate::equilibrium::tv_envelope;
use crate::error::{Error, Result};
use crate::mc::{replicate, Estimate};
use crate::policy::{Policy, PolicyFamily};
use crate::rng::{KeyedStream, Purpose, StreamKey, NO_USER};
use crate::sim::{
    estimate_reward_curve_paired, DataMode, EpisodeRunner, EpisodeStart, RewardCurve, Scratch,
    UserProfile,
};
use rand::Rng;
use rand_distr::StandardNormal;

/// Default significance level.
pub const DEFAULT_LEVEL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonotonicityKind {
    StrictIm,
    InfoConstant,
    SideIm,
    IncreasedInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

/// One tested difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label: String,
    pub n: usize,
    pub difference: f64,
    /// One-sided confidence radius at the corrected level, or the
    /// quadrature error for exact comparisons.
    pub radius: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityVerdict {
    pub kind: MonotonicityKind,
    pub verdict: Verdict,
    pub evidence: Vec<Comparison>,
    pub level: f64,
    /// Policies the side-information check was run against.
    pub adversaries: Vec<String>,
    /// The prior is certain, so both sides coincide.
    pub degenerate: bool,
}

/// How reward differences are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluator {
    MonteCarlo { replications: u64, seed: u64 },
    ClosedForm(QuadratureSpec),
}

/// One-sided normal quantile at level `alpha / comparisons`.
pub fn bonferroni_z(alpha: f64, comparisons: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::RejectedInput(format!("significance level {alpha} outside (0, 1)")));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(1.0 - alpha / comparisons.max(1) as f64))
}

fn radius(e: &Estimate, z: f64) -> f64 {
    if e.replications <= 1 {
        e.half_width
    } else {
        z * e.std_error()
    }
}

fn require_mode(config: &RiskySafeConfig, evaluator: &Evaluator) -> Result<()> {
    config.validate()?;
    let ok = match evaluator {
        Evaluator::MonteCarlo { .. } => config.time_mode == TimeMode::Discrete,
        Evaluator::ClosedForm(_) => config.time_mode == TimeMode::ContinuousUndiscounted,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::UnsupportedMode(
            "Monte-Carlo checks need discrete time, closed-form checks continuous time".into(),
        ))
    }
}

/// Reward curve with paired increments `R(n+1) - R(n)`.
pub fn curve_with_increments(
    policy: &Policy,
    config: &RiskySafeConfig,
    evaluator: &Evaluator,
) -> Result<(RewardCurve, Vec<Estimate>)> {
    require_mode(config, evaluator)?;
    match evaluator {
        Evaluator::MonteCarlo { replications, seed } => {
            estimate_reward_curve_paired(config, policy, *replications, *seed)
        }
        Evaluator::ClosedForm(quad) => {
            let curve = reward_curve_closed_form(policy, config, quad)?;
            let diffs = (1..curve.len())
                .map(|k| Estimate {
                    mean: curve.values[k] - curve.values[k - 1],
                    half_width: curve.half_widths[k] + curve.half_widths[k - 1],
                    replications: 1,
                })
                .collect();
            Ok((curve, diffs))
        }
    }
}

/// Whether `R_A(n)` is strictly increasing in `n`. A curve whose
/// increments are all exactly zero is reported as information constant.
pub fn check_strict_im(
    policy: &Policy,
    config: &RiskySafeConfig,
    evaluator: &Evaluator,
    level: f64,
) -> Result<MonotonicityVerdict> {
    if config.n_users < 2 {
        return Err(Error::Precondition("monotonicity needs N >= 2".into()));
    }
    let (_, diffs) = curve_with_increments(policy, config, evaluator)?;
    let z = bonferroni_z(level, diffs.len())?;
    let evidence: Vec<Comparison> = diffs
        .iter()
        .enumerate()
        .map(|(k, d)| Comparison {
            label: format!("R({}) - R({})", k + 2, k + 1),
            n: k + 1,
            difference: d.mean,
            radius: radius(d, z),
            exact: d.replications <= 1,
        })
        .collect();
    let (kind, verdict) = if evidence.iter().all(|c| c.difference == 0.0) {
        (MonotonicityKind::InfoConstant, Verdict::Holds)
    } else if evidence.iter().all(|c| c.difference - c.radius > 0.0) {
        (MonotonicityKind::StrictIm, Verdict::Holds)
    } else if evidence.iter().any(|c| c.difference + c.radius < 0.0) {
        (MonotonicityKind::StrictIm, Verdict::Fails)
    } else {
        (MonotonicityKind::StrictIm, Verdict::Inconclusive)
    };
    Ok(MonotonicityVerdict {
        kind,
        verdict,
        evidence,
        level,
        adversaries: Vec::new(),
        degenerate: false,
    })
}

/// Whether a lone user of `policy` is never worse off when `n` users of an
/// adversary policy feed the same posterior, for every adversary in the
/// family and every `n` in `ns`. The inequality is weak: the verdict fails
/// only on a significant reversal.
pub fn check_side_im(
    policy: &Policy,
    adversaries: &[Policy],
    config: &RiskySafeConfig,
    ns: &[usize],
    evaluator: &Evaluator,
    level: f64,
) -> Result<MonotonicityVerdict> {
    require_mode(config, evaluator)?;
    if adversaries.is_empty() || ns.is_empty() {
        return Err(Error::RejectedInput("need at least one adversary and one n".into()));
    }
    let z = bonferroni_z(level, adversaries.len() * ns.len())?;
    let mut evidence = Vec::new();
    for adversary in adversaries {
        for &n in ns {
            let d = side_information_gain(policy, adversary, n, config, evaluator)?;
            evidence.push(Comparison {
                label: format!("U(1; {} x {}) - R(1)", n, adversary.label()),
                n,
                difference: d.mean,
                radius: radius(&d, z),
                exact: d.replications <= 1,
            });
        }
    }
    let verdict = if evidence.iter().any(|c| c.difference + c.radius < 0.0) {
        Verdict::Fails
    } else {
        Verdict::Holds
    };
    Ok(MonotonicityVerdict {
        kind: MonotonicityKind::SideIm,
        verdict,
        evidence,
        level,
        adversaries: adversaries.iter().map(|a| a.label()).collect(),
        degenerate: false,
    })
}

/// `U_shared(1; n adversaries) - R_A(1)` for the lone user of `policy`.
pub fn side_information_gain(
    policy: &Policy,
    adversary: &Policy,
    n: usize,
    config: &RiskySafeConfig,
    evaluator: &Evaluator,
) -> Result<Estimate> {
    match evaluator {
        Evaluator::ClosedForm(quad) => {
            let with = payoff_with_multiplicity(config.p0, policy, &[(adversary, n)], config, quad)?;
            let alone = payoff_with_multiplicity(config.p0, policy, &[], config, quad)?;
            Ok(Estimate {
                mean: with.value - alone.value,
                half_width: with.error_estimate + alone.error_estimate,
                replications: 1,
            })
        }
        Evaluator::MonteCarlo { replications, seed } => {
            let mut profile = vec![1u8];
            profile.extend(std::iter::repeat_n(2u8, n));
            let profile = UserProfile::new(profile)?;
            let with =
                EpisodeRunner::new(config, policy, adversary, &profile, DataMode::Shared, *seed)?;
            let alone = EpisodeRunner::new(
                config,
                policy,
                policy,
                &UserProfile::all(1, 1),
                DataMode::Shared,
                *seed,
            )?;
            let m = replicate(*replications, 1, |rep, row| {
                let mut scratch = Scratch::default();
                with.run_into(rep, None, &mut scratch, None);
                let u = scratch.expected[0];
                alone.run_into(rep, None, &mut scratch, None);
                row[0] = u - scratch.expected[0];
            });
            Ok(m[0].estimate())
        }
    }
}

/// Whether one extra risky-arm observation before a lone user starts from
/// `belief` strictly raises that user's expected utility.
pub fn check_increased_informativeness(
    config: &RiskySafeConfig,
    policy: &Policy,
    belief: f64,
    replications: u64,
    seed: u64,
    level: f64,
) -> Result<MonotonicityVerdict> {
    config.validate()?;
    config.horizon_steps()?;
    let state = InformationState::new(belief)?;
    let z = bonferroni_z(level, 1)?;
    let verdict = |evidence: Vec<Comparison>, verdict, degenerate| MonotonicityVerdict {
        kind: MonotonicityKind::IncreasedInfo,
        verdict,
        evidence,
        level,
        adversaries: Vec::new(),
        degenerate,
    };
    if state.is_certain() {
        let c = Comparison {
            label: "E[K(p')] - K(p)".into(),
            n: 1,
            difference: 0.0,
            radius: 0.0,
            exact: true,
        };
        return Ok(verdict(vec![c], Verdict::Holds, true));
    }
    let d = informativeness_gain(config, policy, belief, replications, seed)?;
    let c = Comparison {
        label: "E[K(p')] - K(p)".into(),
        n: 1,
        difference: d.mean,
        radius: radius(&d, z),
        exact: d.is_exact(),
    };
    let v = if c.difference - c.radius > 0.0 {
        Verdict::Holds
    } else if c.difference + c.radius < 0.0 {
        Verdict::Fails
    } else {
        Verdict::Inconclusive
    };
    Ok(verdict(vec![c], v, false))
}

/// Paired estimate of `E[K(p')] - K(p)` where `p'` is `belief` updated by
/// one risky-arm observation and `K` is a lone user's utility.
pub fn informativeness_gain(
    config: &RiskySafeConfig,
    policy: &Policy,
    belief: f64,
    replications: u64,
    seed: u64,
) -> Result<Estimate> {
    let runner = EpisodeRunner::new(
        config,
        policy,
        policy,
        &UserProfile::all(1, 1),
        DataMode::Separate,
        seed,
    )?;
    let m = replicate(replications, 1, |rep, row| {
        let mut rng = KeyedStream::new(StreamKey::new(seed, rep, NO_USER, 0, Purpose::Truth));
        let truth = if rng.random::<f64>() < belief {
            Truth::High
        } else {
            Truth::Low
        };
        let mut rng =
            KeyedStream::new(StreamKey::new(seed, rep, NO_USER, 0, Purpose::ExtraObservation));
        let noise: f64 = rng.sample(StandardNormal);
        let x = config.mean(truth) + config.sigma * noise;
        let sharper = posterior_update(
            InformationState { p: belief },
            x,
            (config.h, config.l),
            config.sigma,
        )
        .expect("finite observation")
        .p;
        let mut scratch = Scratch::default();
        let start = |b| {
            Some(EpisodeStart {
                belief: b,
                truth: Some(truth),
            })
        };
        runner.run_into(rep, start(sharper), &mut scratch, None);
        let informed = scratch.expected[0];
        runner.run_into(rep, start(belief), &mut scratch, None);
        row[0] = informed - scratch.expected[0];
    });
    Ok(m[0].estimate())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RichnessVerdict {
    pub family: String,
    pub thetas: Vec<f64>,
    /// `R(N)` along the sweep.
    pub values: Vec<Estimate>,
    /// `R(1)` along the sweep.
    pub singles: Vec<Estimate>,
    /// Smallest and largest `R(N)` observed.
    pub range: (f64, f64),
    /// Whether the total-variation bound applies (mixture family in
    /// discrete time).
    pub envelope_applicable: bool,
    pub continuity_envelope_ok: bool,
    /// Largest `|ΔR(N)| - envelope - radius` over adjacent pairs.
    pub max_envelope_excess: f64,
    /// Some member has `R(N)` at or below the best `R(1)` of the family.
    pub low_anchor_ok: bool,
}

/// Sweeps `family` over `points` equally spaced parameters in `[0, 1]`.
pub fn check_utility_richness(
    family: &PolicyFamily,
    config: &RiskySafeConfig,
    evaluator: &Evaluator,
    points: usize,
    level: f64,
) -> Result<RichnessVerdict> {
    require_mode(config, evaluator)?;
    if points < 2 {
        return Err(Error::RejectedInput("the sweep needs at least two points".into()));
    }
    let n = config.n_users;
    let thetas: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
    let mut values = Vec::with_capacity(points);
    let mut singles = Vec::with_capacity(points);
    for &t in &thetas {
        let (curve, _) = curve_with_increments(&family.at(t), config, evaluator)?;
        values.push(curve.estimate(n));
        singles.push(curve.estimate(1));
    }
    let z = bonferroni_z(level, points - 1)?;
    let envelope_applicable =
        family.is_mixture() && config.time_mode == TimeMode::Discrete;
    let mut max_excess = f64::NEG_INFINITY;
    if envelope_applicable {
        for i in 1..points {
            let (a, b) = (&values[i - 1], &values[i]);
            let bound = tv_envelope(config, thetas[i] - thetas[i - 1]) + radius(a, z) + radius(b, z);
            max_excess = max_excess.max((a.mean - b.mean).abs() - bound);
        }
    }
    let best_single = singles
        .iter()
        .max_by(|a, b| a.mean.total_cmp(&b.mean))
        .expect("non-empty sweep");
    let low_anchor_ok = values
        .iter()
        .any(|v| v.mean - radius(v, z) - radius(best_single, z) <= best_single.mean);
    let lo = values.iter().map(|v| v.mean).fold(f64::INFINITY, f64::min);
    let hi = values.iter().map(|v| v.mean).fold(f64::NEG_INFINITY, f64::max);
    Ok(RichnessVerdict {
        family: family.label(),
        thetas,
        values,
        singles,
        range: (lo, hi),
        envelope_applicable,
        continuity_envelope_ok: !envelope_applicable || max_excess <= 0.0,
        max_envelope_excess: if envelope_applicable { max_excess } else { 0.0 },
        low_anchor_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_config(n: usize) -> RiskySafeConfig {
        RiskySafeConfig::discrete(1.0, 0.0, 0.6, 0.5, 1.0, n, 4, 0.9)
    }

    #[test]
    fn never_explore_is_information_constant() {
        let mc = Evaluator::MonteCarlo {
            replications: 1000,
            seed: 3,
        };
        let v = check_strict_im(&Policy::always_safe(), &reference_config(3), &mc, DEFAULT_LEVEL).unwrap();
        assert_eq!(v.kind, MonotonicityKind::InfoConstant);
        assert_eq!(v.verdict, Verdict::Holds);
    }

    #[test]
    fn idle_adversary_changes_nothing() {
        let mc = Evaluator::MonteCarlo {
            replications: 2000,
            seed: 5,
        };
        let v = check_side_im(
            &Policy::ThompsonSampling,
            &[Policy::always_safe()],
            &reference_config(2),
            &[1, 2],
            &mc,
            DEFAULT_LEVEL,
        )
        .unwrap();
        assert_eq!(v.verdict, Verdict::Holds);
        assert!(v.evidence.iter().all(|c| c.difference == 0.0));
    }

    #[test]
    fn certain_prior_is_degenerate() {
        let v = check_increased_informativeness(&reference_config(1), &Policy::ThompsonSampling, 1.0, 10, 0, 0.01)
            .unwrap();
        assert!(v.degenerate);
        assert_eq!(v.evidence[0].difference, 0.0);
    }

    #[test]
    fn bonferroni_quantile() {
        assert!((bonferroni_z(0.05, 1).unwrap() - 1.644_853_626_951_472_2).abs() < 1e-9);
        assert!(bonferroni_z(0.01, 4).unwrap() > bonferroni_z(0.01, 1).unwrap());
    }

    #[test]
    fn constant_family_has_point_range() {
        let family = PolicyFamily::Constant {
            policy: Box::new(Policy::ThompsonSampling),
        };
        let mc = Evaluator::MonteCarlo {
            replications: 1000,
            seed: 1,
        };
        let r = check_utility_richness(&family, &reference_config(2), &mc, 3, DEFAULT_LEVEL).unwrap();
        assert_eq!(r.range.0, r.range.1);
        assert!(r.continuity_envelope_ok);
    }
}
