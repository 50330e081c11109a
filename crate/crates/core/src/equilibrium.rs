//! User equilibria, platform utilities and the platform game over finite
//! policy grids.
//!
//! Utilities come from a [`UtilityOracle`]. Every comparison carries the
//! oracle's confidence radii: a user is said to gain from switching only
//! when the gain exceeds the tolerance `tau` by more than the combined
//! radius, and a profile whose status cannot be settled either way is
//! reported as undecided rather than guessed.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::bandit::{RiskySafeConfig, TimeMode};
use crate::closed_form::{payoff_with_multiplicity, QuadratureSpec};
use crate::error::{Error, Result};
use crate::mc::Estimate;
use crate::policy::{Policy, PolicyFamily};
use crate::sim::{estimate_profile_utilities, estimate_reward_curve, DataMode, RewardCurve, UserProfile};

/// Largest user count for exhaustive profile enumeration.
pub const MAX_BRUTE_FORCE_USERS: usize = 12;

/// Source of user utilities.
pub trait UtilityOracle: Sync {
    fn users(&self) -> usize;

    /// `R_A(n)`.
    fn reward(&self, policy: &Policy, n: usize) -> Result<Estimate>;

    /// Utility of every user under `profile`. The default covers separate
    /// data, where a user's utility is `R` of their platform's policy at
    /// that platform's user count.
    fn profile_utilities(
        &self,
        a1: &Policy,
        a2: &Policy,
        profile: &UserProfile,
        mode: DataMode,
    ) -> Result<Vec<Estimate>> {
        if mode == DataMode::Shared {
            return Err(Error::UnsupportedMode(
                "this oracle only knows separate-data utilities".into(),
            ));
        }
        separate_utilities(self, a1, a2, profile)
    }
}

/// Separate-data utilities from `R` at each platform's user count.
pub fn separate_utilities<O: UtilityOracle + ?Sized>(
    oracle: &O,
    a1: &Policy,
    a2: &Policy,
    profile: &UserProfile,
) -> Result<Vec<Estimate>> {
    let counts = [profile.count(1), profile.count(2)];
    let policies = [a1, a2];
    let mut r = [None, None];
    for k in 0..2 {
        if counts[k] > 0 {
            r[k] = Some(oracle.reward(policies[k], counts[k])?);
        }
    }
    Ok(profile
        .assignments()
        .iter()
        .map(|&k| r[k as usize - 1].expect("occupied platform"))
        .collect())
}

/// Monte-Carlo utilities. Reward curves are cached per policy; shared-data
/// profiles are simulated on demand.
#[derive(Debug)]
pub struct MonteCarloOracle {
    config: RiskySafeConfig,
    replications: u64,
    seed: u64,
    curves: Mutex<HashMap<String, RewardCurve>>,
}

impl MonteCarloOracle {
    pub fn new(config: &RiskySafeConfig, replications: u64, seed: u64) -> Result<Self> {
        config.validate()?;
        config.horizon_steps()?;
        Ok(MonteCarloOracle {
            config: config.clone(),
            replications,
            seed,
            curves: Mutex::new(HashMap::new()),
        })
    }

    pub fn curve(&self, policy: &Policy) -> Result<RewardCurve> {
        let key = serde_json::to_string(policy).expect("policies serialize");
        if let Some(c) = self.curves.lock().expect("cache lock").get(&key) {
            return Ok(c.clone());
        }
        let curve = estimate_reward_curve(&self.config, policy, self.replications, self.seed)?;
        self.curves
            .lock()
            .expect("cache lock")
            .insert(key, curve.clone());
        Ok(curve)
    }
}

impl UtilityOracle for MonteCarloOracle {
    fn users(&self) -> usize {
        self.config.n_users
    }

    fn reward(&self, policy: &Policy, n: usize) -> Result<Estimate> {
        check_n(n, self.users())?;
        Ok(self.curve(policy)?.estimate(n))
    }

    fn profile_utilities(
        &self,
        a1: &Policy,
        a2: &Policy,
        profile: &UserProfile,
        mode: DataMode,
    ) -> Result<Vec<Estimate>> {
        match mode {
            DataMode::Separate => separate_utilities(self, a1, a2, profile),
            DataMode::Shared => estimate_profile_utilities(
                &self.config,
                a1,
                a2,
                profile,
                DataMode::Shared,
                self.replications,
                self.seed,
            ),
        }
    }
}

/// Exact utilities in the continuous-undiscounted game.
#[derive(Debug, Clone)]
pub struct ClosedFormOracle {
    config: RiskySafeConfig,
    quad: QuadratureSpec,
}

impl ClosedFormOracle {
    pub fn new(config: &RiskySafeConfig, quad: QuadratureSpec) -> Result<Self> {
        config.validate()?;
        if config.time_mode != TimeMode::ContinuousUndiscounted {
            return Err(Error::UnsupportedMode(
                "closed-form utilities need the continuous-undiscounted mode".into(),
            ));
        }
        Ok(ClosedFormOracle {
            config: config.clone(),
            quad,
        })
    }
}

fn payoff_estimate(
    config: &RiskySafeConfig,
    quad: &QuadratureSpec,
    own: &Policy,
    others: &[(&Policy, usize)],
) -> Result<Estimate> {
    let r = payoff_with_multiplicity(config.p0, own, others, config, quad)?;
    Ok(Estimate {
        mean: r.value,
        half_width: r.error_estimate,
        replications: 1,
    })
}

impl UtilityOracle for ClosedFormOracle {
    fn users(&self) -> usize {
        self.config.n_users
    }

    fn reward(&self, policy: &Policy, n: usize) -> Result<Estimate> {
        check_n(n, self.users())?;
        payoff_estimate(&self.config, &self.quad, policy, &[(policy, n - 1)])
    }

    fn profile_utilities(
        &self,
        a1: &Policy,
        a2: &Policy,
        profile: &UserProfile,
        mode: DataMode,
    ) -> Result<Vec<Estimate>> {
        let counts = [profile.count(1), profile.count(2)];
        let policies = [a1, a2];
        let mut per_platform = [None, None];
        for k in 0..2 {
            if counts[k] == 0 {
                continue;
            }
            per_platform[k] = Some(match mode {
                DataMode::Separate => self.reward(policies[k], counts[k])?,
                DataMode::Shared => payoff_estimate(
                    &self.config,
                    &self.quad,
                    policies[k],
                    &[(policies[k], counts[k] - 1), (policies[1 - k], counts[1 - k])],
                )?,
            });
        }
        Ok(profile
            .assignments()
            .iter()
            .map(|&k| per_platform[k as usize - 1].expect("occupied platform"))
            .collect())
    }
}

/// Table-driven separate-data utilities, keyed by policy label.
#[derive(Debug, Clone, Default)]
pub struct CurveOracle {
    curves: HashMap<String, RewardCurve>,
    users: usize,
}

impl CurveOracle {
    pub fn new(curves: Vec<RewardCurve>) -> Result<Self> {
        let users = curves.first().map_or(0, |c| c.len());
        if curves.iter().any(|c| c.len() != users) {
            return Err(Error::RejectedInput("reward curves differ in length".into()));
        }
        Ok(CurveOracle {
            curves: curves.into_iter().map(|c| (c.policy.clone(), c)).collect(),
            users,
        })
    }
}

impl UtilityOracle for CurveOracle {
    fn users(&self) -> usize {
        self.users
    }

    fn reward(&self, policy: &Policy, n: usize) -> Result<Estimate> {
        check_n(n, self.users)?;
        let label = policy.label();
        self.curves
            .get(&label)
            .map(|c| c.estimate(n))
            .ok_or_else(|| Error::RejectedInput(format!("no reward curve for {label}")))
    }
}

fn check_n(n: usize, users: usize) -> Result<()> {
    if n == 0 || n > users {
        return Err(Error::RejectedInput(format!("user count {n} outside 1..={users}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumMethod {
    BruteForce,
    Characterization,
}

/// Pure user equilibria of one platform pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSet {
    pub profiles: Vec<UserProfile>,
    pub method: EquilibriumMethod,
}

impl EquilibriumSet {
    pub fn contains(&self, profile: &UserProfile) -> bool {
        self.profiles.contains(profile)
    }
}

/// Every profile sorted into equilibria, non-equilibria and undecided.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileClassification {
    pub equilibria: Vec<UserProfile>,
    pub undecided: Vec<UserProfile>,
    /// Utilities of all `2^N` profiles, indexed by [`UserProfile::bits`].
    pub utilities: Vec<Vec<Estimate>>,
}

/// Classifies all `2^N` profiles by the unilateral-deviation test.
pub fn classify_profiles(
    a1: &Policy,
    a2: &Policy,
    mode: DataMode,
    oracle: &dyn UtilityOracle,
    tau: f64,
) -> Result<ProfileClassification> {
    let n = oracle.users();
    if n == 0 || n > MAX_BRUTE_FORCE_USERS {
        return Err(Error::Precondition(format!(
            "brute-force enumeration supports 1..={MAX_BRUTE_FORCE_USERS} users, got {n}"
        )));
    }
    if !(tau >= 0.0) {
        return Err(Error::RejectedInput("tolerance must be nonnegative".into()));
    }
    let count = 1u64 << n;
    let utilities = (0..count)
        .map(|bits| oracle.profile_utilities(a1, a2, &UserProfile::from_bits(n, bits), mode))
        .collect::<Result<Vec<_>>>()?;
    let max_hw = utilities
        .iter()
        .flatten()
        .map(|e| e.half_width)
        .fold(0.0, f64::max);
    if max_hw > 0.0 && tau <= 2.0 * max_hw {
        return Err(Error::StatisticalPower {
            tau,
            half_width: max_hw,
        });
    }
    let mut equilibria = Vec::new();
    let mut undecided = Vec::new();
    for bits in 0..count {
        let mut stable = true;
        let mut unsure = false;
        for user in 0..n {
            let here = utilities[bits as usize][user];
            let there = utilities[(bits ^ (1 << user)) as usize][user];
            let gain = there.mean - here.mean;
            let radius = here.half_width + there.half_width;
            if gain - radius > tau {
                stable = false;
                break;
            }
            if gain + radius > tau {
                unsure = true;
            }
        }
        let profile = UserProfile::from_bits(n, bits);
        if stable && unsure {
            undecided.push(profile);
        } else if stable {
            equilibria.push(profile);
        }
    }
    Ok(ProfileClassification {
        equilibria,
        undecided,
        utilities,
    })
}

/// Pure user equilibria by exhaustive enumeration of the `2^N` profiles.
pub fn user_equilibria_brute(
    a1: &Policy,
    a2: &Policy,
    mode: DataMode,
    oracle: &dyn UtilityOracle,
    tau: f64,
) -> Result<EquilibriumSet> {
    let class = classify_profiles(a1, a2, mode, oracle, tau)?;
    if !class.undecided.is_empty() {
        return Err(Error::Inconclusive {
            reason: "confidence radii too wide to classify some profiles".into(),
            profiles: class.undecided,
        });
    }
    Ok(EquilibriumSet {
        profiles: class.equilibria,
        method: EquilibriumMethod::BruteForce,
    })
}

/// Herd equilibria read off two tagged reward curves: everyone on platform
/// 1 is stable iff `R_1(N) >= R_2(1)`, and symmetrically.
pub fn user_equilibria_characterized(
    curve1: &RewardCurve,
    curve2: &RewardCurve,
) -> Result<EquilibriumSet> {
    use crate::sim::CurveShape::StrictlyIncreasing;
    let (Some(s1), Some(s2)) = (curve1.shape, curve2.shape) else {
        return Err(Error::Precondition(
            "both curves must be tagged strictly increasing or constant".into(),
        ));
    };
    if s1 != StrictlyIncreasing && s2 != StrictlyIncreasing {
        return Err(Error::Precondition(
            "at least one curve must be strictly increasing".into(),
        ));
    }
    if curve1.len() != curve2.len() || curve1.is_empty() {
        return Err(Error::RejectedInput("curves must share a positive length".into()));
    }
    let n = curve1.len();
    let mut profiles = Vec::new();
    if curve1.at(n) >= curve2.at(1) {
        profiles.push(UserProfile::all(n, 1));
    }
    if curve2.at(n) >= curve1.at(1) {
        profiles.push(UserProfile::all(n, 2));
    }
    Ok(EquilibriumSet {
        profiles,
        method: EquilibriumMethod::Characterization,
    })
}

/// A profitable unilateral policy change of one platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub platform: u8,
    pub policy_index: usize,
    pub policy: String,
    /// Guaranteed increase in the platform's user count.
    pub gain: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformOutcome {
    pub v1: usize,
    pub v2: usize,
    pub is_equilibrium: bool,
    pub best_deviation: Option<Deviation>,
}

/// Minimum user count of each platform over the equilibrium set.
pub fn platform_utilities(eq_set: &EquilibriumSet) -> Result<PlatformOutcome> {
    if eq_set.profiles.is_empty() {
        return Err(Error::ModelViolation("the user game has no pure equilibrium".into()));
    }
    let min_count = |k: u8| eq_set.profiles.iter().map(|p| p.count(k)).min().unwrap_or(0);
    Ok(PlatformOutcome {
        v1: min_count(1),
        v2: min_count(2),
        is_equilibrium: false,
        best_deviation: None,
    })
}

/// Range of a platform's utility when undecided profiles may or may not be
/// equilibria.
fn utility_bounds(class: &ProfileClassification, platform: u8) -> Result<(usize, usize)> {
    let eq = class.equilibria.iter().map(|p| p.count(platform)).min();
    let und = class.undecided.iter().map(|p| p.count(platform)).min();
    match (eq, und) {
        (None, None) => Err(Error::ModelViolation("the user game has no pure equilibrium".into())),
        (Some(e), None) => Ok((e, e)),
        (Some(e), Some(u)) => Ok((e.min(u), e)),
        (None, Some(u)) => {
            let hi = class.undecided.iter().map(|p| p.count(platform)).max().unwrap_or(u);
            Ok((u, hi))
        }
    }
}

/// Checks whether `(grid[i1], grid[i2])` is a platform equilibrium relative
/// to the grid: no platform can switch to another grid policy and be sure to
/// keep more users.
pub fn platform_equilibrium_check(
    grid: &[Policy],
    i1: usize,
    i2: usize,
    mode: DataMode,
    oracle: &dyn UtilityOracle,
    tau: f64,
) -> Result<PlatformOutcome> {
    if i1 >= grid.len() || i2 >= grid.len() {
        return Err(Error::Precondition("platform policies must belong to the grid".into()));
    }
    let base = classify_profiles(&grid[i1], &grid[i2], mode, oracle, tau)?;
    let v1 = utility_bounds(&base, 1)?;
    let v2 = utility_bounds(&base, 2)?;
    let mut best: Option<Deviation> = None;
    let mut undecided = Vec::new();
    let mut open = false;
    for platform in [1u8, 2] {
        let (current, own) = if platform == 1 { (v1, i1) } else { (v2, i2) };
        for (j, alt) in grid.iter().enumerate() {
            if j == own {
                continue;
            }
            let class = if platform == 1 {
                classify_profiles(alt, &grid[i2], mode, oracle, tau)?
            } else {
                classify_profiles(&grid[i1], alt, mode, oracle, tau)?
            };
            let (lo, hi) = utility_bounds(&class, platform)?;
            if lo > current.1 {
                let gain = lo - current.1;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Deviation {
                        platform,
                        policy_index: j,
                        policy: alt.label(),
                        gain,
                    });
                }
            } else if hi > current.0 {
                open = true;
                undecided.extend(class.undecided);
            }
        }
    }
    if best.is_none() && open {
        undecided.extend(base.undecided);
        return Err(Error::Inconclusive {
            reason: "platform deviations cannot be ruled out at this precision".into(),
            profiles: undecided,
        });
    }
    Ok(PlatformOutcome {
        v1: v1.1,
        v2: v2.1,
        is_equilibrium: best.is_none(),
        best_deviation: best,
    })
}

/// User quality level with its benchmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// Minimum utility over equilibrium profiles and users.
    pub q: Estimate,
    /// Best single-user reward over the grid, `max R(1)`.
    pub lower_bench: Estimate,
    /// Best `N`-user reward over the grid, `max R(N)`.
    pub upper_bench: Estimate,
    /// `(profile, user)` pairs attaining the minimum.
    pub witnesses: Vec<(UserProfile, usize)>,
}

fn best_reward(grid: &[Policy], n: usize, oracle: &dyn UtilityOracle) -> Result<Estimate> {
    let mut best: Option<Estimate> = None;
    for policy in grid {
        let r = oracle.reward(policy, n)?;
        if best.is_none_or(|b| r.mean > b.mean) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| Error::RejectedInput("empty policy grid".into()))
}

pub fn quality_level(
    a1: &Policy,
    a2: &Policy,
    eq_set: &EquilibriumSet,
    mode: DataMode,
    oracle: &dyn UtilityOracle,
    grid: &[Policy],
) -> Result<QualityReport> {
    if eq_set.profiles.is_empty() {
        return Err(Error::ModelViolation("the user game has no pure equilibrium".into()));
    }
    let mut q: Option<Estimate> = None;
    let mut witnesses = Vec::new();
    for profile in &eq_set.profiles {
        let utilities = oracle.profile_utilities(a1, a2, profile, mode)?;
        for (user, u) in utilities.into_iter().enumerate() {
            match q {
                Some(best) if u.mean > best.mean => {}
                Some(best) if u.mean == best.mean => witnesses.push((profile.clone(), user)),
                _ => {
                    q = Some(u);
                    witnesses = vec![(profile.clone(), user)];
                }
            }
        }
    }
    let lower_bench = best_reward(grid, 1, oracle)?;
    let upper_bench = best_reward(grid, oracle.users(), oracle)?;
    Ok(QualityReport {
        q: q.expect("nonempty equilibrium set"),
        lower_bench,
        upper_bench,
        witnesses,
    })
}

/// A family member whose `R(N)` hits a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub policy: Policy,
    pub theta: f64,
    pub value: Estimate,
    pub evaluations: usize,
    /// Number of adjacent evaluation pairs checked against the
    /// total-variation envelope.
    pub envelope_checks: usize,
}

/// Bound on `|R_a(N) - R_b(N)|` for two mixture-family members whose
/// parameters differ by `delta`: each of the `N T` recommendations differs
/// in total variation by at most `delta`.
pub fn tv_envelope(config: &RiskySafeConfig, delta: f64) -> f64 {
    let decisions = config.n_users as f64 * config.horizon.unwrap_or(0) as f64;
    config.reward_span() * (1.0 - (1.0 - delta.abs().min(1.0)).powf(decisions))
}

/// Settings for [`find_equilibrium_with_quality`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizationSpec {
    /// Required `|R_A(N) - alpha|`.
    pub tol: f64,
    /// Parameter sweep used to bracket the target.
    pub sweep_points: usize,
    pub max_bisections: usize,
}

impl Default for RealizationSpec {
    fn default() -> Self {
        RealizationSpec {
            tol: 1e-3,
            sweep_points: 21,
            max_bisections: 40,
        }
    }
}

/// Finds a family member `A` with `|R_A(N) - alpha| <= tol` by bracketing
/// the target on a parameter sweep and bisecting. In discrete mode every
/// pair of neighbouring evaluations of a mixture family is checked against
/// the total-variation envelope.
pub fn find_equilibrium_with_quality(
    alpha: f64,
    family: &PolicyFamily,
    config: &RiskySafeConfig,
    oracle: &dyn UtilityOracle,
    spec: &RealizationSpec,
) -> Result<Realization> {
    if spec.sweep_points < 2 {
        return Err(Error::RejectedInput("the sweep needs at least two points".into()));
    }
    let n = oracle.users();
    let check_envelope = family.is_mixture() && config.time_mode == TimeMode::Discrete;
    let mut envelope_checks = 0usize;
    let mut envelope = |ta: f64, a: &Estimate, tb: f64, b: &Estimate| -> Result<()> {
        if !check_envelope {
            return Ok(());
        }
        envelope_checks += 1;
        let bound = tv_envelope(config, ta - tb) + a.half_width + b.half_width;
        if (a.mean - b.mean).abs() > bound {
            return Err(Error::InternalInconsistency(format!(
                "R(N) moved by {} between parameters {ta} and {tb}, beyond the envelope {bound}",
                (a.mean - b.mean).abs()
            )));
        }
        Ok(())
    };

    let thetas: Vec<f64> = (0..spec.sweep_points)
        .map(|i| i as f64 / (spec.sweep_points - 1) as f64)
        .collect();
    let values = thetas
        .iter()
        .map(|&t| oracle.reward(&family.at(t), n))
        .collect::<Result<Vec<_>>>()?;
    let mut evaluations = values.len();
    for i in 1..values.len() {
        envelope(thetas[i - 1], &values[i - 1], thetas[i], &values[i])?;
    }
    let lo = values.iter().map(|e| e.mean).fold(f64::INFINITY, f64::min);
    let hi = values.iter().map(|e| e.mean).fold(f64::NEG_INFINITY, f64::max);
    if alpha < lo - spec.tol || alpha > hi + spec.tol {
        return Err(Error::OutOfRange { alpha, lo, hi });
    }
    let realized = |theta: f64, value: Estimate, evaluations, envelope_checks| Realization {
        policy: family.at(theta),
        theta,
        value,
        evaluations,
        envelope_checks,
    };
    if let Some(i) = (0..values.len())
        .filter(|&i| (values[i].mean - alpha).abs() <= spec.tol)
        .min_by(|&a, &b| {
            (values[a].mean - alpha)
                .abs()
                .total_cmp(&(values[b].mean - alpha).abs())
        })
    {
        return Ok(realized(thetas[i], values[i], evaluations, envelope_checks));
    }
    // Neighbouring sweep points on either side of the target.
    let top = (0..values.len())
        .max_by(|&a, &b| values[a].mean.total_cmp(&values[b].mean))
        .expect("non-empty sweep");
    let right = (top + 1..values.len()).find(|&k| values[k].mean <= alpha).map(|k| (k - 1, k));
    let left = (0..top).rev().find(|&k| values[k].mean <= alpha).map(|k| (k + 1, k));
    let Some((above, below)) = right.or(left) else {
        return Err(Error::RichnessViolation(format!(
            "no swept member of {} has R(N) at or below {alpha}",
            family.label()
        )));
    };
    let (mut ta, mut va) = (thetas[above], values[above]);
    let (mut tb, mut vb) = (thetas[below], values[below]);
    let mut closest = if (va.mean - alpha).abs() < (vb.mean - alpha).abs() {
        (ta, va)
    } else {
        (tb, vb)
    };
    for _ in 0..spec.max_bisections {
        let tm = 0.5 * (ta + tb);
        let vm = oracle.reward(&family.at(tm), n)?;
        evaluations += 1;
        envelope(ta, &va, tm, &vm)?;
        envelope(tm, &vm, tb, &vb)?;
        if (vm.mean - alpha).abs() < (closest.1.mean - alpha).abs() {
            closest = (tm, vm);
        }
        if (vm.mean - alpha).abs() <= spec.tol {
            return Ok(realized(tm, vm, evaluations, envelope_checks));
        }
        if vm.mean > alpha {
            (ta, va) = (tm, vm);
        } else {
            (tb, vb) = (tm, vm);
        }
    }
    Err(Error::RichnessViolation(format!(
        "bisection stalled at parameter {} with R(N) = {} for target {alpha}",
        closest.0, closest.1.mean
    )))
}

/// Outcome of realizing one target quality level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizabilityPoint {
    pub target: f64,
    pub realization: Option<Realization>,
    /// Platform check of the symmetric pair on the sweep grid plus the
    /// realized policy.
    pub outcome: Option<PlatformOutcome>,
    pub quality: Option<Estimate>,
    /// Why the point is incomplete, when it is.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizabilitySweep {
    /// `max R(1)` over the sweep grid.
    pub lower_bench: Estimate,
    /// `max R(N)` over the sweep grid.
    pub upper_bench: Estimate,
    pub grid: Vec<Policy>,
    pub points: Vec<RealizabilityPoint>,
}

/// Realizes `targets` equally spaced quality levels between the family's
/// best single-user and best `N`-user rewards in the separate-data market,
/// checking each symmetric pair `(A, A)` against the sweep grid.
/// Inconclusive checks are recorded per point instead of aborting.
pub fn realizability_sweep(
    family: &PolicyFamily,
    config: &RiskySafeConfig,
    oracle: &dyn UtilityOracle,
    targets: usize,
    spec: &RealizationSpec,
    tau: f64,
) -> Result<RealizabilitySweep> {
    if targets < 2 || spec.sweep_points < 2 {
        return Err(Error::RejectedInput("need at least two targets and sweep points".into()));
    }
    let n = oracle.users();
    let grid: Vec<Policy> = (0..spec.sweep_points)
        .map(|i| family.at(i as f64 / (spec.sweep_points - 1) as f64))
        .collect();
    let lower_bench = best_reward(&grid, 1, oracle)?;
    let upper_bench = best_reward(&grid, n, oracle)?;
    let mut points = Vec::with_capacity(targets);
    for k in 0..targets {
        let target = lower_bench.mean
            + (upper_bench.mean - lower_bench.mean) * k as f64 / (targets - 1) as f64;
        let mut point = RealizabilityPoint {
            target,
            realization: None,
            outcome: None,
            quality: None,
            note: None,
        };
        let realization = find_equilibrium_with_quality(target, family, config, oracle, spec)?;
        let policy = realization.policy.clone();
        point.realization = Some(realization);
        let mut local = grid.clone();
        let at = match local.iter().position(|p| *p == policy) {
            Some(i) => i,
            None => {
                local.push(policy.clone());
                local.len() - 1
            }
        };
        let checked = platform_equilibrium_check(&local, at, at, DataMode::Separate, oracle, tau)
            .and_then(|outcome| {
                let eq = user_equilibria_brute(&policy, &policy, DataMode::Separate, oracle, tau)?;
                let q = quality_level(&policy, &policy, &eq, DataMode::Separate, oracle, &local)?;
                Ok((outcome, q.q))
            });
        match checked {
            Ok((outcome, q)) => {
                point.outcome = Some(outcome);
                point.quality = Some(q);
            }
            Err(e) if e.is_inconclusive() => point.note = Some(e.to_string()),
            Err(e) => return Err(e),
        }
        points.push(point);
    }
    Ok(RealizabilitySweep {
        lower_bench,
        upper_bench,
        grid,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(&str, &[f64])]) -> (CurveOracle, Vec<Policy>) {
        let policies: Vec<Policy> = (0..rows.len()).map(|i| Policy::cutoff(i as f64 + 2.0)).collect();
        let curves = rows
            .iter()
            .zip(&policies)
            .map(|((_, v), p)| RewardCurve::from_values(p.label(), v.to_vec()))
            .collect();
        (CurveOracle::new(curves).unwrap(), policies)
    }

    #[test]
    fn symmetric_increasing_curve_has_two_herds() {
        let (oracle, p) = table(&[("a", &[1.0, 2.0])]);
        let eq = user_equilibria_brute(&p[0], &p[0], DataMode::Separate, &oracle, 0.0).unwrap();
        assert_eq!(eq.profiles, vec![UserProfile::all(2, 1), UserProfile::all(2, 2)]);
    }

    #[test]
    fn dominated_platform_loses_everyone() {
        let (oracle, p) = table(&[("a1", &[1.0, 1.5]), ("a2", &[1.6, 2.0])]);
        let eq = user_equilibria_brute(&p[0], &p[1], DataMode::Separate, &oracle, 0.0).unwrap();
        assert_eq!(eq.profiles, vec![UserProfile::all(2, 2)]);
        let c = user_equilibria_characterized(
            &RewardCurve::from_values("a1", vec![1.0, 1.5]),
            &RewardCurve::from_values("a2", vec![1.6, 2.0]),
        )
        .unwrap();
        assert_eq!(c.profiles, eq.profiles);
        let v = platform_utilities(&eq).unwrap();
        assert_eq!((v.v1, v.v2), (0, 2));
    }

    #[test]
    fn tie_keeps_herd() {
        let c1 = RewardCurve::from_values("a", vec![1.0, 1.6]);
        let c2 = RewardCurve::from_values("b", vec![1.6, 2.0]);
        let eq = user_equilibria_characterized(&c1, &c2).unwrap();
        assert!(eq.contains(&UserProfile::all(2, 1)));
    }

    #[test]
    fn untagged_curve_is_rejected() {
        let mut c = RewardCurve::from_values("a", vec![1.0, 2.0]);
        c.shape = None;
        let err = user_equilibria_characterized(&c, &c).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn herd_pair_gives_zero_utilities() {
        let set = EquilibriumSet {
            profiles: vec![UserProfile::all(3, 1), UserProfile::all(3, 2)],
            method: EquilibriumMethod::BruteForce,
        };
        let v = platform_utilities(&set).unwrap();
        assert_eq!((v.v1, v.v2), (0, 0));
        let empty = EquilibriumSet {
            profiles: vec![],
            method: EquilibriumMethod::BruteForce,
        };
        assert!(matches!(platform_utilities(&empty), Err(Error::ModelViolation(_))));
    }

    #[test]
    fn weak_tolerance_is_rejected() {
        let mut c = RewardCurve::from_values("cutoff(2)", vec![1.0, 2.0]);
        c.half_widths = vec![0.1, 0.1];
        let oracle = CurveOracle::new(vec![c]).unwrap();
        let p = Policy::cutoff(2.0);
        let err = user_equilibria_brute(&p, &p, DataMode::Separate, &oracle, 0.15).unwrap_err();
        assert!(matches!(err, Error::StatisticalPower { .. }));
    }

    #[test]
    fn single_user_grid_game() {
        // N = 1: the user follows the larger R(1).
        let (oracle, p) = table(&[("best", &[3.0]), ("mid", &[2.0]), ("low", &[1.0])]);
        let out = platform_equilibrium_check(&p, 0, 1, DataMode::Separate, &oracle, 0.0).unwrap();
        assert!(out.is_equilibrium);
        assert_eq!((out.v1, out.v2), (1, 0));
        let out = platform_equilibrium_check(&p, 1, 2, DataMode::Separate, &oracle, 0.0).unwrap();
        assert!(!out.is_equilibrium);
        let dev = out.best_deviation.unwrap();
        assert_eq!((dev.platform, dev.policy_index), (2, 0));
        let eq = user_equilibria_brute(&p[0], &p[1], DataMode::Separate, &oracle, 0.0).unwrap();
        let q = quality_level(&p[0], &p[1], &eq, DataMode::Separate, &oracle, &p).unwrap();
        assert_eq!(q.q.mean, 3.0);
        assert_eq!(q.lower_bench.mean, 3.0);
    }

    #[test]
    fn tv_envelope_limits() {
        let cfg = RiskySafeConfig::discrete(1.0, 0.0, 0.6, 0.5, 1.0, 2, 4, 1.0);
        assert_eq!(tv_envelope(&cfg, 0.0), 0.0);
        assert!((tv_envelope(&cfg, 1.0) - 4.0).abs() < 1e-12);
    }
}
