//! The shared-posterior experimentation game in the undiscounted
//! continuous-time setting: pointwise best responses, the symmetric
//! equilibrium `f*`, team optima over cutoffs and the resulting gap between
//! single-user, equilibrium and team payoffs.
//!
//! Player 1's payoff is `∫ G(p0, q) u(q) dq` with
//! `u(q) = (s (1 - x) + R(q) x - F(q)) / (k_b + x + S(q))`, where `x = f1(q)`
//! and `S(q)` is the opponents' total rate. Since `G > 0` and `f1` enters
//! only at `q`, best responses are pointwise and
//! `sign du/dx = sign((R(q) - s)(k_b + S(q)) + q (h - s))`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::bandit::{RiskySafeConfig, TimeMode};
use crate::closed_form::{payoff_with_multiplicity, PayoffResult, QuadratureSpec};
use crate::error::{Error, Result};
use crate::mc::{replicate, Estimate};
use crate::policy::{GridFunction, Policy};
use crate::sim::{DataMode, EpisodeRunner, Scratch, UserProfile};

/// Default tolerance on the best-response sign expression.
pub const TAU_INDIFFERENCE: f64 = 1e-9;
pub const DEFAULT_EQUILIBRIUM_GRID: usize = 2001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BestResponse {
    Safe,
    Risky,
    Indifferent,
}

impl BestResponse {
    /// Whether playing `x` at this point is a best response.
    pub fn admits(self, x: f64) -> bool {
        match self {
            BestResponse::Safe => x == 0.0,
            BestResponse::Risky => x == 1.0,
            BestResponse::Indifferent => true,
        }
    }
}

fn require_continuous(config: &RiskySafeConfig) -> Result<()> {
    config.validate()?;
    if config.time_mode != TimeMode::ContinuousUndiscounted {
        return Err(Error::UnsupportedMode(
            "the experimentation game is solved in the continuous-undiscounted mode".into(),
        ));
    }
    Ok(())
}

/// `(R(q) - s)(k_b + S) + q (h - s)`.
pub fn best_response_sign(q: f64, others_total: f64, config: &RiskySafeConfig) -> f64 {
    (config.risky_mean(q) - config.s) * (config.background_ratio() + others_total)
        + q * (config.h - config.s)
}

/// Player 1's best experimentation rate at posterior `q` given the
/// opponents' summed rates there. The answer does not depend on player 1's
/// own rate.
pub fn pointwise_best_response(
    q: f64,
    others_total: f64,
    config: &RiskySafeConfig,
) -> Result<BestResponse> {
    pointwise_best_response_with(q, others_total, config, TAU_INDIFFERENCE)
}

pub fn pointwise_best_response_with(
    q: f64,
    others_total: f64,
    config: &RiskySafeConfig,
    tau: f64,
) -> Result<BestResponse> {
    require_continuous(config)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::RejectedInput(format!("posterior {q} outside (0, 1)")));
    }
    if !(others_total >= 0.0) {
        return Err(Error::RejectedInput("opponent rates must be nonnegative".into()));
    }
    if config.background_ratio() == 0.0 && others_total == 0.0 {
        return Err(Error::Singularity { q });
    }
    let d = best_response_sign(q, others_total, config);
    Ok(if d.abs() <= tau {
        BestResponse::Indifferent
    } else if d > 0.0 {
        BestResponse::Risky
    } else {
        BestResponse::Safe
    })
}

/// The symmetric equilibrium of the `N`-player game on a posterior grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPolicy {
    pub f_star: GridFunction,
    /// Largest grid point with `f* = 0`.
    pub zero_region_end: f64,
    /// Smallest grid point with `f* = 1`.
    pub one_region_start: f64,
}

impl EquilibriumPolicy {
    pub fn policy(&self) -> Policy {
        Policy::GridFunction(self.f_star.clone())
    }
}

/// Symmetric equilibrium rate at `q` for `n` players:
/// 1 where `R(q) >= s`, otherwise the clipped root of the indifference
/// condition with `S = (n - 1) f`.
pub fn symmetric_equilibrium_rate(q: f64, n: usize, config: &RiskySafeConfig) -> f64 {
    let gap = config.s - config.risky_mean(q);
    if gap <= 0.0 {
        return 1.0;
    }
    if n <= 1 {
        return if q * (config.h - config.s) - gap * config.background_ratio() > 0.0 {
            1.0
        } else {
            0.0
        };
    }
    let f = (q * (config.h - config.s) / gap - config.background_ratio()) / (n - 1) as f64;
    f.clamp(0.0, 1.0)
}

pub fn solve_symmetric_equilibrium(
    config: &RiskySafeConfig,
    grid_size: usize,
) -> Result<EquilibriumPolicy> {
    require_continuous(config)?;
    if config.n_users < 2 {
        return Err(Error::Precondition("the symmetric equilibrium needs N >= 2".into()));
    }
    if !config.has_background() {
        return Err(Error::Precondition(
            "the symmetric equilibrium needs background information".into(),
        ));
    }
    if grid_size < 3 {
        return Err(Error::RejectedInput("equilibrium grid needs at least 3 knots".into()));
    }
    let n = config.n_users;
    let step = 1.0 / (grid_size - 1) as f64;
    let mut values = Vec::with_capacity(grid_size);
    for i in 0..grid_size {
        let q = i as f64 * step;
        let f = if i == 0 {
            0.0
        } else if i == grid_size - 1 {
            1.0
        } else {
            let f = symmetric_equilibrium_rate(q, n, config);
            let others = (n - 1) as f64 * f;
            let br = pointwise_best_response(q, others, config)?;
            if !br.admits(f) {
                return Err(Error::InternalInconsistency(format!(
                    "f*({q}) = {f} is not a best response ({br:?})"
                )));
            }
            f
        };
        values.push(f);
    }
    if values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InternalInconsistency("f* is not nondecreasing".into()));
    }
    let zero_region_end = values
        .iter()
        .rposition(|&v| v == 0.0)
        .map_or(0.0, |i| i as f64 * step);
    let one_region_start = values
        .iter()
        .position(|&v| v == 1.0)
        .map_or(1.0, |i| i as f64 * step);
    Ok(EquilibriumPolicy {
        f_star: GridFunction::new(values)?,
        zero_region_end,
        one_region_start,
    })
}

/// Fictitious play on the pointwise game: every knot moves towards its
/// best response with step `1 / (k + 2)`. Returns the final iterate.
pub fn best_response_iteration(
    initial: &GridFunction,
    config: &RiskySafeConfig,
    iterations: usize,
) -> Result<GridFunction> {
    require_continuous(config)?;
    let n = config.n_users;
    let mut values: Vec<f64> = (0..initial.knots()).map(|i| initial.eval(initial.knot(i))).collect();
    let last = values.len() - 1;
    values[0] = 0.0;
    values[last] = 1.0;
    for k in 0..iterations {
        let step = 1.0 / (k as f64 + 2.0);
        for (i, v) in values.iter_mut().enumerate().take(last).skip(1) {
            let q = initial.knot(i);
            let target = match pointwise_best_response(q, (n - 1) as f64 * *v, config)? {
                BestResponse::Risky => 1.0,
                BestResponse::Safe => 0.0,
                BestResponse::Indifferent => *v,
            };
            *v += step * (target - *v);
        }
    }
    GridFunction::new(values)
}

/// Team-optimal cutoff for `n` players sharing one posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeamOptimum {
    pub cutoff: f64,
    /// Per-player payoff `K(p0; Cutoff(c) x n)`.
    pub value: f64,
    pub error_estimate: f64,
    /// Root of `(s - R(c)) k_b = n c (h - s)`; the pointwise team condition.
    pub analytic_cutoff: f64,
    /// The coarse scan was not unimodal and a dense scan was used instead.
    pub used_fallback: bool,
}

/// Cutoff where the team of `n` switches from safe to risky.
pub fn analytic_team_cutoff(config: &RiskySafeConfig, n: usize) -> f64 {
    // (s - l - (h - l) c) k_b = n c (h - s)
    let k_b = config.background_ratio();
    let num = (config.s - config.l) * k_b;
    let den = (config.h - config.l) * k_b + n as f64 * (config.h - config.s);
    num / den
}

fn team_payoff(
    c: f64,
    n: usize,
    config: &RiskySafeConfig,
    quad: &QuadratureSpec,
) -> Result<PayoffResult> {
    let policy = Policy::cutoff(c);
    payoff_with_multiplicity(config.p0, &policy, &[(&policy, n - 1)], config, quad)
}

/// Maximizes the per-player payoff of `n` players sharing a cutoff policy.
pub fn solve_team_optimum(
    config: &RiskySafeConfig,
    n: usize,
    quad: &QuadratureSpec,
) -> Result<TeamOptimum> {
    require_continuous(config)?;
    if n == 0 {
        return Err(Error::RejectedInput("team size must be positive".into()));
    }
    let analytic_cutoff = analytic_team_cutoff(config, n);
    let hi = config.myopic_threshold();
    let eval = |c: f64| team_payoff(c, n, config, quad);

    const COARSE: usize = 41;
    let grid: Vec<f64> = (0..COARSE).map(|i| hi * i as f64 / (COARSE - 1) as f64).collect();
    let values = grid.iter().map(|&c| eval(c).map(|r| r.value)).collect::<Result<Vec<_>>>()?;
    let best = (0..COARSE)
        .max_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("non-empty grid");
    let slack = 10.0 * quad.abs_tol.max(quad.rel_tol * values[best].abs());
    let unimodal = values[..=best].windows(2).all(|w| w[1] >= w[0] - slack)
        && values[best..].windows(2).all(|w| w[1] <= w[0] + slack);

    let (cutoff, used_fallback) = if unimodal {
        let mut a = grid[best.saturating_sub(1)];
        let mut b = grid[(best + 1).min(COARSE - 1)];
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - ratio * (b - a);
        let mut x2 = a + ratio * (b - a);
        let mut f1 = eval(x1)?.value;
        let mut f2 = eval(x2)?.value;
        while b - a > 1e-9 {
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + ratio * (b - a);
                f2 = eval(x2)?.value;
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - ratio * (b - a);
                f1 = eval(x1)?.value;
            }
        }
        (0.5 * (a + b), false)
    } else {
        warn!("team objective is not unimodal on the coarse grid; scanning densely");
        const DENSE: usize = 2001;
        let mut arg = 0.0;
        let mut top = f64::NEG_INFINITY;
        for i in 0..DENSE {
            let c = hi * i as f64 / (DENSE - 1) as f64;
            let v = eval(c)?.value;
            if v > top {
                top = v;
                arg = c;
            }
        }
        (arg, true)
    };
    let at = eval(cutoff)?;
    Ok(TeamOptimum {
        cutoff,
        value: at.value,
        error_estimate: at.error_estimate,
        analytic_cutoff,
        used_fallback,
    })
}

/// Outcome of checking a symmetric profile of game G against deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameCheck {
    pub is_equilibrium: bool,
    /// Payoff of the symmetric profile for one player.
    pub baseline: Estimate,
    /// Gain of each deviation over the baseline, in grid order.
    pub gains: Vec<Estimate>,
    /// Index into the deviation grid and gain of the most profitable
    /// deviation beyond tolerance.
    pub witness: Option<(usize, Estimate)>,
}

/// Settings for Monte-Carlo checks of game G in discrete time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub replications: u64,
    pub seed: u64,
}

/// Whether no deviation in `deviations` lets one player gain more than
/// `tau` over the symmetric profile where every player uses `policy`.
///
/// Continuous-undiscounted configurations are evaluated in closed form and
/// `tau` absorbs quadrature error. Discrete configurations are simulated in
/// shared-data mode with paired replications; a deviation is profitable
/// when its gain exceeds `tau` by more than its half-width, and the check is
/// inconclusive when some gain cannot be placed on either side of `tau`.
pub fn game_g_equilibrium_check(
    policy: &Policy,
    deviations: &[Policy],
    config: &RiskySafeConfig,
    tau: f64,
    quad: &QuadratureSpec,
    mc: McSettings,
) -> Result<GameCheck> {
    config.validate()?;
    let n = config.n_users;
    let (baseline, gains) = match config.time_mode {
        TimeMode::ContinuousUndiscounted => {
            let base = payoff_with_multiplicity(config.p0, policy, &[(policy, n - 1)], config, quad)?;
            let gains = deviations
                .iter()
                .map(|d| {
                    let r = payoff_with_multiplicity(config.p0, d, &[(policy, n - 1)], config, quad)?;
                    Ok(Estimate {
                        mean: r.value - base.value,
                        half_width: r.error_estimate + base.error_estimate,
                        replications: 1,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (
                Estimate {
                    mean: base.value,
                    half_width: base.error_estimate,
                    replications: 1,
                },
                gains,
            )
        }
        TimeMode::Discrete => {
            let all = UserProfile::all(n, 1);
            let base_runner =
                EpisodeRunner::new(config, policy, policy, &all, DataMode::Shared, mc.seed)?;
            let mut lone = vec![1u8; n];
            lone[0] = 2;
            let lone = UserProfile::new(lone)?;
            let base = replicate(mc.replications, 1, |rep, row| {
                let mut scratch = Scratch::default();
                base_runner.run_into(rep, None, &mut scratch, None);
                row[0] = scratch.expected[0];
            })[0]
                .estimate();
            let gains = deviations
                .iter()
                .map(|d| {
                    let runner =
                        EpisodeRunner::new(config, policy, d, &lone, DataMode::Shared, mc.seed)?;
                    let m = replicate(mc.replications, 1, |rep, row| {
                        let mut scratch = Scratch::default();
                        runner.run_into(rep, None, &mut scratch, None);
                        let dev = scratch.expected[0];
                        base_runner.run_into(rep, None, &mut scratch, None);
                        row[0] = dev - scratch.expected[0];
                    });
                    Ok(m[0].estimate())
                })
                .collect::<Result<Vec<_>>>()?;
            (base, gains)
        }
    };
    let mut witness: Option<(usize, Estimate)> = None;
    let mut undecided = false;
    for (i, g) in gains.iter().enumerate() {
        if g.mean - g.half_width > tau {
            if witness.is_none_or(|(_, w)| g.mean > w.mean) {
                witness = Some((i, *g));
            }
        } else if g.mean + g.half_width > tau {
            undecided = true;
        }
    }
    if witness.is_none() && undecided {
        return Err(Error::inconclusive(
            "a deviation gain cannot be separated from the tolerance",
        ));
    }
    Ok(GameCheck {
        is_equilibrium: witness.is_none(),
        baseline,
        gains,
        witness,
    })
}

/// Equilibrium payoff against the single-user and team optima.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub alpha_star: f64,
    pub single_opt: f64,
    pub team_opt: f64,
    /// `(alpha_star - single_opt, team_opt - alpha_star)`.
    pub margins: (f64, f64),
    /// Quadrature errors plus the grid-interpolation error of `f*`.
    pub error_budget: f64,
    pub single_cutoff: f64,
    pub team_cutoff: f64,
    /// The prior is certain and every quantity is zero.
    pub degenerate: bool,
}

/// Computes `alpha* = K(p0; f*, ..., f*)` and compares it with the optimal
/// single-user and `N`-player team payoffs. Both margins must exceed the
/// error budget, otherwise a theorem violation is reported.
pub fn alpha_star_report(config: &RiskySafeConfig, quad: &QuadratureSpec) -> Result<GapReport> {
    require_continuous(config)?;
    if config.p0 == 0.0 || config.p0 == 1.0 {
        return Ok(GapReport {
            alpha_star: 0.0,
            single_opt: 0.0,
            team_opt: 0.0,
            margins: (0.0, 0.0),
            error_budget: 0.0,
            single_cutoff: config.myopic_threshold(),
            team_cutoff: config.myopic_threshold(),
            degenerate: true,
        });
    }
    let n = config.n_users;
    let eq = solve_symmetric_equilibrium(config, DEFAULT_EQUILIBRIUM_GRID)?;
    let fine = solve_symmetric_equilibrium(config, 2 * DEFAULT_EQUILIBRIUM_GRID - 1)?;
    let k = |p: &Policy| payoff_with_multiplicity(config.p0, p, &[(p, n - 1)], config, quad);
    let alpha = k(&eq.policy())?;
    let alpha_fine = k(&fine.policy())?;
    let single = solve_team_optimum(config, 1, quad)?;
    let team = solve_team_optimum(config, n, quad)?;
    let error_budget = alpha.error_estimate
        + (alpha.value - alpha_fine.value).abs()
        + single.error_estimate
        + team.error_estimate;
    let margins = (alpha.value - single.value, team.value - alpha.value);
    if margins.0 <= error_budget || margins.1 <= error_budget {
        return Err(Error::TheoremViolation(format!(
            "gap margins {margins:?} do not exceed the error budget {error_budget:e}"
        )));
    }
    Ok(GapReport {
        alpha_star: alpha.value,
        single_opt: single.value,
        team_opt: team.value,
        margins,
        error_budget,
        single_cutoff: single.cutoff,
        team_cutoff: team.cutoff,
        degenerate: false,
    })
}
