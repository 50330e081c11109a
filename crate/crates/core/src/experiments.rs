//! Scenario execution.
//!
//! Each experiment kind turns a resolved [`Scenario`] into rows of a
//! [`RunRecord`]. Statistical checks that cannot be decided at the chosen
//! replication count are recorded as notes and mark the run inconclusive;
//! everything else that goes wrong is an error.

use std::time::Instant;

use crate::bandit::{RiskySafeConfig, TimeMode};
use crate::closed_form::{payoff_with_multiplicity, reward_curve_closed_form, QuadratureSpec};
use crate::equilibrium::{
    classify_profiles, platform_equilibrium_check, quality_level, realizability_sweep,
    user_equilibria_brute, user_equilibria_characterized, ClosedFormOracle, EquilibriumMethod,
    EquilibriumSet, MonteCarloOracle, RealizationSpec, UtilityOracle,
};
use crate::error::{Error, Result};
use crate::mc::Estimate;
use crate::monotonicity::{
    check_increased_informativeness, check_side_im, check_strict_im, check_utility_richness,
    Evaluator, MonotonicityVerdict, Verdict, DEFAULT_LEVEL,
};
use crate::policy::{Policy, PolicyFamily};
use crate::report::{Row, RunRecord};
use crate::scenario::{ExperimentKind, Scenario};
use crate::sim::{DataMode, RewardCurve};
use crate::strategic::{
    alpha_star_report, game_g_equilibrium_check, solve_symmetric_equilibrium, solve_team_optimum,
    McSettings, DEFAULT_EQUILIBRIUM_GRID,
};

/// Multiple of the largest oracle half-width used as the default
/// equilibrium tolerance.
pub const AUTO_TAU_FACTOR: f64 = 3.0;
/// Default tolerance for closed-form comparisons; a few times the default
/// quadrature error.
pub const EXACT_TAU: f64 = 1e-6;
/// Default number of quality targets in realizability sweeps.
pub const DEFAULT_TARGETS: usize = 11;
/// Default sweep size for policy families.
pub const DEFAULT_POINTS: usize = 21;

enum Backend {
    MonteCarlo(MonteCarloOracle),
    ClosedForm(ClosedFormOracle),
}

struct Ctx<'a> {
    sc: &'a Scenario,
    cfg: &'a RiskySafeConfig,
    name: &'static str,
    backend: Backend,
    quad: QuadratureSpec,
    reps: u64,
    seed: u64,
}

impl Ctx<'_> {
    fn oracle(&self) -> &dyn UtilityOracle {
        match &self.backend {
            Backend::MonteCarlo(o) => o,
            Backend::ClosedForm(o) => o,
        }
    }

    fn discrete(&self) -> bool {
        self.cfg.time_mode == TimeMode::Discrete
    }

    fn curve(&self, policy: &Policy) -> Result<RewardCurve> {
        match &self.backend {
            Backend::MonteCarlo(o) => o.curve(policy),
            Backend::ClosedForm(_) => reward_curve_closed_form(policy, self.cfg, &self.quad),
        }
    }

    fn evaluator(&self) -> Evaluator {
        if self.discrete() {
            Evaluator::MonteCarlo {
                replications: self.reps,
                seed: self.seed,
            }
        } else {
            Evaluator::ClosedForm(self.quad)
        }
    }

    fn mode(&self) -> DataMode {
        self.sc.experiment().mode.unwrap_or(DataMode::Separate)
    }

    fn level(&self) -> f64 {
        self.sc.experiment().level.unwrap_or(DEFAULT_LEVEL)
    }

    /// Configured tolerance, or a multiple of the widest half-width over
    /// the curves of `policies`.
    fn tau(&self, policies: &[Policy]) -> Result<f64> {
        if let Some(t) = self.sc.experiment().tau {
            return Ok(t);
        }
        if !self.discrete() {
            return Ok(EXACT_TAU);
        }
        Ok(AUTO_TAU_FACTOR * self.max_half_width(policies)?)
    }

    fn max_half_width(&self, policies: &[Policy]) -> Result<f64> {
        let mut hw: f64 = 0.0;
        for p in policies {
            hw = self.curve(p)?.half_widths.iter().copied().fold(hw, f64::max);
        }
        Ok(hw)
    }

    fn grid(&self) -> Vec<Policy> {
        self.sc.policies.iter().map(|(_, p)| p.clone()).collect()
    }

    fn row(&self, quantity: impl Into<String>, value: f64) -> Row {
        Row::new(self.name, quantity, value)
    }

    fn est(&self, quantity: impl Into<String>, e: Estimate) -> Row {
        Row::estimate(self.name, quantity, e)
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Runs the scenario's experiment. The record is identified by the hash of
/// the resolved configuration without its output settings, so the same
/// computation written to different places hashes the same.
pub fn run_scenario(sc: &Scenario) -> Result<RunRecord> {
    let started = Instant::now();
    let kind = sc.experiment().kind;
    let cfg = &sc.problem;
    let quad = QuadratureSpec::default();
    let reps = sc.config.seeds.replications;
    let seed = sc.config.seeds.master;
    let backend = match cfg.time_mode {
        TimeMode::Discrete => Backend::MonteCarlo(MonteCarloOracle::new(cfg, reps, seed)?),
        TimeMode::ContinuousUndiscounted => Backend::ClosedForm(ClosedFormOracle::new(cfg, quad)?),
    };
    let ctx = Ctx {
        sc,
        cfg,
        name: kind.name(),
        backend,
        quad,
        reps,
        seed,
    };
    let mut rec = RunRecord::new(kind.name(), &sc.config.computation_json());
    log::info!("running {} (N = {}, {} policies)", kind.name(), cfg.n_users, sc.policies.len());
    match kind {
        ExperimentKind::RewardCurve => reward_curves(&ctx, &mut rec)?,
        ExperimentKind::UserEq => user_eq(&ctx, &mut rec)?,
        ExperimentKind::PlatformEq => platform_eq(&ctx, &mut rec)?,
        ExperimentKind::SharedEq => shared_eq(&ctx, &mut rec)?,
        ExperimentKind::Monotonicity => monotonicity(&ctx, &mut rec)?,
        ExperimentKind::Richness => richness(&ctx, &mut rec)?,
        ExperimentKind::Table1 => table1(&ctx, &mut rec)?,
        ExperimentKind::AlphaStar => alpha_star(&ctx, &mut rec)?,
    }
    rec.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(rec)
}

fn shape_tag(curve: &RewardCurve) -> &'static str {
    match curve.shape {
        Some(crate::sim::CurveShape::StrictlyIncreasing) => "strictly-increasing",
        Some(crate::sim::CurveShape::Constant) => "constant",
        None => "undecided",
    }
}

fn reward_curves(ctx: &Ctx, rec: &mut RunRecord) -> Result<()> {
    for (name, policy) in &ctx.sc.policies {
        let curve = ctx.curve(policy)?;
        for n in 1..=curve.len() {
            rec.push(
                ctx.est("R", curve.estimate(n))
                    .n(n)
                    .policy(name)
                    .tag("shape", shape_tag(&curve)),
            );
        }
    }
    Ok(())
}

fn user_eq(ctx: &Ctx, rec: &mut RunRecord) -> Result<()> {
    let e = ctx.sc.experiment();
    let (n1, n2) = (e.a1.as_deref().unwrap_or(""), e.a2.as_deref().unwrap_or(""));
    let (a1, a2) = (ctx.sc.policy(n1)?.clone(), ctx.sc.policy(n2)?.clone());
    let mode = ctx.mode();
    let tau = ctx.tau(&[a1.clone(), a2.clone()])?;
    let pair = format!("{n1}|{n2}");
    let class = classify_profiles(&a1, &a2, mode, ctx.oracle(), tau)?;
    for p in &class.equilibria {
        rec.push(
            ctx.row("equilibrium", 1.0)
                .n(p.count(1))
                .policy(&pair)
                .tag("profile", p)
                .tag("herd", p.is_herd()),
        );
    }
    for p in &class.undecided {
        rec.push(ctx.row("undecided", 1.0).n(p.count(1)).policy(&pair).tag("profile", p));
    }
    rec.push(ctx.row("equilibria", class.equilibria.len() as f64).policy(&pair).tag("tau", tau));
    if !class.undecided.is_empty() {
        rec.inconclusive(format!(
            "{} profiles undecided at tau = {tau}",
            class.undecided.len()
        ));
        return Ok(());
    }
    let eq = EquilibriumSet {
        profiles: class.equilibria,
        method: EquilibriumMethod::BruteForce,
    };
    if mode == DataMode::Separate {
        let (c1, c2) = (ctx.curve(&a1)?, ctx.curve(&a2)?);
        if let Ok(ch) = user_equilibria_characterized(&c1, &c2) {
            rec.push(ctx.row("characterization_agrees", flag(ch.profiles == eq.profiles)).policy(&pair));
        }
    }
    if eq.profiles.is_empty() {
        rec.inconclusive("the user game has no pure equilibrium");
        return Ok(());
    }
    let q = quality_level(&a1, &a2, &eq, mode, ctx.oracle(), &ctx.grid())?;
    rec.push(ctx.est("Q", q.q).n(ctx.cfg.n_users).policy(&pair));
    rec.push(ctx.est("max_R1", q.lower_bench).n(1));
    rec.push(ctx.est("max_RN", q.upper_bench).n(ctx.cfg.n_users));
    Ok(())
}

/// Platform check of every ordered pair of the policy grid; returns the
/// quality level of each pair found to be an equilibrium.
fn platform_pairs(
    ctx: &Ctx,
    rec: &mut RunRecord,
    mode: DataMode,
    quantity: &str,
) -> Result<Vec<Estimate>> {
    let grid = ctx.grid();
    let tau = ctx.tau(&grid)?;
    let mut qualities = Vec::new();
    for i1 in 0..grid.len() {
        for i2 in 0..grid.len() {
            let pair = format!("{}|{}", ctx.sc.policies[i1].0, ctx.sc.policies[i2].0);
            let checked = platform_equilibrium_check(&grid, i1, i2, mode, ctx.oracle(), tau)
                .and_then(|out| {
                    let q = if out.is_equilibrium {
                        let eq = user_equilibria_brute(&grid[i1], &grid[i2], mode, ctx.oracle(), tau)?;
                        Some(quality_level(&grid[i1], &grid[i2], &eq, mode, ctx.oracle(), &grid)?)
                    } else {
                        None
                    };
                    Ok((out, q))
                });
            let (out, q) = match checked {
                Ok(v) => v,
                Err(e) if e.is_inconclusive() => {
                    rec.inconclusive(format!("{pair}: {e}"));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let mode_tag = format!("{mode:?}").to_lowercase();
            rec.push(
                ctx.row("is_equilibrium", flag(out.is_equilibrium))
                    .policy(&pair)
                    .tag("mode", &mode_tag)
                    .tag("v1", out.v1)
                    .tag("v2", out.v2),
            );
            if let Some(d) = &out.best_deviation {
                rec.push(
                    ctx.row("deviation_gain", d.gain as f64)
                        .policy(&pair)
                        .tag("platform", d.platform)
                        .tag("to", &ctx.sc.policies[d.policy_index].0),
                );
            }
            if let Some(q) = q {
                rec.push(ctx.est(quantity, q.q).policy(&pair).tag("mode", &mode_tag));
                qualities.push(q.q);
            }
        }
    }
    Ok(qualities)
}

fn benches(ctx: &Ctx, rec: &mut RunRecord) -> Result<()> {
    let n = ctx.cfg.n_users;
    for (k, label) in [(1, "max_R1"), (n, "max_RN")] {
        let mut best: Option<(Estimate, &str)> = None;
        for (name, p) in &ctx.sc.policies {
            let r = ctx.oracle().reward(p, k)?;
            if best.is_none_or(|(b, _)| r.mean > b.mean) {
                best = Some((r, name));
            }
        }
        if let Some((b, name)) = best {
            rec.push(ctx.est(label, b).n(k).policy(name));
        }
        if n == 1 {
            break;
        }
    }
    Ok(())
}

fn platform_eq(ctx: &Ctx, rec: &mut RunRecord) -> Result<()> {
    let mode = ctx.mode();
    platform_pairs(ctx, rec, mode, "Q")?;
    benches(ctx, rec)
}

fn shared_eq(ctx: &Ctx, rec: &mut RunRecord) -> Result<()> {
    let n = ctx.cfg.n_users;
    let grid = ctx.grid();
    if !ctx.discrete() {
        let eq = solve_symmetric_equilibrium(ctx.cfg, DEFAULT_EQUILIBRIUM_GRID)?;
        let f = eq.policy();
        let value = payoff_with_multiplicity(ctx.cfg.p0, &f, &[(&f, n - 1)], ctx.cfg, &ctx.quad)?;
        rec.push(ctx.row("zero_region_end", eq.zero_region_end).policy("f*"));
        rec.push(ctx.row("one_region_start", eq.one_region_start).policy("f*"));
        rec.push(Row {
            half_width: value.error_estimate,
            ..ctx.row("alpha_star", value.value).n(n).policy("f*")
        });
        let team = solve_team_optimum(ctx.cfg, n, &ctx.quad)?;
        rec.push(Row {
            half_width: team.error_estimate,
            ..ctx.row("team_opt", team.value).n(n).tag("cutoff", team.cutoff)
        });
        if !grid.is_empty() {
            let tau = ctx.sc.experiment().tau.unwrap_or(EXACT_TAU);
            let check = game_g_equilibrium_check(
                &f,
                &grid,
                ctx.cfg,
                tau,
                &ctx.quad,
                McSettings {
                    replications: ctx.reps,
                    seed: ctx.seed,
                },
            )?;
            for (g, (name, _)) in check.gains.iter().zip(&ctx.sc.policies) {
                rec.push(ctx.est("deviation_gain", *g).policy("f*").tag("to", name));
            }
            rec.push(ctx.row("is_equilibrium", flag(check.is_equilibrium)).policy("f*").tag("tau", tau));
        }
        return Ok(());
    }
    let tau = ctx.tau(&grid)?;
    let mc = McSettings {
        replications: ctx.reps,
        seed: ctx.seed,
    };
    for (name, policy) in &ctx.sc.policies {
        let others: Vec<Policy> = grid.iter().filter(|p| *p != policy).cloned().collect();
        match game_g_equilibrium_check(policy, &others, ctx.cfg, tau, &ctx.quad, mc) {
            Ok(check) => {
                rec.push(ctx.est("baseline", check.baseline).n(n).policy(name));
                let names = ctx.sc.policies.iter().filter(|(_, p)| p != policy);
                for (g, (other, _)) in check.gains.iter().zip(names) {
                    rec.push(ctx.est("deviation_gain", *g).policy(name).tag("to", other));
                }
                rec.push(ctx.row("is_equilibrium", flag(check.is_equilibrium)).policy(name).tag("tau", tau));
            }
            Err(e) if e.is_inconclusive() => rec.inconclusive(format!("{name}: {e}")),
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn verdict_rows(ctx: &Ctx, rec: &mut RunRecord, quantity: &str, name: &str, v: &MonotonicityVerdict) {
    let verdict = format!("{:?}", v.verdict).to_lowercase();
    let value = match v.verdict {
        Verdict::Holds => 1.0,
        Verdict::Fails => 0.0,
        Verdict::Inconclusive => -1.0,
    };
    let kind = serde_json::to_value(v.kind)
        .ok()
        .and_then(|k| k.as_str().map(str::to_string))
        .unwrap_or_default();
    rec.push(
        ctx.row(quantity, value)
            .policy(name)
            .tag("verdict", &verdict)
            .tag("kind", kind)
            .tag("level", v.level)
            .tag("degenerate", v.degenerate),
    );
    for c in &v.evidence {
        rec.push(Row {
            half_width: c.radius,
            ..ctx
                .row(format!("{quantity}.difference"), c.difference)
                .n(c.n)
                .policy(name)
                .tag("comparison", &c.label)
        });
    }
    if v.verdict == Verdict::Inconclusive {
        rec.inconclusive(format!("{quantity} for {name}: differences within confidence radii"));
    }
}

fn monotonicity(ctx: &Ctx, rec: &mut RunRecord) -> Result<()> {
    let e = ctx.sc.experiment();
    let level = ctx.level();
    let eval = ctx.evaluator();
    let adversaries: Vec<Policy> = match &e.adversaries {
        Some(names) => names
            .iter()
            .map(|n| ctx.sc.policy(n).cloned())
            .collect::<Result<_>>()?,
        None => ctx.grid(),
    };
    let ns: Vec<usize> = (1..ctx.cfg.n_users).collect();
    for (name, policy) in &ctx.sc.policies {
        let strict = check_strict_im(policy, ctx.cfg, &eval, level)?;
        verdict_rows(ctx, rec, "strict_im", name, &strict);
        let side = check_side_im(policy, &adversaries, ctx.cfg, &ns, &eval, level)?;
        verdict_rows(ctx, rec, "side_im", name, &side);
        if ctx.discrete() {
            let info = check_increased_informativeness(
                ctx.cfg, policy, ctx.cfg.p0, ctx.reps, ctx.seed, level,
            )?;
            verdict_rows(ctx, rec, "increased_info", name, &info);
        }
    }
    Ok(())
}

fn family_points(ctx: &Ctx) -> usize {
    ctx.sc.experiment().points.unwrap_or(DEFAULT_POINTS)
}

fn richness(ctx: &Ctx, rec: &mut RunRecord) -> Result<()> {
    let family = ctx.sc.family()?;
    let label = family.label();
    let v = check_utility_richness(&family, ctx.cfg, &ctx.evaluator(), family_points(ctx), ctx.level())?;
    let n = ctx.cfg.n_users;
    for ((theta, rn), r1) in v.thetas.iter().zip(&v.values).zip(&v.singles) {
        rec.push(ctx.est("R", *r1).n(1).policy(&label).tag("theta", theta));
        if n > 1 {
            rec.push(ctx.est("R", *rn).n(n).policy(&label).tag("theta", theta));
        }
    }
    rec.push(ctx.row("range_min", v.range.0).n(n).policy(&label));
    rec.push(ctx.row("range_max", v.range.1).n(n).policy(&label));
    rec.push(
        ctx.row("continuity_envelope_ok", flag(v.continuity_envelope_ok))
            .policy(&label)
            .tag("applicable", v.envelope_applicable),
    );
    rec.push(ctx.row("max_envelope_excess", v.max_envelope_excess).policy(&label));
    rec.push(ctx.row("low_anchor_ok", flag(v.low_anchor_ok)).policy(&label));
    Ok(())
}

fn table1(ctx: &Ctx, rec: &mut RunRecord) -> Result<()> {
    let n = ctx.cfg.n_users;
    if n == 1 {
        platform_pairs(ctx, rec, DataMode::Separate, "single-user, separate")?;
        platform_pairs(ctx, rec, DataMode::Shared, "single-user, shared")?;
        return benches(ctx, rec);
    }
    table1_separate(ctx, rec)?;
    if ctx.discrete() {
        // Symmetric equilibria of the shared-data game among grid policies.
        let tau = ctx.tau(&ctx.grid())?;
        let mc = McSettings {
            replications: ctx.reps,
            seed: ctx.seed,
        };
        for (name, policy) in &ctx.sc.policies {
            let others: Vec<Policy> = ctx.grid().into_iter().filter(|p| p != policy).collect();
            match game_g_equilibrium_check(policy, &others, ctx.cfg, tau, &ctx.quad, mc) {
                Ok(c) if c.is_equilibrium => {
                    rec.push(ctx.est("multi-user, shared", c.baseline).n(n).policy(name));
                }
                Ok(_) => {}
                Err(e) if e.is_inconclusive() => rec.inconclusive(format!("{name}: {e}")),
                Err(e) => return Err(e),
            }
        }
    } else if ctx.cfg.has_background() {
        let g = alpha_star_report(ctx.cfg, &ctx.quad)?;
        rec.push(Row {
            half_width: g.error_budget,
            ..ctx.row("multi-user, shared", g.alpha_star).n(n).policy("f*")
        });
        rec.push(ctx.row("single_opt", g.single_opt).n(1));
        rec.push(ctx.row("team_opt", g.team_opt).n(n));
    }
    Ok(())
}

/// Realizes equally spaced quality levels with the configured family and
/// reports the quality of each symmetric pair.
fn table1_separate(ctx: &Ctx, rec: &mut RunRecord) -> Result<()> {
    let n = ctx.cfg.n_users;
    let family: PolicyFamily = ctx.sc.family()?;
    let points = family_points(ctx);
    let sweep_grid: Vec<Policy> = (0..points)
        .map(|i| family.at(i as f64 / (points - 1) as f64))
        .collect();
    let hw = if ctx.discrete() {
        ctx.max_half_width(&sweep_grid)?
    } else {
        0.0
    };
    let tau = match ctx.sc.experiment().tau {
        Some(t) => t,
        None if ctx.discrete() => AUTO_TAU_FACTOR * hw,
        None => EXACT_TAU,
    };
    let spec = RealizationSpec {
        tol: if ctx.discrete() { 0.5 * hw } else { 1e-6 },
        sweep_points: points,
        ..RealizationSpec::default()
    };
    let targets = ctx.sc.experiment().targets.unwrap_or(DEFAULT_TARGETS);
    let sweep = realizability_sweep(&family, ctx.cfg, ctx.oracle(), targets, &spec, tau)?;
    let label = family.label();
    for (k, p) in sweep.points.iter().enumerate() {
        let theta = p.realization.as_ref().map_or(f64::NAN, |r| r.theta);
        if let Some(r) = &p.realization {
            rec.push(
                ctx.est("realized_RN", r.value)
                    .n(n)
                    .policy(&label)
                    .tag("target", p.target)
                    .tag("theta", theta),
            );
        }
        match (&p.outcome, p.quality) {
            (Some(out), Some(q)) => {
                rec.push(
                    ctx.est("multi-user, separate", q)
                        .n(n)
                        .policy(&label)
                        .tag("target", p.target)
                        .tag("theta", theta)
                        .tag("is_equilibrium", out.is_equilibrium)
                        .tag("tau", tau),
                );
                if !out.is_equilibrium {
                    rec.inconclusive(format!("target {k}: symmetric pair has a profitable deviation"));
                }
            }
            _ => rec.inconclusive(format!(
                "target {k}: {}",
                p.note.as_deref().unwrap_or("no verdict")
            )),
        }
    }
    rec.push(ctx.est("max_R1", sweep.lower_bench).n(1).policy(&label));
    rec.push(ctx.est("max_RN", sweep.upper_bench).n(n).policy(&label));
    Ok(())
}

fn alpha_star(ctx: &Ctx, rec: &mut RunRecord) -> Result<()> {
    let g = alpha_star_report(ctx.cfg, &ctx.quad)?;
    let n = ctx.cfg.n_users;
    let inside = g.single_opt < g.alpha_star && g.alpha_star < g.team_opt;
    rec.push(Row {
        half_width: g.error_budget,
        ..ctx.row("alpha_star", g.alpha_star).n(n).policy("f*").tag("inside", inside)
    });
    rec.push(ctx.row("single_opt", g.single_opt).n(1).tag("cutoff", g.single_cutoff));
    rec.push(ctx.row("team_opt", g.team_opt).n(n).tag("cutoff", g.team_cutoff));
    rec.push(ctx.row("margin_lower", g.margins.0));
    rec.push(ctx.row("margin_upper", g.margins.1));
    rec.push(ctx.row("error_budget", g.error_budget));
    if g.degenerate {
        rec.push(ctx.row("degenerate", 1.0));
    }
    Ok(())
}

/// Convenience for callers that only have an error: whether it maps to
/// the inconclusive exit status.
pub fn exit_code(result: &Result<RunRecord>) -> i32 {
    match result {
        Ok(r) => r.status.exit_code(),
        Err(Error::Inconclusive { .. }) => 2,
        Err(_) => 1,
    }
}
