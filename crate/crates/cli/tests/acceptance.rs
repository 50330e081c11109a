//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! fails if any criterion fails.

use std::io::Write;
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use blab_core::closed_form::{payoff_with_multiplicity, KernelConvention, QuadratureSpec};
use blab_core::diffusion::{simulate_diffusion_payoff, DiffusionSpec};
use blab_core::equilibrium::{
    platform_equilibrium_check, quality_level, realizability_sweep, user_equilibria_brute,
    user_equilibria_characterized, CurveOracle, MonteCarloOracle, RealizationSpec, UtilityOracle,
};
use blab_core::monotonicity::{
    check_increased_informativeness, check_side_im, check_strict_im, check_utility_richness,
    Evaluator, Verdict,
};
use blab_core::strategic::{
    alpha_star_report, game_g_equilibrium_check, solve_symmetric_equilibrium, solve_team_optimum,
    McSettings, DEFAULT_EQUILIBRIUM_GRID,
};
use blab_core::{
    DataMode, Error, GridFunction, Policy, PolicyFamily, RewardCurve, RiskySafeConfig, UserProfile,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<(bool, String), Error>;

fn reference_config(n: usize) -> RiskySafeConfig {
    RiskySafeConfig::discrete(1.0, 0.0, 0.6, 0.5, 1.0, n, 4, 0.9)
}

fn gap_example() -> RiskySafeConfig {
    RiskySafeConfig::continuous(1.0, -2.0, -1.0, 0.5, 1.0, 1.0, 2)
}

fn grid5() -> Vec<Policy> {
    vec![
        Policy::always_safe(),
        Policy::ThompsonSampling,
        Policy::epsilon_thompson(0.3),
        Policy::epsilon_thompson(1.0),
        Policy::UniformMixture {
            base: Box::new(Policy::ThompsonSampling),
            epsilon: 0.5,
        },
    ]
}

fn max_hw(oracle: &MonteCarloOracle, grid: &[Policy]) -> Result<f64, Error> {
    let mut hw: f64 = 0.0;
    for p in grid {
        hw = oracle.curve(p)?.half_widths.iter().copied().fold(hw, f64::max);
    }
    Ok(hw)
}

/// With one user every platform equilibrium attains the best
/// single-user reward, and every other pair has a profitable deviation.
fn c1() -> Outcome {
    let cfg = reference_config(1);
    let grid = grid5();
    let oracle = MonteCarloOracle::new(&cfg, 100_000, 2024)?;
    let tau = 3.0 * max_hw(&oracle, &grid)?;
    let mut ok = true;
    let (mut eqs, mut devs) = (0, 0);
    let mut worst: f64 = 0.0;
    for mode in [DataMode::Separate, DataMode::Shared] {
        for i1 in 0..grid.len() {
            for i2 in 0..grid.len() {
                let out = platform_equilibrium_check(&grid, i1, i2, mode, &oracle, tau)?;
                if out.is_equilibrium {
                    eqs += 1;
                    let eq = user_equilibria_brute(&grid[i1], &grid[i2], mode, &oracle, tau)?;
                    let q = quality_level(&grid[i1], &grid[i2], &eq, mode, &oracle, &grid)?;
                    let slack = 2.0 * q.q.half_width.max(q.lower_bench.half_width);
                    let gap = (q.q.mean - q.lower_bench.mean).abs();
                    worst = worst.max(gap - slack);
                    ok &= gap <= slack;
                } else {
                    devs += 1;
                    ok &= out.best_deviation.is_some_and(|d| d.gain >= 1);
                }
            }
        }
    }
    Ok((
        ok,
        format!("{eqs} equilibria with Q = max R(1) (worst excess {worst:.2e}), {devs} pairs with a profitable deviation, tau {tau:.2e}"),
    ))
}

/// Brute force on increasing curves finds exactly the herds
/// predicted by the characterization.
fn c2() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xE1);
    let (p1, p2) = (Policy::cutoff(2.0), Policy::cutoff(3.0));
    let mut ok = true;
    let mut mismatches = 0;
    let mut cases = 0;
    for n in 2..=6 {
        for _ in 0..200 {
            let mut curve = || {
                let (a, b, c) = (
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0.05..2.0),
                    rng.random_range(0.1..2.0),
                );
                (1..=n)
                    .map(|k| a + b * (1.0 - (-c * k as f64).exp()))
                    .collect::<Vec<f64>>()
            };
            let (v1, v2) = (curve(), curve());
            let c1 = RewardCurve::from_values(p1.label(), v1);
            let c2 = RewardCurve::from_values(p2.label(), v2);
            let oracle = CurveOracle::new(vec![c1.clone(), c2.clone()])?;
            let brute = user_equilibria_brute(&p1, &p2, DataMode::Separate, &oracle, 0.0)?;
            let chr = user_equilibria_characterized(&c1, &c2)?;
            let herds = brute.profiles.iter().all(UserProfile::is_herd);
            if !herds || brute.profiles != chr.profiles {
                mismatches += 1;
            }
            ok &= herds && brute.profiles == chr.profiles;
            cases += 1;
        }
    }
    Ok((ok, format!("{cases} curve pairs for N = 2..6, {mismatches} mismatches")))
}

/// Realizable quality levels and the equilibrium bracket on the epsilon-Thompson family.
fn c3_c4() -> Result<[(bool, String); 2], Error> {
    let cfg = reference_config(2);
    let oracle = MonteCarloOracle::new(&cfg, 1_000_000, 42)?;
    let hw = oracle
        .reward(&Policy::epsilon_thompson(0.0), 2)?
        .half_width
        .max(oracle.reward(&Policy::epsilon_thompson(1.0), 2)?.half_width);
    let spec = RealizationSpec {
        tol: 0.5 * hw,
        sweep_points: 21,
        max_bisections: 40,
    };
    let tau = 3.0 * hw;
    let sweep = realizability_sweep(&PolicyFamily::EpsilonThompson, &cfg, &oracle, 11, &spec, tau)?;
    let (lo, hi) = (sweep.lower_bench, sweep.upper_bench);
    let (mut ok3, mut ok4) = (true, true);
    let (mut worst3, mut worst4): (f64, f64) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut eqs = 0;
    for p in &sweep.points {
        let Some(r) = &p.realization else {
            ok3 = false;
            continue;
        };
        let miss = (r.value.mean - p.target).abs() - 2.0 * r.value.half_width;
        worst3 = worst3.max(miss);
        let is_eq = p.outcome.as_ref().is_some_and(|o| o.is_equilibrium);
        ok3 &= miss <= 0.0 && is_eq;
        if let (true, Some(q)) = (is_eq, p.quality) {
            eqs += 1;
            let t = 2.0 * q.half_width.max(lo.half_width).max(hi.half_width);
            let excess = (lo.mean - t - q.mean).max(q.mean - hi.mean - t);
            worst4 = worst4.max(excess);
            ok4 &= excess <= 0.0;
        }
    }
    ok4 &= eqs > 0;
    Ok([
        (
            ok3,
            format!(
                "{} targets in [{:.5}, {:.5}], worst |R_A(N) - alpha| - 2 hw = {worst3:.2e}, all (A, A) equilibria: {}",
                sweep.points.len(),
                lo.mean,
                hi.mean,
                sweep.points.iter().all(|p| p.outcome.as_ref().is_some_and(|o| o.is_equilibrium))
            ),
        ),
        (ok4, format!("{eqs} equilibria inside the bracket, worst excess {worst4:.2e}")),
    ])
}

/// The closed form agrees with the diffusion simulation.
fn c5() -> Outcome {
    let cfg = gap_example();
    let quad = QuadratureSpec::default();
    let mut ok = quad.convention == KernelConvention::Green;
    let mut printed_rejected = false;
    let mut detail = Vec::new();
    for (c1, c2) in [(0.2, 0.2), (1.0 / 7.0, 1.0 / 7.0), (0.3, 0.1)] {
        let (a, b) = (Policy::cutoff(c1), Policy::cutoff(c2));
        let green = payoff_with_multiplicity(cfg.p0, &a, &[(&b, 1)], &cfg, &quad)?;
        let printed = payoff_with_multiplicity(
            cfg.p0,
            &a,
            &[(&b, 1)],
            &cfg,
            &quad.with_convention(KernelConvention::Printed),
        )?;
        let sim = simulate_diffusion_payoff(
            cfg.p0,
            &a,
            &[(&b, 1)],
            &cfg,
            &DiffusionSpec {
                dt: 1e-3,
                paths: 100_000,
                seed: 9,
                ..DiffusionSpec::default()
            },
        )?;
        let bar = green.error_estimate + 3.0 * sim.estimate.std_error();
        ok &= (green.value - sim.estimate.mean).abs() <= bar && sim.truncated_paths == 0;
        printed_rejected |= (printed.value - sim.estimate.mean).abs() > bar;
        detail.push(format!(
            "({c1:.3},{c2:.3}): K {:.5} vs sim {:.5} (bar {bar:.1e}, branch_gap {:.1e})",
            green.value, sim.estimate.mean, green.branch_gap
        ));
    }
    ok &= printed_rejected;
    Ok((ok, format!("green convention; {}", detail.join("; "))))
}

/// The equilibrium lies strictly between the single-user and
/// team optima, and free riding is profitable at the team optimum.
fn c6() -> Outcome {
    let cfg = gap_example();
    let quad = QuadratureSpec::default();
    let g = alpha_star_report(&cfg, &quad)?;
    let gap_ok = g.margins.0 > 10.0 * g.error_budget && g.margins.1 > 10.0 * g.error_budget;
    let team = solve_team_optimum(&cfg, cfg.n_users, &quad)?;
    let base = Policy::cutoff(team.cutoff);
    let lazier: Vec<Policy> = (1..=20)
        .map(|i| team.cutoff + (cfg.myopic_threshold() - team.cutoff) * i as f64 / 20.0)
        .map(Policy::cutoff)
        .collect();
    let check = game_g_equilibrium_check(
        &base,
        &lazier,
        &cfg,
        10.0 * g.error_budget,
        &quad,
        McSettings {
            replications: 0,
            seed: 0,
        },
    )?;
    let witness = check.witness.map(|(i, gain)| (lazier[i].clone(), gain));
    let free_ride = witness.as_ref().is_some_and(|(p, gain)| {
        // Pointwise less exploration than the team cutoff.
        let less = (0..=1000).all(|k| {
            let q = k as f64 / 1000.0;
            p.prob(q) <= base.prob(q)
        });
        less && gain.mean - gain.half_width > 0.0
    });
    Ok((
        gap_ok && free_ride,
        format!(
            "alpha* {:.6} in ({:.6}, {:.6}), margins ({:.2e}, {:.2e}), budget {:.1e}; witness {}",
            g.alpha_star,
            g.single_opt,
            g.team_opt,
            g.margins.0,
            g.margins.1,
            g.error_budget,
            witness.map_or("none".into(), |(p, gain)| format!("{} gains {:.4}", p.label(), gain.mean))
        ),
    ))
}

/// alpha* is at least the single-user optimum.
fn c7() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x76);
    let quad = QuadratureSpec::default();
    let mut ok = true;
    let mut min_margin = f64::INFINITY;
    for _ in 0..20 {
        let h = rng.random_range(0.5..2.0);
        let p0 = rng.random_range(0.2..0.8);
        let s = -h * p0 / (1.0 - p0);
        let l = s - rng.random_range(0.5..3.0);
        let cfg = RiskySafeConfig::continuous(
            h,
            l,
            s,
            p0,
            rng.random_range(0.5..2.0),
            rng.random_range(0.5..3.0),
            rng.random_range(2..=5),
        );
        cfg.validate()?;
        let n = cfg.n_users;
        let eq = solve_symmetric_equilibrium(&cfg, DEFAULT_EQUILIBRIUM_GRID)?;
        let fine = solve_symmetric_equilibrium(&cfg, 2 * DEFAULT_EQUILIBRIUM_GRID - 1)?;
        let k = |p: &Policy| payoff_with_multiplicity(p0, p, &[(p, n - 1)], &cfg, &quad);
        let alpha = k(&eq.policy())?;
        let alpha_fine = k(&fine.policy())?;
        let single = solve_team_optimum(&cfg, 1, &quad)?;
        let err = alpha.error_estimate + (alpha.value - alpha_fine.value).abs() + single.error_estimate;
        let margin = alpha.value - single.value;
        min_margin = min_margin.min(margin + err);
        ok &= margin >= -err;
    }
    Ok((ok, format!("20 configs, min(alpha* - single_opt + error) = {min_margin:.3e}")))
}

fn ramp(a: f64, b: f64) -> Policy {
    Policy::GridFunction(GridFunction::sample(|p| ((p - a) / (b - a)).clamp(0.0, 1.0), 1001))
}

/// Strict and side-information monotonicity on sampled continuous-time policies and three
/// discrete-time policies.
fn c8() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x58);
    let cfg = gap_example();
    let eval = Evaluator::ClosedForm(QuadratureSpec::default());
    let mut cont: Vec<Policy> = (0..5).map(|_| Policy::cutoff(rng.random_range(0.05..0.6))).collect();
    for _ in 0..5 {
        let a = rng.random_range(0.05..0.3);
        cont.push(ramp(a, a + rng.random_range(0.05..0.4)));
    }
    let mut ok = true;
    let mut held = 0;
    for p in &cont {
        let strict = check_strict_im(p, &cfg, &eval, 0.01)?;
        let side = check_side_im(p, &cont, &cfg, &[1], &eval, 0.01)?;
        let pass = strict.verdict == Verdict::Holds && side.verdict == Verdict::Holds;
        held += pass as usize;
        ok &= pass;
    }
    let cfg = reference_config(2);
    let eval = Evaluator::MonteCarlo {
        replications: 1_000_000,
        seed: 8,
    };
    let disc = [
        Policy::ThompsonSampling,
        Policy::epsilon_thompson(0.1),
        Policy::epsilon_thompson(0.3),
    ];
    let mut held_mc = 0;
    for p in &disc {
        let strict = check_strict_im(p, &cfg, &eval, 0.01)?;
        let side = check_side_im(p, &disc, &cfg, &[1], &eval, 0.01)?;
        let pass = strict.verdict == Verdict::Holds && side.verdict == Verdict::Holds;
        held_mc += pass as usize;
        ok &= pass;
    }
    Ok((ok, format!("closed form {held}/10 hold, Monte Carlo {held_mc}/3 hold")))
}

/// An extra observation strictly helps a lone user.
fn c9() -> Outcome {
    let cfg = reference_config(1);
    let v = check_increased_informativeness(&cfg, &Policy::ThompsonSampling, cfg.p0, 1_000_000, 91, 0.01)?;
    let e = &v.evidence[0];
    Ok((
        v.verdict == Verdict::Holds && !v.degenerate,
        format!("gain {:.4} with radius {:.1e}", e.difference, e.radius),
    ))
}

/// The total-variation envelope holds along a 101-point sweep.
fn c10() -> Outcome {
    let cfg = reference_config(2);
    let v = check_utility_richness(
        &PolicyFamily::EpsilonThompson,
        &cfg,
        &Evaluator::MonteCarlo {
            replications: 100_000,
            seed: 10,
        },
        101,
        0.01,
    )?;
    Ok((
        v.envelope_applicable && v.continuity_envelope_ok,
        format!(
            "max excess over envelope {:.3e}, R(N) range [{:.4}, {:.4}]",
            v.max_envelope_excess, v.range.0, v.range.1
        ),
    ))
}

/// Reproducibility of criterion 1 through the command line.
fn c11() -> Outcome {
    let scenario = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/table1_single_user.toml");
    let tmp = tempfile::tempdir().map_err(Error::from)?;
    let mut csvs = Vec::new();
    for threads in ["1", "4"] {
        let dir = tmp.path().join(format!("t{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_blab"))
            .arg("run")
            .arg(&scenario)
            .args(["--threads", threads, "--format", "csv", "--out-dir"])
            .arg(&dir)
            .output()
            .map_err(Error::from)?;
        if !status.status.success() {
            return Ok((false, format!("blab exited with {}", status.status)));
        }
        csvs.push(std::fs::read(dir.join("results.csv")).map_err(Error::from)?);
    }
    Ok((
        csvs[0] == csvs[1],
        format!("{} bytes, threads 1 vs 4 identical: {}", csvs[0].len(), csvs[0] == csvs[1]),
    ))
}

fn report(id: &str, title: &str, outcome: Outcome, secs: f64) -> bool {
    let (pass, detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    let line = format!(
        "[{}] criterion {id}: {title} ({secs:.1} s) {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout();
    out.write_all(line.as_bytes()).ok();
    out.flush().ok();
    pass
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |id: &str| filter.is_empty() || filter.iter().any(|f| f == id);
    let mut all = true;
    let single: [(&str, &str, fn() -> Outcome); 9] = [
        ("1", "single-user alignment on a 5-policy grid", c1),
        ("2", "brute force matches herd characterization", c2),
        ("5", "closed form vs diffusion oracle", c5),
        ("6", "equilibrium gap and free riding", c6),
        ("7", "alpha* above single-user optimum", c7),
        ("8", "strict and side information monotonicity", c8),
        ("9", "increased informativeness", c9),
        ("10", "total-variation envelope", c10),
        ("11", "byte-identical CSV across thread counts", c11),
    ];
    for (id, title, f) in single {
        if id == "5" && (wanted("3") || wanted("4")) {
            let t = Instant::now();
            match c3_c4() {
                Ok([r3, r4]) => {
                    let secs = t.elapsed().as_secs_f64();
                    all &= report("3", "realizability of 11 quality targets", Ok(r3), secs);
                    all &= report("4", "quality bracket of grid equilibria", Ok(r4), secs);
                }
                Err(e) => {
                    let secs = t.elapsed().as_secs_f64();
                    all &= report("3", "realizability of 11 quality targets", Err(e.clone()), secs);
                    all &= report("4", "quality bracket of grid equilibria", Err(e), secs);
                }
            }
        }
        if wanted(id) {
            let t = Instant::now();
            let r = f();
            all &= report(id, title, r, t.elapsed().as_secs_f64());
        }
    }
    if !all {
        std::process::exit(1);
    }
}
