"""Smoke test for the Python extension.

Build and place the module next to this file first:

    cargo build --release -p blab-py
    cp target/release/libblab.so python/blab.so

then run ``python3 python/smoke_test.py``.
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import blab  # noqa: E402

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def check(cond, what):
    if not cond:
        raise SystemExit(f"FAILED: {what}")
    print(f"ok  {what}")


def main():
    kinds = blab.policy_kinds()
    check({"ThompsonSampling", "Greedy", "Cutoff", "GridFunction"} <= set(kinds), "policy kinds listed")

    cfg = blab.Config.discrete(1.0, 0.0, 0.6, 0.5, 1.0, 2, 4, beta=0.9)
    ts = blab.Policy.thompson_sampling()
    check(ts.prob(0.3) == 0.3, "Thompson sampling recommends risky with probability p")
    check(blab.Policy.epsilon_thompson(0.2).prob(0.5) == 0.2 + 0.8 * 0.5, "epsilon-Thompson formula")

    values, half_widths = blab.reward_curve(cfg, ts, replications=20000, seed=1)
    check(len(values) == 2 and values[1] > values[0], f"reward curve increases: {values}")
    check(all(h > 0 for h in half_widths), "Monte-Carlo half-widths reported")
    again, _ = blab.reward_curve(cfg, ts, replications=20000, seed=1)
    check(values == again, "same seed, same curve")

    try:
        blab.Config.discrete(1.0, 0.7, 0.6, 0.5, 1.0, 2, 4)
    except ValueError as e:
        check("l < s < h" in str(e), "invalid ordering rejected")
    else:
        raise SystemExit("FAILED: invalid ordering accepted")

    thm = blab.Config.continuous(1.0, -2.0, -1.0, 0.5, 1.0, 1.0, 2)
    f_star, zero_end, one_start = blab.symmetric_equilibrium(thm)
    check(abs(zero_end - 0.2) < 1e-12 and abs(one_start - 0.25) < 1e-12, "equilibrium regions")
    check(all(a <= b for a, b in zip(f_star, f_star[1:])), "equilibrium policy is monotone")

    gap = blab.alpha_star_report(thm)
    check(gap["single_opt"] < gap["alpha_star"] < gap["team_opt"], f"alpha* bracketed: {gap['alpha_star']:.6f}")

    eq = blab.user_equilibria(thm, blab.Policy.cutoff(0.2), blab.Policy.cutoff(0.3), tau=1e-6)
    check(eq and all(len(set(p)) == 1 for p in eq), f"herd equilibria {eq}")
    check(blab.check_strict_im(thm, blab.Policy.cutoff(0.2)) == "holds", "strict monotonicity in closed form")

    status, rows = blab.run_scenario(os.path.join(ROOT, "scenarios", "alpha_star.toml"))
    alpha = next(r for r in rows if r["quantity"] == "alpha_star")
    check(status == "ok" and math.isclose(alpha["value"], gap["alpha_star"]), "scenario matches direct call")
    print("all checks passed")


if __name__ == "__main__":
    main()
