//! Exact payoffs in the undiscounted continuous-time game.
//!
//! With `N` players using experimentation rates `f_1..f_N` on one shared
//! posterior, player 1's payoff in excess of the full-information payoff is
//!
//! ```text
//! K(p) = ∫ G(p, q) · [(1 - f1(q)) s + R(q) f1(q) - F(q)] / [k_b + Σ f_i(q)] dq
//! ```
//!
//! with `R(q) = q h + (1 - q) l`, `F(q) = q h + (1 - q) s` and
//! `k_b = σ² / σ_b²`. The integrand is bounded near `q ∈ {0, 1}` for
//! policies with `f(0) = 0` and `f(1) = 1`; the excluded end strips of
//! width `δ` are charged to the error estimate.

use serde::{Deserialize, Serialize};

use crate::bandit::{RiskySafeConfig, TimeMode};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::quadrature::integrate;
use crate::sim::RewardCurve;

/// Which formula to use for the kernel branch with `p >= q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelConvention {
    /// `σ²(1-p) / ((h-l)² q (1-q)²)`, half of the Green's-function value.
    Printed,
    /// `2σ²(1-p) / ((h-l)² q (1-q)²)`: the Green's function of
    /// `½ D Φ K'' = -u` with `K(0) = K(1) = 0`, continuous at `p = q`.
    Green,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    pub endpoint_exclusion: f64,
    pub convention: KernelConvention,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_subdivisions: 50_000,
            endpoint_exclusion: 1e-6,
            // Selected by the diffusion Monte-Carlo comparison.
            convention: KernelConvention::Green,
        }
    }
}

impl QuadratureSpec {
    pub fn with_convention(self, convention: KernelConvention) -> Self {
        QuadratureSpec { convention, ..self }
    }

    pub fn halved(self) -> Self {
        QuadratureSpec {
            abs_tol: self.abs_tol / 2.0,
            rel_tol: self.rel_tol / 2.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidConfig("quadrature tolerances must be positive".into()));
        }
        if !(self.endpoint_exclusion > 0.0 && self.endpoint_exclusion <= 1e-3) {
            return Err(Error::InvalidConfig(
                "endpoint exclusion must lie in (0, 1e-3]".into(),
            ));
        }
        Ok(())
    }
}

/// Both kernel branches at `(p, q)` and the one selected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: f64,
    /// `p <= q` branch.
    pub lower_branch: f64,
    /// `p >= q` branch, half-weight form.
    pub upper_branch: f64,
    /// `lower_branch - upper_branch` when `p == q`, else 0.
    pub branch_gap: f64,
}

fn kernel_scale(cfg: &RiskySafeConfig) -> f64 {
    cfg.sigma * cfg.sigma / ((cfg.h - cfg.l) * (cfg.h - cfg.l))
}

fn lower_branch(p: f64, q: f64, scale: f64) -> f64 {
    2.0 * scale * p / (q * q * (1.0 - q))
}

fn upper_branch(p: f64, q: f64, scale: f64, convention: KernelConvention) -> f64 {
    let factor = match convention {
        KernelConvention::Printed => 1.0,
        KernelConvention::Green => 2.0,
    };
    factor * scale * (1.0 - p) / (q * (1.0 - q) * (1.0 - q))
}

/// The kernel with the half-weight upper branch; at `p == q` the `p >= q` branch is used
/// and the discontinuity is reported.
pub fn kernel_g(p: f64, q: f64, config: &RiskySafeConfig) -> Result<KernelValue> {
    if q <= 0.0 || q >= 1.0 || q.is_nan() {
        return Err(Error::Singularity { q });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::RejectedInput(format!("posterior {p} outside [0, 1]")));
    }
    let scale = kernel_scale(config);
    let lower = lower_branch(p, q, scale);
    let upper = upper_branch(p, q, scale, KernelConvention::Printed);
    let (value, gap) = if p < q {
        (lower, 0.0)
    } else if p > q {
        (upper, 0.0)
    } else {
        (upper, lower - upper)
    };
    Ok(KernelValue {
        value,
        lower_branch: lower,
        upper_branch: upper,
        branch_gap: gap,
    })
}

/// Kernel under a chosen convention, without argument checks.
pub fn kernel(p: f64, q: f64, config: &RiskySafeConfig, convention: KernelConvention) -> f64 {
    let scale = kernel_scale(config);
    if p < q {
        lower_branch(p, q, scale)
    } else {
        upper_branch(p, q, scale, convention)
    }
}

/// Jump of the kernel across `q = p` under `convention`.
pub fn branch_gap(p: f64, config: &RiskySafeConfig, convention: KernelConvention) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    let scale = kernel_scale(config);
    lower_branch(p, p, scale) - upper_branch(p, p, scale, convention)
}

/// Posterior variance rate per unit of experimentation, `(p(1-p)(h-l)/σ)²`.
pub fn phi(p: f64, config: &RiskySafeConfig) -> f64 {
    (p * (1.0 - p) * (config.h - config.l) / config.sigma).powi(2)
}

/// Instantaneous payoff of experimenting at rate `f` minus the
/// full-information payoff, at posterior `q`.
pub fn excess_flow(q: f64, f: f64, config: &RiskySafeConfig) -> f64 {
    (1.0 - f) * config.s + config.risky_mean(q) * f - config.full_information_payoff(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffResult {
    pub value: f64,
    pub error_estimate: f64,
    pub branch_gap: f64,
}

fn require_continuous(config: &RiskySafeConfig) -> Result<()> {
    if config.time_mode != TimeMode::ContinuousUndiscounted {
        return Err(Error::UnsupportedMode(
            "closed-form payoffs need the continuous-undiscounted mode".into(),
        ));
    }
    config.validate()
}

/// `K(p0; f1, others...)` where `others` lists each opponent policy with its
/// multiplicity.
pub fn payoff_with_multiplicity(
    p0: f64,
    f1: &Policy,
    others: &[(&Policy, usize)],
    config: &RiskySafeConfig,
    quad: &QuadratureSpec,
) -> Result<PayoffResult> {
    require_continuous(config)?;
    quad.validate()?;
    f1.validate()?;
    for (p, _) in others {
        p.validate()?;
    }
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::RejectedInput(format!("prior {p0} outside [0, 1]")));
    }
    if p0 == 0.0 || p0 == 1.0 {
        return Ok(PayoffResult {
            value: 0.0,
            error_estimate: 0.0,
            branch_gap: 0.0,
        });
    }
    let k_b = config.background_ratio();
    let rate = |q: f64| -> f64 {
        f1.prob(q)
            + others
                .iter()
                .map(|(p, m)| *m as f64 * p.prob(q))
                .sum::<f64>()
    };
    if k_b == 0.0 {
        let probes = 4001;
        let mut prev_zero = false;
        for i in 1..probes {
            let q = i as f64 / probes as f64;
            let zero = rate(q) == 0.0;
            if zero && prev_zero {
                return Err(Error::IllPosed(format!(
                    "no background information and no experimentation near q = {q:.4}"
                )));
            }
            prev_zero = zero;
        }
    }

    let integrand = |q: f64| -> f64 {
        let f = f1.prob(q);
        kernel(p0, q, config, quad.convention) * excess_flow(q, f, config) / (k_b + rate(q))
    };

    let delta = quad.endpoint_exclusion;
    let mut breaks = vec![delta, 1.0 - delta];
    if p0 > delta && p0 < 1.0 - delta {
        breaks.push(p0);
    }
    for policy in std::iter::once(f1).chain(others.iter().map(|(p, _)| *p)) {
        breaks.extend(
            policy
                .nonsmooth_points()
                .into_iter()
                .filter(|&x| x > delta && x < 1.0 - delta),
        );
    }
    let tail = delta * (integrand(delta).abs() + integrand(1.0 - delta).abs());
    if !tail.is_finite() {
        return Err(Error::IllPosed("integrand is not finite near the endpoints".into()));
    }
    let result = integrate(
        integrand,
        &breaks,
        quad.abs_tol,
        quad.rel_tol,
        quad.max_subdivisions,
    );
    match result {
        Ok(r) if r.value.is_finite() => Ok(PayoffResult {
            value: r.value,
            error_estimate: r.error + tail,
            branch_gap: branch_gap(p0, config, quad.convention),
        }),
        Ok(_) => Err(Error::IllPosed("integral is not finite".into())),
        Err(Error::Convergence { best, error }) => Err(Error::Convergence {
            best,
            error: error + tail,
        }),
        Err(e) => Err(e),
    }
}

/// `K(p0; f1, f_others...)`.
pub fn payoff_undiscounted(
    p0: f64,
    f1: &Policy,
    f_others: &[Policy],
    config: &RiskySafeConfig,
    quad: &QuadratureSpec,
) -> Result<PayoffResult> {
    let others: Vec<(&Policy, usize)> = f_others.iter().map(|p| (p, 1)).collect();
    payoff_with_multiplicity(p0, f1, &others, config, quad)
}

/// `R_f(n) = K(p0; f, ..., f)` with `n` copies, for `n = 1..N`.
pub fn reward_curve_closed_form(
    f: &Policy,
    config: &RiskySafeConfig,
    quad: &QuadratureSpec,
) -> Result<RewardCurve> {
    let mut values = Vec::with_capacity(config.n_users);
    let mut errors = Vec::with_capacity(config.n_users);
    for n in 1..=config.n_users {
        let r = payoff_with_multiplicity(config.p0, f, &[(f, n - 1)], config, quad)?;
        values.push(r.value);
        errors.push(r.error_estimate);
    }
    let mut curve = RewardCurve {
        policy: f.label(),
        values,
        half_widths: errors,
        exact: true,
        shape: None,
    };
    curve.tag_shape();
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gap_example() -> RiskySafeConfig {
        RiskySafeConfig::continuous(1.0, -2.0, -1.0, 0.5, 1.0, 1.0, 2)
    }

    #[test]
    fn kernel_vanishes_at_certain_priors() {
        let cfg = gap_example();
        assert_eq!(kernel_g(0.0, 0.5, &cfg).unwrap().value, 0.0);
        assert_eq!(kernel_g(1.0, 0.5, &cfg).unwrap().value, 0.0);
    }

    #[test]
    fn kernel_branches_at_diagonal() {
        // sigma = 1, h - l = 1
        let cfg = RiskySafeConfig::continuous(1.0, 0.0, 0.5, 0.0, 1.0, 1.0, 1);
        let k = kernel_g(0.5, 0.5, &cfg).unwrap();
        assert!((k.lower_branch - 8.0).abs() < 1e-12);
        assert!((k.upper_branch - 4.0).abs() < 1e-12);
        assert_eq!(k.value, k.upper_branch);
        assert!((k.branch_gap - 4.0).abs() < 1e-12);
        assert_eq!(branch_gap(0.5, &cfg, KernelConvention::Green), 0.0);
    }

    #[test]
    fn kernel_rejects_singular_q() {
        let cfg = gap_example();
        assert!(matches!(kernel_g(0.3, 0.0, &cfg), Err(Error::Singularity { .. })));
        assert!(matches!(kernel_g(0.3, 1.0, &cfg), Err(Error::Singularity { .. })));
    }

    #[test]
    fn payoff_vanishes_at_certain_priors() {
        let cfg = gap_example();
        let quad = QuadratureSpec::default();
        for p in [0.0, 1.0] {
            let r = payoff_undiscounted(p, &Policy::ThompsonSampling, &[Policy::cutoff(0.3)], &cfg, &quad)
                .unwrap();
            assert_eq!(r.value, 0.0);
        }
    }

    #[test]
    fn payoff_is_nonpositive() {
        let cfg = gap_example();
        let quad = QuadratureSpec::default();
        for c in [0.05, 0.2, 1.0 / 3.0, 0.6, 0.95] {
            let r = payoff_undiscounted(0.5, &Policy::cutoff(c), &[Policy::ThompsonSampling], &cfg, &quad)
                .unwrap();
            assert!(r.value <= 0.0, "cutoff {c}: {}", r.value);
        }
    }

    #[test]
    fn no_information_at_all_is_ill_posed() {
        let cfg = RiskySafeConfig::continuous(1.0, -2.0, -1.0, 0.5, 1.0, f64::INFINITY, 1);
        let err = payoff_undiscounted(0.5, &Policy::cutoff(0.4), &[], &cfg, &QuadratureSpec::default())
            .unwrap_err();
        assert!(matches!(err, Error::IllPosed(_)));
    }

    #[test]
    fn discrete_mode_is_rejected() {
        let cfg = RiskySafeConfig::discrete(1.0, 0.0, 0.6, 0.5, 1.0, 2, 4, 0.9);
        let err = payoff_undiscounted(0.5, &Policy::ThompsonSampling, &[], &cfg, &QuadratureSpec::default())
            .unwrap_err();
        assert!(matches!(err, Error::UnsupportedMode(_)));
    }

    #[test]
    fn curve_first_entry_is_solo_payoff() {
        let cfg = gap_example();
        let quad = QuadratureSpec::default();
        let f = Policy::ThompsonSampling;
        let curve = reward_curve_closed_form(&f, &cfg, &quad).unwrap();
        let solo = payoff_undiscounted(0.5, &f, &[], &cfg, &quad).unwrap();
        assert_eq!(curve.at(1), solo.value);
    }
}
