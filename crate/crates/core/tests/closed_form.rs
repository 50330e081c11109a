use blab_core::closed_form::{branch_gap, payoff_with_multiplicity, KernelConvention, QuadratureSpec};
use blab_core::diffusion::{simulate_diffusion_payoff, DiffusionSpec};
use blab_core::monotonicity::{side_information_gain, Evaluator};
use blab_core::{Policy, RiskySafeConfig};

fn gap_example() -> RiskySafeConfig {
    RiskySafeConfig::continuous(1.0, -2.0, -1.0, 0.5, 1.0, 1.0, 3)
}

fn policies() -> Vec<Policy> {
    vec![
        Policy::ThompsonSampling,
        Policy::epsilon_thompson(0.2),
        Policy::cutoff(0.2),
        Policy::cutoff(0.3),
    ]
}

fn k(cfg: &RiskySafeConfig, f: &Policy, others: usize) -> (f64, f64) {
    let r = payoff_with_multiplicity(cfg.p0, f, &[(f, others)], cfg, &QuadratureSpec::default()).unwrap();
    (r.value, r.error_estimate)
}

#[test]
fn doubling_both_noise_levels_scales_payoff_by_four() {
    let cfg = gap_example();
    let wide = RiskySafeConfig { sigma: 2.0, sigma_b: 2.0, ..cfg.clone() };
    for f in policies() {
        let (a, ea) = k(&cfg, &f, 1);
        let (b, eb) = k(&wide, &f, 1);
        assert!((b - 4.0 * a).abs() <= 4.0 * ea + eb + 1e-12, "{}: {b} vs 4 * {a}", f.label());
    }
}

#[test]
fn payoff_rises_with_more_experimenters() {
    let cfg = gap_example();
    for f in policies() {
        let vals: Vec<(f64, f64)> = (0..4).map(|n| k(&cfg, &f, n)).collect();
        for w in vals.windows(2) {
            assert!(w[1].0 >= w[0].0 - w[0].1 - w[1].1, "{}: {vals:?}", f.label());
        }
        assert!(vals.iter().all(|v| v.0 <= 0.0));
    }
}

#[test]
fn side_information_never_hurts() {
    let cfg = gap_example();
    let quad = QuadratureSpec::default();
    for f in policies() {
        for adv in policies() {
            let g = side_information_gain(&f, &adv, 2, &cfg, &Evaluator::ClosedForm(quad)).unwrap();
            assert!(g.mean >= -g.half_width, "{} vs {}: {}", f.label(), adv.label(), g.mean);
        }
    }
}

#[test]
fn tighter_quadrature_agrees_within_error() {
    let cfg = gap_example();
    let quad = QuadratureSpec::default();
    let tight = quad.halved().halved();
    for f in policies() {
        let a = payoff_with_multiplicity(0.37, &f, &[(&f, 2)], &cfg, &quad).unwrap();
        let b = payoff_with_multiplicity(0.37, &f, &[(&f, 2)], &cfg, &tight).unwrap();
        assert!((a.value - b.value).abs() <= a.error_estimate + b.error_estimate);
        assert!(b.error_estimate <= a.error_estimate * 1.01);
    }
}

#[test]
fn green_kernel_is_continuous_on_the_diagonal() {
    let cfg = gap_example();
    for p in [0.1, 0.5, 0.8] {
        assert!(branch_gap(p, &cfg, KernelConvention::Green).abs() < 1e-12);
        assert!(branch_gap(p, &cfg, KernelConvention::Printed).abs() > 1e-3);
    }
}

#[test]
fn certain_prior_has_zero_payoff() {
    let cfg = gap_example();
    for p0 in [0.0, 1.0] {
        let r = payoff_with_multiplicity(p0, &Policy::ThompsonSampling, &[], &cfg, &QuadratureSpec::default())
            .unwrap();
        assert_eq!(r.value, 0.0);
    }
}

#[test]
fn diffusion_agrees_with_closed_form() {
    let cfg = gap_example().with_users(2);
    let f = Policy::epsilon_thompson(0.3);
    let exact = payoff_with_multiplicity(cfg.p0, &f, &[(&f, 1)], &cfg, &QuadratureSpec::default()).unwrap();
    let spec = DiffusionSpec {
        paths: 20_000,
        seed: 11,
        ..DiffusionSpec::default()
    };
    let sim = simulate_diffusion_payoff(cfg.p0, &f, &[(&f, 1)], &cfg, &spec).unwrap();
    let se = sim.estimate.std_error();
    assert_eq!(sim.truncated_paths, 0);
    assert!(
        (sim.estimate.mean - exact.value).abs() < 4.0 * se + exact.error_estimate,
        "{} vs {} (se {se})",
        sim.estimate.mean,
        exact.value
    );
}
