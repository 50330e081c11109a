use blab_core::equilibrium::{
    platform_equilibrium_check, user_equilibria_brute, user_equilibria_characterized, CurveOracle,
};
use blab_core::sim::RewardCurve;
use blab_core::{DataMode, Policy};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn curve(policy: &Policy, values: Vec<f64>) -> RewardCurve {
    RewardCurve::from_values(policy.label(), values)
}

fn random_curve(rng: &mut StdRng, n: usize, constant: bool) -> Vec<f64> {
    let a = rng.random_range(0.0..1.0);
    if constant {
        return vec![a; n];
    }
    let b = rng.random_range(0.05..1.0);
    let c = rng.random_range(0.1..2.0);
    (1..=n).map(|k| a + b * (1.0 - (-c * k as f64).exp())).collect()
}

#[test]
fn characterization_matches_enumeration() {
    let (p1, p2) = (Policy::epsilon_thompson(0.1), Policy::epsilon_thompson(0.2));
    let mut rng = StdRng::seed_from_u64(21);
    for i in 0..200 {
        let n = 2 + i % 5;
        let (c1, c2) = (i % 7 == 3, i % 11 == 5);
        let r1 = curve(&p1, random_curve(&mut rng, n, c1));
        let r2 = curve(&p2, random_curve(&mut rng, n, c2 && !c1));
        let oracle = CurveOracle::new(vec![r1.clone(), r2.clone()]).unwrap();
        let mut brute = user_equilibria_brute(&p1, &p2, DataMode::Separate, &oracle, 0.0)
            .unwrap()
            .profiles;
        let mut fast = user_equilibria_characterized(&r1, &r2).unwrap().profiles;
        brute.sort_by_key(|p| p.bits());
        fast.sort_by_key(|p| p.bits());
        assert_eq!(brute, fast, "case {i}: {:?} / {:?}", r1.values, r2.values);
    }
}

#[test]
fn dominated_policy_loses_the_platform_game() {
    let (good, bad) = (Policy::ThompsonSampling, Policy::epsilon_thompson(0.9));
    let grid = vec![good.clone(), bad.clone()];
    let oracle = CurveOracle::new(vec![
        curve(&good, vec![2.0, 2.5, 2.8]),
        curve(&bad, vec![1.0, 1.2, 1.3]),
    ])
    .unwrap();
    let out = platform_equilibrium_check(&grid, 1, 1, DataMode::Separate, &oracle, 0.0).unwrap();
    assert!(!out.is_equilibrium);
    let dev = out.best_deviation.unwrap();
    assert_eq!((dev.policy_index, dev.gain), (0, 3));
    let out = platform_equilibrium_check(&grid, 0, 0, DataMode::Separate, &oracle, 0.0).unwrap();
    assert!(out.is_equilibrium);
    assert_eq!((out.v1, out.v2), (0, 0));
}

#[test]
fn unknown_policy_is_rejected() {
    let p = Policy::ThompsonSampling;
    let oracle = CurveOracle::new(vec![curve(&p, vec![1.0, 2.0])]).unwrap();
    assert!(user_equilibria_brute(&p, &Policy::cutoff(0.5), DataMode::Separate, &oracle, 0.0).is_err());
}
