//! Stationary policies: maps from the posterior to the probability of
//! recommending the risky arm.

use serde::{Deserialize, Serialize};

use crate::bandit::{InformationState, RiskySafeConfig};
use crate::error::{Error, Result};

/// Default knot count for sampled grid representations.
pub const DEFAULT_GRID_KNOTS: usize = 1001;

/// Values on a uniform grid over `[0, 1]`, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let g = GridFunction { values };
        g.validate()?;
        Ok(g)
    }

    pub fn sample(f: impl Fn(f64) -> f64, knots: usize) -> Self {
        let knots = knots.max(2);
        let step = 1.0 / (knots - 1) as f64;
        GridFunction {
            values: (0..knots).map(|i| f(i as f64 * step).clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidConfig("grid policy has an empty grid".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidConfig(format!(
                "grid policy value {v} outside [0, 1]"
            )));
        }
        Ok(())
    }

    pub fn knots(&self) -> usize {
        self.values.len()
    }

    pub fn spacing(&self) -> f64 {
        if self.values.len() < 2 {
            1.0
        } else {
            1.0 / (self.values.len() - 1) as f64
        }
    }

    pub fn knot(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    pub fn eval(&self, p: f64) -> f64 {
        match self.values.len() {
            0 => 0.0,
            1 => self.values[0],
            n => {
                let x = p.clamp(0.0, 1.0) * (n - 1) as f64;
                let i = (x.floor() as usize).min(n - 2);
                let w = x - i as f64;
                self.values[i] * (1.0 - w) + self.values[i + 1] * w
            }
        }
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        if self.values.len() == other.values.len() {
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        } else {
            let n = self.values.len().max(other.values.len()).max(2);
            (0..n)
                .map(|i| {
                    let p = i as f64 / (n - 1) as f64;
                    (self.eval(p) - other.eval(p)).abs()
                })
                .fold(0.0, f64::max)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Policy {
    /// `f(p) = p`.
    ThompsonSampling,
    /// Risky exactly when its myopic mean `p h + (1-p) l` is at least `s`.
    Greedy { h: f64, l: f64, s: f64 },
    /// `f(p) = eps + (1 - eps) p`.
    EpsilonThompson { epsilon: f64 },
    /// Risky iff `p >= c`.
    Cutoff { c: f64 },
    /// With probability `epsilon` an arm is chosen uniformly at random.
    UniformMixture { base: Box<Policy>, epsilon: f64 },
    /// Convex combination `(1 - eps) base + eps * explore`.
    Mixture {
        base: Box<Policy>,
        epsilon: f64,
        explore: f64,
    },
    GridFunction(GridFunction),
}

impl Policy {
    pub fn greedy(config: &RiskySafeConfig) -> Self {
        Policy::Greedy {
            h: config.h,
            l: config.l,
            s: config.s,
        }
    }

    pub fn cutoff(c: f64) -> Self {
        Policy::Cutoff { c }
    }

    pub fn epsilon_thompson(epsilon: f64) -> Self {
        Policy::EpsilonThompson { epsilon }
    }

    /// A policy that never recommends the risky arm.
    pub fn always_safe() -> Self {
        Policy::Cutoff { c: f64::INFINITY }
    }

    /// Probability of recommending the risky arm at posterior `p`.
    ///
    /// Assumes the policy has passed [`Policy::validate`].
    pub fn prob(&self, p: f64) -> f64 {
        match self {
            Policy::ThompsonSampling => p,
            Policy::Greedy { h, l, s } => {
                if p * h + (1.0 - p) * l >= *s {
                    1.0
                } else {
                    0.0
                }
            }
            Policy::EpsilonThompson { epsilon } => epsilon + (1.0 - epsilon) * p,
            Policy::Cutoff { c } => {
                if p >= *c {
                    1.0
                } else {
                    0.0
                }
            }
            Policy::UniformMixture { base, epsilon } => {
                (1.0 - epsilon) * base.prob(p) + 0.5 * epsilon
            }
            Policy::Mixture {
                base,
                epsilon,
                explore,
            } => (1.0 - epsilon) * base.prob(p) + epsilon * explore,
            Policy::GridFunction(g) => g.eval(p),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} = {v} outside [0, 1]")))
            }
        };
        match self {
            Policy::ThompsonSampling => Ok(()),
            Policy::Greedy { h, l, s } => {
                if [h, l, s].iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig("greedy rewards must be finite".into()))
                }
            }
            Policy::EpsilonThompson { epsilon } => unit("epsilon", *epsilon),
            Policy::Cutoff { c } => {
                if c.is_nan() {
                    Err(Error::InvalidConfig("cutoff must not be NaN".into()))
                } else {
                    Ok(())
                }
            }
            Policy::UniformMixture { base, epsilon } => {
                unit("epsilon", *epsilon)?;
                base.validate()
            }
            Policy::Mixture {
                base,
                epsilon,
                explore,
            } => {
                unit("epsilon", *epsilon)?;
                unit("explore", *explore)?;
                base.validate()
            }
            Policy::GridFunction(g) => g.validate(),
        }
    }

    /// Jump discontinuities of `f` inside `(0, 1)`.
    pub fn discontinuities(&self) -> Vec<f64> {
        let inside = |x: f64| x > 0.0 && x < 1.0;
        match self {
            Policy::Cutoff { c } if inside(*c) => vec![*c],
            Policy::Greedy { h, l, s } => {
                let t = (s - l) / (h - l);
                if inside(t) {
                    vec![t]
                } else {
                    vec![]
                }
            }
            Policy::UniformMixture { base, .. } | Policy::Mixture { base, .. } => {
                base.discontinuities()
            }
            _ => vec![],
        }
    }

    /// Points where `f` is not smooth: jumps plus interpolation knots.
    pub fn nonsmooth_points(&self) -> Vec<f64> {
        match self {
            Policy::GridFunction(g) if g.knots() > 2 => {
                (1..g.knots() - 1).map(|i| g.knot(i)).collect()
            }
            Policy::UniformMixture { base, .. } | Policy::Mixture { base, .. } => {
                base.nonsmooth_points()
            }
            _ => self.discontinuities(),
        }
    }

    /// Membership in the class with `f(0) = 0`, `f(1) = 1`, continuous at both ends.
    pub fn is_endpoint_continuous(&self) -> bool {
        const EDGE: f64 = 1e-9;
        const SLACK: f64 = 1e-6;
        let f0 = self.prob(0.0);
        let f1 = self.prob(1.0);
        let near0 = self.prob(EDGE);
        let near1 = self.prob(1.0 - EDGE);
        f0 == 0.0 && f1 == 1.0 && near0 <= SLACK && near1 >= 1.0 - SLACK
    }

    pub fn to_grid(&self, knots: usize) -> GridFunction {
        GridFunction::sample(|p| self.prob(p), knots)
    }

    /// Short human-readable identifier used in reports.
    pub fn label(&self) -> String {
        match self {
            Policy::ThompsonSampling => "thompson".into(),
            Policy::Greedy { .. } => "greedy".into(),
            Policy::EpsilonThompson { epsilon } => format!("eps-thompson({epsilon})"),
            Policy::Cutoff { c } => format!("cutoff({c})"),
            Policy::UniformMixture { base, epsilon } => {
                format!("uniform-mixture({}, {epsilon})", base.label())
            }
            Policy::Mixture {
                base,
                epsilon,
                explore,
            } => format!("mixture({}, {epsilon}, {explore})", base.label()),
            Policy::GridFunction(g) => format!("grid[{}]", g.knots()),
        }
    }
}

/// `f(p)` for a validated policy.
pub fn policy_eval(policy: &Policy, state: InformationState) -> Result<f64> {
    policy.validate()?;
    if !(0.0..=1.0).contains(&state.p) {
        return Err(Error::RejectedInput(format!(
            "posterior {} outside [0, 1]",
            state.p
        )));
    }
    Ok(policy.prob(state.p))
}

/// Describes one built-in policy kind for listings.
#[derive(Debug, Clone, Serialize)]
pub struct PolicyKindInfo {
    pub name: &'static str,
    pub config_kind: &'static str,
    pub parameters: &'static [&'static str],
    pub formula: &'static str,
}

pub fn builtin_policy_kinds() -> Vec<PolicyKindInfo> {
    vec![
        PolicyKindInfo {
            name: "ThompsonSampling",
            config_kind: "thompson-sampling",
            parameters: &[],
            formula: "f(p) = p",
        },
        PolicyKindInfo {
            name: "Greedy",
            config_kind: "greedy",
            parameters: &[],
            formula: "f(p) = 1 if p*h + (1-p)*l >= s else 0 (rewards taken from the problem)",
        },
        PolicyKindInfo {
            name: "EpsilonThompson",
            config_kind: "epsilon-thompson",
            parameters: &["epsilon in [0,1]"],
            formula: "f(p) = epsilon + (1-epsilon)*p",
        },
        PolicyKindInfo {
            name: "Cutoff",
            config_kind: "cutoff",
            parameters: &["c (real)"],
            formula: "f(p) = 1 if p >= c else 0",
        },
        PolicyKindInfo {
            name: "UniformMixture",
            config_kind: "uniform-mixture",
            parameters: &["base (policy name)", "epsilon in [0,1]"],
            formula: "f(p) = (1-epsilon)*base(p) + epsilon/2",
        },
        PolicyKindInfo {
            name: "Mixture",
            config_kind: "mixture",
            parameters: &["base (policy name)", "epsilon in [0,1]", "explore in [0,1]"],
            formula: "f(p) = (1-epsilon)*base(p) + epsilon*explore",
        },
        PolicyKindInfo {
            name: "GridFunction",
            config_kind: "grid-function",
            parameters: &["values (list in [0,1], uniform knots on [0,1])"],
            formula: "linear interpolation of the knot values",
        },
    ]
}

/// A one-parameter policy family indexed by `theta` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum PolicyFamily {
    /// `EpsilonThompson { epsilon: theta }`.
    EpsilonThompson,
    /// `UniformMixture { base, epsilon: theta }`.
    UniformMixture { base: Box<Policy> },
    /// `Mixture { base, epsilon: theta, explore }`.
    Mixture { base: Box<Policy>, explore: f64 },
    /// `Cutoff { c: theta }`.
    Cutoff,
    /// The same policy for every `theta`.
    Constant { policy: Box<Policy> },
}

impl PolicyFamily {
    pub fn at(&self, theta: f64) -> Policy {
        match self {
            PolicyFamily::EpsilonThompson => Policy::EpsilonThompson { epsilon: theta },
            PolicyFamily::UniformMixture { base } => Policy::UniformMixture {
                base: base.clone(),
                epsilon: theta,
            },
            PolicyFamily::Mixture { base, explore } => Policy::Mixture {
                base: base.clone(),
                epsilon: theta,
                explore: *explore,
            },
            PolicyFamily::Cutoff => Policy::Cutoff { c: theta },
            PolicyFamily::Constant { policy } => (**policy).clone(),
        }
    }

    /// Whether members differ by mixing weight, so that
    /// `|f_a(p) - f_b(p)| <= |theta_a - theta_b|` for every `p`.
    pub fn is_mixture(&self) -> bool {
        !matches!(self, PolicyFamily::Cutoff)
    }

    pub fn label(&self) -> String {
        match self {
            PolicyFamily::EpsilonThompson => "eps-thompson".into(),
            PolicyFamily::UniformMixture { base } => format!("uniform-mixture({})", base.label()),
            PolicyFamily::Mixture { base, explore } => {
                format!("mixture({}, {explore})", base.label())
            }
            PolicyFamily::Cutoff => "cutoff".into(),
            PolicyFamily::Constant { policy } => format!("constant({})", policy.label()),
        }
    }
}
