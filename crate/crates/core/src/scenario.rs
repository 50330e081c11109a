//! Scenario files.
//!
//! A scenario is a TOML document (or the same structure in JSON, selected
//! by a `.json` extension) with the tables `problem`, `policies`,
//! `experiment`, `seeds` and `output`:
//!
//! ```toml
//! [problem]
//! h = 1.0
//! l = 0.0
//! s = 0.6
//! p0 = 0.5
//! sigma = 1.0
//! n_users = 2
//! horizon = 4
//! beta = 0.9
//!
//! [[policies]]
//! name = "ts"
//! kind = "thompson-sampling"
//!
//! [[policies]]
//! name = "explore"
//! kind = "epsilon-thompson"
//! epsilon = 0.1
//!
//! [experiment]
//! kind = "reward-curve"
//!
//! [seeds]
//! master = 7
//! replications = 100000
//!
//! [output]
//! dir = "results"
//! format = "both"
//! ```
//!
//! Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bandit::{RiskySafeConfig, TimeMode};
use crate::error::{Error, Result};
use crate::policy::{GridFunction, Policy, PolicyFamily};
use crate::sim::{DataMode, DEFAULT_REPLICATIONS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub policies: Vec<PolicyEntry>,
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub seeds: SeedConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub h: f64,
    pub l: f64,
    pub s: f64,
    pub p0: f64,
    pub sigma: f64,
    /// Omitted means no background information.
    #[serde(default)]
    pub sigma_b: Option<f64>,
    pub n_users: usize,
    #[serde(default)]
    pub horizon: Option<u32>,
    /// Defaults to 1 in discrete time and 0 in continuous time.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_time_mode")]
    pub time_mode: TimeMode,
    #[serde(default)]
    pub background_at_t0: bool,
}

fn default_time_mode() -> TimeMode {
    TimeMode::Discrete
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    ThompsonSampling,
    Greedy,
    EpsilonThompson,
    Cutoff,
    UniformMixture,
    Mixture,
    GridFunction,
}

/// A named policy. Only the parameters of its kind may be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    pub name: String,
    pub kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Name of another policy entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore: Option<f64>,
    /// Knot values on a uniform grid over `[0, 1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    RewardCurve,
    UserEq,
    PlatformEq,
    SharedEq,
    Monotonicity,
    Richness,
    Table1,
    AlphaStar,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::RewardCurve => "reward-curve",
            ExperimentKind::UserEq => "user-eq",
            ExperimentKind::PlatformEq => "platform-eq",
            ExperimentKind::SharedEq => "shared-eq",
            ExperimentKind::Monotonicity => "monotonicity",
            ExperimentKind::Richness => "richness",
            ExperimentKind::Table1 => "table1",
            ExperimentKind::AlphaStar => "alpha-star",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    EpsilonThompson,
    UniformMixture,
    Mixture,
    Cutoff,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub kind: FamilyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Platform 1 policy name (user-eq).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<String>,
    /// Platform 2 policy name (user-eq).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<DataMode>,
    /// Equilibrium tolerance; derived from the oracle radii when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Significance level of monotonicity checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyConfig>,
    /// Parameter sweep size for families.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    /// Number of target quality levels (table1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<usize>,
    /// Adversary policy names for side-information checks; all policies
    /// when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversaries: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    #[serde(default)]
    pub master: u64,
    #[serde(default = "default_replications")]
    pub replications: u64,
}

fn default_replications() -> u64 {
    DEFAULT_REPLICATIONS
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig {
            master: 0,
            replications: DEFAULT_REPLICATIONS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    #[default]
    Both,
}

impl OutputFormat {
    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

fn default_dir() -> PathBuf {
    PathBuf::from("results")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            format: OutputFormat::Both,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Reads a scenario, choosing JSON for a `.json` extension and TOML
    /// otherwise.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if is_json {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        };
        parsed.map_err(|e| match e {
            Error::InvalidConfig(msg) => {
                Error::InvalidConfig(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }

    /// Canonical JSON of the configuration.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Canonical JSON with the output settings reset to their defaults.
    pub fn computation_json(&self) -> String {
        ScenarioConfig {
            output: OutputConfig::default(),
            ..self.clone()
        }
        .to_canonical_json()
    }
}

impl ProblemConfig {
    pub fn to_config(&self) -> RiskySafeConfig {
        let beta = self.beta.unwrap_or(match self.time_mode {
            TimeMode::Discrete => 1.0,
            TimeMode::ContinuousUndiscounted => 0.0,
        });
        RiskySafeConfig {
            h: self.h,
            l: self.l,
            s: self.s,
            p0: self.p0,
            sigma: self.sigma,
            sigma_b: self.sigma_b.unwrap_or(f64::INFINITY),
            n_users: self.n_users,
            horizon: self.horizon,
            beta,
            time_mode: self.time_mode,
            background_at_t0: self.background_at_t0,
        }
    }
}

/// A validated scenario with resolved policies.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub problem: RiskySafeConfig,
    pub policies: Vec<(String, Policy)>,
}

impl Scenario {
    pub fn resolve(config: ScenarioConfig) -> Result<Self> {
        let problem = config.problem.to_config();
        problem
            .validate()
            .map_err(|e| Error::InvalidConfig(format!("problem: {e}")))?;
        let mut policies: Vec<(String, Policy)> = Vec::new();
        for entry in &config.policies {
            if policies.iter().any(|(n, _)| *n == entry.name) {
                return Err(Error::InvalidConfig(format!(
                    "policies: duplicate name '{}'",
                    entry.name
                )));
            }
            let policy = resolve_policy(entry, &problem, &policies)?;
            policies.push((entry.name.clone(), policy));
        }
        if config.seeds.replications < 2 {
            return Err(Error::InvalidConfig("seeds.replications must be at least 2".into()));
        }
        let scenario = Scenario {
            config,
            problem,
            policies,
        };
        scenario.check_experiment()?;
        Ok(scenario)
    }

    pub fn experiment(&self) -> &ExperimentConfig {
        &self.config.experiment
    }

    pub fn policy(&self, name: &str) -> Result<&Policy> {
        self.policies
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p)
            .ok_or_else(|| Error::InvalidConfig(format!("experiment: unknown policy '{name}'")))
    }

    pub fn family(&self) -> Result<PolicyFamily> {
        let Some(f) = &self.experiment().family else {
            return Ok(PolicyFamily::EpsilonThompson);
        };
        let base = |what: &str| -> Result<Box<Policy>> {
            let name = f.base.as_deref().ok_or_else(|| {
                Error::InvalidConfig(format!("experiment.family: kind '{what}' requires 'base'"))
            })?;
            Ok(Box::new(self.policy(name)?.clone()))
        };
        Ok(match f.kind {
            FamilyKind::EpsilonThompson => PolicyFamily::EpsilonThompson,
            FamilyKind::Cutoff => PolicyFamily::Cutoff,
            FamilyKind::UniformMixture => PolicyFamily::UniformMixture {
                base: base("uniform-mixture")?,
            },
            FamilyKind::Constant => PolicyFamily::Constant {
                policy: base("constant")?,
            },
            FamilyKind::Mixture => {
                let explore = f.explore.ok_or_else(|| {
                    Error::InvalidConfig("experiment.family: kind 'mixture' requires 'explore'".into())
                })?;
                if !(0.0..=1.0).contains(&explore) {
                    return Err(Error::InvalidConfig(
                        "experiment.family: explore must lie in [0, 1]".into(),
                    ));
                }
                PolicyFamily::Mixture {
                    base: base("mixture")?,
                    explore,
                }
            }
        })
    }

    fn check_experiment(&self) -> Result<()> {
        let e = self.experiment();
        let continuous = self.problem.time_mode == TimeMode::ContinuousUndiscounted;
        let need = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("experiment ({}): {msg}", e.kind.name())))
            }
        };
        if let Some(tau) = e.tau {
            need(tau >= 0.0, "tau must be nonnegative")?;
        }
        if let Some(level) = e.level {
            need(level > 0.0 && level < 1.0, "level must lie in (0, 1)")?;
        }
        for name in e.a1.iter().chain(&e.a2).chain(e.adversaries.iter().flatten()) {
            self.policy(name)?;
        }
        self.family()?;
        match e.kind {
            ExperimentKind::RewardCurve | ExperimentKind::PlatformEq => {
                need(!self.policies.is_empty(), "needs at least one policy")
            }
            ExperimentKind::UserEq => {
                need(e.a1.is_some() && e.a2.is_some(), "needs 'a1' and 'a2'")?;
                need(self.problem.n_users <= 12, "brute force supports at most 12 users")
            }
            ExperimentKind::SharedEq => need(
                continuous || !self.policies.is_empty(),
                "needs at least one policy in discrete time",
            ),
            ExperimentKind::Monotonicity => {
                need(!self.policies.is_empty(), "needs at least one policy")?;
                need(self.problem.n_users >= 2, "needs n_users >= 2")
            }
            ExperimentKind::Richness => {
                need(e.points.is_none_or(|p| p >= 2), "points must be at least 2")
            }
            ExperimentKind::Table1 => {
                need(
                    self.problem.n_users > 1 || !self.policies.is_empty(),
                    "needs at least one policy when n_users = 1",
                )?;
                need(e.targets.is_none_or(|t| t >= 2), "targets must be at least 2")?;
                need(e.points.is_none_or(|p| p >= 2), "points must be at least 2")?;
                need(self.problem.n_users <= 12, "brute force supports at most 12 users")
            }
            ExperimentKind::AlphaStar => {
                need(continuous, "needs time_mode = \"continuous-undiscounted\"")?;
                need(self.problem.n_users >= 2, "needs n_users >= 2")?;
                need(
                    self.problem.has_background(),
                    "needs background information (finite sigma_b)",
                )
            }
        }
    }
}

fn resolve_policy(
    entry: &PolicyEntry,
    problem: &RiskySafeConfig,
    earlier: &[(String, Policy)],
) -> Result<Policy> {
    let ctx = |msg: String| Error::InvalidConfig(format!("policy '{}': {msg}", entry.name));
    let allowed: &[&str] = match entry.kind {
        PolicyKind::ThompsonSampling | PolicyKind::Greedy => &[],
        PolicyKind::EpsilonThompson => &["epsilon"],
        PolicyKind::Cutoff => &["c"],
        PolicyKind::UniformMixture => &["base", "epsilon"],
        PolicyKind::Mixture => &["base", "epsilon", "explore"],
        PolicyKind::GridFunction => &["values"],
    };
    let present = [
        ("epsilon", entry.epsilon.is_some()),
        ("c", entry.c.is_some()),
        ("base", entry.base.is_some()),
        ("explore", entry.explore.is_some()),
        ("values", entry.values.is_some()),
    ];
    for (field, set) in present {
        if set && !allowed.contains(&field) {
            return Err(ctx(format!("field '{field}' does not apply to this kind")));
        }
    }
    for field in allowed {
        if !present.iter().any(|(f, set)| f == field && *set) {
            return Err(ctx(format!("missing field '{field}'")));
        }
    }
    let base = || -> Result<Box<Policy>> {
        let name = entry.base.as_deref().expect("checked above");
        earlier
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| Box::new(p.clone()))
            .ok_or_else(|| ctx(format!("base '{name}' must name an earlier policy")))
    };
    let policy = match entry.kind {
        PolicyKind::ThompsonSampling => Policy::ThompsonSampling,
        PolicyKind::Greedy => Policy::greedy(problem),
        PolicyKind::EpsilonThompson => Policy::EpsilonThompson {
            epsilon: entry.epsilon.expect("checked above"),
        },
        PolicyKind::Cutoff => Policy::Cutoff {
            c: entry.c.expect("checked above"),
        },
        PolicyKind::UniformMixture => Policy::UniformMixture {
            base: base()?,
            epsilon: entry.epsilon.expect("checked above"),
        },
        PolicyKind::Mixture => Policy::Mixture {
            base: base()?,
            epsilon: entry.epsilon.expect("checked above"),
            explore: entry.explore.expect("checked above"),
        },
        PolicyKind::GridFunction => Policy::GridFunction(
            GridFunction::new(entry.values.clone().expect("checked above"))
                .map_err(|e| ctx(e.to_string()))?,
        ),
    };
    policy.validate().map_err(|e| ctx(e.to_string()))?;
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
[problem]
h = 1.0
l = 0.0
s = 0.6
p0 = 0.5
sigma = 1.0
n_users = 2
horizon = 4
beta = 0.9

[[policies]]
name = "ts"
kind = "thompson-sampling"

[[policies]]
name = "mix"
kind = "uniform-mixture"
base = "ts"
epsilon = 0.2

[experiment]
kind = "reward-curve"
"#;

    #[test]
    fn parses_and_resolves() {
        let cfg = ScenarioConfig::from_toml(BASIC).unwrap();
        let sc = Scenario::resolve(cfg).unwrap();
        assert_eq!(sc.policies.len(), 2);
        assert!(sc.problem.sigma_b.is_infinite());
        assert_eq!(sc.config.seeds.replications, DEFAULT_REPLICATIONS);
    }

    #[test]
    fn json_round_trip() {
        let cfg = ScenarioConfig::from_toml(BASIC).unwrap();
        let back = ScenarioConfig::from_json(&cfg.to_canonical_json()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = BASIC.replace("sigma = 1.0", "sigma = 1.0\nsgima = 2.0");
        let err = ScenarioConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("sgima"), "{err}");
    }

    #[test]
    fn stray_policy_parameter_is_rejected() {
        let text = BASIC.replace("kind = \"thompson-sampling\"", "kind = \"thompson-sampling\"\nc = 0.3");
        let cfg = ScenarioConfig::from_toml(&text).unwrap();
        let err = Scenario::resolve(cfg).unwrap_err().to_string();
        assert!(err.contains("'c'"), "{err}");
    }

    #[test]
    fn ordering_violation_names_invariant() {
        let text = BASIC.replace("l = 0.0", "l = 0.7");
        let err = Scenario::resolve(ScenarioConfig::from_toml(&text).unwrap())
            .unwrap_err()
            .to_string();
        assert!(err.contains("l < s < h"), "{err}");
    }
}
