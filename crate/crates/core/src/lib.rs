//! Numerical laboratory for competing bandit platforms.
//!
//! Two platforms each commit to a bandit policy for a risky–safe arm
//! problem; users then pick a platform and the platforms learn from their
//! own users (separate data) or from everyone (shared data). The crate
//! simulates that market, evaluates reward curves exactly where a closed
//! form exists, enumerates user and platform equilibria, and solves the
//! shared-data strategic-experimentation game.

pub mod bandit;
pub mod error;
pub mod mc;
pub mod policy;
pub mod rng;
pub mod sim;

pub use bandit::{posterior_update, sample_reward, Arm, InformationState, RiskySafeConfig, TimeMode, Truth};
pub use error::{Error, Result};
pub use mc::Estimate;
pub use policy::{policy_eval, GridFunction, Policy, PolicyFamily};
pub use sim::{
    estimate_reward_curve, estimate_utility, run_episode, DataMode, RewardCurve, UserProfile,
    UtilityEstimate,
};
pub mod closed_form;
pub mod diffusion;
pub mod quadrature;
pub mod strategic;
pub mod equilibrium;
pub mod monotonicity;
pub mod scenario;
pub mod report;
pub mod experiments;
