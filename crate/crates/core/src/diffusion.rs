//! Time-discretised simulation of the continuous-time shared posterior.
//!
//! The posterior is a martingale diffusion with instantaneous variance
//! `(k_b + Σ f_i(p)) Φ(p)`. An Euler scheme integrates player 1's excess
//! payoff flow along each path until the posterior is within `boundary`
//! of certainty. This path does not touch the kernel representation and
//! serves as an independent check on it.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::bandit::{RiskySafeConfig, TimeMode};
use crate::closed_form::{excess_flow, phi};
use crate::error::{Error, Result};
use crate::mc::{replicate, Estimate};
use crate::policy::Policy;
use crate::rng::{KeyedStream, Purpose, StreamKey, NO_USER};

/// Coordinates in which the Euler scheme is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffusionScheme {
    /// `dp = sqrt(D Φ(p)) dW` directly on the posterior.
    Posterior,
    /// The same diffusion written for the log-odds `z = ln(p / (1 - p))`:
    /// `dz = c dW - ½ (1 - 2p) c² dt` with `c = sqrt(D) (h - l) / σ`.
    /// The volatility is constant wherever the policies are.
    LogOdds,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionSpec {
    pub scheme: DiffusionScheme,
    pub dt: f64,
    pub paths: u64,
    pub seed: u64,
    /// Paths stop once `p < boundary` or `p > 1 - boundary`.
    pub boundary: f64,
    /// Paths still running after this many steps are counted as truncated.
    pub max_steps: u64,
    /// Steps are divided by this factor while the log-odds lie within four
    /// step deviations of a policy discontinuity (log-odds scheme only).
    pub refinement: u32,
}

impl Default for DiffusionSpec {
    fn default() -> Self {
        DiffusionSpec {
            scheme: DiffusionScheme::LogOdds,
            dt: 1e-3,
            paths: 100_000,
            seed: 0,
            boundary: 1e-6,
            max_steps: 1_000_000,
            refinement: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionEstimate {
    pub estimate: Estimate,
    pub truncated_paths: u64,
    pub mean_steps: f64,
}

pub fn simulate_diffusion_payoff(
    p0: f64,
    f1: &Policy,
    others: &[(&Policy, usize)],
    config: &RiskySafeConfig,
    spec: &DiffusionSpec,
) -> Result<DiffusionEstimate> {
    if config.time_mode != TimeMode::ContinuousUndiscounted {
        return Err(Error::UnsupportedMode(
            "diffusion simulation needs the continuous-undiscounted mode".into(),
        ));
    }
    if !(spec.dt > 0.0) || spec.paths < 2 {
        return Err(Error::RejectedInput("need dt > 0 and at least two paths".into()));
    }
    let k_b = config.background_ratio();
    let sqrt_dt = spec.dt.sqrt();
    let spread = (config.h - config.l) / config.sigma;
    let mut jumps: Vec<f64> = std::iter::once(f1)
        .chain(others.iter().map(|(g, _)| *g))
        .flat_map(|g| g.discontinuities())
        .map(|q| (q / (1.0 - q)).ln())
        .collect();
    jumps.sort_by(f64::total_cmp);
    jumps.dedup();
    let refinement = spec.refinement.max(1) as f64;
    let moments = replicate(spec.paths, 3, |path, row| {
        let mut rng = KeyedStream::new(StreamKey::new(
            spec.seed,
            path,
            NO_USER,
            0,
            Purpose::Diffusion,
        ));
        let mut p = p0;
        let mut z = (p0 / (1.0 - p0)).ln();
        let z_stop = ((1.0 - spec.boundary) / spec.boundary).ln();
        let mut payoff = 0.0;
        let mut steps = 0u64;
        while p > spec.boundary && p < 1.0 - spec.boundary && steps < spec.max_steps {
            let f = f1.prob(p);
            let rate = k_b
                + f
                + others
                    .iter()
                    .map(|(g, m)| *m as f64 * g.prob(p))
                    .sum::<f64>();
            let w: f64 = rng.sample(StandardNormal);
            match spec.scheme {
                DiffusionScheme::Posterior => {
                    payoff += excess_flow(p, f, config) * spec.dt;
                    p += (rate * phi(p, config)).sqrt() * sqrt_dt * w;
                }
                DiffusionScheme::LogOdds => {
                    let c2 = rate * spread * spread;
                    let band = 4.0 * (c2 * spec.dt).sqrt();
                    let dt = if jumps.iter().any(|j| (z - j).abs() < band) {
                        spec.dt / refinement
                    } else {
                        spec.dt
                    };
                    payoff += excess_flow(p, f, config) * dt;
                    z += (c2 * dt).sqrt() * w - 0.5 * (1.0 - 2.0 * p) * c2 * dt;
                    p = if z.abs() >= z_stop {
                        if z > 0.0 { 1.0 } else { 0.0 }
                    } else {
                        1.0 / (1.0 + (-z).exp())
                    };
                }
            }
            steps += 1;
        }
        row[0] = payoff;
        row[1] = if steps >= spec.max_steps { 1.0 } else { 0.0 };
        row[2] = steps as f64;
    });
    Ok(DiffusionEstimate {
        estimate: moments[0].estimate(),
        truncated_paths: (moments[1].mean * spec.paths as f64).round() as u64,
        mean_steps: moments[2].mean,
    })
}
