//! Random-walk Metropolis under an independent Gaussian error model.
//!
//! The frame variance is proportional to the observed activity. There is no
//! adaptation or tempering; the sampler is a plain baseline.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{InputCurve, LpNtPetParams, Simulator, Tac, TimeGrid, PARAM_NAMES};
use crate::prior::UniformBox;
use crate::seed;
use crate::stats;
use crate::wls::activity_floor;

use std::sync::Arc;

pub const DEFAULT_STEPS: usize = 100_000;

/// Default proposal scale as a fraction of each prior range.
pub const DEFAULT_STEP_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianErrorModel {
    /// Frame variance is `variance_scale * max(obs, floor)`.
    pub variance_scale: f64,
}

impl GaussianErrorModel {
    pub fn new(variance_scale: f64) -> Result<Self> {
        if !(variance_scale > 0.0 && variance_scale.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "variance scale must be positive and finite, got {variance_scale}"
            )));
        }
        Ok(Self { variance_scale })
    }

    pub fn variances(&self, obs: &Tac) -> Vec<f64> {
        let floor = activity_floor(obs.values());
        obs.values()
            .iter()
            .map(|v| self.variance_scale * v.max(floor))
            .collect()
    }
}

/// Gaussian log density of `obs` around `model` with per-frame variances.
pub fn gaussian_log_density(obs: &[f64], model: &[f64], variances: &[f64]) -> f64 {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    obs.iter()
        .zip(model)
        .zip(variances)
        .map(|((o, m), v)| -0.5 * ((o - m).powi(2) / v + ln2pi + v.ln()))
        .sum()
}

/// Log-likelihood of `theta`; a singular forward solve gives `-inf`.
pub fn log_likelihood(
    theta: &LpNtPetParams,
    obs: &Tac,
    cr: &InputCurve,
    grid: &Arc<TimeGrid>,
    em: &GaussianErrorModel,
) -> f64 {
    let sim = Simulator::new(cr.clone(), grid.clone());
    log_likelihood_with(theta, obs, &sim, &em.variances(obs))
}

pub fn log_likelihood_with(
    theta: &LpNtPetParams,
    obs: &Tac,
    sim: &Simulator,
    variances: &[f64],
) -> f64 {
    match sim.simulate(theta) {
        Ok(model) => gaussian_log_density(obs.values(), model.values(), variances),
        Err(_) => f64::NEG_INFINITY,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub samples: Vec<LpNtPetParams>,
    pub accepted: usize,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub steps: usize,
    pub acceptance_rate: f64,
    pub parameters: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Chain {
    pub fn column(&self, p: usize) -> Vec<f64> {
        self.samples.iter().map(|t| t.to_array()[p]).collect()
    }

    pub fn summary(&self) -> TraceSummary {
        let cols: Vec<Vec<f64>> = (0..7).map(|p| self.column(p)).collect();
        TraceSummary {
            steps: self.samples.len(),
            acceptance_rate: self.acceptance_rate,
            parameters: PARAM_NAMES.iter().map(|s| s.to_string()).collect(),
            means: cols.iter().map(|c| stats::mean(c)).collect(),
            sds: cols.iter().map(|c| stats::variance(c).sqrt()).collect(),
        }
    }

    /// One θ object per line.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for t in &self.samples {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// `DEFAULT_STEP_FRACTION` of each range; for tP, of the widest conditional range.
pub fn default_step_sizes(priors: &UniformBox) -> [f64; 7] {
    let r = priors.ranges();
    let tp_width = (priors.t_p.upper - priors.t_d.lo - priors.t_p.gap) * priors.t_p.frac.width();
    std::array::from_fn(|i| DEFAULT_STEP_FRACTION * if i == 5 { tp_width } else { r[i].width() })
}

/// Metropolis with independent Gaussian proposals per parameter, targeting
/// prior × likelihood. `samples[0]` is `init`; the chain has `steps + 1` states.
#[allow(clippy::too_many_arguments)]
pub fn rw_metropolis(
    obs: &Tac,
    sim: &Simulator,
    em: &GaussianErrorModel,
    priors: &UniformBox,
    init: &LpNtPetParams,
    steps: usize,
    step_sizes: &[f64; 7],
    seed: u64,
) -> Result<Chain> {
    if step_sizes.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidArgument(
            "step sizes must be finite and nonnegative".into(),
        ));
    }
    let variances = em.variances(obs);
    let log_post = |t: &LpNtPetParams| {
        let lp = priors.log_density(t);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + log_likelihood_with(t, obs, sim, &variances)
    };
    let mut current = *init;
    let mut current_lp = log_post(&current);
    if current_lp == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(
            "initial point has zero posterior density".into(),
        ));
    }
    let mut rng = seed::rng(seed);
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(current);
    let mut accepted = 0;
    for _ in 0..steps {
        let mut a = current.to_array();
        for (x, s) in a.iter_mut().zip(step_sizes) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x += s * z;
        }
        let u: f64 = rng.random();
        let proposal = LpNtPetParams::from_array(a);
        // out-of-box proposals have -inf prior and are rejected without a solve
        let lp = log_post(&proposal);
        if lp > f64::NEG_INFINITY && u.ln() < lp - current_lp {
            current = proposal;
            current_lp = lp;
            accepted += 1;
        }
        samples.push(current);
    }
    let acceptance_rate = if steps == 0 {
        1.0
    } else {
        accepted as f64 / steps as f64
    };
    Ok(Chain {
        samples,
        accepted,
        acceptance_rate,
    })
}

/// Independent chains with seeds `seed::derive(seed, c)`, run in parallel.
#[allow(clippy::too_many_arguments)]
pub fn run_chains(
    n_chains: usize,
    obs: &Tac,
    sim: &Simulator,
    em: &GaussianErrorModel,
    priors: &UniformBox,
    init: &LpNtPetParams,
    steps: usize,
    step_sizes: &[f64; 7],
    seed: u64,
) -> Result<Vec<Chain>> {
    (0..n_chains as u64)
        .into_par_iter()
        .map(|c| {
            rw_metropolis(
                obs,
                sim,
                em,
                priors,
                init,
                steps,
                step_sizes,
                seed::derive(seed, c),
            )
        })
        .collect()
}
