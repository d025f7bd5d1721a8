//! Posterior predictive bands: per-frame mean and central 95% interval of
//! TACs simulated from posterior draws.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abc::PosteriorSet;
use crate::error::{Error, Result};
use crate::kinetics::{Simulator, Tac};
use crate::noise::{apply_poisson, NoiseLevel};
use crate::seed;
use crate::stats::nearest_rank;

/// Fewest predictive draws; small posteriors are cycled to reach it.
pub const MIN_DRAWS: usize = 100;

pub const LOWER_QUANTILE: f64 = 0.025;
pub const UPPER_QUANTILE: f64 = 0.975;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveBands {
    pub t_mid: Vec<f64>,
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n_draws: usize,
}

/// Simulates one TAC per draw, cycling through the posterior until at least
/// [`MIN_DRAWS`] draws are made. Draw `j` uses noise seed `seed::derive(seed, j)`.
/// With noise, negative simulated values are clipped to zero first.
pub fn predictive_bands(
    posterior: &PosteriorSet,
    sim: &Simulator,
    nl: Option<&NoiseLevel>,
    seed: u64,
) -> Result<PredictiveBands> {
    if posterior.is_empty() {
        return Err(Error::EmptyPosterior);
    }
    let n_draws = posterior.len().max(MIN_DRAWS);
    let draws: Vec<Vec<f64>> = (0..n_draws)
        .into_par_iter()
        .map(|j| {
            let theta = &posterior.samples[j % posterior.len()].theta;
            let clean = sim.simulate(theta)?;
            let tac = match nl {
                Some(nl) => {
                    // Poisson needs a nonnegative mean; some draws dip below zero
                    let clipped = clean.values().iter().map(|v| v.max(0.0)).collect();
                    apply_poisson(
                        &clean.with_values(clipped)?,
                        nl,
                        seed::derive(seed, j as u64),
                    )?
                }
                None => clean,
            };
            Ok(tac.into_values())
        })
        .collect::<Result<_>>()?;
    Ok(bands_from(&draws, sim.grid().midpoints()))
}

pub(crate) fn bands_from(draws: &[Vec<f64>], t_mid: Vec<f64>) -> PredictiveBands {
    let nf = t_mid.len();
    let n = draws.len() as f64;
    let mut mean = vec![0.0; nf];
    let mut lo = vec![0.0; nf];
    let mut hi = vec![0.0; nf];
    let mut col = Vec::with_capacity(draws.len());
    for t in 0..nf {
        col.clear();
        col.extend(draws.iter().map(|d| d[t]));
        mean[t] = col.iter().sum::<f64>() / n;
        col.sort_by(f64::total_cmp);
        lo[t] = nearest_rank(&col, LOWER_QUANTILE);
        hi[t] = nearest_rank(&col, UPPER_QUANTILE);
        // a mean computed in floating point can stray past a degenerate band
        mean[t] = mean[t].clamp(col[0], col[col.len() - 1]);
    }
    PredictiveBands {
        t_mid,
        mean,
        lo,
        hi,
        n_draws: draws.len(),
    }
}

/// Fraction of frames where `lo <= truth <= hi`.
pub fn coverage(bands: &PredictiveBands, truth: &Tac) -> Result<f64> {
    if truth.n_frames() != bands.mean.len() {
        return Err(Error::GridMismatch(format!(
            "bands have {} frames, truth has {}",
            bands.mean.len(),
            truth.n_frames()
        )));
    }
    if truth
        .grid()
        .midpoints()
        .iter()
        .zip(&bands.t_mid)
        .any(|(a, b)| (a - b).abs() > 1e-9)
    {
        return Err(Error::GridMismatch(
            "bands and truth use different frame times".into(),
        ));
    }
    let inside = truth
        .values()
        .iter()
        .enumerate()
        .filter(|(t, v)| bands.lo[*t] <= **v && **v <= bands.hi[*t])
        .count();
    Ok(inside as f64 / truth.n_frames() as f64)
}

impl PredictiveBands {
    /// CSV with header `t_mid,mean,lo,hi`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t_mid,mean,lo,hi")?;
        for t in 0..self.t_mid.len() {
            writeln!(
                w,
                "{},{},{},{}",
                self.t_mid[t], self.mean[t], self.lo[t], self.hi[t]
            )?;
        }
        Ok(())
    }

    /// Reads bands written by [`write_csv`](Self::write_csv); `n_draws` is not stored in the CSV.
    pub fn read_csv(r: impl BufRead, n_draws: usize) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "t_mid,mean,lo,hi" {
            return Err(Error::Format(format!("unexpected bands header '{header}'")));
        }
        let mut b = PredictiveBands {
            t_mid: vec![],
            mean: vec![],
            lo: vec![],
            hi: vec![],
            n_draws,
        };
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("bands line {}: {e}", i + 2)))?;
            if f.len() != 4 {
                return Err(Error::Format(format!(
                    "bands line {} has {} fields",
                    i + 2,
                    f.len()
                )));
            }
            b.t_mid.push(f[0]);
            b.mean.push(f[1]);
            b.lo.push(f[2]);
            b.hi.push(f[3]);
        }
        Ok(b)
    }
}
