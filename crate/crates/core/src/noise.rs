//! Scaled-Poisson frame noise.
//!
//! A frame value `v` becomes `Poisson(scale * v) / scale`, so the noisy value
//! has mean `v` and variance `v / scale`. Larger `scale` means less noise.

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::Tac;
use crate::seed;

/// Counts-per-unit scale for each of the four named noise levels,
/// level 1 (highest noise) to level 4 (lowest).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScales(pub [f64; 4]);

impl Default for NoiseScales {
    fn default() -> Self {
        NoiseScales([0.25, 1.0, 4.0, 16.0])
    }
}

impl NoiseScales {
    pub fn validate(&self) -> Result<()> {
        let s = &self.0;
        if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) || s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams(format!(
                "noise scales must be positive and strictly increasing: {s:?}"
            )));
        }
        Ok(())
    }

    pub fn level(&self, level: u8) -> Result<NoiseLevel> {
        self.validate()?;
        match level {
            1..=4 => Ok(NoiseLevel {
                level,
                scale: self.0[level as usize - 1],
            }),
            _ => Err(Error::InvalidArgument(format!(
                "noise level must be 1-4, got {level}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub level: u8,
    pub scale: f64,
}

impl NoiseLevel {
    /// A level with the default scales.
    pub fn standard(level: u8) -> Result<Self> {
        NoiseScales::default().level(level)
    }

    /// An unnamed level with an explicit scale.
    pub fn with_scale(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParams(format!(
                "noise scale must be positive, got {scale}"
            )));
        }
        Ok(Self { level: 0, scale })
    }
}

/// Replaces each frame value `v` by `Poisson(scale·v)/scale`.
pub fn apply_poisson(tac: &Tac, nl: &NoiseLevel, seed: u64) -> Result<Tac> {
    if let Some((frame, &value)) = tac.values().iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeActivity { frame, value });
    }
    let mut rng = seed::rng(seed);
    let values = tac
        .values()
        .iter()
        .map(|&v| {
            let mean = nl.scale * v;
            if mean == 0.0 {
                return Ok(0.0);
            }
            let counts: f64 = Poisson::new(mean)
                .map_err(|e| Error::InvalidArgument(format!("poisson mean {mean}: {e}")))?
                .sample(&mut rng);
            Ok(counts / nl.scale)
        })
        .collect::<Result<Vec<f64>>>()?;
    tac.with_values(values)
}
