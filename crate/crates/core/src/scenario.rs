//! Synthetic study scenarios: activation presets, grid, reference input and
//! noise settings, plus the desk/paper scale profiles.

use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{
    InputCurve, LpNtPetParams, RefCurveParams, ResponseTiming, Simulator, Tac, TimeGrid,
    DEFAULT_SUB_STEP,
};
use crate::noise::{apply_poisson, NoiseLevel, NoiseScales};

/// Response magnitude of the 100% activation preset.
pub const GAMMA_100: f64 = 0.1;

/// Activation presets. Both share every parameter except γ, with
/// γ(200%) = 2 γ(100%).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    #[serde(rename = "100")]
    Pct100,
    #[serde(rename = "200")]
    Pct200,
}

impl Activation {
    pub fn preset(&self) -> LpNtPetParams {
        let gamma = match self {
            Activation::Pct100 => GAMMA_100,
            Activation::Pct200 => 2.0 * GAMMA_100,
        };
        LpNtPetParams {
            r1: 1.0,
            k2: 0.3,
            k2a: 0.1,
            gamma,
            timing: ResponseTiming {
                t_d: 20.0,
                t_p: 25.0,
                alpha: 2.0,
            },
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim_end_matches('%') {
            "100" => Ok(Activation::Pct100),
            "200" => Ok(Activation::Pct200),
            _ => Err(Error::InvalidArgument(format!(
                "unknown activation preset '{s}' (expected 100 or 200)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub activation: Activation,
    /// 1 (most noise) to 4 (least); 0 means noise-free.
    pub noise_level: u8,
    pub n_frames: usize,
    pub frame_minutes: f64,
    pub sub_step: f64,
    pub seed: u64,
    pub reference: RefCurveParams,
    pub noise_scales: NoiseScales,
    /// Overrides the activation preset when set.
    pub truth: Option<LpNtPetParams>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            activation: Activation::Pct200,
            noise_level: 3,
            n_frames: 60,
            frame_minutes: 1.0,
            sub_step: DEFAULT_SUB_STEP,
            seed: 0,
            reference: RefCurveParams::default(),
            noise_scales: NoiseScales::default(),
            truth: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.truth().validate()?;
        self.grid()?;
        self.reference.validate()?;
        self.noise()?;
        Ok(())
    }

    pub fn truth(&self) -> LpNtPetParams {
        self.truth.unwrap_or_else(|| self.activation.preset())
    }

    pub fn grid(&self) -> Result<Arc<TimeGrid>> {
        Ok(Arc::new(TimeGrid::uniform(
            self.n_frames,
            self.frame_minutes,
            self.sub_step,
        )?))
    }

    pub fn reference_input(&self) -> Result<InputCurve> {
        InputCurve::reference(self.reference)
    }

    pub fn simulator(&self) -> Result<Simulator> {
        Ok(Simulator::new(self.reference_input()?, self.grid()?))
    }

    /// `None` for the noise-free level 0.
    pub fn noise(&self) -> Result<Option<NoiseLevel>> {
        match self.noise_level {
            0 => Ok(None),
            l => self.noise_scales.level(l).map(Some),
        }
    }

    /// Poisson scale used for S3 scales and the Gaussian error model;
    /// 1 when noise-free.
    pub fn scale_hint(&self) -> Result<f64> {
        Ok(self.noise()?.map_or(1.0, |n| n.scale))
    }

    /// Noise-free TAC and one noisy realisation with seed `seed`.
    pub fn simulate(&self, sim: &Simulator, seed: u64) -> Result<(Tac, Tac)> {
        let clean = sim.simulate(&self.truth())?;
        let noisy = match self.noise()? {
            Some(nl) => apply_poisson(&clean, &nl, seed)?,
            None => Tac::new(clean.grid().clone(), clean.values().to_vec())?,
        };
        Ok((clean, noisy))
    }
}

/// Sizes that trade fidelity for runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleProfile {
    pub cache_size: usize,
    pub best_k: usize,
    pub library_size: usize,
    pub realisations: usize,
}

impl ScaleProfile {
    pub const DESK: ScaleProfile = ScaleProfile {
        cache_size: 100_000,
        best_k: 500,
        library_size: 3_000,
        realisations: 20,
    };
    pub const PAPER: ScaleProfile = ScaleProfile {
        cache_size: 1_000_000,
        best_k: 1_000,
        library_size: 100_000,
        realisations: 100,
    };
}

impl FromStr for ScaleProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::DESK),
            "paper" => Ok(Self::PAPER),
            _ => Err(Error::InvalidArgument(format!(
                "unknown scale '{s}' (expected desk or paper)"
            ))),
        }
    }
}
