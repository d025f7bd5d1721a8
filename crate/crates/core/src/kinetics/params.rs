use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rate constants of the one-tissue compartment model (per minute).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneTissueParams {
    pub k1: f64,
    pub k2: f64,
}

impl OneTissueParams {
    pub fn new(k1: f64, k2: f64) -> Result<Self> {
        if !(k1 >= 0.0 && k2 >= 0.0 && k1.is_finite() && k2.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "K1={k1}, k2={k2} must be finite and >= 0"
            )));
        }
        Ok(Self { k1, k2 })
    }
}

/// Time course of the transient response h(t): delay, peak time and sharpness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseTiming {
    pub t_d: f64,
    pub t_p: f64,
    pub alpha: f64,
}

impl ResponseTiming {
    pub fn new(t_d: f64, t_p: f64, alpha: f64) -> Result<Self> {
        let t = Self { t_d, t_p, alpha };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_d.is_finite() && self.t_p.is_finite() && self.alpha.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite timing {self:?}")));
        }
        if self.t_p <= self.t_d {
            return Err(Error::InvalidParams(format!(
                "t_P={} must exceed t_D={}",
                self.t_p, self.t_d
            )));
        }
        if self.alpha < 0.0 {
            return Err(Error::InvalidParams(format!(
                "alpha={} must be >= 0",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// The seven lp-ntPET parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpNtPetParams {
    pub r1: f64,
    pub k2: f64,
    pub k2a: f64,
    pub gamma: f64,
    pub timing: ResponseTiming,
}

/// Parameter names in vector order.
pub const PARAM_NAMES: [&str; 7] = ["R1", "k2", "k2a", "gamma", "tD", "tP", "alpha"];

impl LpNtPetParams {
    pub fn new(r1: f64, k2: f64, k2a: f64, gamma: f64, timing: ResponseTiming) -> Result<Self> {
        let p = Self {
            r1,
            k2,
            k2a,
            gamma,
            timing,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.timing.validate()?;
        for (name, v) in PARAM_NAMES.iter().zip(&self.to_array()[..4]) {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::InvalidParams(format!(
                    "{name}={v} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }

    /// `(R1, k2, k2a, gamma, tD, tP, alpha)`.
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.r1,
            self.k2,
            self.k2a,
            self.gamma,
            self.timing.t_d,
            self.timing.t_p,
            self.timing.alpha,
        ]
    }

    /// Inverse of [`to_array`](Self::to_array); no validation.
    pub fn from_array(a: [f64; 7]) -> Self {
        Self {
            r1: a[0],
            k2: a[1],
            k2a: a[2],
            gamma: a[3],
            timing: ResponseTiming {
                t_d: a[4],
                t_p: a[5],
                alpha: a[6],
            },
        }
    }

    /// The linear part `(R1, k2, k2a, gamma)`.
    pub fn linear(&self) -> [f64; 4] {
        [self.r1, self.k2, self.k2a, self.gamma]
    }
}
