//! Summary statistics for ABC and their L1 discrepancies.
//!
//! - S1: GCV smoothing-spline fit at frame midpoints.
//! - S2: the raw frame values.
//! - S3: raw frame values, compared after division by a per-frame Poisson
//!   standard deviation estimated from the observed TAC.
//! - S4: the four linear lp-ntPET estimates `(R1, k2, k2a, γ)` from weighted
//!   least squares.

mod spline;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use spline::{SplineFit, SplineSmoother, GCV_GRID_POINTS, MIN_POINTS};

use crate::error::{Error, Result};
use crate::kinetics::{ResponseTiming, Tac, TimeGrid};
use crate::wls::{self, BasisLibrary, ObservedDesign, ReferenceColumns};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SummaryKind {
    S1Spline,
    S2Raw,
    S3Scaled,
    S4Wls,
}

impl SummaryKind {
    pub const ALL: [SummaryKind; 4] = [
        SummaryKind::S1Spline,
        SummaryKind::S2Raw,
        SummaryKind::S3Scaled,
        SummaryKind::S4Wls,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            SummaryKind::S1Spline => "s1",
            SummaryKind::S2Raw => "s2",
            SummaryKind::S3Scaled => "s3",
            SummaryKind::S4Wls => "s4",
        }
    }
}

impl fmt::Display for SummaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SummaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "spline" => Ok(SummaryKind::S1Spline),
            "s2" | "raw" => Ok(SummaryKind::S2Raw),
            "s3" | "scaled" => Ok(SummaryKind::S3Scaled),
            "s4" | "wls" => Ok(SummaryKind::S4Wls),
            _ => Err(Error::InvalidArgument(format!(
                "unknown summary kind '{s}' (expected s1, s2, s3 or s4)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryVector {
    pub kind: SummaryKind,
    pub values: Vec<f64>,
    /// Per-frame divisors; only set on an observed S3 summary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
}

impl SummaryVector {
    pub fn new(kind: SummaryKind, values: Vec<f64>) -> Self {
        Self {
            kind,
            values,
            scales: None,
        }
    }

    pub fn scaled(values: Vec<f64>, scales: Vec<f64>) -> Self {
        Self {
            kind: SummaryKind::S3Scaled,
            values,
            scales: Some(scales),
        }
    }
}

/// L1 discrepancy between an observed and a simulated summary.
///
/// For S3 the observed vector's scales divide each term.
pub fn distance(obs: &SummaryVector, sim: &SummaryVector) -> Result<f64> {
    if obs.kind != sim.kind {
        return Err(Error::KindMismatch(format!(
            "observed {} vs simulated {}",
            obs.kind, sim.kind
        )));
    }
    if obs.values.len() != sim.values.len() {
        return Err(Error::KindMismatch(format!(
            "{} summary lengths differ: {} vs {}",
            obs.kind,
            obs.values.len(),
            sim.values.len()
        )));
    }
    match obs.kind {
        SummaryKind::S3Scaled => {
            let scales = obs.scales.as_ref().ok_or_else(|| {
                Error::MissingContext("S3 observed summary carries no scales".into())
            })?;
            if scales.len() != obs.values.len() {
                return Err(Error::KindMismatch(
                    "S3 scale vector length differs from values".into(),
                ));
            }
            Ok(scaled_l1(&obs.values, &sim.values, scales))
        }
        _ => Ok(l1(&obs.values, &sim.values)),
    }
}

pub(crate) fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub(crate) fn scaled_l1(a: &[f64], b: &[f64], scales: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(scales)
        .map(|((x, y), s)| (x - y).abs() / s)
        .sum()
}

/// `sqrt(max(v, floor) / scale_hint)` per frame.
pub fn s3_scales_with(values: &[f64], scale_hint: f64, floor: f64) -> Vec<f64> {
    values
        .iter()
        .map(|v| (v.max(floor) / scale_hint).sqrt())
        .collect()
}

/// Poisson standard deviation per frame with the default activity floor.
pub fn s3_scales(obs: &Tac, scale_hint: f64) -> Vec<f64> {
    s3_scales_with(obs.values(), scale_hint, wls::activity_floor(obs.values()))
}

/// Smoothing-spline summary of a TAC with a fresh smoother for its grid.
pub fn spline_smooth(tac: &Tac) -> Result<SummaryVector> {
    let smoother = SplineSmoother::new(&tac.grid().midpoints())?;
    spline_smooth_with(&smoother, tac)
}

pub fn spline_smooth_with(smoother: &SplineSmoother, tac: &Tac) -> Result<SummaryVector> {
    let fit = smoother.smooth(tac.values())?;
    if fit.at_boundary && !fit.linear_data {
        log::warn!(
            "smoothing parameter selected at the end of the GCV grid (lambda = {:e})",
            fit.lambda
        );
    }
    Ok(SummaryVector::new(SummaryKind::S1Spline, fit.fitted))
}

/// What S4 needs besides the TAC: reference columns and a timing library.
#[derive(Debug, Clone)]
pub struct WlsContext {
    pub refs: Arc<ReferenceColumns>,
    pub timings: Arc<Vec<ResponseTiming>>,
    pub nonneg: bool,
}

impl WlsContext {
    /// Best fit over the timing library for `tac`.
    pub fn fit(&self, tac: &Tac) -> Result<wls::WlsFit> {
        let design = ObservedDesign::new(self.refs.clone(), tac)?;
        let lib = BasisLibrary::build(&design, self.timings.to_vec(), None);
        wls::wls_fit_grid(tac, &lib, self.nonneg)
    }

    pub fn design(&self, tac: &Tac) -> Result<ObservedDesign> {
        ObservedDesign::new(self.refs.clone(), tac)
    }
}

/// Shared, read-only state for computing summaries on one grid.
#[derive(Debug, Clone)]
pub struct SummaryContext {
    pub grid: Arc<TimeGrid>,
    pub smoother: Arc<SplineSmoother>,
    /// Counts per activity unit assumed for S3 scales.
    pub scale_hint: f64,
    pub wls: Option<WlsContext>,
}

impl SummaryContext {
    pub fn new(grid: Arc<TimeGrid>, scale_hint: f64) -> Result<Self> {
        if !(scale_hint.is_finite() && scale_hint > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "scale hint must be positive, got {scale_hint}"
            )));
        }
        let smoother = Arc::new(SplineSmoother::new(&grid.midpoints())?);
        Ok(Self {
            grid,
            smoother,
            scale_hint,
            wls: None,
        })
    }

    pub fn with_wls(mut self, wls: WlsContext) -> Self {
        self.wls = Some(wls);
        self
    }

    fn wls_context(&self) -> Result<&WlsContext> {
        self.wls
            .as_ref()
            .ok_or_else(|| Error::MissingContext("S4 needs a WLS basis library".into()))
    }
}

/// Summary of one TAC; S3 attaches the TAC's own scales.
pub fn summarize(tac: &Tac, kind: SummaryKind, ctx: &SummaryContext) -> Result<SummaryVector> {
    if **tac.grid() != *ctx.grid {
        return Err(Error::GridMismatch(
            "TAC grid differs from the summary context grid".into(),
        ));
    }
    match kind {
        SummaryKind::S1Spline => spline_smooth_with(&ctx.smoother, tac),
        SummaryKind::S2Raw => Ok(SummaryVector::new(kind, tac.values().to_vec())),
        SummaryKind::S3Scaled => Ok(SummaryVector::scaled(
            tac.values().to_vec(),
            s3_scales(tac, ctx.scale_hint),
        )),
        SummaryKind::S4Wls => {
            let fit = ctx.wls_context()?.fit(tac)?;
            Ok(SummaryVector::new(kind, fit.estimate.to_vec()))
        }
    }
}
