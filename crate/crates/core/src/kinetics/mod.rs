//! Forward models: quadrature primitives, the one-tissue compartment model and
//! the lp-ntPET operational equation.
//!
//! All simulation happens on a fine uniform grid starting at t = 0 (default
//! step 0.1 min); frame values are interval means of the fine curve.

mod forward;
mod grid;
mod input;
mod params;

pub(crate) use forward::frame_means;
pub use forward::{
    convolve, convolve_fine, cum_integral, frame_average, lp_ntpet_forward, one_tissue_forward,
    response_h, solve_lp_ntpet, Simulator,
};
pub use grid::{FineCurve, Tac, TimeGrid};
pub use input::{InputCurve, InputKind, RefCurveParams};
pub use params::{LpNtPetParams, OneTissueParams, ResponseTiming, PARAM_NAMES};

/// Default fine simulation step, minutes.
pub const DEFAULT_SUB_STEP: f64 = 0.1;
