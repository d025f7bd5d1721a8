use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Acquisition frames plus the fine simulation step, all in minutes.
///
/// Simulation always starts at t = 0; the fine grid is `j * sub_step` for
/// `j = 0..fine_len()`, covering the end of the last frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct TimeGrid {
    frame_starts: Vec<f64>,
    frame_ends: Vec<f64>,
    sub_step: f64,
}

#[derive(Serialize, Deserialize)]
struct RawGrid {
    frame_starts: Vec<f64>,
    frame_ends: Vec<f64>,
    sub_step: f64,
}

impl TryFrom<RawGrid> for TimeGrid {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        TimeGrid::new(raw.frame_starts, raw.frame_ends, raw.sub_step)
    }
}

impl From<TimeGrid> for RawGrid {
    fn from(g: TimeGrid) -> Self {
        RawGrid {
            frame_starts: g.frame_starts,
            frame_ends: g.frame_ends,
            sub_step: g.sub_step,
        }
    }
}

impl TimeGrid {
    pub fn new(frame_starts: Vec<f64>, frame_ends: Vec<f64>, sub_step: f64) -> Result<Self> {
        if frame_starts.is_empty() {
            return Err(Error::InvalidGrid("no frames".into()));
        }
        if frame_starts.len() != frame_ends.len() {
            return Err(Error::InvalidGrid(format!(
                "{} frame starts but {} frame ends",
                frame_starts.len(),
                frame_ends.len()
            )));
        }
        if frame_starts
            .iter()
            .chain(&frame_ends)
            .any(|t| !t.is_finite())
        {
            return Err(Error::InvalidGrid("non-finite frame time".into()));
        }
        if frame_starts[0] < 0.0 {
            return Err(Error::InvalidGrid("first frame starts before t = 0".into()));
        }
        let mut min_duration = f64::INFINITY;
        for i in 0..frame_starts.len() {
            let (s, e) = (frame_starts[i], frame_ends[i]);
            if e <= s {
                return Err(Error::InvalidGrid(format!(
                    "frame {i} has end {e} <= start {s}"
                )));
            }
            if i + 1 < frame_starts.len() {
                let next = frame_starts[i + 1];
                if next <= s {
                    return Err(Error::InvalidGrid(format!(
                        "frame starts not increasing at {i}"
                    )));
                }
                if e > next {
                    return Err(Error::InvalidGrid(format!(
                        "frame {i} overlaps frame {}",
                        i + 1
                    )));
                }
            }
            min_duration = min_duration.min(e - s);
        }
        if !(sub_step > 0.0 && sub_step.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "sub_step must be positive, got {sub_step}"
            )));
        }
        if sub_step > min_duration * (1.0 + 1e-12) {
            return Err(Error::InvalidGrid(format!(
                "sub_step {sub_step} exceeds shortest frame {min_duration}"
            )));
        }
        Ok(Self {
            frame_starts,
            frame_ends,
            sub_step,
        })
    }

    /// `n_frames` contiguous frames of equal length starting at 0.
    pub fn uniform(n_frames: usize, frame_minutes: f64, sub_step: f64) -> Result<Self> {
        let starts = (0..n_frames).map(|i| i as f64 * frame_minutes).collect();
        let ends = (1..=n_frames).map(|i| i as f64 * frame_minutes).collect();
        Self::new(starts, ends, sub_step)
    }

    /// Same frames with a different fine step.
    pub fn with_sub_step(&self, sub_step: f64) -> Result<Self> {
        Self::new(self.frame_starts.clone(), self.frame_ends.clone(), sub_step)
    }

    pub fn n_frames(&self) -> usize {
        self.frame_starts.len()
    }

    pub fn frame_starts(&self) -> &[f64] {
        &self.frame_starts
    }

    pub fn frame_ends(&self) -> &[f64] {
        &self.frame_ends
    }

    pub fn sub_step(&self) -> f64 {
        self.sub_step
    }

    pub fn end_time(&self) -> f64 {
        *self.frame_ends.last().expect("grid has frames")
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.frame_starts
            .iter()
            .zip(&self.frame_ends)
            .map(|(s, e)| 0.5 * (s + e))
            .collect()
    }

    /// Number of fine-grid nodes, including t = 0.
    pub fn fine_len(&self) -> usize {
        let steps = (self.end_time() / self.sub_step - 1e-9).ceil().max(1.0) as usize;
        steps + 1
    }

    pub fn fine_times(&self) -> Vec<f64> {
        (0..self.fine_len())
            .map(|j| j as f64 * self.sub_step)
            .collect()
    }

    /// Content hash used to key caches and libraries.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for v in self
            .frame_starts
            .iter()
            .chain(&self.frame_ends)
            .chain([&self.sub_step])
        {
            h.update(v.to_le_bytes());
        }
        hex_prefix(&h.finalize())
    }
}

pub(crate) fn hex_prefix(bytes: &[u8]) -> String {
    bytes.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// A curve sampled on a uniform grid `j * step`, j = 0, 1, ...
///
/// Between nodes the curve is the linear interpolant, so integrals of a
/// `FineCurve` are trapezoid sums.
#[derive(Debug, Clone, PartialEq)]
pub struct FineCurve {
    step: f64,
    values: Vec<f64>,
}

impl FineCurve {
    pub fn new(step: f64, values: Vec<f64>) -> Self {
        assert!(step > 0.0, "fine step must be positive");
        assert!(!values.is_empty(), "fine curve needs at least one node");
        Self { step, values }
    }

    /// Samples `f` at `j * grid.sub_step()` for every fine node of `grid`.
    pub fn from_fn(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let h = grid.sub_step();
        Self::new(h, (0..grid.fine_len()).map(|j| f(j as f64 * h)).collect())
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.step
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.values.len() - 1)
    }

    /// Linear interpolation; flat outside the sampled range.
    pub fn value_at(&self, t: f64) -> f64 {
        let last = self.values.len() - 1;
        if t <= 0.0 {
            return self.values[0];
        }
        let pos = t / self.step;
        let j = pos.floor() as usize;
        if j >= last {
            return self.values[last];
        }
        let frac = pos - j as f64;
        self.values[j] + frac * (self.values[j + 1] - self.values[j])
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> FineCurve {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(j, &v)| f(self.time(j), v))
            .collect();
        FineCurve {
            step: self.step,
            values,
        }
    }

    pub fn scaled(&self, c: f64) -> FineCurve {
        self.map(|_, v| c * v)
    }
}

/// Time-activity curve: one interval-averaged value per frame.
///
/// A noise-free model output also keeps the fine-grid curve it was averaged
/// from; noisy data and curves read from disk carry frame values only.
#[derive(Debug, Clone)]
pub struct Tac {
    grid: Arc<TimeGrid>,
    values: Vec<f64>,
    fine: Option<Arc<FineCurve>>,
}

impl Tac {
    pub fn new(grid: Arc<TimeGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_frames() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} frames",
                values.len(),
                grid.n_frames()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value in frame {i}"
            )));
        }
        Ok(Self {
            grid,
            values,
            fine: None,
        })
    }

    pub(crate) fn with_fine(mut self, fine: FineCurve) -> Self {
        self.fine = Some(Arc::new(fine));
        self
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Fine-grid curve behind a noise-free model output, if retained.
    pub fn fine(&self) -> Option<&FineCurve> {
        self.fine.as_deref()
    }

    pub fn n_frames(&self) -> usize {
        self.values.len()
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Same frame values with a new grid-compatible value vector and no fine curve.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Tac::new(self.grid.clone(), values)
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.grid.fingerprint().as_bytes());
        for v in &self.values {
            h.update(v.to_le_bytes());
        }
        hex_prefix(&h.finalize())
    }
}

impl PartialEq for Tac {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values && *self.grid == *other.grid
    }
}
