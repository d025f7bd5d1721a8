//! Uniform prior and sampling boxes over the seven lp-ntPET parameters.
//!
//! Six parameters have independent uniform ranges. The peak time is
//! conditional on the delay: `tP | tD ~ U(tD + gap, upper)`. Narrowed boxes
//! restrict tP through its conditional-uniform coordinate
//!
//! ```text
//! u = (tP - tD - gap) / (upper - tD - gap)  in [0, 1]
//! ```
//!
//! so that sampling `u ~ U(u_lo, u_hi)` stays proportional to the prior on
//! its support for every tD.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{LpNtPetParams, ResponseTiming, PARAM_NAMES};

const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        let tol = SLACK * (1.0 + self.lo.abs().max(self.hi.abs()));
        x >= self.lo - tol && x <= self.hi + tol
    }

    pub fn is_within(&self, outer: &Bounds) -> bool {
        outer.contains(self.lo) && outer.contains(self.hi)
    }

    pub fn intersect(&self, other: &Bounds) -> Bounds {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi).max(lo);
        Bounds { lo, hi }
    }

    /// Position of `x` as a fraction of the range; 0 for a point mass.
    pub fn unit(&self, x: f64) -> f64 {
        if self.width() == 0.0 {
            0.0
        } else {
            (x - self.lo) / self.width()
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.lo + self.width() * u
    }

    fn check(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(Error::InvalidParams(format!(
                "{name} range [{}, {}] is invalid",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Peak-time range conditional on the delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakRange {
    /// Minimum separation `tP - tD`.
    pub gap: f64,
    /// Absolute upper limit on tP.
    pub upper: f64,
    /// Allowed conditional-uniform coordinate, within [0, 1].
    pub frac: Bounds,
}

impl PeakRange {
    pub fn support(&self, t_d: f64) -> (f64, f64) {
        (t_d + self.gap, self.upper)
    }

    /// Conditional-uniform coordinate of `t_p` given `t_d`.
    pub fn to_frac(&self, t_d: f64, t_p: f64) -> f64 {
        let (lo, hi) = self.support(t_d);
        (t_p - lo) / (hi - lo)
    }

    pub fn from_frac(&self, t_d: f64, u: f64) -> f64 {
        let (lo, hi) = self.support(t_d);
        lo + u * (hi - lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformBox {
    pub r1: Bounds,
    pub k2: Bounds,
    pub k2a: Bounds,
    pub gamma: Bounds,
    pub t_d: Bounds,
    pub t_p: PeakRange,
    pub alpha: Bounds,
}

impl UniformBox {
    /// R1~U(0,20), k2~U(0,10), k2a~U(0,10), γ~U(0,5), tD~U(15,25),
    /// tP~U(tD+1,35), α~U(0,25).
    pub fn default_priors() -> Self {
        Self {
            r1: Bounds::new(0.0, 20.0),
            k2: Bounds::new(0.0, 10.0),
            k2a: Bounds::new(0.0, 10.0),
            gamma: Bounds::new(0.0, 5.0),
            t_d: Bounds::new(15.0, 25.0),
            t_p: PeakRange {
                gap: 1.0,
                upper: 35.0,
                frac: Bounds::new(0.0, 1.0),
            },
            alpha: Bounds::new(0.0, 25.0),
        }
    }

    /// Final sampling ranges reached by sequential narrowing on the reference
    /// study: R1~U(0,5), k2~U(0,1), k2a~U(0,0.2), γ~U(0,2); timing ranges as
    /// in [`default_priors`](Self::default_priors).
    pub fn narrowed_reference() -> Self {
        Self {
            r1: Bounds::new(0.0, 5.0),
            k2: Bounds::new(0.0, 1.0),
            k2a: Bounds::new(0.0, 0.2),
            gamma: Bounds::new(0.0, 2.0),
            ..Self::default_priors()
        }
    }

    /// Point mass at `theta`, with the peak-time coordinate taken relative to `prior`.
    pub fn point(theta: &LpNtPetParams, prior: &UniformBox) -> Self {
        let p = |x: f64| Bounds::new(x, x);
        let u = prior.t_p.to_frac(theta.timing.t_d, theta.timing.t_p);
        Self {
            r1: p(theta.r1),
            k2: p(theta.k2),
            k2a: p(theta.k2a),
            gamma: p(theta.gamma),
            t_d: p(theta.timing.t_d),
            t_p: PeakRange {
                frac: p(u),
                ..prior.t_p
            },
            alpha: p(theta.timing.alpha),
        }
    }

    /// The six unconditional ranges followed by the tP fraction range, in
    /// parameter order.
    pub fn ranges(&self) -> [Bounds; 7] {
        [
            self.r1,
            self.k2,
            self.k2a,
            self.gamma,
            self.t_d,
            self.t_p.frac,
            self.alpha,
        ]
    }

    fn from_ranges(r: [Bounds; 7], t_p: PeakRange) -> Self {
        Self {
            r1: r[0],
            k2: r[1],
            k2a: r[2],
            gamma: r[3],
            t_d: r[4],
            t_p: PeakRange { frac: r[5], ..t_p },
            alpha: r[6],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, b) in PARAM_NAMES.iter().zip(self.ranges()) {
            b.check(name)?;
        }
        if !self.t_p.frac.is_within(&Bounds::new(0.0, 1.0)) {
            return Err(Error::InvalidParams(
                "tP fraction range must lie in [0, 1]".into(),
            ));
        }
        if !(self.t_p.gap >= 0.0 && self.t_d.hi + self.t_p.gap < self.t_p.upper) {
            return Err(Error::InvalidParams(format!(
                "tP support empty: tD up to {} plus gap {} reaches upper {}",
                self.t_d.hi, self.t_p.gap, self.t_p.upper
            )));
        }
        if self.t_p.gap <= 0.0 && self.t_p.frac.lo <= 0.0 {
            return Err(Error::InvalidParams(
                "tP must stay above tD: need gap > 0 or fraction > 0".into(),
            ));
        }
        for b in [self.r1, self.k2, self.k2a, self.gamma, self.alpha] {
            if b.lo < 0.0 {
                return Err(Error::InvalidParams(
                    "kinetic parameter ranges must be nonnegative".into(),
                ));
            }
        }
        Ok(())
    }

    /// Per-parameter coordinates of `theta`: six plain values plus the tP fraction.
    pub fn coords(&self, theta: &LpNtPetParams) -> [f64; 7] {
        let mut a = theta.to_array();
        a[5] = self.t_p.to_frac(theta.timing.t_d, theta.timing.t_p);
        a
    }

    pub fn contains(&self, theta: &LpNtPetParams) -> bool {
        self.ranges()
            .iter()
            .zip(self.coords(theta))
            .all(|(b, x)| b.contains(x))
    }

    /// Box-relative coordinates in [0, 1]^7; uniform when `theta` is drawn from this box.
    pub fn unit_coords(&self, theta: &LpNtPetParams) -> [f64; 7] {
        let c = self.coords(theta);
        let r = self.ranges();
        std::array::from_fn(|i| r[i].unit(c[i]))
    }

    /// Subset test against `outer`, which must share the same tP gap and upper limit.
    pub fn is_within(&self, outer: &UniformBox) -> bool {
        self.t_p.gap == outer.t_p.gap
            && self.t_p.upper == outer.t_p.upper
            && self
                .ranges()
                .iter()
                .zip(outer.ranges())
                .all(|(a, b)| a.is_within(&b))
    }

    pub fn intersect(&self, other: &UniformBox) -> UniformBox {
        let a = self.ranges();
        let b = other.ranges();
        Self::from_ranges(std::array::from_fn(|i| a[i].intersect(&b[i])), self.t_p)
    }

    /// Box spanning the given coordinate extremes, sharing this box's tP limits.
    pub fn with_ranges(&self, ranges: [Bounds; 7]) -> UniformBox {
        Self::from_ranges(ranges, self.t_p)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LpNtPetParams {
        let r1 = self.r1.draw(rng);
        let k2 = self.k2.draw(rng);
        let k2a = self.k2a.draw(rng);
        let gamma = self.gamma.draw(rng);
        let timing = self.sample_timing(rng);
        LpNtPetParams {
            r1,
            k2,
            k2a,
            gamma,
            timing,
        }
    }

    pub fn sample_timing<R: Rng + ?Sized>(&self, rng: &mut R) -> ResponseTiming {
        let t_d = self.t_d.draw(rng);
        // u in (lo, hi] keeps tP strictly above tD + gap when lo = 0
        let v: f64 = rng.random();
        let u = self.t_p.frac.hi - self.t_p.frac.width() * v;
        let t_p = self.t_p.from_frac(t_d, u);
        let alpha = self.alpha.draw(rng);
        ResponseTiming { t_d, t_p, alpha }
    }

    /// Unnormalised log prior density; `-inf` outside the box.
    ///
    /// Only the tD-dependent factor `1 / (upper - tD - gap)` from the
    /// conditional tP density is kept; everything else is constant on the box.
    pub fn log_density(&self, theta: &LpNtPetParams) -> f64 {
        if !self.contains(theta) {
            return f64::NEG_INFINITY;
        }
        let (lo, hi) = self.t_p.support(theta.timing.t_d);
        -(hi - lo).ln()
    }

    /// Centre of the box (tP at the middle of its fraction range).
    pub fn center(&self) -> LpNtPetParams {
        let mid = |b: Bounds| 0.5 * (b.lo + b.hi);
        let t_d = mid(self.t_d);
        LpNtPetParams {
            r1: mid(self.r1),
            k2: mid(self.k2),
            k2a: mid(self.k2a),
            gamma: mid(self.gamma),
            timing: ResponseTiming {
                t_d,
                t_p: self.t_p.from_frac(t_d, mid(self.t_p.frac)),
                alpha: mid(self.alpha),
            },
        }
    }
}
