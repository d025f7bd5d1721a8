//! Basis-function weighted least squares for lp-ntPET.
//!
//! For a fixed response timing the operational equation is linear in
//! `x = (R1, k2, k2a, γ)`:
//!
//! ```text
//! y = [ C_R | ∫C_R | -∫C_t | -∫C_t h ] x
//! ```
//!
//! with the integrals taken over the *observed* tissue curve. Every column is
//! frame-averaged the same way as the data, so a noise-free model TAC is
//! reproduced exactly. A library of timings supplies the last column; the
//! timing with the smallest weighted residual sum of squares wins.

use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{
    cum_integral, frame_means, response_h, FineCurve, InputCurve, ResponseTiming, Tac, TimeGrid,
};
use crate::prior::UniformBox;
use crate::seed;

/// Fraction of the TAC maximum used as the activity floor for weights and variances.
pub const FLOOR_FRACTION: f64 = 1e-3;

/// Largest acceptable condition number of the (equilibrated) weighted Gram matrix.
pub const CONDITION_LIMIT: f64 = 1e12;

pub const MAX_NONNEG_ITERATIONS: usize = 20;

/// `FLOOR_FRACTION · max(values)`, never below 1e-12.
pub fn activity_floor(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(0.0, f64::max);
    (FLOOR_FRACTION * max).max(1e-12)
}

/// Inverse-variance weights under the variance-proportional-to-activity model.
pub fn weights_from(obs: &Tac) -> Vec<f64> {
    let floor = activity_floor(obs.values());
    obs.values().iter().map(|v| 1.0 / v.max(floor)).collect()
}

/// Weighted least squares solution of `A x ≈ y`.
///
/// Solved through a QR factorisation of `W^{1/2} A`. The weighted Gram matrix
/// is checked after unit-diagonal scaling; a condition number above
/// [`CONDITION_LIMIT`] is reported as rank deficiency.
pub fn wls_solve(a: &DMatrix<f64>, w: &[f64], y: &[f64]) -> Result<DVector<f64>> {
    let (n, p) = a.shape();
    if w.len() != n || y.len() != n {
        return Err(Error::InvalidArgument(format!(
            "design has {n} rows, weights {}, data {}",
            w.len(),
            y.len()
        )));
    }
    if n < p {
        return Err(Error::RankDeficient {
            condition: f64::INFINITY,
        });
    }
    if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidArgument(
            "weights must be positive and finite".into(),
        ));
    }
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let mut b = a.clone();
    for (i, s) in sw.iter().enumerate() {
        b.row_mut(i).scale_mut(*s);
    }
    let c = DVector::from_iterator(n, y.iter().zip(&sw).map(|(v, s)| v * s));

    let condition = scaled_condition(&b);
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::RankDeficient { condition });
    }
    let qr = b.qr();
    let rhs = qr.q().transpose() * c;
    qr.r()
        .solve_upper_triangular(&rhs)
        .ok_or(Error::RankDeficient {
            condition: f64::INFINITY,
        })
}

fn scaled_condition(b: &DMatrix<f64>) -> f64 {
    let gram = b.transpose() * b;
    let p = gram.nrows();
    let d: Vec<f64> = (0..p).map(|i| gram[(i, i)]).collect();
    if d.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return f64::INFINITY;
    }
    let scaled = DMatrix::from_fn(p, p, |i, j| gram[(i, j)] / (d[i] * d[j]).sqrt());
    let eig = SymmetricEigen::new(scaled).eigenvalues;
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Weighted solve with negative components clamped to zero and the remaining
/// columns re-solved until every component is nonnegative.
pub fn wls_solve_nonneg(a: &DMatrix<f64>, w: &[f64], y: &[f64]) -> Result<DVector<f64>> {
    let p = a.ncols();
    let mut active: Vec<usize> = (0..p).collect();
    let mut x = DVector::zeros(p);
    for _ in 0..MAX_NONNEG_ITERATIONS {
        x = DVector::zeros(p);
        if active.is_empty() {
            break;
        }
        let sub = a.select_columns(&active);
        let xs = wls_solve(&sub, w, y)?;
        for (k, &col) in active.iter().enumerate() {
            x[col] = xs[k];
        }
        let negative: Vec<usize> = active.iter().copied().filter(|&c| x[c] < 0.0).collect();
        if negative.is_empty() {
            break;
        }
        active.retain(|c| !negative.contains(c));
    }
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(x)
}

/// Timing-independent columns: frame averages of C_R and of its running integral.
#[derive(Debug, Clone)]
pub struct ReferenceColumns {
    grid: Arc<TimeGrid>,
    input_id: String,
    reference: Vec<f64>,
    reference_integral: Vec<f64>,
}

impl ReferenceColumns {
    pub fn new(cr: &InputCurve, grid: Arc<TimeGrid>) -> Self {
        let fine = cr.sample_fine(&grid);
        let int = cum_integral(&fine);
        Self::from_fine(cr.id(), grid, &fine, &int)
    }

    pub(crate) fn from_fine(
        input_id: String,
        grid: Arc<TimeGrid>,
        fine: &FineCurve,
        int: &FineCurve,
    ) -> Self {
        let reference = frame_means(fine, &grid);
        let reference_integral = frame_means(int, &grid);
        Self {
            grid,
            input_id,
            reference,
            reference_integral,
        }
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn input_id(&self) -> &str {
        &self.input_id
    }
}

/// Fine-grid tissue curve used for the integral columns.
///
/// A noise-free model output supplies the curve it was averaged from;
/// otherwise frame values are interpolated linearly between frame midpoints
/// and held flat outside them.
pub fn observed_fine(obs: &Tac) -> FineCurve {
    let grid = obs.grid();
    if let Some(f) = obs.fine() {
        if f.step() == grid.sub_step() && f.len() == grid.fine_len() {
            return f.clone();
        }
    }
    let mids = grid.midpoints();
    let vals = obs.values();
    FineCurve::from_fn(grid, |t| {
        if t <= mids[0] {
            return vals[0];
        }
        let i = mids.partition_point(|&m| m <= t);
        if i >= mids.len() {
            return vals[vals.len() - 1];
        }
        let (m0, m1) = (mids[i - 1], mids[i]);
        vals[i - 1] + (t - m0) / (m1 - m0) * (vals[i] - vals[i - 1])
    })
}

/// Everything about one observed TAC that does not depend on the timing.
#[derive(Debug, Clone)]
pub struct ObservedDesign {
    refs: Arc<ReferenceColumns>,
    y: Vec<f64>,
    weights: Vec<f64>,
    tissue: FineCurve,
    tissue_integral: Vec<f64>,
    obs_id: String,
}

impl ObservedDesign {
    pub fn new(refs: Arc<ReferenceColumns>, obs: &Tac) -> Result<Self> {
        if **obs.grid() != *refs.grid {
            return Err(Error::GridMismatch(
                "observed TAC and reference columns use different grids".into(),
            ));
        }
        let tissue = observed_fine(obs);
        let tissue_integral = frame_means(&cum_integral(&tissue), &refs.grid);
        Ok(Self {
            refs,
            y: obs.values().to_vec(),
            weights: weights_from(obs),
            tissue,
            tissue_integral,
            obs_id: obs.fingerprint(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Frame averages of `∫_0^t C_t(u) h(u) du` (positive sign).
    pub fn response_column(&self, timing: &ResponseTiming) -> Vec<f64> {
        let weighted = self.tissue.map(|t, v| v * response_h(timing, t));
        frame_means(&cum_integral(&weighted), &self.refs.grid)
    }

    /// The frame-count × 4 design matrix for a given response column.
    pub fn matrix(&self, response: &[f64]) -> DMatrix<f64> {
        let n = self.y.len();
        DMatrix::from_fn(n, 4, |i, j| match j {
            0 => self.refs.reference[i],
            1 => self.refs.reference_integral[i],
            2 => -self.tissue_integral[i],
            _ => -response[i],
        })
    }

    pub fn fit_column(
        &self,
        timing: ResponseTiming,
        response: &[f64],
        nonneg: bool,
    ) -> Result<WlsFit> {
        let a = self.matrix(response);
        let x = if nonneg {
            wls_solve_nonneg(&a, &self.weights, &self.y)?
        } else {
            wls_solve(&a, &self.weights, &self.y)?
        };
        let fitted = &a * &x;
        let weighted_rss = self
            .y
            .iter()
            .zip(fitted.iter())
            .zip(&self.weights)
            .map(|((y, f), w)| w * (y - f).powi(2))
            .sum();
        Ok(WlsFit {
            estimate: [x[0], x[1], x[2], x[3]],
            timing,
            weighted_rss,
            index: 0,
        })
    }

    pub fn fit_timing(&self, timing: ResponseTiming, nonneg: bool) -> Result<WlsFit> {
        self.fit_column(timing, &self.response_column(&timing), nonneg)
    }
}

/// Design matrix for one observed TAC and timing.
pub fn design_matrix(
    cr: &InputCurve,
    ct_obs: &Tac,
    timing: &ResponseTiming,
    grid: &Arc<TimeGrid>,
) -> Result<DMatrix<f64>> {
    let refs = Arc::new(ReferenceColumns::new(cr, grid.clone()));
    let design = ObservedDesign::new(refs, ct_obs)?;
    Ok(design.matrix(&design.response_column(timing)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WlsFit {
    /// `(R1, k2, k2a, γ)`.
    pub estimate: [f64; 4],
    pub timing: ResponseTiming,
    pub weighted_rss: f64,
    /// Position of `timing` in the library.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryKey {
    pub input_id: String,
    pub obs_id: String,
    pub seed: Option<u64>,
    pub n: usize,
}

/// Per-timing response columns for one observed TAC.
#[derive(Debug, Clone)]
pub struct BasisLibrary {
    pub key: LibraryKey,
    pub timings: Vec<ResponseTiming>,
    /// `∫_0^t C_t h_i` per timing, frame-averaged.
    pub columns: Vec<Vec<f64>>,
    /// `[C_R, ∫C_R, ∫C_t]`, frame-averaged.
    pub fixed_columns: [Vec<f64>; 3],
}

const LIBRARY_MAGIC: &[u8; 8] = b"PETWLS1\n";

impl BasisLibrary {
    pub fn build(design: &ObservedDesign, timings: Vec<ResponseTiming>, seed: Option<u64>) -> Self {
        let columns: Vec<Vec<f64>> = timings
            .par_iter()
            .map(|t| design.response_column(t))
            .collect();
        Self {
            key: LibraryKey {
                input_id: design.refs.input_id.clone(),
                obs_id: design.obs_id.clone(),
                seed,
                n: timings.len(),
            },
            timings,
            columns,
            fixed_columns: [
                design.refs.reference.clone(),
                design.refs.reference_integral.clone(),
                design.tissue_integral.clone(),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.timings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timings.is_empty()
    }

    /// JSON key line followed by little-endian f64 payload.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(LIBRARY_MAGIC)?;
        serde_json::to_writer(&mut w, &self.key)?;
        w.write_all(b"\n")?;
        let n_frames = self.fixed_columns[0].len() as u64;
        w.write_all(&n_frames.to_le_bytes())?;
        let mut put = |v: f64| w.write_all(&v.to_le_bytes());
        for col in &self.fixed_columns {
            col.iter().try_for_each(|v| put(*v))?;
        }
        for (t, col) in self.timings.iter().zip(&self.columns) {
            [t.t_d, t.t_p, t.alpha].iter().try_for_each(|v| put(*v))?;
            col.iter().try_for_each(|v| put(*v))?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        if !buf.starts_with(LIBRARY_MAGIC) {
            return Err(Error::Format("not a basis library file".into()));
        }
        let rest = &buf[LIBRARY_MAGIC.len()..];
        let nl = rest
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| Error::Format("missing library key".into()))?;
        let key: LibraryKey = serde_json::from_slice(&rest[..nl])?;
        let mut body = crate::io::LeReader::new(&rest[nl + 1..]);
        let n_frames = body.u64()? as usize;
        let mut fixed = || -> Result<Vec<f64>> { (0..n_frames).map(|_| body.f64()).collect() };
        let fixed_columns = [fixed()?, fixed()?, fixed()?];
        let mut timings = Vec::with_capacity(key.n);
        let mut columns = Vec::with_capacity(key.n);
        for _ in 0..key.n {
            timings.push(ResponseTiming {
                t_d: body.f64()?,
                t_p: body.f64()?,
                alpha: body.f64()?,
            });
            columns.push(
                (0..n_frames)
                    .map(|_| body.f64())
                    .collect::<Result<Vec<f64>>>()?,
            );
        }
        body.finish()?;
        Ok(Self {
            key,
            timings,
            columns,
            fixed_columns,
        })
    }
}

/// Best fit over the library: minimum weighted RSS, ties to the earliest timing.
pub fn wls_fit_grid(obs: &Tac, lib: &BasisLibrary, nonneg: bool) -> Result<WlsFit> {
    if lib.is_empty() {
        return Err(Error::InvalidArgument("empty basis library".into()));
    }
    if lib.key.obs_id != obs.fingerprint() {
        return Err(Error::InvalidArgument(
            "basis library was built for a different observed TAC".into(),
        ));
    }
    let y = obs.values();
    let w = weights_from(obs);
    let n = y.len();
    let [c0, c1, c2] = &lib.fixed_columns;
    let fits: Vec<Result<WlsFit>> = lib
        .columns
        .par_iter()
        .enumerate()
        .map(|(i, col)| {
            let a = DMatrix::from_fn(n, 4, |r, j| match j {
                0 => c0[r],
                1 => c1[r],
                2 => -c2[r],
                _ => -col[r],
            });
            let x = if nonneg {
                wls_solve_nonneg(&a, &w, y)?
            } else {
                wls_solve(&a, &w, y)?
            };
            let fitted = &a * &x;
            let weighted_rss = (0..n).map(|r| w[r] * (y[r] - fitted[r]).powi(2)).sum();
            Ok(WlsFit {
                estimate: [x[0], x[1], x[2], x[3]],
                timing: lib.timings[i],
                weighted_rss,
                index: i,
            })
        })
        .collect();

    let mut best: Option<WlsFit> = None;
    for fit in fits {
        match fit {
            Ok(f) => {
                if best.is_none_or(|b| f.weighted_rss < b.weighted_rss) {
                    best = Some(f);
                }
            }
            Err(Error::RankDeficient { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    best.ok_or(Error::NoValidFit)
}

/// `n` timing draws from the timing part of `priors`, one stream per index.
pub fn sample_timing_library(
    n: usize,
    priors: &UniformBox,
    seed: u64,
) -> Result<Vec<ResponseTiming>> {
    if n == 0 {
        return Err(Error::InvalidArgument("timing library needs n >= 1".into()));
    }
    priors.validate()?;
    Ok((0..n as u64)
        .map(|i| priors.sample_timing(&mut seed::rng_for(seed, i)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{lp_ntpet_forward, LpNtPetParams, RefCurveParams};
    use num_rational::BigRational;
    use num_traits::{FromPrimitive, ToPrimitive, Zero};
    use rand::Rng;

    fn grid() -> Arc<TimeGrid> {
        Arc::new(TimeGrid::uniform(60, 1.0, 0.1).unwrap())
    }

    fn cr() -> InputCurve {
        InputCurve::reference(RefCurveParams::default()).unwrap()
    }

    fn truth() -> LpNtPetParams {
        LpNtPetParams::new(
            1.0,
            0.3,
            0.1,
            0.2,
            ResponseTiming::new(20.0, 25.0, 2.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn consistent_system_recovered() {
        let mut rng = seed::rng(5);
        let a = DMatrix::from_fn(30, 4, |_, _| rng.random::<f64>() - 0.5);
        let x = DVector::from_vec(vec![1.5, -2.0, 0.25, 3.0]);
        let y = &a * &x;
        let w: Vec<f64> = (0..30).map(|i| 0.5 + i as f64 / 10.0).collect();
        let got = wls_solve(&a, &w, y.as_slice()).unwrap();
        for i in 0..4 {
            assert!(((got[i] - x[i]) / x[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_design() {
        let a = DMatrix::<f64>::identity(4, 4);
        let got = wls_solve(&a, &[1.0; 4], &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(got.as_slice(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rank_deficiency_detected() {
        let a = DMatrix::from_fn(10, 3, |i, j| {
            if j == 2 {
                2.0 * i as f64
            } else {
                (i * (j + 1)) as f64 + 1.0
            }
        });
        let a = {
            let mut m = a;
            let c0 = m.column(0).clone_owned();
            m.set_column(1, &(c0 * 3.0));
            m
        };
        assert!(matches!(
            wls_solve(&a, &[1.0; 10], &[1.0; 10]),
            Err(Error::RankDeficient { .. })
        ));
    }

    /// Exact rational solve of the weighted normal equations.
    fn rational_normal_solve(a: &DMatrix<f64>, w: &[f64], y: &[f64]) -> Vec<f64> {
        let q = |v: f64| BigRational::from_f64(v).unwrap();
        let (n, p) = a.shape();
        let mut m: Vec<Vec<BigRational>> = vec![vec![BigRational::zero(); p + 1]; p];
        for i in 0..p {
            for j in 0..p {
                let mut s = BigRational::zero();
                for r in 0..n {
                    s += q(w[r]) * q(a[(r, i)]) * q(a[(r, j)]);
                }
                m[i][j] = s;
            }
            let mut s = BigRational::zero();
            for r in 0..n {
                s += q(w[r]) * q(a[(r, i)]) * q(y[r]);
            }
            m[i][p] = s;
        }
        for c in 0..p {
            let piv = (c..p).find(|&r| !m[r][c].is_zero()).unwrap();
            m.swap(c, piv);
            for r in 0..p {
                if r != c && !m[r][c].is_zero() {
                    let f = m[r][c].clone() / m[c][c].clone();
                    for k in c..=p {
                        let t = f.clone() * m[c][k].clone();
                        m[r][k] -= t;
                    }
                }
            }
        }
        (0..p)
            .map(|i| (m[i][p].clone() / m[i][i].clone()).to_f64().unwrap())
            .collect()
    }

    #[test]
    fn agrees_with_exact_normal_equations() {
        let mut rng = seed::rng(11);
        for _ in 0..5 {
            let a = DMatrix::from_fn(60, 4, |_, _| rng.random::<f64>() * 4.0 - 1.0);
            let w: Vec<f64> = (0..60).map(|_| 0.1 + rng.random::<f64>()).collect();
            let y: Vec<f64> = (0..60).map(|_| rng.random::<f64>() * 10.0).collect();
            let got = wls_solve(&a, &w, &y).unwrap();
            let want = rational_normal_solve(&a, &w, &y);
            for i in 0..4 {
                assert!(
                    ((got[i] - want[i]) / want[i]).abs() < 1e-8,
                    "{} vs {}",
                    got[i],
                    want[i]
                );
            }
        }
    }

    #[test]
    fn weights_inverse_to_activity() {
        let g = Arc::new(TimeGrid::uniform(3, 1.0, 0.5).unwrap());
        let w = weights_from(&Tac::new(g.clone(), vec![1.0, 2.0, 4.0]).unwrap());
        assert_eq!(w, vec![1.0, 0.5, 0.25]);
        let w = weights_from(&Tac::new(g, vec![0.0, 2.0, 4.0]).unwrap());
        assert!(w.iter().all(|v| v.is_finite()));
        assert_eq!(w[0], 1.0 / 4e-3);
    }

    #[test]
    fn design_matrix_simple_columns() {
        let g = grid();
        let one = InputCurve::from_fn(crate::kinetics::InputKind::Reference, "one", |_| 1.0);
        let zero = Tac::new(g.clone(), vec![0.0; 60]).unwrap();
        let tm = ResponseTiming::new(20.0, 25.0, 2.0).unwrap();
        let a = design_matrix(&one, &zero, &tm, &g).unwrap();
        let mids = g.midpoints();
        for i in 0..60 {
            assert_eq!(a[(i, 2)], 0.0);
            assert_eq!(a[(i, 3)], 0.0);
            assert!((a[(i, 1)] - mids[i]).abs() / mids[i] < 1e-6);
        }
    }

    #[test]
    fn design_matrix_matches_high_resolution_quadrature() {
        // Oracle: direct midpoint-rule quadrature at 1e-3 min of the
        // interpolated observed curve, independent of the fine-grid code path.
        // The design runs at sub-step 0.005 so its own O(h^2) trapezoid
        // error is well below the tolerance.
        let g = Arc::new(TimeGrid::uniform(60, 1.0, 0.005).unwrap());
        let clean = lp_ntpet_forward(&truth(), &cr(), &grid()).unwrap();
        let obs = Tac::new(g.clone(), clean.values().to_vec()).unwrap();
        let tm = truth().timing;
        let a = design_matrix(&cr(), &obs, &tm, &g).unwrap();

        let mids = g.midpoints();
        let v = obs.values();
        let ct = |t: f64| -> f64 {
            if t <= mids[0] {
                return v[0];
            }
            if t >= mids[59] {
                return v[59];
            }
            let i = mids.iter().position(|m| *m > t).unwrap();
            v[i - 1] + (t - mids[i - 1]) * (v[i] - v[i - 1]) / (mids[i] - mids[i - 1])
        };
        let dt = 1e-3;
        let steps = 60_000;
        let (mut icr, mut ict, mut icth) = (0.0, 0.0, 0.0);
        let mut frame = [[0.0f64; 4]; 60];
        for s in 0..steps {
            let t = (s as f64 + 0.5) * dt;
            let crv = cr().sample(t);
            // integrals at the midpoint of this sub-interval
            let (icr_m, ict_m, icth_m) = (
                icr + 0.5 * dt * crv,
                ict + 0.5 * dt * ct(t),
                icth + 0.5 * dt * ct(t) * response_h(&tm, t),
            );
            let f = (t / 1.0).floor() as usize;
            frame[f][0] += crv * dt;
            frame[f][1] += icr_m * dt;
            frame[f][2] -= ict_m * dt;
            frame[f][3] -= icth_m * dt;
            icr += dt * crv;
            ict += dt * ct(t);
            icth += dt * ct(t) * response_h(&tm, t);
        }
        for i in 0..60 {
            for j in 0..4 {
                let want = frame[i][j];
                if want.abs() < 1e-9 {
                    assert!(a[(i, j)].abs() < 1e-6);
                    continue;
                }
                assert!(
                    ((a[(i, j)] - want) / want).abs() < 1e-4,
                    "({i},{j}) {} vs {want}",
                    a[(i, j)]
                );
            }
        }
    }

    fn library_with_truth(obs: &Tac, n: usize) -> BasisLibrary {
        let refs = Arc::new(ReferenceColumns::new(&cr(), grid()));
        let design = ObservedDesign::new(refs, obs).unwrap();
        let mut timings = sample_timing_library(n, &UniformBox::default_priors(), 9).unwrap();
        timings.insert(n / 2, truth().timing);
        BasisLibrary::build(&design, timings, Some(9))
    }

    #[test]
    fn exact_recovery_of_noise_free_tac() {
        let clean = lp_ntpet_forward(&truth(), &cr(), &grid()).unwrap();
        let lib = library_with_truth(&clean, 200);
        let fit = wls_fit_grid(&clean, &lib, false).unwrap();
        assert_eq!(fit.timing, truth().timing);
        for (got, want) in fit.estimate.iter().zip(truth().linear()) {
            assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn single_timing_library() {
        let clean = lp_ntpet_forward(&truth(), &cr(), &grid()).unwrap();
        let refs = Arc::new(ReferenceColumns::new(&cr(), grid()));
        let design = ObservedDesign::new(refs, &clean).unwrap();
        let tm = ResponseTiming::new(17.0, 30.0, 4.0).unwrap();
        let lib = BasisLibrary::build(&design, vec![tm], None);
        let fit = wls_fit_grid(&clean, &lib, false).unwrap();
        let direct = design.fit_timing(tm, false).unwrap();
        assert_eq!(fit.timing, tm);
        assert_eq!(fit.estimate, direct.estimate);
        assert_eq!(fit.index, 0);
    }

    #[test]
    fn nonneg_boundary_truth() {
        let mut p = truth();
        p.gamma = 0.0;
        let clean = lp_ntpet_forward(&p, &cr(), &grid()).unwrap();
        let lib = library_with_truth(&clean, 100);
        let fit = wls_fit_grid(&clean, &lib, true).unwrap();
        assert!(fit.estimate.iter().all(|v| *v >= 0.0));
        assert!(fit.estimate[3] <= 1e-6);
    }

    #[test]
    fn weight_scaling_keeps_argmin() {
        let clean = lp_ntpet_forward(&truth(), &cr(), &grid()).unwrap();
        let noisy =
            crate::noise::apply_poisson(&clean, &crate::noise::NoiseLevel::standard(3).unwrap(), 4)
                .unwrap();
        let timings = sample_timing_library(300, &UniformBox::default_priors(), 2).unwrap();
        let refs = Arc::new(ReferenceColumns::new(&cr(), grid()));
        let base = {
            let d = ObservedDesign::new(refs.clone(), &noisy).unwrap();
            wls_fit_grid(
                &noisy,
                &BasisLibrary::build(&d, timings.clone(), None),
                false,
            )
            .unwrap()
        };
        // scaling obs by c scales weights by 1/c and RSS by c: same argmin
        let scaled = noisy
            .with_values(noisy.values().iter().map(|v| v * 3.0).collect())
            .unwrap();
        let d = ObservedDesign::new(refs, &scaled).unwrap();
        let fit = wls_fit_grid(&scaled, &BasisLibrary::build(&d, timings, None), false).unwrap();
        assert_eq!(fit.index, base.index);
        assert!((fit.weighted_rss / base.weighted_rss - 3.0).abs() < 1e-6);
    }

    #[test]
    fn timing_library_draws() {
        let one = sample_timing_library(
            1,
            &UniformBox::point(&truth(), &UniformBox::default_priors()),
            1,
        )
        .unwrap();
        assert!((one[0].t_p - 25.0).abs() < 1e-12 && one[0].t_d == 20.0 && one[0].alpha == 2.0);
        let lib = sample_timing_library(100_000, &UniformBox::default_priors(), 8).unwrap();
        assert!(lib.iter().all(|t| (15.0..=25.0).contains(&t.t_d)
            && t.t_p > t.t_d + 1.0
            && t.t_p <= 35.0
            && (0.0..=25.0).contains(&t.alpha)));
        let mean = lib.iter().map(|t| t.t_d).sum::<f64>() / lib.len() as f64;
        assert!((mean - 20.0).abs() < 0.05, "mean tD {mean}");
        assert_eq!(
            lib,
            sample_timing_library(100_000, &UniformBox::default_priors(), 8).unwrap()
        );
    }

    #[test]
    fn library_file_roundtrip() {
        let clean = lp_ntpet_forward(&truth(), &cr(), &grid()).unwrap();
        let lib = library_with_truth(&clean, 10);
        let mut buf = Vec::new();
        lib.write_to(&mut buf).unwrap();
        let back = BasisLibrary::read_from(&buf[..]).unwrap();
        assert_eq!(back.key, lib.key);
        assert_eq!(back.timings, lib.timings);
        assert_eq!(back.columns, lib.columns);
        assert_eq!(back.fixed_columns, lib.fixed_columns);
        assert!(BasisLibrary::read_from(&buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn library_for_other_tac_rejected() {
        let clean = lp_ntpet_forward(&truth(), &cr(), &grid()).unwrap();
        let lib = library_with_truth(&clean, 3);
        let other = clean.with_values(vec![1.0; 60]).unwrap();
        assert!(wls_fit_grid(&other, &lib, false).is_err());
    }
}
