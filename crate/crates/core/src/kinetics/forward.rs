use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::grid::{FineCurve, Tac, TimeGrid};
use super::input::InputCurve;
use super::params::{LpNtPetParams, OneTissueParams, ResponseTiming};
use crate::error::{Error, Result};

/// `(input ⊗ exp(-k2 t))` on the fine grid of `grid`, by trapezoidal quadrature.
///
/// Uses the recursion `I_n = e^{-k2 h} I_{n-1} + h/2 (f_{n-1} e^{-k2 h} + f_n)`,
/// which is algebraically the full trapezoid sum of the convolution integral.
pub fn convolve(input: &InputCurve, k2: f64, grid: &TimeGrid) -> FineCurve {
    convolve_fine(&input.sample_fine(grid), k2)
}

pub fn convolve_fine(input: &FineCurve, k2: f64) -> FineCurve {
    let h = input.step();
    let decay = (-k2 * h).exp();
    let f = input.values();
    let mut out = Vec::with_capacity(f.len());
    out.push(0.0);
    for n in 1..f.len() {
        let prev = out[n - 1];
        out.push(decay * prev + 0.5 * h * (f[n - 1] * decay + f[n]));
    }
    FineCurve::new(h, out)
}

/// Running trapezoid integral from 0; the first node is 0.
pub fn cum_integral(curve: &FineCurve) -> FineCurve {
    let h = curve.step();
    let v = curve.values();
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    out.push(acc);
    for w in v.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    FineCurve::new(h, out)
}

/// Transient response `x^α exp(α(1 - x)) u(t - tD)` with `x = (t - tD)/(tP - tD)`.
///
/// Zero for `t <= tD`, exactly one at `t = tP`.
pub fn response_h(timing: &ResponseTiming, t: f64) -> f64 {
    if t <= timing.t_d {
        return 0.0;
    }
    let x = (t - timing.t_d) / (timing.t_p - timing.t_d);
    if x == 1.0 || timing.alpha == 0.0 {
        return 1.0;
    }
    (timing.alpha * (x.ln() + 1.0 - x)).exp()
}

/// Interval means of the linear interpolant of `fine` over each frame.
///
/// Frames whose boundaries fall on fine nodes get the exact trapezoid mean.
pub fn frame_average(fine: &FineCurve, grid: &Arc<TimeGrid>) -> Tac {
    let values = frame_means(fine, grid);
    Tac::new(grid.clone(), values).expect("frame means match the grid")
}

pub(crate) fn frame_means(fine: &FineCurve, grid: &TimeGrid) -> Vec<f64> {
    debug_assert!(fine.end_time() + 1e-9 >= grid.end_time() || fine.len() == grid.fine_len());
    let cum = cum_integral(fine);
    let integral_to = |t: f64| -> f64 {
        let h = fine.step();
        let last = fine.len() - 1;
        let pos = (t / h).max(0.0);
        let j = pos.floor() as usize;
        if j >= last {
            return cum.values()[last] + (t - fine.end_time()) * fine.values()[last];
        }
        let dt = t - fine.time(j);
        cum.values()[j] + 0.5 * dt * (fine.values()[j] + fine.value_at(t))
    };
    grid.frame_starts()
        .iter()
        .zip(grid.frame_ends())
        .map(|(&a, &b)| (integral_to(b) - integral_to(a)) / (b - a))
        .collect()
}

/// One-tissue model `K1 · C_a ⊗ exp(-k2 t)`, frame-averaged.
pub fn one_tissue_forward(p: &OneTissueParams, ca: &InputCurve, grid: &Arc<TimeGrid>) -> Tac {
    let fine = convolve(ca, p.k2, grid).scaled(p.k1);
    let tac = frame_average(&fine, grid);
    tac.with_fine(fine)
}

/// lp-ntPET forward model, frame-averaged. See [`Simulator`] for repeated use.
pub fn lp_ntpet_forward(p: &LpNtPetParams, cr: &InputCurve, grid: &Arc<TimeGrid>) -> Result<Tac> {
    let cr_fine = cr.sample_fine(grid);
    let cr_int = cum_integral(&cr_fine);
    let fine = solve_lp_ntpet(p, &cr_fine, &cr_int)?;
    Ok(frame_average(&fine, grid).with_fine(fine))
}

/// Time-steps
/// `C(t) = R1 C_R(t) + k2 ∫C_R - k2a ∫C - γ ∫C h`
/// on the fine grid. Each integral is a trapezoid sum whose last node contains
/// the unknown `C(t_n)`, so every step is a scalar linear solve.
pub fn solve_lp_ntpet(p: &LpNtPetParams, cr: &FineCurve, cr_int: &FineCurve) -> Result<FineCurve> {
    let dt = cr.step();
    let half = 0.5 * dt;
    let cr = cr.values();
    let ir = cr_int.values();
    let timing = &p.timing;

    let mut c = Vec::with_capacity(cr.len());
    c.push(p.r1 * cr[0] + p.k2 * ir[0]);
    let mut int_c = 0.0;
    let mut int_ch = 0.0;
    let mut h_prev = response_h(timing, 0.0);
    for n in 1..cr.len() {
        let t = n as f64 * dt;
        let h_n = response_h(timing, t);
        let coefficient = 1.0 + half * (p.k2a + p.gamma * h_n);
        if !(coefficient > 0.0) {
            return Err(Error::SingularStep {
                time: t,
                coefficient,
            });
        }
        let c_prev = c[n - 1];
        let rhs = p.r1 * cr[n] + p.k2 * ir[n]
            - p.k2a * (int_c + half * c_prev)
            - p.gamma * (int_ch + half * c_prev * h_prev);
        let c_n = rhs / coefficient;
        int_c += half * (c_prev + c_n);
        int_ch += half * (c_prev * h_prev + c_n * h_n);
        c.push(c_n);
        h_prev = h_n;
    }
    Ok(FineCurve::new(dt, c))
}

/// lp-ntPET simulator bound to one reference input and grid.
///
/// Precomputes the reference curve and its running integral, and counts every
/// forward solve so cache reuse can be audited.
#[derive(Debug)]
pub struct Simulator {
    input: InputCurve,
    grid: Arc<TimeGrid>,
    cr_fine: FineCurve,
    cr_int: FineCurve,
    calls: AtomicU64,
}

impl Simulator {
    pub fn new(input: InputCurve, grid: Arc<TimeGrid>) -> Self {
        let cr_fine = input.sample_fine(&grid);
        let cr_int = cum_integral(&cr_fine);
        Self {
            input,
            grid,
            cr_fine,
            cr_int,
            calls: AtomicU64::new(0),
        }
    }

    pub fn simulate(&self, p: &LpNtPetParams) -> Result<Tac> {
        let fine = self.simulate_fine(p)?;
        Ok(frame_average(&fine, &self.grid).with_fine(fine))
    }

    pub fn simulate_fine(&self, p: &LpNtPetParams) -> Result<FineCurve> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        solve_lp_ntpet(p, &self.cr_fine, &self.cr_int)
    }

    /// Forward solves performed so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn input(&self) -> &InputCurve {
        &self.input
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn reference_fine(&self) -> &FineCurve {
        &self.cr_fine
    }

    pub fn reference_integral(&self) -> &FineCurve {
        &self.cr_int
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::input::{InputKind, RefCurveParams};

    fn grid60(step: f64) -> Arc<TimeGrid> {
        Arc::new(TimeGrid::uniform(60, 1.0, step).unwrap())
    }

    fn exp_input(rate: f64) -> InputCurve {
        InputCurve::from_fn(InputKind::Arterial, format!("exp({rate})"), move |t| {
            (-rate * t).exp()
        })
    }

    /// Closed form of exp(-λt) ⊗ exp(-k t).
    fn double_exp(lambda: f64, k: f64, t: f64) -> f64 {
        ((-k * t).exp() - (-lambda * t).exp()) / (lambda - k)
    }

    #[test]
    fn zero_input_gives_zero_curve() {
        let zero = InputCurve::from_fn(InputKind::Arterial, "zero", |_| 0.0);
        assert!(convolve(&zero, 0.3, &grid60(0.1))
            .values()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn convolution_matches_double_exponential() {
        let g = grid60(0.1);
        let c = convolve(&exp_input(0.3), 0.1, &g);
        for j in 1..c.len() {
            let exact = double_exp(0.3, 0.1, c.time(j));
            assert!(
                ((c.values()[j] - exact) / exact).abs() < 1e-3,
                "t={} got {} want {exact}",
                c.time(j),
                c.values()[j]
            );
        }
    }

    #[test]
    fn zero_rate_kernel_integrates() {
        let one = InputCurve::from_fn(InputKind::Arterial, "one", |_| 1.0);
        let c = convolve(&one, 0.0, &grid60(0.1));
        for j in 0..c.len() {
            assert!((c.values()[j] - c.time(j)).abs() < 1e-11);
        }
    }

    #[test]
    fn cum_integral_exact_on_constants_and_lines() {
        let g = TimeGrid::uniform(10, 1.0, 0.1).unwrap();
        let ones = FineCurve::from_fn(&g, |_| 1.0);
        let ramp = cum_integral(&ones);
        assert!(ramp
            .values()
            .iter()
            .enumerate()
            .all(|(j, v)| (v - ramp.time(j)).abs() < 1e-12));
        let lin = FineCurve::from_fn(&g, |t| t);
        let q = cum_integral(&lin);
        assert!(q
            .values()
            .iter()
            .enumerate()
            .all(|(j, v)| (v - 0.5 * q.time(j).powi(2)).abs() < 1e-12));
    }

    #[test]
    fn cum_integral_of_sine() {
        let g = TimeGrid::uniform(20, 1.0, 0.1).unwrap();
        let s = cum_integral(&FineCurve::from_fn(&g, f64::sin));
        let h: f64 = 0.1;
        for j in 0..s.len() {
            let t = s.time(j);
            let err = s.values()[j] - (1.0 - t.cos());
            // leading trapezoid error term (h^2/12)(f'(t) - f'(0))
            let predicted = h * h / 12.0 * (t.cos() - 1.0);
            assert!((err - predicted).abs() < 1e-5, "t = {t}");
            if t <= std::f64::consts::FRAC_PI_2 {
                assert!(err.abs() < 1e-3);
            }
        }
    }

    #[test]
    fn response_identities() {
        let tm = ResponseTiming::new(20.0, 25.0, 2.0).unwrap();
        assert_eq!(response_h(&tm, 19.0), 0.0);
        assert_eq!(response_h(&tm, 20.0), 0.0);
        assert_eq!(response_h(&tm, 25.0), 1.0);
        // x = 2: 2^2 e^{-2}, evaluated independently
        let want = 4.0 * (-2.0f64).exp();
        assert!((response_h(&tm, 30.0) - want).abs() < 1e-14);
        assert!((want - 0.541_341_132_946_450_6).abs() < 1e-15);
        let flat = ResponseTiming::new(20.0, 25.0, 0.0).unwrap();
        assert_eq!(response_h(&flat, 40.0), 1.0);
        assert_eq!(response_h(&flat, 20.0), 0.0);
    }

    #[test]
    fn response_is_unimodal() {
        let tm = ResponseTiming::new(15.0, 22.0, 3.5).unwrap();
        let vals: Vec<f64> = (0..20_000)
            .map(|i| response_h(&tm, 15.0 + 1e-3 * (i + 1) as f64))
            .collect();
        let signs: Vec<bool> = vals.windows(2).map(|w| w[1] - w[0] > 0.0).collect();
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes, 1);
    }

    #[test]
    fn frame_average_cases() {
        let g = grid60(0.1);
        let c = FineCurve::from_fn(&g, |_| 3.5);
        assert!(frame_average(&c, &g)
            .values()
            .iter()
            .all(|v| (v - 3.5).abs() < 1e-12));
        let lin = FineCurve::from_fn(&g, |t| t);
        assert!((frame_average(&lin, &g).values()[0] - 0.5).abs() < 1e-12);

        let pi = std::f64::consts::PI;
        let gp = Arc::new(TimeGrid::new(vec![0.0], vec![pi], 0.01).unwrap());
        let s = FineCurve::from_fn(&gp, f64::sin);
        assert!((frame_average(&s, &gp).values()[0] - 2.0 / pi).abs() < 1e-3);
    }

    #[test]
    fn one_tissue_linear_in_k1_and_zero_at_k1_zero() {
        let g = grid60(0.1);
        let ca = exp_input(0.3);
        let a = one_tissue_forward(&OneTissueParams::new(0.7, 0.1).unwrap(), &ca, &g);
        let b = one_tissue_forward(&OneTissueParams::new(1.4, 0.1).unwrap(), &ca, &g);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_eq!(2.0 * x, *y);
        }
        let z = one_tissue_forward(&OneTissueParams::new(0.0, 0.1).unwrap(), &ca, &g);
        assert!(z.values().iter().all(|v| *v == 0.0));
    }

    fn preset() -> LpNtPetParams {
        LpNtPetParams::new(
            1.0,
            0.2,
            0.05,
            0.1,
            ResponseTiming::new(20.0, 25.0, 2.0).unwrap(),
        )
        .unwrap()
    }

    fn cr() -> InputCurve {
        InputCurve::reference(RefCurveParams::default()).unwrap()
    }

    #[test]
    fn no_integral_terms_reproduces_scaled_input() {
        let mut p = preset();
        p.k2 = 0.0;
        p.k2a = 0.0;
        p.gamma = 0.0;
        p.r1 = 1.7;
        let g = grid60(0.1);
        let fine = solve_lp_ntpet(
            &p,
            &cr().sample_fine(&g),
            &cum_integral(&cr().sample_fine(&g)),
        )
        .unwrap();
        for (j, v) in fine.values().iter().enumerate() {
            assert_eq!(*v, 1.7 * cr().sample(fine.time(j)));
        }
    }

    fn max_rel(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .filter(|(_, y)| y.abs() > 1e-12)
            .map(|(x, y)| ((x - y) / y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn matches_refined_solve() {
        for gamma in [0.0, 0.1] {
            let mut p = preset();
            p.gamma = gamma;
            let coarse = lp_ntpet_forward(&p, &cr(), &grid60(0.1)).unwrap();
            let fine = lp_ntpet_forward(&p, &cr(), &grid60(0.01)).unwrap();
            let err = max_rel(coarse.values(), fine.values());
            assert!(err < 1e-3, "gamma={gamma}: rel err {err}");
        }
    }

    #[test]
    fn refinement_converges() {
        let p = preset();
        let a = lp_ntpet_forward(&p, &cr(), &grid60(0.1)).unwrap();
        let b = lp_ntpet_forward(&p, &cr(), &grid60(0.05)).unwrap();
        let c = lp_ntpet_forward(&p, &cr(), &grid60(0.025)).unwrap();
        let d1 = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let d2 = b
            .values()
            .iter()
            .zip(c.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(d2 < d1 / 4.0 * 1.2, "d1={d1} d2={d2}");
        assert!(d2 < d1, "d1={d1} d2={d2}");
    }

    #[test]
    fn larger_gamma_never_raises_activity() {
        let g = grid60(0.1);
        let lo = lp_ntpet_forward(&preset(), &cr(), &g).unwrap();
        let mut p = preset();
        p.gamma = 0.4;
        let hi = lp_ntpet_forward(&p, &cr(), &g).unwrap();
        for (a, b) in hi
            .fine()
            .unwrap()
            .values()
            .iter()
            .zip(lo.fine().unwrap().values())
        {
            assert!(a <= b);
        }
    }

    #[test]
    fn output_is_causal() {
        let g = grid60(0.1);
        let base = cr();
        let bumped = InputCurve::from_fn(InputKind::Reference, "bumped", |t| {
            let v = RefCurveParams::default();
            let x = InputCurve::reference(v).unwrap().sample(t);
            if t > 30.0 {
                x + 5.0
            } else {
                x
            }
        });
        let a = lp_ntpet_forward(&preset(), &base, &g).unwrap();
        let b = lp_ntpet_forward(&preset(), &bumped, &g).unwrap();
        let fa = a.fine().unwrap();
        let fb = b.fine().unwrap();
        for j in 0..=300 {
            assert_eq!(fa.values()[j], fb.values()[j]);
        }
        assert_eq!(&a.values()[..30], &b.values()[..30]);
    }

    #[test]
    fn singular_step_reported() {
        let mut p = preset();
        p.k2a = -30.0;
        let err = lp_ntpet_forward(&p, &cr(), &grid60(0.1)).unwrap_err();
        assert!(matches!(err, Error::SingularStep { .. }));
    }

    #[test]
    fn simulator_counts_calls() {
        let sim = Simulator::new(cr(), grid60(0.1));
        assert_eq!(sim.calls(), 0);
        let a = sim.simulate(&preset()).unwrap();
        assert_eq!(sim.calls(), 1);
        assert_eq!(a, lp_ntpet_forward(&preset(), &cr(), &grid60(0.1)).unwrap());
    }
}
