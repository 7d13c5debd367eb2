//! LTI filters used to build regressions from measured signals.
//!
//! * [`FirstOrderFilter`] realises `ℱ(p) = λ/(p+λ)` as `ẋ = λ(u − x)`, `y = x`.
//! * [`DerivativeFilter`] realises `pℱ(p) = λp/(p+λ)` as `λ(u − ℱ[u])`, so the
//!   input is never differentiated numerically.
//! * [`Integrator`] accumulates `∫u`.
//!
//! All states start at zero.

use crate::ode::{rk4, Segment, Stage};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstOrderFilter {
    pub lambda: f64,
    pub x: f64,
}

impl FirstOrderFilter {
    pub fn new(lambda: f64) -> Self {
        debug_assert!(lambda > 0.0);
        Self { lambda, x: 0.0 }
    }

    #[inline]
    pub fn rate(lambda: f64, x: f64, u: f64) -> f64 {
        lambda * (u - x)
    }

    #[inline]
    pub fn output(&self) -> f64 {
        self.x
    }

    /// Advances one step and returns the new output.
    pub fn step(&mut self, u: Segment<f64>, dt: f64) -> f64 {
        let lambda = self.lambda;
        self.x = rk4(&self.x, dt, |st, x| Self::rate(lambda, *x, u.at(st)));
        self.x
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeFilter {
    pub lambda: f64,
    /// Internal low-pass state `ℱ[u]`.
    pub x: f64,
}

impl DerivativeFilter {
    pub fn new(lambda: f64) -> Self {
        debug_assert!(lambda > 0.0);
        Self { lambda, x: 0.0 }
    }

    #[inline]
    pub fn rate(lambda: f64, x: f64, u: f64) -> f64 {
        lambda * (u - x)
    }

    /// `pℱ[u]` for the current input sample.
    #[inline]
    pub fn output_for(lambda: f64, x: f64, u: f64) -> f64 {
        lambda * (u - x)
    }

    #[inline]
    pub fn output(&self, u: f64) -> f64 {
        Self::output_for(self.lambda, self.x, u)
    }

    /// Advances one step and returns the output at the end of the step.
    pub fn step(&mut self, u: Segment<f64>, dt: f64) -> f64 {
        let lambda = self.lambda;
        self.x = rk4(&self.x, dt, |st, x| Self::rate(lambda, *x, u.at(st)));
        self.output(u.end)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Integrator {
    pub x: f64,
}

impl Integrator {
    pub fn step(&mut self, u: Segment<f64>, dt: f64) -> f64 {
        self.x = rk4(&self.x, dt, |st, _| u.at(st));
        self.x
    }
}

/// Both sides of the swapping identity
/// `ℱ[wv] = ℱ[w]·v − ℱ[(1/(p+λ))[w]·v̇]`, integrated independently.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwappingCheck {
    lambda: f64,
    /// `ℱ[wv]`
    lhs: f64,
    /// `ℱ[w]`
    f_w: f64,
    /// `(1/(p+λ))[w]`
    aux: f64,
    /// `ℱ[aux·v̇]`
    f_aux_vdot: f64,
}

impl SwappingCheck {
    pub fn new(lambda: f64) -> Self {
        Self { lambda, lhs: 0.0, f_w: 0.0, aux: 0.0, f_aux_vdot: 0.0 }
    }

    pub fn step(&mut self, w: Segment<f64>, v: Segment<f64>, vdot: Segment<f64>, dt: f64) {
        let l = self.lambda;
        let x0 = [self.lhs, self.f_w, self.aux, self.f_aux_vdot];
        let x = rk4(&x0, dt, |st: Stage, x: &[f64; 4]| {
            let (w, v, vdot) = (w.at(st), v.at(st), vdot.at(st));
            [l * (w * v - x[0]), l * (w - x[1]), w - l * x[2], l * (x[2] * vdot - x[3])]
        });
        [self.lhs, self.f_w, self.aux, self.f_aux_vdot] = x;
    }

    /// `ℱ[wv] − (ℱ[w]·v − ℱ[(1/(p+λ))[w]·v̇])` for the current `v`.
    pub fn residual(&self, v: f64) -> f64 {
        self.lhs - (self.f_w * v - self.f_aux_vdot)
    }
}

/// Runs [`SwappingCheck`] on sampled signals up to `t_end` and returns the
/// residual there. `vdot` must be supplied analytically.
pub fn swap_residual(
    w: impl Fn(f64) -> f64,
    v: impl Fn(f64) -> f64,
    vdot: impl Fn(f64) -> f64,
    lambda: f64,
    dt: f64,
    t_end: f64,
) -> f64 {
    let mut check = SwappingCheck::new(lambda);
    let n = libm::round(t_end / dt) as usize;
    for k in 0..n {
        let t = k as f64 * dt;
        check.step(Segment::sample(t, dt, &w), Segment::sample(t, dt, &v), Segment::sample(t, dt, &vdot), dt);
    }
    check.residual(v(n as f64 * dt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run_fof(lambda: f64, u: impl Fn(f64) -> f64, dt: f64, t_end: f64) -> FirstOrderFilter {
        let mut f = FirstOrderFilter::new(lambda);
        let n = libm::round(t_end / dt) as usize;
        for k in 0..n {
            f.step(Segment::sample(k as f64 * dt, dt, &u), dt);
        }
        f
    }

    #[test]
    fn zero_input_stays_zero() {
        assert_eq!(run_fof(100.0, |_| 0.0, 1e-4, 1.0).output(), 0.0);
    }

    #[test]
    fn unit_step_response() {
        let f = run_fof(100.0, |_| 1.0, 1e-5, 0.01);
        let exact = 1.0 - libm::exp(-1.0);
        assert!((f.output() - exact).abs() < 1e-12);
    }

    #[test]
    fn unity_dc_gain() {
        let f = run_fof(100.0, |_| 3.5, 1e-4, 1.0);
        assert!((f.output() - 3.5).abs() < 1e-12);
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let mut d = DerivativeFilter { lambda: 100.0, x: 2.0 };
        for _ in 0..1000 {
            assert_eq!(d.step(Segment::hold(2.0), 1e-4), 0.0);
        }
    }

    #[test]
    fn derivative_of_ramp_tends_to_slope() {
        // closed form: pℱ[t] = 1 − e^{−λt}
        let lambda = 100.0;
        let dt = 1e-5;
        let mut d = DerivativeFilter::new(lambda);
        let mut out = 0.0;
        for k in 0..10_000 {
            let t = k as f64 * dt;
            out = d.step(Segment::sample(t, dt, |s| s), dt);
            let exact = 1.0 - libm::exp(-lambda * (t + dt));
            assert!((out - exact).abs() < 1e-10);
        }
        assert!((out - (1.0 - libm::exp(-10.0))).abs() < 1e-10);
    }

    #[test]
    fn derivative_sine_amplitude_matches_frequency_response() {
        let (lambda, w) = (100.0, 250.0);
        let expected = lambda * w / libm::hypot(w, lambda);
        let dt = 1e-5;
        let mut d = DerivativeFilter::new(lambda);
        let mut peak = 0.0_f64;
        for k in 0..200_000 {
            let t = k as f64 * dt;
            let y = d.step(Segment::sample(t, dt, |s| libm::sin(w * s)), dt);
            if t > 1.5 {
                peak = peak.max(y.abs());
            }
        }
        assert!((peak - expected).abs() / expected < 1e-4, "peak {peak} vs {expected}");
    }

    #[test]
    fn integrator_is_exact_for_cubic() {
        let mut i = Integrator::default();
        let dt = 0.01;
        for k in 0..100 {
            i.step(Segment::sample(k as f64 * dt, dt, |t| t * t * t), dt);
        }
        assert!((i.x - 0.25).abs() < 1e-13);
    }

    #[test]
    fn swap_residual_with_constant_v() {
        let r = swap_residual(|t| libm::sin(3.0 * t), |_| 2.0, |_| 0.0, 100.0, 1e-4, 1.0);
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn swap_residual_zero_signals() {
        assert_eq!(swap_residual(|_| 0.0, |_| 0.0, |_| 0.0, 100.0, 1e-3, 1.0), 0.0);
    }

    proptest! {
        #[test]
        fn filter_is_bibo(amp in 0.1..100.0_f64, w in 0.1..500.0_f64, lambda in 1.0..1000.0_f64) {
            let dt = 1e-4;
            let mut f = FirstOrderFilter::new(lambda);
            for k in 0..5000 {
                let out = f.step(Segment::sample(k as f64 * dt, dt, |t| amp * libm::sin(w * t)), dt);
                prop_assert!(out.abs() <= amp * (1.0 + 1e-9));
            }
        }
    }
}
