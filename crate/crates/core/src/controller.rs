//! Cascaded PI speed and current control.
//!
//! The controller is sampled once per simulation step and its outputs are
//! held over the step. Each PI uses the series form
//! `u = k_p·(e + (1/T_i)·∫e)` with the integral advanced by forward Euler,
//! and stops integrating while its output is clamped.

/// Series-form PI with output limits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PiController {
    pub kp: f64,
    pub ti: f64,
    /// `∫e dt`
    pub integ: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl PiController {
    pub fn new(kp: f64, ti: f64, u_min: f64, u_max: f64) -> Self {
        debug_assert!(ti > 0.0 && u_min <= u_max);
        Self { kp, ti, integ: 0.0, u_min, u_max }
    }

    pub fn unbounded(kp: f64, ti: f64) -> Self {
        Self::new(kp, ti, f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Output for error `e` with the current integral, before clamping.
    #[inline]
    pub fn raw_output(&self, e: f64) -> f64 {
        self.kp * (e + self.integ / self.ti)
    }

    /// Returns the clamped output for error `e` and integrates `e` over `dt`
    /// unless the output was clamped.
    pub fn step(&mut self, e: f64, dt: f64) -> f64 {
        let raw = self.raw_output(e);
        let u = raw.clamp(self.u_min, self.u_max);
        if u == raw {
            self.integ += e * dt;
        }
        u
    }

    pub fn reset(&mut self) {
        self.integ = 0.0;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CascadeGains {
    pub kp_id: f64,
    pub ti_id: f64,
    pub kp_iq: f64,
    pub ti_iq: f64,
    pub kp_w: f64,
    pub ti_w: f64,
    /// Symmetric voltage limit on `v_d` and `v_q` (V).
    pub v_max: f64,
}

impl Default for CascadeGains {
    /// Reference-scenario gains. The speed-loop integral time is `0.011 s`
    /// (see the README).
    fn default() -> Self {
        Self { kp_id: 0.5, ti_id: 0.0011, kp_iq: 0.5, ti_iq: 0.0011, kp_w: 2.0, ti_w: 0.011, v_max: 400.0 }
    }
}

/// Speed loop producing `i_q*`, and `d`/`q` current loops producing `v_dq`.
/// `i_d* = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CascadeController {
    pub speed: PiController,
    pub current_d: PiController,
    pub current_q: PiController,
}

/// Output of one controller sample.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CascadeOutput {
    pub v_d: f64,
    pub v_q: f64,
    pub i_q_ref: f64,
}

impl CascadeController {
    pub fn new(g: &CascadeGains) -> Self {
        Self {
            speed: PiController::unbounded(g.kp_w, g.ti_w),
            current_d: PiController::new(g.kp_id, g.ti_id, -g.v_max, g.v_max),
            current_q: PiController::new(g.kp_iq, g.ti_iq, -g.v_max, g.v_max),
        }
    }

    pub fn step(&mut self, omega_ref: f64, omega: f64, i_d: f64, i_q: f64, dt: f64) -> CascadeOutput {
        let i_q_ref = self.speed.step(omega_ref - omega, dt);
        let v_d = self.current_d.step(-i_d, dt);
        let v_q = self.current_q.step(i_q_ref - i_q, dt);
        CascadeOutput { v_d, v_q, i_q_ref }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_error_gives_zero_output() {
        let mut pi = PiController::new(0.5, 0.0011, -400.0, 400.0);
        for _ in 0..10 {
            assert_eq!(pi.step(0.0, 1e-6), 0.0);
        }
    }

    #[test]
    fn constant_error_ramps() {
        let mut pi = PiController::new(0.5, 0.0011, -400.0, 400.0);
        let dt = 1e-6;
        for n in 0..5000 {
            let t = n as f64 * dt;
            let u = pi.step(1.0, dt);
            assert_relative_eq!(u, 0.5 + 0.5 / 0.0011 * t, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn clamped_output_freezes_integral() {
        let mut pi = PiController::new(1.0, 1.0, -1.0, 1.0);
        pi.integ = 0.5;
        assert_eq!(pi.step(3.0, 0.1), 1.0);
        assert_eq!(pi.integ, 0.5);
        assert_eq!(pi.step(-3.0, 0.1), -1.0);
        assert_eq!(pi.integ, 0.5);
        pi.step(0.1, 0.1);
        assert_relative_eq!(pi.integ, 0.51, epsilon = 1e-15);
    }

    #[test]
    fn cascade_at_rest_is_silent() {
        let mut c = CascadeController::new(&CascadeGains::default());
        assert_eq!(c.step(0.0, 0.0, 0.0, 0.0, 1e-6), CascadeOutput::default());
    }

    #[test]
    fn cascade_composes_speed_and_current_loops() {
        let g = CascadeGains::default();
        let mut c = CascadeController::new(&g);
        let dt = 1e-6;
        // speed error 1 rad/s, currents pinned at zero
        for n in 0..100 {
            let t = n as f64 * dt;
            let out = c.step(1.0, 0.0, 0.0, 0.0, dt);
            let iq_ref = g.kp_w * (1.0 + t / g.ti_w);
            assert_relative_eq!(out.i_q_ref, iq_ref, max_relative = 1e-12);
            // ∫(i_q* − 0) in closed form
            let integ = g.kp_w * (t + t * (t - dt) / (2.0 * g.ti_w));
            let v_q = g.kp_iq * (iq_ref + integ / g.ti_iq);
            assert_relative_eq!(out.v_q, v_q, max_relative = 1e-9);
            assert_eq!(out.v_d, 0.0);
        }
    }
}
