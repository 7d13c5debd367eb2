//! Open-loop linear observer of the transformed current `i_αβ`.
//!
//! The transformed current obeys `Q·di_αβ/dt = A(t)·i_αβ + b(t)` whatever the
//! fault current does, with
//! `A = [[−R_s, ωL_q], [−ωL_d, −R_s]]`, `b = (0, −ωφ) + v_dq` and
//! `Q = diag(L_d, L_q)`. Copying that equation gives an observer whose error
//! decays at a rate fixed by the motor parameters. The distance between the
//! estimate and the measured `i_dq` then tracks `(2η/3)|i_f|`.

use nalgebra::{Matrix2, Vector2};

use crate::ode::{rk4, Segment};
use crate::plant::MotorParams;

/// `A(t)` and `b(t)` at one time instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LtvCoefficients {
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
}

pub fn ltv_coefficients(omega: f64, v_dq: Vector2<f64>, params: &MotorParams) -> LtvCoefficients {
    LtvCoefficients {
        a: Matrix2::new(-params.r_s, omega * params.l_q, -omega * params.l_d, -params.r_s),
        b: Vector2::new(v_dq.x, v_dq.y - omega * params.phi),
    }
}

/// `Q⁻¹·A`, the system matrix of the error dynamics.
pub fn normalized_a(coeffs: &LtvCoefficients, params: &MotorParams) -> Matrix2<f64> {
    let mut m = coeffs.a;
    m.row_mut(0).scale_mut(1.0 / params.l_d);
    m.row_mut(1).scale_mut(1.0 / params.l_q);
    m
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObserverState {
    pub i_hat: Vector2<f64>,
}

impl ObserverState {
    pub fn new(i_alpha: f64, i_beta: f64) -> Self {
        Self { i_hat: Vector2::new(i_alpha, i_beta) }
    }
}

/// `dî/dt = Q⁻¹(A·î + b)`.
#[inline]
pub fn olo_rate(i_hat: &Vector2<f64>, coeffs: &LtvCoefficients, params: &MotorParams) -> Vector2<f64> {
    let r = coeffs.a * i_hat + coeffs.b;
    Vector2::new(r.x / params.l_d, r.y / params.l_q)
}

/// One RK4 step of the observer.
pub fn olo_step(
    obs: &ObserverState,
    coeffs: Segment<LtvCoefficients>,
    params: &MotorParams,
    dt: f64,
) -> ObserverState {
    ObserverState { i_hat: rk4(&obs.i_hat, dt, |st, x| olo_rate(x, &coeffs.at(st), params)) }
}

/// `|î_αβ − i_dq|`.
#[inline]
pub fn fault_severity(i_hat: &Vector2<f64>, i_dq: &Vector2<f64>) -> f64 {
    (i_hat - i_dq).norm()
}

/// `V(ε) = ½(L_d/L_q·ε_α² + L_q/L_d·ε_β²)`.
pub fn lyapunov(eps: &Vector2<f64>, params: &MotorParams) -> f64 {
    0.5 * (params.l_d / params.l_q * eps.x * eps.x + params.l_q / params.l_d * eps.y * eps.y)
}

/// Constants of the error bound `|ε(t)|² ≤ m·e^{−ρt}·|ε(0)|²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayBound {
    pub m: f64,
    pub rho: f64,
}

impl DecayBound {
    pub fn new(params: &MotorParams) -> Self {
        let (r1, r2) = (params.l_d / params.l_q, params.l_q / params.l_d);
        Self { m: r1.max(r2) / r1.min(r2), rho: params.r_s * (1.0 / params.l_q).min(1.0 / params.l_d) }
    }

    /// Upper bound on `|ε(t)|²`.
    pub fn envelope(&self, eps0_sq: f64, t: f64) -> f64 {
        self.m * libm::exp(-self.rho * t) * eps0_sq
    }
}
