//! Ground-truth interior PMSM with an inter-turn short circuit in phase A.
//!
//! The electrical state `(i_d, i_q, i_f)` follows the explicit ODE
//! `Ā·di/dt = −B̄·i + C̄` obtained from the dq voltage and flux equations of
//! the faulty machine. Speed follows `J·ω̇ = n_p[(L_d − L_q)i_d i_q + φ i_q] − τ_L`
//! and `θ̇ = ω`.
//!
//! The self-inductance derivative `L̇_AA` is taken as zero.

use core::f64::consts::TAU;
use core::fmt;

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::impl_ode_state;
use crate::ode::{try_rk4, Segment};

/// Normalised `|det Ā|` below which the mass matrix counts as singular.
pub const SINGULAR_DET_TOL: f64 = 1e-9;

/// Motor nameplate and fault-circuit constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotorParams {
    /// Pole pairs.
    pub n_p: f64,
    /// d-axis inductance (H).
    pub l_d: f64,
    /// q-axis inductance (H).
    pub l_q: f64,
    /// Stator resistance (Ω).
    pub r_s: f64,
    /// Rotor inertia (kg·m²).
    pub j: f64,
    /// Permanent-magnet flux (Wb).
    pub phi: f64,
    /// Fault resistance (Ω).
    pub r_f: f64,
    /// Phase-A self-inductance (H).
    pub l_aa: f64,
}

impl MotorParams {
    /// The isotropic surface-mount reference motor, with `L_AA = 2·L_d`.
    pub const fn reference() -> Self {
        let l = 1.679e-3;
        Self { n_p: 3.0, l_d: l, l_q: l, r_s: 1.5, j: 3.6e-3, phi: 0.1725, r_f: 5.0, l_aa: 2.0 * l }
    }

    pub fn is_isotropic(&self) -> bool {
        self.l_d == self.l_q
    }

    /// `Q = diag(L_d, L_q)`.
    pub fn q_matrix(&self) -> nalgebra::Matrix2<f64> {
        nalgebra::Matrix2::new(self.l_d, 0.0, 0.0, self.l_q)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let positive = [
            ("L_d", self.l_d),
            ("L_q", self.l_q),
            ("R_s", self.r_s),
            ("J", self.j),
            ("R_f", self.r_f),
            ("L_AA", self.l_aa),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ParamError::NonPositive(name));
            }
        }
        if !self.n_p.is_finite() || !self.phi.is_finite() {
            return Err(ParamError::NonFinite("n_p/phi"));
        }
        // The faulted loop's effective inductance is (2/3)η²(L_AA − L_d cos²θ − L_q sin²θ).
        let l_max = self.l_d.max(self.l_q);
        if self.l_aa <= l_max {
            return Err(ParamError::FaultLoopInductance { l_aa: self.l_aa, l_max });
        }
        Ok(())
    }
}

impl Default for MotorParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// Fault ratio and injection time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaultSpec {
    /// Fraction of short-circuited turns in phase A.
    pub eta: f64,
    /// Injection time (s).
    pub t_fault: f64,
}

impl FaultSpec {
    pub const fn healthy() -> Self {
        Self { eta: 0.0, t_fault: 0.0 }
    }

    /// Fault ratio in effect at time `t` (a step at `t_fault`).
    #[inline]
    pub fn effective_eta(&self, t: f64) -> f64 {
        if t >= self.t_fault {
            self.eta
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(ParamError::EtaOutOfRange(self.eta));
        }
        if !(self.t_fault >= 0.0 && self.t_fault.is_finite()) {
            return Err(ParamError::NonFinite("t_fault"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamError {
    NonPositive(&'static str),
    NonFinite(&'static str),
    EtaOutOfRange(f64),
    FaultLoopInductance { l_aa: f64, l_max: f64 },
}

impl fmt::Display for ParamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamError::NonPositive(name) => write!(f, "{name} must be positive and finite"),
            ParamError::NonFinite(name) => write!(f, "{name} must be finite"),
            ParamError::EtaOutOfRange(eta) => write!(f, "fault ratio eta={eta} outside [0, 1]"),
            ParamError::FaultLoopInductance { l_aa, l_max } => write!(
                f,
                "L_AA={l_aa} must exceed max(L_d, L_q)={l_max}; otherwise the shorted loop has \
                 non-positive effective inductance"
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PlantError {
    /// `Ā` is numerically singular; `det_ratio` is `det Ā` normalised by
    /// the product of its diagonal.
    SingularMassMatrix { det_ratio: f64, theta: f64, eta: f64 },
    /// The state left the finite numbers (the closed loop diverged).
    NonFinite,
}

impl fmt::Display for PlantError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlantError::SingularMassMatrix { det_ratio, theta, eta } => write!(
                f,
                "singular mass matrix (normalised det {det_ratio:e}) at theta={theta}, eta={eta}: \
                 inconsistent L_AA / eta"
            ),
            PlantError::NonFinite => write!(f, "plant state is not finite"),
        }
    }
}

/// Ground-truth plant state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlantState {
    pub i_d: f64,
    pub i_q: f64,
    /// Short-circuit loop current (A).
    pub i_f: f64,
    /// Electrical speed (rad/s).
    pub omega: f64,
    /// Electrical position (rad), kept in `[0, 2π)` between steps.
    pub theta: f64,
}

impl_ode_state!(PlantState { i_d, i_q, i_f, omega, theta });

impl PlantState {
    pub fn i_dq(&self) -> Vector2<f64> {
        Vector2::new(self.i_d, self.i_q)
    }

    /// The transformed current `i_αβ = i_dq + (2η/3)(cos θ, −sin θ)·i_f`.
    pub fn i_alpha_beta(&self, eta: f64) -> Vector2<f64> {
        let k = 2.0 * eta / 3.0 * self.i_f;
        Vector2::new(self.i_d + k * libm::cos(self.theta), self.i_q - k * libm::sin(self.theta))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlantInput {
    pub v_d: f64,
    pub v_q: f64,
    /// Load torque (N·m).
    pub tau_l: f64,
}

impl PlantInput {
    pub fn v_dq(&self) -> Vector2<f64> {
        Vector2::new(self.v_d, self.v_q)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluxVector {
    pub psi_d: f64,
    pub psi_q: f64,
    pub psi_fault: f64,
}

/// The inductance matrix `Ā` (also the flux matrix).
pub fn inductance_matrix(theta: f64, params: &MotorParams, eta: f64) -> Matrix3<f64> {
    let (s, c) = (libm::sin(theta), libm::cos(theta));
    let a = 2.0 * eta / 3.0;
    Matrix3::new(
        params.l_d,
        0.0,
        a * params.l_d * c,
        0.0,
        params.l_q,
        -a * params.l_q * s,
        eta * params.l_d * c,
        -eta * params.l_q * s,
        2.0 / 3.0 * eta * eta * params.l_aa,
    )
}

/// Flux linkages `(ψ_d, ψ_q, ψ_fault)`.
pub fn flux_linkage(state: &PlantState, params: &MotorParams, eta: f64) -> FluxVector {
    let l = inductance_matrix(state.theta, params, eta);
    let psi = l * Vector3::new(state.i_d, state.i_q, state.i_f)
        + Vector3::new(params.phi, 0.0, eta * params.phi * libm::cos(state.theta));
    FluxVector { psi_d: psi.x, psi_q: psi.y, psi_fault: psi.z }
}

/// The matrices of `Ā·di/dt = −B̄·i + C̄`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElectricalModel {
    pub a_bar: Matrix3<f64>,
    pub b_bar: Matrix3<f64>,
    pub c_bar: Vector3<f64>,
}

impl ElectricalModel {
    pub fn new(state: &PlantState, input: &PlantInput, params: &MotorParams, eta: f64) -> Self {
        let (s, c) = (libm::sin(state.theta), libm::cos(state.theta));
        let w = state.omega;
        let r = params.r_s;
        let dl = params.l_d - params.l_q;
        let a = 2.0 * eta / 3.0;
        let m13 = a * (r * c - dl * w * s);
        let m23 = a * (-r * s + dl * w * c);
        let m31 = eta * (r * c - params.l_d * w * s);
        let m32 = -eta * (r * s + params.l_q * w * c);
        let m33 = eta * r + params.r_f;
        let b_bar = Matrix3::new(r, -w * params.l_q, m13, w * params.l_d, r, m23, m31, m32, m33);
        let c_bar = Vector3::new(input.v_d, input.v_q - w * params.phi, eta * params.phi * w * s);
        Self { a_bar: inductance_matrix(state.theta, params, eta), b_bar, c_bar }
    }

    /// `det Ā / (L_d·L_q·(2/3)η²L_AA)`, i.e. `1 − (L_d cos²θ + L_q sin²θ)/L_AA`.
    pub fn det_ratio(&self) -> f64 {
        let diag = self.a_bar[(0, 0)] * self.a_bar[(1, 1)] * self.a_bar[(2, 2)];
        self.a_bar.determinant() / diag
    }
}

/// Time derivative of the plant state.
///
/// With `eta = 0` the shorted loop is disconnected: the healthy dq model is
/// used and `i_f` is held.
pub fn derivatives(
    state: &PlantState,
    input: &PlantInput,
    params: &MotorParams,
    eta: f64,
) -> Result<PlantState, PlantError> {
    if ![state.i_d, state.i_q, state.i_f, state.omega, state.theta].iter().all(|v| v.is_finite()) {
        return Err(PlantError::NonFinite);
    }
    let (di_d, di_q, di_f) = if eta == 0.0 {
        let w = state.omega;
        (
            (-params.r_s * state.i_d + w * params.l_q * state.i_q + input.v_d) / params.l_d,
            (-params.r_s * state.i_q - w * params.l_d * state.i_d - w * params.phi + input.v_q) / params.l_q,
            0.0,
        )
    } else {
        let model = ElectricalModel::new(state, input, params, eta);
        let det_ratio = model.det_ratio();
        if det_ratio.is_nan() || det_ratio.abs() < SINGULAR_DET_TOL {
            return Err(PlantError::SingularMassMatrix { det_ratio, theta: state.theta, eta });
        }
        let i = Vector3::new(state.i_d, state.i_q, state.i_f);
        let rhs = model.c_bar - model.b_bar * i;
        let di = model.a_bar.lu().solve(&rhs).ok_or(PlantError::SingularMassMatrix {
            det_ratio,
            theta: state.theta,
            eta,
        })?;
        (di.x, di.y, di.z)
    };
    let torque = params.n_p * ((params.l_d - params.l_q) * state.i_d * state.i_q + params.phi * state.i_q);
    Ok(PlantState {
        i_d: di_d,
        i_q: di_q,
        i_f: di_f,
        omega: (torque - input.tau_l) / params.j,
        theta: state.omega,
    })
}

/// Fault-induced dq voltages `(e_d, e_q)`; `dif_dt` is the current `di_f/dt`.
pub fn e_dq(state: &PlantState, dif_dt: f64, params: &MotorParams, eta: f64) -> Vector2<f64> {
    let (s, c) = (libm::sin(state.theta), libm::cos(state.theta));
    let a = 2.0 * eta / 3.0;
    let w_dl = state.omega * (params.l_d - params.l_q);
    Vector2::new(
        a * ((-params.r_s * c + w_dl * s) * state.i_f - params.l_d * c * dif_dt),
        a * ((params.r_s * s - w_dl * c) * state.i_f + params.l_q * s * dif_dt),
    )
}

/// Wraps an angle to `[0, 2π)`.
#[inline]
pub fn wrap_angle(theta: f64) -> f64 {
    let r = libm::fmod(theta, TAU);
    let r = if r < 0.0 { r + TAU } else { r };
    // fmod of a value just below 0 can round up to exactly 2π
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// One RK4 step of the plant with the input held over the step.
pub fn step(
    state: &PlantState,
    input: &PlantInput,
    params: &MotorParams,
    eta: f64,
    dt: f64,
) -> Result<PlantState, PlantError> {
    step_with(state, Segment::hold(*input), params, eta, dt)
}

/// One RK4 step of the plant with a time-varying input.
pub fn step_with(
    state: &PlantState,
    input: Segment<PlantInput>,
    params: &MotorParams,
    eta: f64,
    dt: f64,
) -> Result<PlantState, PlantError> {
    let mut next = try_rk4(state, dt, |stage, s| derivatives(s, &input.at(stage), params, eta))?;
    next.theta = wrap_angle(next.theta);
    Ok(next)
}
