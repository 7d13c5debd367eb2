//! Parameter-estimation-based observer with finite convergence time.
//!
//! The observer error `ε = î_αβ − i_αβ` obeys `ε̇ = Q⁻¹A(t)·ε`, so
//! `ε(t) = Φ(t)·Θ` with `Θ = ε(0)` and `Φ̇ = Q⁻¹A·Φ`, `Φ(0) = I`.
//! Filtering the d-axis voltage equation yields the scalar regression
//! `y = Ψᵀ·Θ` with
//!
//! ```text
//! y = ℱ[R_s î_α − v_d − L_q ω î_β] + L_d·pℱ[î_α]
//! Ψ = ℱ[R_s Φ₁ − L_q ω Φ₂]        + L_d·pℱ[Φ₁]
//! ```
//!
//! where `Φ₁`, `Φ₂` are the rows of `Φ`. Least squares with forgetting
//! estimates `Θ`; once the regressor has been exciting, the combination
//! [`theta_fct`] equals `Θ` exactly and `î_αβ − Φ·Θ` is the true current.

use nalgebra::{Cholesky, Matrix2, SMatrix, Vector2};

use crate::impl_ode_state;
use crate::linalg::{MatrixNorm, SquareMatrix};
use crate::observer::{normalized_a, LtvCoefficients};
use crate::ode::{rk4, Segment};
use crate::plant::MotorParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionMatrix {
    pub phi: Matrix2<f64>,
}

impl Default for TransitionMatrix {
    fn default() -> Self {
        Self { phi: Matrix2::identity() }
    }
}

impl TransitionMatrix {
    /// First row of `Φ` as a column vector.
    pub fn row1(&self) -> Vector2<f64> {
        Vector2::new(self.phi[(0, 0)], self.phi[(0, 1)])
    }

    pub fn row2(&self) -> Vector2<f64> {
        Vector2::new(self.phi[(1, 0)], self.phi[(1, 1)])
    }
}

#[inline]
pub fn phi_rate(phi: &Matrix2<f64>, coeffs: &LtvCoefficients, params: &MotorParams) -> Matrix2<f64> {
    normalized_a(coeffs, params) * phi
}

pub fn phi_step(
    phi: &TransitionMatrix,
    coeffs: Segment<LtvCoefficients>,
    params: &MotorParams,
    dt: f64,
) -> TransitionMatrix {
    TransitionMatrix { phi: rk4(&phi.phi, dt, |st, p| phi_rate(p, &coeffs.at(st), params)) }
}

/// Signals the regression filters consume at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LreInputs {
    pub i_hat: Vector2<f64>,
    pub phi: TransitionMatrix,
    pub omega: f64,
    pub v_d: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LreSample {
    pub y: f64,
    pub psi: Vector2<f64>,
}

impl LreSample {
    /// `y − Ψᵀθ`.
    pub fn residual(&self, theta: &Vector2<f64>) -> f64 {
        self.y - self.psi.dot(theta)
    }
}

/// States of the six filters behind `(y, Ψ)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LreFilters {
    /// `ℱ[R_s î_α − v_d − L_q ω î_β]`
    pub y1: f64,
    /// low-pass state inside `pℱ[î_α]`
    pub i_alpha: f64,
    /// `ℱ[R_s Φ₁ − L_q ω Φ₂]`, one filter per component
    pub psi1: Vector2<f64>,
    /// low-pass states inside `pℱ[Φ₁]`, one per component
    pub phi1: Vector2<f64>,
}

impl_ode_state!(LreFilters { y1, i_alpha, psi1, phi1 });

impl LreFilters {
    pub fn rate(&self, u: &LreInputs, params: &MotorParams, lambda: f64) -> Self {
        let (r, lq, w) = (params.r_s, params.l_q, u.omega);
        let (phi1, phi2) = (u.phi.row1(), u.phi.row2());
        Self {
            y1: lambda * (r * u.i_hat.x - u.v_d - lq * w * u.i_hat.y - self.y1),
            i_alpha: lambda * (u.i_hat.x - self.i_alpha),
            psi1: (phi1 * r - phi2 * (lq * w) - self.psi1) * lambda,
            phi1: (phi1 - self.phi1) * lambda,
        }
    }

    /// `(y, Ψ)` from the filter states and the inputs at the same instant.
    pub fn sample(&self, u: &LreInputs, params: &MotorParams, lambda: f64) -> LreSample {
        let ld = params.l_d;
        LreSample {
            y: self.y1 + ld * lambda * (u.i_hat.x - self.i_alpha),
            psi: self.psi1 + (u.phi.row1() - self.phi1) * (ld * lambda),
        }
    }

    /// Advances the bank one step and returns the sample at the end of it.
    pub fn step(&mut self, u: Segment<LreInputs>, params: &MotorParams, lambda: f64, dt: f64) -> LreSample {
        *self = rk4(self, dt, |st, f| f.rate(&u.at(st), params, lambda));
        self.sample(&u.end, params, lambda)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FctLsConfig {
    pub gamma: f64,
    pub chi0: f64,
    pub k: f64,
    pub f0: Matrix2<f64>,
    pub g: Matrix2<f64>,
    pub theta0: Vector2<f64>,
    pub norm: MatrixNorm,
    /// `|det(I − zFF₀⁻¹)|` above which [`theta_fct`] returns an estimate.
    pub det_tol: f64,
}

impl Default for FctLsConfig {
    fn default() -> Self {
        let f0 = Matrix2::new(1.0, 1.0 / 5.0, 1.0 / 4.0, 1.0 / 3.0);
        Self {
            gamma: 1.0,
            chi0: 4.0,
            k: 15.0,
            f0,
            g: Matrix2::new(6.25e5, 0.0, 0.0, 6.25e12),
            theta0: Vector2::zeros(),
            norm: MatrixNorm::Spectral,
            det_tol: 1e-6 * MatrixNorm::Spectral.of(&f0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FctLsConfigError {
    NonPositive(&'static str),
    /// `k < ‖F₀‖`
    NormBound {
        k: f64,
        f0_norm: f64,
    },
    SingularF0,
    GNotPositiveDefinite,
}

impl core::fmt::Display for FctLsConfigError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::NonPositive(name) => write!(f, "{name} must be positive"),
            Self::NormBound { k, f0_norm } => {
                write!(f, "k = {k} is smaller than the norm of F0 ({f0_norm})")
            }
            Self::SingularF0 => write!(f, "F0 is singular"),
            Self::GNotPositiveDefinite => write!(f, "G is not positive definite"),
        }
    }
}

impl FctLsConfig {
    pub fn validate(&self) -> Result<(), FctLsConfigError> {
        for (name, v) in [("gamma", self.gamma), ("chi0", self.chi0), ("k", self.k)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FctLsConfigError::NonPositive(name));
            }
        }
        let f0_norm = self.norm.of(&self.f0);
        if self.k < f0_norm {
            return Err(FctLsConfigError::NormBound { k: self.k, f0_norm });
        }
        if self.f0.determinant() == 0.0 {
            return Err(FctLsConfigError::SingularF0);
        }
        let g_sym = (self.g + self.g.transpose()) * 0.5;
        if Cholesky::new(g_sym).is_none() {
            return Err(FctLsConfigError::GNotPositiveDefinite);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FctLsState {
    pub theta_hat: Vector2<f64>,
    pub f: Matrix2<f64>,
    pub z: f64,
}

impl_ode_state!(FctLsState { theta_hat, f, z });

impl FctLsState {
    pub fn new(cfg: &FctLsConfig) -> Self {
        Self { theta_hat: cfg.theta0, f: cfg.f0, z: 1.0 }
    }

    /// Forgetting factor `χ = χ₀(1 − ‖F‖/k)`.
    pub fn chi(&self, cfg: &FctLsConfig) -> f64 {
        cfg.chi0 * (1.0 - cfg.norm.of(&self.f) / cfg.k)
    }

    pub fn rate(&self, s: &LreSample, cfg: &FctLsConfig) -> Self {
        let chi = self.chi(cfg);
        let fg_psi = self.f * (cfg.g * s.psi) * cfg.gamma;
        Self {
            theta_hat: fg_psi * s.residual(&self.theta_hat),
            f: -(fg_psi * (s.psi.transpose() * self.f)) + self.f * chi,
            z: -chi * self.z,
        }
    }
}

pub fn fct_ls_step(s: &FctLsState, sample: Segment<LreSample>, cfg: &FctLsConfig, dt: f64) -> FctLsState {
    rk4(s, dt, |st, x| x.rate(&sample.at(st), cfg))
}

/// `z·F·F₀⁻¹`
fn zff0_inv(s: &FctLsState, cfg: &FctLsConfig) -> Option<Matrix2<f64>> {
    cfg.f0.try_inverse().map(|f0_inv| s.f * f0_inv * s.z)
}

/// `det(I − zFF₀⁻¹)`; zero at the initial condition.
pub fn fct_det(s: &FctLsState, cfg: &FctLsConfig) -> f64 {
    zff0_inv(s, cfg).map_or(0.0, |m| (Matrix2::identity() - m).determinant())
}

/// `[I − zFF₀⁻¹]⁻¹[Θ̂ − zFF₀⁻¹Θ₀]`, or `None` while the matrix is too close
/// to singular to invert.
pub fn theta_fct(s: &FctLsState, cfg: &FctLsConfig) -> Option<Vector2<f64>> {
    let m = zff0_inv(s, cfg)?;
    let lhs = Matrix2::identity() - m;
    let det = lhs.determinant();
    if det.is_nan() || det.abs() <= cfg.det_tol {
        return None;
    }
    let rhs = s.theta_hat - m * cfg.theta0;
    Some(Vector2::new(
        (lhs[(1, 1)] * rhs.x - lhs[(0, 1)] * rhs.y) / det,
        (lhs[(0, 0)] * rhs.y - lhs[(1, 0)] * rhs.x) / det,
    ))
}

/// `î_αβ − Φ·θ`
pub fn reconstruct_state(i_hat: &Vector2<f64>, phi: &TransitionMatrix, theta: &Vector2<f64>) -> Vector2<f64> {
    i_hat - phi.phi * theta
}

/// Accumulates `∫ψψᵀ` and records when it first dominates `κI`.
///
/// The Gram matrix is the ODE state; [`IeMonitor::check`] must be called
/// after each step to latch `t_c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IeMonitor<const N: usize> {
    pub gram: SMatrix<f64, N, N>,
    pub kappa: f64,
    pub t_c: Option<f64>,
}

impl<const N: usize> IeMonitor<N> {
    pub fn new(kappa: f64) -> Self {
        debug_assert!(kappa > 0.0);
        Self { gram: SMatrix::zeros(), kappa, t_c: None }
    }

    #[inline]
    pub fn gram_rate(psi: &SMatrix<f64, N, 1>) -> SMatrix<f64, N, N> {
        psi * psi.transpose()
    }

    pub fn min_eig(&self) -> f64
    where
        SMatrix<f64, N, N>: SquareMatrix,
    {
        self.gram.min_sym_eigenvalue()
    }

    /// `gram ≥ κI`, tested with a Cholesky factorisation of `gram − κI`.
    pub fn is_exciting(&self) -> bool {
        let shifted = self.gram - SMatrix::<f64, N, N>::identity() * self.kappa;
        Cholesky::new(shifted).is_some()
    }

    /// Latches `t_c` the first time the Gram matrix passes the threshold.
    pub fn check(&mut self, t: f64) -> Option<f64> {
        if self.t_c.is_none() && self.is_exciting() {
            self.t_c = Some(t);
        }
        self.t_c
    }

    /// Integrates one step of `ψ` and then checks the threshold at `t + dt`.
    pub fn step(&mut self, psi: Segment<SMatrix<f64, N, 1>>, t: f64, dt: f64) -> Option<f64> {
        self.gram = rk4(&self.gram, dt, |st, _| Self::gram_rate(&psi.at(st)));
        self.check(t + dt)
    }
}
