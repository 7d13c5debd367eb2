//! Online estimation of `R_s` and `L` for the isotropic motor under fault.
//!
//! For `L_d = L_q = L` the fault voltages satisfy `sin θ·e_d + cos θ·e_q = 0`,
//! which removes the fault from one combination of the current equations.
//! Writing `θ = θ₀ + v_ω` with `v_ω = ∫ω` and filtering gives the nonlinear
//! regression `𝒴 = ξᵀ𝒢(μ)` with `μ = (R_s/L, 1/L, cot θ₀)` and
//! `𝒢(μ) = (μ₁, μ₁μ₃, μ₂, μ₂μ₃, μ₃)`. Only the magnet flux `φ` enters as a
//! known constant.
//!
//! # Signal flow
//!
//! `φ₁ = cos v_ω`, `φ₂ = sin v_ω`. Every filtered term has its own state in
//! [`NlreFilters`]:
//!
//! | state            | realises                      | used by        |
//! |------------------|-------------------------------|----------------|
//! | `pf[0]`          | `pℱ[i_d]`                     | φ₃, φ₄, nested |
//! | `pf[1]`          | `pℱ[i_q]`                     | φ₃, φ₄, nested |
//! | `nested[0]`      | `ℱ[ω φ₂ pℱ[i_d]]`             | φ₃             |
//! | `nested[1]`      | `ℱ[ω φ₁ pℱ[i_d]]`             | φ₄             |
//! | `nested[2]`      | `ℱ[ω φ₁ pℱ[i_q]]`             | φ₃             |
//! | `nested[3]`      | `ℱ[ω φ₂ pℱ[i_q]]`             | φ₄             |
//! | `lp[0]`, `lp[1]` | `ℱ[φ₁ i_d]`, `ℱ[φ₂ i_d]`      | −φ₅, −φ₆       |
//! | `lp[2]`, `lp[3]` | `ℱ[φ₁ ω i_q]`, `ℱ[φ₂ ω i_q]`  | φ₇, φ₈         |
//! | `lp[4]`, `lp[5]` | `ℱ[φ₁ v_d]`, `ℱ[φ₂ v_d]`      | φ₉, φ₁₀        |
//! | `lp[6]`, `lp[7]` | `ℱ[φ₂ i_q]`, `ℱ[φ₁ i_q]`      | φ₁₁, −φ₁₂      |
//! | `lp[8]`, `lp[9]` | `ℱ[φ₂ ω i_d]`, `ℱ[φ₁ ω i_d]`  | φ₁₃, −φ₁₄      |
//! | `lp[10]`         | `ℱ[φ₂(ωφ − v_q)]`             | φ₁₅            |
//! | `lp[11]`         | `ℱ[φ₁(v_q − ωφ)]`             | φ₁₆            |
//! | `v_omega`        | `∫ω`                          | φ₁, φ₂         |
//!
//! ```text
//! φ₃ = φ₁pℱ[i_d] + ℱ[ωφ₂pℱ[i_d]]/λ − φ₂pℱ[i_q] + ℱ[ωφ₁pℱ[i_q]]/λ
//! φ₄ = φ₂pℱ[i_d] − ℱ[ωφ₁pℱ[i_d]]/λ + φ₁pℱ[i_q] + ℱ[ωφ₂pℱ[i_q]]/λ
//! 𝒴  = φ₃ − φ₇ − φ₁₃
//! ξ  = (φ₅ + φ₁₁, φ₆ + φ₁₂, φ₉ + φ₁₅, φ₁₀ + φ₁₆, −φ₄ + φ₈ + φ₁₄)
//! ```
//!
//! The regression is exact from `t = 0` when the filters start at zero and
//! `i_dq(0) = 0`.
//!
//! The LS+DREM estimator runs least squares with forgetting on `𝒢`, then
//! mixes with the adjugate of `I − z f₀ F` to obtain the scalar regressions
//! `𝐘 = Δ·𝒢(μ)`. Rows 1, 3 and 5 of `𝒢` are `μ` itself, so picking those
//! rows gives one decoupled gradient law per parameter.

use core::fmt;

use nalgebra::{Matrix5, Matrix5x3, Vector3, Vector5};

use crate::impl_ode_state;
use crate::linalg::{adjugate_det5, MatrixNorm};
use crate::ode::{rk4, Segment};

/// `μ = (R_s/L, 1/L, cot θ₀)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mu {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
}

impl Mu {
    pub fn new(mu1: f64, mu2: f64, mu3: f64) -> Self {
        Self { mu1, mu2, mu3 }
    }

    /// True value for an isotropic motor started at electrical angle `theta0`.
    pub fn from_physical(r_s: f64, l: f64, theta0: f64) -> Self {
        Self { mu1: r_s / l, mu2: 1.0 / l, mu3: libm::cos(theta0) / libm::sin(theta0) }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.mu1, self.mu2, self.mu3)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self { mu1: v.x, mu2: v.y, mu3: v.z }
    }
}

/// `𝒢(μ) = (μ₁, μ₁μ₃, μ₂, μ₂μ₃, μ₃)`.
pub fn g_map(mu: &Mu) -> Vector5<f64> {
    Vector5::new(mu.mu1, mu.mu1 * mu.mu3, mu.mu2, mu.mu2 * mu.mu3, mu.mu3)
}

/// `∇𝒢(μ)`, 5×3.
pub fn g_jacobian(mu: &Mu) -> Matrix5x3<f64> {
    Matrix5x3::new(
        1.0, 0.0, 0.0, //
        mu.mu3, 0.0, mu.mu1, //
        0.0, 1.0, 0.0, //
        0.0, mu.mu3, mu.mu2, //
        0.0, 0.0, 1.0,
    )
}

/// Rows of `𝒢` that equal `μ`.
pub const SELECTED_ROWS: [usize; 3] = [0, 2, 4];

/// `P·v` for the row selection `P`.
#[inline]
pub fn select(v: &Vector5<f64>) -> Vector3<f64> {
    Vector3::new(v[SELECTED_ROWS[0]], v[SELECTED_ROWS[1]], v[SELECTED_ROWS[2]])
}

/// Measured signals the regression consumes.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NlreMeasurements {
    pub i_d: f64,
    pub i_q: f64,
    pub omega: f64,
    pub v_d: f64,
    pub v_q: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NlreFilters {
    pub pf: [f64; 2],
    pub nested: [f64; 4],
    pub lp: [f64; 12],
    pub v_omega: f64,
}

impl_ode_state!(NlreFilters { pf, nested, lp, v_omega });

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NlreSignals {
    /// `φ₁ … φ₁₆`
    pub phi: [f64; 16],
    pub v_omega: f64,
    pub xi: Vector5<f64>,
    pub y: f64,
}

impl NlreSignals {
    /// `𝒴 − ξᵀ𝒢(μ)`.
    pub fn residual(&self, mu: &Mu) -> f64 {
        self.y - self.xi.dot(&g_map(mu))
    }
}

impl NlreFilters {
    /// Rates of all states; `flux` is the magnet flux `φ`.
    pub fn rate(&self, m: &NlreMeasurements, flux: f64, lambda: f64) -> Self {
        let (c, s) = (libm::cos(self.v_omega), libm::sin(self.v_omega));
        let w = m.omega;
        let pf_d = lambda * (m.i_d - self.pf[0]);
        let pf_q = lambda * (m.i_q - self.pf[1]);
        let inputs = [
            c * m.i_d,
            s * m.i_d,
            c * w * m.i_q,
            s * w * m.i_q,
            c * m.v_d,
            s * m.v_d,
            s * m.i_q,
            c * m.i_q,
            s * w * m.i_d,
            c * w * m.i_d,
            s * (w * flux - m.v_q),
            c * (m.v_q - w * flux),
        ];
        let nested_in = [w * s * pf_d, w * c * pf_d, w * c * pf_q, w * s * pf_q];
        Self {
            pf: [pf_d, pf_q],
            nested: core::array::from_fn(|i| lambda * (nested_in[i] - self.nested[i])),
            lp: core::array::from_fn(|i| lambda * (inputs[i] - self.lp[i])),
            v_omega: w,
        }
    }

    /// `(φ, ξ, 𝒴)` from the filter states and the measurements at the same
    /// instant.
    pub fn signals(&self, m: &NlreMeasurements, lambda: f64) -> NlreSignals {
        let (c, s) = (libm::cos(self.v_omega), libm::sin(self.v_omega));
        let pf_d = lambda * (m.i_d - self.pf[0]);
        let pf_q = lambda * (m.i_q - self.pf[1]);
        let n = self.nested.map(|x| x / lambda);
        let lp = &self.lp;
        let phi = [
            c,
            s,
            c * pf_d + n[0] - s * pf_q + n[2],
            s * pf_d - n[1] + c * pf_q + n[3],
            -lp[0],
            -lp[1],
            lp[2],
            lp[3],
            lp[4],
            lp[5],
            lp[6],
            -lp[7],
            lp[8],
            -lp[9],
            lp[10],
            lp[11],
        ];
        let xi = Vector5::new(
            phi[4] + phi[10],
            phi[5] + phi[11],
            phi[8] + phi[14],
            phi[9] + phi[15],
            -phi[3] + phi[7] + phi[13],
        );
        NlreSignals { phi, v_omega: self.v_omega, xi, y: phi[2] - phi[6] - phi[12] }
    }

    /// Advances one step and returns the signals at the end of it.
    pub fn step(&mut self, m: Segment<NlreMeasurements>, flux: f64, lambda: f64, dt: f64) -> NlreSignals {
        *self = rk4(self, dt, |st, f| f.rate(&m.at(st), flux, lambda));
        self.signals(&m.end, lambda)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LsDremConfig {
    pub gamma_g: f64,
    pub gamma_mu: f64,
    /// `F(0) = I/f0`.
    pub f0: f64,
    pub chi0: f64,
    pub k: f64,
    pub g0: Vector5<f64>,
    pub mu0: Vector3<f64>,
    pub norm: MatrixNorm,
}

impl Default for LsDremConfig {
    fn default() -> Self {
        let f0 = 0.1;
        Self {
            gamma_g: 1.0,
            gamma_mu: 1.0,
            f0,
            chi0: 4.0,
            k: 1.5 / f0,
            g0: Vector5::zeros(),
            mu0: Vector3::zeros(),
            norm: MatrixNorm::Spectral,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LsDremConfigError {
    NonPositive(&'static str),
    /// `k < 1/f0`
    NormBound {
        k: f64,
        f0: f64,
    },
}

impl fmt::Display for LsDremConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonPositive(name) => write!(f, "{name} must be positive"),
            Self::NormBound { k, f0 } => write!(f, "k = {k} is smaller than 1/f0 = {}", 1.0 / f0),
        }
    }
}

impl LsDremConfig {
    pub fn validate(&self) -> Result<(), LsDremConfigError> {
        for (name, v) in [
            ("gamma_G", self.gamma_g),
            ("gamma_mu", self.gamma_mu),
            ("f0", self.f0),
            ("chi0", self.chi0),
            ("k", self.k),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LsDremConfigError::NonPositive(name));
            }
        }
        if self.k < 1.0 / self.f0 {
            return Err(LsDremConfigError::NormBound { k: self.k, f0: self.f0 });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LsDremState {
    pub g_hat: Vector5<f64>,
    pub f: Matrix5<f64>,
    pub z: f64,
    pub mu_hat: Vector3<f64>,
}

impl_ode_state!(LsDremState { g_hat, f, z, mu_hat });

/// `Δ = det(I − z f₀ F)` and `𝐘 = adj(I − z f₀ F)(Ĝ − z f₀ F 𝒢₀)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mixed {
    pub delta: f64,
    pub y: Vector5<f64>,
}

impl LsDremState {
    pub fn new(cfg: &LsDremConfig) -> Self {
        Self { g_hat: cfg.g0, f: Matrix5::identity() / cfg.f0, z: 1.0, mu_hat: cfg.mu0 }
    }

    pub fn chi(&self, cfg: &LsDremConfig) -> f64 {
        cfg.chi0 * (1.0 - cfg.norm.of(&self.f) / cfg.k)
    }

    pub fn mixed(&self, cfg: &LsDremConfig) -> Mixed {
        let zf = self.f * (self.z * cfg.f0);
        let (adj, delta) = adjugate_det5(&(Matrix5::identity() - zf));
        Mixed { delta, y: adj * (self.g_hat - zf * cfg.g0) }
    }

    pub fn mu(&self) -> Mu {
        Mu::from_vector(&self.mu_hat)
    }

    pub fn rate(&self, xi: &Vector5<f64>, y: f64, cfg: &LsDremConfig) -> Self {
        let chi = self.chi(cfg);
        let f_xi = self.f * xi * cfg.gamma_g;
        let Mixed { delta, y: yy } = self.mixed(cfg);
        Self {
            g_hat: f_xi * (y - xi.dot(&self.g_hat)),
            f: -(f_xi * (xi.transpose() * self.f)) + self.f * chi,
            z: -chi * self.z,
            mu_hat: (select(&yy) - self.mu_hat * delta) * (cfg.gamma_mu * delta),
        }
    }
}

/// One RK4 step driven by `(ξ, 𝒴)` samples.
pub fn ls_drem_step(
    s: &LsDremState,
    xi: Segment<Vector5<f64>>,
    y: Segment<f64>,
    cfg: &LsDremConfig,
    dt: f64,
) -> LsDremState {
    rk4(s, dt, |st, x| x.rate(&xi.at(st), y.at(st), cfg))
}

/// Physical parameters recovered from `μ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalEstimate {
    pub r_s: f64,
    pub l: f64,
    /// In `(0, π)`: the sign of `sin θ₀` cannot be recovered from `cot θ₀`.
    pub theta0: f64,
}

/// Smallest `μ₂ = 1/L` accepted by [`recover_params`].
pub const MU2_MIN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegenerateEstimate {
    pub mu2: f64,
}

impl fmt::Display for DegenerateEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "degenerate estimate: mu2 = {} is not above {MU2_MIN}", self.mu2)
    }
}

pub fn recover_params(mu: &Mu) -> Result<PhysicalEstimate, DegenerateEstimate> {
    if mu.mu2.is_nan() || mu.mu2 <= MU2_MIN || !mu.mu1.is_finite() || !mu.mu3.is_finite() {
        return Err(DegenerateEstimate { mu2: mu.mu2 });
    }
    Ok(PhysicalEstimate { r_s: mu.mu1 / mu.mu2, l: 1.0 / mu.mu2, theta0: libm::atan2(1.0, mu.mu3) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{self, FaultSpec, MotorParams, PlantInput, PlantState};
    use approx::assert_relative_eq;
    use core::f64::consts::FRAC_PI_4;
    use nalgebra::Matrix3;
    use proptest::prelude::*;

    #[test]
    fn g_map_examples() {
        assert_eq!(g_map(&Mu::new(0.0, 0.0, 0.0)), Vector5::zeros());
        assert_eq!(g_map(&Mu::new(1.0, 2.0, 3.0)), Vector5::new(1.0, 3.0, 2.0, 6.0, 3.0));
        let p = MotorParams::reference();
        let g = g_map(&Mu::from_physical(p.r_s, p.l_d, FRAC_PI_4));
        let want = Vector5::new(893.39, 893.39, 595.59, 595.59, 1.0);
        assert_relative_eq!(g, want, max_relative = 1e-5);
    }

    #[test]
    fn selected_rows_reproduce_mu() {
        let mu = Mu::new(-2.0, 7.5, 0.25);
        assert_eq!(select(&g_map(&mu)), mu.as_vector());
    }

    #[test]
    fn recover_params_examples() {
        let p = MotorParams::reference();
        let est = recover_params(&Mu::new(p.r_s / p.l_d, 1.0 / p.l_d, 1.0)).unwrap();
        assert_relative_eq!(est.r_s, 1.5, max_relative = 1e-12);
        assert_relative_eq!(est.l, 1.679e-3, max_relative = 1e-12);
        assert_relative_eq!(est.theta0, FRAC_PI_4, epsilon = 1e-15);
        assert!(recover_params(&Mu::new(1.0, 0.0, 1.0)).is_err());
        let est = recover_params(&Mu::new(1.0, 1.0, -1.0)).unwrap();
        assert_relative_eq!(est.theta0, 3.0 * FRAC_PI_4, epsilon = 1e-15);
    }

    #[test]
    fn zero_measurements_give_zero_regression() {
        let mut f = NlreFilters::default();
        for _ in 0..100 {
            let s = f.step(Segment::hold(NlreMeasurements::default()), 0.1725, 100.0, 1e-5);
            assert_eq!(s.xi, Vector5::zeros());
            assert_eq!(s.y, 0.0);
            assert_eq!((s.phi[0], s.phi[1]), (1.0, 0.0));
        }
    }

    #[test]
    fn estimator_frozen_at_start() {
        let cfg = LsDremConfig { mu0: Vector3::new(1.0, 2.0, 3.0), ..Default::default() };
        let s = LsDremState::new(&cfg);
        let m = s.mixed(&cfg);
        assert_eq!(m.delta, 0.0);
        let r = s.rate(&Vector5::new(1.0, -2.0, 3.0, 0.5, 1.0), 4.0, &cfg);
        assert_eq!(r.mu_hat, Vector3::zeros());
    }

    #[derive(Clone, Copy)]
    struct Coupled {
        plant: PlantState,
        filt: NlreFilters,
    }
    crate::impl_ode_state!(Coupled { plant, filt });

    #[test]
    fn nlre_holds_on_isotropic_faulty_trajectory() {
        let params = MotorParams::reference();
        let fault = FaultSpec { eta: 0.3, t_fault: 0.01 };
        let theta0 = 1.1;
        let mu = Mu::from_physical(params.r_s, params.l_d, theta0);
        let lambda = 100.0;
        let dt = 1e-6;
        let input = |t: f64| PlantInput {
            v_d: 20.0 * libm::sin(300.0 * t),
            v_q: 40.0 + 10.0 * libm::cos(170.0 * t),
            tau_l: 0.5,
        };
        let meas = |s: &PlantState, u: &PlantInput| NlreMeasurements {
            i_d: s.i_d,
            i_q: s.i_q,
            omega: s.omega,
            v_d: u.v_d,
            v_q: u.v_q,
        };
        let mut x = Coupled {
            plant: PlantState { theta: theta0, ..Default::default() },
            filt: NlreFilters::default(),
        };
        let (mut worst, mut scale) = (0.0_f64, 0.0_f64);
        for k in 0..40_000 {
            let t = k as f64 * dt;
            let eta = fault.effective_eta(t);
            let u = Segment::sample(t, dt, input);
            x = crate::ode::try_rk4(&x, dt, |st, c| {
                let ui = u.at(st);
                Ok::<_, plant::PlantError>(Coupled {
                    plant: plant::derivatives(&c.plant, &ui, &params, eta)?,
                    filt: c.filt.rate(&meas(&c.plant, &ui), params.phi, lambda),
                })
            })
            .unwrap();
            let sig = x.filt.signals(&meas(&x.plant, &u.end), lambda);
            worst = worst.max(sig.residual(&mu).abs());
            scale = scale.max(sig.y.abs()).max(sig.xi.amax());
        }
        assert!(x.plant.i_f.abs() > 0.1, "fault current {}", x.plant.i_f);
        assert!(worst < 1e-6 * scale, "residual {worst} vs scale {scale}");
    }

    proptest! {
        #[test]
        fn jacobian_matches_finite_differences(
            m in proptest::array::uniform3(-1000.0..1000.0_f64),
        ) {
            let mu = Mu::new(m[0], m[1], m[2]);
            let jac = g_jacobian(&mu);
            let h = 1e-4;
            for j in 0..3 {
                let mut up = mu.as_vector();
                let mut dn = mu.as_vector();
                up[j] += h;
                dn[j] -= h;
                let fd = (g_map(&Mu::from_vector(&up)) - g_map(&Mu::from_vector(&dn))) / (2.0 * h);
                for i in 0..5 {
                    prop_assert!((fd[i] - jac[(i, j)]).abs() < 1e-6 * (1.0 + jac[(i, j)].abs()));
                }
            }
            let mut p_jac = Matrix3::zeros();
            for (r, &row) in SELECTED_ROWS.iter().enumerate() {
                p_jac.set_row(r, &jac.row(row));
            }
            prop_assert_eq!(p_jac, Matrix3::identity());
        }

        #[test]
        fn phi1_phi2_on_unit_circle(v in -1e4..1e4_f64) {
            let f = NlreFilters { v_omega: v, ..Default::default() };
            let s = f.signals(&NlreMeasurements::default(), 100.0);
            prop_assert!((s.phi[0] * s.phi[0] + s.phi[1] * s.phi[1] - 1.0).abs() < 1e-14);
        }
    }
}
