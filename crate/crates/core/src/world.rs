//! Plant, controller, observers and estimators on one clock.
//!
//! All continuous states are concatenated and advanced by a single RK4 step,
//! so every block sees the plant measurements at the same stage times. The
//! controller is sampled at the start of each step and its voltages are held
//! over the step; the fault ratio is held the same way.

use core::f64::consts::FRAC_PI_4;
use core::fmt;

use nalgebra::{Matrix2, Matrix5, Vector2, Vector3, Vector5};

use crate::controller::{CascadeController, CascadeGains, CascadeOutput};
use crate::gpebo::{
    fct_det, reconstruct_state, theta_fct, FctLsConfig, FctLsConfigError, FctLsState, IeMonitor, LreFilters,
    LreInputs, LreSample, TransitionMatrix,
};
use crate::impl_ode_state;
use crate::linalg::SquareMatrix;
use crate::nlre::{
    recover_params, LsDremConfig, LsDremConfigError, LsDremState, Mu, NlreFilters, NlreMeasurements,
};
use crate::observer::{fault_severity, ltv_coefficients, olo_rate, LtvCoefficients};
use crate::ode::try_rk4;
use crate::plant::{self, FaultSpec, MotorParams, ParamError, PlantError, PlantInput, PlantState};

/// Which optional blocks run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Blocks {
    pub olo: bool,
    pub gpebo: bool,
    pub nlre: bool,
    /// Feed the parameters recovered by the NLRE estimator into the
    /// observer model at every step.
    pub adaptive: bool,
}

impl Default for Blocks {
    fn default() -> Self {
        Self { olo: true, gpebo: true, nlre: true, adaptive: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorldConfig {
    /// Ground-truth motor.
    pub motor: MotorParams,
    /// Motor model used inside the observers.
    pub observer_model: MotorParams,
    pub fault: FaultSpec,
    pub gains: CascadeGains,
    pub omega_ref: f64,
    pub tau_l: f64,
    pub lambda: f64,
    pub fct: FctLsConfig,
    pub drem: LsDremConfig,
    /// Excitation threshold for `∫ΨΨᵀ`.
    pub kappa: f64,
    /// Excitation threshold for `∫ξξᵀ`.
    pub kappa_xi: f64,
    pub initial: PlantState,
    pub i_hat0: Vector2<f64>,
    pub dt: f64,
    pub blocks: Blocks,
}

/// Smallest `|sin θ₀|` accepted when the NLRE block runs.
pub const MIN_SIN_THETA0: f64 = 0.1;

impl Default for WorldConfig {
    fn default() -> Self {
        let motor = MotorParams::reference();
        Self {
            motor,
            observer_model: motor,
            fault: FaultSpec { eta: 0.4, t_fault: 0.1 },
            gains: CascadeGains::default(),
            omega_ref: 300.0,
            tau_l: 10.0,
            lambda: 100.0,
            fct: FctLsConfig::default(),
            drem: LsDremConfig { gamma_mu: DEFAULT_GAMMA_MU, ..LsDremConfig::default() },
            kappa: DEFAULT_KAPPA,
            kappa_xi: DEFAULT_KAPPA_XI,
            initial: PlantState { theta: FRAC_PI_4, ..PlantState::default() },
            i_hat0: Vector2::new(1.0, 1.0),
            dt: 1e-6,
            blocks: Blocks::default(),
        }
    }
}

pub const DEFAULT_GAMMA_MU: f64 = 3e4;
pub const DEFAULT_KAPPA: f64 = 1e-6;
pub const DEFAULT_KAPPA_XI: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConfigError {
    Motor(ParamError),
    ObserverModel(ParamError),
    Fault(ParamError),
    Fct(FctLsConfigError),
    Drem(LsDremConfigError),
    NonPositive(&'static str),
    NonFinite(&'static str),
    /// The NLRE block needs `L_d = L_q`.
    NotIsotropic,
    /// `|sin θ₀|` too small for the NLRE block.
    Theta0 {
        theta0: f64,
    },
    AdaptiveNeedsNlre,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Motor(e) => write!(f, "motor: {e}"),
            Self::ObserverModel(e) => write!(f, "observer model: {e}"),
            Self::Fault(e) => write!(f, "fault: {e}"),
            Self::Fct(e) => write!(f, "FCT least squares: {e}"),
            Self::Drem(e) => write!(f, "LS+DREM: {e}"),
            Self::NonPositive(name) => write!(f, "{name} must be positive"),
            Self::NonFinite(name) => write!(f, "{name} must be finite"),
            Self::NotIsotropic => write!(f, "the nlre block requires L_d = L_q"),
            Self::Theta0 { theta0 } => write!(
                f,
                "theta0 = {theta0} gives |sin theta0| < {MIN_SIN_THETA0}; the regression divides by sin theta0"
            ),
            Self::AdaptiveNeedsNlre => write!(f, "the adaptive flag requires the nlre block"),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.motor.validate().map_err(ConfigError::Motor)?;
        self.observer_model.validate().map_err(ConfigError::ObserverModel)?;
        self.fault.validate().map_err(ConfigError::Fault)?;
        self.fct.validate().map_err(ConfigError::Fct)?;
        self.drem.validate().map_err(ConfigError::Drem)?;
        for (name, v) in
            [("dt", self.dt), ("lambda", self.lambda), ("kappa", self.kappa), ("kappa_xi", self.kappa_xi)]
        {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::NonPositive(name));
            }
        }
        let finite = [
            ("omega_ref", self.omega_ref),
            ("tau_L", self.tau_l),
            ("theta0", self.initial.theta),
            ("i_d0", self.initial.i_d),
            ("i_q0", self.initial.i_q),
            ("i_f0", self.initial.i_f),
            ("omega0", self.initial.omega),
            ("i_hat0", self.i_hat0.x + self.i_hat0.y),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(ConfigError::NonFinite(name));
            }
        }
        if self.blocks.nlre {
            if !self.motor.is_isotropic() {
                return Err(ConfigError::NotIsotropic);
            }
            if libm::sin(self.initial.theta).abs() < MIN_SIN_THETA0 {
                return Err(ConfigError::Theta0 { theta0: self.initial.theta });
            }
        }
        if self.blocks.adaptive && !self.blocks.nlre {
            return Err(ConfigError::AdaptiveNeedsNlre);
        }
        Ok(())
    }

    /// True `Θ = î_αβ(0) − i_αβ(0)`.
    pub fn theta_true(&self) -> Vector2<f64> {
        self.i_hat0 - self.initial.i_alpha_beta(self.fault.effective_eta(0.0))
    }

    /// True `μ` for the configured motor and initial angle.
    pub fn mu_true(&self) -> Mu {
        Mu::from_physical(self.motor.r_s, self.motor.l_d, self.initial.theta)
    }
}

/// A plant failure during a step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepError {
    pub t: f64,
    pub source: PlantError,
}

impl fmt::Display for StepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "numerical abort at t = {:.9} s: {}", self.t, self.source)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct State {
    plant: PlantState,
    i_hat: Vector2<f64>,
    phi: Matrix2<f64>,
    lre: LreFilters,
    fct: FctLsState,
    gram_psi: Matrix2<f64>,
    nlre: NlreFilters,
    drem: LsDremState,
    gram_xi: Matrix5<f64>,
}

impl_ode_state!(State { plant, i_hat, phi, lre, fct, gram_psi, nlre, drem, gram_xi });

impl State {
    fn zero_rate() -> Self {
        Self {
            plant: PlantState::default(),
            i_hat: Vector2::zeros(),
            phi: Matrix2::zeros(),
            lre: LreFilters::default(),
            fct: FctLsState { theta_hat: Vector2::zeros(), f: Matrix2::zeros(), z: 0.0 },
            gram_psi: Matrix2::zeros(),
            nlre: NlreFilters::default(),
            drem: LsDremState {
                g_hat: Vector5::zeros(),
                f: Matrix5::zeros(),
                z: 0.0,
                mu_hat: Vector3::zeros(),
            },
            gram_xi: Matrix5::zeros(),
        }
    }
}

/// Everything recorded about the world at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub plant: PlantState,
    /// Fault ratio in effect.
    pub eta: f64,
    pub v_d: f64,
    pub v_q: f64,
    pub i_q_ref: f64,
    /// `i_αβ` built from the plant state.
    pub i_ab: Vector2<f64>,
    /// Open-loop observer estimate.
    pub i_hat: Vector2<f64>,
    /// `î_αβ − Φ·Θ_FCT` once `Θ_FCT` is available, `î_αβ − Φ·Θ̂` before.
    pub i_gpebo: Vector2<f64>,
    pub phi: Matrix2<f64>,
    pub lre: LreSample,
    pub theta_hat: Vector2<f64>,
    pub theta_fct: Option<Vector2<f64>>,
    pub fct_det: f64,
    pub z: f64,
    pub f_norm: f64,
    pub gram_min_eig: f64,
    pub t_c: Option<f64>,
    pub severity_olo: f64,
    pub severity_gpebo: f64,
    /// `(2η/3)|i_f|`
    pub severity_true: f64,
    pub xi: Vector5<f64>,
    pub y_nl: f64,
    pub mu_hat: Vector3<f64>,
    pub delta: f64,
    pub z_drem: f64,
    pub f_drem_norm: f64,
    pub gram_xi_min_eig: f64,
    pub t_c_xi: Option<f64>,
}

pub struct World {
    cfg: WorldConfig,
    x: State,
    step_index: u64,
    controller: CascadeController,
    /// Controller output held over the current step.
    held: CascadeOutput,
    ie_psi: IeMonitor<2>,
    ie_xi: IeMonitor<5>,
}

impl World {
    pub fn new(cfg: WorldConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let x = State {
            plant: cfg.initial,
            i_hat: cfg.i_hat0,
            phi: Matrix2::identity(),
            lre: LreFilters::default(),
            fct: FctLsState::new(&cfg.fct),
            gram_psi: Matrix2::zeros(),
            nlre: NlreFilters::default(),
            drem: LsDremState::new(&cfg.drem),
            gram_xi: Matrix5::zeros(),
        };
        Ok(Self {
            cfg,
            x,
            step_index: 0,
            controller: CascadeController::new(&cfg.gains),
            held: CascadeOutput::default(),
            ie_psi: IeMonitor::new(cfg.kappa),
            ie_xi: IeMonitor::new(cfg.kappa_xi),
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn t(&self) -> f64 {
        self.step_index as f64 * self.cfg.dt
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn plant(&self) -> &PlantState {
        &self.x.plant
    }

    /// Plant input held over the step that just ended.
    pub fn held_input(&self) -> PlantInput {
        PlantInput { v_d: self.held.v_d, v_q: self.held.v_q, tau_l: self.cfg.tau_l }
    }

    /// Observer model in effect for the next step.
    pub fn observer_model(&self) -> MotorParams {
        let base = self.cfg.observer_model;
        if !self.cfg.blocks.adaptive {
            return base;
        }
        match recover_params(&self.x.drem.mu()) {
            Ok(est) if est.r_s > 0.0 && est.l > 0.0 => {
                MotorParams { r_s: est.r_s, l_d: est.l, l_q: est.l, ..base }
            }
            _ => base,
        }
    }

    fn rate(
        &self,
        x: &State,
        input: &PlantInput,
        eta: f64,
        model: &MotorParams,
    ) -> Result<State, PlantError> {
        let cfg = &self.cfg;
        let blocks = cfg.blocks;
        let mut dx = State::zero_rate();
        dx.plant = plant::derivatives(&x.plant, input, &cfg.motor, eta)?;
        let omega = x.plant.omega;
        let coeffs: LtvCoefficients = ltv_coefficients(omega, input.v_dq(), model);
        if blocks.olo || blocks.gpebo {
            dx.i_hat = olo_rate(&x.i_hat, &coeffs, model);
        }
        if blocks.gpebo {
            dx.phi = crate::gpebo::phi_rate(&x.phi, &coeffs, model);
            let u = LreInputs { i_hat: x.i_hat, phi: TransitionMatrix { phi: x.phi }, omega, v_d: input.v_d };
            dx.lre = x.lre.rate(&u, model, cfg.lambda);
            let sample = x.lre.sample(&u, model, cfg.lambda);
            dx.fct = x.fct.rate(&sample, &cfg.fct);
            dx.gram_psi = IeMonitor::<2>::gram_rate(&sample.psi);
        }
        if blocks.nlre {
            let m = measurements(&x.plant, input);
            dx.nlre = x.nlre.rate(&m, cfg.motor.phi, cfg.lambda);
            let sig = x.nlre.signals(&m, cfg.lambda);
            dx.drem = x.drem.rate(&sig.xi, sig.y, &cfg.drem);
            dx.gram_xi = IeMonitor::<5>::gram_rate(&sig.xi);
        }
        Ok(dx)
    }

    /// Advances the world by one step.
    pub fn step(&mut self) -> Result<(), StepError> {
        let t = self.t();
        let dt = self.cfg.dt;
        let p = &self.x.plant;
        self.held = self.controller.step(self.cfg.omega_ref, p.omega, p.i_d, p.i_q, dt);
        let input = PlantInput { v_d: self.held.v_d, v_q: self.held.v_q, tau_l: self.cfg.tau_l };
        let eta = self.cfg.fault.effective_eta(t);
        let model = self.observer_model();
        let mut next = try_rk4(&self.x, dt, |_, s| self.rate(s, &input, eta, &model))
            .map_err(|source| StepError { t, source })?;
        next.plant.theta = plant::wrap_angle(next.plant.theta);
        self.x = next;
        self.step_index += 1;
        let t_end = self.t();
        if self.cfg.blocks.gpebo {
            self.ie_psi.gram = self.x.gram_psi;
            self.ie_psi.check(t_end);
        }
        if self.cfg.blocks.nlre {
            self.ie_xi.gram = self.x.gram_xi;
            self.ie_xi.check(t_end);
        }
        Ok(())
    }

    /// State of every block at the current time, using the inputs held over
    /// the step that just ended.
    pub fn snapshot(&self) -> Snapshot {
        let cfg = &self.cfg;
        let t = self.t();
        let x = &self.x;
        let eta = cfg.fault.effective_eta(t);
        let input = PlantInput { v_d: self.held.v_d, v_q: self.held.v_q, tau_l: cfg.tau_l };
        let model = self.observer_model();
        let i_dq = x.plant.i_dq();
        let phi = TransitionMatrix { phi: x.phi };

        let (lre, theta_fct_v, det) = if cfg.blocks.gpebo {
            let u = LreInputs { i_hat: x.i_hat, phi, omega: x.plant.omega, v_d: input.v_d };
            (x.lre.sample(&u, &model, cfg.lambda), theta_fct(&x.fct, &cfg.fct), fct_det(&x.fct, &cfg.fct))
        } else {
            (LreSample::default(), None, 0.0)
        };
        let i_gpebo = reconstruct_state(&x.i_hat, &phi, &theta_fct_v.unwrap_or(x.fct.theta_hat));

        let (xi, y_nl, delta) = if cfg.blocks.nlre {
            let sig = x.nlre.signals(&measurements(&x.plant, &input), cfg.lambda);
            (sig.xi, sig.y, x.drem.mixed(&cfg.drem).delta)
        } else {
            (Vector5::zeros(), 0.0, 0.0)
        };

        Snapshot {
            t,
            plant: x.plant,
            eta,
            v_d: self.held.v_d,
            v_q: self.held.v_q,
            i_q_ref: self.held.i_q_ref,
            i_ab: x.plant.i_alpha_beta(eta),
            i_hat: x.i_hat,
            i_gpebo,
            phi: x.phi,
            lre,
            theta_hat: x.fct.theta_hat,
            theta_fct: theta_fct_v,
            fct_det: det,
            z: x.fct.z,
            f_norm: cfg.fct.norm.of(&x.fct.f),
            gram_min_eig: x.gram_psi.min_sym_eigenvalue(),
            t_c: self.ie_psi.t_c,
            severity_olo: fault_severity(&x.i_hat, &i_dq),
            severity_gpebo: fault_severity(&i_gpebo, &i_dq),
            severity_true: 2.0 * eta / 3.0 * x.plant.i_f.abs(),
            xi,
            y_nl,
            mu_hat: x.drem.mu_hat,
            delta,
            z_drem: x.drem.z,
            f_drem_norm: cfg.drem.norm.of(&x.drem.f),
            gram_xi_min_eig: if cfg.blocks.nlre { x.gram_xi.min_sym_eigenvalue() } else { 0.0 },
            t_c_xi: self.ie_xi.t_c,
        }
    }
}

fn measurements(p: &PlantState, u: &PlantInput) -> NlreMeasurements {
    NlreMeasurements { i_d: p.i_d, i_q: p.i_q, omega: p.omega, v_d: u.v_d, v_q: u.v_q }
}
