//! Inter-turn short-circuit fault (ITSCF) detection for permanent magnet
//! synchronous motors.
//!
//! The crate is `no_std` and allocation free. It contains:
//!
//! * [`plant`]: the faulty interior-PMSM model in explicit ODE form, used as
//!   ground truth.
//! * [`signals`]: the first-order filter `λ/(p+λ)`, its proper derivative
//!   `λp/(p+λ)`, and an integrator.
//! * [`observer`]: the open-loop linear observer of the transformed current
//!   `i_αβ` and the fault-severity signal.
//! * [`gpebo`]: the parameter-estimation-based observer (transition matrix,
//!   linear regression, least squares with forgetting and finite convergence
//!   time, state reconstruction, excitation monitor).
//! * [`nlre`]: the nonlinear regression for the isotropic motor and the
//!   LS+DREM estimator of `(R_s/L, 1/L, cot θ₀)`.
//! * [`controller`]: cascaded PI speed/current control.
//! * [`world`]: synchronous co-simulation of all of the above on one clock.
//!
//! Every block advances with the classical fixed-step Runge-Kutta scheme in
//! [`ode`].

#![no_std]
#![deny(unsafe_code)]

#[cfg(test)]
extern crate std;

pub mod controller;
pub mod gpebo;
pub mod linalg;
pub mod nlre;
pub mod observer;
pub mod ode;
pub mod plant;
pub mod signals;
pub mod world;

pub use controller::{CascadeController, CascadeGains, PiController};
pub use gpebo::{FctLsConfig, FctLsState, IeMonitor, LreFilters, LreSample, TransitionMatrix};
pub use linalg::MatrixNorm;
pub use nlre::{LsDremConfig, LsDremState, Mu, NlreFilters, NlreSignals};
pub use observer::{LtvCoefficients, ObserverState};
pub use ode::{OdeState, Segment, Stage};
pub use plant::{FaultSpec, FluxVector, MotorParams, PlantError, PlantInput, PlantState};
pub use world::{Blocks, Snapshot, World, WorldConfig};
