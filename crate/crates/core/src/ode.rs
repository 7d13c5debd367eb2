//! Fixed-step classical Runge-Kutta integration.
//!
//! Blocks expose their dynamics as a rate function returning a value of the
//! same type as the state. Inputs that vary over a step are passed as a
//! [`Segment`], sampled at the three time points the scheme visits.

use core::convert::Infallible;

use nalgebra::SMatrix;

/// State that can be advanced along a rate: `x + h·ẋ`.
pub trait OdeState: Clone {
    fn add_scaled(&self, h: f64, rate: &Self) -> Self;
}

impl OdeState for f64 {
    #[inline]
    fn add_scaled(&self, h: f64, rate: &Self) -> Self {
        self + h * rate
    }
}

impl<const R: usize, const C: usize> OdeState for SMatrix<f64, R, C> {
    #[inline]
    fn add_scaled(&self, h: f64, rate: &Self) -> Self {
        self + rate * h
    }
}

impl<const N: usize> OdeState for [f64; N] {
    #[inline]
    fn add_scaled(&self, h: f64, rate: &Self) -> Self {
        let mut out = *self;
        for (o, r) in out.iter_mut().zip(rate) {
            *o += h * r;
        }
        out
    }
}

/// Implements [`OdeState`] for a struct by advancing every field.
#[macro_export]
macro_rules! impl_ode_state {
    ($ty:ty { $($field:ident),+ $(,)? }) => {
        impl $crate::ode::OdeState for $ty {
            #[inline]
            fn add_scaled(&self, h: f64, rate: &Self) -> Self {
                Self {
                    $($field: $crate::ode::OdeState::add_scaled(&self.$field, h, &rate.$field),)+
                }
            }
        }
    };
}

/// The time points of one Runge-Kutta step: `t`, `t + dt/2`, `t + dt`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Start,
    Mid,
    End,
}

impl Stage {
    #[inline]
    pub fn offset(self, dt: f64) -> f64 {
        match self {
            Stage::Start => 0.0,
            Stage::Mid => 0.5 * dt,
            Stage::End => dt,
        }
    }
}

/// An input known at the three stage times of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment<U> {
    pub start: U,
    pub mid: U,
    pub end: U,
}

impl<U: Copy> Segment<U> {
    pub fn new(start: U, mid: U, end: U) -> Self {
        Self { start, mid, end }
    }

    /// Zero-order hold over the step.
    pub fn hold(u: U) -> Self {
        Self { start: u, mid: u, end: u }
    }

    /// Samples a function of time at `t`, `t + dt/2`, `t + dt`.
    pub fn sample(t: f64, dt: f64, f: impl Fn(f64) -> U) -> Self {
        Self { start: f(t), mid: f(t + 0.5 * dt), end: f(t + dt) }
    }

    #[inline]
    pub fn at(&self, stage: Stage) -> U {
        match stage {
            Stage::Start => self.start,
            Stage::Mid => self.mid,
            Stage::End => self.end,
        }
    }

    pub fn map<V: Copy>(&self, f: impl Fn(U) -> V) -> Segment<V> {
        Segment { start: f(self.start), mid: f(self.mid), end: f(self.end) }
    }
}

/// One fallible RK4 step of size `dt`.
pub fn try_rk4<S, E>(x: &S, dt: f64, mut rate: impl FnMut(Stage, &S) -> Result<S, E>) -> Result<S, E>
where
    S: OdeState,
{
    let k1 = rate(Stage::Start, x)?;
    let k2 = rate(Stage::Mid, &x.add_scaled(0.5 * dt, &k1))?;
    let k3 = rate(Stage::Mid, &x.add_scaled(0.5 * dt, &k2))?;
    let k4 = rate(Stage::End, &x.add_scaled(dt, &k3))?;
    Ok(x.add_scaled(dt / 6.0, &k1)
        .add_scaled(dt / 3.0, &k2)
        .add_scaled(dt / 3.0, &k3)
        .add_scaled(dt / 6.0, &k4))
}

/// One RK4 step for an infallible rate function.
pub fn rk4<S: OdeState>(x: &S, dt: f64, mut rate: impl FnMut(Stage, &S) -> S) -> S {
    match try_rk4::<S, Infallible>(x, dt, |stage, s| Ok(rate(stage, s))) {
        Ok(next) => next,
        Err(never) => match never {},
    }
}
