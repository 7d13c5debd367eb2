//! Whole-world properties checked against test-local oracles.

use approx::assert_relative_eq;
use itscf_core::nlre::g_map;
use itscf_core::plant::{self, derivatives, FaultSpec, MotorParams, PlantInput, PlantState};
use itscf_core::{Blocks, Snapshot, World, WorldConfig};
use nalgebra::Vector2;
use proptest::prelude::*;

fn run(cfg: WorldConfig, t_end: f64, mut each: impl FnMut(&Snapshot)) {
    let mut w = World::new(cfg).unwrap();
    let n = (t_end / cfg.dt).round() as u64;
    each(&w.snapshot());
    for _ in 0..n {
        w.step().unwrap();
        each(&w.snapshot());
    }
}

fn faulty_start() -> PlantState {
    PlantState { i_d: 2.0, i_q: 15.0, i_f: 1.5, omega: 250.0, theta: 0.7 }
}

#[test]
fn rk4_is_fourth_order_on_the_faulty_plant() {
    let params = MotorParams::reference();
    let input = PlantInput { v_d: -20.0, v_q: 80.0, tau_l: 10.0 };
    let t_end = 1e-3;
    let integrate = |dt: f64| {
        let mut x = faulty_start();
        for _ in 0..(t_end / dt).round() as usize {
            x = plant::step(&x, &input, &params, 0.4, dt).unwrap();
        }
        x
    };
    let (a, b, c) = (integrate(1e-5), integrate(5e-6), integrate(2.5e-6));
    let ratio = (a.i_f - b.i_f) / (b.i_f - c.i_f);
    assert!((ratio - 16.0).abs() < 1.5, "Richardson ratio {ratio}");
    let ratio = (a.i_q - b.i_q) / (b.i_q - c.i_q);
    assert!((ratio - 16.0).abs() < 1.5, "Richardson ratio {ratio}");
}

/// Healthy dq model, integrated with a separate RK4.
fn healthy_rate(x: [f64; 4], v: (f64, f64), p: &MotorParams, tau_l: f64) -> [f64; 4] {
    let [i_d, i_q, w, _] = x;
    [
        (v.0 - p.r_s * i_d + w * p.l_q * i_q) / p.l_d,
        (v.1 - p.r_s * i_q - w * p.l_d * i_d - w * p.phi) / p.l_q,
        (p.n_p * ((p.l_d - p.l_q) * i_d * i_q + p.phi * i_q) - tau_l) / p.j,
        w,
    ]
}

#[test]
fn zero_fault_matches_the_healthy_model() {
    let cfg = WorldConfig {
        fault: FaultSpec { eta: 0.0, t_fault: 0.1 },
        blocks: Blocks { olo: false, gpebo: false, nlre: false, adaptive: false },
        ..WorldConfig::default()
    };
    let p = cfg.motor;
    let dt = cfg.dt;
    let mut x = [0.0, 0.0, 0.0, cfg.initial.theta];
    let mut worst = 0.0_f64;
    let mut w = World::new(cfg).unwrap();
    for _ in 0..50_000 {
        w.step().unwrap();
        let s = w.snapshot();
        let v = (s.v_d, s.v_q);
        let f = |x: [f64; 4]| healthy_rate(x, v, &p, cfg.tau_l);
        let add = |x: [f64; 4], k: [f64; 4], h: f64| core::array::from_fn(|i| x[i] + h * k[i]);
        let k1 = f(x);
        let k2 = f(add(x, k1, dt / 2.0));
        let k3 = f(add(x, k2, dt / 2.0));
        let k4 = f(add(x, k3, dt));
        x = core::array::from_fn(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        assert_eq!(s.plant.i_f, 0.0);
        worst = worst
            .max((s.plant.i_d - x[0]).abs())
            .max((s.plant.i_q - x[1]).abs())
            .max((s.plant.omega - x[2]).abs() * 1e-2);
    }
    assert!(worst < 1e-9, "deviation {worst}");
    assert!(x[2] > 250.0, "speed loop did not spin up: {}", x[2]);
}

#[test]
fn lre_residual_is_the_filter_start_up_transient() {
    let mut cfg = WorldConfig::default();
    cfg.blocks.nlre = false;
    cfg.initial.i_d = 0.5;
    cfg.initial.i_q = -0.25;
    let theta = cfg.theta_true();
    // the derivative filter starts from rest, leaving L_d·λ·e^{−λt}·i_α(0)
    let start = cfg.motor.l_d * cfg.lambda * cfg.initial.i_alpha_beta(0.0).x;
    let mut worst = 0.0_f64;
    run(cfg, 0.15, |s| {
        let transient = start * libm::exp(-cfg.lambda * s.t);
        worst = worst.max((s.lre.residual(&theta) - transient).abs());
    });
    assert!(worst < 1e-9, "LRE residual {worst}");
}

#[test]
fn nlre_residual_is_small_along_the_scenario() {
    let cfg = WorldConfig::default();
    let g = g_map(&cfg.mu_true());
    let (mut worst, mut scale) = (0.0_f64, 0.0_f64);
    run(cfg, 0.2, |s| {
        worst = worst.max((s.y_nl - s.xi.dot(&g)).abs());
        scale = scale.max(s.y_nl.abs());
    });
    assert!(scale > 0.0);
    assert!(worst < 1e-6 * scale, "NLRE residual {worst} against scale {scale}");
}

#[test]
fn observer_error_is_invariant_to_the_fault() {
    // ε = î_αβ − i_αβ obeys the same dynamics with and without a fault
    let base = WorldConfig { dt: 2e-6, ..WorldConfig::default() };
    let cfg = WorldConfig { blocks: Blocks { nlre: false, gpebo: false, ..base.blocks }, ..base };
    let mut w = World::new(cfg).unwrap();
    let rho = itscf_core::observer::DecayBound::new(&cfg.motor).rho;
    for k in 1..=60_000 {
        w.step().unwrap();
        if k % 1000 == 0 {
            let s = w.snapshot();
            let eps = (s.i_hat - s.i_ab).norm();
            let bound = libm::exp(-rho * s.t / 2.0) * 2f64.sqrt();
            assert!(eps <= bound * (1.0 + 1e-6) + 1e-9, "t={} eps={eps}", s.t);
        }
    }
}

fn i_ab_rate(x: &PlantState, dx: &PlantState, eta: f64) -> Vector2<f64> {
    let k = 2.0 * eta / 3.0;
    let (s, c) = (x.theta.sin(), x.theta.cos());
    Vector2::new(
        dx.i_d + k * (dx.i_f * c - x.i_f * x.omega * s),
        dx.i_q - k * (dx.i_f * s + x.i_f * x.omega * c),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn transformed_current_obeys_the_healthy_model(
        i_d in -30.0..30.0_f64,
        i_q in -30.0..30.0_f64,
        i_f in -10.0..10.0_f64,
        omega in -400.0..400.0_f64,
        theta in 0.0..core::f64::consts::TAU,
        v_d in -200.0..200.0_f64,
        v_q in -200.0..200.0_f64,
        eta in 0.05..1.0_f64,
        l_q in 1.0e-3..3.0e-3_f64,
    ) {
        let params = MotorParams { l_q, l_aa: 8e-3, ..MotorParams::reference() };
        let x = PlantState { i_d, i_q, i_f, omega, theta };
        let u = PlantInput { v_d, v_q, tau_l: 0.0 };
        let dx = derivatives(&x, &u, &params, eta).unwrap();
        let c = itscf_core::observer::ltv_coefficients(omega, u.v_dq(), &params);
        let i_ab = x.i_alpha_beta(eta);
        let lhs = params.q_matrix() * i_ab_rate(&x, &dx, eta);
        let rhs = c.a * i_ab + c.b;
        let scale = 1.0 + rhs.norm() + (c.a * i_ab).norm() + c.b.norm();
        prop_assert!((lhs - rhs).norm() < 1e-9 * scale, "{lhs:?} vs {rhs:?}");
    }
}

#[test]
fn transformed_current_at_rest_is_the_dq_current() {
    let x = PlantState { i_d: 1.0, i_q: 2.0, ..Default::default() };
    assert_relative_eq!(x.i_alpha_beta(0.4), Vector2::new(1.0, 2.0));
}
