#![allow(dead_code)]

use std::sync::Arc;

use braidmix::tracking::{control_open_loop, TrackingGains, TrackingProblem};
use braidmix::Vec2;
use nalgebra::{Matrix2, Rotation2};
use rand::Rng;

/// Random symmetric positive definite matrix with eigenvalues in `[lo, hi]`.
pub fn random_spd<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> Matrix2<f64> {
    let rot = Rotation2::new(rng.gen_range(0.0..std::f64::consts::PI)).into_inner();
    let d = Matrix2::from_diagonal(&Vec2::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi)));
    let m = rot * d * rot.transpose();
    (m + m.transpose()) * 0.5
}

/// A tracking problem with a smooth random reference
/// `γ(t) = c₀ + c₁ t + a ∘ sin(ωt + φ)`.
pub fn random_problem<R: Rng>(rng: &mut R) -> TrackingProblem {
    let t0 = rng.gen_range(0.0..2.0);
    let t1 = t0 + rng.gen_range(0.5..3.0);
    let c0 = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let c1 = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let amp = Vec2::new(rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5));
    let omega: f64 = rng.gen_range(0.5..4.0);
    let phase: f64 = rng.gen_range(0.0..6.0);
    let reference = Arc::new(move |t: f64| c0 + c1 * t + amp * (omega * t + phase).sin());
    let xi_start = reference(t0) + Vec2::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
    let xi_end = reference(t1) + Vec2::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
    TrackingProblem::new(random_spd(rng, 0.1, 20.0), random_spd(rng, 0.2, 5.0), t0, t1, xi_start, xi_end, reference).unwrap()
}

/// Running cost integrand `½[(x−γ)ᵀQ(x−γ) + uᵀRu]`.
pub fn running_cost(p: &TrackingProblem, x: Vec2, u: Vec2, t: f64) -> f64 {
    let e = x - (p.reference)(t);
    0.5 * (e.dot(&(p.q * e)) + u.dot(&(p.r * u)))
}

/// Rolls out `ẋ = u(x, t)` with RK4 on `steps` uniform intervals and returns
/// the states, the controls and the trapezoidal cost.
pub fn rollout(
    p: &TrackingProblem,
    steps: usize,
    mut u: impl FnMut(Vec2, f64) -> Vec2,
) -> (Vec<Vec2>, Vec<Vec2>, f64) {
    let h = (p.t_end - p.t_start) / steps as f64;
    let mut xs = vec![p.xi_start];
    let mut us = Vec::with_capacity(steps + 1);
    let mut x = p.xi_start;
    for i in 0..steps {
        let t = p.t_start + i as f64 * h;
        let k1 = u(x, t);
        us.push(k1);
        let k2 = u(x + k1 * (h / 2.0), t + h / 2.0);
        let k3 = u(x + k2 * (h / 2.0), t + h / 2.0);
        let k4 = u(x + k3 * h, t + h);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        xs.push(x);
    }
    us.push(u(x, p.t_end));
    let l: Vec<f64> = (0..=steps).map(|i| running_cost(p, xs[i], us[i], p.t_start + i as f64 * h)).collect();
    let cost = h * (l.iter().sum::<f64>() - 0.5 * (l[0] + l[steps]));
    (xs, us, cost)
}

/// Rollout under the optimal open-loop law.
pub fn optimal_rollout(p: &TrackingProblem, gains: &TrackingGains, steps: usize) -> (Vec<Vec2>, Vec<Vec2>, f64) {
    rollout(p, steps, |x, t| control_open_loop(gains, x, t))
}

/// `V_t + min_u [L + V_xᵀu]` at `(z, t)`, with `V_t` by central differences.
pub fn hjb_residual(p: &TrackingProblem, gains: &TrackingGains, z: Vec2, t: f64, dt: f64) -> f64 {
    let vt = (gains.value(z, t + dt) - gains.value(z, t - dt)) / (2.0 * dt);
    let lam = gains.costate(z, t);
    let r_inv = p.r.try_inverse().unwrap();
    let e = z - (p.reference)(t);
    vt + 0.5 * e.dot(&(p.q * e)) - 0.5 * lam.dot(&(r_inv * lam))
}
