//! Finite-horizon optimal tracking of a reparameterized strand by a single
//! integrator, solved with the sweep method.

use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix2;
use thiserror::Error;

use crate::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error("{0} must be symmetric positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("horizon [{0}, {1}] is empty")]
    InvalidHorizon(f64, f64),
    #[error("need at least 2 integration steps, got {0}")]
    TooFewSteps(usize),
    #[error("G is singular at t={0}")]
    SingularG(f64),
    #[error("gain sweep diverged at t={0}")]
    NonFinite(f64),
    #[error("closed-loop law evaluated at t={t}, inside the terminal guard (hand off before {limit})")]
    InsideGuard { t: f64, limit: f64 },
}

pub type Reference = Arc<dyn Fn(f64) -> Vec2 + Send + Sync>;

/// Track `γ` on `[t_start, t_end]` from `ξ_start`, ending exactly at `ξ_end`,
/// minimizing `½∫ (x−γ)ᵀQ(x−γ) + uᵀRu dt`.
#[derive(Clone)]
pub struct TrackingProblem {
    pub q: Matrix2<f64>,
    pub r: Matrix2<f64>,
    pub t_start: f64,
    pub t_end: f64,
    pub xi_start: Vec2,
    pub xi_end: Vec2,
    pub reference: Reference,
}

impl fmt::Debug for TrackingProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrackingProblem")
            .field("q", &self.q)
            .field("r", &self.r)
            .field("t_start", &self.t_start)
            .field("t_end", &self.t_end)
            .field("xi_start", &self.xi_start)
            .field("xi_end", &self.xi_end)
            .finish_non_exhaustive()
    }
}

fn spd(m: &Matrix2<f64>) -> bool {
    (m[(0, 1)] - m[(1, 0)]).abs() <= 1e-12 * m.abs().max().max(1.0) && m[(0, 0)] > 0.0 && m.determinant() > 0.0
}

fn psd(m: &Matrix2<f64>) -> bool {
    (m[(0, 1)] - m[(1, 0)]).abs() <= 1e-12 * m.abs().max().max(1.0)
        && m[(0, 0)] >= 0.0
        && m[(1, 1)] >= 0.0
        && m.determinant() >= -1e-15
}

impl TrackingProblem {
    /// Validates the weights and horizon. `Q` may be positive semidefinite
    /// (the pure minimum-energy case is `Q = 0`).
    pub fn new(
        q: Matrix2<f64>,
        r: Matrix2<f64>,
        t_start: f64,
        t_end: f64,
        xi_start: Vec2,
        xi_end: Vec2,
        reference: Reference,
    ) -> Result<Self, TrackingError> {
        if !psd(&q) {
            return Err(TrackingError::NotPositiveDefinite("Q"));
        }
        if !spd(&r) {
            return Err(TrackingError::NotPositiveDefinite("R"));
        }
        if !(t_start.is_finite() && t_end.is_finite() && t_end > t_start) {
            return Err(TrackingError::InvalidHorizon(t_start, t_end));
        }
        Ok(TrackingProblem { q, r, t_start, t_end, xi_start, xi_end, reference })
    }

    /// `Q = qI`, `R = rI`.
    pub fn isotropic(
        q: f64,
        r: f64,
        t_start: f64,
        t_end: f64,
        xi_start: Vec2,
        xi_end: Vec2,
        reference: Reference,
    ) -> Result<Self, TrackingError> {
        Self::new(Matrix2::identity() * q, Matrix2::identity() * r, t_start, t_end, xi_start, xi_end, reference)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    h: Matrix2<f64>,
    k: Matrix2<f64>,
    g: Matrix2<f64>,
    e: Vec2,
    d: Vec2,
    phi: f64,
}

impl Node {
    fn terminal(phi: f64) -> Self {
        Node { h: Matrix2::zeros(), k: Matrix2::identity(), g: Matrix2::zeros(), e: Vec2::zeros(), d: Vec2::zeros(), phi }
    }

    fn plus(&self, s: f64, o: &Node) -> Node {
        Node {
            h: self.h + o.h * s,
            k: self.k + o.k * s,
            g: self.g + o.g * s,
            e: self.e + o.e * s,
            d: self.d + o.d * s,
            phi: self.phi + o.phi * s,
        }
    }

    fn finite(&self) -> bool {
        self.h.iter().chain(self.k.iter()).chain(self.g.iter()).chain(self.e.iter()).chain(self.d.iter()).all(|v| v.is_finite())
            && self.phi.is_finite()
    }
}

struct Rhs<'a> {
    q: Matrix2<f64>,
    r_inv: Matrix2<f64>,
    reference: &'a (dyn Fn(f64) -> Vec2 + Send + Sync),
    nu: Option<Vec2>,
}

impl Rhs<'_> {
    fn eval(&self, t: f64, n: &Node) -> Node {
        let gamma = (self.reference)(t);
        let hr = n.h * self.r_inv;
        let kr = n.k.transpose() * self.r_inv;
        let phi = match self.nu {
            Some(nu) => {
                let lam = n.e + n.k * nu;
                0.5 * lam.dot(&(self.r_inv * lam)) - 0.5 * gamma.dot(&(self.q * gamma))
            }
            None => 0.0,
        };
        Node {
            h: hr * n.h - self.q,
            k: hr * n.k,
            g: kr * n.k,
            e: hr * n.e + self.q * gamma,
            d: kr * n.e,
            phi,
        }
    }
}

fn sweep(rhs: &Rhs<'_>, t0: f64, t1: f64, steps: usize, terminal: Node) -> Result<(Vec<Node>, Vec<Node>), TrackingError> {
    let dt = (t1 - t0) / steps as f64;
    let time = |i: usize| if i == steps { t1 } else { t0 + i as f64 * dt };
    let mut nodes = vec![terminal; steps + 1];
    let mut y = terminal;
    for i in (0..steps).rev() {
        let t = time(i + 1);
        let h = -dt;
        let k1 = rhs.eval(t, &y);
        let k2 = rhs.eval(t + 0.5 * h, &y.plus(0.5 * h, &k1));
        let k3 = rhs.eval(t + 0.5 * h, &y.plus(0.5 * h, &k2));
        let k4 = rhs.eval(t + h, &y.plus(h, &k3));
        y = y.plus(h / 6.0, &k1).plus(h / 3.0, &k2).plus(h / 3.0, &k3).plus(h / 6.0, &k4);
        if !y.finite() {
            return Err(TrackingError::NonFinite(time(i)));
        }
        nodes[i] = y;
    }
    let rates = nodes.iter().enumerate().map(|(i, n)| rhs.eval(time(i), n)).collect();
    Ok((nodes, rates))
}

fn invert(g: &Matrix2<f64>, t: f64) -> Result<Matrix2<f64>, TrackingError> {
    let scale = g.abs().max();
    if !(scale > 0.0) || g.determinant().abs() <= 1e-14 * scale * scale {
        return Err(TrackingError::SingularG(t));
    }
    g.try_inverse().ok_or(TrackingError::SingularG(t))
}

/// Gains on a uniform grid, interpolated between nodes with cubic Hermite
/// polynomials built from the sweep's own derivatives.
#[derive(Debug, Clone)]
pub struct TrackingGains {
    t_start: f64,
    t_end: f64,
    steps: usize,
    nodes: Vec<Node>,
    rates: Vec<Node>,
    q: Matrix2<f64>,
    r_inv: Matrix2<f64>,
    xi_start: Vec2,
    xi_end: Vec2,
    nu: Vec2,
}

/// Gains evaluated at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSample {
    pub h: Matrix2<f64>,
    pub k: Matrix2<f64>,
    pub g: Matrix2<f64>,
    pub e: Vec2,
    pub d: Vec2,
    pub phi: f64,
}

/// Default grid: 1000 steps per unit horizon, at least 100.
pub fn default_steps(horizon: f64) -> usize {
    let n = (horizon * 1000.0).ceil() as usize;
    let n = n.max(100);
    n + n % 2
}

/// Backward RK4 sweep for `H, K, G, E, D`, the frozen terminal costate, and a
/// second pass that adds `φ`.
pub fn solve_gains(problem: &TrackingProblem, steps: usize) -> Result<TrackingGains, TrackingError> {
    if steps < 2 {
        return Err(TrackingError::TooFewSteps(steps));
    }
    let r_inv = problem.r.try_inverse().ok_or(TrackingError::NotPositiveDefinite("R"))?;
    let (t0, t1) = (problem.t_start, problem.t_end);
    let mut rhs = Rhs { q: problem.q, r_inv, reference: &*problem.reference, nu: None };
    let (first, _) = sweep(&rhs, t0, t1, steps, Node::terminal(0.0))?;
    let n0 = first[0];
    let nu = invert(&n0.g, t0)? * (problem.xi_end - n0.k.transpose() * problem.xi_start - n0.d);
    rhs.nu = Some(nu);
    // V(ξ_end, t_end) = 0 fixes the terminal value of φ
    let (nodes, rates) = sweep(&rhs, t0, t1, steps, Node::terminal(-problem.xi_end.dot(&nu)))?;
    Ok(TrackingGains {
        t_start: t0,
        t_end: t1,
        steps,
        nodes,
        rates,
        q: problem.q,
        r_inv,
        xi_start: problem.xi_start,
        xi_end: problem.xi_end,
        nu,
    })
}

impl TrackingGains {
    pub fn horizon(&self) -> (f64, f64) {
        (self.t_start, self.t_end)
    }

    pub fn step(&self) -> f64 {
        (self.t_end - self.t_start) / self.steps as f64
    }

    /// Closed-loop evaluation must stop this long before `t_end`.
    pub fn guard(&self) -> f64 {
        2.0 * self.step()
    }

    /// Frozen terminal costate `λ(t_end)`.
    pub fn terminal_costate(&self) -> Vec2 {
        self.nu
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| if i == self.steps { self.t_end } else { self.t_start + i as f64 * self.step() }).collect()
    }

    /// Gains at the `i`-th grid node.
    pub fn node(&self, i: usize) -> GainSample {
        let n = &self.nodes[i];
        GainSample { h: n.h, k: n.k, g: n.g, e: n.e, d: n.d, phi: n.phi }
    }

    pub fn at(&self, t: f64) -> GainSample {
        let t = t.clamp(self.t_start, self.t_end);
        let dt = self.step();
        let i = (((t - self.t_start) / dt).floor() as usize).min(self.steps - 1);
        let ta = self.t_start + i as f64 * dt;
        let s = ((t - ta) / dt).clamp(0.0, 1.0);
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
            s * (1.0 - s) * (1.0 - s),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        let (a, b) = (&self.nodes[i], &self.nodes[i + 1]);
        let (fa, fb) = (&self.rates[i], &self.rates[i + 1]);
        let zero = Node { k: Matrix2::zeros(), ..Node::terminal(0.0) };
        let n = zero.plus(h00, a).plus(h10 * dt, fa).plus(h01, b).plus(h11 * dt, fb);
        GainSample { h: n.h, k: n.k, g: n.g, e: n.e, d: n.d, phi: n.phi }
    }

    /// `λ = Hx + Kλ(t_end) + E`.
    pub fn costate(&self, x: Vec2, t: f64) -> Vec2 {
        let s = self.at(t);
        s.h * x + s.k * self.nu + s.e
    }

    /// `V(z, t) = ½zᵀHz + zᵀ(Kλ(t_end) + E) + φ`.
    pub fn value(&self, z: Vec2, t: f64) -> f64 {
        let s = self.at(t);
        0.5 * z.dot(&(s.h * z)) + z.dot(&(s.k * self.nu + s.e)) + s.phi
    }

    /// Hamiltonian `½[(x−γ)ᵀQ(x−γ) + uᵀRu] + λᵀu`.
    pub fn hamiltonian(&self, x: Vec2, u: Vec2, lambda: Vec2, gamma: Vec2) -> f64 {
        let r = self.r_inv.try_inverse().expect("R is invertible");
        let e = x - gamma;
        0.5 * (e.dot(&(self.q * e)) + u.dot(&(r * u))) + lambda.dot(&u)
    }

    pub fn q(&self) -> Matrix2<f64> {
        self.q
    }

    pub fn r_inverse(&self) -> Matrix2<f64> {
        self.r_inv
    }

    pub fn xi_start(&self) -> Vec2 {
        self.xi_start
    }

    pub fn xi_end(&self) -> Vec2 {
        self.xi_end
    }
}

/// Control with the terminal costate frozen from the initial data.
pub fn control_open_loop(gains: &TrackingGains, x: Vec2, t: f64) -> Vec2 {
    -(gains.r_inv * gains.costate(x, t))
}

/// Fully closed-loop law; the terminal costate is re-solved from the current
/// state. Fails inside the terminal guard where `G⁻¹` blows up.
pub fn control_closed_loop(gains: &TrackingGains, x: Vec2, t: f64) -> Result<Vec2, TrackingError> {
    let limit = gains.t_end - gains.guard();
    if t > limit {
        return Err(TrackingError::InsideGuard { t, limit });
    }
    let s = gains.at(t);
    let g_inv = invert(&s.g, t)?;
    let kg = s.k * g_inv;
    let lambda = (s.h - kg * s.k.transpose()) * x + kg * (gains.xi_end - s.d) + s.e;
    Ok(-(gains.r_inv * lambda))
}

/// Closed-loop law with the guard handled by holding the last admissible
/// control.
pub fn control_closed_loop_guarded(gains: &TrackingGains, x: Vec2, t: f64, held: &mut Option<Vec2>) -> Result<Vec2, TrackingError> {
    match control_closed_loop(gains, x, t) {
        Ok(u) => {
            *held = Some(u);
            Ok(u)
        }
        Err(TrackingError::InsideGuard { .. }) => match held {
            Some(u) => Ok(*u),
            None => control_closed_loop(gains, x, gains.t_end - gains.guard()),
        },
        Err(e) => Err(e),
    }
}

/// Optimal cost `V(ξ_start, t_start)`.
pub fn optimal_cost(gains: &TrackingGains) -> f64 {
    gains.value(gains.xi_start, gains.t_start)
}

/// Single-integrator control to unicycle forward speed and turn rate.
pub fn unicycle_map(u: Vec2, theta: f64, kappa: f64) -> (f64, f64) {
    let (c, s) = (theta.cos(), theta.sin());
    let nu = c * u.x + s * u.y;
    let lateral = -s * u.x + c * u.y;
    let norm = u.norm();
    let omega = if norm > 1.0 { kappa * lateral / norm } else { kappa * lateral };
    (nu, omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn zero_ref() -> Reference {
        Arc::new(|_t: f64| Vec2::zeros())
    }

    #[test]
    fn riccati_closed_forms() {
        let p = TrackingProblem::isotropic(1.0, 1.0, 0.0, 1.0, Vec2::new(1.0, 0.0), Vec2::zeros(), zero_ref()).unwrap();
        let g = solve_gains(&p, 1000).unwrap();
        for t in [0.0, 0.25, 0.5, 0.77, 0.999] {
            let s = g.at(t);
            let tau: f64 = 1.0 - t;
            assert_relative_eq!(s.h, Matrix2::identity() * tau.tanh(), epsilon = 1e-9);
            assert_relative_eq!(s.k, Matrix2::identity() / tau.cosh(), epsilon = 1e-9);
            assert_relative_eq!(s.g, -Matrix2::identity() * tau.tanh(), epsilon = 1e-9);
            assert_eq!(s.e, Vec2::zeros());
            assert_eq!(s.d, Vec2::zeros());
        }
        assert_relative_eq!(g.at(0.0).h[(0, 0)], 0.76159, epsilon = 1e-5);
        assert_relative_eq!(g.at(0.0).k[(0, 0)], 0.64805, epsilon = 1e-5);
        let ol = control_open_loop(&g, p.xi_start, 0.0);
        let cl = control_closed_loop(&g, p.xi_start, 0.0).unwrap();
        assert_relative_eq!(ol, cl, epsilon = 1e-12);
    }

    #[test]
    fn minimum_energy_case() {
        let r = Matrix2::new(2.0, 0.3, 0.3, 1.0);
        let p = TrackingProblem::new(Matrix2::zeros(), r, 0.0, 2.0, Vec2::new(1.0, 2.0), Vec2::new(-1.0, 0.5), zero_ref()).unwrap();
        let g = solve_gains(&p, 400).unwrap();
        let r_inv = r.try_inverse().unwrap();
        for t in [0.0, 0.6, 1.5] {
            let s = g.at(t);
            assert_relative_eq!(s.h, Matrix2::zeros(), epsilon = 1e-14);
            assert_relative_eq!(s.k, Matrix2::identity(), epsilon = 1e-14);
            assert_relative_eq!(s.g, -r_inv * (2.0 - t), epsilon = 1e-12);
            let x = Vec2::new(0.3, -0.2);
            let u = control_closed_loop(&g, x, t).unwrap();
            assert_relative_eq!(u, (p.xi_end - x) / (2.0 - t), epsilon = 1e-10);
        }
        let rr = Matrix2::identity();
        let p = TrackingProblem::new(Matrix2::zeros(), rr, 0.0, 1.0, Vec2::new(1.0, 2.0), Vec2::new(-1.0, 0.5), zero_ref()).unwrap();
        let g = solve_gains(&p, 100).unwrap();
        assert_relative_eq!(optimal_cost(&g), 0.5 * (p.xi_end - p.xi_start).norm_squared(), epsilon = 1e-10);
    }

    #[test]
    fn stationary_target_costs_nothing() {
        let c = Vec2::new(0.4, -1.0);
        let p = TrackingProblem::isotropic(10.0, 1.0, 0.0, 1.0, c, c, Arc::new(move |_t: f64| c)).unwrap();
        let g = solve_gains(&p, 1000).unwrap();
        assert!(optimal_cost(&g).abs() < 1e-9);
        for t in [0.0, 0.3, 0.9] {
            assert!(control_open_loop(&g, c, t).norm() < 1e-9);
        }
    }

    #[test]
    fn zero_reference_keeps_forcing_terms_zero() {
        let p = TrackingProblem::isotropic(3.0, 0.5, 1.0, 2.5, Vec2::new(1.0, 1.0), Vec2::new(2.0, 0.0), zero_ref()).unwrap();
        let g = solve_gains(&p, 300).unwrap();
        for i in 0..=300 {
            assert_eq!(g.node(i).e, Vec2::zeros());
            assert_eq!(g.node(i).d, Vec2::zeros());
        }
    }

    #[test]
    fn guard_and_errors() {
        let p = TrackingProblem::isotropic(1.0, 1.0, 0.0, 1.0, Vec2::zeros(), Vec2::new(1.0, 0.0), zero_ref()).unwrap();
        let g = solve_gains(&p, 100).unwrap();
        assert!(matches!(control_closed_loop(&g, Vec2::zeros(), 0.999), Err(TrackingError::InsideGuard { .. })));
        let mut held = None;
        let u = control_closed_loop_guarded(&g, Vec2::zeros(), 0.5, &mut held).unwrap();
        assert_eq!(control_closed_loop_guarded(&g, Vec2::zeros(), 0.999, &mut held).unwrap(), u);
        assert!(TrackingProblem::isotropic(1.0, 0.0, 0.0, 1.0, Vec2::zeros(), Vec2::zeros(), zero_ref()).is_err());
        assert!(TrackingProblem::isotropic(1.0, 1.0, 1.0, 1.0, Vec2::zeros(), Vec2::zeros(), zero_ref()).is_err());
        assert!(solve_gains(&p, 1).is_err());
    }

    #[test]
    fn unicycle_examples() {
        assert_eq!(unicycle_map(Vec2::new(1.0, 0.0), 0.0, 5.0), (1.0, 0.0));
        assert_eq!(unicycle_map(Vec2::new(0.0, 1.0), 0.0, 2.0), (0.0, 2.0));
        assert_eq!(unicycle_map(Vec2::new(0.0, 5.0), 0.0, 2.0), (0.0, 2.0));
        assert_eq!(unicycle_map(Vec2::zeros(), 1.0, 2.0), (0.0, 0.0));
    }
}
