//! Synthetic federated minimax problems with exact oracles.
//!
//! Each problem is a collection of `n` client losses `f_i(x, y)` whose average
//! is the global objective. Two client families are provided:
//!
//! * quadratic saddle clients (NC-SC, NC-PL and NC-C classes), where the
//!   inner maximizer, envelope function and its gradient all have closed
//!   forms, and
//! * star-concave clients (NC-1PC class), a concave quadratic in `y` composed
//!   with a monotone reparameterization that keeps one-point-concavity toward
//!   the maximizer while breaking global concavity.
//!
//! Construction guarantees the class assumptions hold by design; a sampling
//! report ([`ProblemInstance::validate_assumptions`]) double-checks them
//! numerically.

mod build;
mod serialize;
mod star;
mod validate;

pub use build::{make_quadratic, HeterogeneityMode, HeterogeneityProfile, QuadraticParams, QuadraticSpec};
pub use serialize::ProblemDoc;
pub use star::StarClient;
pub use validate::{AssumptionReport, SampleCheck};

pub(crate) use star::phi_reparam_deriv as phi_slope;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{draw_gaussian, RngStream};
use crate::vector::Vector;

/// Minimax function class of an instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassTag {
    /// Nonconvex in x, strongly concave in y.
    NcSc,
    /// Nonconvex in x, Polyak-Lojasiewicz in y (concave but not strongly).
    NcPl,
    /// Nonconvex in x, linear (hence concave) in y over a ball.
    NcC,
    /// Nonconvex in x, one-point-concave in y.
    Nc1Pc,
}

/// Feasible set for the dual variable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum YConstraint {
    None,
    Ball { radius: f64 },
    Simplex,
}

/// How x- and y-gradient noises relate within one oracle call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCoupling {
    /// Disjoint counter blocks: the two noises are independent.
    #[default]
    Independent,
    /// Both noises are slices of one normal block, so they share randomness
    /// the way a common minibatch sample would.
    Shared,
}

/// One quadratic saddle client:
/// `f_i(x,y) = 1/2 x'Q_i x + x'B_i y - 1/2 y'M_i y + c_i'x + d_i'y`.
#[derive(Clone, Debug)]
pub struct QuadraticClient {
    pub q: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub c: DVector<f64>,
    pub d: DVector<f64>,
}

impl QuadraticClient {
    pub fn value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + x.dot(&(&self.b * y)) - 0.5 * y.dot(&(&self.m * y))
            + self.c.dot(x)
            + self.d.dot(y)
    }

    pub fn grad_x(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        &self.q * x + &self.b * y + &self.c
    }

    pub fn grad_y(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        self.b.transpose() * x - &self.m * y + &self.d
    }
}

/// A client loss; the instance holds one per client, all of the same kind.
#[derive(Clone, Debug)]
pub enum Client {
    Quadratic(QuadraticClient),
    Star(StarClient),
}

impl Client {
    pub fn value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        match self {
            Client::Quadratic(c) => c.value(x, y),
            Client::Star(c) => c.value(x, y),
        }
    }

    pub fn grad_x(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        match self {
            Client::Quadratic(c) => c.grad_x(x, y),
            Client::Star(c) => c.grad_x(x, y),
        }
    }

    pub fn grad_y(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        match self {
            Client::Quadratic(c) => c.grad_y(x, y),
            Client::Star(c) => c.grad_y(x, y),
        }
    }
}

/// Closed form of the envelope `Phi(x) = max_y f(x, y)`, cached per instance.
#[derive(Clone, Debug)]
pub(crate) enum EnvelopeForm {
    /// `Phi(x) = 1/2 x'Hx + g'x + konst` (NC-SC, NC-PL, unconstrained NC-1PC).
    Quadratic {
        h: DMatrix<f64>,
        g: DVector<f64>,
        konst: f64,
    },
    /// `Phi(x) = 1/2 x'Hx + g'x + radius * ||B' x + d||` (ball NC-C, M = 0).
    BallLinear {
        h: DMatrix<f64>,
        g: DVector<f64>,
        bt: DMatrix<f64>,
        d: DVector<f64>,
        radius: f64,
    },
    /// No usable closed form (e.g. simplex-constrained runs).
    Unavailable,
}

/// Quantities derived once from the client list.
#[derive(Clone, Debug)]
pub(crate) struct Derived {
    pub q_bar: DMatrix<f64>,
    pub b_bar: DMatrix<f64>,
    pub m_bar: DMatrix<f64>,
    pub c_bar: DVector<f64>,
    pub d_bar: DVector<f64>,
    /// Pseudo-inverse of `m_bar` (rank-revealing, tol 1e-10 * lambda_max).
    pub m_pinv: DMatrix<f64>,
    /// Orthogonal projector onto range(m_bar).
    pub m_range_proj: DMatrix<f64>,
    pub envelope: EnvelopeForm,
    pub l_f: f64,
    pub l_f_exact: bool,
    /// Smallest nonzero eigenvalue of m_bar (PL / strong-concavity constant).
    pub mu: Option<f64>,
    /// Unique saddle point, NC-SC only.
    pub saddle: Option<(Vector, Vector)>,
    /// Minimizer of Phi when its Hessian is positive definite.
    pub phi_min_x: Option<Vector>,
}

/// An immutable federated minimax problem: clients, noise level, class and
/// dual-variable constraint, plus cached oracles.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    clients: Vec<Client>,
    d1: usize,
    d2: usize,
    sigma: f64,
    class: ClassTag,
    y_constraint: YConstraint,
    seed: u64,
    derived: Derived,
}

impl ProblemInstance {
    /// Builds an instance from explicit clients, validating shapes and
    /// symmetry and computing the derived oracles.
    pub fn from_parts(
        clients: Vec<Client>,
        sigma: f64,
        class: ClassTag,
        y_constraint: YConstraint,
        seed: u64,
    ) -> Result<Self> {
        build::assemble(clients, sigma, class, y_constraint, seed)
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn class(&self) -> ClassTag {
        self.class
    }

    pub fn y_constraint(&self) -> YConstraint {
        self.y_constraint
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn clients(&self) -> &[Client] {
        &self.clients
    }

    /// Exact smoothness constant of the stacked gradient map (an analytic
    /// upper bound for the star family, see [`AssumptionReport::l_f_exact`]).
    pub fn l_f(&self) -> f64 {
        self.derived.l_f
    }

    /// PL / strong-concavity constant, when the class has one.
    pub fn mu(&self) -> Option<f64> {
        self.derived.mu
    }

    /// Condition number `L_f / mu`, when `mu` exists.
    pub fn kappa(&self) -> Option<f64> {
        self.derived.mu.map(|mu| self.derived.l_f / mu)
    }

    /// Unique saddle point (NC-SC instances).
    pub fn saddle(&self) -> Option<&(Vector, Vector)> {
        self.derived.saddle.as_ref()
    }

    /// Minimizer of the envelope, when its Hessian is positive definite.
    pub fn phi_min_x(&self) -> Option<&Vector> {
        self.derived.phi_min_x.as_ref()
    }

    pub(crate) fn derived(&self) -> &Derived {
        &self.derived
    }

    pub fn loss(&self, client: usize, x: &Vector, y: &Vector) -> f64 {
        self.clients[client].value(&x.into(), &y.into())
    }

    /// Global objective `f(x,y) = (1/n) sum_i f_i(x,y)`, evaluated from the
    /// cached client means.
    pub fn loss_global(&self, x: &Vector, y: &Vector) -> f64 {
        let xv: DVector<f64> = x.into();
        let yv: DVector<f64> = y.into();
        match &self.clients[0] {
            Client::Quadratic(_) => {
                let d = &self.derived;
                0.5 * xv.dot(&(&d.q_bar * &xv)) + xv.dot(&(&d.b_bar * &yv))
                    - 0.5 * yv.dot(&(&d.m_bar * &yv))
                    + d.c_bar.dot(&xv)
                    + d.d_bar.dot(&yv)
            }
            Client::Star(s) => {
                let d = &self.derived;
                0.5 * xv.dot(&(&d.q_bar * &xv)) + d.c_bar.dot(&xv)
                    + s.y_part_value(&xv, &yv)
            }
        }
    }

    pub fn grad_x(&self, client: usize, x: &Vector, y: &Vector) -> Vector {
        self.clients[client].grad_x(&x.into(), &y.into()).into()
    }

    pub fn grad_y(&self, client: usize, x: &Vector, y: &Vector) -> Vector {
        self.clients[client].grad_y(&x.into(), &y.into()).into()
    }

    /// Exact gradient of the global objective in x.
    pub fn grad_x_global(&self, x: &Vector, y: &Vector) -> Vector {
        let xv: DVector<f64> = x.into();
        let yv: DVector<f64> = y.into();
        let d = &self.derived;
        match &self.clients[0] {
            Client::Quadratic(_) => (&d.q_bar * &xv + &d.b_bar * &yv + &d.c_bar).into(),
            Client::Star(s) => (&d.q_bar * &xv + &d.c_bar + s.y_part_grad_x(&xv, &yv)).into(),
        }
    }

    /// Exact gradient of the global objective in y.
    pub fn grad_y_global(&self, x: &Vector, y: &Vector) -> Vector {
        let xv: DVector<f64> = x.into();
        let yv: DVector<f64> = y.into();
        let d = &self.derived;
        match &self.clients[0] {
            Client::Quadratic(_) => (d.b_bar.transpose() * &xv - &d.m_bar * &yv + &d.d_bar).into(),
            Client::Star(s) => s.y_part_grad_y(&xv, &yv).into(),
        }
    }

    /// Stochastic gradient oracle: exact client gradients plus zero-mean
    /// noise with `E||noise||^2 = sigma^2` per block, independent across
    /// blocks. `sigma = 0` returns exact gradients.
    pub fn stochastic_grad(
        &self,
        client: usize,
        x: &Vector,
        y: &Vector,
        stream: &mut RngStream,
    ) -> (Vector, Vector) {
        self.stochastic_grad_at(client, x, x, y, stream, NoiseCoupling::Independent)
    }

    /// Stochastic gradients with separately chosen x-arguments: the x-block
    /// gradient is taken at `x_for_x` and the y-block gradient at `x_for_y`
    /// (they differ in the snapshot algorithms).
    pub fn stochastic_grad_at(
        &self,
        client: usize,
        x_for_x: &Vector,
        x_for_y: &Vector,
        y: &Vector,
        stream: &mut RngStream,
        coupling: NoiseCoupling,
    ) -> (Vector, Vector) {
        let mut gx = self.grad_x(client, x_for_x, y);
        let mut gy = self.grad_y(client, x_for_y, y);
        if self.sigma > 0.0 {
            match coupling {
                NoiseCoupling::Independent => {
                    gx = gx.add(&draw_gaussian(stream, self.d1, self.sigma));
                    gy = gy.add(&draw_gaussian(stream, self.d2, self.sigma));
                }
                NoiseCoupling::Shared => {
                    let m = self.d1.max(self.d2);
                    let base = stream.gaussian_vec(m);
                    let sx = self.sigma / (self.d1 as f64).sqrt();
                    let sy = self.sigma / (self.d2 as f64).sqrt();
                    for j in 0..self.d1 {
                        gx[j] += sx * base[j];
                    }
                    for j in 0..self.d2 {
                        gy[j] += sy * base[j];
                    }
                }
            }
        } else {
            // Keep counter layouts identical across noise levels.
            match coupling {
                NoiseCoupling::Independent => stream.advance((self.d1 + self.d2) as u64),
                NoiseCoupling::Shared => stream.advance(self.d1.max(self.d2) as u64),
            }
        }
        (gx, gy)
    }

    /// The inner maximizer `y*(x)`, available in closed form for every
    /// constructed family.
    pub fn y_star(&self, x: &Vector) -> Result<Vector> {
        let xv: DVector<f64> = x.into();
        let d = &self.derived;
        match (&self.clients[0], self.y_constraint) {
            (Client::Quadratic(_), YConstraint::None) => {
                let v = d.b_bar.transpose() * &xv + &d.d_bar;
                Ok((&d.m_pinv * v).into())
            }
            (Client::Quadratic(_), YConstraint::Ball { radius }) => {
                // Linear-in-y over a ball (NC-C construction): the maximizer
                // points along B'x + d.
                if self.class != ClassTag::NcC {
                    return Err(Error::Unsupported(
                        "closed-form y* for constrained problems exists only for the \
                         linear-in-y family"
                            .into(),
                    ));
                }
                let v = d.b_bar.transpose() * &xv + &d.d_bar;
                let norm = v.norm();
                if norm == 0.0 {
                    return Ok(Vector::zeros(self.d2));
                }
                Ok(v.scale(radius / norm).into())
            }
            (Client::Star(s), YConstraint::None) => Ok(s.center(&xv).into()),
            _ => Err(Error::Unsupported(
                "no closed-form inner maximizer for this constraint".into(),
            )),
        }
    }

    /// Envelope value `Phi(x) = max_y f(x, y)`, closed form per family.
    pub fn phi(&self, x: &Vector) -> Result<f64> {
        let xv: DVector<f64> = x.into();
        match &self.derived.envelope {
            EnvelopeForm::Quadratic { h, g, konst } => {
                Ok(0.5 * xv.dot(&(h * &xv)) + g.dot(&xv) + konst)
            }
            EnvelopeForm::BallLinear { h, g, bt, d, radius } => {
                Ok(0.5 * xv.dot(&(h * &xv)) + g.dot(&xv) + radius * (bt * &xv + d).norm())
            }
            EnvelopeForm::Unavailable => Err(Error::Unsupported(
                "no closed-form envelope for this instance".into(),
            )),
        }
    }

    /// Closed-form envelope oracle: value, gradient and inner maximizer.
    ///
    /// Restricted to unconstrained quadratic instances (NC-SC / NC-PL), where
    /// `y* = M^+ (B'x + d)` and `grad Phi(x) = Q x + c + B y*`.
    pub fn envelope_oracle(&self, x: &Vector) -> Result<EnvelopeEval> {
        match &self.clients[0] {
            Client::Quadratic(_) => {}
            Client::Star(_) => {
                return Err(Error::Unsupported(
                    "envelope oracle requires a quadratic instance".into(),
                ))
            }
        }
        if self.y_constraint != YConstraint::None {
            return Err(Error::Unsupported(
                "envelope oracle requires unconstrained y".into(),
            ));
        }
        let d = &self.derived;
        if d.mu.is_none() {
            return Err(Error::Unsupported(
                "envelope oracle requires M positive (semi)definite with attained maximum".into(),
            ));
        }
        let xv: DVector<f64> = x.into();
        let y_star = &d.m_pinv * (d.b_bar.transpose() * &xv + &d.d_bar);
        let grad_phi = &d.q_bar * &xv + &d.c_bar + &d.b_bar * &y_star;
        let phi = self.phi(x)?;
        Ok(EnvelopeEval {
            phi,
            grad_phi: grad_phi.into(),
            y_star: y_star.into(),
        })
    }

    /// Euclidean projection onto the configured y-constraint.
    ///
    /// Errors when the instance is unconstrained; the ball branch rescales,
    /// the simplex branch is the sort-and-threshold projection.
    pub fn project_y(&self, y: &Vector) -> Result<Vector> {
        match self.y_constraint {
            YConstraint::None => Err(Error::Unsupported(
                "project_y on an unconstrained instance".into(),
            )),
            YConstraint::Ball { radius } => Ok(project_ball(y, radius)),
            YConstraint::Simplex => Ok(project_simplex(y)),
        }
    }

    /// In-place constraint application; a no-op when unconstrained.
    pub(crate) fn apply_constraint(&self, y: &mut Vector) {
        match self.y_constraint {
            YConstraint::None => {}
            YConstraint::Ball { radius } => *y = project_ball(y, radius),
            YConstraint::Simplex => *y = project_simplex(y),
        }
    }

    pub fn is_constrained(&self) -> bool {
        self.y_constraint != YConstraint::None
    }

    /// Same clients and oracles with a different gradient-noise level.
    pub fn with_sigma(&self, sigma: f64) -> Self {
        let mut out = self.clone();
        out.sigma = sigma.max(0.0);
        out
    }

    /// Serializes to the structured JSON document (row-major matrices).
    pub fn to_json(&self) -> Result<String> {
        serialize::to_json(self)
    }

    /// Rebuilds an instance from the JSON document, recomputing all derived
    /// oracles.
    pub fn from_json(text: &str) -> Result<Self> {
        serialize::from_json(text)
    }
}

/// Result of the closed-form envelope oracle.
#[derive(Clone, Debug)]
pub struct EnvelopeEval {
    pub phi: f64,
    pub grad_phi: Vector,
    pub y_star: Vector,
}

/// Projection onto the Euclidean ball of the given radius.
pub fn project_ball(y: &Vector, radius: f64) -> Vector {
    let norm = y.norm();
    if norm <= radius {
        y.clone()
    } else {
        y.scale(radius / norm)
    }
}

/// Projection onto the probability simplex `{y >= 0, sum y = 1}` by the
/// sort-and-threshold rule.
pub fn project_simplex(y: &Vector) -> Vector {
    let n = y.dim();
    let mut sorted: Vec<f64> = y.as_slice().to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if k + 1 == n || sorted[k + 1] <= candidate {
            theta = candidate;
            if k + 1 < n && sorted[k + 1] > candidate {
                continue;
            }
            break;
        }
    }
    Vector::from_raw(y.as_slice().iter().map(|&v| (v - theta).max(0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ball_projection_rescales() {
        let y = Vector::new(vec![3.0, 4.0]).unwrap();
        let p = project_ball(&y, 1.0);
        assert_relative_eq!(p[0], 0.6, max_relative = 1e-15);
        assert_relative_eq!(p[1], 0.8, max_relative = 1e-15);
        // Inside the ball: unchanged.
        let y2 = Vector::new(vec![0.1, 0.2]).unwrap();
        assert_eq!(project_ball(&y2, 1.0), y2);
    }

    #[test]
    fn simplex_projection_matches_kkt() {
        // (0.2, 0.2): mass deficit spread evenly -> (0.5, 0.5).
        let p = project_simplex(&Vector::new(vec![0.2, 0.2]).unwrap());
        assert_relative_eq!(p[0], 0.5, max_relative = 1e-14);
        assert_relative_eq!(p[1], 0.5, max_relative = 1e-14);
        // Feasible input is a fixed point.
        let q = project_simplex(&Vector::new(vec![0.3, 0.7]).unwrap());
        assert_relative_eq!(q[0], 0.3, max_relative = 1e-14);
        assert_relative_eq!(q[1], 0.7, max_relative = 1e-14);
    }

    /// Brute-force oracle: projection minimizes the distance over a fine grid
    /// of the 2-d simplex.
    #[test]
    fn simplex_projection_brute_force_2d() {
        let targets = [
            Vector::new(vec![0.9, -0.4]).unwrap(),
            Vector::new(vec![1.5, 1.5]).unwrap(),
            Vector::new(vec![-1.0, 0.2]).unwrap(),
        ];
        for y in &targets {
            let p = project_simplex(y);
            let dist_p = p.sub(y).norm_sq();
            // grid over the segment (t, 1-t), t in [0,1]
            let best = (0..=10_000)
                .map(|i| {
                    let t = i as f64 / 10_000.0;
                    let cand = Vector::new(vec![t, 1.0 - t]).unwrap();
                    cand.sub(y).norm_sq()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(
                dist_p <= best + 1e-6,
                "projection not optimal: {dist_p} vs grid best {best}"
            );
            assert!(p.as_slice().iter().all(|&v| v >= 0.0));
            assert_relative_eq!(p.as_slice().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn simplex_projection_is_idempotent(raw in proptest::collection::vec(-2.0f64..2.0, 2..8)) {
            let y = Vector::new(raw).unwrap();
            let p = project_simplex(&y);
            let pp = project_simplex(&p);
            for i in 0..p.dim() {
                proptest::prop_assert!((p[i] - pp[i]).abs() < 1e-12);
            }
        }
    }
}
