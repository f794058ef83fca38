//! Convergence measures computed along trajectories: envelope stationarity,
//! Moreau-envelope gradients, synchronization error and the primal gap.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problems::{EnvelopeForm, ProblemInstance};
use crate::vector::Vector;

/// One row of trajectory metrics, evaluated on the virtual averages.
/// Absent fields mean "not defined / not recorded for this run".
#[derive(Clone, Debug, Serialize)]
pub struct MetricRecord {
    /// Iteration index (state after `step` updates).
    pub step: usize,
    /// `||grad Phi(x_t)||^2` where the envelope is smooth.
    pub grad_phi_norm_sq: Option<f64>,
    /// `||grad Phi_lambda(x_t)||^2` when recorded.
    pub moreau_grad_norm_sq: Option<f64>,
    /// `Phi(x_t) - f(x_t, y_t)`, nonnegative.
    pub phi_gap: Option<f64>,
    /// `(1/n) sum_i ||x_i - x_bar||^2`.
    pub sync_err_x: f64,
    /// `(1/n) sum_i ||y_i - y_bar||^2`.
    pub sync_err_y: f64,
    /// Distance to the unique saddle (NC-SC runs).
    pub dist_to_saddle: Option<f64>,
    /// `||grad_x f(x_t,y_t) - d_x,t||` for momentum runs with exact gradients.
    pub direction_err_x: Option<f64>,
    /// `||grad_y f(x_t,y_t) - d_y,t||` for momentum runs with exact gradients.
    pub direction_err_y: Option<f64>,
    /// Communication rounds completed up to this step.
    pub comm_rounds: usize,
}

/// `||grad Phi(x)||^2` through the closed-form envelope oracle.
pub fn stationarity_phi(problem: &ProblemInstance, x: &Vector) -> Result<f64> {
    Ok(problem.envelope_oracle(x)?.grad_phi.norm_sq())
}

/// Internal smooth-envelope gradient, wider than the public oracle: any
/// instance whose envelope has the quadratic closed form (including the
/// star family).
pub(crate) fn envelope_grad_sq(problem: &ProblemInstance, x: &Vector) -> Option<f64> {
    match &problem.derived().envelope {
        EnvelopeForm::Quadratic { h, g, .. } => {
            let xv: DVector<f64> = x.into();
            Some((h * xv + g).norm_squared())
        }
        _ => None,
    }
}

/// Per-block synchronization error against the fixed-order means:
/// `(1/n) sum ||x_i - x_bar||^2` and the same for y.
pub fn sync_error(xs: &[Vector], ys: &[Vector]) -> (f64, f64) {
    let n = xs.len();
    assert!(n >= 1 && ys.len() == n);
    let x_bar = Vector::mean_of(xs);
    let y_bar = Vector::mean_of(ys);
    let dx = xs.iter().map(|x| x.sub(&x_bar).norm_sq()).sum::<f64>() / n as f64;
    let dy = ys.iter().map(|y| y.sub(&y_bar).norm_sq()).sum::<f64>() / n as f64;
    (dx, dy)
}

/// `Phi(x) - f(x, y)`, clipped to zero from below within a -1e-10 tolerance.
pub fn phi_gap(problem: &ProblemInstance, x: &Vector, y: &Vector) -> Result<f64> {
    let gap = problem.phi(x)? - problem.loss_global(x, y);
    if gap < -1e-10 {
        return Err(Error::Numerical(format!(
            "phi gap {gap} is negative beyond tolerance; envelope and loss disagree"
        )));
    }
    Ok(gap.max(0.0))
}

/// Moreau gradient `(x - prox(x)) / lambda` with a fresh solver.
/// Prefer [`MoreauSolver`] when evaluating many points on one instance.
pub fn moreau_grad(problem: &ProblemInstance, x: &Vector, lambda: f64) -> Result<Vector> {
    Ok(MoreauSolver::new(problem, lambda)?.grad(x))
}

/// Prox solver for the envelope function, cached per (instance, lambda).
///
/// Quadratic envelopes reduce to one linear solve. The ball-constrained
/// linear-in-y family has the nonsmooth envelope `quad + r ||B'x + d||`;
/// there the prox is solved exactly through its dual: for fixed y the inner
/// x-minimization is closed-form, leaving a concave quadratic in y over the
/// ball, i.e. a trust-region subproblem solved on its secular equation to
/// ~1e-14. This sidesteps the kink that would stall a primal Newton method.
pub struct MoreauSolver {
    lambda: f64,
    inner: MoreauInner,
}

enum MoreauInner {
    /// Factorized `H + I/lambda` plus the envelope linear term.
    Quadratic {
        chol: Cholesky<f64, Dyn>,
        g: DVector<f64>,
        h: DMatrix<f64>,
        konst: f64,
    },
    /// Data for the dual trust-region solve.
    BallLinear {
        a_chol: Cholesky<f64, Dyn>,
        b: DMatrix<f64>,
        g: DVector<f64>,
        // eigendecomposition of W = B' A^-1 B
        w_vecs: DMatrix<f64>,
        w_vals: DVector<f64>,
        d: DVector<f64>,
        radius: f64,
        h: DMatrix<f64>,
    },
}

impl MoreauSolver {
    pub fn new(problem: &ProblemInstance, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
        }
        let inv = 1.0 / lambda;
        match &problem.derived().envelope {
            EnvelopeForm::Quadratic { h, g, konst } => {
                let mut shifted = h.clone();
                for i in 0..shifted.nrows() {
                    shifted[(i, i)] += inv;
                }
                let chol = shifted.cholesky().ok_or_else(|| {
                    Error::Numerical(format!(
                        "prox objective not strongly convex at lambda = {lambda}"
                    ))
                })?;
                Ok(MoreauSolver {
                    lambda,
                    inner: MoreauInner::Quadratic {
                        chol,
                        g: g.clone(),
                        h: h.clone(),
                        konst: *konst,
                    },
                })
            }
            EnvelopeForm::BallLinear { h, g, bt, d, radius } => {
                let mut a = h.clone();
                for i in 0..a.nrows() {
                    a[(i, i)] += inv;
                }
                let a_chol = a.cholesky().ok_or_else(|| {
                    Error::Numerical(format!(
                        "prox objective not strongly convex at lambda = {lambda}"
                    ))
                })?;
                let b = bt.transpose();
                // W = B' A^-1 B, PSD because A is PD.
                let a_inv_b = a_chol.solve(&b);
                let mut w = bt * &a_inv_b;
                let wt = w.transpose();
                w = (&w + wt) * 0.5;
                let eig = w.symmetric_eigen();
                Ok(MoreauSolver {
                    lambda,
                    inner: MoreauInner::BallLinear {
                        a_chol,
                        b,
                        g: g.clone(),
                        w_vecs: eig.eigenvectors,
                        w_vals: eig.eigenvalues,
                        d: d.clone(),
                        radius: *radius,
                        h: h.clone(),
                    },
                })
            }
            EnvelopeForm::Unavailable => Err(Error::Unsupported(
                "no envelope closed form; Moreau gradient unavailable for this instance".into(),
            )),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The prox point `argmin Phi(x') + ||x' - x||^2 / (2 lambda)` and the
    /// Moreau envelope value at `x`.
    pub fn prox(&self, x: &Vector) -> (Vector, f64) {
        let xv: DVector<f64> = x.into();
        let inv = 1.0 / self.lambda;
        match &self.inner {
            MoreauInner::Quadratic { chol, g, h, konst } => {
                let rhs = &xv * inv - g;
                let x_hat = chol.solve(&rhs);
                let phi_hat = 0.5 * x_hat.dot(&(h * &x_hat)) + g.dot(&x_hat) + konst;
                let value = phi_hat + (&x_hat - &xv).norm_squared() * (0.5 * inv);
                (x_hat.into(), value)
            }
            MoreauInner::BallLinear {
                a_chol,
                b,
                g,
                w_vecs,
                w_vals,
                d,
                radius,
                h,
            } => {
                let u = &xv * inv - g;
                let rhs = b.transpose() * a_chol.solve(&u) + d;
                let y_star = trust_region_max(w_vecs, w_vals, &rhs, *radius);
                let x_hat = a_chol.solve(&(&u - b * &y_star));
                let phi_hat = 0.5 * x_hat.dot(&(h * &x_hat))
                    + g.dot(&x_hat)
                    + radius * (b.transpose() * &x_hat + d).norm();
                let value = phi_hat + (&x_hat - &xv).norm_squared() * (0.5 * inv);
                (x_hat.into(), value)
            }
        }
    }

    /// `grad Phi_lambda(x) = (x - prox(x)) / lambda`.
    pub fn grad(&self, x: &Vector) -> Vector {
        let (x_hat, _) = self.prox(x);
        x.sub(&x_hat).scale(1.0 / self.lambda)
    }

    /// Moreau envelope value `Phi_lambda(x)`.
    pub fn value(&self, x: &Vector) -> f64 {
        self.prox(x).1
    }
}

/// Maximizes the concave quadratic `-1/2 y'Wy + b'y` over `||y|| <= radius`,
/// given the eigendecomposition of the PSD matrix W.
///
/// Interior case: the minimum-norm stationary point when it fits in the
/// ball. Boundary case: bisection on the secular equation
/// `sum_j (b_j / (w_j + nu))^2 = radius^2`, which is monotone in nu.
fn trust_region_max(
    vecs: &DMatrix<f64>,
    vals: &DVector<f64>,
    b: &DVector<f64>,
    radius: f64,
) -> DVector<f64> {
    let bt = vecs.transpose() * b;
    let top = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let tol = 1e-12 * top.max(1e-300);

    // Unconstrained stationary point exists iff b has no component on the
    // null space of W.
    let null_component_sq: f64 = bt
        .iter()
        .zip(vals.iter())
        .filter(|(_, &l)| l <= tol)
        .map(|(c, _)| c * c)
        .sum();
    if null_component_sq <= (1e-14 * b.norm().max(1e-300)).powi(2) {
        let coeffs = DVector::from_iterator(
            bt.len(),
            bt.iter()
                .zip(vals.iter())
                .map(|(&c, &l)| if l > tol { c / l } else { 0.0 }),
        );
        if coeffs.norm() <= radius {
            return vecs * coeffs;
        }
    }

    // Boundary: ||y(nu)|| is decreasing in nu; root lies in (0, ||b||/r].
    let norm_at = |nu: f64| -> f64 {
        bt.iter()
            .zip(vals.iter())
            .map(|(&c, &l)| {
                let q = c / (l + nu);
                q * q
            })
            .sum::<f64>()
            .sqrt()
    };
    let mut lo = 0.0f64;
    let mut hi = (b.norm() / radius).max(1e-300);
    // Make sure the bracket is valid even with rounding.
    while norm_at(hi) > radius {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm_at(mid) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * (1.0 + hi) {
            break;
        }
    }
    let nu = 0.5 * (lo + hi);
    let coeffs = DVector::from_iterator(
        bt.len(),
        bt.iter().zip(vals.iter()).map(|(&c, &l)| c / (l + nu)),
    );
    vecs * coeffs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{
        make_quadratic, ClassTag, Client, ProblemInstance, QuadraticClient, QuadraticSpec,
        YConstraint,
    };
    use crate::rng::{RngStream, StreamId, StreamPurpose};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    /// Scalar instance with envelope Phi(x) = x^2/2 (Q=0, B=sqrt(2), M=2).
    fn half_square_envelope() -> ProblemInstance {
        let client = QuadraticClient {
            q: DMatrix::from_row_slice(1, 1, &[0.0]),
            b: DMatrix::from_row_slice(1, 1, &[2.0f64.sqrt()]),
            m: DMatrix::from_row_slice(1, 1, &[2.0]),
            c: DVector::zeros(1),
            d: DVector::zeros(1),
        };
        ProblemInstance::from_parts(
            vec![Client::Quadratic(client)],
            0.0,
            ClassTag::NcSc,
            YConstraint::None,
            0,
        )
        .unwrap()
    }

    #[test]
    fn prox_of_half_square_at_unit_lambda() {
        let inst = half_square_envelope();
        let x = Vector::new(vec![2.0]).unwrap();
        let solver = MoreauSolver::new(&inst, 1.0).unwrap();
        let (x_hat, _) = solver.prox(&x);
        assert_relative_eq!(x_hat[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(solver.grad(&x)[0], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn prox_fixed_point_at_envelope_minimizer() {
        let spec = QuadraticSpec {
            seed: 5,
            ..QuadraticSpec::default()
        };
        let inst = make_quadratic(&spec).unwrap();
        let x_min = inst.phi_min_x().unwrap().clone();
        let lambda = 1.0 / (2.0 * inst.l_f());
        let g = moreau_grad(&inst, &x_min, lambda).unwrap();
        assert!(g.norm() < 1e-9, "gradient at minimizer: {}", g.norm());
    }

    #[test]
    fn moreau_identity_at_half_lf() {
        let spec = QuadraticSpec {
            seed: 9,
            ..QuadraticSpec::default()
        };
        let inst = make_quadratic(&spec).unwrap();
        let l_f = inst.l_f();
        let lambda = 1.0 / (2.0 * l_f);
        let solver = MoreauSolver::new(&inst, lambda).unwrap();
        let x = Vector::new(vec![0.7, -0.3, 0.2, 1.1, -0.9]).unwrap();
        let (x_hat, _) = solver.prox(&x);
        let via_lambda = solver.grad(&x);
        let via_lf = x.sub(&x_hat).scale(2.0 * l_f);
        for i in 0..5 {
            assert_relative_eq!(via_lambda[i], via_lf[i], max_relative = 1e-12);
        }
    }

    /// Finite differences of the Moreau envelope value (computed by the same
    /// inner solver) must match the returned gradient.
    #[test]
    fn moreau_grad_matches_finite_differences_quadratic() {
        let spec = QuadraticSpec {
            seed: 21,
            ..QuadraticSpec::default()
        };
        let inst = make_quadratic(&spec).unwrap();
        let lambda = 1.0 / (2.0 * inst.l_f());
        let solver = MoreauSolver::new(&inst, lambda).unwrap();
        let mut stream = RngStream::new(1, StreamId::new(0, StreamPurpose::Validate));
        let x = stream.gaussian_vec(5);
        let g = solver.grad(&x);
        let h = 1e-5;
        for j in 0..5 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (solver.value(&xp) - solver.value(&xm)) / (2.0 * h);
            assert_relative_eq!(fd, g[j], max_relative = 1e-4, epsilon = 1e-9);
        }
    }

    #[test]
    fn moreau_grad_matches_finite_differences_ball_linear() {
        let spec = QuadraticSpec {
            class: ClassTag::NcC,
            seed: 33,
            ..QuadraticSpec::default()
        };
        let inst = make_quadratic(&spec).unwrap();
        let lambda = 1.0 / (2.0 * inst.l_f());
        let solver = MoreauSolver::new(&inst, lambda).unwrap();
        let mut stream = RngStream::new(2, StreamId::new(0, StreamPurpose::Validate));
        for _ in 0..3 {
            let x = stream.gaussian_vec(5);
            let g = solver.grad(&x);
            let h = 1e-5;
            for j in 0..5 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (solver.value(&xp) - solver.value(&xm)) / (2.0 * h);
                assert_relative_eq!(fd, g[j], max_relative = 1e-3, epsilon = 1e-8);
            }
        }
    }

    /// The dual trust-region prox must actually minimize the prox objective:
    /// compare against dense sampling around the returned point.
    #[test]
    fn ball_linear_prox_is_a_minimizer() {
        let spec = QuadraticSpec {
            class: ClassTag::NcC,
            seed: 4,
            ..QuadraticSpec::default()
        };
        let inst = make_quadratic(&spec).unwrap();
        let lambda = 1.0 / (2.0 * inst.l_f());
        let solver = MoreauSolver::new(&inst, lambda).unwrap();
        let x = Vector::new(vec![0.9, -0.4, 0.1, 0.6, -1.2]).unwrap();
        let (x_hat, value) = solver.prox(&x);
        let objective = |z: &Vector| {
            inst.phi(z).unwrap() + z.sub(&x).norm_sq() / (2.0 * lambda)
        };
        assert_relative_eq!(objective(&x_hat), value, max_relative = 1e-10);
        let mut stream = RngStream::new(8, StreamId::new(0, StreamPurpose::Validate));
        for _ in 0..200 {
            let probe = x_hat.add(&stream.gaussian_vec(5).scale(0.05));
            assert!(objective(&probe) >= value - 1e-9);
        }
    }

    #[test]
    fn phi_gap_examples() {
        // Scalar f = -x^2/2 + xy - y^2: Phi(0) = 0, f(0,1) = -1, gap = 1.
        let client = QuadraticClient {
            q: DMatrix::from_row_slice(1, 1, &[-1.0]),
            b: DMatrix::from_row_slice(1, 1, &[1.0]),
            m: DMatrix::from_row_slice(1, 1, &[2.0]),
            c: DVector::zeros(1),
            d: DVector::zeros(1),
        };
        let inst = ProblemInstance::from_parts(
            vec![Client::Quadratic(client)],
            0.0,
            ClassTag::NcSc,
            YConstraint::None,
            0,
        )
        .unwrap();
        let x0 = Vector::new(vec![0.0]).unwrap();
        let y1 = Vector::new(vec![1.0]).unwrap();
        assert_relative_eq!(phi_gap(&inst, &x0, &y1).unwrap(), 1.0, max_relative = 1e-14);
        // y = y*(x): gap vanishes.
        let x = Vector::new(vec![0.8]).unwrap();
        let y_star = inst.y_star(&x).unwrap();
        assert!(phi_gap(&inst, &x, &y_star).unwrap() < 1e-14);
    }

    #[test]
    fn sync_error_arithmetic() {
        let xs = vec![
            Vector::new(vec![0.0]).unwrap(),
            Vector::new(vec![2.0]).unwrap(),
        ];
        let ys = vec![
            Vector::new(vec![1.0]).unwrap(),
            Vector::new(vec![1.0]).unwrap(),
        ];
        let (dx, dy) = sync_error(&xs, &ys);
        assert_eq!(dx, 1.0);
        assert_eq!(dy, 0.0);
    }

    #[test]
    fn stationarity_at_minimizer_is_zero() {
        let spec = QuadraticSpec {
            seed: 17,
            ..QuadraticSpec::default()
        };
        let inst = make_quadratic(&spec).unwrap();
        let x_min = inst.phi_min_x().unwrap().clone();
        assert!(stationarity_phi(&inst, &x_min).unwrap() <= 1e-12);
    }

    #[test]
    fn stationarity_scalar_example() {
        let client = QuadraticClient {
            q: DMatrix::from_row_slice(1, 1, &[-1.0]),
            b: DMatrix::from_row_slice(1, 1, &[1.0]),
            m: DMatrix::from_row_slice(1, 1, &[2.0]),
            c: DVector::zeros(1),
            d: DVector::zeros(1),
        };
        let inst = ProblemInstance::from_parts(
            vec![Client::Quadratic(client)],
            0.0,
            ClassTag::NcSc,
            YConstraint::None,
            0,
        )
        .unwrap();
        let x = Vector::new(vec![1.0]).unwrap();
        assert_relative_eq!(stationarity_phi(&inst, &x).unwrap(), 0.25, max_relative = 1e-14);
    }

    /// Pointwise PL inequality restated through phi_gap on NC-PL instances.
    #[test]
    fn pl_gap_inequality_on_nc_pl() {
        let spec = QuadraticSpec {
            class: ClassTag::NcPl,
            seed: 2,
            ..QuadraticSpec::default()
        };
        let inst = make_quadratic(&spec).unwrap();
        let mu = inst.mu().unwrap();
        let mut stream = RngStream::new(6, StreamId::new(0, StreamPurpose::Validate));
        for _ in 0..1000 {
            let x = stream.gaussian_vec(5);
            let y = stream.gaussian_vec(5).scale(1.5);
            let gap = phi_gap(&inst, &x, &y).unwrap();
            let grad_sq = inst.grad_y_global(&x, &y).norm_sq();
            assert!(
                grad_sq >= 2.0 * mu * gap - 1e-8,
                "PL violated: {grad_sq} < {}",
                2.0 * mu * gap
            );
        }
    }
}
