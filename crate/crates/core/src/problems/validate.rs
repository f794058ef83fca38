//! Numerical validation of the assumption classes an instance claims.
//!
//! Failures are reported, never thrown: the report carries the worst observed
//! slack for each applicable check.

use nalgebra::DVector;
use serde::Serialize;

use super::{Client, ProblemInstance};
use crate::rng::{RngStream, StreamId, StreamPurpose};
use crate::vector::Vector;

/// Slack tolerance for the sampled inequality checks.
pub const CHECK_TOL: f64 = 1e-8;

/// Result of one sampled inequality check: `min_slack >= -tolerance` passes.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SampleCheck {
    pub min_slack: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub samples: usize,
}

impl SampleCheck {
    fn from_slacks(slacks: impl Iterator<Item = f64>, tolerance: f64) -> Self {
        let mut min_slack = f64::INFINITY;
        let mut samples = 0;
        for s in slacks {
            min_slack = min_slack.min(s);
            samples += 1;
        }
        SampleCheck {
            min_slack,
            tolerance,
            passed: min_slack >= -tolerance,
            samples,
        }
    }
}

/// Assumption report: exact constants where the structure allows, sampled
/// estimates and inequality checks otherwise.
#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    /// Lipschitz constant of the stacked gradient map.
    pub l_f: f64,
    /// Whether `l_f` is exact (spectral norm) or an analytic upper bound.
    pub l_f_exact: bool,
    /// PL / strong-concavity constant, when defined.
    pub mu: Option<f64>,
    /// Condition number `l_f / mu`, when defined.
    pub kappa: Option<f64>,
    /// Heterogeneity level in the x-gradients.
    pub varsigma_x: f64,
    /// Heterogeneity level in the y-gradients.
    pub varsigma_y: f64,
    /// Whether the heterogeneity values are exact (constant-offset clients)
    /// or sampled maxima.
    pub varsigma_exact: bool,
    /// `||grad_y f||^2 >= 2 mu (Phi - f)` at samples.
    pub pl_check: Option<SampleCheck>,
    /// `Phi - f >= (mu/2) dist(y, argmax)^2` at samples.
    pub quad_growth_check: Option<SampleCheck>,
    /// `<grad_y f(x,y), y - y*(x)> <= f(x,y) - f(x,y*(x))` at samples.
    pub one_point_concave_check: Option<SampleCheck>,
    pub samples: usize,
}

impl AssumptionReport {
    /// True when every applicable check passed.
    pub fn all_passed(&self) -> bool {
        [
            &self.pl_check,
            &self.quad_growth_check,
            &self.one_point_concave_check,
        ]
        .iter()
        .all(|c| c.map(|c| c.passed).unwrap_or(true))
    }
}

impl ProblemInstance {
    /// Samples random points and checks the inequalities behind the claimed
    /// function class; exact constants are reported where available.
    pub fn validate_assumptions(&self, sample_count: usize) -> AssumptionReport {
        assert!(sample_count >= 1);
        let mut stream = RngStream::new(self.seed(), StreamId::new(0, StreamPurpose::Validate));
        let points: Vec<(Vector, Vector)> = (0..sample_count)
            .map(|_| {
                let x = stream.gaussian_vec(self.d1());
                let mut y = stream.gaussian_vec(self.d2()).scale(1.5);
                self.apply_constraint(&mut y);
                (x, y)
            })
            .collect();

        let (vx, vy, exact) = self.heterogeneity(&points);

        let mu = self.mu();
        let pl_check = if mu.is_some() && self.phi(&points[0].0).is_ok() && !self.is_constrained()
        {
            let mu = mu.unwrap();
            Some(SampleCheck::from_slacks(
                points.iter().map(|(x, y)| {
                    let gap = self.phi(x).unwrap() - self.loss_global(x, y);
                    self.grad_y_global(x, y).norm_sq() - 2.0 * mu * gap
                }),
                CHECK_TOL,
            ))
        } else {
            None
        };

        // Quadratic growth is measured against the distance to the argmax
        // *set* (the PL solution set is an affine subspace when M has a null
        // space).
        let quad_growth_check = if mu.is_some() && pl_check.is_some() {
            let mu = mu.unwrap();
            let proj = &self.derived().m_range_proj;
            Some(SampleCheck::from_slacks(
                points.iter().map(|(x, y)| {
                    let gap = self.phi(x).unwrap() - self.loss_global(x, y);
                    let y_star = self.y_star(x).unwrap();
                    let diff: DVector<f64> = (&y.sub(&y_star)).into();
                    let dist_sq = (proj * diff).norm_squared();
                    gap - 0.5 * mu * dist_sq
                }),
                CHECK_TOL,
            ))
        } else {
            None
        };

        let one_point_concave_check = if self.y_star(&points[0].0).is_ok() {
            Some(SampleCheck::from_slacks(
                points.iter().map(|(x, y)| {
                    let y_star = self.y_star(x).unwrap();
                    let f_y = self.loss_global(x, y);
                    let f_star = self.loss_global(x, &y_star);
                    let inner = self.grad_y_global(x, y).dot(&y.sub(&y_star));
                    (f_y - f_star) - inner
                }),
                CHECK_TOL,
            ))
        } else {
            None
        };

        AssumptionReport {
            l_f: self.l_f(),
            l_f_exact: self.derived().l_f_exact,
            mu,
            kappa: self.kappa(),
            varsigma_x: vx,
            varsigma_y: vy,
            varsigma_exact: exact,
            pl_check,
            quad_growth_check,
            one_point_concave_check,
            samples: sample_count,
        }
    }

    /// Heterogeneity levels: exact when clients differ only by constant
    /// gradient offsets, otherwise the max over the sample points.
    fn heterogeneity(&self, points: &[(Vector, Vector)]) -> (f64, f64, bool) {
        let n = self.n_clients() as f64;
        let d = self.derived();
        let offsets_only = match &self.clients()[0] {
            Client::Quadratic(_) => self.clients().iter().all(|cl| {
                let Client::Quadratic(c) = cl else { unreachable!() };
                let scale = d.q_bar.norm().max(d.m_bar.norm()).max(d.b_bar.norm()).max(1.0);
                (&c.q - &d.q_bar).norm() <= 1e-12 * scale
                    && (&c.b - &d.b_bar).norm() <= 1e-12 * scale
                    && (&c.m - &d.m_bar).norm() <= 1e-12 * scale
            }),
            // Star clients share everything but the linear term by
            // construction; assembly enforces it.
            Client::Star(_) => true,
        };
        if offsets_only {
            let (mut sx, mut sy) = (0.0, 0.0);
            for cl in self.clients() {
                match cl {
                    Client::Quadratic(c) => {
                        sx += (&c.c - &d.c_bar).norm_squared();
                        sy += (&c.d - &d.d_bar).norm_squared();
                    }
                    Client::Star(c) => {
                        sx += (&c.c - &d.c_bar).norm_squared();
                    }
                }
            }
            return ((sx / n).sqrt(), (sy / n).sqrt(), true);
        }
        // Sampled: max over points of the per-point heterogeneity average.
        let (mut vx, mut vy) = (0.0f64, 0.0f64);
        for (x, y) in points {
            let gx = self.grad_x_global(x, y);
            let gy = self.grad_y_global(x, y);
            let mut ax = 0.0;
            let mut ay = 0.0;
            for i in 0..self.n_clients() {
                ax += self.grad_x(i, x, y).sub(&gx).norm_sq();
                ay += self.grad_y(i, x, y).sub(&gy).norm_sq();
            }
            vx = vx.max(ax / n);
            vy = vy.max(ay / n);
        }
        (vx.sqrt(), vy.sqrt(), false)
    }
}
