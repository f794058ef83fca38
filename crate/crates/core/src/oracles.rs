//! Independent references used to validate the rest of the crate: finite
//! differences, brute-force inner maximization, log-log rate fitting, and a
//! single-process SGDA reference for the full-synchronization equivalence
//! check. These deliberately do not share code with the implementation paths
//! they verify.

use serde::Serialize;

use crate::algorithms::{AlgorithmConfig, AlgorithmId, Trace, TraceSummary};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricRecord};
use crate::problems::{Client, ProblemInstance};
use crate::rng::{RngStream, StreamId, StreamPurpose};
use crate::vector::Vector;

/// Central-difference gradient with Richardson refinement: when the h and
/// h/2 estimates disagree by more than 1e-4 relative, the extrapolation
/// `(4 D_{h/2} - D_h) / 3` is used instead.
pub fn finite_diff_grad<F: Fn(&Vector) -> f64>(f: F, x: &Vector, h: f64) -> Vector {
    assert!(h > 0.0);
    let dim = x.dim();
    let central = |h: f64, j: usize| {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    };
    let mut out = Vector::zeros(dim);
    for j in 0..dim {
        let d_h = central(h, j);
        let d_half = central(0.5 * h, j);
        let scale = d_h.abs().max(d_half.abs()).max(1e-12);
        out[j] = if (d_h - d_half).abs() / scale > 1e-4 {
            (4.0 * d_half - d_h) / 3.0
        } else {
            d_half
        };
    }
    out
}

/// Multi-start projected gradient ascent with exact line search on the inner
/// problem `max_y f(x, y)`. Returns the best maximizer found and its value.
///
/// Exact steps exist for both client families: the quadratic family gives
/// the classic `||g||^2 / (g'Mg)` step, and the star family's line maximum
/// along the gradient lands on the center directly. Constrained instances
/// use fixed-step projected ascent.
pub fn brute_force_inner_max(
    problem: &ProblemInstance,
    x: &Vector,
    starts: usize,
    tol: f64,
) -> Result<(Vector, f64)> {
    assert!(starts >= 1);
    const MAX_ITERS: usize = 20_000;
    let mut stream = RngStream::new(problem.seed(), StreamId::new(0, StreamPurpose::InnerMax));
    let mut best: Option<(Vector, f64)> = None;
    let mut converged_any = false;

    for s in 0..starts {
        let mut y = if s == 0 {
            Vector::zeros(problem.d2())
        } else {
            stream.gaussian_vec(problem.d2()).scale(1.5)
        };
        if problem.is_constrained() {
            y = problem.project_y(&y)?;
        }
        let mut converged = false;
        for _ in 0..MAX_ITERS {
            let g = problem.grad_y_global(x, &y);
            if !problem.is_constrained() && g.norm() <= tol {
                converged = true;
                break;
            }
            let step = ascent_step(problem, x, &y, &g);
            let mut next = y.axpy(step, &g);
            if problem.is_constrained() {
                next = problem.project_y(&next)?;
            }
            if problem.is_constrained() && next.sub(&y).norm() <= tol * step.max(1e-12) {
                y = next;
                converged = true;
                break;
            }
            y = next;
        }
        converged_any |= converged;
        let value = problem.loss_global(x, &y);
        if best.as_ref().map(|(_, v)| value > *v).unwrap_or(true) {
            best = Some((y, value));
        }
    }
    if !converged_any {
        return Err(Error::Numerical(
            "inner maximization did not converge within the iteration cap".into(),
        ));
    }
    Ok(best.unwrap())
}

fn ascent_step(problem: &ProblemInstance, x: &Vector, y: &Vector, g: &Vector) -> f64 {
    let fallback = 1.0 / problem.l_f().max(1e-12);
    match &problem.clients()[0] {
        Client::Quadratic(_) => {
            // phi(t) = f(x, y + t g) is concave quadratic with
            // phi'(0) = ||g||^2 and phi''(0) = -g'Mg.
            let m = &problem.derived().m_bar;
            let gv: nalgebra::DVector<f64> = g.into();
            let curv = gv.dot(&(m * &gv));
            if curv > 1e-14 * gv.norm_squared().max(1e-300) {
                gv.norm_squared() / curv
            } else {
                fallback
            }
        }
        Client::Star(c) => {
            // Along g the line maximum sits at the center: g = -phi'(s) u,
            // so the exact step is 1/phi'(s).
            let xv: nalgebra::DVector<f64> = x.into();
            let yv: nalgebra::DVector<f64> = y.into();
            let u = yv - c.center(&xv);
            let s = u.norm_squared();
            1.0 / crate::problems::phi_slope(s)
        }
    }
}

/// A fitted log-log slope: `log y ~ intercept + slope * log x`.
#[derive(Clone, Debug, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// The (log x, log y) pairs the fit used.
    pub points: Vec<(f64, f64)>,
}

/// Ordinary least squares on `(log x, log y)`.
pub fn fit_rate(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "rate fit needs at least 3 aligned points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys.iter()).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidConfig(
            "rate fit requires strictly positive finite values".into(),
        ));
    }
    let points: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys.iter())
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx <= 1e-14 * (1.0 + mean_x * mean_x) {
        return Err(Error::InvalidConfig("degenerate rate fit: all x equal".into()));
    }
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    // A constant series is fit perfectly by slope 0.
    let r_squared = if ss_tot <= 1e-300 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        points,
    })
}

/// Single-process SGDA consuming, per step, the average of the n per-client
/// stochastic gradients (a size-n minibatch), with the same streams and the
/// same fixed-order reduction as the distributed runner. At `tau = 1` the
/// distributed virtual-average trajectory must match this bit for bit.
///
/// The reduction averages the n per-gradient updated points rather than
/// updating with the averaged gradient; the two are algebraically identical,
/// and this form makes the floating-point operation order coincide with the
/// server's.
pub fn centralized_sgda_reference(
    problem: &ProblemInstance,
    config: &AlgorithmConfig,
) -> Result<Trace> {
    config.steps.validate()?;
    config.sync.validate()?;
    if config.x0.dim() != problem.d1() || config.y0.dim() != problem.d2() {
        return Err(Error::DimensionMismatch("initial point vs problem dims".into()));
    }
    let n = problem.n_clients();
    let horizon = config.sync.horizon;
    let (eta_x, eta_y) = (config.steps.eta_x, config.steps.eta_y);

    let mut streams: Vec<RngStream> = (0..n)
        .map(|i| RngStream::new(config.seed, StreamId::new(i as u32, StreamPurpose::Grad)))
        .collect();
    let mut out_stream = RngStream::new(config.seed, StreamId::new(u32::MAX, StreamPurpose::Output));
    let output_step = out_stream.next_index(horizon) + 1;
    let mut output_x = config.x0.clone();

    let mut x = config.x0.clone();
    let mut y = config.y0.clone();
    let mut iterates: Option<Vec<(Vector, Vector)>> = config.record_iterates.then(Vec::new);
    let mut records = Vec::new();

    let record_at = |step: usize, x: &Vector, y: &Vector| -> Result<MetricRecord> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Numerical(format!("diverged at step {step}")));
        }
        Ok(MetricRecord {
            step,
            grad_phi_norm_sq: metrics::envelope_grad_sq(problem, x),
            moreau_grad_norm_sq: None,
            phi_gap: problem.phi(x).ok().map(|_| metrics::phi_gap(problem, x, y)).transpose()?,
            sync_err_x: 0.0,
            sync_err_y: 0.0,
            dist_to_saddle: problem
                .saddle()
                .map(|(sx, sy)| (x.sub(sx).norm_sq() + y.sub(sy).norm_sq()).sqrt()),
            direction_err_x: None,
            direction_err_y: None,
            comm_rounds: step,
        })
    };

    let initial = record_at(0, &x, &y)?;
    for t in 0..horizon {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for (i, stream) in streams.iter_mut().enumerate() {
            let (gx, gy) =
                problem.stochastic_grad_at(i, &x, &x, &y, stream, config.noise_coupling);
            xs.push(x.axpy(-eta_x, &gx));
            let mut yi = y.axpy(eta_y, &gy);
            problem.apply_constraint(&mut yi);
            ys.push(yi);
        }
        x = Vector::mean_of(&xs);
        y = Vector::mean_of(&ys);
        let step = t + 1;
        if step == output_step {
            output_x = x.clone();
        }
        if let Some(iters) = iterates.as_mut() {
            iters.push((x.clone(), y.clone()));
        }
        if step % config.metric_stride == 0 || step == horizon {
            records.push(record_at(step, &x, &y)?);
        }
    }

    let summary = TraceSummary {
        horizon,
        tau: 1,
        comm_rounds: horizon,
        output_step,
        output_x,
        final_x: x,
        final_y: y,
        time_mean_grad_phi_sq: mean_of_opt(&records, |r| r.grad_phi_norm_sq),
        time_mean_moreau_sq: None,
        time_mean_phi_gap: mean_of_opt(&records, |r| r.phi_gap),
        time_mean_sync_x: 0.0,
        time_mean_sync_y: 0.0,
        min_grad_phi_sq: records
            .iter()
            .filter_map(|r| r.grad_phi_norm_sq)
            .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |m| m.min(v)))),
        final_grad_phi_sq: records.last().and_then(|r| r.grad_phi_norm_sq),
    };
    Ok(Trace {
        algorithm: AlgorithmId::LocalSgda,
        initial,
        records,
        iterates,
        snapshot_steps: Vec::new(),
        projected: problem.is_constrained(),
        summary,
    })
}

fn mean_of_opt(records: &[MetricRecord], f: impl Fn(&MetricRecord) -> Option<f64>) -> Option<f64> {
    let vals: Vec<f64> = records.iter().filter_map(&f).collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}
