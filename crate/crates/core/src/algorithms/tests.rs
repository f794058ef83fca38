use super::*;
use crate::problems::{
    make_quadratic, ClassTag, Client, ProblemInstance, QuadraticClient, QuadraticSpec, YConstraint,
};
use crate::schedule::{StepSchedule, SyncSchedule};
use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use std::cell::RefCell;

/// Scalar NC-SC instance whose envelope is strongly convex, so two-timescale
/// GDA is a contraction. With Q=-1, B=sqrt(3), M=2 the envelope curvature is
/// Q + B^2/M = 1/2 > 0, and the iteration matrix at (eta_x, eta_y) =
/// (0.01, 0.1) has spectral radius < 1 (checked below via the linear-system
/// oracle).
fn scalar_contraction_instance() -> ProblemInstance {
    let client = QuadraticClient {
        q: DMatrix::from_row_slice(1, 1, &[-1.0]),
        b: DMatrix::from_row_slice(1, 1, &[3.0f64.sqrt()]),
        m: DMatrix::from_row_slice(1, 1, &[2.0]),
        c: DVector::from_column_slice(&[0.1]),
        d: DVector::from_column_slice(&[-0.2]),
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

fn config(eta_x: f64, eta_y: f64, tau: usize, horizon: usize, x0: Vec<f64>, y0: Vec<f64>) -> AlgorithmConfig {
    AlgorithmConfig::new(
        StepSchedule::plain(eta_x, eta_y),
        SyncSchedule::new(tau, None, horizon).unwrap(),
        42,
        Vector::new(x0).unwrap(),
        Vector::new(y0).unwrap(),
    )
}

#[test]
fn gda_converges_on_scalar_contraction() {
    let inst = scalar_contraction_instance();
    // Linear-system oracle: the saddle solves grad f = 0, and the GDA
    // iteration matrix must be a contraction at these steps.
    let (eta_x, eta_y) = (0.01, 0.1);
    let b = 3.0f64.sqrt();
    let g = DMatrix::from_row_slice(
        2,
        2,
        &[1.0 + eta_x, -eta_x * b, eta_y * b, 1.0 - 2.0 * eta_y],
    );
    let rho = g
        .eigenvalues()
        .map(|e| e.iter().fold(0.0f64, |a, &v| a.max(v.abs())))
        .unwrap_or(1.0);
    assert!(rho < 1.0, "iteration matrix is not a contraction: rho = {rho}");
    let (x_star, y_star) = inst.saddle().unwrap().clone();

    let cfg = config(eta_x, eta_y, 1, 10_000, vec![1.0], vec![1.0]);
    let trace = run_local_sgda(&inst, &cfg).unwrap();
    let grad_sq = trace.summary.final_grad_phi_sq.unwrap();
    assert!(grad_sq.sqrt() <= 1e-6, "|grad Phi(x_T)| = {}", grad_sq.sqrt());
    assert!((trace.summary.final_x[0] - x_star[0]).abs() < 1e-6);
    assert!((trace.summary.final_y[0] - y_star[0]).abs() < 1e-6);
}

#[test]
fn identical_clients_match_single_client_run() {
    // Deterministic identical clients: any tau reproduces the n=1 run, and
    // the sync error vanishes identically. n = 4 keeps averaging exact.
    let spec = QuadraticSpec {
        n: 1,
        seed: 3,
        ..QuadraticSpec::default()
    };
    let single = make_quadratic(&spec).unwrap();
    let spec4 = QuadraticSpec { n: 4, ..spec };
    let multi = make_quadratic(&spec4).unwrap();

    let mut cfg = config(0.02, 0.05, 4, 64, vec![0.5; 5], vec![-0.5; 5]);
    cfg.record_iterates = true;
    let t1 = run_local_sgda(&single, &cfg).unwrap();
    let t4 = run_local_sgda(&multi, &cfg).unwrap();
    let it1 = t1.iterates.as_ref().unwrap();
    let it4 = t4.iterates.as_ref().unwrap();
    for (a, b) in it1.iter().zip(it4.iter()) {
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }
    for r in &t4.records {
        assert_eq!(r.sync_err_x, 0.0);
        assert_eq!(r.sync_err_y, 0.0);
    }
}

#[test]
fn zero_steps_freeze_the_iterates() {
    let spec = QuadraticSpec {
        sigma: 0.5,
        seed: 8,
        ..QuadraticSpec::default()
    };
    let inst = make_quadratic(&spec).unwrap();
    let cfg = config(0.0, 0.0, 2, 20, vec![0.7; 5], vec![0.3; 5]);
    let trace = run_local_sgda(&inst, &cfg).unwrap();
    assert_eq!(trace.summary.final_x.as_slice(), &[0.7; 5]);
    assert_eq!(trace.summary.final_y.as_slice(), &[0.3; 5]);
}

#[test]
fn record_counts_follow_stride() {
    let inst = make_quadratic(&QuadraticSpec::default()).unwrap();
    let mut cfg = config(0.01, 0.01, 1, 10, vec![0.1; 5], vec![0.1; 5]);
    let trace = run_local_sgda(&inst, &cfg).unwrap();
    assert_eq!(trace.records.len(), 10);
    assert_eq!(trace.records.last().unwrap().step, 10);
    cfg.metric_stride = 3;
    let trace = run_local_sgda(&inst, &cfg).unwrap();
    let steps: Vec<usize> = trace.records.iter().map(|r| r.step).collect();
    assert_eq!(steps, vec![3, 6, 9, 10]);
}

/// Linear loss (constant gradient): with d0 = g the direction update has a
/// fixed point, exactly, when beta*alpha is a dyadic rational and the
/// gradient entries are small integers.
#[test]
fn momentum_fixed_point_on_constant_gradient() {
    let client = QuadraticClient {
        q: DMatrix::zeros(2, 2),
        b: DMatrix::zeros(2, 2),
        m: DMatrix::zeros(2, 2),
        c: DVector::from_column_slice(&[1.0, -2.0]),
        d: DVector::from_column_slice(&[3.0, 1.0]),
    };
    let inst = ProblemInstance::from_parts(
        vec![Client::Quadratic(client)],
        0.0,
        ClassTag::NcC,
        YConstraint::None,
        0,
    )
    .unwrap();
    let mut cfg = config(0.01, 0.01, 2, 16, vec![0.0; 2], vec![0.0; 2]);
    cfg.steps.alpha = 0.25;
    cfg.steps.beta_x = 3.0;
    cfg.steps.beta_y = 3.0;
    cfg.record_iterates = true;
    let trace = run_momentum_local_sgda(&inst, &cfg, MomentumSync::Average).unwrap();
    // With d_t = g constant, every step moves x by exactly -alpha*eta_x*g.
    let iterates = trace.iterates.as_ref().unwrap();
    let step_delta = 0.25 * 0.01;
    let mut expected_x = [0.0, 0.0];
    for (x, _) in iterates.iter() {
        expected_x[0] -= step_delta * 1.0;
        expected_x[1] -= step_delta * -2.0;
        assert_relative_eq!(x[0], expected_x[0], max_relative = 1e-12);
        assert_relative_eq!(x[1], expected_x[1], max_relative = 1e-12);
    }
}

/// alpha * beta = 1 makes the direction memoryless: the momentum run reduces
/// to plain SGDA with step eta*alpha evaluated one point behind.
#[test]
fn memoryless_momentum_tracks_fresh_gradient() {
    let inst = scalar_contraction_instance();
    let mut cfg = config(0.01, 0.02, 1, 50, vec![1.0], vec![0.5]);
    cfg.steps.alpha = 0.5;
    cfg.steps.beta_x = 2.0;
    cfg.steps.beta_y = 2.0;
    cfg.record_iterates = true;
    let trace = run_momentum_local_sgda(&inst, &cfg, MomentumSync::Average).unwrap();

    // Replay: d_{t+1} = grad at the new iterate, so
    // x_{t+1} = x_t - alpha*eta_x*grad_x(x_t_prev_grad_point) with the
    // gradient evaluated at the *previous* iterate's refresh point.
    let (mut x, mut y) = (1.0f64, 0.5f64);
    let x0 = Vector::new(vec![1.0]).unwrap();
    let y0 = Vector::new(vec![0.5]).unwrap();
    let mut gx = inst.grad_x_global(&x0, &y0)[0];
    let mut gy = inst.grad_y_global(&x0, &y0)[0];
    for (xt, yt) in trace.iterates.as_ref().unwrap() {
        x -= 0.5 * 0.01 * gx;
        y += 0.5 * 0.02 * gy;
        assert_relative_eq!(xt[0], x, max_relative = 1e-12);
        assert_relative_eq!(yt[0], y, max_relative = 1e-12);
        let xv = Vector::new(vec![x]).unwrap();
        let yv = Vector::new(vec![y]).unwrap();
        gx = inst.grad_x_global(&xv, &yv)[0];
        gy = inst.grad_y_global(&xv, &yv)[0];
    }
}

/// The "+" momentum variant resets directions at sync: the first step after
/// any sync leaves the model unchanged, and the next direction is
/// beta*alpha*gradient, observable in the iterate deltas.
#[test]
fn momentum_plus_reset_semantics() {
    let client = QuadraticClient {
        q: DMatrix::zeros(1, 1),
        b: DMatrix::zeros(1, 1),
        m: DMatrix::zeros(1, 1),
        c: DVector::from_column_slice(&[1.0]),
        d: DVector::from_column_slice(&[1.0]),
    };
    let inst = ProblemInstance::from_parts(
        vec![Client::Quadratic(client)],
        0.0,
        ClassTag::NcC,
        YConstraint::None,
        0,
    )
    .unwrap();
    let mut cfg = config(0.1, 0.1, 2, 8, vec![0.0], vec![0.0]);
    cfg.sync.s_interval = Some(2);
    cfg.steps.alpha = 0.1;
    cfg.steps.beta_x = 3.0;
    cfg.steps.beta_y = 3.0;
    cfg.record_iterates = true;
    let trace = run_momentum_local_sgda_plus(&inst, &cfg).unwrap();
    let xs: Vec<f64> = trace
        .iterates
        .as_ref()
        .unwrap()
        .iter()
        .map(|(x, _)| x[0])
        .collect();
    // Sync at steps 2, 4, 6, 8 resets d to 0, so steps 3, 5, 7 hold the model.
    assert_eq!(xs[2], xs[1], "step 3 should hold after the step-2 reset");
    assert_eq!(xs[4], xs[3]);
    // One step later the direction is beta*alpha*g = 0.3 (gradient is 1):
    // the iterate moves by -alpha*eta_x*0.3.
    assert_relative_eq!(xs[3] - xs[2], -0.1 * 0.1 * 0.3, max_relative = 1e-12);
}

/// tau = 1, S = 1: the snapshot always equals the entering iterate, so
/// Local SGDA+ replays Local SGDA bit for bit (same streams, same updates).
#[test]
fn sgda_plus_with_unit_intervals_replays_sgda() {
    let spec = QuadraticSpec {
        sigma: 0.3,
        seed: 9,
        ..QuadraticSpec::default()
    };
    let inst = make_quadratic(&spec).unwrap();
    let mut cfg = config(0.02, 0.05, 1, 40, vec![0.4; 5], vec![-0.1; 5]);
    cfg.record_iterates = true;
    let plain = run_local_sgda(&inst, &cfg).unwrap();
    let mut cfg_plus = cfg.clone();
    cfg_plus.sync.s_interval = Some(1);
    let plus = run_local_sgda_plus(&inst, &cfg_plus).unwrap();
    for (a, b) in plain
        .iterates
        .as_ref()
        .unwrap()
        .iter()
        .zip(plus.iterates.as_ref().unwrap())
    {
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }
}

/// Instrumented oracle: log the x-argument of every y-gradient call and
/// assert it only changes at snapshot boundaries.
struct SnapshotProbe<'a> {
    inner: &'a ProblemInstance,
    y_args: RefCell<Vec<Vector>>,
}

impl SimulationProblem for SnapshotProbe<'_> {
    fn dims(&self) -> (usize, usize) {
        (self.inner.d1(), self.inner.d2())
    }
    fn n_clients(&self) -> usize {
        self.inner.n_clients()
    }
    fn stochastic_grads(
        &self,
        client: usize,
        x_for_x: &Vector,
        x_for_y: &Vector,
        y: &Vector,
        stream: &mut crate::rng::RngStream,
        coupling: crate::problems::NoiseCoupling,
    ) -> (Vector, Vector) {
        self.y_args.borrow_mut().push(x_for_y.clone());
        self.inner
            .stochastic_grad_at(client, x_for_x, x_for_y, y, stream, coupling)
    }
    fn constrain_y(&self, y: &mut Vector) {
        self.inner.apply_constraint(y);
    }
    fn is_constrained(&self) -> bool {
        self.inner.is_constrained()
    }
    fn metric_instance(&self) -> Option<&ProblemInstance> {
        Some(self.inner)
    }
}

#[test]
fn snapshot_argument_is_frozen_between_refreshes() {
    let spec = QuadraticSpec {
        sigma: 0.2,
        seed: 5,
        ..QuadraticSpec::default()
    };
    let inst = make_quadratic(&spec).unwrap();
    let probe = SnapshotProbe {
        inner: &inst,
        y_args: RefCell::new(Vec::new()),
    };
    let n = inst.n_clients();
    let (tau, s, horizon) = (2, 6, 24);
    let mut cfg = config(0.01, 0.02, tau, horizon, vec![0.5; 5], vec![0.2; 5]);
    cfg.sync.s_interval = Some(s);
    let trace = run_local_sgda_plus(&probe, &cfg).unwrap();

    let args = probe.y_args.into_inner();
    assert_eq!(args.len(), n * horizon);
    // Calls are (step, client) in order; the frozen argument may only change
    // when a new snapshot was taken, i.e. entering steps s+1, 2s+1, ...
    for t in 0..horizon {
        for i in 0..n {
            let arg = &args[t * n + i];
            if t % s == 0 && t > 0 {
                // First step after a refresh: must equal the new snapshot and
                // (generically) differ from the previous window's argument.
                assert_ne!(arg, &args[(t - 1) * n], "snapshot failed to refresh at step {t}");
            } else if i > 0 || t % s != 0 {
                let prev = if i > 0 { &args[t * n + i - 1] } else { &args[(t - 1) * n] };
                assert_eq!(arg, prev, "frozen argument changed inside window at step {t}");
            }
        }
    }
    assert_eq!(trace.snapshot_steps, vec![6, 12, 18, 24]);
}

#[test]
fn single_snapshot_uses_initial_point_throughout() {
    let spec = QuadraticSpec {
        sigma: 0.1,
        seed: 6,
        ..QuadraticSpec::default()
    };
    let inst = make_quadratic(&spec).unwrap();
    let probe = SnapshotProbe {
        inner: &inst,
        y_args: RefCell::new(Vec::new()),
    };
    let horizon = 12;
    let mut cfg = config(0.01, 0.02, 2, horizon, vec![0.3; 5], vec![0.1; 5]);
    cfg.sync.s_interval = Some(horizon); // single snapshot at the last step
    run_local_sgda_plus(&probe, &cfg).unwrap();
    let x0 = Vector::new(vec![0.3; 5]).unwrap();
    for arg in probe.y_args.into_inner() {
        assert_eq!(arg, x0);
    }
}

#[test]
fn plus_algorithms_require_snapshot_interval() {
    let inst = make_quadratic(&QuadraticSpec::default()).unwrap();
    let cfg = config(0.01, 0.01, 2, 8, vec![0.1; 5], vec![0.1; 5]);
    assert!(matches!(
        run_local_sgda_plus(&inst, &cfg),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn momentum_plus_identical_clients_match_single_client() {
    let spec1 = QuadraticSpec {
        n: 1,
        seed: 12,
        ..QuadraticSpec::default()
    };
    let spec4 = QuadraticSpec { n: 4, ..spec1 };
    let single = make_quadratic(&spec1).unwrap();
    let multi = make_quadratic(&spec4).unwrap();
    let mut cfg = config(0.02, 0.03, 2, 24, vec![0.5; 5], vec![0.0; 5]);
    cfg.sync.s_interval = Some(4);
    cfg.steps.alpha = 0.2;
    cfg.steps.beta_x = 3.0;
    cfg.steps.beta_y = 3.0;
    cfg.record_iterates = true;
    let t1 = run_momentum_local_sgda_plus(&single, &cfg).unwrap();
    let t4 = run_momentum_local_sgda_plus(&multi, &cfg).unwrap();
    for (a, b) in t1
        .iterates
        .as_ref()
        .unwrap()
        .iter()
        .zip(t4.iterates.as_ref().unwrap())
    {
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }
}

#[test]
fn local_sgd_matches_gradient_descent_on_convex_quadratic() {
    // Convex x-objective: Q positive definite, y frozen at 0.
    let client = QuadraticClient {
        q: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]),
        b: DMatrix::zeros(2, 1),
        m: DMatrix::from_row_slice(1, 1, &[1.0]),
        c: DVector::from_column_slice(&[0.4, -0.3]),
        d: DVector::zeros(1),
    };
    let inst = ProblemInstance::from_parts(
        vec![Client::Quadratic(client.clone()); 2],
        0.0,
        ClassTag::NcSc,
        YConstraint::None,
        0,
    )
    .unwrap();
    let horizon = 400;
    let eta = 0.1; // below 1/(4 L_f)
    let cfg = config(eta, 0.0, 1, horizon, vec![1.0, 1.0], vec![0.0]);
    let trace = run_local_sgd(&inst, &cfg).unwrap();

    // Closed-form GD oracle on g(x) = 1/2 x'Qx + c'x.
    let mut x = DVector::from_column_slice(&[1.0, 1.0]);
    for _ in 0..horizon {
        let g = &client.q * &x + &client.c;
        x -= g * eta;
    }
    assert_relative_eq!(trace.summary.final_x[0], x[0], max_relative = 1e-12);
    assert_relative_eq!(trace.summary.final_x[1], x[1], max_relative = 1e-12);

    // Contraction scaling: the optimality gap shrinks at least as fast as
    // (1 - eta*mu_min)^(2T) in squared distance terms.
    let x_star = client.q.clone().cholesky().unwrap().solve(&(-&client.c));
    let mu_min = client
        .q
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    let bound = (1.0 - eta * mu_min).powi(horizon as i32) * (DVector::from_column_slice(&[1.0, 1.0]) - &x_star).norm();
    assert!((x - &x_star).norm() <= bound * (1.0 + 1e-9));
}

#[test]
fn local_sgd_rejects_oversized_steps() {
    let inst = make_quadratic(&QuadraticSpec::default()).unwrap();
    let l_f = inst.l_f();
    // tau = 5: cap is 1/(8 L (tau-1)); violate it.
    let eta = 1.0 / (8.0 * l_f * 4.0) * 1.5;
    let cfg = config(eta, 0.0, 5, 20, vec![0.0; 5], vec![0.0; 5]);
    assert!(matches!(run_local_sgd(&inst, &cfg), Err(Error::InvalidConfig(_))));
}

#[test]
fn constrained_run_is_flagged_and_feasible() {
    let spec = QuadraticSpec {
        class: ClassTag::NcC,
        sigma: 0.2,
        seed: 4,
        ..QuadraticSpec::default()
    };
    let inst = make_quadratic(&spec).unwrap();
    let cfg = config(0.01, 0.05, 2, 40, vec![0.5; 5], vec![0.0; 5]);
    let trace = run_local_sgda(&inst, &cfg).unwrap();
    assert!(trace.projected);
    assert!(trace.summary.final_y.norm() <= 1.0 + 1e-12);
}

#[test]
fn determinism_same_config_same_trace() {
    let spec = QuadraticSpec {
        sigma: 0.4,
        seed: 77,
        ..QuadraticSpec::default()
    };
    let inst = make_quadratic(&spec).unwrap();
    let mut cfg = config(0.01, 0.02, 2, 30, vec![0.5; 5], vec![0.1; 5]);
    cfg.record_iterates = true;
    let a = run_local_sgda(&inst, &cfg).unwrap();
    let b = run_local_sgda(&inst, &cfg).unwrap();
    assert_eq!(a.iterates.as_ref().unwrap(), b.iterates.as_ref().unwrap());
    assert_eq!(a.summary.output_step, b.summary.output_step);
    assert_eq!(a.summary.output_x, b.summary.output_x);
}

/// Averaging identical states is a no-op (sync idempotence at the vector
/// level, for client counts where the mean is exact).
#[test]
fn averaging_identical_states_is_identity() {
    let v = Vector::new(vec![0.12345678901234567, -3.2e-5, 7.0]).unwrap();
    for n in [1, 2, 4, 8] {
        let vs = vec![v.clone(); n];
        assert_eq!(Vector::mean_of(&vs), v);
    }
}

/// Momentum direction update is a convex combination: each coordinate of
/// d_{t+1} lies between d_t and the fresh gradient.
#[test]
fn momentum_update_stays_on_segment() {
    let spec = QuadraticSpec {
        sigma: 0.5,
        seed: 15,
        ..QuadraticSpec::default()
    };
    let inst = make_quadratic(&spec).unwrap();
    // Wrap to capture gradients; replay the mixing identity externally.
    struct GradLog<'a> {
        inner: &'a ProblemInstance,
        log: RefCell<Vec<(Vector, Vector)>>,
    }
    impl SimulationProblem for GradLog<'_> {
        fn dims(&self) -> (usize, usize) {
            (self.inner.d1(), self.inner.d2())
        }
        fn n_clients(&self) -> usize {
            self.inner.n_clients()
        }
        fn stochastic_grads(
            &self,
            client: usize,
            x_for_x: &Vector,
            x_for_y: &Vector,
            y: &Vector,
            stream: &mut crate::rng::RngStream,
            coupling: crate::problems::NoiseCoupling,
        ) -> (Vector, Vector) {
            let g = self
                .inner
                .stochastic_grad_at(client, x_for_x, x_for_y, y, stream, coupling);
            self.log.borrow_mut().push(g.clone());
            g
        }
        fn constrain_y(&self, y: &mut Vector) {
            self.inner.apply_constraint(y);
        }
        fn is_constrained(&self) -> bool {
            self.inner.is_constrained()
        }
        fn metric_instance(&self) -> Option<&ProblemInstance> {
            Some(self.inner)
        }
    }
    let probe = GradLog {
        inner: &inst,
        log: RefCell::new(Vec::new()),
    };
    let n = inst.n_clients();
    let mut cfg = config(0.01, 0.01, 4, 8, vec![0.5; 5], vec![0.1; 5]);
    cfg.steps.alpha = 0.2;
    cfg.steps.beta_x = 3.0;
    cfg.steps.beta_y = 3.0;
    run_momentum_local_sgda(&probe, &cfg, MomentumSync::Keep).unwrap();

    // Replay directions per client from the logged gradients (first n calls
    // are the initializations) and check the affine identity coordinatewise.
    let log = probe.log.into_inner();
    let (mix, keep) = (3.0 * 0.2, 1.0 - 3.0 * 0.2);
    for client in 0..n {
        let mut d = log[client].0.clone();
        for t in 0..8 {
            let g = &log[n + t * n + client].0;
            for j in 0..d.dim() {
                let next = keep * d[j] + mix * g[j];
                let (lo, hi) = if d[j] <= g[j] { (d[j], g[j]) } else { (g[j], d[j]) };
                assert!(next >= lo - 1e-15 && next <= hi + 1e-15);
                d[j] = next;
            }
        }
    }
}
