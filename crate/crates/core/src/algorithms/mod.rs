//! Local-update descent/ascent algorithms behind one engine.
//!
//! All four minimax algorithms share the same skeleton: every step each
//! client updates its private iterates from stochastic gradients, and every
//! `tau` steps the server replaces client models with their fixed-order
//! average. They differ in where gradients are evaluated (current iterate vs
//! a frozen snapshot for the y-block) and whether momentum directions drive
//! the steps. The engine records metrics on the *virtual averages* (the
//! across-client means, materialized every step even though a real
//! deployment only sees them at synchronization).
//!
//! Determinism contract: each client owns a counter-based stream and the
//! server reduction sums in ascending client order, so a run is a pure
//! function of (problem, config). Client updates within a step are
//! independent and could execute in parallel; this implementation keeps them
//! sequential, which is the reference order any parallel schedule must
//! reproduce bit-for-bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, MetricRecord, MoreauSolver};
use crate::problems::{NoiseCoupling, ProblemInstance};
use crate::rng::{RngStream, StreamId, StreamPurpose};
use crate::schedule::{StepSchedule, SyncSchedule};
use crate::vector::Vector;

/// Which algorithm a trace came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmId {
    LocalSgda,
    MomentumLocalSgda,
    LocalSgdaPlus,
    MomentumLocalSgdaPlus,
    LocalSgd,
}

impl AlgorithmId {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlgorithmId::LocalSgda => "local_sgda",
            AlgorithmId::MomentumLocalSgda => "momentum_local_sgda",
            AlgorithmId::LocalSgdaPlus => "local_sgda_plus",
            AlgorithmId::MomentumLocalSgdaPlus => "momentum_local_sgda_plus",
            AlgorithmId::LocalSgd => "local_sgd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "local_sgda" => Ok(AlgorithmId::LocalSgda),
            "momentum_local_sgda" => Ok(AlgorithmId::MomentumLocalSgda),
            "local_sgda_plus" => Ok(AlgorithmId::LocalSgdaPlus),
            "momentum_local_sgda_plus" => Ok(AlgorithmId::MomentumLocalSgdaPlus),
            "local_sgd" => Ok(AlgorithmId::LocalSgd),
            other => Err(Error::Unknown(format!("algorithm '{other}'"))),
        }
    }
}

/// What happens to momentum directions at a model-sync event. The analyzed
/// momentum algorithm averages them; its experimental variant communicates
/// only models (keep); the snapshot momentum variant resets them to zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentumSync {
    #[default]
    Average,
    Reset,
    Keep,
}

/// Run configuration shared by all algorithms.
#[derive(Clone, Debug)]
pub struct AlgorithmConfig {
    pub steps: StepSchedule,
    pub sync: SyncSchedule,
    pub seed: u64,
    pub x0: Vector,
    pub y0: Vector,
    pub noise_coupling: NoiseCoupling,
    /// Record metrics every this many steps (the final step is always
    /// recorded).
    pub metric_stride: usize,
    /// Keep the full virtual-average trajectory in the trace.
    pub record_iterates: bool,
    /// Record the Moreau-envelope gradient (needs an inner solve per record).
    pub record_moreau: bool,
}

impl AlgorithmConfig {
    pub fn new(steps: StepSchedule, sync: SyncSchedule, seed: u64, x0: Vector, y0: Vector) -> Self {
        AlgorithmConfig {
            steps,
            sync,
            seed,
            x0,
            y0,
            noise_coupling: NoiseCoupling::Independent,
            metric_stride: 1,
            record_iterates: false,
            record_moreau: false,
        }
    }
}

/// Per-client state: private iterates, optional momentum directions and the
/// client's own random stream.
#[derive(Clone, Debug)]
pub struct ClientState {
    pub x: Vector,
    pub y: Vector,
    pub d_x: Option<Vector>,
    pub d_y: Option<Vector>,
    pub stream: RngStream,
}

/// Server-side bookkeeping: last synchronized averages, the frozen snapshot
/// for the "+" algorithms, and event counters.
#[derive(Clone, Debug)]
pub struct ServerState {
    pub x_bar: Vector,
    pub y_bar: Vector,
    pub x_snapshot: Vector,
    pub round_count: usize,
    pub snapshot_count: usize,
}

/// Aggregate statistics of one run.
#[derive(Clone, Debug, Serialize)]
pub struct TraceSummary {
    pub horizon: usize,
    pub tau: usize,
    /// Total communication rounds `T / tau`.
    pub comm_rounds: usize,
    /// Uniformly random step index in `1..=T` (seeded draw).
    pub output_step: usize,
    /// Virtual average at `output_step` (the algorithm's returned iterate).
    pub output_x: Vector,
    pub final_x: Vector,
    pub final_y: Vector,
    pub time_mean_grad_phi_sq: Option<f64>,
    pub time_mean_moreau_sq: Option<f64>,
    pub time_mean_phi_gap: Option<f64>,
    pub time_mean_sync_x: f64,
    pub time_mean_sync_y: f64,
    pub min_grad_phi_sq: Option<f64>,
    pub final_grad_phi_sq: Option<f64>,
}

/// Full record of one run: per-stride metrics on the virtual averages plus
/// run metadata. Metric time-means are taken over the recorded steps.
#[derive(Clone, Debug)]
pub struct Trace {
    pub algorithm: AlgorithmId,
    /// Metrics at the initial point (step 0).
    pub initial: MetricRecord,
    /// Metrics at steps `stride, 2*stride, ..., T`.
    pub records: Vec<MetricRecord>,
    /// Virtual averages `(x_t, y_t)` for `t = 1..=T` when recorded.
    pub iterates: Option<Vec<(Vector, Vector)>>,
    /// Steps at which the snapshot iterate was refreshed.
    pub snapshot_steps: Vec<usize>,
    /// Whether y-projection was active during the run.
    pub projected: bool,
    pub summary: TraceSummary,
}

/// Problem surface the engine consumes. `ProblemInstance` implements it;
/// tests wrap it to instrument oracle calls.
pub trait SimulationProblem {
    fn dims(&self) -> (usize, usize);
    fn n_clients(&self) -> usize;
    /// Stochastic gradient pair; the x-block gradient is evaluated at
    /// `x_for_x` and the y-block gradient at `x_for_y` (these differ in the
    /// snapshot algorithms).
    fn stochastic_grads(
        &self,
        client: usize,
        x_for_x: &Vector,
        x_for_y: &Vector,
        y: &Vector,
        stream: &mut RngStream,
        coupling: NoiseCoupling,
    ) -> (Vector, Vector);
    fn constrain_y(&self, y: &mut Vector);
    fn is_constrained(&self) -> bool;
    /// Access to the concrete instance for metric oracles, when available.
    fn metric_instance(&self) -> Option<&ProblemInstance>;
}

impl SimulationProblem for ProblemInstance {
    fn dims(&self) -> (usize, usize) {
        (self.d1(), self.d2())
    }

    fn n_clients(&self) -> usize {
        self.n_clients()
    }

    fn stochastic_grads(
        &self,
        client: usize,
        x_for_x: &Vector,
        x_for_y: &Vector,
        y: &Vector,
        stream: &mut RngStream,
        coupling: NoiseCoupling,
    ) -> (Vector, Vector) {
        self.stochastic_grad_at(client, x_for_x, x_for_y, y, stream, coupling)
    }

    fn constrain_y(&self, y: &mut Vector) {
        self.apply_constraint(y);
    }

    fn is_constrained(&self) -> bool {
        self.is_constrained()
    }

    fn metric_instance(&self) -> Option<&ProblemInstance> {
        Some(self)
    }
}

/// Local SGDA: simultaneous descent/ascent with private stochastic gradients,
/// model averaging every `tau` steps.
pub fn run_local_sgda<P: SimulationProblem>(problem: &P, config: &AlgorithmConfig) -> Result<Trace> {
    run_engine(problem, config, AlgorithmId::LocalSgda, MomentumSync::Average)
}

/// Momentum Local SGDA: direction estimates drive half-steps mixed with
/// weight `alpha`; directions are refreshed from gradients at the new
/// iterate. `momentum_sync` selects what happens to directions at sync.
pub fn run_momentum_local_sgda<P: SimulationProblem>(
    problem: &P,
    config: &AlgorithmConfig,
    momentum_sync: MomentumSync,
) -> Result<Trace> {
    run_engine(problem, config, AlgorithmId::MomentumLocalSgda, momentum_sync)
}

/// Local SGDA+: x-updates as Local SGDA; y-gradients are evaluated with the
/// x-argument frozen at a snapshot refreshed every `s_interval` steps.
pub fn run_local_sgda_plus<P: SimulationProblem>(
    problem: &P,
    config: &AlgorithmConfig,
) -> Result<Trace> {
    run_engine(problem, config, AlgorithmId::LocalSgdaPlus, MomentumSync::Average)
}

/// Momentum Local SGDA+: momentum half-steps with snapshot-frozen y-gradients;
/// directions reset to zero at every model sync (this variant's stated rule).
pub fn run_momentum_local_sgda_plus<P: SimulationProblem>(
    problem: &P,
    config: &AlgorithmConfig,
) -> Result<Trace> {
    run_engine(
        problem,
        config,
        AlgorithmId::MomentumLocalSgdaPlus,
        MomentumSync::Reset,
    )
}

fn validate_run<P: SimulationProblem>(
    problem: &P,
    config: &AlgorithmConfig,
    algo: AlgorithmId,
) -> Result<()> {
    config.steps.validate()?;
    config.sync.validate()?;
    let (d1, d2) = problem.dims();
    if config.x0.dim() != d1 || config.y0.dim() != d2 {
        return Err(Error::DimensionMismatch(format!(
            "initial point ({}, {}) vs problem dims ({d1}, {d2})",
            config.x0.dim(),
            config.y0.dim()
        )));
    }
    if problem.n_clients() == 0 {
        return Err(Error::InvalidProblem("no clients".into()));
    }
    if config.metric_stride == 0 {
        return Err(Error::InvalidConfig("metric_stride must be >= 1".into()));
    }
    let needs_snapshot = matches!(
        algo,
        AlgorithmId::LocalSgdaPlus | AlgorithmId::MomentumLocalSgdaPlus
    );
    if needs_snapshot && config.sync.s_interval.is_none() {
        return Err(Error::InvalidConfig(format!(
            "{} requires a snapshot interval",
            algo.as_str()
        )));
    }
    Ok(())
}

struct MetricEngine<'a> {
    instance: Option<&'a ProblemInstance>,
    moreau: Option<MoreauSolver>,
}

impl<'a> MetricEngine<'a> {
    fn new<P: SimulationProblem>(problem: &'a P, config: &AlgorithmConfig) -> Result<Self> {
        let instance = problem.metric_instance();
        let moreau = match (config.record_moreau, instance) {
            (true, Some(inst)) => Some(MoreauSolver::new(inst, 1.0 / (2.0 * inst.l_f()))?),
            (true, None) => {
                return Err(Error::InvalidConfig(
                    "moreau recording requires a metric-capable problem".into(),
                ))
            }
            _ => None,
        };
        Ok(MetricEngine { instance, moreau })
    }

    fn record(
        &self,
        step: usize,
        clients: &[ClientState],
        x_bar: &Vector,
        y_bar: &Vector,
        comm_rounds: usize,
        momentum: bool,
    ) -> Result<MetricRecord> {
        if !x_bar.is_finite() || !y_bar.is_finite() {
            return Err(Error::Numerical(format!(
                "iterates diverged (non-finite virtual average) at step {step}"
            )));
        }
        let xs: Vec<Vector> = clients.iter().map(|c| c.x.clone()).collect();
        let ys: Vec<Vector> = clients.iter().map(|c| c.y.clone()).collect();
        let (sync_err_x, sync_err_y) = metrics::sync_error(&xs, &ys);

        let mut rec = MetricRecord {
            step,
            grad_phi_norm_sq: None,
            moreau_grad_norm_sq: None,
            phi_gap: None,
            sync_err_x,
            sync_err_y,
            dist_to_saddle: None,
            direction_err_x: None,
            direction_err_y: None,
            comm_rounds,
        };
        if let Some(inst) = self.instance {
            rec.grad_phi_norm_sq = metrics::envelope_grad_sq(inst, x_bar);
            if inst.phi(x_bar).is_ok() {
                rec.phi_gap = Some(metrics::phi_gap(inst, x_bar, y_bar)?);
            }
            if let Some((sx, sy)) = inst.saddle() {
                let d2 = x_bar.sub(sx).norm_sq() + y_bar.sub(sy).norm_sq();
                rec.dist_to_saddle = Some(d2.sqrt());
            }
            if let Some(moreau) = &self.moreau {
                rec.moreau_grad_norm_sq = Some(moreau.grad(x_bar).norm_sq());
            }
            if momentum {
                let dxs: Vec<Vector> = clients.iter().map(|c| c.d_x.clone().unwrap()).collect();
                let dys: Vec<Vector> = clients.iter().map(|c| c.d_y.clone().unwrap()).collect();
                let dx_bar = Vector::mean_of(&dxs);
                let dy_bar = Vector::mean_of(&dys);
                rec.direction_err_x = Some(inst.grad_x_global(x_bar, y_bar).sub(&dx_bar).norm());
                rec.direction_err_y = Some(inst.grad_y_global(x_bar, y_bar).sub(&dy_bar).norm());
            }
        }
        Ok(rec)
    }
}

fn run_engine<P: SimulationProblem>(
    problem: &P,
    config: &AlgorithmConfig,
    algo: AlgorithmId,
    momentum_sync: MomentumSync,
) -> Result<Trace> {
    validate_run(problem, config, algo)?;
    let n = problem.n_clients();
    let horizon = config.sync.horizon;
    let tau = config.sync.tau;
    let momentum = matches!(
        algo,
        AlgorithmId::MomentumLocalSgda | AlgorithmId::MomentumLocalSgdaPlus
    );
    let snapshotting = matches!(
        algo,
        AlgorithmId::LocalSgdaPlus | AlgorithmId::MomentumLocalSgdaPlus
    );
    let StepSchedule {
        eta_x,
        eta_y,
        alpha,
        beta_x,
        beta_y,
    } = config.steps;
    // Momentum direction updates are convex combinations with these fixed
    // coefficients; computing them once keeps the identity exact.
    let mix_x = beta_x * alpha;
    let keep_x = 1.0 - mix_x;
    let mix_y = beta_y * alpha;
    let keep_y = 1.0 - mix_y;

    let mut clients: Vec<ClientState> = (0..n)
        .map(|i| ClientState {
            x: config.x0.clone(),
            y: config.y0.clone(),
            d_x: None,
            d_y: None,
            stream: RngStream::new(config.seed, StreamId::new(i as u32, StreamPurpose::Grad)),
        })
        .collect();
    let mut server = ServerState {
        x_bar: config.x0.clone(),
        y_bar: config.y0.clone(),
        x_snapshot: config.x0.clone(),
        round_count: 0,
        snapshot_count: 0,
    };

    // Directions start from a stochastic gradient at the initial point.
    if momentum {
        for state in clients.iter_mut() {
            let (gx, gy) = problem.stochastic_grads(
                state.stream.id().client as usize,
                &config.x0,
                &config.x0,
                &config.y0,
                &mut state.stream,
                config.noise_coupling,
            );
            state.d_x = Some(gx);
            state.d_y = Some(gy);
        }
    }

    let metrics_engine = MetricEngine::new(problem, config)?;
    let initial = metrics_engine.record(0, &clients, &config.x0, &config.y0, 0, momentum)?;

    // The returned iterate is the virtual average at a uniformly random step,
    // drawn up front from a dedicated stream (the index does not depend on
    // the trajectory).
    let mut out_stream = RngStream::new(config.seed, StreamId::new(u32::MAX, StreamPurpose::Output));
    let output_step = out_stream.next_index(horizon) + 1;
    let mut output_x = config.x0.clone();

    let mut records: Vec<MetricRecord> = Vec::with_capacity(horizon / config.metric_stride + 1);
    let mut iterates: Option<Vec<(Vector, Vector)>> = if config.record_iterates {
        Some(Vec::with_capacity(horizon))
    } else {
        None
    };
    let mut snapshot_steps = Vec::new();

    for t in 0..horizon {
        for state in clients.iter_mut() {
            let client = state.stream.id().client as usize;
            if momentum {
                // Half-step from the current directions, then mix.
                let d_x = state.d_x.as_ref().unwrap();
                let d_y = state.d_y.as_ref().unwrap();
                let x_half = state.x.axpy(-eta_x, d_x);
                state.x = state.x.axpy(alpha, &x_half.sub(&state.x));
                let y_half = state.y.axpy(eta_y, d_y);
                state.y = state.y.axpy(alpha, &y_half.sub(&state.y));
                problem.constrain_y(&mut state.y);
                // Fresh sample at the new iterate feeds the directions.
                let x_for_y = if snapshotting { &server.x_snapshot } else { &state.x };
                let (gx, gy) = problem.stochastic_grads(
                    client,
                    &state.x,
                    x_for_y,
                    &state.y,
                    &mut state.stream,
                    config.noise_coupling,
                );
                let d_x = state.d_x.as_mut().unwrap();
                for j in 0..d_x.dim() {
                    d_x[j] = keep_x * d_x[j] + mix_x * gx[j];
                }
                let d_y = state.d_y.as_mut().unwrap();
                for j in 0..d_y.dim() {
                    d_y[j] = keep_y * d_y[j] + mix_y * gy[j];
                }
            } else {
                let x_for_y = if snapshotting { &server.x_snapshot } else { &state.x };
                let (gx, gy) = problem.stochastic_grads(
                    client,
                    &state.x,
                    x_for_y,
                    &state.y,
                    &mut state.stream,
                    config.noise_coupling,
                );
                state.x.axpy_mut(-eta_x, &gx);
                state.y.axpy_mut(eta_y, &gy);
                problem.constrain_y(&mut state.y);
            }
        }

        let step = t + 1;
        if step % tau == 0 {
            let xs: Vec<Vector> = clients.iter().map(|c| c.x.clone()).collect();
            let ys: Vec<Vector> = clients.iter().map(|c| c.y.clone()).collect();
            server.x_bar = Vector::mean_of(&xs);
            server.y_bar = Vector::mean_of(&ys);
            server.round_count += 1;
            for state in clients.iter_mut() {
                state.x = server.x_bar.clone();
                state.y = server.y_bar.clone();
            }
            if momentum {
                match (algo, momentum_sync) {
                    (AlgorithmId::MomentumLocalSgdaPlus, _) | (_, MomentumSync::Reset) => {
                        let (d1, d2) = problem.dims();
                        for state in clients.iter_mut() {
                            state.d_x = Some(Vector::zeros(d1));
                            state.d_y = Some(Vector::zeros(d2));
                        }
                    }
                    (_, MomentumSync::Average) => {
                        let dxs: Vec<Vector> =
                            clients.iter().map(|c| c.d_x.clone().unwrap()).collect();
                        let dys: Vec<Vector> =
                            clients.iter().map(|c| c.d_y.clone().unwrap()).collect();
                        let dx_bar = Vector::mean_of(&dxs);
                        let dy_bar = Vector::mean_of(&dys);
                        for state in clients.iter_mut() {
                            state.d_x = Some(dx_bar.clone());
                            state.d_y = Some(dy_bar.clone());
                        }
                    }
                    (_, MomentumSync::Keep) => {}
                }
            }
        }
        if snapshotting {
            if let Some(s) = config.sync.s_interval {
                if step % s == 0 {
                    let xs: Vec<Vector> = clients.iter().map(|c| c.x.clone()).collect();
                    server.x_snapshot = Vector::mean_of(&xs);
                    server.snapshot_count += 1;
                    snapshot_steps.push(step);
                }
            }
        }

        // Virtual averages, materialized every step for metrics and output.
        let xs: Vec<Vector> = clients.iter().map(|c| c.x.clone()).collect();
        let ys: Vec<Vector> = clients.iter().map(|c| c.y.clone()).collect();
        let x_bar = Vector::mean_of(&xs);
        let y_bar = Vector::mean_of(&ys);
        if step == output_step {
            output_x = x_bar.clone();
        }
        if let Some(iters) = iterates.as_mut() {
            iters.push((x_bar.clone(), y_bar.clone()));
        }
        if step % config.metric_stride == 0 || step == horizon {
            records.push(metrics_engine.record(
                step,
                &clients,
                &x_bar,
                &y_bar,
                server.round_count,
                momentum,
            )?);
        }
    }

    let summary = summarize(
        horizon,
        tau,
        output_step,
        output_x,
        &records,
        clients[0].x.clone(),
        clients[0].y.clone(),
    );
    // The final client iterates coincide with the averages when T % tau = 0,
    // which SyncSchedule guarantees.
    Ok(Trace {
        algorithm: algo,
        initial,
        records,
        iterates,
        snapshot_steps,
        projected: problem.is_constrained(),
        summary,
    })
}

fn summarize(
    horizon: usize,
    tau: usize,
    output_step: usize,
    output_x: Vector,
    records: &[MetricRecord],
    final_x: Vector,
    final_y: Vector,
) -> TraceSummary {
    fn mean_opt(records: &[MetricRecord], f: impl Fn(&MetricRecord) -> Option<f64>) -> Option<f64> {
        let vals: Vec<f64> = records.iter().filter_map(&f).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
    let last = records.last();
    TraceSummary {
        horizon,
        tau,
        comm_rounds: horizon / tau,
        output_step,
        output_x,
        final_x,
        final_y,
        time_mean_grad_phi_sq: mean_opt(records, |r| r.grad_phi_norm_sq),
        time_mean_moreau_sq: mean_opt(records, |r| r.moreau_grad_norm_sq),
        time_mean_phi_gap: mean_opt(records, |r| r.phi_gap),
        time_mean_sync_x: records.iter().map(|r| r.sync_err_x).sum::<f64>()
            / records.len().max(1) as f64,
        time_mean_sync_y: records.iter().map(|r| r.sync_err_y).sum::<f64>()
            / records.len().max(1) as f64,
        min_grad_phi_sq: records
            .iter()
            .filter_map(|r| r.grad_phi_norm_sq)
            .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |m| m.min(v)))),
        final_grad_phi_sq: last.and_then(|r| r.grad_phi_norm_sq),
    }
}

/// Local SGD baseline: minimizes `f(., y0)` with the y-block frozen.
///
/// Enforces the convex-analysis step bound
/// `eta <= min(1/(4 L_f), 1/(8 L_f (tau-1)))`; the trace's stationarity slot
/// holds `||grad_x f(x_t, y0)||^2`.
pub fn run_local_sgd(problem: &ProblemInstance, config: &AlgorithmConfig) -> Result<Trace> {
    config.steps.validate()?;
    config.sync.validate()?;
    if config.x0.dim() != problem.d1() || config.y0.dim() != problem.d2() {
        return Err(Error::DimensionMismatch("initial point vs problem dims".into()));
    }
    if config.metric_stride == 0 {
        return Err(Error::InvalidConfig("metric_stride must be >= 1".into()));
    }
    let l_f = problem.l_f();
    let tau = config.sync.tau;
    let mut cap = 1.0 / (4.0 * l_f);
    if tau > 1 {
        cap = cap.min(1.0 / (8.0 * l_f * (tau as f64 - 1.0)));
    }
    if config.steps.eta_x > cap {
        return Err(Error::InvalidConfig(format!(
            "local SGD step {} violates eta <= min(1/(4 L_f), 1/(8 L_f (tau-1))) = {cap:.6}",
            config.steps.eta_x
        )));
    }

    let n = problem.n_clients();
    let horizon = config.sync.horizon;
    let eta = config.steps.eta_x;
    let y0 = config.y0.clone();
    let mut xs: Vec<Vector> = vec![config.x0.clone(); n];
    let mut streams: Vec<RngStream> = (0..n)
        .map(|i| RngStream::new(config.seed, StreamId::new(i as u32, StreamPurpose::Grad)))
        .collect();

    let mut out_stream = RngStream::new(config.seed, StreamId::new(u32::MAX, StreamPurpose::Output));
    let output_step = out_stream.next_index(horizon) + 1;
    let mut output_x = config.x0.clone();

    let grad_sq = |x: &Vector| problem.grad_x_global(x, &y0).norm_sq();
    let record_at = |step: usize, xs: &[Vector], x_bar: &Vector, rounds: usize| MetricRecord {
        step,
        grad_phi_norm_sq: Some(grad_sq(x_bar)),
        moreau_grad_norm_sq: None,
        phi_gap: None,
        sync_err_x: xs.iter().map(|x| x.sub(x_bar).norm_sq()).sum::<f64>() / n as f64,
        sync_err_y: 0.0,
        dist_to_saddle: None,
        direction_err_x: None,
        direction_err_y: None,
        comm_rounds: rounds,
    };

    let initial = record_at(0, &xs, &config.x0, 0);
    let mut records = Vec::new();
    let mut iterates: Option<Vec<(Vector, Vector)>> =
        config.record_iterates.then(Vec::new);
    let mut rounds = 0;

    for t in 0..horizon {
        for (i, x) in xs.iter_mut().enumerate() {
            let g = problem
                .grad_x(i, x, &y0)
                .add(&crate::rng::draw_gaussian(&mut streams[i], problem.d1(), problem.sigma()));
            x.axpy_mut(-eta, &g);
        }
        let step = t + 1;
        if step % tau == 0 {
            let x_bar = Vector::mean_of(&xs);
            for x in xs.iter_mut() {
                *x = x_bar.clone();
            }
            rounds += 1;
        }
        let x_bar = Vector::mean_of(&xs);
        if step == output_step {
            output_x = x_bar.clone();
        }
        if let Some(iters) = iterates.as_mut() {
            iters.push((x_bar.clone(), y0.clone()));
        }
        if step % config.metric_stride == 0 || step == horizon {
            if !x_bar.is_finite() {
                return Err(Error::Numerical(format!("diverged at step {step}")));
            }
            records.push(record_at(step, &xs, &x_bar, rounds));
        }
    }

    let summary = summarize(
        horizon,
        tau,
        output_step,
        output_x,
        &records,
        xs[0].clone(),
        y0,
    );
    Ok(Trace {
        algorithm: AlgorithmId::LocalSgd,
        initial,
        records,
        iterates,
        snapshot_steps: Vec::new(),
        projected: false,
        summary,
    })
}

#[cfg(test)]
mod tests;
