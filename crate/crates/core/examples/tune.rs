// Scratch tuning harness (deleted before release).
use fedminimax::algorithms::*;
use fedminimax::oracles::fit_rate;
use fedminimax::problems::*;
use fedminimax::rng::{RngStream, StreamId, StreamPurpose};
use fedminimax::schedule::*;
use fedminimax::vector::Vector;

fn family(n: usize, seed: u64, sigma: f64) -> ProblemInstance {
    let spec = QuadraticSpec {
        n,
        d1: 10,
        d2: 10,
        class: ClassTag::NcSc,
        het: HeterogeneityProfile::none(),
        sigma,
        seed,
        params: QuadraticParams::default(),
    };
    make_quadratic(&spec).unwrap()
}

fn start_point(inst: &ProblemInstance, dist: f64) -> (Vector, Vector) {
    let mut s = RngStream::new(999, StreamId::new(0, StreamPurpose::Init));
    let dir = s.gaussian_vec(inst.d1());
    let dir = dir.scale(dist / dir.norm());
    let x0 = inst.phi_min_x().unwrap().add(&dir);
    let y0 = inst.y_star(&x0).unwrap();
    (x0, y0)
}

fn mean_err_sgda(inst: &ProblemInstance, horizon: usize, seeds: u64, x0: &Vector, y0: &Vector, kappa: f64) -> f64 {
    let ts = schedule_from_theorem(TheoremId::T1, inst.n_clients(), horizon, inst.l_f(), kappa).unwrap();
    let mut total = 0.0;
    for seed in 0..seeds {
        let mut cfg = AlgorithmConfig::new(ts.steps, ts.sync, seed, x0.clone(), y0.clone());
        cfg.metric_stride = 4;
        let tr = run_local_sgda(inst, &cfg).unwrap();
        total += tr.summary.time_mean_grad_phi_sq.unwrap();
    }
    total / seeds as f64
}

fn mean_err_momentum(inst: &ProblemInstance, horizon: usize, seeds: u64, x0: &Vector, y0: &Vector, kappa: f64) -> f64 {
    let ts = schedule_from_theorem(TheoremId::T2, inst.n_clients(), horizon, inst.l_f(), kappa).unwrap();
    let mut total = 0.0;
    for seed in 0..seeds {
        let mut cfg = AlgorithmConfig::new(ts.steps, ts.sync, seed, x0.clone(), y0.clone());
        cfg.metric_stride = 4;
        let tr = run_momentum_local_sgda(inst, &cfg, MomentumSync::Average).unwrap();
        total += tr.summary.time_mean_grad_phi_sq.unwrap();
    }
    total / seeds as f64
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let dist: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let inst = family(8, 1, 0.5);
    let kappa = inst.kappa().unwrap();
    println!("L_f = {:.4}, mu = {:.4}, kappa = {:.4}", inst.l_f(), inst.mu().unwrap(), kappa);
    let (x0, y0) = start_point(&inst, dist);
    let g0 = inst.envelope_oracle(&x0).unwrap().grad_phi.norm_sq();
    println!("dist = {dist}, ||grad Phi(x0)||^2 = {g0:.6}");

    // Criterion 2: T-grid slope.
    let grid = [2000usize, 4000, 8000, 16000, 32000, 64000];
    let mut errs = Vec::new();
    for &t in &grid {
        let e = mean_err_sgda(&inst, t, 20, &x0, &y0, kappa);
        println!("T={t}: err={e:.6e}");
        errs.push(e);
    }
    let xs: Vec<f64> = grid[1..].iter().map(|&t| t as f64).collect();
    let fit = fit_rate(&xs, &errs[1..]).unwrap();
    println!("slope (burn-in 1): {:.4}, r2 = {:.4}", fit.slope, fit.r_squared);

    // Criterion 3: speedup at T=20000.
    let inst4 = family(4, 1, 0.5);
    let inst16 = family(16, 1, 0.5);
    let (x04, y04) = start_point(&inst4, dist);
    let e4 = mean_err_sgda(&inst4, 20000, 30, &x04, &y04, inst4.kappa().unwrap());
    let e16 = mean_err_sgda(&inst16, 20000, 30, &x04, &y04, inst16.kappa().unwrap());
    println!("speedup ratio err(16)/err(4) = {:.4}", e16 / e4);

    // Criterion 9: parity at T=32000.
    let es = mean_err_sgda(&inst, 32000, 20, &x0, &y0, kappa);
    let em = mean_err_momentum(&inst, 32000, 20, &x0, &y0, kappa);
    println!("parity: sgda={es:.6e} momentum={em:.6e} ratio={:.4}", em / es);
}
