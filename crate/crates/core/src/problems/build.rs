//! Instance construction: random quadratic/star clients realizing a chosen
//! function class, with controllable heterogeneity, and assembly of the
//! derived oracles (means, pseudo-inverse, envelope form, smoothness).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::star::StarClient;
use super::{Client, ClassTag, Derived, EnvelopeForm, ProblemInstance, QuadraticClient, YConstraint};
use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamId, StreamPurpose};

/// Relative eigenvalue threshold below which a mode counts as zero.
pub(crate) const RANK_TOL: f64 = 1e-10;

/// How client losses differ from the global average.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeterogeneityMode {
    /// Constant gradient shifts (perturb c_i, d_i only). The heterogeneity
    /// measures are exact and finite; this is the default.
    Offset,
    /// Perturb the coupling B_i. The heterogeneity supremum is unbounded for
    /// quadratics, so only sampled estimates are reported.
    Rotation,
}

/// Requested heterogeneity levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityProfile {
    pub varsigma_x: f64,
    pub varsigma_y: f64,
    pub mode: HeterogeneityMode,
}

impl HeterogeneityProfile {
    pub fn none() -> Self {
        HeterogeneityProfile {
            varsigma_x: 0.0,
            varsigma_y: 0.0,
            mode: HeterogeneityMode::Offset,
        }
    }

    pub fn offsets(varsigma_x: f64, varsigma_y: f64) -> Self {
        HeterogeneityProfile {
            varsigma_x,
            varsigma_y,
            mode: HeterogeneityMode::Offset,
        }
    }
}

/// Spectrum and scale knobs for the generated instances. The defaults give a
/// condition number near 4 for the NC-SC class at moderate dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticParams {
    /// Strong-concavity / PL constant (smallest (nonzero) eigenvalue of the
    /// averaged M).
    pub mu: f64,
    /// Eigenvalue range of the envelope Hessian (NC-SC / NC-PL).
    pub env_spectrum: (f64, f64),
    /// Largest eigenvalue of the averaged M.
    pub m_max: f64,
    /// Largest eigenvalue of B M^+ B'; choosing it above `env_spectrum.1`
    /// forces a negative eigenvalue in the averaged Q.
    pub coupling: f64,
    /// Dimension of ker(M) for NC-PL instances.
    pub pl_null_dim: usize,
    /// Ball radius for NC-C instances.
    pub ball_radius: f64,
    /// Eigenvalue range of Q for NC-C (indefinite: min < 0).
    pub ncc_q_spectrum: (f64, f64),
    /// Spectral norm of B for NC-C.
    pub ncc_b_norm: f64,
    /// Eigenvalue range of Q for NC-1PC (positive definite so the envelope
    /// is bounded below; the nonconvexity in x comes from the composed
    /// y-part).
    pub star_q_spectrum: (f64, f64),
    /// Spectral norm of the x-to-maximizer coupling for NC-1PC.
    pub star_p_norm: f64,
    /// Scale of the random linear terms and offsets.
    pub lin_scale: f64,
    /// Constraint override; `None` uses the class default (ball for NC-C,
    /// unconstrained otherwise).
    pub y_constraint: Option<YConstraint>,
}

impl Default for QuadraticParams {
    fn default() -> Self {
        QuadraticParams {
            mu: 0.5,
            env_spectrum: (0.25, 0.5),
            m_max: 1.5,
            coupling: 1.0,
            pl_null_dim: 1,
            ball_radius: 1.0,
            ncc_q_spectrum: (-0.05, 1.0),
            ncc_b_norm: 1.0,
            star_q_spectrum: (0.3, 1.0),
            star_p_norm: 1.0,
            lin_scale: 0.5,
            y_constraint: None,
        }
    }
}

/// Full request for a generated instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadraticSpec {
    pub n: usize,
    pub d1: usize,
    pub d2: usize,
    pub class: ClassTag,
    pub het: HeterogeneityProfile,
    pub sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub params: QuadraticParams,
}

impl Default for QuadraticSpec {
    fn default() -> Self {
        QuadraticSpec {
            n: 4,
            d1: 5,
            d2: 5,
            class: ClassTag::NcSc,
            het: HeterogeneityProfile::none(),
            sigma: 0.0,
            seed: 0,
            params: QuadraticParams::default(),
        }
    }
}

pub(crate) fn spectral_norm_symmetric(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, &b| a.max(b.abs()))
}

fn gaussian_matrix(stream: &mut RngStream, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| stream.next_gaussian())
}

fn gaussian_dvector(stream: &mut RngStream, dim: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| scale * stream.next_gaussian())
}

fn random_orthogonal(stream: &mut RngStream, d: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(stream, d, d);
    let qr = g.qr();
    qr.q()
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![lo];
    }
    (0..k)
        .map(|j| lo + (hi - lo) * j as f64 / (k - 1) as f64)
        .collect()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m = (&*m + t) * 0.5;
}

fn sym_from_spectrum(stream: &mut RngStream, eigs: &[f64]) -> DMatrix<f64> {
    let d = eigs.len();
    let u = random_orthogonal(stream, d);
    let mut m = &u * DMatrix::from_diagonal(&DVector::from_column_slice(eigs)) * u.transpose();
    symmetrize(&mut m);
    m
}

/// Centers raw per-client vectors and scales them so that
/// `(1/n) sum ||delta_i||^2` equals `target^2` exactly.
fn centered_offsets(raw: Vec<DVector<f64>>, target: f64) -> Result<Vec<DVector<f64>>> {
    let n = raw.len();
    let mean = raw.iter().fold(DVector::zeros(raw[0].len()), |a, b| a + b) / n as f64;
    let centered: Vec<DVector<f64>> = raw.into_iter().map(|v| v - &mean).collect();
    let ss: f64 = centered.iter().map(|v| v.norm_squared()).sum::<f64>() / n as f64;
    if ss <= 0.0 {
        return Err(Error::InvalidProblem(
            "cannot realize positive heterogeneity with degenerate offsets".into(),
        ));
    }
    let s = target / ss.sqrt();
    Ok(centered.into_iter().map(|v| v * s).collect())
}

/// Generates a synthetic federated minimax instance of the requested class.
///
/// The construction fixes the averaged structure first (the envelope Hessian
/// spectrum, M-spectrum, coupling strength), then splits it across clients
/// according to the heterogeneity profile, so class membership is guaranteed
/// by design and the assumption constants are known exactly.
pub fn make_quadratic(spec: &QuadraticSpec) -> Result<ProblemInstance> {
    if spec.n == 0 || spec.d1 == 0 || spec.d2 == 0 {
        return Err(Error::InvalidProblem("need n, d1, d2 >= 1".into()));
    }
    if spec.sigma < 0.0 {
        return Err(Error::InvalidProblem("sigma must be nonnegative".into()));
    }
    if spec.het.varsigma_x < 0.0 || spec.het.varsigma_y < 0.0 {
        return Err(Error::InvalidProblem("heterogeneity must be nonnegative".into()));
    }
    if spec.n == 1 && (spec.het.varsigma_x > 0.0 || spec.het.varsigma_y > 0.0) {
        return Err(Error::InvalidProblem(
            "a single client cannot have positive heterogeneity".into(),
        ));
    }
    let mut stream = RngStream::new(spec.seed, StreamId::new(0, StreamPurpose::ProblemGen));
    match spec.class {
        ClassTag::NcSc | ClassTag::NcPl => build_saddle_quadratic(spec, &mut stream),
        ClassTag::NcC => build_ball_linear(spec, &mut stream),
        ClassTag::Nc1Pc => build_star(spec, &mut stream),
    }
}

fn build_saddle_quadratic(spec: &QuadraticSpec, stream: &mut RngStream) -> Result<ProblemInstance> {
    let p = &spec.params;
    let (d1, d2, n) = (spec.d1, spec.d2, spec.n);
    if !(p.mu > 0.0) {
        return Err(Error::InvalidProblem(format!(
            "{:?} requires mu > 0, got {}",
            spec.class, p.mu
        )));
    }
    if p.m_max < p.mu {
        return Err(Error::InvalidProblem("m_max must be >= mu".into()));
    }
    if p.env_spectrum.0 <= 0.0 || p.env_spectrum.1 < p.env_spectrum.0 {
        return Err(Error::InvalidProblem(
            "envelope spectrum must be positive and ordered".into(),
        ));
    }
    if p.coupling <= p.env_spectrum.1 {
        return Err(Error::InvalidProblem(
            "coupling must exceed the envelope spectrum top so Q stays indefinite".into(),
        ));
    }

    // Averaged M: positive definite (NC-SC) or PSD with an exact null space
    // (NC-PL), smallest (nonzero) eigenvalue = mu.
    let m_bar = match spec.class {
        ClassTag::NcSc => sym_from_spectrum(stream, &linspace(p.mu, p.m_max, d2)),
        ClassTag::NcPl => {
            if p.pl_null_dim == 0 || p.pl_null_dim >= d2 {
                return Err(Error::InvalidProblem(format!(
                    "NC-PL null dimension must be in 1..d2, got {}",
                    p.pl_null_dim
                )));
            }
            let mut eigs = vec![0.0; p.pl_null_dim];
            eigs.extend(linspace(p.mu, p.m_max, d2 - p.pl_null_dim));
            sym_from_spectrum(stream, &eigs)
        }
        _ => unreachable!(),
    };
    let (m_pinv, _, _) = pseudo_inverse(&m_bar);

    // Target envelope Hessian.
    let h_target = sym_from_spectrum(stream, &linspace(p.env_spectrum.0, p.env_spectrum.1, d1));

    // Coupling: for NC-PL, force range(B') into range(M) by building B = K'M.
    let b_bar = match spec.class {
        ClassTag::NcSc => {
            let b0 = gaussian_matrix(stream, d1, d2);
            let c0 = &b0 * &m_pinv * b0.transpose();
            let top = spectral_norm_symmetric(&c0);
            b0 * (p.coupling / top).sqrt()
        }
        ClassTag::NcPl => {
            let k = gaussian_matrix(stream, d2, d1);
            let c0 = k.transpose() * &m_bar * &k;
            let top = spectral_norm_symmetric(&c0);
            (k * (p.coupling / top).sqrt()).transpose() * &m_bar
        }
        _ => unreachable!(),
    };

    // Q = H - B M^+ B': the envelope Hessian equals H by construction, and
    // coupling > max eigenvalue of H forces a negative eigenvalue of Q.
    let mut coupling_term = &b_bar * &m_pinv * b_bar.transpose();
    symmetrize(&mut coupling_term);
    let mut q_bar = &h_target - &coupling_term;
    symmetrize(&mut q_bar);

    let c_bar = gaussian_dvector(stream, d1, p.lin_scale);
    let d_bar = match spec.class {
        ClassTag::NcSc => gaussian_dvector(stream, d2, p.lin_scale),
        // Force d into range(M) so the inner maximum is attained everywhere.
        ClassTag::NcPl => &m_bar * gaussian_dvector(stream, d2, p.lin_scale),
        _ => unreachable!(),
    };

    let range_proj = &m_bar * &m_pinv;
    let (dc, dd, db) = make_perturbations(spec, stream, &m_bar, Some(&range_proj))?;

    let clients: Vec<Client> = (0..n)
        .map(|i| {
            Client::Quadratic(QuadraticClient {
                q: q_bar.clone(),
                b: &b_bar + &db[i],
                m: m_bar.clone(),
                c: &c_bar + &dc[i],
                d: &d_bar + &dd[i],
            })
        })
        .collect();

    let constraint = spec.params.y_constraint.unwrap_or(YConstraint::None);
    if let YConstraint::Ball { radius } = constraint {
        if radius <= 0.0 {
            return Err(Error::InvalidProblem("ball radius must be positive".into()));
        }
    }
    assemble(clients, spec.sigma, spec.class, constraint, spec.seed)
}

fn build_ball_linear(spec: &QuadraticSpec, stream: &mut RngStream) -> Result<ProblemInstance> {
    let p = &spec.params;
    let (d1, d2, n) = (spec.d1, spec.d2, spec.n);
    if p.ncc_q_spectrum.0 >= 0.0 {
        return Err(Error::InvalidProblem(
            "NC-C requires an indefinite Q (spectrum minimum < 0)".into(),
        ));
    }
    let constraint = match spec.params.y_constraint {
        None | Some(YConstraint::Ball { .. }) => YConstraint::Ball {
            radius: match spec.params.y_constraint {
                Some(YConstraint::Ball { radius }) => radius,
                _ => p.ball_radius,
            },
        },
        Some(other) => {
            return Err(Error::InvalidProblem(format!(
                "NC-C requires a ball constraint (linear in y), got {other:?}"
            )))
        }
    };
    if let YConstraint::Ball { radius } = constraint {
        if radius <= 0.0 {
            return Err(Error::InvalidProblem("ball radius must be positive".into()));
        }
    }

    let q_bar = sym_from_spectrum(stream, &linspace(p.ncc_q_spectrum.0, p.ncc_q_spectrum.1, d1));
    let b0 = gaussian_matrix(stream, d1, d2);
    let top = (b0.transpose() * &b0)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, &b| a.max(b))
        .sqrt();
    let b_bar = b0 * (p.ncc_b_norm / top);
    let c_bar = gaussian_dvector(stream, d1, p.lin_scale);
    let d_bar = gaussian_dvector(stream, d2, p.lin_scale);

    let (dc, dd, db) = make_perturbations(spec, stream, &DMatrix::zeros(d2, d2), None)?;
    let clients: Vec<Client> = (0..n)
        .map(|i| {
            Client::Quadratic(QuadraticClient {
                q: q_bar.clone(),
                b: &b_bar + &db[i],
                m: DMatrix::zeros(d2, d2),
                c: &c_bar + &dc[i],
                d: &d_bar + &dd[i],
            })
        })
        .collect();
    assemble(clients, spec.sigma, spec.class, constraint, spec.seed)
}

fn build_star(spec: &QuadraticSpec, stream: &mut RngStream) -> Result<ProblemInstance> {
    let p = &spec.params;
    let (d1, d2, n) = (spec.d1, spec.d2, spec.n);
    if spec.het.varsigma_y > 0.0 {
        return Err(Error::InvalidProblem(
            "the NC-1PC family supports x-offset heterogeneity only \
             (y-heterogeneity would destroy the closed-form maximizer)"
                .into(),
        ));
    }
    if spec.het.mode == HeterogeneityMode::Rotation && spec.het.varsigma_x > 0.0 {
        return Err(Error::InvalidProblem(
            "rotation heterogeneity is not defined for the NC-1PC family".into(),
        ));
    }
    if spec.params.y_constraint.is_some() && spec.params.y_constraint != Some(YConstraint::None) {
        return Err(Error::InvalidProblem(
            "the NC-1PC family is built unconstrained".into(),
        ));
    }
    if p.star_q_spectrum.0 <= 0.0 {
        return Err(Error::InvalidProblem(
            "NC-1PC Q spectrum must be positive so the envelope is bounded below".into(),
        ));
    }

    let q_bar = sym_from_spectrum(stream, &linspace(p.star_q_spectrum.0, p.star_q_spectrum.1, d1));
    let p0 = gaussian_matrix(stream, d2, d1);
    let top = (p0.transpose() * &p0)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, &b| a.max(b))
        .sqrt();
    let p_mat = p0 * (p.star_p_norm / top);
    let offset = gaussian_dvector(stream, d2, p.lin_scale);
    let c_bar = gaussian_dvector(stream, d1, p.lin_scale);

    let deltas = if spec.het.varsigma_x > 0.0 {
        let raw = (0..n).map(|_| gaussian_dvector(stream, d1, 1.0)).collect();
        centered_offsets(raw, spec.het.varsigma_x)?
    } else {
        vec![DVector::zeros(d1); n]
    };

    let clients: Vec<Client> = (0..n)
        .map(|i| {
            Client::Star(StarClient {
                q: q_bar.clone(),
                c: &c_bar + &deltas[i],
                p: p_mat.clone(),
                offset: offset.clone(),
            })
        })
        .collect();
    assemble(clients, spec.sigma, spec.class, YConstraint::None, spec.seed)
}

type Perturbations = (Vec<DVector<f64>>, Vec<DVector<f64>>, Vec<DMatrix<f64>>);

/// Per-client perturbations realizing the heterogeneity profile: constant
/// gradient offsets (exact heterogeneity) or coupling rotations (sampled).
fn make_perturbations(
    spec: &QuadraticSpec,
    stream: &mut RngStream,
    m_bar: &DMatrix<f64>,
    range_proj: Option<&DMatrix<f64>>,
) -> Result<Perturbations> {
    let (d1, d2, n) = (spec.d1, spec.d2, spec.n);
    let mut dc = vec![DVector::zeros(d1); n];
    let mut dd = vec![DVector::zeros(d2); n];
    let mut db = vec![DMatrix::zeros(d1, d2); n];
    match spec.het.mode {
        HeterogeneityMode::Offset => {
            if spec.het.varsigma_x > 0.0 {
                let raw = (0..n).map(|_| gaussian_dvector(stream, d1, 1.0)).collect();
                dc = centered_offsets(raw, spec.het.varsigma_x)?;
            }
            if spec.het.varsigma_y > 0.0 {
                let mut raw: Vec<DVector<f64>> =
                    (0..n).map(|_| gaussian_dvector(stream, d2, 1.0)).collect();
                // Keep the inner maximum attained: offsets stay in range(M).
                if let Some(proj) = range_proj {
                    for v in raw.iter_mut() {
                        *v = proj * &*v;
                    }
                }
                dd = centered_offsets(raw, spec.het.varsigma_y)?;
            }
        }
        HeterogeneityMode::Rotation => {
            let scale = spec.het.varsigma_x.max(spec.het.varsigma_y);
            if scale > 0.0 {
                let raw: Vec<DMatrix<f64>> = (0..n)
                    .map(|_| {
                        if range_proj.is_some() {
                            // range(B_i') must stay inside range(M).
                            gaussian_matrix(stream, d2, d1).transpose() * m_bar
                        } else {
                            gaussian_matrix(stream, d1, d2)
                        }
                    })
                    .collect();
                let mean = raw
                    .iter()
                    .fold(DMatrix::zeros(d1, d2), |a, b| a + b)
                    / n as f64;
                let centered: Vec<DMatrix<f64>> = raw.into_iter().map(|m| m - &mean).collect();
                let ss: f64 =
                    centered.iter().map(|m| m.norm_squared()).sum::<f64>() / n as f64;
                if ss <= 0.0 {
                    return Err(Error::InvalidProblem("degenerate rotation perturbations".into()));
                }
                let s = scale / ss.sqrt();
                db = centered.into_iter().map(|m| m * s).collect();
            }
        }
    }
    Ok((dc, dd, db))
}

/// Eigen-based pseudo-inverse; returns (pinv, eigenvalues, eigenvectors).
fn pseudo_inverse(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let tol = RANK_TOL * top.max(1e-300);
    let inv_diag = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues
            .iter()
            .map(|&l| if l.abs() > tol { 1.0 / l } else { 0.0 }),
    );
    let pinv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_diag) * eig.eigenvectors.transpose();
    (pinv, eig.eigenvalues, eig.eigenvectors)
}

fn check_symmetric(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let scale = m.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::InvalidProblem(format!(
                    "{name} is not symmetric to tolerance at ({i},{j})"
                )));
            }
        }
    }
    Ok(())
}

/// Validates a client list and computes every derived oracle.
pub(crate) fn assemble(
    clients: Vec<Client>,
    sigma: f64,
    class: ClassTag,
    y_constraint: YConstraint,
    seed: u64,
) -> Result<ProblemInstance> {
    if clients.is_empty() {
        return Err(Error::InvalidProblem("need at least one client".into()));
    }
    if sigma < 0.0 {
        return Err(Error::InvalidProblem("sigma must be nonnegative".into()));
    }
    let (d1, d2) = match &clients[0] {
        Client::Quadratic(c) => (c.q.nrows(), c.m.nrows()),
        Client::Star(c) => (c.q.nrows(), c.p.nrows()),
    };

    // Shape and symmetry validation.
    for (i, cl) in clients.iter().enumerate() {
        match cl {
            Client::Quadratic(c) => {
                if c.q.nrows() != d1
                    || c.q.ncols() != d1
                    || c.b.nrows() != d1
                    || c.b.ncols() != d2
                    || c.m.nrows() != d2
                    || c.m.ncols() != d2
                    || c.c.len() != d1
                    || c.d.len() != d2
                {
                    return Err(Error::DimensionMismatch(format!("client {i} shape")));
                }
                check_symmetric(&c.q, &format!("Q[{i}]"))?;
                check_symmetric(&c.m, &format!("M[{i}]"))?;
            }
            Client::Star(c) => {
                if c.q.nrows() != d1
                    || c.q.ncols() != d1
                    || c.c.len() != d1
                    || c.p.nrows() != d2
                    || c.p.ncols() != d1
                    || c.offset.len() != d2
                {
                    return Err(Error::DimensionMismatch(format!("client {i} shape")));
                }
                check_symmetric(&c.q, &format!("Q[{i}]"))?;
            }
        }
        let same_kind = matches!(
            (&clients[0], cl),
            (Client::Quadratic(_), Client::Quadratic(_)) | (Client::Star(_), Client::Star(_))
        );
        if !same_kind {
            return Err(Error::InvalidProblem("mixed client kinds".into()));
        }
    }

    let derived = match &clients[0] {
        Client::Quadratic(_) => derive_quadratic(&clients, class, y_constraint, d1, d2)?,
        Client::Star(_) => derive_star(&clients, d1, d2)?,
    };

    Ok(ProblemInstance {
        clients,
        d1,
        d2,
        sigma,
        class,
        y_constraint,
        seed,
        derived,
    })
}

fn derive_quadratic(
    clients: &[Client],
    class: ClassTag,
    y_constraint: YConstraint,
    d1: usize,
    d2: usize,
) -> Result<Derived> {
    let n = clients.len() as f64;
    let mut q_bar = DMatrix::zeros(d1, d1);
    let mut b_bar = DMatrix::zeros(d1, d2);
    let mut m_bar = DMatrix::zeros(d2, d2);
    let mut c_bar = DVector::zeros(d1);
    let mut d_bar = DVector::zeros(d2);
    let mut l_f = 0.0f64;
    for cl in clients {
        let Client::Quadratic(c) = cl else { unreachable!() };
        q_bar += &c.q;
        b_bar += &c.b;
        m_bar += &c.m;
        c_bar += &c.c;
        d_bar += &c.d;
        // Stacked gradient map of one client: symmetric block matrix.
        let mut j = DMatrix::zeros(d1 + d2, d1 + d2);
        j.view_mut((0, 0), (d1, d1)).copy_from(&c.q);
        j.view_mut((0, d1), (d1, d2)).copy_from(&c.b);
        j.view_mut((d1, 0), (d2, d1)).copy_from(&c.b.transpose());
        j.view_mut((d1, d1), (d2, d2)).copy_from(&(-&c.m));
        l_f = l_f.max(spectral_norm_symmetric(&j));
    }
    q_bar /= n;
    b_bar /= n;
    m_bar /= n;
    c_bar /= n;
    d_bar /= n;
    symmetrize(&mut q_bar);
    symmetrize(&mut m_bar);

    let (m_pinv, m_eigs, _) = pseudo_inverse(&m_bar);
    let m_top = m_eigs.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let tol = RANK_TOL * m_top.max(1e-300);
    let m_psd = m_eigs.iter().all(|&l| l > -tol);
    let mu = m_eigs
        .iter()
        .filter(|&&l| l > tol)
        .fold(f64::INFINITY, |a, &b| a.min(b));
    let mu = if m_psd && mu.is_finite() { Some(mu) } else { None };
    let m_zero = m_top <= 1e-14;
    let mut m_range_proj = &m_bar * &m_pinv;
    symmetrize(&mut m_range_proj);

    // Range condition for a well-defined quadratic envelope: d and the rows
    // of B' must lie in range(M).
    let range_ok = if m_zero {
        false
    } else {
        let d_res = (&d_bar - &m_range_proj * &d_bar).norm();
        let bt = b_bar.transpose();
        let b_res = (&bt - &m_range_proj * &bt).norm();
        let scale = d_bar.norm().max(bt.norm()).max(1.0);
        d_res + b_res <= 1e-8 * scale
    };

    let envelope = if y_constraint == YConstraint::None && mu.is_some() && range_ok {
        let mut h = &q_bar + &b_bar * &m_pinv * b_bar.transpose();
        symmetrize(&mut h);
        let g = &c_bar + &b_bar * &m_pinv * &d_bar;
        let konst = 0.5 * d_bar.dot(&(&m_pinv * &d_bar));
        EnvelopeForm::Quadratic { h, g, konst }
    } else if m_zero && matches!(y_constraint, YConstraint::Ball { .. }) {
        let YConstraint::Ball { radius } = y_constraint else { unreachable!() };
        EnvelopeForm::BallLinear {
            h: q_bar.clone(),
            g: c_bar.clone(),
            bt: b_bar.transpose(),
            d: d_bar.clone(),
            radius,
        }
    } else {
        EnvelopeForm::Unavailable
    };

    // Minimizer of Phi (when the envelope Hessian is PD) and, for NC-SC, the
    // unique saddle point.
    let (phi_min_x, saddle) = match &envelope {
        EnvelopeForm::Quadratic { h, g, .. } => match h.clone().cholesky() {
            Some(chol) => {
                let x_star = chol.solve(&(-g));
                let sd = if class == ClassTag::NcSc && m_eigs.iter().all(|&l| l > tol) {
                    let y_star = &m_pinv * (b_bar.transpose() * &x_star + &d_bar);
                    Some((x_star.clone().into(), y_star.into()))
                } else {
                    None
                };
                (Some(x_star.into()), sd)
            }
            None => (None, None),
        },
        _ => (None, None),
    };

    Ok(Derived {
        q_bar,
        b_bar,
        m_bar,
        c_bar,
        d_bar,
        m_pinv,
        m_range_proj,
        envelope,
        l_f,
        l_f_exact: true,
        mu,
        saddle,
        phi_min_x,
    })
}

fn derive_star(clients: &[Client], d1: usize, d2: usize) -> Result<Derived> {
    let n = clients.len() as f64;
    let Client::Star(first) = &clients[0] else { unreachable!() };
    let mut q_bar = DMatrix::zeros(d1, d1);
    let mut c_bar = DVector::zeros(d1);
    let mut l_f = 0.0f64;
    for cl in clients {
        let Client::Star(c) = cl else { unreachable!() };
        if (&c.p - &first.p).norm() > 1e-12 * first.p.norm().max(1.0)
            || (&c.offset - &first.offset).norm() > 1e-12 * first.offset.norm().max(1.0)
        {
            return Err(Error::InvalidProblem(
                "NC-1PC clients must share the coupling and offset".into(),
            ));
        }
        q_bar += &c.q;
        c_bar += &c.c;
        l_f = l_f.max(c.smoothness_bound());
    }
    q_bar /= n;
    c_bar /= n;
    symmetrize(&mut q_bar);

    let envelope = EnvelopeForm::Quadratic {
        h: q_bar.clone(),
        g: c_bar.clone(),
        konst: 0.0,
    };
    let phi_min_x = q_bar.clone().cholesky().map(|ch| ch.solve(&(-&c_bar)).into());

    Ok(Derived {
        q_bar,
        b_bar: DMatrix::zeros(d1, d2),
        m_bar: DMatrix::zeros(d2, d2),
        c_bar,
        d_bar: DVector::zeros(d2),
        m_pinv: DMatrix::zeros(d2, d2),
        m_range_proj: DMatrix::zeros(d2, d2),
        envelope,
        l_f,
        l_f_exact: false,
        mu: None,
        saddle: None,
        phi_min_x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::Vector;
    use approx::assert_relative_eq;

    fn default_spec(class: ClassTag) -> QuadraticSpec {
        QuadraticSpec {
            n: 4,
            d1: 5,
            d2: 5,
            class,
            het: HeterogeneityProfile::none(),
            sigma: 0.0,
            seed: 42,
            params: QuadraticParams::default(),
        }
    }

    #[test]
    fn nc_sc_construction_hits_targets() {
        let inst = make_quadratic(&default_spec(ClassTag::NcSc)).unwrap();
        assert_relative_eq!(inst.mu().unwrap(), 0.5, epsilon = 1e-10);
        // Q must have a negative eigenvalue (genuine nonconvexity in x).
        let q_min = inst
            .derived()
            .q_bar
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        assert!(q_min < 0.0, "Q min eigenvalue {q_min} should be negative");
        assert!(inst.l_f() > 0.0);
        assert!(inst.saddle().is_some());
        assert!(inst.phi_min_x().is_some());
    }

    #[test]
    fn nc_pl_has_exact_null_space_and_mu() {
        let spec = default_spec(ClassTag::NcPl);
        let inst = make_quadratic(&spec).unwrap();
        // Eigen-decomposition oracle: smallest nonzero eigenvalue of the
        // averaged M equals the requested PL constant.
        let eigs = inst.derived().m_bar.clone().symmetric_eigen().eigenvalues;
        let mut sorted: Vec<f64> = eigs.iter().copied().collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(sorted[0].abs() < 1e-10, "null eigenvalue, got {}", sorted[0]);
        assert_relative_eq!(sorted[1], 0.5, epsilon = 1e-10);
        assert_relative_eq!(inst.mu().unwrap(), 0.5, epsilon = 1e-10);
        assert!(inst.phi_min_x().is_some());
    }

    #[test]
    fn scalar_instance_matches_hand_arithmetic() {
        // f(x,y) = -x^2/2 + xy - y^2 : grad at (1,1) is (0, -1).
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
        let y = Vector::new(vec![1.0]).unwrap();
        assert_eq!(inst.grad_x(0, &x, &y).as_slice(), &[0.0]);
        assert_eq!(inst.grad_y(0, &x, &y).as_slice(), &[-1.0]);
        // Envelope at x=1: y* = 1/2, grad Phi = -1 + 0.5 = -0.5.
        let env = inst.envelope_oracle(&x).unwrap();
        assert_relative_eq!(env.y_star[0], 0.5, max_relative = 1e-14);
        assert_relative_eq!(env.grad_phi[0], -0.5, max_relative = 1e-14);
        assert_relative_eq!(env.phi, -0.25, max_relative = 1e-13);
    }

    #[test]
    fn zero_heterogeneity_gives_identical_clients() {
        let inst = make_quadratic(&default_spec(ClassTag::NcSc)).unwrap();
        let x = Vector::new(vec![0.3; 5]).unwrap();
        let y = Vector::new(vec![-0.2; 5]).unwrap();
        let g0 = inst.grad_x(0, &x, &y);
        for i in 1..4 {
            assert_eq!(inst.grad_x(i, &x, &y), g0);
        }
    }

    #[test]
    fn single_client_with_heterogeneity_is_rejected() {
        let mut spec = default_spec(ClassTag::NcSc);
        spec.n = 1;
        spec.het = HeterogeneityProfile::offsets(0.5, 0.0);
        assert!(make_quadratic(&spec).is_err());
    }

    #[test]
    fn nc_sc_with_zero_mu_is_rejected() {
        let mut spec = default_spec(ClassTag::NcSc);
        spec.params.mu = 0.0;
        assert!(make_quadratic(&spec).is_err());
    }

    #[test]
    fn grad_at_saddle_vanishes() {
        let inst = make_quadratic(&default_spec(ClassTag::NcSc)).unwrap();
        let (x_star, y_star) = inst.saddle().unwrap().clone();
        assert!(inst.grad_x_global(&x_star, &y_star).norm() < 1e-10);
        assert!(inst.grad_y_global(&x_star, &y_star).norm() < 1e-10);
        // Same point minimizes the envelope.
        let env = inst.envelope_oracle(&x_star).unwrap();
        assert!(env.grad_phi.norm_sq() < 1e-20);
    }

    #[test]
    fn nc_c_is_ball_constrained_with_indefinite_q() {
        let inst = make_quadratic(&default_spec(ClassTag::NcC)).unwrap();
        assert!(matches!(inst.y_constraint(), YConstraint::Ball { .. }));
        let q_min = inst
            .derived()
            .q_bar
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        assert!(q_min < 0.0);
        // Envelope closed form exists (ball-linear).
        let x = Vector::new(vec![0.5; 5]).unwrap();
        inst.phi(&x).unwrap();
        // ... but the smooth envelope oracle must refuse.
        assert!(inst.envelope_oracle(&x).is_err());
    }

    #[test]
    fn star_family_builds_and_rejects_y_heterogeneity() {
        let inst = make_quadratic(&default_spec(ClassTag::Nc1Pc)).unwrap();
        assert!(inst.phi_min_x().is_some());
        let mut bad = default_spec(ClassTag::Nc1Pc);
        bad.het = HeterogeneityProfile::offsets(0.0, 0.3);
        assert!(make_quadratic(&bad).is_err());
    }

    #[test]
    fn offset_heterogeneity_energy_is_exact() {
        let mut spec = default_spec(ClassTag::NcSc);
        spec.het = HeterogeneityProfile::offsets(0.5, 0.25);
        let inst = make_quadratic(&spec).unwrap();
        let d = inst.derived();
        let n = inst.n_clients() as f64;
        let ss_c: f64 = inst
            .clients()
            .iter()
            .map(|cl| {
                let Client::Quadratic(c) = cl else { unreachable!() };
                (&c.c - &d.c_bar).norm_squared()
            })
            .sum::<f64>()
            / n;
        assert_relative_eq!(ss_c.sqrt(), 0.5, epsilon = 1e-12);
        let ss_d: f64 = inst
            .clients()
            .iter()
            .map(|cl| {
                let Client::Quadratic(c) = cl else { unreachable!() };
                (&c.d - &d.d_bar).norm_squared()
            })
            .sum::<f64>()
            / n;
        assert_relative_eq!(ss_d.sqrt(), 0.25, epsilon = 1e-12);
    }
}
