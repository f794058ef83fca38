//! JSON document format for problem instances.
//!
//! Matrices are stored row-major (a list of rows); loading re-validates the
//! structure and recomputes every derived oracle, so a document round-trips
//! to an equivalent instance on any host.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::star::StarClient;
use super::{ClassTag, Client, ProblemInstance, QuadraticClient, YConstraint};
use crate::error::{Error, Result};

pub(crate) const FORMAT_VERSION: u32 = 1;

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::InvalidProblem(format!("{name}: empty matrix")));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidProblem(format!("{name}: ragged matrix")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if !flat.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidProblem(format!("{name}: non-finite entry")));
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ClientDoc {
    Quadratic {
        q: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        m: Vec<Vec<f64>>,
        c: Vec<f64>,
        d: Vec<f64>,
    },
    Star {
        q: Vec<Vec<f64>>,
        c: Vec<f64>,
        p: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
}

/// On-disk problem document.
#[derive(Serialize, Deserialize)]
pub struct ProblemDoc {
    format_version: u32,
    class: ClassTag,
    n: usize,
    d1: usize,
    d2: usize,
    sigma: f64,
    seed: u64,
    y_constraint: YConstraint,
    clients: Vec<ClientDoc>,
}

pub(crate) fn to_json(inst: &ProblemInstance) -> Result<String> {
    let clients = inst
        .clients()
        .iter()
        .map(|cl| match cl {
            Client::Quadratic(c) => ClientDoc::Quadratic {
                q: matrix_rows(&c.q),
                b: matrix_rows(&c.b),
                m: matrix_rows(&c.m),
                c: c.c.iter().copied().collect(),
                d: c.d.iter().copied().collect(),
            },
            Client::Star(c) => ClientDoc::Star {
                q: matrix_rows(&c.q),
                c: c.c.iter().copied().collect(),
                p: matrix_rows(&c.p),
                offset: c.offset.iter().copied().collect(),
            },
        })
        .collect();
    let doc = ProblemDoc {
        format_version: FORMAT_VERSION,
        class: inst.class(),
        n: inst.n_clients(),
        d1: inst.d1(),
        d2: inst.d2(),
        sigma: inst.sigma(),
        seed: inst.seed(),
        y_constraint: inst.y_constraint(),
        clients,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub(crate) fn from_json(text: &str) -> Result<ProblemInstance> {
    let doc: ProblemDoc = serde_json::from_str(text)?;
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::InvalidProblem(format!(
            "unsupported problem format version {}",
            doc.format_version
        )));
    }
    if doc.clients.len() != doc.n {
        return Err(Error::InvalidProblem(format!(
            "declared n = {} but {} clients present",
            doc.n,
            doc.clients.len()
        )));
    }
    let clients: Vec<Client> = doc
        .clients
        .iter()
        .enumerate()
        .map(|(i, c)| match c {
            ClientDoc::Quadratic { q, b, m, c, d } => Ok(Client::Quadratic(QuadraticClient {
                q: matrix_from_rows(q, &format!("client {i} q"))?,
                b: matrix_from_rows(b, &format!("client {i} b"))?,
                m: matrix_from_rows(m, &format!("client {i} m"))?,
                c: DVector::from_column_slice(c),
                d: DVector::from_column_slice(d),
            })),
            ClientDoc::Star { q, c, p, offset } => Ok(Client::Star(StarClient {
                q: matrix_from_rows(q, &format!("client {i} q"))?,
                c: DVector::from_column_slice(c),
                p: matrix_from_rows(p, &format!("client {i} p"))?,
                offset: DVector::from_column_slice(offset),
            })),
        })
        .collect::<Result<_>>()?;
    let inst = ProblemInstance::from_parts(clients, doc.sigma, doc.class, doc.y_constraint, doc.seed)?;
    if inst.d1() != doc.d1 || inst.d2() != doc.d2 {
        return Err(Error::InvalidProblem(format!(
            "declared dims ({}, {}) do not match clients ({}, {})",
            doc.d1,
            doc.d2,
            inst.d1(),
            inst.d2()
        )));
    }
    Ok(inst)
}
