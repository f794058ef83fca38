//! Star-concave clients for the NC-1PC class.
//!
//! The y-part is a concave quadratic `-1/2 ||y - a(x)||^2` composed with a
//! monotone reparameterization `phi`:
//!
//! ```text
//! f(x, y) = 1/2 x'Qx + c'x - 1/2 phi(||y - Px - offset||^2)
//! phi(s)  = 1.5 s + w [ (1+s)/2 (sin L - cos L) + 1/2 ],   L = ln(1 + s)
//! ```
//!
//! with `w = 0.8`. Then `phi'(s) = 1.5 + w sin(ln(1+s))` stays in
//! `[1.5 - w, 1.5 + w]`, so `f(x, .)` is maximized exactly at
//! `y*(x) = Px + offset`, and the one-point-concavity inequality
//! `<grad_y f, y - y*> <= f(x,y) - f(x,y*)` reduces to
//! `phi'(s) s >= phi(s)/2`, which holds for all `s >= 0` (checked on a dense
//! grid below). Global concavity in y fails: along rays through the
//! maximizer the second derivative `-phi'(s) - 2 s phi''(s)` turns positive
//! where `w (sin L + 2 cos L) < -1.5`, which `w = 0.8` reaches. Curvature
//! stays bounded (`|s phi''(s)| <= w`), so gradients remain Lipschitz.
//!
//! The coupling `P` and `offset` are shared across clients; heterogeneity
//! enters through the `c_i` only, which keeps the global inner maximizer in
//! closed form.

use nalgebra::{DMatrix, DVector};

const W: f64 = 0.8;

/// `phi(s)`; increasing, `phi(0) = 0`.
pub(crate) fn phi_reparam(s: f64) -> f64 {
    let l = (1.0 + s).ln();
    1.5 * s + W * (0.5 * (1.0 + s) * (l.sin() - l.cos()) + 0.5)
}

/// `phi'(s) = 1.5 + w sin(ln(1+s))`.
pub(crate) fn phi_reparam_deriv(s: f64) -> f64 {
    1.5 + W * (1.0 + s).ln().sin()
}

/// One NC-1PC client.
#[derive(Clone, Debug)]
pub struct StarClient {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    /// Coupling from x to the y-maximizer; shared across clients.
    pub p: DMatrix<f64>,
    /// Shift of the y-maximizer; shared across clients.
    pub offset: DVector<f64>,
}

impl StarClient {
    /// The maximizer of `f(x, .)`: `Px + offset`.
    pub fn center(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.p * x + &self.offset
    }

    pub fn value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x) + self.y_part_value(x, y)
    }

    pub(crate) fn y_part_value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let u = y - self.center(x);
        -0.5 * phi_reparam(u.norm_squared())
    }

    pub fn grad_x(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        &self.q * x + &self.c + self.y_part_grad_x(x, y)
    }

    pub(crate) fn y_part_grad_x(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let u = y - self.center(x);
        let slope = phi_reparam_deriv(u.norm_squared());
        self.p.transpose() * u * slope
    }

    pub fn grad_y(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        self.y_part_grad_y(x, y)
    }

    pub(crate) fn y_part_grad_y(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let u = y - self.center(x);
        let slope = phi_reparam_deriv(u.norm_squared());
        u * (-slope)
    }

    /// Analytic smoothness bound: `||Q|| + (1 + ||P||^2)(phi'_max + 2w)`.
    pub(crate) fn smoothness_bound(&self) -> f64 {
        let q_norm = crate::problems::build::spectral_norm_symmetric(&self.q);
        let p_norm_sq = (self.p.transpose() * &self.p)
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(0.0f64, |a, &b| a.max(b));
        q_norm + (1.0 + p_norm_sq) * (1.5 + W + 2.0 * W)
    }
}
