//! Step-size and synchronization schedules, including the theorem-derived
//! presets used by the rate experiments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constant step sizes and momentum parameters.
///
/// `alpha` is the momentum mixing weight and `beta_x`, `beta_y` the direction
/// gains; `alpha * beta <= 1` keeps every direction update a convex
/// combination of the old direction and the fresh gradient. Plain (non
/// momentum) runs leave `alpha = beta = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub eta_x: f64,
    pub eta_y: f64,
    pub alpha: f64,
    pub beta_x: f64,
    pub beta_y: f64,
}

impl StepSchedule {
    /// Plain descent/ascent steps, momentum parameters at their neutral values.
    pub fn plain(eta_x: f64, eta_y: f64) -> Self {
        StepSchedule {
            eta_x,
            eta_y,
            alpha: 1.0,
            beta_x: 1.0,
            beta_y: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        // Zero steps are allowed (frozen-dynamics tests); negatives are not.
        for (name, v) in [
            ("eta_x", self.eta_x),
            ("eta_y", self.eta_y),
            ("beta_x", self.beta_x),
            ("beta_y", self.beta_y),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.alpha * self.beta_x > 1.0 + 1e-12 || self.alpha * self.beta_y > 1.0 + 1e-12 {
            return Err(Error::InvalidConfig(
                "alpha * beta must be <= 1 so momentum updates stay convex combinations".into(),
            ));
        }
        Ok(())
    }
}

/// Synchronization layout: model-averaging interval `tau`, optional snapshot
/// interval `s_interval` for the snapshot ("+") algorithms, and the horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncSchedule {
    pub tau: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_interval: Option<usize>,
    pub horizon: usize,
}

impl SyncSchedule {
    pub fn new(tau: usize, s_interval: Option<usize>, horizon: usize) -> Result<Self> {
        let s = SyncSchedule {
            tau,
            s_interval,
            horizon,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau == 0 || self.horizon == 0 {
            return Err(Error::InvalidConfig("tau and horizon must be >= 1".into()));
        }
        if self.horizon % self.tau != 0 {
            return Err(Error::InvalidConfig(format!(
                "horizon {} must be divisible by tau {} (no partial averaging windows)",
                self.horizon, self.tau
            )));
        }
        if let Some(s) = self.s_interval {
            if s == 0 || s % self.tau != 0 {
                return Err(Error::InvalidConfig(format!(
                    "snapshot interval {} must be a positive multiple of tau {}",
                    s, self.tau
                )));
            }
        }
        Ok(())
    }
}

/// Which theorem's parameter prescription to instantiate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TheoremId {
    /// Local SGDA on NC-SC/NC-PL problems.
    T1,
    /// Momentum Local SGDA on NC-SC/NC-PL problems.
    T2,
    /// Local SGDA+ on NC-C problems.
    T3,
}

/// Theorem-derived schedule plus any soft-constraint warnings.
#[derive(Clone, Debug)]
pub struct TheoremSchedule {
    pub steps: StepSchedule,
    pub sync: SyncSchedule,
    pub warnings: Vec<String>,
}

/// Largest divisor of `horizon` that is <= `upper` (at least 1).
fn largest_divisor_at_most(horizon: usize, upper: usize) -> usize {
    let mut tau = upper.max(1).min(horizon);
    while horizon % tau != 0 {
        tau -= 1;
    }
    tau
}

/// Instantiates the step/sync schedule a theorem prescribes for `n` clients
/// over horizon `T`, given the smoothness constant and condition number.
///
/// T1: eta_y = sqrt(n/(L_f T)), eta_x = eta_y / (8 kappa^2),
///     tau ~ T^(1/4) / n^(3/4). The constraint eta_y <= 1/(8 L_f tau) caps
///     tau and, if it fails even at tau = 1, the request is rejected.
/// T2: the T1 steps plus alpha = sqrt(n/T), beta = 3. Soft constraints from
///     the momentum analysis are logged as warnings, not enforced.
/// T3: eta_x ~ n^(1/4)/T^(3/4), eta_y ~ n^(3/4)/T^(1/4), both capped at
///     1/(8 L_f tau); S = ceil(sqrt(T/n)) rounded up to a multiple of tau.
///
/// All Theta-constants are fixed at 1; rate tests fit slopes, which are
/// constant-free. The asymptotic regimes (T >= n^3 for T1/T2, T >= n^7 for
/// T3) are warned about, not enforced, at desk scale.
pub fn schedule_from_theorem(
    theorem: TheoremId,
    n: usize,
    horizon: usize,
    l_f: f64,
    kappa: f64,
) -> Result<TheoremSchedule> {
    if n == 0 || horizon == 0 {
        return Err(Error::InvalidConfig("need n >= 1 and T >= 1".into()));
    }
    if !(l_f > 0.0) || !(kappa >= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "need L_f > 0 and kappa >= 1, got L_f={l_f}, kappa={kappa}"
        )));
    }
    if horizon < n {
        return Err(Error::InvalidConfig(format!(
            "need T >= n, got T={horizon}, n={n}"
        )));
    }
    let nf = n as f64;
    let tf = horizon as f64;
    let mut warnings = Vec::new();

    match theorem {
        TheoremId::T1 | TheoremId::T2 => {
            if tf < nf.powi(3) {
                warnings.push(format!(
                    "T={horizon} is below the asymptotic regime T >= n^3 = {}; slope fits remain meaningful",
                    n.pow(3)
                ));
            }
            let eta_y = (nf / (l_f * tf)).sqrt();
            let eta_x = eta_y / (8.0 * kappa * kappa);

            // tau from the communication-optimal choice, capped so that
            // eta_y <= 1/(8 L_f tau) holds, then snapped to a divisor of T.
            // The cap is a hard precondition for T1; the momentum analysis
            // has its own soft constraints, so T2 only warns.
            let tau_rate = (tf.powf(0.25) / nf.powf(0.75)).floor() as usize;
            let tau_cap = (1.0 / (8.0 * l_f * eta_y)).floor() as usize;
            if tau_cap < 1 {
                let msg = format!(
                    "constraint eta_y <= 1/(8 L_f tau) cannot hold: eta_y={eta_y:.6} \
                     exceeds 1/(8 L_f) = {:.6} even at tau = 1 (increase T)",
                    1.0 / (8.0 * l_f)
                );
                if theorem == TheoremId::T1 {
                    return Err(Error::InvalidConfig(msg));
                }
                warnings.push(msg);
            }
            let tau = largest_divisor_at_most(horizon, tau_rate.max(1).min(tau_cap.max(1)));

            let (alpha, beta) = match theorem {
                TheoremId::T1 => (1.0, 1.0),
                TheoremId::T2 => {
                    let alpha = (nf / tf).sqrt();
                    let beta = 3.0;
                    let alpha_cap = (beta / (6.0 * l_f * l_f * (eta_x * eta_x + eta_y * eta_y)))
                        .min(1.0 / (48.0 * tau as f64));
                    if alpha > alpha_cap {
                        warnings.push(format!(
                            "alpha = {alpha:.6} exceeds the momentum analysis cap {alpha_cap:.6}; \
                             desk-scale run proceeds anyway"
                        ));
                    }
                    (alpha, beta)
                }
                TheoremId::T3 => unreachable!(),
            };
            Ok(TheoremSchedule {
                steps: StepSchedule {
                    eta_x,
                    eta_y,
                    alpha,
                    beta_x: beta,
                    beta_y: beta,
                },
                sync: SyncSchedule::new(tau, None, horizon)?,
                warnings,
            })
        }
        TheoremId::T3 => {
            if tf < nf.powi(7) {
                warnings.push(format!(
                    "T={horizon} is below the asymptotic regime T >= n^7; slope fits remain meaningful"
                ));
            }
            let tau_rate = (tf.powf(0.125) / nf.powf(0.875)).floor() as usize;
            let tau = largest_divisor_at_most(horizon, tau_rate.max(1));
            let cap = 1.0 / (8.0 * l_f * tau as f64);
            let eta_x = (nf.powf(0.25) / tf.powf(0.75)).min(cap);
            let eta_y = (nf.powf(0.75) / tf.powf(0.25)).min(cap);
            // S = ceil(sqrt(T/n)) rounded up to a multiple of tau.
            let s_raw = (tf / nf).sqrt().ceil() as usize;
            let s = s_raw.div_ceil(tau) * tau;
            Ok(TheoremSchedule {
                steps: StepSchedule {
                    eta_x,
                    eta_y,
                    alpha: 1.0,
                    beta_x: 1.0,
                    beta_y: 1.0,
                },
                sync: SyncSchedule::new(tau, Some(s.max(tau)), horizon)?,
                warnings,
            })
        }
    }
}
