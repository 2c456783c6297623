//! Slow retuning of the desired shifts.
//!
//! Every endpoint copy drifts toward the measured shift of its own edge:
//! `ṗ_dk^(i) = a_s · f_sigm(τ_p · wrap(p_k - p_dk^(i)))`. The law is local,
//! so each agent updates only the copies it stores.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::angle::wrap;
use crate::error::{Error, Result};
use crate::pattern::{DesiredCopies, EdgeCopies, PatternVector};

pub const DEFAULT_TAU_P: f64 = 0.1;
pub const DEFAULT_A_S: f64 = 2.0 / PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sigmoid {
    Arctan,
    Tanh,
}

impl Sigmoid {
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Sigmoid::Arctan => z.atan(),
            Sigmoid::Tanh => z.tanh(),
        }
    }

    /// `sup |f_sigm|`.
    pub fn supremum(self) -> f64 {
        match self {
            Sigmoid::Arctan => FRAC_PI_2,
            Sigmoid::Tanh => 1.0,
        }
    }
}

impl FromStr for Sigmoid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arctan" => Ok(Sigmoid::Arctan),
            "tanh" => Ok(Sigmoid::Tanh),
            other => Err(Error::UnknownSigmoid(other.to_string())),
        }
    }
}

impl fmt::Display for Sigmoid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sigmoid::Arctan => "arctan",
            Sigmoid::Tanh => "tanh",
        })
    }
}

/// Parses a sigmoid name and evaluates it.
pub fn sigmoid_eval(kind: &str, z: f64) -> Result<f64> {
    Ok(kind.parse::<Sigmoid>()?.eval(z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationParams {
    pub tau_p: f64,
    pub a_s: f64,
    pub sigmoid: Sigmoid,
    pub enabled: bool,
    /// Adaptation is inactive before this time (s).
    pub start_time: f64,
}

impl Default for AdaptationParams {
    fn default() -> Self {
        Self {
            tau_p: DEFAULT_TAU_P,
            a_s: DEFAULT_A_S,
            sigmoid: Sigmoid::Arctan,
            enabled: false,
            start_time: 0.0,
        }
    }
}

impl AdaptationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_p > 0.0 && self.tau_p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tau_p must lie in (0,1), got {}",
                self.tau_p
            )));
        }
        if !(self.a_s.is_finite() && self.a_s > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "a_s must be positive, got {}",
                self.a_s
            )));
        }
        if !self.start_time.is_finite() {
            return Err(Error::InvalidParameter("adaptation start time must be finite".into()));
        }
        Ok(())
    }

    pub fn is_active(&self, t: f64) -> bool {
        self.enabled && t >= self.start_time
    }

    /// Rate of one copy for the wrapped mismatch `u = p_k - copy`.
    pub fn copy_rate(&self, u: f64) -> f64 {
        self.a_s * self.sigmoid.eval(self.tau_p * u)
    }

    /// `a_s · sup |f_sigm|`: bound on any copy rate.
    pub fn max_rate(&self) -> f64 {
        self.a_s * self.sigmoid.supremum()
    }
}

/// Copy rates at time `t`; all zero when adaptation is disabled or not yet
/// started.
pub fn desired_rates(
    p: &PatternVector,
    d: &DesiredCopies,
    params: &AdaptationParams,
    t: f64,
) -> Result<Vec<EdgeCopies>> {
    if p.len() != d.n_edges() {
        return Err(Error::Dimension {
            what: "desired copies",
            expected: p.len(),
            got: d.n_edges(),
        });
    }
    let mut out = vec![EdgeCopies::consistent(0.0); p.len()];
    desired_rates_into(p.as_slice(), d.edges(), params, t, &mut out);
    Ok(out)
}

pub(crate) fn desired_rates_into(
    p: &[f64],
    copies: &[EdgeCopies],
    params: &AdaptationParams,
    t: f64,
    out: &mut [EdgeCopies],
) {
    if !params.is_active(t) {
        out.iter_mut().for_each(|c| *c = EdgeCopies::consistent(0.0));
        return;
    }
    for ((o, &pk), c) in out.iter_mut().zip(p).zip(copies) {
        o.tail = params.copy_rate(wrap(pk - c.tail));
        o.head = params.copy_rate(wrap(pk - c.head));
    }
}

/// `Ė` under quasi-stationary `p`:
/// `-½ Σ_{copies} u · a_s f_sigm(τ_p u)` with `u = wrap(p_k - copy)`.
///
/// The ½ matches `E = ¼ Σ_{copies} u²`; with consistent copies this reduces
/// to `-Σ_k u_k · a_s f_sigm(τ_p u_k)`.
pub fn lyapunov_rate(p: &PatternVector, d: &DesiredCopies, params: &AdaptationParams) -> Result<f64> {
    if p.len() != d.n_edges() {
        return Err(Error::Dimension {
            what: "desired copies",
            expected: p.len(),
            got: d.n_edges(),
        });
    }
    Ok(lyapunov_rate_slice(p.as_slice(), d.edges(), params))
}

pub(crate) fn lyapunov_rate_slice(p: &[f64], copies: &[EdgeCopies], params: &AdaptationParams) -> f64 {
    -0.5 * p
        .iter()
        .zip(copies)
        .flat_map(|(&pk, c)| [wrap(pk - c.tail), wrap(pk - c.head)])
        .map(|u| u * params.copy_rate(u))
        .sum::<f64>()
}
