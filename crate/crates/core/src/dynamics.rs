//! Agent-level phase dynamics.
//!
//! Each agent integrates `q̇_i = ω_i + f⁺(x_i - x_di)` where
//! `f⁺(u) = v_f · 2/(π ρ) · arctan(k_θ u)` is the saturated coupling. The
//! coupling argument only depends on `p = L q`, which keeps the pattern
//! dynamics autonomous and, with identical agents, a gradient flow of
//! `V = Σ F(x_i - x_di)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::{pattern_slice, residuals_slice, DesiredCopies, EdgeCopies, PatternVector, PhaseVector};
use crate::topology::InteractionTopology;

pub const DEFAULT_ORBIT_RADIUS: f64 = 100.0;
pub const DEFAULT_NOMINAL_SPEED: f64 = 12.0;
pub const DEFAULT_V_F: f64 = 3.0;
pub const DEFAULT_K_THETA: f64 = 5.0;

/// Central finite-difference step used by the autonomy check (rad).
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    /// Nominal orbit rate (rad/s).
    pub omega: f64,
    /// Orbit radius (m).
    pub rho: f64,
    /// Maximum added speed (m/s).
    pub v_f: f64,
    /// Coupling steepness.
    pub k_theta: f64,
    /// Cruising speed (m/s).
    pub v_nominal: f64,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self::uniform_cruise(
            DEFAULT_NOMINAL_SPEED,
            DEFAULT_ORBIT_RADIUS,
            DEFAULT_V_F,
            DEFAULT_K_THETA,
        )
    }
}

impl AgentParams {
    /// Parameters with `ω = v_nominal / ρ`.
    pub fn uniform_cruise(v_nominal: f64, rho: f64, v_f: f64, k_theta: f64) -> Self {
        Self {
            omega: v_nominal / rho,
            rho,
            v_f,
            k_theta,
            v_nominal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.rho, "orbit radius"),
            (self.v_f, "v_f"),
            (self.k_theta, "k_theta"),
            (self.v_nominal, "nominal speed"),
        ];
        for (v, name) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !self.omega.is_finite() {
            return Err(Error::InvalidParameter("omega must be finite".into()));
        }
        Ok(())
    }

    pub fn coupling(&self) -> CouplingFunction {
        CouplingFunction {
            kind: CouplingKind::Arctan,
            v_f: self.v_f,
            rho: self.rho,
            k_theta: self.k_theta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingKind {
    Arctan,
}

/// The odd, increasing, bounded coupling `f⁺`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingFunction {
    pub kind: CouplingKind,
    pub v_f: f64,
    pub rho: f64,
    pub k_theta: f64,
}

impl CouplingFunction {
    fn gain(&self) -> f64 {
        self.v_f * 2.0 / (PI * self.rho)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            CouplingKind::Arctan => self.gain() * (self.k_theta * x).atan(),
        }
    }

    /// `f⁺'(x)`.
    pub fn slope(&self, x: f64) -> f64 {
        match self.kind {
            CouplingKind::Arctan => self.gain() * self.k_theta / (1.0 + (self.k_theta * x).powi(2)),
        }
    }

    /// Open bound: `|f⁺(x)| < v_f / ρ`.
    pub fn supremum(&self) -> f64 {
        self.v_f / self.rho
    }

    /// `F(u) = ∫₀ᵘ f⁺`, closed form; even, non-negative, zero only at 0.
    pub fn antiderivative(&self, u: f64) -> f64 {
        match self.kind {
            CouplingKind::Arctan => {
                let k = self.k_theta;
                self.gain() * (u * (k * u).atan() - (k * k * u * u).ln_1p() / (2.0 * k))
            }
        }
    }

    pub fn check_conditions(&self, grid: &[f64]) -> CouplingConditions {
        check_coupling_conditions(|u| self.eval(u), grid)
    }
}

/// `f⁺(x)` for one agent's parameters (rad/s).
pub fn coupling_fplus(x: f64, params: &AgentParams) -> f64 {
    params.coupling().eval(x)
}

fn check_params(topology: &InteractionTopology, params: &[AgentParams]) -> Result<()> {
    if params.len() != topology.n_agents() {
        return Err(Error::Dimension {
            what: "agent parameters",
            expected: topology.n_agents(),
            got: params.len(),
        });
    }
    Ok(())
}

fn check_shapes(
    topology: &InteractionTopology,
    q: &PhaseVector,
    d: &DesiredCopies,
    params: &[AgentParams],
) -> Result<()> {
    if q.len() != topology.n_agents() {
        return Err(Error::Dimension {
            what: "phase vector",
            expected: topology.n_agents(),
            got: q.len(),
        });
    }
    d.check_covers(topology)?;
    check_params(topology, params)
}

/// `q̇_i = ω_i + f⁺(x_i - x_di)` (rad/s).
pub fn phase_rates(
    topology: &InteractionTopology,
    q: &PhaseVector,
    d: &DesiredCopies,
    params: &[AgentParams],
) -> Result<Vec<f64>> {
    check_shapes(topology, q, d, params)?;
    let p = pattern_slice(topology, q.as_slice());
    let mut out = vec![0.0; topology.n_agents()];
    phase_rates_from_pattern(topology, &p, d.edges(), params, &mut out);
    Ok(out)
}

/// Rates given the pattern directly (the phases enter only through `p`).
pub(crate) fn phase_rates_from_pattern(
    topology: &InteractionTopology,
    p: &[f64],
    copies: &[EdgeCopies],
    params: &[AgentParams],
    out: &mut [f64],
) {
    residuals_slice(topology, p, copies, out);
    for (r, a) in out.iter_mut().zip(params) {
        *r = a.omega + coupling_fplus(*r, a);
    }
}

/// `ṗ = L q̇`.
pub fn pattern_rates(
    topology: &InteractionTopology,
    q: &PhaseVector,
    d: &DesiredCopies,
    params: &[AgentParams],
) -> Result<PatternVector> {
    let qdot = phase_rates(topology, q, d, params)?;
    PatternVector::new(pattern_slice(topology, &qdot))
}

/// `V = Σ_i F(x_i - x_di)` for identical agents.
pub fn potential_v(residuals: &[f64], params: &AgentParams) -> f64 {
    let f = params.coupling();
    residuals.iter().map(|&u| f.antiderivative(u)).sum()
}

/// `‖L · ∂F/∂Q · (I - L⁺L)‖_∞` for the implemented phase dynamics.
pub fn autonomy_defect(
    topology: &InteractionTopology,
    q: &PhaseVector,
    d: &DesiredCopies,
    params: &[AgentParams],
) -> Result<f64> {
    check_shapes(topology, q, d, params)?;
    Ok(autonomy_defect_of(topology, q.as_slice(), |qq| {
        let p = pattern_slice(topology, qq);
        let mut out = vec![0.0; qq.len()];
        phase_rates_from_pattern(topology, &p, d.edges(), params, &mut out);
        out
    }))
}

/// Same check for an arbitrary right-hand side `F(Q)`; used to show that
/// dynamics reading raw phases fail it.
pub fn autonomy_defect_of<F>(topology: &InteractionTopology, q: &[f64], rates: F) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = q.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut probe = q.to_vec();
    for j in 0..n {
        probe[j] = q[j] + FD_STEP;
        let plus = rates(&probe);
        probe[j] = q[j] - FD_STEP;
        let minus = rates(&probe);
        probe[j] = q[j];
        for i in 0..n {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * FD_STEP);
        }
    }
    let l = topology.incidence();
    let proj = DMatrix::<f64>::identity(n, n) - topology.pinv() * l;
    let m = l * jac * proj;
    m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Outcome of checking `f(0) = 0`, `f'(0) > 0` and `f(u)·u > 0` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingConditions {
    pub zero_at_origin: bool,
    pub positive_slope: bool,
    pub sign_condition: bool,
    pub violations: Vec<String>,
}

impl CouplingConditions {
    pub fn passed(&self) -> bool {
        self.zero_at_origin && self.positive_slope && self.sign_condition
    }
}

pub fn check_coupling_conditions<F>(f: F, grid: &[f64]) -> CouplingConditions
where
    F: Fn(f64) -> f64,
{
    let mut violations = Vec::new();
    let f0 = f(0.0);
    let zero_at_origin = f0.abs() <= 1e-12;
    if !zero_at_origin {
        violations.push(format!("condition 1: f(0) = {f0:e}"));
    }
    let h = 1e-6;
    let slope = (f(h) - f(-h)) / (2.0 * h);
    let positive_slope = slope > 0.0;
    if !positive_slope {
        violations.push(format!("condition 2: f'(0) = {slope:e}"));
    }
    let mut sign_condition = true;
    for &u in grid.iter().filter(|u| **u != 0.0) {
        let v = f(u) * u;
        if !(v > 0.0) {
            sign_condition = false;
            violations.push(format!("condition 3: f({u}) * {u} = {v:e}"));
        }
    }
    CouplingConditions {
        zero_at_origin,
        positive_slope,
        sign_condition,
        violations,
    }
}

/// `n` points per side, symmetric about 0 on `[-half_width, half_width]`.
pub fn symmetric_grid(half_width: f64, n: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (1..=n).map(|i| half_width * i as f64 / n as f64).collect();
    let neg: Vec<f64> = g.iter().rev().map(|v| -v).collect();
    let mut out = neg;
    out.push(0.0);
    out.append(&mut g);
    out
}
