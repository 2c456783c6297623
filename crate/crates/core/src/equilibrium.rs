//! Steady states of the frozen-adaptation pattern dynamics.
//!
//! With identical agents every coupling argument settles to the same value
//! `δ`: the couplings must agree for `ṗ = L q̇` to vanish and `f⁺` is
//! strictly increasing. Since `Σ x_i = 0`, `δ = -Σ x_di / n`. The numeric
//! solver is an independent brute-force check of that closed form and also
//! covers heterogeneous agents.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::angle::wrap;
use crate::dynamics::{coupling_fplus, phase_rates_from_pattern, AgentParams};
use crate::error::{Error, Result};
use crate::pattern::{formation_vectors, residuals_slice, DesiredCopies, PatternVector};
use crate::sim::Scenario;
use crate::topology::InteractionTopology;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionMethod {
    ClosedForm,
    Numeric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumPrediction {
    pub method: PredictionMethod,
    /// Common coupling argument (rad); the mean one for heterogeneous agents.
    pub delta: f64,
    /// Steady speed minus nominal speed, per agent (m/s).
    pub speed_offsets: Vec<f64>,
    pub steady_shifts: Vec<f64>,
    /// Steady coupling arguments per agent (rad).
    pub residuals: Vec<f64>,
}

impl EquilibriumPrediction {
    /// Speed offset shared by every agent, if they agree to `tol`.
    pub fn common_speed_offset(&self, tol: f64) -> Option<f64> {
        let first = *self.speed_offsets.first()?;
        self.speed_offsets
            .iter()
            .all(|v| (v - first).abs() <= tol)
            .then_some(first)
    }
}

/// `δ = -Σ x_di / n` and the speed offset `v_f (2/π) arctan(k_θ δ)`.
pub fn balanced_offset(stale_xd: &[f64], params: &AgentParams) -> (f64, f64) {
    let delta = -stale_xd.iter().sum::<f64>() / stale_xd.len() as f64;
    (delta, params.rho * coupling_fplus(delta, params))
}

/// Balanced post-loss state for the given (possibly inconsistent) copies.
/// Identical agents use the closed form; anything else defers to
/// [`solve_equilibrium_numeric`].
pub fn predict_post_loss_equilibrium(
    topology: &InteractionTopology,
    copies: &DesiredCopies,
    params: &[AgentParams],
) -> Result<EquilibriumPrediction> {
    copies.check_covers(topology)?;
    if params.len() != topology.n_agents() {
        return Err(Error::Dimension {
            what: "agent parameters",
            expected: topology.n_agents(),
            got: params.len(),
        });
    }
    let uniform = params.iter().all(|p| *p == params[0]);
    if !uniform || !topology.has_full_row_rank() {
        return predict_numeric(topology, copies, params);
    }

    let zero = PatternVector::new(vec![0.0; topology.n_edges()])?;
    let x_d = formation_vectors(topology, &zero, copies)?.x_d;
    let (delta, offset) = balanced_offset(&x_d, &params[0]);
    let target = DVector::from_iterator(x_d.len(), x_d.iter().map(|v| v + delta));
    let shifts = -(topology.pinv().transpose() * target);
    Ok(EquilibriumPrediction {
        method: PredictionMethod::ClosedForm,
        delta,
        speed_offsets: vec![offset; topology.n_agents()],
        steady_shifts: shifts.iter().copied().collect(),
        residuals: vec![delta; topology.n_agents()],
    })
}

/// Applies the scenario's loss events to its initial pattern and predicts
/// the final steady state without simulating.
pub fn predict_for_scenario(scenario: &Scenario) -> Result<EquilibriumPrediction> {
    scenario.validate()?;
    let (topology, copies, params) = scenario.final_configuration()?;
    predict_post_loss_equilibrium(&topology, &copies, &params)
}

fn predict_numeric(
    topology: &InteractionTopology,
    copies: &DesiredCopies,
    params: &[AgentParams],
) -> Result<EquilibriumPrediction> {
    let system = FrozenPattern {
        topology,
        copies,
        params,
    };
    let report = solve_equilibrium_numeric(&system, &SolverOptions::default())?;
    if report.roots.len() != 1 {
        return Err(Error::Inconclusive(format!(
            "expected a single steady pattern, found {}",
            report.roots.len()
        )));
    }
    let shifts = report.roots[0].clone();
    let n = topology.n_agents();
    let mut residuals = vec![0.0; n];
    residuals_slice(topology, &shifts, copies.edges(), &mut residuals);
    let mut rates = vec![0.0; n];
    phase_rates_from_pattern(topology, &shifts, copies.edges(), params, &mut rates);
    let common_rate = rates.iter().sum::<f64>() / n as f64;
    Ok(EquilibriumPrediction {
        method: PredictionMethod::Numeric,
        delta: residuals.iter().sum::<f64>() / n as f64,
        speed_offsets: params.iter().map(|a| a.rho * common_rate - a.v_nominal).collect(),
        steady_shifts: shifts,
        residuals,
    })
}

/// Pattern dynamics `ṗ = L q̇` with the desired copies held fixed.
#[derive(Debug, Clone, Copy)]
pub struct FrozenPattern<'a> {
    pub topology: &'a InteractionTopology,
    pub copies: &'a DesiredCopies,
    pub params: &'a [AgentParams],
}

impl FrozenPattern<'_> {
    pub fn pattern_rate(&self, p: &[f64]) -> Vec<f64> {
        let n = self.topology.n_agents();
        let mut qdot = vec![0.0; n];
        phase_rates_from_pattern(self.topology, p, self.copies.edges(), self.params, &mut qdot);
        self.topology
            .edges()
            .iter()
            .map(|e| qdot[e.head] - qdot[e.tail])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub starts: usize,
    /// Starts are drawn uniformly within this distance (rad) of the tail copies.
    pub spread: f64,
    pub seed: u64,
    pub max_iter: usize,
    /// Convergence threshold on the Newton step (rad).
    pub step_tol: f64,
    /// Roots closer than this (rad, wrapped max-norm) are merged.
    pub merge_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            starts: 20,
            spread: 1.0,
            seed: 7,
            max_iter: 200,
            step_tol: 1e-13,
            merge_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    /// Distinct roots, each reduced to within π of the tail copies.
    pub roots: Vec<Vec<f64>>,
    pub converged_starts: usize,
    pub inconclusive_starts: usize,
}

/// Damped Newton on `ṗ = 0` from seeded random starts, with a
/// finite-difference Jacobian.
pub fn solve_equilibrium_numeric(system: &FrozenPattern<'_>, opts: &SolverOptions) -> Result<EquilibriumReport> {
    system.copies.check_covers(system.topology)?;
    let center = system.copies.tail_values();
    let m = center.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut roots: Vec<Vec<f64>> = Vec::new();
    let mut converged = 0;
    let mut inconclusive = 0;

    for _ in 0..opts.starts {
        let start: Vec<f64> = center
            .iter()
            .map(|c| c + rng.random_range(-opts.spread..=opts.spread))
            .collect();
        match newton(system, start, opts) {
            Some(root) => {
                converged += 1;
                let root: Vec<f64> = root.iter().zip(&center).map(|(r, c)| c + wrap(r - c)).collect();
                let known = roots
                    .iter()
                    .any(|r| r.iter().zip(&root).all(|(a, b)| wrap(a - b).abs() < opts.merge_tol));
                if !known {
                    roots.push(root);
                }
            }
            None => inconclusive += 1,
        }
    }
    if roots.is_empty() {
        return Err(Error::Inconclusive(format!(
            "no start out of {} converged within {} iterations",
            opts.starts, opts.max_iter
        )));
    }
    debug_assert!(roots.iter().all(|r| r.len() == m));
    Ok(EquilibriumReport {
        roots,
        converged_starts: converged,
        inconclusive_starts: inconclusive,
    })
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn newton(system: &FrozenPattern<'_>, mut p: Vec<f64>, opts: &SolverOptions) -> Option<Vec<f64>> {
    const FD: f64 = 1e-7;
    let m = p.len();
    let mut f = system.pattern_rate(&p);
    for _ in 0..opts.max_iter {
        let mut jac = DMatrix::zeros(m, m);
        for j in 0..m {
            let mut hi = p.clone();
            let mut lo = p.clone();
            hi[j] += FD;
            lo[j] -= FD;
            let (fh, fl) = (system.pattern_rate(&hi), system.pattern_rate(&lo));
            for i in 0..m {
                jac[(i, j)] = (fh[i] - fl[i]) / (2.0 * FD);
            }
        }
        let rhs = -DVector::from_column_slice(&f);
        let step = jac.lu().solve(&rhs)?;
        let f0 = norm_inf(&f);
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-6 {
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, s)| a + alpha * s).collect();
            let ft = system.pattern_rate(&trial);
            if norm_inf(&ft) <= (1.0 - 1e-4 * alpha) * f0 || f0 == 0.0 {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let step_size = alpha * step.amax();
        match accepted {
            Some((trial, ft)) => {
                p = trial;
                f = ft;
            }
            // no descent left: either converged to round-off or stuck
            None => return (norm_inf(&f) < 1e-12).then_some(p),
        }
        if step_size < opts.step_tol || norm_inf(&f) == 0.0 {
            return Some(p);
        }
    }
    (norm_inf(&f) < 1e-12).then_some(p)
}
