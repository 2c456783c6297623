//! Simulation and analysis of decentralized formations orbiting a target.
//!
//! Agents hold orbit phases `q`, interact along the edges of an open chain
//! (`p = L q`) and steer toward desired phase shifts with a saturated
//! arctan coupling. When an interior agent is lost the survivors keep their
//! local desired values, the inherited pattern becomes unattainable and the
//! formation settles into a balanced state with a shifted cruising speed.
//! A slow sigmoid retuning of the desired shifts removes that offset.
//!
//! Module map:
//! - [`topology`], [`pattern`]: incidence matrix, pseudoinverse, formation
//!   vectors, objective and interactions.
//! - [`dynamics`]: phase ODE right-hand side, potential, coupling-condition checks.
//! - [`adaptation`]: desired-shift retuning law and Lyapunov rate.
//! - [`fault`]: agent-loss rewiring with stale desired copies.
//! - [`vehicle`]: kinematic unicycle plant with orbit guidance.
//! - [`integrate`], [`sim`], [`equilibrium`], [`analysis`]: RK4, scenario
//!   runner, steady-state oracles and trace summaries.
//! - [`scenario_file`], [`trace_csv`], [`audit`], [`plot`]: file formats.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adaptation;
pub mod analysis;
pub mod angle;
pub mod audit;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod fault;
pub mod integrate;
pub mod pattern;
pub mod plot;
pub mod scenario_file;
pub mod sim;
pub mod topology;
pub mod trace_csv;
pub mod vehicle;

pub use adaptation::{AdaptationParams, Sigmoid};
pub use dynamics::{AgentParams, CouplingFunction};
pub use error::{Error, Result};
pub use fault::LossEvent;
pub use pattern::{DesiredCopies, EdgeCopies, FormationVector, PatternVector, PhaseVector};
pub use sim::{run_scenario, Scenario, Trace};
pub use topology::{AgentId, InteractionTopology};
