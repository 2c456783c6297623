//! Deterministic fixed-step simulation of a formation with loss events and
//! desired-copy adaptation.
//!
//! The integrated state is the concatenation of the agent states (one phase
//! per agent, or a full [`VehicleState`] per agent) and the flattened desired
//! copies. Events fire at step boundaries; survivors' states carry over
//! unchanged.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adaptation::{desired_rates_into, lyapunov_rate_slice, AdaptationParams};
use crate::dynamics::{coupling_fplus, phase_rates_from_pattern, AgentParams};
use crate::error::{Error, Result};
use crate::fault::{apply_agent_loss, LossEvent};
use crate::integrate::{OdeSystem, Rk4};
use crate::pattern::{objective_e_slice, pattern_slice, residuals_slice, DesiredCopies, EdgeCopies};
use crate::topology::{AgentId, InteractionTopology};
use crate::vehicle::{
    orbit_guidance, phase_of_position, phase_rate, speed_command_from_coupling, vehicle_rates, GuidanceParams,
    VehicleState,
};

/// Desired shifts of the bundled four-agent formation: 2π/3, 9π/13, 18π/29.
pub const CANONICAL_SHIFTS: [f64; 3] = [2.0 * PI / 3.0, 9.0 * PI / 13.0, 18.0 * PI / 29.0];

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_DURATION: f64 = 400.0;
pub const DEFAULT_LOSS_TIME: f64 = 100.0;
pub const DEFAULT_RECORD_PERIOD: f64 = 0.1;
pub const DEFAULT_JITTER: f64 = 0.3;
pub const DEFAULT_SEED: u64 = 1;
pub const TARGET: (f64, f64) = (0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleModel {
    pub guidance: GuidanceParams,
    /// Starting distance from the target (m).
    pub initial_radius: f64,
}

impl Default for VehicleModel {
    fn default() -> Self {
        Self {
            guidance: GuidanceParams::default(),
            initial_radius: 1.3 * crate::dynamics::DEFAULT_ORBIT_RADIUS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Phase,
    Vehicle(VehicleModel),
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Phase => "phase",
            ModelKind::Vehicle(_) => "vehicle",
        }
    }
}

/// Base placement of the initial phases before jitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialLayout {
    /// Cumulative desired shifts (agent 1 at 0).
    Pattern,
    /// `2π i / n`.
    Equispaced,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialPhases {
    Perturbed { layout: InitialLayout, max_jitter: f64 },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub model: ModelKind,
    pub agents: Vec<AgentId>,
    pub params: Vec<AgentParams>,
    pub desired_shifts: Vec<f64>,
    pub adaptation: AdaptationParams,
    pub events: Vec<LossEvent>,
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    pub record_period: f64,
    pub initial_phases: InitialPhases,
    /// Default substitutions made while building the scenario.
    pub notices: Vec<String>,
}

impl Scenario {
    /// Four agents on an open chain with the canonical desired shifts and
    /// default parameters; no events, adaptation off.
    pub fn canonical() -> Self {
        Self {
            name: "canonical_4uav".into(),
            model: ModelKind::Phase,
            agents: vec![1, 2, 3, 4],
            params: vec![AgentParams::default(); 4],
            desired_shifts: CANONICAL_SHIFTS.to_vec(),
            adaptation: AdaptationParams::default(),
            events: Vec::new(),
            duration: DEFAULT_DURATION,
            dt: DEFAULT_DT,
            seed: DEFAULT_SEED,
            record_period: DEFAULT_RECORD_PERIOD,
            initial_phases: InitialPhases::Perturbed {
                layout: InitialLayout::Pattern,
                max_jitter: DEFAULT_JITTER,
            },
            notices: Vec::new(),
        }
    }

    /// Adds a loss event.
    pub fn with_loss(mut self, agent: AgentId, time: f64) -> Self {
        self.events.push(LossEvent {
            time,
            lost_agent: agent,
        });
        self
    }

    /// Turns adaptation on with the given parameters, starting at `start_time`.
    pub fn with_adaptation(mut self, start_time: f64) -> Self {
        self.adaptation.enabled = true;
        self.adaptation.start_time = start_time;
        self
    }

    pub fn uniform_params(&self) -> Option<AgentParams> {
        let first = *self.params.first()?;
        self.params.iter().all(|p| *p == first).then_some(first)
    }

    fn steps_of(&self, t: f64) -> Option<usize> {
        let n = t / self.dt;
        let r = n.round();
        ((n - r).abs() <= 1e-9 * r.max(1.0) && r >= 0.0).then_some(r as usize)
    }

    pub fn n_steps(&self) -> usize {
        self.steps_of(self.duration).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let n = self.agents.len();
        if n < 2 {
            errs.push(format!("agents: need at least 2, got {n}"));
        }
        let mut sorted = self.agents.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != n {
            errs.push("agents: ids must be distinct".into());
        }
        if self.params.len() != n {
            errs.push(format!("params: expected {n} entries, got {}", self.params.len()));
        }
        for (id, p) in self.agents.iter().zip(&self.params) {
            if let Err(e) = p.validate() {
                errs.push(format!("agent {id}: {e}"));
            }
        }
        if self.desired_shifts.len() + 1 != n {
            errs.push(format!(
                "desired_shifts_rad: expected {} values (agents - 1), got {}",
                n.saturating_sub(1),
                self.desired_shifts.len()
            ));
        }
        if self.desired_shifts.iter().any(|v| !v.is_finite()) {
            errs.push("desired_shifts_rad: values must be finite".into());
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            errs.push(format!("dt_s must be positive, got {}", self.dt));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            errs.push(format!("duration_s must be non-negative, got {}", self.duration));
        }
        let dt_ok = self.dt.is_finite() && self.dt > 0.0;
        if dt_ok {
            if !(self.record_period >= self.dt) {
                errs.push(format!("record_period_s must be >= dt_s, got {}", self.record_period));
            } else if self.steps_of(self.record_period).is_none() {
                errs.push("record_period_s must be a multiple of dt_s".into());
            }
            if self.duration.is_finite() && self.steps_of(self.duration).is_none() {
                errs.push("duration_s must be a multiple of dt_s".into());
            }
        }
        if let Err(e) = self.adaptation.validate() {
            errs.push(format!("adaptation: {e}"));
        }
        match &self.initial_phases {
            InitialPhases::Perturbed { max_jitter, .. } => {
                if !(max_jitter.is_finite() && *max_jitter >= 0.0) {
                    errs.push(format!("initial_jitter_rad must be non-negative, got {max_jitter}"));
                }
            }
            InitialPhases::Explicit(q) => {
                if q.len() != n {
                    errs.push(format!("initial_phases_rad: expected {n} values, got {}", q.len()));
                }
                if q.iter().any(|v| !v.is_finite()) {
                    errs.push("initial_phases_rad: values must be finite".into());
                }
            }
        }
        if let ModelKind::Vehicle(v) = &self.model {
            if let Err(e) = v.guidance.validate() {
                errs.push(format!("model: {e}"));
            }
            if !(v.initial_radius.is_finite() && v.initial_radius > 0.0) {
                errs.push(format!(
                    "model: initial_radius_m must be positive, got {}",
                    v.initial_radius
                ));
            }
        }
        let mut alive = self.agents.clone();
        let mut events = self.events.clone();
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        for ev in &events {
            if !(ev.time >= 0.0 && ev.time <= self.duration) {
                errs.push(format!("event at t = {}: time outside [0, duration]", ev.time));
            } else if dt_ok && self.steps_of(ev.time).is_none() {
                errs.push(format!("event at t = {}: time must be a multiple of dt_s", ev.time));
            }
            if !self.agents.contains(&ev.lost_agent) {
                errs.push(format!("event at t = {}: unknown agent {}", ev.time, ev.lost_agent));
            } else if !alive.contains(&ev.lost_agent) {
                errs.push(format!(
                    "event at t = {}: agent {} was already removed",
                    ev.time, ev.lost_agent
                ));
            } else if alive.len() <= 2 {
                errs.push(format!(
                    "event at t = {}: losing agent {} would leave fewer than 2 agents",
                    ev.time, ev.lost_agent
                ));
            } else {
                alive.retain(|&a| a != ev.lost_agent);
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(errs))
        }
    }

    /// Initial phases after layout and seeded jitter.
    pub fn initial_phase_values(&self) -> Vec<f64> {
        match &self.initial_phases {
            InitialPhases::Explicit(q) => q.clone(),
            InitialPhases::Perturbed { layout, max_jitter } => {
                let n = self.agents.len();
                let base: Vec<f64> = match layout {
                    InitialLayout::Pattern => std::iter::once(0.0)
                        .chain(self.desired_shifts.iter().scan(0.0, |acc, d| {
                            *acc += d;
                            Some(*acc)
                        }))
                        .collect(),
                    InitialLayout::Equispaced => (0..n).map(|i| TAU * i as f64 / n as f64).collect(),
                };
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                base.into_iter()
                    .map(|b| {
                        if *max_jitter > 0.0 {
                            b + rng.random_range(-*max_jitter..=*max_jitter)
                        } else {
                            b
                        }
                    })
                    .collect()
            }
        }
    }

    /// Topology and copies after applying every loss event, in time order.
    pub fn final_configuration(&self) -> Result<(InteractionTopology, DesiredCopies, Vec<AgentParams>)> {
        let mut topology = InteractionTopology::chain(&self.agents)?;
        let mut copies = DesiredCopies::consistent(&self.desired_shifts)?;
        let mut params = self.params.clone();
        let mut events = self.events.clone();
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        for ev in events {
            let idx = topology.index_of(ev.lost_agent)?;
            let (t, c) = apply_agent_loss(&topology, &copies, ev.lost_agent)?;
            params.remove(idx);
            topology = t;
            copies = c;
        }
        Ok((topology, copies, params))
    }
}

/// Per-agent recorded values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSample {
    /// Unwrapped orbit phase (rad).
    pub phase: f64,
    /// Phase rate (rad/s).
    pub rate: f64,
    /// Linear speed (m/s).
    pub speed: f64,
    /// Distance from the target (m); the orbit radius for the phase model.
    pub radius: f64,
    /// Formation vector entry `x_i = -(Lᵀp)_i` (rad).
    pub x: f64,
    /// Coupling argument `x_i - x_di` with wrapped edge errors (rad).
    pub residual: f64,
    /// `f⁺(x_i - x_di)` (rad/s).
    pub coupling: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSample {
    pub shift: f64,
    pub copies: EdgeCopies,
}

impl EdgeSample {
    /// Wrapped shift errors against the tail and head copies.
    pub fn errors(&self) -> (f64, f64) {
        (
            crate::angle::wrap(self.shift - self.copies.tail),
            crate::angle::wrap(self.shift - self.copies.head),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: f64,
    /// Indexed like [`Trace::agent_ids`]; `None` once an agent is lost.
    pub agents: Vec<Option<AgentSample>>,
    /// Indexed like [`Trace::edge_columns`]; `None` while an edge is absent.
    pub edges: Vec<Option<EdgeSample>>,
    pub e: f64,
    pub v: f64,
    /// Quasi-stationary `Ė` from the adaptation law at this state.
    pub lyapunov_rate: f64,
}

impl Sample {
    pub fn active_agents(&self) -> impl Iterator<Item = &AgentSample> {
        self.agents.iter().flatten()
    }

    pub fn active_edges(&self) -> impl Iterator<Item = &EdgeSample> {
        self.edges.iter().flatten()
    }

    pub fn max_abs_shift_error(&self) -> f64 {
        self.active_edges()
            .map(|e| {
                let (a, b) = e.errors();
                a.abs().max(b.abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn max_abs_interaction(&self) -> f64 {
        self.max_abs_shift_error()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub scenario: Scenario,
    pub agent_ids: Vec<AgentId>,
    /// Every edge that exists at some point of the run, in order of appearance.
    pub edge_columns: Vec<(AgentId, AgentId)>,
    pub samples: Vec<Sample>,
    pub final_topology: InteractionTopology,
    pub final_copies: DesiredCopies,
}

impl Trace {
    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("trace has at least one sample")
    }

    /// Last sample with `time <= t`.
    pub fn sample_at(&self, t: f64) -> Option<&Sample> {
        let eps = 1e-9 * t.abs().max(1.0);
        self.samples.iter().take_while(|s| s.time <= t + eps).last()
    }

    pub fn agent_column(&self, id: AgentId) -> Option<usize> {
        self.agent_ids.iter().position(|&a| a == id)
    }

    pub fn edge_column(&self, tail: AgentId, head: AgentId) -> Option<usize> {
        self.edge_columns.iter().position(|&e| e == (tail, head))
    }

    pub fn edge_sample<'a>(&self, sample: &'a Sample, tail: AgentId, head: AgentId) -> Option<&'a EdgeSample> {
        sample.edges[self.edge_column(tail, head)?].as_ref()
    }

    /// Shifts at `sample` in the edge order of the final topology.
    pub fn final_order_shifts(&self, sample: &Sample) -> Vec<Option<f64>> {
        (0..self.final_topology.n_edges())
            .map(|k| {
                let (t, h) = self.final_topology.edge_ids(k);
                self.edge_sample(sample, t, h).map(|e| e.shift)
            })
            .collect()
    }

    /// Speeds of the agents alive in `sample`, keyed by id.
    pub fn speeds(&self, sample: &Sample) -> Vec<(AgentId, f64)> {
        self.agent_ids
            .iter()
            .zip(&sample.agents)
            .filter_map(|(&id, a)| a.map(|a| (id, a.speed)))
            .collect()
    }

    /// Phases of the agents alive in `sample`.
    pub fn phases(&self, sample: &Sample) -> Vec<f64> {
        sample.active_agents().map(|a| a.phase).collect()
    }
}

/// Edges in order of first appearance across all events.
fn edge_columns_for(scenario: &Scenario) -> Result<Vec<(AgentId, AgentId)>> {
    let mut topology = InteractionTopology::chain(&scenario.agents)?;
    let mut copies = DesiredCopies::consistent(&scenario.desired_shifts)?;
    let mut cols: Vec<(AgentId, AgentId)> = (0..topology.n_edges()).map(|k| topology.edge_ids(k)).collect();
    let mut events = scenario.events.clone();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    for ev in events {
        let (t, c) = apply_agent_loss(&topology, &copies, ev.lost_agent)?;
        for k in 0..t.n_edges() {
            let e = t.edge_ids(k);
            if !cols.contains(&e) {
                cols.push(e);
            }
        }
        topology = t;
        copies = c;
    }
    Ok(cols)
}

/// The coupled right-hand side for the current topology.
struct FormationSystem<'a> {
    topology: &'a InteractionTopology,
    params: &'a [AgentParams],
    adaptation: &'a AdaptationParams,
    model: &'a ModelKind,
}

impl FormationSystem<'_> {
    fn agent_dim(&self) -> usize {
        match self.model {
            ModelKind::Phase => 1,
            ModelKind::Vehicle(_) => VehicleState::DIM,
        }
    }

    fn split<'y>(&self, y: &'y [f64]) -> (&'y [f64], Vec<EdgeCopies>) {
        let n = self.topology.n_agents() * self.agent_dim();
        (&y[..n], DesiredCopies::from_flat(&y[n..]).edges().to_vec())
    }

    /// Wrapped-or-unwrapped phases of every agent; only differences matter.
    fn phases(&self, agents: &[f64]) -> Vec<f64> {
        match self.model {
            ModelKind::Phase => agents.to_vec(),
            ModelKind::Vehicle(v) => agents
                .chunks_exact(VehicleState::DIM)
                .map(|s| {
                    let st = VehicleState::from_slice(s);
                    phase_of_position(&st, TARGET, v.guidance.direction, None).unwrap_or(0.0)
                })
                .collect(),
        }
    }
}

impl OdeSystem for FormationSystem<'_> {
    fn dim(&self) -> usize {
        self.topology.n_agents() * self.agent_dim() + 2 * self.topology.n_edges()
    }

    fn rates(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let (agents, copies) = self.split(y);
        let n = self.topology.n_agents();
        let q = self.phases(agents);
        let p = pattern_slice(self.topology, &q);
        let (dagents, dcopies) = dy.split_at_mut(agents.len());
        match self.model {
            ModelKind::Phase => phase_rates_from_pattern(self.topology, &p, &copies, self.params, dagents),
            ModelKind::Vehicle(v) => {
                let mut residual = vec![0.0; n];
                residuals_slice(self.topology, &p, &copies, &mut residual);
                for (i, (s, d)) in agents
                    .chunks_exact(VehicleState::DIM)
                    .zip(dagents.chunks_exact_mut(VehicleState::DIM))
                    .enumerate()
                {
                    let st = VehicleState::from_slice(s);
                    let a = &self.params[i];
                    let v_cmd = speed_command_from_coupling(coupling_fplus(residual[i], a), a);
                    let cmd = orbit_guidance(&st, TARGET, a.rho, v_cmd, &v.guidance);
                    d.copy_from_slice(&vehicle_rates(&st, &cmd, &v.guidance).to_array());
                }
            }
        }
        let mut rates = vec![EdgeCopies::consistent(0.0); copies.len()];
        desired_rates_into(&p, &copies, self.adaptation, t, &mut rates);
        for (slot, r) in dcopies.chunks_exact_mut(2).zip(rates) {
            slot[0] = r.tail;
            slot[1] = r.head;
        }
    }

    fn component_name(&self, i: usize) -> String {
        let ad = self.agent_dim();
        let n = self.topology.n_agents() * ad;
        if i < n {
            let id = self.topology.agent_ids()[i / ad];
            match self.model {
                ModelKind::Phase => format!("phase of agent {id}"),
                ModelKind::Vehicle(_) => {
                    const NAMES: [&str; 5] = ["x", "y", "heading", "turn_rate", "speed"];
                    format!("{} of vehicle {id}", NAMES[i % ad])
                }
            }
        } else {
            let k = (i - n) / 2;
            let (t, h) = self.topology.edge_ids(k);
            let holder = if (i - n).is_multiple_of(2) { t } else { h };
            format!("desired copy of edge {t}-{h} held by agent {holder}")
        }
    }
}

/// Mutable run state.
struct Run<'s> {
    scenario: &'s Scenario,
    topology: InteractionTopology,
    params: Vec<AgentParams>,
    y: Vec<f64>,
    /// Unwrapped phases (vehicle model only; the phase model integrates them).
    tracked: Vec<f64>,
}

impl Run<'_> {
    fn agent_dim(&self) -> usize {
        match self.scenario.model {
            ModelKind::Phase => 1,
            ModelKind::Vehicle(_) => VehicleState::DIM,
        }
    }

    fn system(&self) -> FormationSystem<'_> {
        FormationSystem {
            topology: &self.topology,
            params: &self.params,
            adaptation: &self.scenario.adaptation,
            model: &self.scenario.model,
        }
    }

    fn copies(&self) -> DesiredCopies {
        DesiredCopies::from_flat(&self.y[self.topology.n_agents() * self.agent_dim()..])
    }

    fn phases(&self) -> Vec<f64> {
        match self.scenario.model {
            ModelKind::Phase => self.y[..self.topology.n_agents()].to_vec(),
            ModelKind::Vehicle(_) => self.tracked.clone(),
        }
    }

    fn update_tracked(&mut self) {
        if let ModelKind::Vehicle(v) = &self.scenario.model {
            for (i, s) in self
                .y
                .chunks_exact(VehicleState::DIM)
                .take(self.tracked.len())
                .enumerate()
            {
                let st = VehicleState::from_slice(s);
                if let Ok(ph) = phase_of_position(&st, TARGET, v.guidance.direction, Some(self.tracked[i])) {
                    self.tracked[i] = ph;
                }
            }
        }
    }

    fn lose(&mut self, agent: AgentId) -> Result<()> {
        let copies = self.copies();
        let idx = self.topology.index_of(agent)?;
        let (topology, new_copies) = apply_agent_loss(&self.topology, &copies, agent)?;
        let ad = self.agent_dim();
        let n = self.topology.n_agents();
        let mut y: Vec<f64> = self.y[..n * ad].to_vec();
        y.drain(idx * ad..(idx + 1) * ad);
        y.extend(new_copies.to_flat());
        self.y = y;
        self.params.remove(idx);
        if !self.tracked.is_empty() {
            self.tracked.remove(idx);
        }
        self.topology = topology;
        Ok(())
    }

    fn sample(&self, t: f64, trace_agents: &[AgentId], edge_columns: &[(AgentId, AgentId)]) -> Sample {
        let topo = &self.topology;
        let n = topo.n_agents();
        let copies = self.copies();
        let q = self.phases();
        let p = pattern_slice(topo, &q);
        let mut residual = vec![0.0; n];
        residuals_slice(topo, &p, copies.edges(), &mut residual);
        let mut x = vec![0.0; n];
        for (k, e) in topo.edges().iter().enumerate() {
            x[e.tail] += p[k];
            x[e.head] -= p[k];
        }
        let mut dy = vec![0.0; self.y.len()];
        self.system().rates(t, &self.y, &mut dy);

        let mut agents = vec![None; trace_agents.len()];
        let mut v_total = 0.0;
        for i in 0..n {
            let a = &self.params[i];
            let (rate, speed, radius) = match &self.scenario.model {
                ModelKind::Phase => (dy[i], a.rho * dy[i], a.rho),
                ModelKind::Vehicle(v) => {
                    let st = VehicleState::from_slice(&self.y[i * VehicleState::DIM..(i + 1) * VehicleState::DIM]);
                    (
                        phase_rate(&st, TARGET, v.guidance.direction),
                        st.speed,
                        st.radius(TARGET),
                    )
                }
            };
            let coupling = a.coupling();
            v_total += coupling.antiderivative(residual[i]);
            let col = trace_agents
                .iter()
                .position(|&id| id == topo.agent_ids()[i])
                .expect("known agent");
            agents[col] = Some(AgentSample {
                phase: q[i],
                rate,
                speed,
                radius,
                x: x[i],
                residual: residual[i],
                coupling: coupling.eval(residual[i]),
            });
        }
        let mut edges = vec![None; edge_columns.len()];
        for k in 0..topo.n_edges() {
            let col = edge_columns
                .iter()
                .position(|&e| e == topo.edge_ids(k))
                .expect("known edge");
            edges[col] = Some(EdgeSample {
                shift: p[k],
                copies: copies.edge(k),
            });
        }
        Sample {
            time: t,
            agents,
            edges,
            e: objective_e_slice(&p, copies.edges()),
            v: v_total,
            lyapunov_rate: lyapunov_rate_slice(&p, copies.edges(), &self.scenario.adaptation),
        }
    }
}

/// Integrates `scenario` from `t = 0` to its duration and records a sample
/// every `record_period`.
pub fn run_scenario(scenario: &Scenario) -> Result<Trace> {
    scenario.validate()?;
    let edge_columns = edge_columns_for(scenario)?;
    let topology = InteractionTopology::chain(&scenario.agents)?;
    let copies = DesiredCopies::consistent(&scenario.desired_shifts)?;
    let q0 = scenario.initial_phase_values();

    let (mut y, tracked) = match &scenario.model {
        ModelKind::Phase => (q0.clone(), Vec::new()),
        ModelKind::Vehicle(v) => {
            let mut y = Vec::with_capacity(q0.len() * VehicleState::DIM);
            for (phase, a) in q0.iter().zip(&scenario.params) {
                let st = VehicleState::on_orbit(v.initial_radius, *phase, a.v_nominal, v.guidance.direction);
                y.extend(st.to_array());
            }
            (y, q0.clone())
        }
    };
    y.extend(copies.to_flat());

    let mut run = Run {
        scenario,
        topology,
        params: scenario.params.clone(),
        y,
        tracked,
    };

    let mut events = scenario.events.clone();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    let event_steps: Vec<(usize, AgentId)> = events
        .iter()
        .map(|e| (scenario.steps_of(e.time).unwrap_or(0), e.lost_agent))
        .collect();
    let n_steps = scenario.n_steps();
    let record_every = scenario.steps_of(scenario.record_period).unwrap_or(1).max(1);
    let dt = scenario.dt;

    let mut samples = Vec::with_capacity(n_steps / record_every + 1);
    let mut rk4 = Rk4::new(run.y.len());
    for i in 0..=n_steps {
        let t = i as f64 * dt;
        for &(_, agent) in event_steps.iter().filter(|(s, _)| *s == i) {
            log::info!("t = {t}: agent {agent} lost");
            run.lose(agent)?;
        }
        if i % record_every == 0 {
            samples.push(run.sample(t, &scenario.agents, &edge_columns));
        }
        if i == n_steps {
            break;
        }
        let mut y = std::mem::take(&mut run.y);
        let system = FormationSystem {
            topology: &run.topology,
            params: &run.params,
            adaptation: &scenario.adaptation,
            model: &scenario.model,
        };
        rk4.step(&system, t, &mut y, dt)?;
        run.y = y;
        run.update_tracked();
    }

    let final_copies = run.copies();
    Ok(Trace {
        scenario: scenario.clone(),
        agent_ids: scenario.agents.clone(),
        edge_columns,
        samples,
        final_topology: run.topology,
        final_copies,
    })
}
