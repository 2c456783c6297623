//! TOML scenario files.
//!
//! ```toml
//! [scenario]
//! name = "canonical_4uav"
//! duration_s = 400.0
//! dt_s = 0.01
//!
//! [formation]
//! agents = [1, 2, 3, 4]
//! desired_shifts_rad = [2.0943951023931953, 2.174948760177549, 1.949954060848837]
//!
//! [[events]]
//! t_s = 100.0
//! type = "lose_agent"
//! agent = 3
//! ```
//!
//! Unknown keys are rejected. Omitted keys take their defaults and each
//! substitution is recorded in [`Scenario::notices`]. All angles are radians.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adaptation::{AdaptationParams, Sigmoid, DEFAULT_A_S, DEFAULT_TAU_P};
use crate::dynamics::{AgentParams, DEFAULT_K_THETA, DEFAULT_NOMINAL_SPEED, DEFAULT_ORBIT_RADIUS, DEFAULT_V_F};
use crate::error::{Error, Result};
use crate::fault::LossEvent;
use crate::sim::{
    InitialLayout, InitialPhases, ModelKind, Scenario, VehicleModel, DEFAULT_DT, DEFAULT_DURATION, DEFAULT_JITTER,
    DEFAULT_RECORD_PERIOD, DEFAULT_SEED,
};
use crate::topology::AgentId;
use crate::vehicle::{GuidanceParams, OrbitDirection};

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub scenario: ScenarioSection,
    pub formation: FormationSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub adaptation: AdaptationSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<EventEntry>,
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: Option<String>,
    pub duration_s: Option<f64>,
    pub dt_s: Option<f64>,
    pub seed: Option<u64>,
    pub record_period_s: Option<f64>,
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationSection {
    pub agents: Vec<AgentId>,
    pub desired_shifts_rad: Vec<f64>,
    pub orbit_radius_m: Option<f64>,
    pub nominal_speed_mps: Option<f64>,
    /// Defaults to `nominal_speed_mps / orbit_radius_m`.
    pub omega_radps: Option<f64>,
    pub v_f_mps: Option<f64>,
    pub k_theta: Option<f64>,
    /// `"pattern"` or `"equispaced"`.
    pub initial_layout: Option<String>,
    pub initial_jitter_rad: Option<f64>,
    /// Overrides layout and jitter.
    pub initial_phases_rad: Option<Vec<f64>>,
    /// Per-agent parameter overrides.
    #[serde(default, rename = "agent", skip_serializing_if = "Vec::is_empty")]
    pub agent_overrides: Vec<AgentOverride>,
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentOverride {
    pub id: AgentId,
    pub orbit_radius_m: Option<f64>,
    pub nominal_speed_mps: Option<f64>,
    pub omega_radps: Option<f64>,
    pub v_f_mps: Option<f64>,
    pub k_theta: Option<f64>,
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `"phase"` or `"vehicle"`.
    pub kind: Option<String>,
    pub initial_radius_m: Option<f64>,
    pub k_r: Option<f64>,
    pub course_gain: Option<f64>,
    pub heading_tc_s: Option<f64>,
    pub speed_tc_s: Option<f64>,
    pub v_min_mps: Option<f64>,
    pub v_max_mps: Option<f64>,
    pub direction: Option<OrbitDirection>,
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptationSection {
    pub enabled: Option<bool>,
    pub tau_p: Option<f64>,
    pub a_s: Option<f64>,
    pub sigmoid: Option<String>,
    pub start_time_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "lose_agent")]
    LoseAgent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventEntry {
    pub t_s: f64,
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub agent: AgentId,
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

pub fn parse_scenario_file(text: &str) -> Result<ScenarioFile> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        Error::Parse {
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })
}

struct Defaults<'a> {
    notices: &'a mut Vec<String>,
}

impl Defaults<'_> {
    fn or<T: std::fmt::Debug>(&mut self, v: Option<T>, key: &str, default: T) -> T {
        v.unwrap_or_else(|| {
            self.notices.push(format!("{key} not set; using default {default:?}"));
            default
        })
    }
}

impl ScenarioFile {
    /// Builds and validates the scenario, recording default substitutions.
    pub fn to_scenario(&self) -> Result<Scenario> {
        let mut notices = Vec::new();
        let mut d = Defaults { notices: &mut notices };
        let mut errs = Vec::new();

        let sc = &self.scenario;
        let name = d.or(sc.name.clone(), "scenario.name", "unnamed".to_string());
        let duration = d.or(sc.duration_s, "scenario.duration_s", DEFAULT_DURATION);
        let dt = d.or(sc.dt_s, "scenario.dt_s", DEFAULT_DT);
        let seed = d.or(sc.seed, "scenario.seed", DEFAULT_SEED);
        let record_period = d.or(sc.record_period_s, "scenario.record_period_s", DEFAULT_RECORD_PERIOD);

        let f = &self.formation;
        let rho = d.or(f.orbit_radius_m, "formation.orbit_radius_m", DEFAULT_ORBIT_RADIUS);
        let v_nominal = d.or(
            f.nominal_speed_mps,
            "formation.nominal_speed_mps",
            DEFAULT_NOMINAL_SPEED,
        );
        let v_f = d.or(f.v_f_mps, "formation.v_f_mps", DEFAULT_V_F);
        let k_theta = d.or(f.k_theta, "formation.k_theta", DEFAULT_K_THETA);
        let base = AgentParams {
            omega: f.omega_radps.unwrap_or(v_nominal / rho),
            ..AgentParams::uniform_cruise(v_nominal, rho, v_f, k_theta)
        };
        let mut params = vec![base; f.agents.len()];
        for o in &f.agent_overrides {
            let Some(i) = f.agents.iter().position(|&a| a == o.id) else {
                errs.push(format!("formation.agent: unknown agent id {}", o.id));
                continue;
            };
            let p = &mut params[i];
            p.rho = o.orbit_radius_m.unwrap_or(p.rho);
            p.v_nominal = o.nominal_speed_mps.unwrap_or(p.v_nominal);
            p.v_f = o.v_f_mps.unwrap_or(p.v_f);
            p.k_theta = o.k_theta.unwrap_or(p.k_theta);
            p.omega = o.omega_radps.or(f.omega_radps).unwrap_or(p.v_nominal / p.rho);
        }

        let initial_phases = match &f.initial_phases_rad {
            Some(q) => InitialPhases::Explicit(q.clone()),
            None => {
                let layout = match d.or(f.initial_layout.as_deref(), "formation.initial_layout", "pattern") {
                    "pattern" => InitialLayout::Pattern,
                    "equispaced" => InitialLayout::Equispaced,
                    other => {
                        errs.push(format!(
                            "formation.initial_layout must be \"pattern\" or \"equispaced\", got \"{other}\""
                        ));
                        InitialLayout::Pattern
                    }
                };
                let max_jitter = d.or(f.initial_jitter_rad, "formation.initial_jitter_rad", DEFAULT_JITTER);
                InitialPhases::Perturbed { layout, max_jitter }
            }
        };

        let m = &self.model;
        let model = match d.or(m.kind.as_deref(), "model.kind", "phase") {
            "phase" => ModelKind::Phase,
            "vehicle" => {
                let g = GuidanceParams::default();
                let v = VehicleModel::default();
                ModelKind::Vehicle(VehicleModel {
                    initial_radius: d.or(m.initial_radius_m, "model.initial_radius_m", v.initial_radius),
                    guidance: GuidanceParams {
                        k_r: d.or(m.k_r, "model.k_r", g.k_r),
                        course_gain: d.or(m.course_gain, "model.course_gain", g.course_gain),
                        heading_tc: d.or(m.heading_tc_s, "model.heading_tc_s", g.heading_tc),
                        speed_tc: d.or(m.speed_tc_s, "model.speed_tc_s", g.speed_tc),
                        v_min: d.or(m.v_min_mps, "model.v_min_mps", g.v_min),
                        v_max: d.or(m.v_max_mps, "model.v_max_mps", g.v_max),
                        direction: d.or(m.direction, "model.direction", g.direction),
                    },
                })
            }
            other => {
                errs.push(format!("model.kind must be \"phase\" or \"vehicle\", got \"{other}\""));
                ModelKind::Phase
            }
        };
        if matches!(model, ModelKind::Phase) {
            let vehicle_keys = [
                m.initial_radius_m.is_some(),
                m.k_r.is_some(),
                m.course_gain.is_some(),
                m.heading_tc_s.is_some(),
                m.speed_tc_s.is_some(),
                m.v_min_mps.is_some(),
                m.v_max_mps.is_some(),
                m.direction.is_some(),
            ];
            if vehicle_keys.iter().any(|&k| k) {
                errs.push("model: vehicle keys given but model.kind is \"phase\"".into());
            }
        }

        let events: Vec<LossEvent> = self
            .events
            .iter()
            .map(|e| LossEvent {
                time: e.t_s,
                lost_agent: e.agent,
            })
            .collect();

        let a = &self.adaptation;
        let enabled = d.or(a.enabled, "adaptation.enabled", false);
        let sigmoid = match d
            .or(a.sigmoid.as_deref(), "adaptation.sigmoid", "arctan")
            .parse::<Sigmoid>()
        {
            Ok(s) => s,
            Err(e) => {
                errs.push(format!("adaptation.sigmoid: {e}"));
                Sigmoid::Arctan
            }
        };
        let first_loss = events.iter().map(|e| e.time).fold(f64::INFINITY, f64::min);
        let default_start = if first_loss.is_finite() { first_loss } else { 0.0 };
        let adaptation = AdaptationParams {
            tau_p: d.or(a.tau_p, "adaptation.tau_p", DEFAULT_TAU_P),
            a_s: d.or(a.a_s, "adaptation.a_s", DEFAULT_A_S),
            sigmoid,
            enabled,
            start_time: d.or(a.start_time_s, "adaptation.start_time_s", default_start),
        };

        let scenario = Scenario {
            name,
            model,
            agents: f.agents.clone(),
            params,
            desired_shifts: f.desired_shifts_rad.clone(),
            adaptation,
            events,
            duration,
            dt,
            seed,
            record_period,
            initial_phases,
            notices,
        };
        if let Err(Error::InvalidScenario(more)) = scenario.validate() {
            errs.extend(more);
        }
        if errs.is_empty() {
            Ok(scenario)
        } else {
            Err(Error::InvalidScenario(errs))
        }
    }

    /// Fully explicit file for a scenario: every effective parameter is
    /// written, so loading it again needs no defaults.
    pub fn from_scenario(s: &Scenario) -> Self {
        let base = s.params.first().copied().unwrap_or_default();
        let derived_omega = |p: &AgentParams| p.v_nominal / p.rho;
        let overrides = s
            .agents
            .iter()
            .zip(&s.params)
            .filter(|(_, p)| **p != base)
            .map(|(&id, p)| {
                let diff = |a: f64, b: f64| (a != b).then_some(a);
                AgentOverride {
                    id,
                    orbit_radius_m: diff(p.rho, base.rho),
                    nominal_speed_mps: diff(p.v_nominal, base.v_nominal),
                    omega_radps: (p.omega != derived_omega(p)).then_some(p.omega),
                    v_f_mps: diff(p.v_f, base.v_f),
                    k_theta: diff(p.k_theta, base.k_theta),
                }
            })
            .collect();
        let (initial_layout, initial_jitter_rad, initial_phases_rad) = match &s.initial_phases {
            InitialPhases::Perturbed { layout, max_jitter } => {
                let l = match layout {
                    InitialLayout::Pattern => "pattern",
                    InitialLayout::Equispaced => "equispaced",
                };
                (Some(l.to_string()), Some(*max_jitter), None)
            }
            InitialPhases::Explicit(q) => (None, None, Some(q.clone())),
        };
        let model = match &s.model {
            ModelKind::Phase => ModelSection {
                kind: Some("phase".into()),
                ..Default::default()
            },
            ModelKind::Vehicle(v) => ModelSection {
                kind: Some("vehicle".into()),
                initial_radius_m: Some(v.initial_radius),
                k_r: Some(v.guidance.k_r),
                course_gain: Some(v.guidance.course_gain),
                heading_tc_s: Some(v.guidance.heading_tc),
                speed_tc_s: Some(v.guidance.speed_tc),
                v_min_mps: Some(v.guidance.v_min),
                v_max_mps: Some(v.guidance.v_max),
                direction: Some(v.guidance.direction),
            },
        };
        ScenarioFile {
            scenario: ScenarioSection {
                name: Some(s.name.clone()),
                duration_s: Some(s.duration),
                dt_s: Some(s.dt),
                seed: Some(s.seed),
                record_period_s: Some(s.record_period),
            },
            formation: FormationSection {
                agents: s.agents.clone(),
                desired_shifts_rad: s.desired_shifts.clone(),
                orbit_radius_m: Some(base.rho),
                nominal_speed_mps: Some(base.v_nominal),
                omega_radps: (base.omega != derived_omega(&base)).then_some(base.omega),
                v_f_mps: Some(base.v_f),
                k_theta: Some(base.k_theta),
                initial_layout,
                initial_jitter_rad,
                initial_phases_rad,
                agent_overrides: overrides,
            },
            model,
            adaptation: AdaptationSection {
                enabled: Some(s.adaptation.enabled),
                tau_p: Some(s.adaptation.tau_p),
                a_s: Some(s.adaptation.a_s),
                sigmoid: Some(s.adaptation.sigmoid.to_string()),
                start_time_s: Some(s.adaptation.start_time),
            },
            events: s
                .events
                .iter()
                .map(|e| EventEntry {
                    t_s: e.time,
                    kind: EventKind::LoseAgent,
                    agent: e.lost_agent,
                })
                .collect(),
        }
    }
}

/// Parses and validates scenario text.
pub fn scenario_from_str(text: &str) -> Result<Scenario> {
    parse_scenario_file(text)?.to_scenario()
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
    scenario_from_str(&text)
}

/// TOML text with every effective parameter of `s`.
pub fn scenario_to_string(s: &Scenario) -> String {
    toml::to_string(&ScenarioFile::from_scenario(s)).expect("scenario file serializes")
}

pub const BUNDLED: [&str; 5] = [
    "canonical_4uav",
    "canonical_loss3_noadapt",
    "canonical_loss3_adapt",
    "endloss_benign",
    "vehicle_4uav",
];

/// Source text of a bundled scenario.
pub fn bundled_scenario_text(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".scenario").unwrap_or(name);
    Some(match name {
        "canonical_4uav" => include_str!("../../../scenarios/canonical_4uav.scenario"),
        "canonical_loss3_noadapt" => include_str!("../../../scenarios/canonical_loss3_noadapt.scenario"),
        "canonical_loss3_adapt" => include_str!("../../../scenarios/canonical_loss3_adapt.scenario"),
        "endloss_benign" => include_str!("../../../scenarios/endloss_benign.scenario"),
        "vehicle_4uav" => include_str!("../../../scenarios/vehicle_4uav.scenario"),
        _ => return None,
    })
}

pub fn bundled_scenario(name: &str) -> Result<Scenario> {
    let text = bundled_scenario_text(name)
        .ok_or_else(|| Error::InvalidParameter(format!("no bundled scenario named `{name}`")))?;
    scenario_from_str(text)
}
