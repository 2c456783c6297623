//! Trace CSV: a `#` comment block with every effective parameter, one header
//! row, then one row per sample. Numbers carry 9 significant digits; cells of
//! agents or edges that do not exist at a sample are empty.

use std::fmt::Write as _;

use crate::dynamics::AgentParams;
use crate::error::{Error, Result};
use crate::sim::{InitialLayout, InitialPhases, ModelKind, Scenario, Trace};
use crate::topology::AgentId;

pub const MAGIC: &str = "# flockadapt trace v1";

/// Relative half-spacing of 9-significant-digit numbers.
pub const QUANTUM: f64 = 5e-9;

pub fn phase_col(id: AgentId) -> String {
    format!("phase_{id}_rad")
}
pub fn rate_col(id: AgentId) -> String {
    format!("rate_{id}_radps")
}
pub fn speed_col(id: AgentId) -> String {
    format!("speed_{id}_mps")
}
pub fn x_col(id: AgentId) -> String {
    format!("x_{id}_rad")
}
pub fn shift_col(tail: AgentId, head: AgentId) -> String {
    format!("shift_{tail}-{head}_rad")
}
pub fn desired_col(tail: AgentId, head: AgentId, holder: AgentId) -> String {
    format!("desired_{tail}-{head}_{holder}_rad")
}

pub fn format_value(v: f64) -> String {
    format!("{v:.8e}")
}

/// The `key = value` lines of the comment block.
pub fn header_entries(s: &Scenario) -> Vec<(String, String)> {
    let mut h: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| h.push((k.to_string(), v));
    put("scenario", s.name.clone());
    put("model", s.model.name().into());
    put("duration_s", s.duration.to_string());
    put("dt_s", s.dt.to_string());
    put("seed", s.seed.to_string());
    put("record_period_s", s.record_period.to_string());
    put("integrator", "rk4".into());
    put("topology", "chain".into());
    put("agents", join(s.agents.iter()));
    put("desired_shifts_rad", join(s.desired_shifts.iter()));
    match &s.initial_phases {
        InitialPhases::Perturbed { layout, max_jitter } => {
            let layout = match layout {
                InitialLayout::Pattern => "pattern",
                InitialLayout::Equispaced => "equispaced",
            };
            put("initial_layout", layout.into());
            put("initial_jitter_rad", max_jitter.to_string());
        }
        InitialPhases::Explicit(q) => put("initial_phases_rad", join(q.iter())),
    }
    for (id, a) in s.agents.iter().zip(&s.params) {
        put(&format!("agent.{id}.orbit_radius_m"), a.rho.to_string());
        put(&format!("agent.{id}.nominal_speed_mps"), a.v_nominal.to_string());
        put(&format!("agent.{id}.omega_radps"), a.omega.to_string());
        put(&format!("agent.{id}.v_f_mps"), a.v_f.to_string());
        put(&format!("agent.{id}.k_theta"), a.k_theta.to_string());
    }
    if let ModelKind::Vehicle(v) = &s.model {
        let g = &v.guidance;
        put("vehicle.initial_radius_m", v.initial_radius.to_string());
        put("vehicle.k_r", g.k_r.to_string());
        put("vehicle.course_gain", g.course_gain.to_string());
        put("vehicle.heading_tc_s", g.heading_tc.to_string());
        put("vehicle.speed_tc_s", g.speed_tc.to_string());
        put("vehicle.v_min_mps", g.v_min.to_string());
        put("vehicle.v_max_mps", g.v_max.to_string());
        put("vehicle.direction", format!("{:?}", g.direction).to_lowercase());
    }
    let ad = &s.adaptation;
    put("adaptation.enabled", ad.enabled.to_string());
    put("adaptation.tau_p", ad.tau_p.to_string());
    put("adaptation.a_s", ad.a_s.to_string());
    put("adaptation.sigmoid", ad.sigmoid.to_string());
    put("adaptation.start_time_s", ad.start_time.to_string());
    let mut events = s.events.clone();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    for e in &events {
        put("event", format!("{} lose_agent {}", e.time, e.lost_agent));
    }
    for n in &s.notices {
        put("notice", n.clone());
    }
    h
}

fn join<T: ToString>(it: impl Iterator<Item = T>) -> String {
    it.map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn column_names(trace: &Trace) -> Vec<String> {
    let mut cols = vec!["time_s".to_string()];
    for &id in &trace.agent_ids {
        cols.extend([phase_col(id), rate_col(id), speed_col(id), x_col(id)]);
    }
    for &(t, h) in &trace.edge_columns {
        cols.extend([shift_col(t, h), desired_col(t, h, t), desired_col(t, h, h)]);
    }
    cols.extend(["E".to_string(), "V".to_string()]);
    cols
}

pub fn write_trace_csv<W: std::io::Write>(trace: &Trace, mut w: W) -> std::io::Result<()> {
    w.write_all(trace_to_csv_string(trace).as_bytes())
}

pub fn trace_to_csv_string(trace: &Trace) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    for (k, v) in header_entries(&trace.scenario) {
        let _ = writeln!(out, "# {k} = {v}");
    }
    out.push_str(&column_names(trace).join(","));
    out.push('\n');
    let fmt = |v: Option<f64>| v.map(format_value).unwrap_or_default();
    for s in &trace.samples {
        let mut row = vec![format_value(s.time)];
        for a in &s.agents {
            row.extend([
                fmt(a.map(|a| a.phase)),
                fmt(a.map(|a| a.rate)),
                fmt(a.map(|a| a.speed)),
                fmt(a.map(|a| a.x)),
            ]);
        }
        for e in &s.edges {
            row.extend([
                fmt(e.map(|e| e.shift)),
                fmt(e.map(|e| e.copies.tail)),
                fmt(e.map(|e| e.copies.head)),
            ]);
        }
        row.extend([format_value(s.e), format_value(s.v)]);
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// A parsed trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub header: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl TraceTable {
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn header_values<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.header
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn header_f64(&self, key: &str) -> Result<f64> {
        let v = self
            .header_value(key)
            .ok_or_else(|| Error::InvalidParameter(format!("trace header lacks `{key}`")))?;
        v.parse()
            .map_err(|_| Error::InvalidParameter(format!("trace header `{key}` is not a number: {v}")))
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0].unwrap_or(f64::NAN)).collect()
    }

    pub fn values(&self, col: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        self.rows.iter().map(move |r| r[col])
    }

    pub fn agents(&self) -> Result<Vec<AgentId>> {
        let raw = self
            .header_value("agents")
            .ok_or_else(|| Error::InvalidParameter("trace header lacks `agents`".into()))?;
        raw.split_whitespace()
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad agent id `{s}` in trace header")))
            })
            .collect()
    }

    /// Edge columns `(tail, head)` in file order.
    pub fn edges(&self) -> Vec<(AgentId, AgentId)> {
        self.columns
            .iter()
            .filter_map(|c| {
                let body = c.strip_prefix("shift_")?.strip_suffix("_rad")?;
                let (t, h) = body.split_once('-')?;
                Some((t.parse().ok()?, h.parse().ok()?))
            })
            .collect()
    }

    pub fn agent_params(&self, id: AgentId) -> Result<AgentParams> {
        let get = |k: &str| self.header_f64(&format!("agent.{id}.{k}"));
        Ok(AgentParams {
            omega: get("omega_radps")?,
            rho: get("orbit_radius_m")?,
            v_f: get("v_f_mps")?,
            k_theta: get("k_theta")?,
            v_nominal: get("nominal_speed_mps")?,
        })
    }

    /// Loss event times from the header.
    pub fn event_times(&self) -> Vec<f64> {
        self.header_values("event")
            .filter_map(|v| v.split_whitespace().next()?.parse().ok())
            .collect()
    }
}

pub fn read_trace_csv(text: &str) -> Result<TraceTable> {
    let bad = |line: usize, msg: String| Error::InvalidParameter(format!("trace line {line}: {msg}"));
    let mut header = Vec::new();
    let mut lines = text.lines().enumerate();
    let mut columns = None;
    for (i, line) in lines.by_ref() {
        if let Some(c) = line.strip_prefix('#') {
            if let Some((k, v)) = c.split_once('=') {
                header.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if cols.first().map(String::as_str) != Some("time_s") {
            return Err(bad(i + 1, "expected header row starting with time_s".into()));
        }
        columns = Some(cols);
        break;
    }
    let columns = columns.ok_or_else(|| Error::InvalidParameter("trace has no header row".into()))?;
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(bad(
                i + 1,
                format!("expected {} cells, found {}", columns.len(), cells.len()),
            ));
        }
        let row = cells
            .iter()
            .map(|c| {
                let c = c.trim();
                if c.is_empty() {
                    Ok(None)
                } else {
                    c.parse::<f64>()
                        .map(Some)
                        .map_err(|_| bad(i + 1, format!("not a number: `{c}`")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if row[0].is_none() {
            return Err(bad(i + 1, "missing time".into()));
        }
        rows.push(row);
    }
    Ok(TraceTable { header, columns, rows })
}
