//! Re-checks a recorded trace from its CSV columns alone.
//!
//! Tolerances account for the 9-significant-digit serialization: every
//! recorded number may be off by [`QUANTUM`] relative, and that error is
//! propagated through each re-derivation.

use crate::angle::wrap;
use crate::dynamics::AgentParams;
use crate::error::{Error, Result};
use crate::topology::AgentId;
use crate::trace_csv::{desired_col, phase_col, rate_col, shift_col, speed_col, TraceTable, QUANTUM};

/// Allowed per-sample increase of E or V.
pub const MONOTONE_TOL: f64 = 1e-9;
/// Relative agreement required between recorded and re-derived E/V.
pub const REDERIVE_REL_TOL: f64 = 1e-9;
const MAX_LISTED: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct AuditCheck {
    pub name: &'static str,
    /// Number of samples or intervals examined.
    pub checked: usize,
    pub violations: Vec<String>,
    pub violation_count: usize,
    /// Set when the check does not apply to this trace.
    pub skipped: Option<String>,
}

impl AuditCheck {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checked: 0,
            violations: Vec::new(),
            violation_count: 0,
            skipped: None,
        }
    }

    fn fail(&mut self, msg: String) {
        self.violation_count += 1;
        if self.violations.len() < MAX_LISTED {
            self.violations.push(msg);
        }
    }

    fn skip(mut self, why: &str) -> Self {
        self.skipped = Some(why.to_string());
        self
    }

    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(AuditCheck::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditCheck> {
        self.checks.iter().filter(|c| !c.passed())
    }

    pub fn check(&self, name: &str) -> Option<&AuditCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const CHECK_TIME: &str = "time grid";
pub const CHECK_SHIFT: &str = "shift identity p = Lq";
pub const CHECK_RATE: &str = "rate identity dp/dt = L dq/dt";
pub const CHECK_E: &str = "E re-derivation";
pub const CHECK_V: &str = "V re-derivation";
pub const CHECK_LYAP_E: &str = "Lyapunov audit: E non-increasing under adaptation";
pub const CHECK_LYAP_V: &str = "Lyapunov audit: V non-increasing without adaptation";
pub const CHECK_BOUNDS: &str = "bounds";

struct EdgeCols {
    tail: usize,
    head: usize,
    shift: usize,
    copy_tail: usize,
    copy_head: usize,
}

struct Layout {
    agents: Vec<AgentId>,
    params: Vec<AgentParams>,
    phase: Vec<usize>,
    rate: Vec<usize>,
    speed: Vec<usize>,
    edges: Vec<EdgeCols>,
    e: usize,
    v: usize,
}

fn need(table: &TraceTable, name: &str) -> Result<usize> {
    table
        .column(name)
        .ok_or_else(|| Error::InvalidParameter(format!("trace lacks column `{name}`")))
}

fn layout(table: &TraceTable) -> Result<Layout> {
    let agents = table.agents()?;
    let params = agents
        .iter()
        .map(|&id| table.agent_params(id))
        .collect::<Result<Vec<_>>>()?;
    let col = |f: fn(AgentId) -> String| agents.iter().map(|&id| need(table, &f(id))).collect::<Result<Vec<_>>>();
    let (phase, rate, speed) = (col(phase_col)?, col(rate_col)?, col(speed_col)?);
    let index = |id: AgentId| {
        agents
            .iter()
            .position(|&a| a == id)
            .ok_or_else(|| Error::InvalidParameter(format!("edge refers to unknown agent {id}")))
    };
    let edges = table
        .edges()
        .into_iter()
        .map(|(t, h)| {
            Ok(EdgeCols {
                tail: index(t)?,
                head: index(h)?,
                shift: need(table, &shift_col(t, h))?,
                copy_tail: need(table, &desired_col(t, h, t))?,
                copy_head: need(table, &desired_col(t, h, h))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Layout {
        agents,
        params,
        phase,
        rate,
        speed,
        edges,
        e: need(table, "E")?,
        v: need(table, "V")?,
    })
}

fn q(v: f64) -> f64 {
    QUANTUM * v.abs()
}

/// Which agents and edges are active on a row; rows with equal activity
/// belong to the same topology.
fn activity(row: &[Option<f64>], lay: &Layout) -> Vec<bool> {
    lay.phase
        .iter()
        .map(|&c| row[c].is_some())
        .chain(lay.edges.iter().map(|e| row[e.shift].is_some()))
        .collect()
}

/// Runs every check on a parsed trace.
pub fn audit_table(table: &TraceTable) -> Result<AuditReport> {
    let lay = layout(table)?;
    let times = table.times();
    let rows = &table.rows;
    let model = table.header_value("model").unwrap_or("phase");
    let adapt_on = table.header_value("adaptation.enabled") == Some("true");
    let adapt_start = table.header_f64("adaptation.start_time_s").unwrap_or(0.0);
    let events = table.event_times();
    let time_eps = |t: f64| 1e-9 * t.abs().max(1.0) + q(t);

    let mut time = AuditCheck::new(CHECK_TIME);
    if times.len() >= 2 {
        let period = times[1] - times[0];
        for (i, w) in times.windows(2).enumerate() {
            time.checked += 1;
            let d = w[1] - w[0];
            if !(d > 0.0) {
                time.fail(format!("row {}: time {} does not increase", i + 2, w[1]));
            } else if (d - period).abs() > 2.0 * (time_eps(w[0]) + time_eps(w[1])) {
                time.fail(format!("row {}: step {d} differs from period {period}", i + 2));
            }
        }
    }

    let mut shift = AuditCheck::new(CHECK_SHIFT);
    let mut e_check = AuditCheck::new(CHECK_E);
    let mut v_check = AuditCheck::new(CHECK_V);
    let mut bounds = AuditCheck::new(CHECK_BOUNDS);
    let vehicle = model == "vehicle";
    let speed_limits = if vehicle {
        Some((
            table.header_f64("vehicle.v_min_mps")?,
            table.header_f64("vehicle.v_max_mps")?,
        ))
    } else {
        None
    };

    for (r, row) in rows.iter().enumerate() {
        let t = times[r];
        let mut residual = vec![0.0; lay.agents.len()];
        let mut residual_err = vec![0.0; lay.agents.len()];
        let mut e_sum = 0.0;
        let mut e_err = 0.0;
        for ec in &lay.edges {
            let (Some(p), Some(ct), Some(ch)) = (row[ec.shift], row[ec.copy_tail], row[ec.copy_head]) else {
                if row[ec.shift].is_some() || row[ec.copy_tail].is_some() || row[ec.copy_head].is_some() {
                    bounds.fail(format!("t = {t}: edge columns partially empty"));
                }
                continue;
            };
            shift.checked += 1;
            match (row[lay.phase[ec.tail]], row[lay.phase[ec.head]]) {
                (Some(qt), Some(qh)) => {
                    let tol = 2.0 * (q(qt) + q(qh) + q(p)) + 1e-12;
                    if (p - (qh - qt)).abs() > tol {
                        shift.fail(format!(
                            "t = {t}: shift {} differs from phase difference {}",
                            p,
                            qh - qt
                        ));
                    }
                }
                _ => shift.fail(format!("t = {t}: edge present but an endpoint phase is empty")),
            }
            for (copy, sign, holder) in [(ct, -1.0, ec.tail), (ch, 1.0, ec.head)] {
                let u = wrap(p - copy);
                let eps = q(p) + q(copy);
                e_sum += 0.25 * u * u;
                e_err += 0.5 * u.abs() * eps + 0.25 * eps * eps;
                // interaction -L_ki · u: tail sees +u, head sees -u
                residual[holder] += -sign * u;
                residual_err[holder] += eps;
            }
        }
        if let Some(e_rec) = row[lay.e] {
            e_check.checked += 1;
            let tol = REDERIVE_REL_TOL * e_rec.abs() + 2.0 * (e_err + q(e_rec)) + 1e-300;
            if (e_sum - e_rec).abs() > tol {
                e_check.fail(format!("t = {t}: recorded E {e_rec} vs re-derived {e_sum}"));
            }
        }
        let mut v_sum = 0.0;
        let mut v_err = 0.0;
        for (i, a) in lay.params.iter().enumerate() {
            if row[lay.phase[i]].is_none() {
                continue;
            }
            let f = a.coupling();
            let u = residual[i];
            let eps = residual_err[i];
            v_sum += f.antiderivative(u);
            v_err += f.eval(u).abs() * eps + 0.5 * f.slope(0.0) * eps * eps;
        }
        if let Some(v_rec) = row[lay.v] {
            v_check.checked += 1;
            let tol = REDERIVE_REL_TOL * v_rec.abs() + 2.0 * (v_err + q(v_rec)) + 1e-300;
            if (v_sum - v_rec).abs() > tol {
                v_check.fail(format!("t = {t}: recorded V {v_rec} vs re-derived {v_sum}"));
            }
        }

        for (i, a) in lay.params.iter().enumerate() {
            let (phase, rate, speed) = (row[lay.phase[i]], row[lay.rate[i]], row[lay.speed[i]]);
            if phase.is_none() {
                if rate.is_some() || speed.is_some() {
                    bounds.fail(format!("t = {t}: agent {} has a rate without a phase", lay.agents[i]));
                }
                continue;
            }
            bounds.checked += 1;
            let (Some(rate), Some(speed)) = (rate, speed) else {
                bounds.fail(format!("t = {t}: agent {} has empty rate or speed", lay.agents[i]));
                continue;
            };
            let (lo, hi) = speed_limits.unwrap_or((a.v_nominal - a.v_f, a.v_nominal + a.v_f));
            let slack = 1e-9 * hi.abs() + q(speed);
            if speed < lo - slack || speed > hi + slack {
                bounds.fail(format!(
                    "t = {t}: agent {} speed {speed} outside [{lo}, {hi}]",
                    lay.agents[i]
                ));
            }
            if !vehicle && (rate - a.omega).abs() > a.v_f / a.rho * (1.0 + 1e-9) + q(rate) {
                bounds.fail(format!(
                    "t = {t}: agent {} rate {rate} exceeds ω ± v_f/ρ",
                    lay.agents[i]
                ));
            }
        }
    }

    // interval checks only compare rows with identical topology
    let mut rate = AuditCheck::new(CHECK_RATE);
    let mut lyap_e = AuditCheck::new(CHECK_LYAP_E);
    let mut lyap_v = AuditCheck::new(CHECK_LYAP_V);
    let uniform_omega = lay.params.iter().all(|p| p.omega == lay.params[0].omega);
    for r in 1..rows.len() {
        let (a, b) = (&rows[r - 1], &rows[r]);
        let (ta, tb) = (times[r - 1], times[r]);
        if activity(a, &lay) != activity(b, &lay) || events.iter().any(|&te| te > ta && te <= tb) {
            continue;
        }
        let h = tb - ta;
        for ec in &lay.edges {
            let (Some(pa), Some(pb)) = (a[ec.shift], b[ec.shift]) else {
                continue;
            };
            let dp = |row: &[Option<f64>]| -> Option<f64> { Some(row[lay.rate[ec.head]]? - row[lay.rate[ec.tail]]?) };
            let (Some(da), Some(db)) = (dp(a), dp(b)) else {
                rate.fail(format!("t = {ta}: rate columns empty on an active edge"));
                continue;
            };
            rate.checked += 1;
            // trapezoid error ≈ h³/12 · p''', estimated from neighbouring rates
            let curvature = |i: usize| -> f64 {
                if i == 0 || i + 1 >= rows.len() {
                    return 0.0;
                }
                match (dp(&rows[i - 1]), dp(&rows[i]), dp(&rows[i + 1])) {
                    (Some(x), Some(y), Some(z)) => (x - 2.0 * y + z).abs(),
                    _ => 0.0,
                }
            };
            let trap = 0.5 * h * (da + db);
            let tol = 1e-9
                + h * curvature(r - 1).max(curvature(r)) / 6.0
                + 2.0 * (q(pa) + q(pb) + h * (q(da) + q(db)))
                + 2.0 * h * QUANTUM * (da.abs() + db.abs());
            if ((pb - pa) - trap).abs() > tol {
                rate.fail(format!(
                    "t = {ta}..{tb}: shift change {} vs integrated rate difference {trap}",
                    pb - pa
                ));
            }
        }
        let (Some(ea), Some(eb)) = (a[lay.e], b[lay.e]) else {
            continue;
        };
        if adapt_on && ta >= adapt_start {
            lyap_e.checked += 1;
            if eb - ea > MONOTONE_TOL {
                lyap_e.fail(format!("t = {ta}..{tb}: E increased from {ea} to {eb}"));
            }
        }
        let (Some(va), Some(vb)) = (a[lay.v], b[lay.v]) else {
            continue;
        };
        if !vehicle && uniform_omega && (!adapt_on || tb <= adapt_start) {
            lyap_v.checked += 1;
            if vb - va > MONOTONE_TOL {
                lyap_v.fail(format!("t = {ta}..{tb}: V increased from {va} to {vb}"));
            }
        }
    }
    if !adapt_on {
        lyap_e = lyap_e.skip("adaptation disabled");
    }
    if vehicle {
        lyap_v = lyap_v.skip("vehicle model");
    } else if !uniform_omega {
        lyap_v = lyap_v.skip("agents have different nominal rates");
    }

    Ok(AuditReport {
        checks: vec![time, shift, rate, e_check, v_check, lyap_e, lyap_v, bounds],
    })
}

/// Parses and audits CSV text.
pub fn audit_csv(text: &str) -> Result<AuditReport> {
    audit_table(&crate::trace_csv::read_trace_csv(text)?)
}
