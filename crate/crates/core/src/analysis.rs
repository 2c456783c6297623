//! Summaries and settling measures of simulated traces.

use crate::sim::{Sample, Trace};
use crate::topology::AgentId;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub final_time: f64,
    /// Largest wrapped `|shift - copy|` over all copies at the final sample.
    pub max_shift_error: f64,
    /// Largest `|tail copy - head copy|` at the final sample.
    pub max_copy_mismatch: f64,
    pub speeds: Vec<(AgentId, f64)>,
    pub e: f64,
    pub v: f64,
}

impl RunSummary {
    pub fn speed_spread(&self) -> f64 {
        let (lo, hi) = self
            .speeds
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, v)| {
                (lo.min(v), hi.max(v))
            });
        hi - lo
    }

    pub fn max_speed_deviation(&self, nominal: f64) -> f64 {
        self.speeds.iter().map(|(_, v)| (v - nominal).abs()).fold(0.0, f64::max)
    }
}

impl std::fmt::Display for RunSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "scenario: {}", self.name)?;
        writeln!(f, "final time (s): {}", self.final_time)?;
        writeln!(f, "max |shift error| (rad): {:.6e}", self.max_shift_error)?;
        writeln!(f, "max copy mismatch (rad): {:.6e}", self.max_copy_mismatch)?;
        for (id, v) in &self.speeds {
            writeln!(f, "speed agent {id} (m/s): {v:.6}")?;
        }
        writeln!(f, "E: {:.6e}", self.e)?;
        write!(f, "V: {:.6e}", self.v)
    }
}

pub fn max_copy_mismatch(sample: &Sample) -> f64 {
    sample.active_edges().map(|e| e.copies.mismatch()).fold(0.0, f64::max)
}

pub fn summarize(trace: &Trace) -> RunSummary {
    let last = trace.final_sample();
    RunSummary {
        name: trace.scenario.name.clone(),
        final_time: last.time,
        max_shift_error: last.max_abs_shift_error(),
        max_copy_mismatch: max_copy_mismatch(last),
        speeds: trace.speeds(last),
        e: last.e,
        v: last.v,
    }
}

/// First time `t ≥ from` after which `metric` stays within `fraction` of its
/// value at `from`. `None` if it never settles within the trace.
pub fn settling_time<F>(trace: &Trace, from: f64, fraction: f64, metric: F) -> Option<f64>
where
    F: Fn(&Sample) -> f64,
{
    let eps = 1e-9 * from.abs().max(1.0);
    let tail: Vec<&Sample> = trace.samples.iter().filter(|s| s.time >= from - eps).collect();
    let band = fraction * metric(tail.first()?);
    let last_outside = tail.iter().rposition(|s| metric(s) > band);
    match last_outside {
        None => Some(0.0),
        Some(i) if i + 1 < tail.len() => Some(tail[i + 1].time - tail[0].time),
        Some(_) => None,
    }
}

/// Time for the phase errors to enter and stay in a 5% band of their
/// starting value.
pub fn fast_settling_time(trace: &Trace) -> Option<f64> {
    settling_time(trace, 0.0, 0.05, Sample::max_abs_shift_error)
}

/// Time after adaptation starts for the copy mismatch to reach its 5% band.
pub fn adaptation_settling_time(trace: &Trace) -> Option<f64> {
    settling_time(trace, trace.scenario.adaptation.start_time, 0.05, max_copy_mismatch)
}
