//! Planar kinematic unicycle with first-order turn-rate and speed loops,
//! plus a vector-field loiter law that holds a circular orbit.
//!
//! The coordination layer only needs each vehicle's orbit phase and a speed
//! command; this module turns one into the other through an actual
//! trajectory.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::angle::{unwrap_near, wrap};
use crate::dynamics::{coupling_fplus, AgentParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Course angle (rad).
    pub heading: f64,
    /// Achieved turn rate (rad/s), lags the command.
    pub turn_rate: f64,
    /// Airspeed (m/s).
    pub speed: f64,
}

impl VehicleState {
    pub const DIM: usize = 5;

    pub fn to_array(&self) -> [f64; 5] {
        [self.x, self.y, self.heading, self.turn_rate, self.speed]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            x: s[0],
            y: s[1],
            heading: s[2],
            turn_rate: s[3],
            speed: s[4],
        }
    }

    /// On a circle of `radius` at `phase`, flying tangentially.
    pub fn on_orbit(radius: f64, phase: f64, speed: f64, direction: OrbitDirection) -> Self {
        let az = direction.sign() * phase;
        Self {
            x: radius * az.cos(),
            y: radius * az.sin(),
            heading: az + direction.sign() * FRAC_PI_2,
            turn_rate: direction.sign() * speed / radius,
            speed,
        }
    }

    pub fn radius(&self, target: (f64, f64)) -> f64 {
        (self.x - target.0).hypot(self.y - target.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrbitDirection {
    Ccw,
    Cw,
}

impl OrbitDirection {
    pub fn sign(self) -> f64 {
        match self {
            OrbitDirection::Ccw => 1.0,
            OrbitDirection::Cw => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceParams {
    /// Radius-convergence gain of the vector field.
    pub k_r: f64,
    /// Course-error feedback gain (1/s).
    pub course_gain: f64,
    /// Turn-rate loop time constant (s).
    pub heading_tc: f64,
    /// Speed loop time constant (s).
    pub speed_tc: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub direction: OrbitDirection,
}

impl Default for GuidanceParams {
    fn default() -> Self {
        Self {
            k_r: 2.0,
            course_gain: 1.0,
            heading_tc: 0.3,
            speed_tc: 0.3,
            v_min: 6.0,
            v_max: 20.0,
            direction: OrbitDirection::Ccw,
        }
    }
}

impl GuidanceParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            (self.k_r, "k_r"),
            (self.course_gain, "course_gain"),
            (self.heading_tc, "heading_tc"),
            (self.speed_tc, "speed_tc"),
            (self.v_min, "v_min"),
        ];
        for (v, name) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.v_max > self.v_min) {
            return Err(Error::InvalidParameter(format!(
                "v_max ({}) must exceed v_min ({})",
                self.v_max, self.v_min
            )));
        }
        Ok(())
    }

    pub fn clamp_speed(&self, v: f64) -> f64 {
        v.clamp(self.v_min, self.v_max)
    }
}

/// Orbit phase of the vehicle about `target`, measured from the +x ray in
/// the direction of travel. With `previous` the result is unwrapped onto the
/// branch nearest to it.
pub fn phase_of_position(
    state: &VehicleState,
    target: (f64, f64),
    direction: OrbitDirection,
    previous: Option<f64>,
) -> Result<f64> {
    let (dx, dy) = (state.x - target.0, state.y - target.1);
    if dx.hypot(dy) <= f64::EPSILON {
        return Err(Error::AtTarget);
    }
    let raw = direction.sign() * dy.atan2(dx);
    Ok(match previous {
        Some(prev) => unwrap_near(raw, prev),
        None => raw,
    })
}

/// Rate of change of the orbit phase (rad/s).
pub fn phase_rate(state: &VehicleState, target: (f64, f64), direction: OrbitDirection) -> f64 {
    let (dx, dy) = (state.x - target.0, state.y - target.1);
    let (vx, vy) = (state.speed * state.heading.cos(), state.speed * state.heading.sin());
    direction.sign() * (dx * vy - dy * vx) / (dx * dx + dy * dy)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceCommand {
    pub heading_rate: f64,
    pub speed: f64,
}

/// Vector-field loiter: the desired course is the orbit tangent bent toward
/// the circle by `arctan(k_r (r - ρ)/ρ)`; the turn-rate command is the
/// circular feed-forward `v/ρ` plus feedback on the wrapped course error.
pub fn orbit_guidance(
    state: &VehicleState,
    target: (f64, f64),
    rho_desired: f64,
    v_command: f64,
    params: &GuidanceParams,
) -> GuidanceCommand {
    let s = params.direction.sign();
    let (dx, dy) = (state.x - target.0, state.y - target.1);
    let r = dx.hypot(dy);
    let azimuth = dy.atan2(dx);
    let correction = (params.k_r * (r - rho_desired) / rho_desired).atan();
    let course = azimuth + s * (FRAC_PI_2 + correction);
    let error = wrap(course - state.heading);
    let speed = params.clamp_speed(v_command);
    GuidanceCommand {
        heading_rate: s * state.speed / rho_desired + params.course_gain * error,
        speed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleRates {
    pub dx: f64,
    pub dy: f64,
    pub dheading: f64,
    pub dturn_rate: f64,
    pub dspeed: f64,
}

impl VehicleRates {
    pub fn to_array(&self) -> [f64; 5] {
        [self.dx, self.dy, self.dheading, self.dturn_rate, self.dspeed]
    }
}

pub fn vehicle_rates(state: &VehicleState, cmd: &GuidanceCommand, params: &GuidanceParams) -> VehicleRates {
    let v = params.clamp_speed(state.speed);
    let target = params.clamp_speed(cmd.speed);
    VehicleRates {
        dx: v * state.heading.cos(),
        dy: v * state.heading.sin(),
        dheading: state.turn_rate,
        dturn_rate: (cmd.heading_rate - state.turn_rate) / params.heading_tc,
        dspeed: (target - state.speed) / params.speed_tc,
    }
}

/// `v_nominal + ρ · f⁺(residual)`, bounded by `v_nominal ± v_f`.
pub fn speed_command_from_coupling(agent_coupling: f64, params: &AgentParams) -> f64 {
    params.v_nominal + params.rho * agent_coupling
}

/// Speed command straight from a coupling argument.
pub fn speed_command_from_residual(residual: f64, params: &AgentParams) -> f64 {
    speed_command_from_coupling(coupling_fplus(residual, params), params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const ORIGIN: (f64, f64) = (0.0, 0.0);

    fn at(x: f64, y: f64) -> VehicleState {
        VehicleState {
            x,
            y,
            heading: 0.0,
            turn_rate: 0.0,
            speed: 12.0,
        }
    }

    #[test]
    fn phase_convention() {
        let ccw = OrbitDirection::Ccw;
        assert_eq!(phase_of_position(&at(100.0, 0.0), ORIGIN, ccw, None).unwrap(), 0.0);
        let p = phase_of_position(&at(0.0, 100.0), ORIGIN, ccw, None).unwrap();
        assert!((p - PI / 2.0).abs() < 1e-15);
        assert_eq!(
            phase_of_position(&at(0.0, 0.0), ORIGIN, ccw, None),
            Err(Error::AtTarget)
        );
        let unwrapped = phase_of_position(&at(100.0, -1.0), ORIGIN, ccw, Some(2.0 * PI)).unwrap();
        assert!((unwrapped - (2.0 * PI - 0.01)).abs() < 1e-4);
    }

    #[test]
    fn on_orbit_guidance_is_circular() {
        let g = GuidanceParams::default();
        let s = VehicleState::on_orbit(100.0, 0.7, 12.0, OrbitDirection::Ccw);
        let cmd = orbit_guidance(&s, ORIGIN, 100.0, 12.0, &g);
        assert!((cmd.heading_rate - 0.12).abs() < 1e-12);
        assert_eq!(cmd.speed, 12.0);
        assert!((phase_rate(&s, ORIGIN, OrbitDirection::Ccw) - 0.12).abs() < 1e-12);
        let r = vehicle_rates(&s, &cmd, &g);
        assert!(r.dspeed.abs() < 1e-15);
        assert!(r.dturn_rate.abs() < 1e-12);
        assert!((r.dheading - 0.12).abs() < 1e-12);
    }

    #[test]
    fn far_vehicle_turns_inward() {
        let g = GuidanceParams::default();
        // at (2ρ, 0) flying tangentially (+y): desired course bends toward -x
        let mut s = VehicleState::on_orbit(200.0, 0.0, 12.0, OrbitDirection::Ccw);
        s.turn_rate = 0.0;
        let cmd = orbit_guidance(&s, ORIGIN, 100.0, 12.0, &g);
        assert!(cmd.heading_rate > 12.0 / 100.0);
        let inside = VehicleState::on_orbit(50.0, 0.0, 12.0, OrbitDirection::Ccw);
        let cmd = orbit_guidance(&inside, ORIGIN, 100.0, 12.0, &g);
        assert!(cmd.heading_rate < 12.0 / 100.0);
    }

    #[test]
    fn straight_flight() {
        let g = GuidanceParams::default();
        let s = VehicleState {
            heading: 0.3,
            ..at(5.0, 5.0)
        };
        let r = vehicle_rates(
            &s,
            &GuidanceCommand {
                heading_rate: 0.0,
                speed: 12.0,
            },
            &g,
        );
        assert!((r.dx - 12.0 * 0.3f64.cos()).abs() < 1e-14);
        assert!((r.dy - 12.0 * 0.3f64.sin()).abs() < 1e-14);
        assert_eq!(r.dheading, 0.0);
    }

    #[test]
    fn speed_command_bounds() {
        let a = AgentParams::default();
        assert_eq!(speed_command_from_residual(0.0, &a), 12.0);
        let hi = speed_command_from_residual(1e12, &a);
        assert!(hi <= 15.0 && (hi - 15.0).abs() < 1e-9);
        let lo = speed_command_from_residual(-1e12, &a);
        assert!(lo >= 9.0 && (lo - 9.0).abs() < 1e-9);
    }

    #[test]
    fn guidance_validation() {
        assert!(GuidanceParams::default().validate().is_ok());
        let bad = GuidanceParams {
            v_max: 5.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
